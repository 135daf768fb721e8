#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace moecast {

enum class Split { Train, Val, Test };

struct NormStats {
    std::vector<double> mean;
    std::vector<double> std;
};

// Chronological split, either by fraction (test takes the remainder) or by
// explicit row counts when all three counts are set.
struct SplitSpec {
    double train_frac = 0.6;
    double val_frac = 0.2;
    std::optional<long> train_n;
    std::optional<long> val_n;
    std::optional<long> test_n;
};

struct SeriesDataset {
    std::string name;
    std::vector<std::string> labels; // first CSV column, one per row
    std::vector<double> values;      // [rows, v] row-major, raw scale
    int v = 0;
    long rows = 0;
    long train_end = 0; // [0, train_end) trains
    long val_end = 0;   // [train_end, val_end) validates
    long test_end = 0;  // [val_end, test_end) tests (= rows unless counts given)
    NormStats stats;    // computed on train rows only

    std::pair<long, long> split_range(Split s) const;
    double raw_at(long t, int var) const { return values[static_cast<std::size_t>(t) * v + var]; }
    double norm_at(long t, int var) const {
        return (raw_at(t, var) - stats.mean[static_cast<std::size_t>(var)]) /
               stats.std[static_cast<std::size_t>(var)];
    }
    double denorm(double z, int var) const {
        return z * stats.std[static_cast<std::size_t>(var)] + stats.mean[static_cast<std::size_t>(var)];
    }
};

// Header row, first column a label, remaining columns numeric. Throws
// DataError (with row/column position) on malformed input, too-small splits,
// or a constant train-split column.
SeriesDataset load_csv(const std::string& path, const SplitSpec& split);
// Same dialect without splitting or normalization (standalone analysis).
struct RawCsv {
    std::vector<double> values; // [rows, v]
    int v = 0;
    long rows = 0;
};
RawCsv load_csv_values(const std::string& path);
// Same splitting/validation for values already in memory.
SeriesDataset make_dataset(std::string name, std::vector<double> values, int v,
                           const SplitSpec& split);
void write_csv(const std::string& path, const std::vector<double>& values, int v);

// ---- synthetic regime streams ----
struct RegimeSegment {
    std::string kind; // "mean" | "trend" | "sine" | "ar1"
    long length = 0;
    double level = 0.0;
    double slope = 0.0;
    double amplitude = 1.0;
    double period = 24.0;
    double phase = 0.0;
    double coef = 0.8;
    double noise_std = 1.0;
    std::optional<std::uint64_t> seed; // unset: derived from script seed + index
};

struct RegimeScript {
    int variables = 1;
    std::uint64_t seed = 0;
    std::vector<RegimeSegment> segments;
};

struct GeneratedStream {
    std::vector<double> values; // [rows, v]
    int v = 0;
    long rows = 0;
    std::vector<long> shift_indices; // start index of every segment after the first
};

// Deterministic: the same script yields bit-identical values on every call.
GeneratedStream generate_stream(const RegimeScript& script);

// ---- windowing ----
struct ForecastWindow {
    long origin = 0;            // absolute index of the last input element
    std::vector<double> input;  // [lookback, v], z-scored with train stats
    std::vector<double> target; // [horizon, v], z-scored with train stats
};

// Stride-1 enumeration; a window lives entirely inside its split (input and
// target never straddle a split boundary).
std::vector<ForecastWindow> make_windows(const SeriesDataset& ds, int lookback, int horizon,
                                         Split split);
// Same enumeration over a bare [rows, v] matrix (already normalized), used
// for drift-data fine-tuning where no dataset object exists.
std::vector<ForecastWindow> make_windows_raw(const std::vector<double>& values, int v,
                                             int lookback, int horizon);

// floor((lookback - patch_len) / stride) + 1; validates patch_len <= lookback.
int patch_count(int lookback, int patch_len, int stride);

// Patch matrix [n_patches, patch_len] for one variable of a window input.
std::vector<double> extract_patches(const std::vector<double>& input, int lookback, int v, int var,
                                    int patch_len, int stride);

} // namespace moecast
