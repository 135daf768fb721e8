#include "moecast/data.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "moecast/error.hpp"
#include "moecast/rng.hpp"

namespace moecast {

std::pair<long, long> SeriesDataset::split_range(Split s) const {
    switch (s) {
        case Split::Train: return {0, train_end};
        case Split::Val: return {train_end, val_end};
        case Split::Test: return {val_end, test_end};
    }
    return {0, 0};
}

namespace {

void apply_split(SeriesDataset& ds, const SplitSpec& split) {
    const bool explicit_counts = split.train_n && split.val_n && split.test_n;
    if (explicit_counts) {
        const long total = *split.train_n + *split.val_n + *split.test_n;
        if (total > ds.rows) {
            throw DataError("split counts sum to " + std::to_string(total) + " but " + ds.name +
                            " has only " + std::to_string(ds.rows) + " rows");
        }
        ds.train_end = *split.train_n;
        ds.val_end = ds.train_end + *split.val_n;
        ds.test_end = ds.val_end + *split.test_n;
    } else {
        if (split.train_frac <= 0.0 || split.val_frac < 0.0 ||
            split.train_frac + split.val_frac >= 1.0) {
            throw DataError("split fractions (" + std::to_string(split.train_frac) + ", " +
                            std::to_string(split.val_frac) + ") must be positive and sum below 1");
        }
        ds.train_end = static_cast<long>(std::floor(static_cast<double>(ds.rows) * split.train_frac));
        ds.val_end = ds.train_end +
                     static_cast<long>(std::floor(static_cast<double>(ds.rows) * split.val_frac));
        ds.test_end = ds.rows;
    }
    if (ds.train_end < 2) {
        throw DataError("train split of " + ds.name + " has " + std::to_string(ds.train_end) +
                        " rows; need at least 2");
    }
}

void compute_stats(SeriesDataset& ds) {
    ds.stats.mean.assign(static_cast<std::size_t>(ds.v), 0.0);
    ds.stats.std.assign(static_cast<std::size_t>(ds.v), 0.0);
    const double n = static_cast<double>(ds.train_end);
    for (long t = 0; t < ds.train_end; ++t) {
        for (int c = 0; c < ds.v; ++c) ds.stats.mean[static_cast<std::size_t>(c)] += ds.raw_at(t, c);
    }
    for (int c = 0; c < ds.v; ++c) ds.stats.mean[static_cast<std::size_t>(c)] /= n;
    for (long t = 0; t < ds.train_end; ++t) {
        for (int c = 0; c < ds.v; ++c) {
            const double d = ds.raw_at(t, c) - ds.stats.mean[static_cast<std::size_t>(c)];
            ds.stats.std[static_cast<std::size_t>(c)] += d * d;
        }
    }
    for (int c = 0; c < ds.v; ++c) {
        auto& s = ds.stats.std[static_cast<std::size_t>(c)];
        s = std::sqrt(s / n);
        if (s == 0.0) {
            throw DataError("column " + std::to_string(c + 1) + " of " + ds.name +
                            " is constant over the train split");
        }
    }
}

} // namespace

SeriesDataset make_dataset(std::string name, std::vector<double> values, int v,
                           const SplitSpec& split) {
    if (v <= 0 || values.size() % static_cast<std::size_t>(v) != 0) {
        throw DataError("value matrix of " + name + " is not rows x " + std::to_string(v));
    }
    SeriesDataset ds;
    ds.name = std::move(name);
    ds.v = v;
    ds.rows = static_cast<long>(values.size()) / v;
    ds.values = std::move(values);
    ds.labels.reserve(static_cast<std::size_t>(ds.rows));
    for (long t = 0; t < ds.rows; ++t) ds.labels.push_back("t" + std::to_string(t));
    apply_split(ds, split);
    compute_stats(ds);
    return ds;
}

namespace {

struct ParsedCsv {
    std::vector<std::string> labels;
    std::vector<double> values;
    int v = 0;
};

ParsedCsv parse_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    ParsedCsv out;

    std::string line;
    if (!std::getline(in, line)) throw DataError(path + ": empty file");
    long colcount = -1;
    {
        std::stringstream hs(line);
        std::string cell;
        long c = 0;
        while (std::getline(hs, cell, ',')) ++c;
        if (c < 2) throw DataError(path + ": header needs a label column plus data columns");
        colcount = c;
    }
    out.v = static_cast<int>(colcount - 1);

    long row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::stringstream ls(line);
        std::string cell;
        long col = 0;
        while (std::getline(ls, cell, ',')) {
            ++col;
            if (col == 1) {
                out.labels.push_back(cell);
                continue;
            }
            const char* s = cell.c_str();
            char* end = nullptr;
            const double x = std::strtod(s, &end);
            if (end == s || *end != '\0') {
                throw DataError(path + ": row " + std::to_string(row) + ", column " +
                                std::to_string(col) + ": cannot parse '" + cell + "'");
            }
            out.values.push_back(x);
        }
        if (col != colcount) {
            throw DataError(path + ": row " + std::to_string(row) + " has " + std::to_string(col) +
                            " columns, header has " + std::to_string(colcount));
        }
    }
    if (out.labels.empty()) throw DataError(path + ": no data rows");
    return out;
}

} // namespace

SeriesDataset load_csv(const std::string& path, const SplitSpec& split) {
    ParsedCsv parsed = parse_csv(path);
    SeriesDataset ds;
    ds.name = std::filesystem::path(path).stem().string();
    ds.v = parsed.v;
    ds.labels = std::move(parsed.labels);
    ds.values = std::move(parsed.values);
    ds.rows = static_cast<long>(ds.labels.size());
    apply_split(ds, split);
    compute_stats(ds);
    return ds;
}

RawCsv load_csv_values(const std::string& path) {
    ParsedCsv parsed = parse_csv(path);
    RawCsv out;
    out.v = parsed.v;
    out.rows = static_cast<long>(parsed.labels.size());
    out.values = std::move(parsed.values);
    return out;
}

void write_csv(const std::string& path, const std::vector<double>& values, int v) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << "date";
    for (int c = 0; c < v; ++c) out << ",v" << c;
    out << "\n";
    out.precision(17);
    const long rows = static_cast<long>(values.size()) / v;
    for (long t = 0; t < rows; ++t) {
        out << "t" << t;
        for (int c = 0; c < v; ++c) out << "," << values[static_cast<std::size_t>(t) * v + c];
        out << "\n";
    }
}

GeneratedStream generate_stream(const RegimeScript& script) {
    if (script.variables <= 0) throw DataError("stream script needs at least one variable");
    if (script.segments.empty()) throw DataError("stream script has no segments");
    GeneratedStream out;
    out.v = script.variables;
    long pos = 0;
    for (std::size_t si = 0; si < script.segments.size(); ++si) {
        const RegimeSegment& seg = script.segments[si];
        if (seg.length <= 0) {
            throw DataError("segment " + std::to_string(si) + " has non-positive length");
        }
        if (si > 0) out.shift_indices.push_back(pos);
        const std::uint64_t seed =
            seg.seed ? *seg.seed : script.seed + 1000003ULL * static_cast<std::uint64_t>(si + 1);
        Rng rng(seed);
        std::vector<double> prev(static_cast<std::size_t>(out.v), seg.level);
        for (long t = 0; t < seg.length; ++t) {
            for (int c = 0; c < out.v; ++c) {
                const double noise = seg.noise_std > 0.0 ? rng.normal(0.0, seg.noise_std) : 0.0;
                double x = 0.0;
                if (seg.kind == "mean") {
                    x = seg.level + noise;
                } else if (seg.kind == "trend") {
                    x = seg.level + seg.slope * static_cast<double>(t) + noise;
                } else if (seg.kind == "sine") {
                    x = seg.level +
                        seg.amplitude *
                            std::sin(2.0 * 3.141592653589793 * static_cast<double>(t) / seg.period +
                                     seg.phase) +
                        noise;
                } else if (seg.kind == "ar1") {
                    x = seg.coef * prev[static_cast<std::size_t>(c)] + noise;
                    prev[static_cast<std::size_t>(c)] = x;
                } else {
                    throw DataError("segment " + std::to_string(si) + " has unknown kind '" +
                                    seg.kind + "'");
                }
                out.values.push_back(x);
            }
        }
        pos += seg.length;
    }
    out.rows = pos;
    return out;
}

namespace {

std::vector<ForecastWindow> windows_over(const SeriesDataset* ds, const std::vector<double>* raw,
                                         int v, long a, long b, int lookback, int horizon) {
    if (lookback < 1 || horizon < 1) {
        throw ParameterError("window lookback/horizon must be positive");
    }
    std::vector<ForecastWindow> out;
    const long first = a + lookback - 1;
    const long last = b - 1 - horizon;
    for (long t = first; t <= last; ++t) {
        ForecastWindow w;
        w.origin = t;
        w.input.resize(static_cast<std::size_t>(lookback) * v);
        w.target.resize(static_cast<std::size_t>(horizon) * v);
        for (int i = 0; i < lookback; ++i) {
            for (int c = 0; c < v; ++c) {
                const long src = t - lookback + 1 + i;
                w.input[static_cast<std::size_t>(i) * v + c] =
                    ds ? ds->norm_at(src, c) : (*raw)[static_cast<std::size_t>(src) * v + c];
            }
        }
        for (int j = 0; j < horizon; ++j) {
            for (int c = 0; c < v; ++c) {
                const long src = t + 1 + j;
                w.target[static_cast<std::size_t>(j) * v + c] =
                    ds ? ds->norm_at(src, c) : (*raw)[static_cast<std::size_t>(src) * v + c];
            }
        }
        out.push_back(std::move(w));
    }
    return out;
}

} // namespace

std::vector<ForecastWindow> make_windows(const SeriesDataset& ds, int lookback, int horizon,
                                         Split split) {
    const auto [a, b] = ds.split_range(split);
    return windows_over(&ds, nullptr, ds.v, a, b, lookback, horizon);
}

std::vector<ForecastWindow> make_windows_raw(const std::vector<double>& values, int v, int lookback,
                                             int horizon) {
    const long rows = static_cast<long>(values.size()) / v;
    return windows_over(nullptr, &values, v, 0, rows, lookback, horizon);
}

int patch_count(int lookback, int patch_len, int stride) {
    if (patch_len < 1 || patch_len > lookback) {
        throw ParameterError("patch_len " + std::to_string(patch_len) + " outside [1," +
                             std::to_string(lookback) + "]");
    }
    if (stride < 1) throw ParameterError("patch stride must be positive");
    return (lookback - patch_len) / stride + 1;
}

std::vector<double> extract_patches(const std::vector<double>& input, int lookback, int v, int var,
                                    int patch_len, int stride) {
    const int n = patch_count(lookback, patch_len, stride);
    std::vector<double> out(static_cast<std::size_t>(n) * patch_len);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < patch_len; ++j) {
            out[static_cast<std::size_t>(i) * patch_len + j] =
                input[static_cast<std::size_t>(i * stride + j) * v + var];
        }
    }
    return out;
}

} // namespace moecast
