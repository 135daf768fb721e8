#pragma once

#include <optional>
#include <string>
#include <vector>

namespace moecast {

struct DetectorConfig {
    int ref_window = 96;   // reference sample count
    int cur_window = 96;   // current-window sample count; also the stream cadence
    int history = 50;      // score ring-buffer capacity
    int min_fill = 10;     // scores needed before a threshold exists
    double lambda = 3.0;   // threshold = mean + lambda * population std
    std::string source = "raw"; // "raw" | "embedding"; consumed by the trainer
};

// exp(-||x - y||^2 / (2 sigma^2))
double rbf_kernel(const double* x, const double* y, int dim, double sigma);

// Median of the pairwise Euclidean distances among the n rows (lower median
// for even counts). Degenerate inputs: all rows identical -> 1.0; zero median
// with positive distances present -> smallest positive distance.
double median_bandwidth(const std::vector<double>& rows, int n, int dim);

// Biased V-statistic (diagonal terms included): always >= -epsilon.
double mmd2_biased(const std::vector<double>& ref, int n_ref, const std::vector<double>& cur,
                   int n_cur, int dim, double sigma);

// Unbiased U-statistic: diagonals excluded, 1/(N(N-1)) same-sample terms.
double mmd2_unbiased(const std::vector<double>& ref, int n_ref, const std::vector<double>& cur,
                     int n_cur, int dim, double sigma);

// Fixed-capacity ring of recent scores.
class ScoreHistory {
public:
    explicit ScoreHistory(int capacity);
    void push(double score);
    void clear();
    int size() const { return static_cast<int>(count_); }
    int capacity() const { return static_cast<int>(buf_.size()); }
    double mean() const;
    double std_pop() const; // population standard deviation
    std::vector<double> snapshot() const; // oldest first

private:
    std::vector<double> buf_;
    std::size_t head_ = 0;
    std::size_t count_ = 0;
};

// mean + lambda * std over the history; nullopt until min_fill scores exist.
std::optional<double> adaptive_threshold(const ScoreHistory& history, double lambda, int min_fill);

struct DriftEvent {
    int event_id = 0;
    long t = 0; // absolute index of the last sample of the triggering window
    double mmd2 = 0.0;
    double threshold = 0.0;
};

// Streaming two-sample detector. Feed it non-overlapping current windows;
// every evaluation appends its score to the history (the threshold snapshot
// is taken before the append). A detection resets the reference to the
// triggering window and clears the history.
class DriftDetector {
public:
    DriftDetector(DetectorConfig cfg, int dim);

    void set_reference(std::vector<double> rows); // [ref_window, dim]
    bool has_reference() const { return !reference_.empty(); }
    const std::vector<double>& reference() const { return reference_; }

    std::optional<DriftEvent> step(const std::vector<double>& window, long t_end);

    double last_score() const { return last_score_; }
    std::optional<double> last_threshold() const { return last_threshold_; }
    const DetectorConfig& config() const { return cfg_; }
    int dim() const { return dim_; }

    // Drop reference and history (epoch boundary). The event counter survives
    // so event ids stay monotone across the run.
    void reset();

private:
    DetectorConfig cfg_;
    int dim_;
    std::vector<double> reference_;
    ScoreHistory history_;
    double last_score_ = 0.0;
    std::optional<double> last_threshold_;
    int next_event_id_ = 0;
};

} // namespace moecast
