#pragma once

#include <cstddef>
#include <vector>

namespace moecast {

struct MetricsReport {
    double mse = 0.0;
    double mae = 0.0;
    long n_windows = 0;
    // Per forecast-step breakdown (length = horizon), averaged over windows
    // and variables.
    std::vector<double> mse_per_step;
    std::vector<double> mae_per_step;
};

// Flat elementwise MSE/MAE over two equal-length vectors.
MetricsReport mse_mae(const std::vector<double>& pred, const std::vector<double>& truth);

// Streaming accumulation over forecast windows laid out row-major [T, V].
class MetricsAccumulator {
public:
    MetricsAccumulator(int horizon, int vars);
    void add(const std::vector<double>& pred, const std::vector<double>& truth);
    MetricsReport report() const;

private:
    int horizon_;
    int vars_;
    long n_ = 0;
    std::vector<double> se_; // squared-error sums per forecast step
    std::vector<double> ae_;
};

} // namespace moecast
