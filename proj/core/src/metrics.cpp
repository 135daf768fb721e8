#include "moecast/metrics.hpp"

#include <cmath>

#include "moecast/error.hpp"

namespace moecast {

MetricsReport mse_mae(const std::vector<double>& pred, const std::vector<double>& truth) {
    if (pred.size() != truth.size()) {
        throw DimensionError("mse_mae: " + std::to_string(pred.size()) + " predictions vs " +
                             std::to_string(truth.size()) + " targets");
    }
    if (pred.empty()) throw DimensionError("mse_mae: empty input");
    MetricsReport r;
    double se = 0.0, ae = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double e = pred[i] - truth[i];
        se += e * e;
        ae += std::abs(e);
    }
    r.mse = se / static_cast<double>(pred.size());
    r.mae = ae / static_cast<double>(pred.size());
    r.n_windows = 1;
    return r;
}

MetricsAccumulator::MetricsAccumulator(int horizon, int vars)
    : horizon_(horizon), vars_(vars), se_(static_cast<std::size_t>(horizon), 0.0),
      ae_(static_cast<std::size_t>(horizon), 0.0) {
    if (horizon < 1 || vars < 1) throw ParameterError("metrics: horizon and vars must be positive");
}

void MetricsAccumulator::add(const std::vector<double>& pred, const std::vector<double>& truth) {
    const std::size_t want = static_cast<std::size_t>(horizon_) * static_cast<std::size_t>(vars_);
    if (pred.size() != want || truth.size() != want) {
        throw DimensionError("metrics add: expected " + std::to_string(want) + " values, got " +
                             std::to_string(pred.size()) + " / " + std::to_string(truth.size()));
    }
    for (int t = 0; t < horizon_; ++t) {
        for (int v = 0; v < vars_; ++v) {
            const std::size_t i = static_cast<std::size_t>(t) * vars_ + v;
            const double e = pred[i] - truth[i];
            se_[static_cast<std::size_t>(t)] += e * e;
            ae_[static_cast<std::size_t>(t)] += std::abs(e);
        }
    }
    ++n_;
}

MetricsReport MetricsAccumulator::report() const {
    MetricsReport r;
    r.n_windows = n_;
    r.mse_per_step.assign(static_cast<std::size_t>(horizon_), 0.0);
    r.mae_per_step.assign(static_cast<std::size_t>(horizon_), 0.0);
    if (n_ == 0) return r;
    const double per_step = static_cast<double>(n_) * vars_;
    double se = 0.0, ae = 0.0;
    for (int t = 0; t < horizon_; ++t) {
        const auto ti = static_cast<std::size_t>(t);
        r.mse_per_step[ti] = se_[ti] / per_step;
        r.mae_per_step[ti] = ae_[ti] / per_step;
        se += se_[ti];
        ae += ae_[ti];
    }
    r.mse = se / (per_step * horizon_);
    r.mae = ae / (per_step * horizon_);
    return r;
}

} // namespace moecast
