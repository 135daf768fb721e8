#pragma once

#include <functional>
#include <vector>

#include "moecast/checkpoint.hpp"
#include "moecast/config.hpp"
#include "moecast/data.hpp"
#include "moecast/manager.hpp"
#include "moecast/metrics.hpp"
#include "moecast/model.hpp"

namespace moecast {

struct EpochStats {
    int epoch = 0;
    double train_mse = 0.0;
    double val_mse = 0.0;
};

struct TrainOutput {
    RunConfig config;
    ForecastModel model; // live end-of-training state
    std::vector<PoolEvent> events;
    std::vector<EpochStats> curve;
    std::vector<unsigned char> best_bytes; // checkpoint snapshot of the best epoch
    int best_epoch = 0;
    double best_val_mse = 0.0;
    long steps = 0;
    long detector_evals = 0;
};

// Full training loop: shuffled mini-batches, stream-order drift detection at
// the configured cadence, structural adaptation through the manager, usage
// monitoring/pruning, early stopping on validation MSE.
TrainOutput train_model(const RunConfig& cfg, const SeriesDataset& ds);

// Pure evaluation (no detector, no mutation) over a split's windows.
MetricsReport evaluate_model(ForecastModel& model, const SeriesDataset& ds, Split split);

// Same, over explicit windows; the callback (when given) sees every window's
// prediction and routing trace.
using EvalHook =
    std::function<void(std::size_t, const ForecastWindow&, const Tensor&, const ForwardTrace&)>;
MetricsReport evaluate_windows(ForecastModel& model, const std::vector<ForecastWindow>& windows,
                               const EvalHook& hook = nullptr);

// Repeat-last-value baseline on the same z-scored windows.
MetricsReport last_value_baseline(const SeriesDataset& ds, Split split, int lookback, int horizon);

} // namespace moecast
