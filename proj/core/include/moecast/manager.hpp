#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "moecast/drift.hpp"
#include "moecast/model.hpp"
#include "moecast/optimizer.hpp"

namespace moecast {

// Residual diagnostics: trend fit quality, spectral concentration, and
// high-band energy share, each in [0,1].
struct ProfilerReport {
    double s_trend = 0.0;
    double s_sea = 0.0;
    double s_fluc = 0.0;
    ExpertKind chosen = ExpertKind::Trend;
    bool degenerate = false; // every row was (near-)constant
};

// rows: one residual sequence per (window, variable), each of length >= 8.
// Rows are normalized per sample; near-constant rows are excluded from the
// score means (degenerate only if nothing survives). chosen = argmax with
// ties resolved Trend > Seasonality > Fluctuation.
ProfilerReport profile_residuals(const std::vector<std::vector<double>>& rows);

struct ManagerConfig {
    double tau = 0.02;      // prune threshold on mean gate weight
    int patience = 3;       // consecutive sub-tau windows before pruning
    int monitor_steps = 200; // optimizer steps per monitoring window
    int align_steps = 50;
    int align_batch = 32;   // most recent drift windows used for alignment
    double align_lr = 1e-3; // the run's base learning rate
    // When set, additions ignore the profiler's choice (homogeneous-roster
    // ablations); the profile scores are still logged truthfully.
    std::optional<ExpertKind> kind_override;
};

// One event-log line. Non-drift actions (prune) carry zero detector/profile
// numerics. Serialized as JSON lines by the trainer.
struct PoolEvent {
    int event_id = 0;
    long t = 0;
    double mmd2 = 0.0;
    double threshold = 0.0;
    double s_trend = 0.0;
    double s_sea = 0.0;
    double s_fluc = 0.0;
    std::string action; // "added" | "skipped_pool_full" | "skipped_no_windows" | "pruned"
    std::optional<int> expert_id;
    std::optional<ExpertKind> kind;
};

// Consecutive sub-threshold streaks per expert id.
class UsageTracker {
public:
    // Returns the updated streak for this expert.
    int observe(int expert_id, double mean_weight, double tau);
    int streak(int expert_id) const;
    void drop(int expert_id);
    void clear() { streaks_.clear(); }

private:
    std::map<int, int> streaks_;
};

// Training-time structural control: expansion on drift (profile -> clone ->
// align) and usage-based pruning. All structural mutations apply to every
// layer in lockstep, so pool composition stays identical across layers and
// expert ids align layer-to-layer.
class ExpertManager {
public:
    explicit ExpertManager(ManagerConfig cfg) : cfg_(cfg) {}

    void set_training(bool on) { training_ = on; }
    bool training() const { return training_; }

    // Handle one detector event: archive hidden states, profile residuals on
    // the drift windows, expand the pool if below cap, align the new expert.
    // drift_rows is the concatenated reference+current window block, already
    // z-scored, [rows, vars] row-major.
    PoolEvent on_drift(const DriftEvent& ev, ForecastModel& model,
                       const std::vector<double>& drift_rows, const ForwardTrace* trace, Rng& rng);

    // Per-forward usage bookkeeping inside the current monitoring window.
    void accumulate_usage(const ForwardTrace& trace, const ForecastModel& model);
    // Close the monitoring window: update streaks, prune ripe experts (their
    // optimizer state is dropped from main_opt). Returns the prune events.
    std::vector<PoolEvent> end_monitor_window(ForecastModel& model, AdamW& main_opt, long t);

    const ManagerConfig& config() const { return cfg_; }
    const std::vector<PoolEvent>& log() const { return log_; }
    void append_log(PoolEvent ev) { log_.push_back(std::move(ev)); }
    const std::vector<double>& last_align_losses() const { return last_align_losses_; }
    const UsageTracker& tracker() const { return tracker_; }

    // Alignment pass exposed for direct testing: trains only `targets` with a
    // fresh optimizer on the given windows; returns per-step losses.
    static std::vector<double> align(ForecastModel& model, const std::vector<Tensor>& targets,
                                     const std::vector<ForecastWindow>& windows, int steps,
                                     double lr);

private:
    ManagerConfig cfg_;
    bool training_ = false;
    std::vector<PoolEvent> log_;
    std::vector<double> last_align_losses_;
    UsageTracker tracker_;
    // usage sums/counts per expert id, aggregated over layers
    std::map<int, double> usage_sum_;
    std::map<int, long> usage_count_;
};

// Mean squared error between a prediction graph node and plain target values.
Tensor mse_loss(const Tensor& pred, const std::vector<double>& target);

} // namespace moecast
