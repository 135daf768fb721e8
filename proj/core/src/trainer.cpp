#include "moecast/trainer.hpp"

#include <algorithm>
#include <numeric>

#include "moecast/drift.hpp"
#include "moecast/error.hpp"
#include "moecast/optimizer.hpp"

namespace moecast {

namespace {

// z-scored sample rows [t0, t0+count) as one flat [count, vars] block.
std::vector<double> norm_rows(const SeriesDataset& ds, long t0, long count) {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(count) * ds.v);
    for (long t = t0; t < t0 + count; ++t) {
        for (int var = 0; var < ds.v; ++var) out.push_back(ds.norm_at(t, var));
    }
    return out;
}

// Detector row at absolute position t. Raw source: the z-scored sample.
// Embedding source: the patch embedding of the trailing patch_len samples,
// averaged over variables (needs patch_len-1 samples of history).
std::vector<double> detector_row(const SeriesDataset& ds, const ForecastModel& model,
                                 const std::string& source, long t) {
    if (source == "raw") {
        std::vector<double> row(static_cast<std::size_t>(ds.v));
        for (int var = 0; var < ds.v; ++var) row[static_cast<std::size_t>(var)] = ds.norm_at(t, var);
        return row;
    }
    const ModelConfig& mc = model.config();
    const int p = mc.patch_len;
    const int d = mc.d_model;
    const auto& w = model.patch_proj.w.data(); // [p, d]
    const auto& b = model.patch_proj.b.data(); // [d]
    std::vector<double> row(static_cast<std::size_t>(d), 0.0);
    for (int var = 0; var < ds.v; ++var) {
        for (int j = 0; j < d; ++j) {
            double acc = b[static_cast<std::size_t>(j)];
            for (int i = 0; i < p; ++i) {
                acc += ds.norm_at(t - p + 1 + i, var) * w[static_cast<std::size_t>(i) * d + j];
            }
            row[static_cast<std::size_t>(j)] += acc;
        }
    }
    for (auto& x : row) x /= ds.v;
    return row;
}

} // namespace

MetricsReport evaluate_windows(ForecastModel& model, const std::vector<ForecastWindow>& windows,
                               const EvalHook& hook) {
    const ModelConfig& mc = model.config();
    MetricsAccumulator acc(mc.horizon, mc.vars);
    for (std::size_t i = 0; i < windows.size(); ++i) {
        ForwardTrace trace;
        const Tensor pred = model.forward(windows[i], &trace);
        acc.add(pred.data(), windows[i].target);
        if (hook) hook(i, windows[i], pred, trace);
    }
    return acc.report();
}

MetricsReport evaluate_model(ForecastModel& model, const SeriesDataset& ds, Split split) {
    const ModelConfig& mc = model.config();
    return evaluate_windows(model, make_windows(ds, mc.lookback, mc.horizon, split));
}

MetricsReport last_value_baseline(const SeriesDataset& ds, Split split, int lookback, int horizon) {
    const auto windows = make_windows(ds, lookback, horizon, split);
    MetricsAccumulator acc(horizon, ds.v);
    std::vector<double> pred(static_cast<std::size_t>(horizon) * ds.v);
    for (const auto& w : windows) {
        const double* last = w.input.data() + static_cast<std::size_t>(lookback - 1) * ds.v;
        for (int t = 0; t < horizon; ++t) {
            for (int var = 0; var < ds.v; ++var) {
                pred[static_cast<std::size_t>(t) * ds.v + var] = last[var];
            }
        }
        acc.add(pred, w.target);
    }
    return acc.report();
}

TrainOutput train_model(const RunConfig& cfg, const SeriesDataset& ds) {
    cfg.validate();
    const ModelConfig mc = cfg.effective_model();
    if (ds.v != mc.vars) {
        throw DataError("dataset has " + std::to_string(ds.v) + " variables, config expects " +
                        std::to_string(mc.vars));
    }

    Rng rng(mc.seed);
    ForecastModel model(mc, rng);
    AdamW opt({cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
    ExpertManager manager(cfg.effective_manager());
    manager.set_training(true);

    const int det_dim = cfg.detector.source == "raw" ? mc.vars : mc.d_model;
    DriftDetector detector(cfg.detector, det_dim);

    const auto train_windows = make_windows(ds, mc.lookback, mc.horizon, Split::Train);
    const auto val_windows = make_windows(ds, mc.lookback, mc.horizon, Split::Val);
    if (train_windows.empty()) throw DataError("train split yields no forecast windows");
    if (val_windows.empty()) throw DataError("validation split yields no forecast windows");

    const auto [train_a, train_b] = ds.split_range(Split::Train);
    // Embedding rows need patch_len-1 samples of history.
    const long stream_start =
        cfg.detector.source == "raw" ? train_a : train_a + mc.patch_len - 1;

    TrainOutput out{cfg, std::move(model), {}, {}, {}, 0, 0.0, 0, 0};
    ForecastModel& m = out.model;

    double best_val = 0.0;
    bool have_best = false;

    long steps = 0;
    long stream_pos = 0;               // next unconsumed detector row (absolute)
    std::vector<double> ref_raw;       // raw z-scored block behind the reference window
    ForwardTrace last_trace;           // most recent training forward, for archiving

    std::vector<std::size_t> order(train_windows.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        // Fresh detector state per epoch (the stream restarts); event ids
        // keep counting across epochs.
        if (cfg.adapt) {
            detector.reset();
            stream_pos = stream_start;
            if (stream_pos + cfg.detector.ref_window <= train_b) {
                std::vector<double> ref;
                ref.reserve(static_cast<std::size_t>(cfg.detector.ref_window) * det_dim);
                for (long t = stream_pos; t < stream_pos + cfg.detector.ref_window; ++t) {
                    const auto row = detector_row(ds, m, cfg.detector.source, t);
                    ref.insert(ref.end(), row.begin(), row.end());
                }
                detector.set_reference(std::move(ref));
                ref_raw = norm_rows(ds, stream_pos, cfg.detector.ref_window);
                stream_pos += cfg.detector.ref_window;
            }
        }

        std::shuffle(order.begin(), order.end(), rng.engine());

        double epoch_loss = 0.0;
        long epoch_batches = 0;
        std::size_t cursor = 0;
        while (cursor < order.size()) {
            if (cfg.max_steps_per_epoch > 0 && epoch_batches >= cfg.max_steps_per_epoch) break;
            const std::size_t batch_end =
                std::min(cursor + static_cast<std::size_t>(cfg.batch_size), order.size());

            const auto params = m.params();
            AdamW::zero_grad(params);
            Tensor total;
            for (std::size_t i = cursor; i < batch_end; ++i) {
                const ForecastWindow& w = train_windows[order[i]];
                ForwardTrace trace;
                const Tensor l = mse_loss(m.forward(w, &trace), w.target);
                manager.accumulate_usage(trace, m);
                last_trace = std::move(trace);
                total = total.defined() ? add(total, l) : l;
            }
            const Tensor loss =
                affine(total, 1.0 / static_cast<double>(batch_end - cursor), 0.0);
            loss.backward();
            opt.step(params);
            epoch_loss += loss.item();
            ++epoch_batches;
            ++steps;
            cursor = batch_end;

            // Drift detection over the chronological stream, independent of
            // batch shuffling.
            if (cfg.adapt && steps % cfg.detect_every == 0 && detector.has_reference() &&
                stream_pos + cfg.detector.cur_window <= train_b) {
                std::vector<double> cur;
                cur.reserve(static_cast<std::size_t>(cfg.detector.cur_window) * det_dim);
                for (long t = stream_pos; t < stream_pos + cfg.detector.cur_window; ++t) {
                    const auto row = detector_row(ds, m, cfg.detector.source, t);
                    cur.insert(cur.end(), row.begin(), row.end());
                }
                const std::vector<double> cur_raw =
                    norm_rows(ds, stream_pos, cfg.detector.cur_window);
                stream_pos += cfg.detector.cur_window;
                const long t_end = stream_pos - 1;
                ++out.detector_evals;
                const auto ev = detector.step(cur, t_end);
                if (ev) {
                    // The drift block joins the pre-reset reference with the
                    // triggering window.
                    std::vector<double> drift_rows = ref_raw;
                    drift_rows.insert(drift_rows.end(), cur_raw.begin(), cur_raw.end());
                    manager.on_drift(*ev, m, drift_rows, &last_trace, rng);
                    ref_raw = cur_raw;
                }
            }

            if (cfg.adapt && steps % manager.config().monitor_steps == 0) {
                manager.end_monitor_window(m, opt, steps);
            }
        }

        EpochStats st;
        st.epoch = epoch;
        st.train_mse = epoch_batches > 0 ? epoch_loss / static_cast<double>(epoch_batches) : 0.0;
        st.val_mse = evaluate_windows(m, val_windows).mse;
        out.curve.push_back(st);

        if (!have_best || st.val_mse < best_val) {
            best_val = st.val_mse;
            have_best = true;
            out.best_epoch = epoch;
            out.best_bytes = checkpoint_bytes(cfg, m, manager.log());
        }
        if (epoch - out.best_epoch >= cfg.early_stop_patience) break;
    }

    manager.set_training(false);
    out.events = manager.log();
    out.best_val_mse = best_val;
    out.steps = steps;
    return out;
}

} // namespace moecast
