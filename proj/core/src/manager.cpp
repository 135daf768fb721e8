#include "moecast/manager.hpp"

#include <algorithm>
#include <cmath>

#include "moecast/error.hpp"
#include "moecast/fft.hpp"

namespace moecast {

ProfilerReport profile_residuals(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) throw ParameterError("profiler needs at least one residual row");
    for (const auto& row : rows) {
        if (row.size() < 8) {
            throw ParameterError("profiler rows need >= 8 values, got " +
                                 std::to_string(row.size()));
        }
    }

    ProfilerReport rep;
    int used = 0;
    for (const auto& row : rows) {
        const int p = static_cast<int>(row.size());
        double mu = 0.0;
        for (double x : row) mu += x;
        mu /= p;
        double var = 0.0;
        for (double x : row) var += (x - mu) * (x - mu);
        var /= p;
        const double sigma = std::sqrt(var);
        if (sigma < 1e-12) continue; // constant row carries no pattern
        std::vector<double> e(row.size());
        for (int i = 0; i < p; ++i) e[static_cast<std::size_t>(i)] = (row[static_cast<std::size_t>(i)] - mu) / (sigma + 1e-8);

        // Least-squares line over t in [-1, 1].
        double st = 0, stt = 0, se = 0, ste = 0, see = 0;
        for (int i = 0; i < p; ++i) {
            const double t = -1.0 + 2.0 * i / (p - 1);
            const double y = e[static_cast<std::size_t>(i)];
            st += t;
            stt += t * t;
            se += y;
            ste += t * y;
            see += y * y;
        }
        const double denom = stt - st * st / p;
        const double b = denom > 0.0 ? (ste - st * se / p) / denom : 0.0;
        const double a = (se - b * st) / p;
        double ss_res = 0.0;
        for (int i = 0; i < p; ++i) {
            const double t = -1.0 + 2.0 * i / (p - 1);
            const double r = e[static_cast<std::size_t>(i)] - a - b * t;
            ss_res += r * r;
        }
        const double s_trend = see > 0.0 ? std::max(0.0, 1.0 - ss_res / see) : 0.0;

        // Non-DC power spectrum.
        const auto spec = fft::rfft(e);
        std::vector<double> power;
        power.reserve(spec.size() - 1);
        double total = 0.0;
        for (std::size_t f = 1; f < spec.size(); ++f) {
            const double pw = std::norm(spec[f]);
            power.push_back(pw);
            total += pw;
        }
        double s_sea = 0.0, s_fluc = 0.0;
        if (total > 0.0) {
            std::vector<double> sorted = power;
            std::partial_sort(sorted.begin(), sorted.begin() + 3, sorted.end(),
                              std::greater<double>());
            s_sea = (sorted[0] + sorted[1] + sorted[2]) / total;
            const double high_band = p / 4.0; // half the Nyquist bin index
            double high = 0.0;
            for (std::size_t f = 1; f < spec.size(); ++f) {
                if (static_cast<double>(f) > high_band) high += power[f - 1];
            }
            s_fluc = high / total;
        }

        rep.s_trend += s_trend;
        rep.s_sea += s_sea;
        rep.s_fluc += s_fluc;
        ++used;
    }

    if (used == 0) {
        rep.degenerate = true;
        rep.chosen = ExpertKind::Trend;
        return rep;
    }
    rep.s_trend /= used;
    rep.s_sea /= used;
    rep.s_fluc /= used;
    rep.chosen = ExpertKind::Trend;
    double best = rep.s_trend;
    if (rep.s_sea > best) {
        rep.chosen = ExpertKind::Seasonality;
        best = rep.s_sea;
    }
    if (rep.s_fluc > best) rep.chosen = ExpertKind::Fluctuation;
    return rep;
}

int UsageTracker::observe(int expert_id, double mean_weight, double tau) {
    int& s = streaks_[expert_id];
    s = mean_weight < tau ? s + 1 : 0;
    return s;
}

int UsageTracker::streak(int expert_id) const {
    auto it = streaks_.find(expert_id);
    return it == streaks_.end() ? 0 : it->second;
}

void UsageTracker::drop(int expert_id) { streaks_.erase(expert_id); }

Tensor mse_loss(const Tensor& pred, const std::vector<double>& target) {
    const Tensor t = Tensor::from_data(pred.shape(), target);
    const Tensor d = sub(pred, t);
    return mean(mul(d, d));
}

std::vector<double> ExpertManager::align(ForecastModel& model, const std::vector<Tensor>& targets,
                                         const std::vector<ForecastWindow>& windows, int steps,
                                         double lr) {
    std::vector<double> losses;
    if (windows.empty() || steps <= 0) return losses;
    AdamW opt({lr, 0.9, 0.999, 1e-8, 0.0});
    losses.reserve(static_cast<std::size_t>(steps));
    for (int s = 0; s < steps; ++s) {
        AdamW::zero_grad(targets);
        Tensor total;
        for (const auto& w : windows) {
            const Tensor l = mse_loss(model.forward(w), w.target);
            total = total.defined() ? add(total, l) : l;
        }
        const Tensor loss = affine(total, 1.0 / static_cast<double>(windows.size()), 0.0);
        loss.backward();
        losses.push_back(loss.item());
        opt.step(targets);
    }
    return losses;
}

PoolEvent ExpertManager::on_drift(const DriftEvent& ev, ForecastModel& model,
                                  const std::vector<double>& drift_rows, const ForwardTrace* trace,
                                  Rng& rng) {
    if (!training_) throw ContractError("structural evolution is confined to training");
    const ModelConfig& mc = model.config();

    PoolEvent pe;
    pe.event_id = static_cast<int>(log_.size());
    pe.t = ev.t;
    pe.mmd2 = ev.mmd2;
    pe.threshold = ev.threshold;

    if (trace && static_cast<int>(trace->layers.size()) == model.layer_count()) {
        for (int li = 0; li < model.layer_count(); ++li) {
            model.layer(li).router.repository().archive(trace->layers[static_cast<std::size_t>(li)].last_hidden,
                                                        pe.event_id);
        }
    }

    const auto windows = make_windows_raw(drift_rows, mc.vars, mc.lookback, mc.horizon);
    if (windows.empty()) {
        pe.action = "skipped_no_windows";
        log_.push_back(pe);
        return pe;
    }

    std::vector<std::vector<double>> rows;
    rows.reserve(windows.size() * static_cast<std::size_t>(mc.vars));
    for (const auto& w : windows) {
        const Tensor pred = model.forward(w);
        const auto& pv = pred.data(); // [horizon, vars]
        for (int var = 0; var < mc.vars; ++var) {
            std::vector<double> r(static_cast<std::size_t>(mc.horizon));
            for (int t = 0; t < mc.horizon; ++t) {
                const std::size_t i = static_cast<std::size_t>(t) * mc.vars + var;
                r[static_cast<std::size_t>(t)] = w.target[i] - pv[i];
            }
            rows.push_back(std::move(r));
        }
    }
    const ProfilerReport rep = profile_residuals(rows);
    const ExpertKind add_kind = cfg_.kind_override.value_or(rep.chosen);
    pe.s_trend = rep.s_trend;
    pe.s_sea = rep.s_sea;
    pe.s_fluc = rep.s_fluc;
    pe.kind = add_kind;

    bool at_cap = false;
    for (int li = 0; li < model.layer_count(); ++li) {
        if (model.layer(li).pool.at_cap()) at_cap = true;
    }
    if (at_cap) {
        pe.action = "skipped_pool_full";
        log_.push_back(pe);
        return pe;
    }

    // Expand every layer in lockstep, then align only the newcomers plus the
    // routing heads.
    std::vector<Tensor> targets;
    for (int li = 0; li < model.layer_count(); ++li) {
        MoeLayer& layer = model.layer(li);
        const int idx = layer.pool.add_expert(add_kind, pe.event_id, rng);
        layer.router.grow_head();
        if (li == 0) pe.expert_id = layer.pool.at(idx).id();
        for (const auto& p : layer.pool.at(idx).params()) targets.push_back(p);
    }
    for (int li = 0; li < model.layer_count(); ++li) {
        for (const auto& p : model.layer(li).router.head_params()) targets.push_back(p);
    }
    pe.action = "added";

    const int nb = std::min(static_cast<int>(windows.size()), cfg_.align_batch);
    const std::vector<ForecastWindow> recent(windows.end() - nb, windows.end());
    last_align_losses_ = align(model, targets, recent, cfg_.align_steps, cfg_.align_lr);

    log_.push_back(pe);
    return pe;
}

void ExpertManager::accumulate_usage(const ForwardTrace& trace, const ForecastModel& model) {
    for (int li = 0; li < model.layer_count(); ++li) {
        const auto& lt = trace.layers[static_cast<std::size_t>(li)];
        const ExpertPool& pool = model.layer(li).pool;
        for (int e = 0; e < pool.size(); ++e) {
            const int id = pool.at(e).id();
            usage_sum_[id] += lt.gate_mean[static_cast<std::size_t>(e)];
            usage_count_[id] += 1;
        }
    }
}

std::vector<PoolEvent> ExpertManager::end_monitor_window(ForecastModel& model, AdamW& main_opt,
                                                         long t) {
    std::vector<PoolEvent> out;
    if (usage_count_.empty()) return out;

    const ExpertPool& pool0 = model.layer(0).pool;
    std::vector<int> ripe;
    for (int e = 0; e < pool0.size(); ++e) {
        const Expert& ex = pool0.at(e);
        if (ex.is_protected()) continue; // base experts are never pruned
        const auto it = usage_count_.find(ex.id());
        if (it == usage_count_.end() || it->second == 0) continue;
        const double mean_w = usage_sum_[ex.id()] / static_cast<double>(it->second);
        if (tracker_.observe(ex.id(), mean_w, cfg_.tau) >= cfg_.patience) ripe.push_back(ex.id());
    }

    for (int id : ripe) {
        PoolEvent pe;
        pe.event_id = static_cast<int>(log_.size());
        pe.t = t;
        pe.action = "pruned";
        pe.expert_id = id;
        for (int li = 0; li < model.layer_count(); ++li) {
            MoeLayer& layer = model.layer(li);
            const int idx = layer.pool.index_of(id);
            if (idx < 0) throw ContractError("prune: expert " + std::to_string(id) +
                                             " missing from layer " + std::to_string(li));
            pe.kind = layer.pool.at(idx).kind();
            for (const auto& p : layer.pool.at(idx).params()) main_opt.forget(p);
            main_opt.forget(layer.router.head_row(idx));
            layer.pool.remove(idx);
            layer.router.shrink_head(idx);
        }
        tracker_.drop(id);
        log_.push_back(pe);
        out.push_back(pe);
    }

    usage_sum_.clear();
    usage_count_.clear();
    return out;
}

} // namespace moecast
