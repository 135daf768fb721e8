#include "moecast/model.hpp"

#include <string>

#include "moecast/error.hpp"

namespace moecast {

int ModelConfig::patch_total() const { return patch_count(lookback, patch_len, stride); }

void ModelConfig::validate() const {
    auto positive = [](int v, const char* name) {
        if (v < 1) throw ConfigError(std::string(name) + " must be positive, got " + std::to_string(v));
    };
    positive(lookback, "lookback");
    positive(horizon, "horizon");
    positive(vars, "vars");
    positive(patch_len, "patch_len");
    positive(stride, "stride");
    positive(d_model, "d_model");
    positive(d_hidden, "d_hidden");
    positive(top_k, "top_k");
    positive(moe_layers, "moe_layers");
    positive(cycle_len, "cycle_len");
    positive(repo_capacity, "repo_capacity");
    positive(expert_hyper.trend_window, "trend_window");
    positive(expert_hyper.conv_kernel, "conv_kernel");
    if (drift_cap < 0) throw ConfigError("drift_cap must be non-negative");
    if (d_model % 2 != 0) throw ConfigError("d_model must be even, got " + std::to_string(d_model));
    if (base_roster.empty()) throw ConfigError("base_roster must not be empty");
    if (top_k > static_cast<int>(base_roster.size())) {
        throw ConfigError("top_k " + std::to_string(top_k) + " exceeds base roster size " +
                          std::to_string(base_roster.size()));
    }
    if (patch_len > lookback) {
        throw ConfigError("patch_len " + std::to_string(patch_len) + " exceeds lookback " +
                          std::to_string(lookback));
    }
    if (fusion_temperature <= 0.0) throw ConfigError("fusion_temperature must be positive");
    const int n = (lookback - patch_len) / stride + 1;
    if (n < expert_hyper.trend_window) {
        throw ConfigError("trend_window " + std::to_string(expert_hyper.trend_window) +
                          " exceeds the patch count " + std::to_string(n));
    }
}

MoeLayer::MoeLayer(const ModelConfig& cfg, Rng& rng)
    : router(cfg.d_model, cfg.d_hidden, static_cast<int>(cfg.base_roster.size()), cfg.router_kind,
             cfg.fusion_temperature, cfg.repo_capacity, rng),
      pool(cfg.d_model, cfg.base_roster, cfg.expert_hyper, cfg.drift_cap, rng),
      relation(cfg.vars, cfg.cycle_len, rng) {}

std::vector<Tensor> MoeLayer::params() const {
    std::vector<Tensor> out = router.params();
    for (int e = 0; e < pool.size(); ++e) {
        for (const auto& p : pool.at(e).params()) out.push_back(p);
    }
    for (const auto& p : relation.params()) out.push_back(p);
    return out;
}

ForecastModel::ForecastModel(ModelConfig cfg, Rng& rng) : cfg_(std::move(cfg)) {
    cfg_.validate();
    patch_proj = Dense(cfg_.patch_len, cfg_.d_model, rng);
    layers_.reserve(static_cast<std::size_t>(cfg_.moe_layers));
    for (int i = 0; i < cfg_.moe_layers; ++i) layers_.emplace_back(cfg_, rng);
    head = Dense(cfg_.patch_total() * cfg_.d_model, cfg_.horizon, rng);
}

Tensor ForecastModel::forward(const ForecastWindow& w, ForwardTrace* trace) {
    const int v = cfg_.vars;
    const int n = cfg_.patch_total();
    const int d = cfg_.d_model;
    if (static_cast<long>(w.input.size()) != static_cast<long>(cfg_.lookback) * v) {
        throw DimensionError("forward: window input has " + std::to_string(w.input.size()) +
                             " values, expected " + std::to_string(cfg_.lookback * v));
    }

    // Patch embedding per variable.
    std::vector<Tensor> h(static_cast<std::size_t>(v));
    for (int var = 0; var < v; ++var) {
        auto patches =
            extract_patches(w.input, cfg_.lookback, v, var, cfg_.patch_len, cfg_.stride);
        const Tensor pm = Tensor::from_data({n, cfg_.patch_len}, std::move(patches));
        h[static_cast<std::size_t>(var)] = patch_proj.rows(pm);
    }

    if (trace) {
        trace->layers.assign(static_cast<std::size_t>(layers_.size()), LayerTrace{});
    }

    for (std::size_t li = 0; li < layers_.size(); ++li) {
        MoeLayer& layer = layers_[li];
        const int n_experts = layer.pool.size();
        LayerTrace* lt = trace ? &trace->layers[li] : nullptr;
        if (lt) {
            lt->gate_mean.assign(static_cast<std::size_t>(n_experts), 0.0);
            lt->gate_by_patch.assign(static_cast<std::size_t>(n),
                                     std::vector<double>(static_cast<std::size_t>(n_experts), 0.0));
            lt->last_hidden.assign(static_cast<std::size_t>(cfg_.d_hidden), 0.0);
        }

        std::vector<Tensor> mixed(static_cast<std::size_t>(v));
        for (int var = 0; var < v; ++var) {
            const Tensor& hv = h[static_cast<std::size_t>(var)];
            // Recurrent routing over the patch sequence.
            Tensor hidden = layer.router.initial_hidden();
            std::vector<Tensor> gate_rows;
            gate_rows.reserve(static_cast<std::size_t>(n));
            std::vector<bool> used(static_cast<std::size_t>(n_experts), false);
            for (int p = 0; p < n; ++p) {
                const Tensor xp = reshape(slice_rows(hv, p, p + 1), {d});
                hidden = layer.router.step(xp, hidden);
                const Tensor fused = layer.router.fuse(hidden);
                GateResult gr = layer.router.route(fused, cfg_.top_k);
                for (int e : gr.active) used[static_cast<std::size_t>(e)] = true;
                gate_rows.push_back(reshape(gr.gates, {1, n_experts}));
                if (lt) {
                    const auto& gv = gr.gates.data();
                    for (int e = 0; e < n_experts; ++e) {
                        lt->gate_mean[static_cast<std::size_t>(e)] += gv[static_cast<std::size_t>(e)];
                        lt->gate_by_patch[static_cast<std::size_t>(p)][static_cast<std::size_t>(e)] +=
                            gv[static_cast<std::size_t>(e)];
                    }
                    if (p == n - 1) {
                        const auto& hvval = fused.data();
                        for (int i = 0; i < cfg_.d_hidden; ++i) {
                            lt->last_hidden[static_cast<std::size_t>(i)] += hvval[static_cast<std::size_t>(i)];
                        }
                    }
                }
            }
            const Tensor gates = concat_rows(gate_rows); // [N, E]
            // Run only the experts some patch actually selected.
            std::vector<Tensor> outputs(static_cast<std::size_t>(n_experts));
            for (int e = 0; e < n_experts; ++e) {
                if (used[static_cast<std::size_t>(e)]) {
                    outputs[static_cast<std::size_t>(e)] = layer.pool.at(e).forward(hv);
                }
            }
            mixed[static_cast<std::size_t>(var)] = mix_experts(outputs, gates);
        }
        h = layer.relation.apply(mixed, w.origin);

        if (lt) {
            const double inv_nv = 1.0 / (static_cast<double>(n) * v);
            for (auto& g : lt->gate_mean) g *= inv_nv;
            for (auto& row : lt->gate_by_patch) {
                for (auto& g : row) g /= static_cast<double>(v);
            }
            for (auto& x : lt->last_hidden) x /= static_cast<double>(v);
        }
    }

    // Flatten and project each variable to the horizon, stack as columns.
    std::vector<Tensor> cols;
    cols.reserve(static_cast<std::size_t>(v));
    for (int var = 0; var < v; ++var) {
        const Tensor flat = reshape(h[static_cast<std::size_t>(var)], {1, n * d});
        cols.push_back(reshape(head.rows(flat), {cfg_.horizon, 1}));
    }
    return v == 1 ? cols.front() : concat_cols(cols);
}

std::vector<Tensor> ForecastModel::params() const {
    std::vector<Tensor> out = {patch_proj.w, patch_proj.b};
    for (const auto& layer : layers_) {
        for (const auto& p : layer.params()) out.push_back(p);
    }
    out.push_back(head.w);
    out.push_back(head.b);
    return out;
}

} // namespace moecast
