#pragma once

#include <vector>

#include "moecast/data.hpp"
#include "moecast/experts.hpp"
#include "moecast/nn.hpp"
#include "moecast/router.hpp"
#include "moecast/rng.hpp"
#include "moecast/tensor.hpp"

namespace moecast {

struct ModelConfig {
    int lookback = 96;  // input length
    int horizon = 96;   // forecast length
    int vars = 1;       // series variables
    int patch_len = 48; // patch length
    int stride = 12;    // patch stride
    int d_model = 8;    // patch embedding dim (even)
    int d_hidden = 16;  // router hidden dim
    int top_k = 2;      // active experts per patch
    int moe_layers = 1;
    std::vector<ExpertKind> base_roster = {ExpertKind::Identity, ExpertKind::Trend,
                                           ExpertKind::Seasonality, ExpertKind::Fluctuation};
    int drift_cap = 3; // dynamically added experts per layer, at most
    int cycle_len = 24;
    RouterKind router_kind = RouterKind::Gru;
    int repo_capacity = 16;
    double fusion_temperature = 1.0;
    ExpertHyper expert_hyper;
    std::uint64_t seed = 0;

    int patch_total() const; // patches per window
    void validate() const;   // throws ConfigError; forward never shape-fails after this
};

// Per-layer observations from one forward pass (plain values, off the tape).
struct LayerTrace {
    std::vector<double> gate_mean;                 // [E] mean gate weight over patches+vars
    std::vector<std::vector<double>> gate_by_patch; // [N][E] mean over vars
    std::vector<double> last_hidden;               // [d_h] fused hidden of the final patch, mean over vars
};

struct ForwardTrace {
    std::vector<LayerTrace> layers;
};

struct MoeLayer {
    TemporalRouter router;
    ExpertPool pool;
    CyclicRelationLayer relation;

    MoeLayer(const ModelConfig& cfg, Rng& rng);
    std::vector<Tensor> params() const; // router, then pool experts, then relation
};

// Channel-independent patch forecaster: shared patch embedding, stacked
// MoE layers (recurrent routing + heterogeneous experts + cross-variable
// relation mixing), shared flatten-to-horizon head.
class ForecastModel {
public:
    ForecastModel(ModelConfig cfg, Rng& rng);

    // One window ([lookback, v] z-scored input) -> [horizon, v] prediction.
    Tensor forward(const ForecastWindow& w, ForwardTrace* trace = nullptr);

    // Deterministic traversal: patch_proj, per layer (router, experts,
    // relation), head. Checkpoints and the optimizer rely on this order.
    std::vector<Tensor> params() const;

    const ModelConfig& config() const { return cfg_; }
    int layer_count() const { return static_cast<int>(layers_.size()); }
    MoeLayer& layer(int i) { return layers_[static_cast<std::size_t>(i)]; }
    const MoeLayer& layer(int i) const { return layers_[static_cast<std::size_t>(i)]; }

    Dense patch_proj;
    Dense head; // [n_patches * d_model] -> horizon, shared across variables

private:
    ModelConfig cfg_;
    std::vector<MoeLayer> layers_;
};

} // namespace moecast
