#pragma once

#include <unordered_map>
#include <vector>

#include "moecast/tensor.hpp"

namespace moecast {

struct AdamWConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

// AdamW with decoupled weight decay. State is keyed by the parameter's node
// identity, so the same optimizer instance can serve a pool whose membership
// changes mid-run; drop state for removed parameters via forget().
class AdamW {
public:
    explicit AdamW(AdamWConfig cfg) : cfg_(cfg) {}

    // One update over the given parameters using their accumulated gradients.
    void step(const std::vector<Tensor>& params);
    // Zero the gradients of the given parameters.
    static void zero_grad(const std::vector<Tensor>& params);
    // Drop moment state for a parameter that left the model.
    void forget(const Tensor& param);

    void set_lr(double lr) { cfg_.lr = lr; }
    const AdamWConfig& config() const { return cfg_; }
    std::size_t tracked() const { return state_.size(); }

private:
    struct State {
        std::vector<double> m, v;
        long t = 0;
    };
    AdamWConfig cfg_;
    std::unordered_map<const TensorNode*, State> state_;
};

} // namespace moecast
