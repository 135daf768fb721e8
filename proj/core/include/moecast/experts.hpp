#pragma once

#include <memory>
#include <string>
#include <vector>

#include "moecast/nn.hpp"
#include "moecast/tensor.hpp"

namespace moecast {

enum class ExpertKind { Identity, Trend, Seasonality, Fluctuation };

const char* to_string(ExpertKind k);
ExpertKind expert_kind_from_string(const std::string& s);

struct ExpertHyper {
    int trend_window = 3; // moving-average width
    int conv_kernel = 3;  // causal-conv taps
    int mlp_hidden = 0;   // 0: same as the feature dim
};

// One expert: [N, D] patch features in, [N, D] out. Parameter order within
// params() is fixed per kind (checkpoints rely on it).
class Expert {
public:
    Expert(ExpertKind kind, int id, bool is_protected, int created_at)
        : kind_(kind), id_(id), protected_(is_protected), created_at_(created_at) {}
    virtual ~Expert() = default;

    virtual Tensor forward(const Tensor& x) const = 0;
    virtual std::vector<Tensor> params() const = 0;
    virtual std::unique_ptr<Expert> clone(int new_id, int created_at) const = 0;

    ExpertKind kind() const { return kind_; }
    int id() const { return id_; }
    bool is_protected() const { return protected_; }
    int created_at() const { return created_at_; } // drift event id, -1 for base
    std::size_t param_count() const;

private:
    ExpertKind kind_;
    int id_;
    bool protected_;
    int created_at_;
};

std::unique_ptr<Expert> make_expert(ExpertKind kind, int d, const ExpertHyper& hyper, int id,
                                    bool is_protected, int created_at, Rng& rng);

class IdentityExpert final : public Expert {
public:
    IdentityExpert(int d, int id, bool prot, int created_at, Rng& rng);
    Tensor forward(const Tensor& x) const override;
    std::vector<Tensor> params() const override;
    std::unique_ptr<Expert> clone(int new_id, int created_at) const override;
    Dense lin;

private:
    IdentityExpert(ExpertKind k, int id, bool prot, int created_at) : Expert(k, id, prot, created_at) {}
};

class TrendExpert final : public Expert {
public:
    TrendExpert(int d, const ExpertHyper& hyper, int id, bool prot, int created_at, Rng& rng);
    Tensor forward(const Tensor& x) const override;
    std::vector<Tensor> params() const override;
    std::unique_ptr<Expert> clone(int new_id, int created_at) const override;
    int window;
    Mlp mlp;

private:
    TrendExpert(ExpertKind k, int id, bool prot, int created_at) : Expert(k, id, prot, created_at) {}
};

// Spectrum path: rfft along the patch axis per channel, a shared 2x2 linear
// map on (real, imag) per bin, irfft back, then Linear(concat[sin(Z1), cos(Z2)])
// where Z splits into channel halves. Requires an even feature dim.
class SeasonalityExpert final : public Expert {
public:
    SeasonalityExpert(int d, int id, bool prot, int created_at, Rng& rng);
    Tensor forward(const Tensor& x) const override;
    std::vector<Tensor> params() const override;
    std::unique_ptr<Expert> clone(int new_id, int created_at) const override;
    // params order: w_rr, w_ri, w_ir, w_ii, b_r, b_i, out.w, out.b
    Tensor w_rr, w_ri, w_ir, w_ii, b_r, b_i;
    Dense out;

private:
    SeasonalityExpert(ExpertKind k, int id, bool prot, int created_at) : Expert(k, id, prot, created_at) {}
};

// Gated convolution: (x * W_content) elementwise-scaled by sigmoid(x * W_gate).
class FluctuationExpert final : public Expert {
public:
    FluctuationExpert(int d, const ExpertHyper& hyper, int id, bool prot, int created_at, Rng& rng);
    Tensor forward(const Tensor& x) const override;
    std::vector<Tensor> params() const override;
    std::unique_ptr<Expert> clone(int new_id, int created_at) const override;
    Tensor content_w, content_b, gate_w, gate_b; // kernels [K,D,D], biases [D]

private:
    FluctuationExpert(ExpertKind k, int id, bool prot, int created_at) : Expert(k, id, prot, created_at) {}
};

// Cross-variable mixing with a learned per-cycle-slot prior: the final
// relation is prior[slot] + MLP(cosine(H) - prior[slot]), row-softmaxed into
// a stochastic mixing matrix. Degenerates to identity for a single variable.
class CyclicRelationLayer {
public:
    CyclicRelationLayer(int v, int cycle_len, Rng& rng);

    std::vector<Tensor> apply(const std::vector<Tensor>& h, long origin_t) const;
    // The row-stochastic mixing matrix for one slot (exposed for inspection).
    Tensor mixing(const std::vector<Tensor>& h, long origin_t) const;
    std::vector<Tensor> params() const;
    int variables() const { return v_; }
    int cycle_len() const { return cycle_len_; }

private:
    Tensor relation(const std::vector<Tensor>& h, long origin_t) const;
    int v_;
    int cycle_len_;
    std::vector<Tensor> cycle_; // cycle_len entries of [V, V]
    Mlp residual_;              // V^2 -> V^2 -> V^2
};

// Weighted sum of expert outputs. outputs[e] may be undefined when expert e is
// inactive at every patch; gate_matrix is [N, E] with zeros off the kept sets.
Tensor mix_experts(const std::vector<Tensor>& outputs, const Tensor& gate_matrix);

struct ExpertInfo {
    int id = 0;
    ExpertKind kind = ExpertKind::Identity;
    bool is_protected = false;
    int created_at = -1;
    std::size_t param_count = 0;
};

// Base experts (protected) plus up to drift_cap dynamically added ones.
class ExpertPool {
public:
    ExpertPool(int d, const std::vector<ExpertKind>& base_roster, const ExpertHyper& hyper,
               int drift_cap, Rng& rng);

    int size() const { return static_cast<int>(experts_.size()); }
    int drift_count() const;
    int drift_cap() const { return drift_cap_; }
    bool at_cap() const { return drift_count() >= drift_cap_; }
    Expert& at(int i) { return *experts_[static_cast<std::size_t>(i)]; }
    const Expert& at(int i) const { return *experts_[static_cast<std::size_t>(i)]; }
    int index_of(int expert_id) const; // -1 when absent

    // Clone from the first base expert of the same kind (fresh init when the
    // roster lacks the kind). Returns the new expert's pool index. The caller
    // enforces the cap and grows the router head in the same mutation.
    int add_expert(ExpertKind kind, int event_id, Rng& rng);
    // Remove one unprotected expert by pool index.
    void remove(int index);

    std::vector<ExpertInfo> inventory() const;
    const ExpertHyper& hyper() const { return hyper_; }
    int feature_dim() const { return d_; }
    int next_expert_id() const { return next_id_; }
    void set_next_expert_id(int id) { next_id_ = id; }
    // Checkpoint reconstruction: append an expert with explicit identity.
    void restore_expert(ExpertKind kind, int id, bool is_protected, int created_at, Rng& rng);

private:
    int d_;
    ExpertHyper hyper_;
    int drift_cap_;
    int next_id_ = 0;
    std::vector<std::unique_ptr<Expert>> experts_;
};

} // namespace moecast
