#include "moecast/router.hpp"

#include <algorithm>
#include <numeric>

#include "moecast/error.hpp"

namespace moecast {

AnomalyRepository::AnomalyRepository(int capacity) : capacity_(capacity) {
    if (capacity < 1) throw ParameterError("repository capacity must be positive");
}

void AnomalyRepository::archive(std::vector<double> state, int event_id) {
    if (!states_.empty() && state.size() != states_.front().size()) {
        throw DimensionError("archived state size " + std::to_string(state.size()) +
                             " differs from stored " + std::to_string(states_.front().size()));
    }
    if (static_cast<int>(states_.size()) == capacity_) {
        states_.erase(states_.begin());
        event_ids_.erase(event_ids_.begin());
    }
    states_.push_back(std::move(state));
    event_ids_.push_back(event_id);
}

void AnomalyRepository::clear() {
    states_.clear();
    event_ids_.clear();
}

Tensor AnomalyRepository::bank() const {
    const int m = size();
    const int d = static_cast<int>(states_.front().size());
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(m) * d);
    for (const auto& s : states_) flat.insert(flat.end(), s.begin(), s.end());
    return Tensor::from_data({m, d}, std::move(flat));
}

std::vector<int> topk_indices(const std::vector<double>& values, int k) {
    std::vector<int> order(values.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return values[static_cast<std::size_t>(a)] > values[static_cast<std::size_t>(b)];
    });
    order.resize(static_cast<std::size_t>(k));
    std::sort(order.begin(), order.end());
    return order;
}

TemporalRouter::TemporalRouter(int in_dim, int hidden, int base_experts, RouterKind kind,
                               double fusion_temperature, int repo_capacity, Rng& rng)
    : in_(in_dim), hidden_(hidden), kind_(kind), fusion_temp_(fusion_temperature),
      repo_(repo_capacity) {
    if (in_dim < 1 || hidden < 1) throw ParameterError("router dims must be positive");
    if (base_experts < 1) throw ParameterError("router needs at least one head row");
    if (fusion_temperature <= 0.0) throw ParameterError("fusion temperature must be positive");
    phi_ = Dense(in_, hidden_, rng);
    if (kind_ == RouterKind::Gru) {
        wz_ = Dense(2 * hidden_, hidden_, rng);
        wr_ = Dense(2 * hidden_, hidden_, rng);
        wn_ = Dense(2 * hidden_, hidden_, rng);
    }
    fusion_ = Dense(2 * hidden_, 1, rng);
    head_.reserve(static_cast<std::size_t>(base_experts));
    for (int e = 0; e < base_experts; ++e) {
        head_.push_back(Tensor::param_uniform({hidden_}, hidden_, rng));
    }
}

Tensor TemporalRouter::step(const Tensor& x, const Tensor& h_prev) {
    const Tensor phi = phi_.vec(x);
    if (kind_ == RouterKind::Linear) return phi; // stateless: features only
    const Tensor xh = concat_vec({phi, h_prev});
    const Tensor z = sigmoid(wz_.vec(xh));
    const Tensor r = sigmoid(wr_.vec(xh));
    const Tensor n = tanh(wn_.vec(concat_vec({phi, mul(r, h_prev)})));
    return add(mul(affine(z, -1.0, 1.0), n), mul(z, h_prev));
}

Tensor TemporalRouter::fuse(const Tensor& h) {
    if (repo_.size() == 0) return h;
    const int m = repo_.size();
    const Tensor bank = repo_.bank();
    Tensor sims = cosine_vs_bank(h, bank);
    if (fusion_temp_ != 1.0) sims = affine(sims, 1.0 / fusion_temp_, 0.0);
    const Tensor att = reshape(softmax_rows(reshape(sims, {1, m})), {m});
    const Tensor h_ref = reshape(matmul(reshape(att, {1, m}), bank), {hidden_});
    const Tensor alpha = sigmoid(fusion_.vec(concat_vec({h, h_ref})));
    return add(mul(alpha, h), mul(affine(alpha, -1.0, 1.0), h_ref));
}

GateResult TemporalRouter::route(const Tensor& h_fused, int k) {
    if (head_.empty()) throw ContractError("route() with an empty head");
    if (k < 1) throw ParameterError("route() needs k >= 1");
    const int e = head_size();
    int k_eff = k;
    GateResult out;
    if (k > e) {
        k_eff = e;
        out.clamped = true;
        ++clamp_warnings_;
    }
    std::vector<Tensor> logit_parts;
    logit_parts.reserve(head_.size());
    for (const auto& row : head_) logit_parts.push_back(dot(row, h_fused));
    const Tensor logits = concat_vec(logit_parts);
    out.active = topk_indices(logits.data(), k_eff);
    out.gates = masked_softmax(logits, out.active);
    return out;
}

void TemporalRouter::grow_head() { head_.push_back(Tensor::zeros({hidden_}, true)); }

void TemporalRouter::shrink_head(int index) {
    if (index < 0 || index >= head_size()) {
        throw ContractError("shrink_head: index " + std::to_string(index) + " outside head of " +
                            std::to_string(head_size()));
    }
    head_.erase(head_.begin() + index);
}

std::vector<Tensor> TemporalRouter::params() const {
    std::vector<Tensor> out{phi_.w, phi_.b};
    if (kind_ == RouterKind::Gru) {
        for (const auto& d : {wz_, wr_, wn_}) {
            out.push_back(d.w);
            out.push_back(d.b);
        }
    }
    out.push_back(fusion_.w);
    out.push_back(fusion_.b);
    for (const auto& row : head_) out.push_back(row);
    return out;
}

std::vector<Tensor> TemporalRouter::head_params() const { return head_; }

} // namespace moecast
