#include "moecast/experts.hpp"

#include <algorithm>

#include "moecast/error.hpp"

namespace moecast {

namespace {

Tensor copy_param(const Tensor& t) {
    return Tensor::from_data(t.shape(), t.data(), true);
}

Dense copy_dense(const Dense& d) {
    Dense out;
    out.w = copy_param(d.w);
    out.b = copy_param(d.b);
    return out;
}

Mlp copy_mlp(const Mlp& m) {
    Mlp out;
    out.l1 = copy_dense(m.l1);
    out.l2 = copy_dense(m.l2);
    return out;
}

} // namespace

const char* to_string(ExpertKind k) {
    switch (k) {
        case ExpertKind::Identity: return "identity";
        case ExpertKind::Trend: return "trend";
        case ExpertKind::Seasonality: return "seasonality";
        case ExpertKind::Fluctuation: return "fluctuation";
    }
    return "identity";
}

ExpertKind expert_kind_from_string(const std::string& s) {
    if (s == "identity") return ExpertKind::Identity;
    if (s == "trend") return ExpertKind::Trend;
    if (s == "seasonality") return ExpertKind::Seasonality;
    if (s == "fluctuation") return ExpertKind::Fluctuation;
    throw ParameterError("unknown expert kind '" + s + "'");
}

std::size_t Expert::param_count() const {
    std::size_t n = 0;
    for (const auto& p : params()) n += p.numel();
    return n;
}

// ---- identity ----

IdentityExpert::IdentityExpert(int d, int id, bool prot, int created_at, Rng& rng)
    : Expert(ExpertKind::Identity, id, prot, created_at), lin(d, d, rng) {}

Tensor IdentityExpert::forward(const Tensor& x) const { return lin.rows(x); }

std::vector<Tensor> IdentityExpert::params() const { return {lin.w, lin.b}; }

std::unique_ptr<Expert> IdentityExpert::clone(int new_id, int created_at) const {
    auto out = std::unique_ptr<IdentityExpert>(
        new IdentityExpert(ExpertKind::Identity, new_id, false, created_at));
    out->lin = copy_dense(lin);
    return out;
}

// ---- trend ----

TrendExpert::TrendExpert(int d, const ExpertHyper& hyper, int id, bool prot, int created_at,
                         Rng& rng)
    : Expert(ExpertKind::Trend, id, prot, created_at), window(hyper.trend_window),
      mlp(d, hyper.mlp_hidden > 0 ? hyper.mlp_hidden : d, d, rng) {
    if (window < 1) throw ParameterError("trend window must be positive");
}

Tensor TrendExpert::forward(const Tensor& x) const {
    return mlp.rows(moving_average(x, window));
}

std::vector<Tensor> TrendExpert::params() const { return mlp.params(); }

std::unique_ptr<Expert> TrendExpert::clone(int new_id, int created_at) const {
    auto out = std::unique_ptr<TrendExpert>(
        new TrendExpert(ExpertKind::Trend, new_id, false, created_at));
    out->window = window;
    out->mlp = copy_mlp(mlp);
    return out;
}

// ---- seasonality ----

SeasonalityExpert::SeasonalityExpert(int d, int id, bool prot, int created_at, Rng& rng)
    : Expert(ExpertKind::Seasonality, id, prot, created_at) {
    if (d % 2 != 0) {
        throw ParameterError("seasonality expert needs an even feature dim, got " +
                             std::to_string(d));
    }
    w_rr = Tensor::param_uniform({1}, 2, rng);
    w_ri = Tensor::param_uniform({1}, 2, rng);
    w_ir = Tensor::param_uniform({1}, 2, rng);
    w_ii = Tensor::param_uniform({1}, 2, rng);
    b_r = Tensor::param_uniform({1}, 2, rng);
    b_i = Tensor::param_uniform({1}, 2, rng);
    out = Dense(d, d, rng);
}

Tensor SeasonalityExpert::forward(const Tensor& x) const {
    const int n = x.dim(0);
    const int d = x.dim(1);
    const Tensor xt = transpose(x); // [D, N]: one spectrum per channel
    auto [re, im] = rfft(xt);
    const Tensor re2 = add(add(mul(re, w_rr), mul(im, w_ri)), b_r);
    const Tensor im2 = add(add(mul(re, w_ir), mul(im, w_ii)), b_i);
    const Tensor z = transpose(irfft(re2, im2, n)); // [N, D]
    const Tensor z1 = slice_cols(z, 0, d / 2);
    const Tensor z2 = slice_cols(z, d / 2, d);
    return out.rows(concat_cols({sin(z1), cos(z2)}));
}

std::vector<Tensor> SeasonalityExpert::params() const {
    return {w_rr, w_ri, w_ir, w_ii, b_r, b_i, out.w, out.b};
}

std::unique_ptr<Expert> SeasonalityExpert::clone(int new_id, int created_at) const {
    auto c = std::unique_ptr<SeasonalityExpert>(
        new SeasonalityExpert(ExpertKind::Seasonality, new_id, false, created_at));
    c->w_rr = copy_param(w_rr);
    c->w_ri = copy_param(w_ri);
    c->w_ir = copy_param(w_ir);
    c->w_ii = copy_param(w_ii);
    c->b_r = copy_param(b_r);
    c->b_i = copy_param(b_i);
    c->out = copy_dense(out);
    return c;
}

// ---- fluctuation ----

FluctuationExpert::FluctuationExpert(int d, const ExpertHyper& hyper, int id, bool prot,
                                     int created_at, Rng& rng)
    : Expert(ExpertKind::Fluctuation, id, prot, created_at) {
    const int k = hyper.conv_kernel;
    if (k < 1) throw ParameterError("fluctuation expert kernel must be positive");
    content_w = Tensor::param_uniform({k, d, d}, k * d, rng);
    content_b = Tensor::param_uniform({d}, k * d, rng);
    gate_w = Tensor::param_uniform({k, d, d}, k * d, rng);
    gate_b = Tensor::param_uniform({d}, k * d, rng);
}

Tensor FluctuationExpert::forward(const Tensor& x) const {
    return mul(causal_conv1d(x, content_w, content_b),
               sigmoid(causal_conv1d(x, gate_w, gate_b)));
}

std::vector<Tensor> FluctuationExpert::params() const {
    return {content_w, content_b, gate_w, gate_b};
}

std::unique_ptr<Expert> FluctuationExpert::clone(int new_id, int created_at) const {
    auto c = std::unique_ptr<FluctuationExpert>(
        new FluctuationExpert(ExpertKind::Fluctuation, new_id, false, created_at));
    c->content_w = copy_param(content_w);
    c->content_b = copy_param(content_b);
    c->gate_w = copy_param(gate_w);
    c->gate_b = copy_param(gate_b);
    return c;
}

std::unique_ptr<Expert> make_expert(ExpertKind kind, int d, const ExpertHyper& hyper, int id,
                                    bool is_protected, int created_at, Rng& rng) {
    switch (kind) {
        case ExpertKind::Identity:
            return std::make_unique<IdentityExpert>(d, id, is_protected, created_at, rng);
        case ExpertKind::Trend:
            return std::make_unique<TrendExpert>(d, hyper, id, is_protected, created_at, rng);
        case ExpertKind::Seasonality:
            return std::make_unique<SeasonalityExpert>(d, id, is_protected, created_at, rng);
        case ExpertKind::Fluctuation:
            return std::make_unique<FluctuationExpert>(d, hyper, id, is_protected, created_at, rng);
    }
    throw ParameterError("unknown expert kind");
}

// ---- relation layer ----

CyclicRelationLayer::CyclicRelationLayer(int v, int cycle_len, Rng& rng)
    : v_(v), cycle_len_(cycle_len) {
    if (v < 1) throw ParameterError("relation layer needs at least one variable");
    if (cycle_len < 1) throw ParameterError("relation cycle length must be positive");
    cycle_.reserve(static_cast<std::size_t>(cycle_len));
    for (int i = 0; i < cycle_len; ++i) cycle_.push_back(Tensor::param_uniform({v, v}, v, rng));
    residual_ = Mlp(v * v, v * v, v * v, rng);
}

Tensor CyclicRelationLayer::relation(const std::vector<Tensor>& h, long origin_t) const {
    std::vector<Tensor> rows;
    rows.reserve(h.size());
    for (const auto& hv : h) {
        rows.push_back(reshape(hv, {1, static_cast<int>(hv.numel())}));
    }
    const Tensor stacked = concat_rows(rows);
    const Tensor r_cur = cosine_rows(stacked);
    const long slot = ((origin_t % cycle_len_) + cycle_len_) % cycle_len_;
    const Tensor& prior = cycle_[static_cast<std::size_t>(slot)];
    const Tensor delta = sub(r_cur, prior);
    const Tensor resid = residual_.rows(reshape(delta, {1, v_ * v_}));
    return add(prior, reshape(resid, {v_, v_}));
}

Tensor CyclicRelationLayer::mixing(const std::vector<Tensor>& h, long origin_t) const {
    return softmax_rows(relation(h, origin_t));
}

std::vector<Tensor> CyclicRelationLayer::apply(const std::vector<Tensor>& h, long origin_t) const {
    if (static_cast<int>(h.size()) != v_) {
        throw DimensionError("relation layer got " + std::to_string(h.size()) +
                             " variables, expected " + std::to_string(v_));
    }
    if (v_ == 1) return h; // nothing to mix
    const int n = h.front().dim(0);
    const int d = h.front().dim(1);
    std::vector<Tensor> rows;
    rows.reserve(h.size());
    for (const auto& hv : h) rows.push_back(reshape(hv, {1, n * d}));
    const Tensor stacked = concat_rows(rows);
    const Tensor mixed = matmul(mixing(h, origin_t), stacked);
    std::vector<Tensor> out;
    out.reserve(h.size());
    for (int i = 0; i < v_; ++i) out.push_back(reshape(slice_rows(mixed, i, i + 1), {n, d}));
    return out;
}

std::vector<Tensor> CyclicRelationLayer::params() const {
    std::vector<Tensor> out = cycle_;
    for (const auto& p : residual_.params()) out.push_back(p);
    return out;
}

Tensor mix_experts(const std::vector<Tensor>& outputs, const Tensor& gate_matrix) {
    if (gate_matrix.ndim() != 2 ||
        outputs.size() != static_cast<std::size_t>(gate_matrix.dim(1))) {
        throw DimensionError("mix_experts: gate matrix " + shape_str(gate_matrix.shape()) +
                             " vs " + std::to_string(outputs.size()) + " experts");
    }
    const int n = gate_matrix.dim(0);
    Tensor acc;
    for (std::size_t e = 0; e < outputs.size(); ++e) {
        if (!outputs[e].defined()) continue;
        const Tensor w = reshape(slice_cols(gate_matrix, static_cast<int>(e), static_cast<int>(e) + 1), {n});
        const Tensor term = mul_rowwise(outputs[e], w);
        acc = acc.defined() ? add(acc, term) : term;
    }
    if (!acc.defined()) throw ContractError("mix_experts: no expert output supplied");
    return acc;
}

// ---- pool ----

ExpertPool::ExpertPool(int d, const std::vector<ExpertKind>& base_roster, const ExpertHyper& hyper,
                       int drift_cap, Rng& rng)
    : d_(d), hyper_(hyper), drift_cap_(drift_cap) {
    if (base_roster.empty()) throw ParameterError("expert pool needs a base roster");
    if (drift_cap < 0) throw ParameterError("drift cap must be non-negative");
    for (ExpertKind k : base_roster) {
        experts_.push_back(make_expert(k, d_, hyper_, next_id_++, true, -1, rng));
    }
}

int ExpertPool::drift_count() const {
    int n = 0;
    for (const auto& e : experts_) {
        if (!e->is_protected()) ++n;
    }
    return n;
}

int ExpertPool::index_of(int expert_id) const {
    for (std::size_t i = 0; i < experts_.size(); ++i) {
        if (experts_[i]->id() == expert_id) return static_cast<int>(i);
    }
    return -1;
}

int ExpertPool::add_expert(ExpertKind kind, int event_id, Rng& rng) {
    const Expert* base = nullptr;
    for (const auto& e : experts_) {
        if (e->is_protected() && e->kind() == kind) {
            base = e.get();
            break;
        }
    }
    const int id = next_id_++;
    if (base) {
        experts_.push_back(base->clone(id, event_id));
    } else {
        experts_.push_back(make_expert(kind, d_, hyper_, id, false, event_id, rng));
    }
    return size() - 1;
}

void ExpertPool::remove(int index) {
    if (index < 0 || index >= size()) {
        throw ContractError("pool remove: index " + std::to_string(index) + " outside pool of " +
                            std::to_string(size()));
    }
    if (experts_[static_cast<std::size_t>(index)]->is_protected()) {
        throw ContractError("pool remove: expert " +
                            std::to_string(experts_[static_cast<std::size_t>(index)]->id()) +
                            " is protected");
    }
    experts_.erase(experts_.begin() + index);
}

std::vector<ExpertInfo> ExpertPool::inventory() const {
    std::vector<ExpertInfo> out;
    out.reserve(experts_.size());
    for (const auto& e : experts_) {
        out.push_back({e->id(), e->kind(), e->is_protected(), e->created_at(), e->param_count()});
    }
    return out;
}

void ExpertPool::restore_expert(ExpertKind kind, int id, bool is_protected, int created_at,
                                Rng& rng) {
    experts_.push_back(make_expert(kind, d_, hyper_, id, is_protected, created_at, rng));
    next_id_ = std::max(next_id_, id + 1);
}

} // namespace moecast
