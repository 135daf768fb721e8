#include "moecast/optimizer.hpp"

#include <cmath>

namespace moecast {

void AdamW::step(const std::vector<Tensor>& params) {
    for (Tensor p : params) {
        if (!p.defined() || !p.requires_grad()) continue;
        auto& st = state_[p.node().get()];
        const std::size_t n = p.numel();
        if (st.m.size() != n) {
            st.m.assign(n, 0.0);
            st.v.assign(n, 0.0);
            st.t = 0;
        }
        ++st.t;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(st.t));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(st.t));
        std::vector<double>& value = p.data();
        const std::vector<double>& grad = p.grad();
        for (std::size_t i = 0; i < n; ++i) {
            const double g = grad[i];
            st.m[i] = cfg_.beta1 * st.m[i] + (1.0 - cfg_.beta1) * g;
            st.v[i] = cfg_.beta2 * st.v[i] + (1.0 - cfg_.beta2) * g * g;
            const double m_hat = st.m[i] / bc1;
            const double v_hat = st.v[i] / bc2;
            value[i] -= cfg_.lr * m_hat / (std::sqrt(v_hat) + cfg_.eps);
            value[i] -= cfg_.lr * cfg_.weight_decay * value[i];
        }
    }
}

void AdamW::zero_grad(const std::vector<Tensor>& params) {
    for (Tensor p : params) {
        if (p.defined()) p.zero_grad();
    }
}

void AdamW::forget(const Tensor& param) {
    if (param.defined()) state_.erase(param.node().get());
}

} // namespace moecast
