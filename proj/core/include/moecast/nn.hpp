#pragma once

#include <vector>

#include "moecast/rng.hpp"
#include "moecast/tensor.hpp"

namespace moecast {

// Dense layer. The weight is stored input-major ([in, out]) so row-major
// feature matrices multiply without a transpose op on the tape.
struct Dense {
    Tensor w; // [in, out]
    Tensor b; // [out]

    Dense() = default;
    Dense(int in, int out, Rng& rng)
        : w(Tensor::param_uniform({in, out}, in, rng)),
          b(Tensor::param_uniform({out}, in, rng)) {}

    bool defined() const { return w.defined(); }

    // [N, in] -> [N, out]
    Tensor rows(const Tensor& x) const { return add_rowvec(matmul(x, w), b); }

    // [in] -> [out]
    Tensor vec(const Tensor& v) const {
        const int in = w.dim(0);
        const int out = w.dim(1);
        return add(reshape(matmul(reshape(v, {1, in}), w), {out}), b);
    }

    std::vector<Tensor> params() const { return {w, b}; }
};

// Two dense layers with a relu between them.
struct Mlp {
    Dense l1, l2;

    Mlp() = default;
    Mlp(int in, int hidden, int out, Rng& rng) : l1(in, hidden, rng), l2(hidden, out, rng) {}

    bool defined() const { return l1.defined(); }
    Tensor rows(const Tensor& x) const { return l2.rows(relu(l1.rows(x))); }
    std::vector<Tensor> params() const { return {l1.w, l1.b, l2.w, l2.b}; }
};

} // namespace moecast
