#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace moecast {

class Rng;

// One node of the op graph: a dense f64 value plus the bookkeeping needed to
// replay the producing op backwards. Leaf parameters keep their grad buffer
// across backward calls (gradients accumulate additively until zeroed);
// interior grads are scratch and are cleared at the start of each backward.
struct TensorNode {
    std::vector<int> shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false; // leaf parameter
    bool track = false;         // this node or an ancestor requires grad
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(TensorNode&)> backward; // scatters this->grad into parents

    std::size_t numel() const { return value.size(); }
    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    }
};

// Ordered record of the executed ops reachable from one root, parents before
// children. Replaying it in reverse visits each node exactly once.
struct ComputationTape {
    std::vector<TensorNode*> order;
    static ComputationTape build(TensorNode* root);
};

// Value-semantics handle onto a shared node.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
    static Tensor full(std::vector<int> shape, double v, bool requires_grad = false);
    static Tensor from_data(std::vector<int> shape, std::vector<double> data,
                            bool requires_grad = false);
    // Parameter init: uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)), requires_grad on.
    static Tensor param_uniform(std::vector<int> shape, int fan_in, Rng& rng);

    bool defined() const { return node_ != nullptr; }
    const std::vector<int>& shape() const { return node_->shape; }
    int dim(int i) const { return node_->shape[static_cast<std::size_t>(i)]; }
    std::size_t ndim() const { return node_->shape.size(); }
    std::size_t numel() const { return node_->numel(); }

    std::vector<double>& data() { return node_->value; }
    const std::vector<double>& data() const { return node_->value; }
    // Grad buffer (allocated as zeros on first access).
    std::vector<double>& grad() { node_->ensure_grad(); return node_->grad; }
    const std::vector<double>& grad() const { node_->ensure_grad(); return node_->grad; }

    double item() const;
    bool requires_grad() const { return node_->requires_grad; }

    void zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }
    // Reverse-mode pass from this scalar. Throws ContractError on non-scalars.
    void backward() const;

    const std::shared_ptr<TensorNode>& node() const { return node_; }

private:
    std::shared_ptr<TensorNode> node_;
};

std::string shape_str(const std::vector<int>& shape);

// ---- elementwise (same shape, or either operand a 1-element scalar) ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
// m*x + c with plain double coefficients.
Tensor affine(const Tensor& x, double m, double c);

// ---- unary ----
Tensor exp(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor sin(const Tensor& x);
Tensor cos(const Tensor& x);
Tensor relu(const Tensor& x);

// ---- linear algebra / structure ----
Tensor matmul(const Tensor& a, const Tensor& b); // [m,k]x[k,n] -> [m,n]
Tensor transpose(const Tensor& a);               // 2-D
Tensor reshape(const Tensor& a, std::vector<int> shape);
Tensor dot(const Tensor& a, const Tensor& b); // 1-D, -> scalar
Tensor concat_vec(const std::vector<Tensor>& parts);            // 1-D concat
Tensor concat_rows(const std::vector<Tensor>& parts);           // 2-D, same cols
Tensor concat_cols(const std::vector<Tensor>& parts);           // 2-D, same rows
Tensor slice_rows(const Tensor& a, int r0, int r1);             // rows [r0,r1)
Tensor slice_cols(const Tensor& a, int c0, int c1);             // cols [c0,c1)
Tensor add_rowvec(const Tensor& x, const Tensor& b);            // [N,D]+[D] per row
Tensor mul_rowwise(const Tensor& x, const Tensor& w);           // [N,D]*[N] per row

// ---- reductions / softmax ----
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor softmax_rows(const Tensor& x); // 2-D, softmax over each row
// Softmax over the given index subset of a 1-D logit vector; all other
// entries of the result are exactly zero (and receive zero gradient).
Tensor masked_softmax(const Tensor& logits, const std::vector<int>& active);

// ---- signal ops ----
// Forward real DFT along the last axis of a 2-D [R,N] tensor (unnormalized),
// returning (real, imag) halves of shape [R, floor(N/2)+1]. 1-D input is
// treated as [1,N] and returns 1-D bins.
std::pair<Tensor, Tensor> rfft(const Tensor& x);
// Inverse of rfft (1/n normalized). Gradient weights interior bins twice,
// matching the conjugate-symmetric fold of a real signal's spectrum.
Tensor irfft(const Tensor& re, const Tensor& im, int n);
// Same-length mean pooling along the rows (patch axis) of [N,D] with edge
// replication; for even windows the extra tap leans to the past side.
Tensor moving_average(const Tensor& x, int window);
// Causal convolution along rows of [N,D_in] with kernel [K,D_in,D_out] and
// bias [D_out]; tap k multiplies the row at t-k, missing history reads zero.
Tensor causal_conv1d(const Tensor& x, const Tensor& kernel, const Tensor& bias);
// Pairwise cosine similarity of the rows of [V,F] -> [V,V]; rows with zero
// norm produce zero similarity (and zero gradient).
Tensor cosine_rows(const Tensor& x);
// Cosine similarity of a 1-D query against each row of a (constant) bank.
Tensor cosine_vs_bank(const Tensor& h, const Tensor& bank);

} // namespace moecast
