#include "moecast/tensor.hpp"

#include <cmath>
#include <unordered_set>

#include "moecast/error.hpp"
#include "moecast/rng.hpp"

namespace moecast {

namespace {

std::size_t shape_numel(const std::vector<int>& shape) {
    if (shape.empty()) throw DimensionError("tensor shape must have at least one axis");
    std::size_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw DimensionError("tensor axis must be positive, got " + shape_str(shape));
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

} // namespace

std::string shape_str(const std::vector<int>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
    return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(std::vector<int> shape, double v, bool requires_grad) {
    auto node = std::make_shared<TensorNode>();
    node->value.assign(shape_numel(shape), v);
    node->shape = std::move(shape);
    node->requires_grad = requires_grad;
    node->track = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<double> data, bool requires_grad) {
    if (shape_numel(shape) != data.size()) {
        throw DimensionError("tensor data size " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
    }
    auto node = std::make_shared<TensorNode>();
    node->shape = std::move(shape);
    node->value = std::move(data);
    node->requires_grad = requires_grad;
    node->track = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::param_uniform(std::vector<int> shape, int fan_in, Rng& rng) {
    if (fan_in <= 0) throw ParameterError("param init fan_in must be positive");
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Tensor t = zeros(std::move(shape), true);
    for (double& v : t.data()) v = rng.uniform(-bound, bound);
    return t;
}

double Tensor::item() const {
    if (numel() != 1) {
        throw ContractError("item() needs a 1-element tensor, got " + shape_str(shape()));
    }
    return node_->value[0];
}

ComputationTape ComputationTape::build(TensorNode* root) {
    ComputationTape tape;
    if (!root->track) return tape;
    std::unordered_set<TensorNode*> visited;
    std::vector<std::pair<TensorNode*, std::size_t>> stack;
    stack.emplace_back(root, 0);
    visited.insert(root);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            TensorNode* p = node->parents[next].get();
            ++next;
            if (p->track && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            tape.order.push_back(node);
            stack.pop_back();
        }
    }
    return tape;
}

void Tensor::backward() const {
    if (numel() != 1) {
        throw ContractError("backward() needs a scalar loss, got " + shape_str(shape()));
    }
    ComputationTape tape = ComputationTape::build(node_.get());
    if (tape.order.empty()) return; // no tracked ancestry: nothing to do
    for (TensorNode* n : tape.order) {
        // Interior grads are per-pass scratch; leaf grads accumulate.
        if (n->requires_grad) {
            n->ensure_grad();
        } else {
            n->grad.assign(n->value.size(), 0.0);
        }
    }
    node_->grad[0] += 1.0;
    for (auto it = tape.order.rbegin(); it != tape.order.rend(); ++it) {
        if ((*it)->backward) (*it)->backward(**it);
    }
}

} // namespace moecast
