#include <cmath>
#include <cstddef>
#include <numbers>

#include "moecast/error.hpp"
#include "moecast/fft.hpp"
#include "moecast/tensor.hpp"

namespace moecast {

namespace {

using NodePtr = std::shared_ptr<TensorNode>;

constexpr double kPi = std::numbers::pi;

NodePtr make_node(std::vector<int> shape, std::size_t numel, std::vector<NodePtr> parents) {
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->value.resize(numel);
    n->parents = std::move(parents);
    for (const auto& p : n->parents) {
        if (p->track) { n->track = true; break; }
    }
    return n;
}

void require_2d(const Tensor& t, const char* who) {
    if (t.ndim() != 2) {
        throw DimensionError(std::string(who) + " needs a 2-D tensor, got " + shape_str(t.shape()));
    }
}

void require_1d(const Tensor& t, const char* who) {
    if (t.ndim() != 1) {
        throw DimensionError(std::string(who) + " needs a 1-D tensor, got " + shape_str(t.shape()));
    }
}

enum class Bin { Add, Sub, Mul, Div };

Tensor binary_op(const Tensor& a, const Tensor& b, Bin op, const char* who) {
    const NodePtr& an = a.node();
    const NodePtr& bn = b.node();
    const bool as = an->numel() == 1;
    const bool bs = bn->numel() == 1;
    if (!as && !bs && an->shape != bn->shape) {
        throw DimensionError(std::string(who) + ": shapes " + shape_str(an->shape) +
                             " and " + shape_str(bn->shape) + " differ");
    }
    const std::vector<int>& out_shape = !as ? an->shape : (!bs ? bn->shape : an->shape);
    auto node = make_node(out_shape, !as ? an->numel() : bn->numel(), {an, bn});
    for (std::size_t i = 0; i < node->numel(); ++i) {
        const double va = an->value[as ? 0 : i];
        const double vb = bn->value[bs ? 0 : i];
        switch (op) {
            case Bin::Add: node->value[i] = va + vb; break;
            case Bin::Sub: node->value[i] = va - vb; break;
            case Bin::Mul: node->value[i] = va * vb; break;
            case Bin::Div: node->value[i] = va / vb; break;
        }
    }
    node->backward = [op, as, bs](TensorNode& self) {
        TensorNode& A = *self.parents[0];
        TensorNode& B = *self.parents[1];
        for (std::size_t i = 0; i < self.numel(); ++i) {
            const double g = self.grad[i];
            const double va = A.value[as ? 0 : i];
            const double vb = B.value[bs ? 0 : i];
            if (A.track) {
                double da = 0.0;
                switch (op) {
                    case Bin::Add: case Bin::Sub: da = g; break;
                    case Bin::Mul: da = g * vb; break;
                    case Bin::Div: da = g / vb; break;
                }
                A.grad[as ? 0 : i] += da;
            }
            if (B.track) {
                double db = 0.0;
                switch (op) {
                    case Bin::Add: db = g; break;
                    case Bin::Sub: db = -g; break;
                    case Bin::Mul: db = g * va; break;
                    case Bin::Div: db = -g * va / (vb * vb); break;
                }
                B.grad[bs ? 0 : i] += db;
            }
        }
    };
    return Tensor(node);
}

enum class Un { Exp, Sqrt, Sigmoid, Tanh, Sin, Cos, Relu };

Tensor unary_op(const Tensor& x, Un op) {
    const NodePtr& xn = x.node();
    auto node = make_node(xn->shape, xn->numel(), {xn});
    for (std::size_t i = 0; i < node->numel(); ++i) {
        const double v = xn->value[i];
        switch (op) {
            case Un::Exp: node->value[i] = std::exp(v); break;
            case Un::Sqrt: node->value[i] = std::sqrt(v); break;
            case Un::Sigmoid: node->value[i] = 1.0 / (1.0 + std::exp(-v)); break;
            case Un::Tanh: node->value[i] = std::tanh(v); break;
            case Un::Sin: node->value[i] = std::sin(v); break;
            case Un::Cos: node->value[i] = std::cos(v); break;
            case Un::Relu: node->value[i] = v > 0.0 ? v : 0.0; break;
        }
    }
    node->backward = [op](TensorNode& self) {
        TensorNode& X = *self.parents[0];
        if (!X.track) return;
        for (std::size_t i = 0; i < self.numel(); ++i) {
            const double g = self.grad[i];
            const double v = X.value[i];
            const double y = self.value[i];
            double d = 0.0;
            switch (op) {
                case Un::Exp: d = y; break;
                case Un::Sqrt: d = 0.5 / y; break;
                case Un::Sigmoid: d = y * (1.0 - y); break;
                case Un::Tanh: d = 1.0 - y * y; break;
                case Un::Sin: d = std::cos(v); break;
                case Un::Cos: d = -std::sin(v); break;
                case Un::Relu: d = v > 0.0 ? 1.0 : 0.0; break;
            }
            X.grad[i] += g * d;
        }
    };
    return Tensor(node);
}

Tensor concat_impl(const std::vector<Tensor>& parts, int axis, const char* who) {
    if (parts.empty()) throw DimensionError(std::string(who) + ": nothing to concatenate");
    std::vector<NodePtr> parents;
    parents.reserve(parts.size());
    for (const auto& p : parts) parents.push_back(p.node());

    if (axis == -1) { // 1-D concat
        std::size_t total = 0;
        for (const auto& p : parts) {
            require_1d(p, who);
            total += p.numel();
        }
        auto node = make_node({static_cast<int>(total)}, total, std::move(parents));
        std::size_t off = 0;
        for (const auto& p : parts) {
            for (std::size_t i = 0; i < p.numel(); ++i) node->value[off + i] = p.data()[i];
            off += p.numel();
        }
        node->backward = [](TensorNode& self) {
            std::size_t off = 0;
            for (auto& pp : self.parents) {
                if (pp->track) {
                    for (std::size_t i = 0; i < pp->numel(); ++i) pp->grad[i] += self.grad[off + i];
                }
                off += pp->numel();
            }
        };
        return Tensor(node);
    }

    // 2-D concat along rows (axis 0) or cols (axis 1)
    for (const auto& p : parts) require_2d(p, who);
    const int fixed = axis == 0 ? parts[0].dim(1) : parts[0].dim(0);
    int var_total = 0;
    for (const auto& p : parts) {
        const int f = axis == 0 ? p.dim(1) : p.dim(0);
        if (f != fixed) {
            throw DimensionError(std::string(who) + ": mismatched shapes " +
                                 shape_str(parts[0].shape()) + " and " + shape_str(p.shape()));
        }
        var_total += axis == 0 ? p.dim(0) : p.dim(1);
    }
    const std::vector<int> out_shape = axis == 0 ? std::vector<int>{var_total, fixed}
                                                 : std::vector<int>{fixed, var_total};
    auto node = make_node(out_shape, static_cast<std::size_t>(var_total) * fixed, std::move(parents));
    if (axis == 0) {
        std::size_t off = 0;
        for (const auto& p : parts) {
            for (std::size_t i = 0; i < p.numel(); ++i) node->value[off + i] = p.data()[i];
            off += p.numel();
        }
        node->backward = [](TensorNode& self) {
            std::size_t off = 0;
            for (auto& pp : self.parents) {
                if (pp->track) {
                    for (std::size_t i = 0; i < pp->numel(); ++i) pp->grad[i] += self.grad[off + i];
                }
                off += pp->numel();
            }
        };
    } else {
        const int rows = fixed;
        const int cols = var_total;
        int coff = 0;
        for (const auto& p : parts) {
            const int pc = p.dim(1);
            for (int r = 0; r < rows; ++r) {
                for (int c = 0; c < pc; ++c) {
                    node->value[static_cast<std::size_t>(r) * cols + coff + c] =
                        p.data()[static_cast<std::size_t>(r) * pc + c];
                }
            }
            coff += pc;
        }
        node->backward = [rows, cols](TensorNode& self) {
            int coff = 0;
            for (auto& pp : self.parents) {
                const int pc = pp->shape[1];
                if (pp->track) {
                    for (int r = 0; r < rows; ++r) {
                        for (int c = 0; c < pc; ++c) {
                            pp->grad[static_cast<std::size_t>(r) * pc + c] +=
                                self.grad[static_cast<std::size_t>(r) * cols + coff + c];
                        }
                    }
                }
                coff += pc;
            }
        };
    }
    return Tensor(node);
}

// Exact-integer phase reduction keeps the DFT adjoint accurate for long rows.
inline double dft_angle(std::size_t f, std::size_t t, std::size_t n) {
    return 2.0 * kPi * static_cast<double>((f * t) % n) / static_cast<double>(n);
}

} // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary_op(a, b, Bin::Add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_op(a, b, Bin::Sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_op(a, b, Bin::Mul, "mul"); }
Tensor div(const Tensor& a, const Tensor& b) { return binary_op(a, b, Bin::Div, "div"); }

Tensor affine(const Tensor& x, double m, double c) {
    const NodePtr& xn = x.node();
    auto node = make_node(xn->shape, xn->numel(), {xn});
    for (std::size_t i = 0; i < node->numel(); ++i) node->value[i] = m * xn->value[i] + c;
    node->backward = [m](TensorNode& self) {
        TensorNode& X = *self.parents[0];
        if (!X.track) return;
        for (std::size_t i = 0; i < self.numel(); ++i) X.grad[i] += m * self.grad[i];
    };
    return Tensor(node);
}

Tensor exp(const Tensor& x) { return unary_op(x, Un::Exp); }
Tensor sqrt(const Tensor& x) { return unary_op(x, Un::Sqrt); }
Tensor sigmoid(const Tensor& x) { return unary_op(x, Un::Sigmoid); }
Tensor tanh(const Tensor& x) { return unary_op(x, Un::Tanh); }
Tensor sin(const Tensor& x) { return unary_op(x, Un::Sin); }
Tensor cos(const Tensor& x) { return unary_op(x, Un::Cos); }
Tensor relu(const Tensor& x) { return unary_op(x, Un::Relu); }

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_2d(a, "matmul");
    require_2d(b, "matmul");
    if (a.dim(1) != b.dim(0)) {
        throw DimensionError("matmul: inner axes of " + shape_str(a.shape()) + " and " +
                             shape_str(b.shape()) + " do not match");
    }
    const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    auto node = make_node({m, n}, static_cast<std::size_t>(m) * n, {a.node(), b.node()});
    const auto& av = a.data();
    const auto& bv = b.data();
    for (int i = 0; i < m; ++i) {
        for (int l = 0; l < k; ++l) {
            const double ail = av[static_cast<std::size_t>(i) * k + l];
            if (ail == 0.0) continue;
            for (int j = 0; j < n; ++j) {
                node->value[static_cast<std::size_t>(i) * n + j] +=
                    ail * bv[static_cast<std::size_t>(l) * n + j];
            }
        }
    }
    node->backward = [m, k, n](TensorNode& self) {
        TensorNode& A = *self.parents[0];
        TensorNode& B = *self.parents[1];
        if (A.track) {
            for (int i = 0; i < m; ++i) {
                for (int l = 0; l < k; ++l) {
                    double acc = 0.0;
                    for (int j = 0; j < n; ++j) {
                        acc += self.grad[static_cast<std::size_t>(i) * n + j] *
                               B.value[static_cast<std::size_t>(l) * n + j];
                    }
                    A.grad[static_cast<std::size_t>(i) * k + l] += acc;
                }
            }
        }
        if (B.track) {
            for (int l = 0; l < k; ++l) {
                for (int j = 0; j < n; ++j) {
                    double acc = 0.0;
                    for (int i = 0; i < m; ++i) {
                        acc += A.value[static_cast<std::size_t>(i) * k + l] *
                               self.grad[static_cast<std::size_t>(i) * n + j];
                    }
                    B.grad[static_cast<std::size_t>(l) * n + j] += acc;
                }
            }
        }
    };
    return Tensor(node);
}

Tensor transpose(const Tensor& a) {
    require_2d(a, "transpose");
    const int r = a.dim(0), c = a.dim(1);
    auto node = make_node({c, r}, a.numel(), {a.node()});
    for (int i = 0; i < r; ++i) {
        for (int j = 0; j < c; ++j) {
            node->value[static_cast<std::size_t>(j) * r + i] = a.data()[static_cast<std::size_t>(i) * c + j];
        }
    }
    node->backward = [r, c](TensorNode& self) {
        TensorNode& A = *self.parents[0];
        if (!A.track) return;
        for (int i = 0; i < r; ++i) {
            for (int j = 0; j < c; ++j) {
                A.grad[static_cast<std::size_t>(i) * c + j] += self.grad[static_cast<std::size_t>(j) * r + i];
            }
        }
    };
    return Tensor(node);
}

Tensor reshape(const Tensor& a, std::vector<int> shape) {
    std::size_t n = 1;
    for (int d : shape) n *= d <= 0 ? 0 : static_cast<std::size_t>(d);
    if (n != a.numel()) {
        throw DimensionError("reshape: " + shape_str(a.shape()) + " has " +
                             std::to_string(a.numel()) + " elements, target " + shape_str(shape));
    }
    auto node = make_node(std::move(shape), a.numel(), {a.node()});
    node->value = a.data();
    node->backward = [](TensorNode& self) {
        TensorNode& A = *self.parents[0];
        if (!A.track) return;
        for (std::size_t i = 0; i < self.numel(); ++i) A.grad[i] += self.grad[i];
    };
    return Tensor(node);
}

Tensor dot(const Tensor& a, const Tensor& b) {
    require_1d(a, "dot");
    require_1d(b, "dot");
    if (a.numel() != b.numel()) {
        throw DimensionError("dot: lengths " + shape_str(a.shape()) + " and " +
                             shape_str(b.shape()) + " differ");
    }
    auto node = make_node({1}, 1, {a.node(), b.node()});
    double acc = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) acc += a.data()[i] * b.data()[i];
    node->value[0] = acc;
    node->backward = [](TensorNode& self) {
        TensorNode& A = *self.parents[0];
        TensorNode& B = *self.parents[1];
        const double g = self.grad[0];
        for (std::size_t i = 0; i < A.numel(); ++i) {
            if (A.track) A.grad[i] += g * B.value[i];
            if (B.track) B.grad[i] += g * A.value[i];
        }
    };
    return Tensor(node);
}

Tensor concat_vec(const std::vector<Tensor>& parts) { return concat_impl(parts, -1, "concat_vec"); }
Tensor concat_rows(const std::vector<Tensor>& parts) { return concat_impl(parts, 0, "concat_rows"); }
Tensor concat_cols(const std::vector<Tensor>& parts) { return concat_impl(parts, 1, "concat_cols"); }

Tensor slice_rows(const Tensor& a, int r0, int r1) {
    require_2d(a, "slice_rows");
    if (r0 < 0 || r1 > a.dim(0) || r0 >= r1) {
        throw DimensionError("slice_rows: range [" + std::to_string(r0) + "," + std::to_string(r1) +
                             ") invalid for " + shape_str(a.shape()));
    }
    const int c = a.dim(1);
    auto node = make_node({r1 - r0, c}, static_cast<std::size_t>(r1 - r0) * c, {a.node()});
    for (std::size_t i = 0; i < node->numel(); ++i) {
        node->value[i] = a.data()[static_cast<std::size_t>(r0) * c + i];
    }
    node->backward = [r0, c](TensorNode& self) {
        TensorNode& A = *self.parents[0];
        if (!A.track) return;
        for (std::size_t i = 0; i < self.numel(); ++i) {
            A.grad[static_cast<std::size_t>(r0) * c + i] += self.grad[i];
        }
    };
    return Tensor(node);
}

Tensor slice_cols(const Tensor& a, int c0, int c1) {
    require_2d(a, "slice_cols");
    if (c0 < 0 || c1 > a.dim(1) || c0 >= c1) {
        throw DimensionError("slice_cols: range [" + std::to_string(c0) + "," + std::to_string(c1) +
                             ") invalid for " + shape_str(a.shape()));
    }
    const int r = a.dim(0), c = a.dim(1), w = c1 - c0;
    auto node = make_node({r, w}, static_cast<std::size_t>(r) * w, {a.node()});
    for (int i = 0; i < r; ++i) {
        for (int j = 0; j < w; ++j) {
            node->value[static_cast<std::size_t>(i) * w + j] =
                a.data()[static_cast<std::size_t>(i) * c + c0 + j];
        }
    }
    node->backward = [r, c, c0, w](TensorNode& self) {
        TensorNode& A = *self.parents[0];
        if (!A.track) return;
        for (int i = 0; i < r; ++i) {
            for (int j = 0; j < w; ++j) {
                A.grad[static_cast<std::size_t>(i) * c + c0 + j] +=
                    self.grad[static_cast<std::size_t>(i) * w + j];
            }
        }
    };
    return Tensor(node);
}

Tensor add_rowvec(const Tensor& x, const Tensor& b) {
    require_2d(x, "add_rowvec");
    if (b.numel() != static_cast<std::size_t>(x.dim(1))) {
        throw DimensionError("add_rowvec: bias " + shape_str(b.shape()) + " does not match cols of " +
                             shape_str(x.shape()));
    }
    const int n = x.dim(0), d = x.dim(1);
    auto node = make_node(x.shape(), x.numel(), {x.node(), b.node()});
    for (int t = 0; t < n; ++t) {
        for (int j = 0; j < d; ++j) {
            node->value[static_cast<std::size_t>(t) * d + j] =
                x.data()[static_cast<std::size_t>(t) * d + j] + b.data()[static_cast<std::size_t>(j)];
        }
    }
    node->backward = [n, d](TensorNode& self) {
        TensorNode& X = *self.parents[0];
        TensorNode& B = *self.parents[1];
        for (int t = 0; t < n; ++t) {
            for (int j = 0; j < d; ++j) {
                const double g = self.grad[static_cast<std::size_t>(t) * d + j];
                if (X.track) X.grad[static_cast<std::size_t>(t) * d + j] += g;
                if (B.track) B.grad[static_cast<std::size_t>(j)] += g;
            }
        }
    };
    return Tensor(node);
}

Tensor mul_rowwise(const Tensor& x, const Tensor& w) {
    require_2d(x, "mul_rowwise");
    if (w.numel() != static_cast<std::size_t>(x.dim(0))) {
        throw DimensionError("mul_rowwise: weights " + shape_str(w.shape()) +
                             " do not match rows of " + shape_str(x.shape()));
    }
    const int n = x.dim(0), d = x.dim(1);
    auto node = make_node(x.shape(), x.numel(), {x.node(), w.node()});
    for (int t = 0; t < n; ++t) {
        const double wt = w.data()[static_cast<std::size_t>(t)];
        for (int j = 0; j < d; ++j) {
            node->value[static_cast<std::size_t>(t) * d + j] =
                x.data()[static_cast<std::size_t>(t) * d + j] * wt;
        }
    }
    node->backward = [n, d](TensorNode& self) {
        TensorNode& X = *self.parents[0];
        TensorNode& W = *self.parents[1];
        for (int t = 0; t < n; ++t) {
            const double wt = W.value[static_cast<std::size_t>(t)];
            double dw = 0.0;
            for (int j = 0; j < d; ++j) {
                const std::size_t idx = static_cast<std::size_t>(t) * d + j;
                const double g = self.grad[idx];
                if (X.track) X.grad[idx] += g * wt;
                dw += g * X.value[idx];
            }
            if (W.track) W.grad[static_cast<std::size_t>(t)] += dw;
        }
    };
    return Tensor(node);
}

Tensor sum(const Tensor& x) {
    auto node = make_node({1}, 1, {x.node()});
    double acc = 0.0;
    for (double v : x.data()) acc += v;
    node->value[0] = acc;
    node->backward = [](TensorNode& self) {
        TensorNode& X = *self.parents[0];
        if (!X.track) return;
        for (std::size_t i = 0; i < X.numel(); ++i) X.grad[i] += self.grad[0];
    };
    return Tensor(node);
}

Tensor mean(const Tensor& x) {
    auto node = make_node({1}, 1, {x.node()});
    double acc = 0.0;
    for (double v : x.data()) acc += v;
    const double inv = 1.0 / static_cast<double>(x.numel());
    node->value[0] = acc * inv;
    node->backward = [inv](TensorNode& self) {
        TensorNode& X = *self.parents[0];
        if (!X.track) return;
        for (std::size_t i = 0; i < X.numel(); ++i) X.grad[i] += self.grad[0] * inv;
    };
    return Tensor(node);
}

Tensor softmax_rows(const Tensor& x) {
    require_2d(x, "softmax_rows");
    const int r = x.dim(0), c = x.dim(1);
    auto node = make_node(x.shape(), x.numel(), {x.node()});
    for (int i = 0; i < r; ++i) {
        const std::size_t off = static_cast<std::size_t>(i) * c;
        double mx = x.data()[off];
        for (int j = 1; j < c; ++j) mx = std::max(mx, x.data()[off + j]);
        double z = 0.0;
        for (int j = 0; j < c; ++j) {
            node->value[off + j] = std::exp(x.data()[off + j] - mx);
            z += node->value[off + j];
        }
        for (int j = 0; j < c; ++j) node->value[off + j] /= z;
    }
    node->backward = [r, c](TensorNode& self) {
        TensorNode& X = *self.parents[0];
        if (!X.track) return;
        for (int i = 0; i < r; ++i) {
            const std::size_t off = static_cast<std::size_t>(i) * c;
            double s = 0.0;
            for (int j = 0; j < c; ++j) s += self.grad[off + j] * self.value[off + j];
            for (int j = 0; j < c; ++j) {
                X.grad[off + j] += self.value[off + j] * (self.grad[off + j] - s);
            }
        }
    };
    return Tensor(node);
}

Tensor masked_softmax(const Tensor& logits, const std::vector<int>& active) {
    require_1d(logits, "masked_softmax");
    if (active.empty()) throw ContractError("masked_softmax: active set is empty");
    const int n = logits.dim(0);
    for (int idx : active) {
        if (idx < 0 || idx >= n) {
            throw DimensionError("masked_softmax: index " + std::to_string(idx) +
                                 " out of range for " + shape_str(logits.shape()));
        }
    }
    auto node = make_node(logits.shape(), logits.numel(), {logits.node()});
    double mx = logits.data()[static_cast<std::size_t>(active[0])];
    for (int idx : active) mx = std::max(mx, logits.data()[static_cast<std::size_t>(idx)]);
    double z = 0.0;
    for (int idx : active) {
        const double e = std::exp(logits.data()[static_cast<std::size_t>(idx)] - mx);
        node->value[static_cast<std::size_t>(idx)] = e;
        z += e;
    }
    for (int idx : active) node->value[static_cast<std::size_t>(idx)] /= z;
    node->backward = [active](TensorNode& self) {
        TensorNode& X = *self.parents[0];
        if (!X.track) return;
        double s = 0.0;
        for (int idx : active) {
            s += self.grad[static_cast<std::size_t>(idx)] * self.value[static_cast<std::size_t>(idx)];
        }
        for (int idx : active) {
            const std::size_t i = static_cast<std::size_t>(idx);
            X.grad[i] += self.value[i] * (self.grad[i] - s);
        }
    };
    return Tensor(node);
}

std::pair<Tensor, Tensor> rfft(const Tensor& x) {
    const bool flat = x.ndim() == 1;
    if (!flat) require_2d(x, "rfft");
    const int rows = flat ? 1 : x.dim(0);
    const int n = flat ? x.dim(0) : x.dim(1);
    const int m = n / 2 + 1;
    const std::vector<int> out_shape = flat ? std::vector<int>{m} : std::vector<int>{rows, m};

    auto re_node = make_node(out_shape, static_cast<std::size_t>(rows) * m, {x.node()});
    auto im_node = make_node(out_shape, static_cast<std::size_t>(rows) * m, {x.node()});
    std::vector<double> row(static_cast<std::size_t>(n));
    for (int r = 0; r < rows; ++r) {
        for (int t = 0; t < n; ++t) row[static_cast<std::size_t>(t)] = x.data()[static_cast<std::size_t>(r) * n + t];
        const auto spec = fft::rfft(row);
        for (int f = 0; f < m; ++f) {
            re_node->value[static_cast<std::size_t>(r) * m + f] = spec[static_cast<std::size_t>(f)].real();
            im_node->value[static_cast<std::size_t>(r) * m + f] = spec[static_cast<std::size_t>(f)].imag();
        }
    }
    // Adjoint of the half-spectrum map: each materialized bin counted once.
    re_node->backward = [rows, n, m](TensorNode& self) {
        TensorNode& X = *self.parents[0];
        if (!X.track) return;
        for (int r = 0; r < rows; ++r) {
            for (int t = 0; t < n; ++t) {
                double acc = 0.0;
                for (int f = 0; f < m; ++f) {
                    acc += self.grad[static_cast<std::size_t>(r) * m + f] *
                           std::cos(dft_angle(static_cast<std::size_t>(f), static_cast<std::size_t>(t),
                                              static_cast<std::size_t>(n)));
                }
                X.grad[static_cast<std::size_t>(r) * n + t] += acc;
            }
        }
    };
    im_node->backward = [rows, n, m](TensorNode& self) {
        TensorNode& X = *self.parents[0];
        if (!X.track) return;
        for (int r = 0; r < rows; ++r) {
            for (int t = 0; t < n; ++t) {
                double acc = 0.0;
                for (int f = 0; f < m; ++f) {
                    acc -= self.grad[static_cast<std::size_t>(r) * m + f] *
                           std::sin(dft_angle(static_cast<std::size_t>(f), static_cast<std::size_t>(t),
                                              static_cast<std::size_t>(n)));
                }
                X.grad[static_cast<std::size_t>(r) * n + t] += acc;
            }
        }
    };
    return {Tensor(re_node), Tensor(im_node)};
}

Tensor irfft(const Tensor& re, const Tensor& im, int n) {
    if (re.shape() != im.shape()) {
        throw DimensionError("irfft: real " + shape_str(re.shape()) + " and imag " +
                             shape_str(im.shape()) + " differ");
    }
    const bool flat = re.ndim() == 1;
    if (!flat) require_2d(re, "irfft");
    const int rows = flat ? 1 : re.dim(0);
    const int m = flat ? re.dim(0) : re.dim(1);
    if (m != n / 2 + 1) {
        throw DimensionError("irfft: " + std::to_string(m) + " bins cannot produce length " +
                             std::to_string(n));
    }
    const std::vector<int> out_shape = flat ? std::vector<int>{n} : std::vector<int>{rows, n};
    auto node = make_node(out_shape, static_cast<std::size_t>(rows) * n, {re.node(), im.node()});
    std::vector<std::complex<double>> spec(static_cast<std::size_t>(m));
    for (int r = 0; r < rows; ++r) {
        for (int f = 0; f < m; ++f) {
            spec[static_cast<std::size_t>(f)] = {re.data()[static_cast<std::size_t>(r) * m + f],
                                                 im.data()[static_cast<std::size_t>(r) * m + f]};
        }
        const auto row = fft::irfft(spec, n);
        for (int t = 0; t < n; ++t) node->value[static_cast<std::size_t>(r) * n + t] = row[static_cast<std::size_t>(t)];
    }
    node->backward = [rows, n, m](TensorNode& self) {
        TensorNode& RE = *self.parents[0];
        TensorNode& IM = *self.parents[1];
        const bool even = n % 2 == 0;
        for (int r = 0; r < rows; ++r) {
            for (int f = 0; f < m; ++f) {
                const bool edge = f == 0 || (even && f == n / 2);
                const double wre = (edge ? 1.0 : 2.0) / static_cast<double>(n);
                double dre = 0.0, dim = 0.0;
                for (int t = 0; t < n; ++t) {
                    const double g = self.grad[static_cast<std::size_t>(r) * n + t];
                    const double ang = dft_angle(static_cast<std::size_t>(f), static_cast<std::size_t>(t),
                                                 static_cast<std::size_t>(n));
                    dre += g * std::cos(ang) * wre;
                    if (!edge) dim -= g * std::sin(ang) * 2.0 / static_cast<double>(n);
                }
                if (RE.track) RE.grad[static_cast<std::size_t>(r) * m + f] += dre;
                if (IM.track && !edge) IM.grad[static_cast<std::size_t>(r) * m + f] += dim;
            }
        }
    };
    return Tensor(node);
}

Tensor moving_average(const Tensor& x, int window) {
    require_2d(x, "moving_average");
    const int n = x.dim(0), d = x.dim(1);
    if (window < 1 || window > n) {
        throw ParameterError("moving_average: window " + std::to_string(window) +
                             " outside [1," + std::to_string(n) + "]");
    }
    const int right = (window - 1) / 2;
    const int left = window - 1 - right;
    auto node = make_node(x.shape(), x.numel(), {x.node()});
    const double inv = 1.0 / static_cast<double>(window);
    for (int t = 0; t < n; ++t) {
        for (int j = 0; j < d; ++j) {
            double acc = 0.0;
            for (int o = -left; o <= right; ++o) {
                const int s = std::min(std::max(t + o, 0), n - 1);
                acc += x.data()[static_cast<std::size_t>(s) * d + j];
            }
            node->value[static_cast<std::size_t>(t) * d + j] = acc * inv;
        }
    }
    node->backward = [n, d, left, right, inv](TensorNode& self) {
        TensorNode& X = *self.parents[0];
        if (!X.track) return;
        for (int t = 0; t < n; ++t) {
            for (int j = 0; j < d; ++j) {
                const double g = self.grad[static_cast<std::size_t>(t) * d + j] * inv;
                for (int o = -left; o <= right; ++o) {
                    const int s = std::min(std::max(t + o, 0), n - 1);
                    X.grad[static_cast<std::size_t>(s) * d + j] += g;
                }
            }
        }
    };
    return Tensor(node);
}

Tensor causal_conv1d(const Tensor& x, const Tensor& kernel, const Tensor& bias) {
    require_2d(x, "causal_conv1d");
    if (kernel.ndim() != 3) {
        throw DimensionError("causal_conv1d: kernel must be [K,D_in,D_out], got " +
                             shape_str(kernel.shape()));
    }
    const int n = x.dim(0), din = x.dim(1);
    const int k = kernel.dim(0), kin = kernel.dim(1), dout = kernel.dim(2);
    if (kin != din) {
        throw DimensionError("causal_conv1d: input " + shape_str(x.shape()) + " vs kernel " +
                             shape_str(kernel.shape()));
    }
    if (bias.numel() != static_cast<std::size_t>(dout)) {
        throw DimensionError("causal_conv1d: bias " + shape_str(bias.shape()) +
                             " does not match kernel out axis " + std::to_string(dout));
    }
    auto node = make_node({n, dout}, static_cast<std::size_t>(n) * dout,
                          {x.node(), kernel.node(), bias.node()});
    for (int t = 0; t < n; ++t) {
        for (int o = 0; o < dout; ++o) {
            double acc = bias.data()[static_cast<std::size_t>(o)];
            for (int kk = 0; kk <= std::min(k - 1, t); ++kk) {
                const std::size_t xoff = static_cast<std::size_t>(t - kk) * din;
                const std::size_t woff = (static_cast<std::size_t>(kk) * din) * dout;
                for (int i = 0; i < din; ++i) {
                    acc += x.data()[xoff + i] * kernel.data()[woff + static_cast<std::size_t>(i) * dout + o];
                }
            }
            node->value[static_cast<std::size_t>(t) * dout + o] = acc;
        }
    }
    node->backward = [n, din, k, dout](TensorNode& self) {
        TensorNode& X = *self.parents[0];
        TensorNode& W = *self.parents[1];
        TensorNode& B = *self.parents[2];
        for (int t = 0; t < n; ++t) {
            for (int o = 0; o < dout; ++o) {
                const double g = self.grad[static_cast<std::size_t>(t) * dout + o];
                if (B.track) B.grad[static_cast<std::size_t>(o)] += g;
                for (int kk = 0; kk <= std::min(k - 1, t); ++kk) {
                    const std::size_t xoff = static_cast<std::size_t>(t - kk) * din;
                    const std::size_t woff = (static_cast<std::size_t>(kk) * din) * dout;
                    for (int i = 0; i < din; ++i) {
                        if (X.track) {
                            X.grad[xoff + i] += g * W.value[woff + static_cast<std::size_t>(i) * dout + o];
                        }
                        if (W.track) {
                            W.grad[woff + static_cast<std::size_t>(i) * dout + o] += g * X.value[xoff + i];
                        }
                    }
                }
            }
        }
    };
    return Tensor(node);
}

Tensor cosine_rows(const Tensor& x) {
    require_2d(x, "cosine_rows");
    const int v = x.dim(0), f = x.dim(1);
    auto node = make_node({v, v}, static_cast<std::size_t>(v) * v, {x.node()});
    std::vector<double> norms(static_cast<std::size_t>(v));
    for (int i = 0; i < v; ++i) {
        double s = 0.0;
        for (int j = 0; j < f; ++j) {
            const double e = x.data()[static_cast<std::size_t>(i) * f + j];
            s += e * e;
        }
        norms[static_cast<std::size_t>(i)] = std::sqrt(s);
    }
    for (int i = 0; i < v; ++i) {
        for (int j = 0; j < v; ++j) {
            double c = 0.0;
            if (norms[static_cast<std::size_t>(i)] != 0.0 && norms[static_cast<std::size_t>(j)] != 0.0) {
                double d = 0.0;
                for (int l = 0; l < f; ++l) {
                    d += x.data()[static_cast<std::size_t>(i) * f + l] *
                         x.data()[static_cast<std::size_t>(j) * f + l];
                }
                c = d / (norms[static_cast<std::size_t>(i)] * norms[static_cast<std::size_t>(j)]);
            }
            node->value[static_cast<std::size_t>(i) * v + j] = c;
        }
    }
    node->backward = [v, f](TensorNode& self) {
        TensorNode& X = *self.parents[0];
        if (!X.track) return;
        std::vector<double> norms(static_cast<std::size_t>(v));
        for (int i = 0; i < v; ++i) {
            double s = 0.0;
            for (int j = 0; j < f; ++j) {
                const double e = X.value[static_cast<std::size_t>(i) * f + j];
                s += e * e;
            }
            norms[static_cast<std::size_t>(i)] = std::sqrt(s);
        }
        for (int i = 0; i < v; ++i) {
            const double ni = norms[static_cast<std::size_t>(i)];
            if (ni == 0.0) continue;
            for (int j = 0; j < v; ++j) {
                const double nj = norms[static_cast<std::size_t>(j)];
                if (nj == 0.0) continue;
                const double g = self.grad[static_cast<std::size_t>(i) * v + j];
                if (g == 0.0) continue;
                const double c = self.value[static_cast<std::size_t>(i) * v + j];
                for (int l = 0; l < f; ++l) {
                    const double xi = X.value[static_cast<std::size_t>(i) * f + l];
                    const double xj = X.value[static_cast<std::size_t>(j) * f + l];
                    X.grad[static_cast<std::size_t>(i) * f + l] += g * (xj / (ni * nj) - c * xi / (ni * ni));
                    X.grad[static_cast<std::size_t>(j) * f + l] += g * (xi / (ni * nj) - c * xj / (nj * nj));
                }
            }
        }
    };
    return Tensor(node);
}

Tensor cosine_vs_bank(const Tensor& h, const Tensor& bank) {
    require_1d(h, "cosine_vs_bank");
    require_2d(bank, "cosine_vs_bank");
    const int d = h.dim(0), m = bank.dim(0);
    if (bank.dim(1) != d) {
        throw DimensionError("cosine_vs_bank: query " + shape_str(h.shape()) + " vs bank " +
                             shape_str(bank.shape()));
    }
    auto node = make_node({m}, static_cast<std::size_t>(m), {h.node(), bank.node()});
    double nh = 0.0;
    for (int i = 0; i < d; ++i) nh += h.data()[static_cast<std::size_t>(i)] * h.data()[static_cast<std::size_t>(i)];
    nh = std::sqrt(nh);
    for (int r = 0; r < m; ++r) {
        double nb = 0.0, dp = 0.0;
        for (int i = 0; i < d; ++i) {
            const double b = bank.data()[static_cast<std::size_t>(r) * d + i];
            nb += b * b;
            dp += b * h.data()[static_cast<std::size_t>(i)];
        }
        nb = std::sqrt(nb);
        node->value[static_cast<std::size_t>(r)] = (nh == 0.0 || nb == 0.0) ? 0.0 : dp / (nh * nb);
    }
    node->backward = [d, m](TensorNode& self) {
        TensorNode& H = *self.parents[0];
        TensorNode& Bk = *self.parents[1];
        if (!H.track) return; // bank rows are archived snapshots, never trained
        double nh = 0.0;
        for (int i = 0; i < d; ++i) nh += H.value[static_cast<std::size_t>(i)] * H.value[static_cast<std::size_t>(i)];
        nh = std::sqrt(nh);
        if (nh == 0.0) return;
        for (int r = 0; r < m; ++r) {
            const double g = self.grad[static_cast<std::size_t>(r)];
            if (g == 0.0) continue;
            double nb = 0.0;
            for (int i = 0; i < d; ++i) {
                const double b = Bk.value[static_cast<std::size_t>(r) * d + i];
                nb += b * b;
            }
            nb = std::sqrt(nb);
            if (nb == 0.0) continue;
            const double s = self.value[static_cast<std::size_t>(r)];
            for (int i = 0; i < d; ++i) {
                const double b = Bk.value[static_cast<std::size_t>(r) * d + i];
                H.grad[static_cast<std::size_t>(i)] +=
                    g * (b / (nh * nb) - s * H.value[static_cast<std::size_t>(i)] / (nh * nh));
            }
        }
    };
    return Tensor(node);
}

} // namespace moecast
