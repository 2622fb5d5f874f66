#pragma once

#include "swinfuse/errors.hpp"

#include <algorithm>
#include <atomic>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

namespace swinfuse {

// ============================================================================
// Tensor: dense row-major n-d array with an optional reverse-mode tape.
//
// Handles are shallow (shared node). Ops never mutate their inputs; the only
// mutable state after construction is the gradient accumulator. A recorded
// graph must be walked by backward() on the thread that built it.
// ============================================================================

template <typename T>
struct TensorNode {
    std::vector<std::size_t> shape;
    std::vector<T> data;
    std::vector<T> grad;   // empty until first accumulation
    bool requires_grad = false;
    std::uint64_t grad_pass = 0;
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(TensorNode&, std::uint64_t)> backward;
};

namespace detail {

inline std::string shape_str(const std::vector<std::size_t>& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << ']';
    return os.str();
}

inline std::size_t numel_of(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return n;
}

template <typename T>
bool all_finite(const std::vector<T>& v) {
    for (T x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

// Grad buffer for one accumulation during backward pass `pass`. Buffers of
// recorded (non-leaf) nodes are transient per pass; leaf buffers persist so
// repeated backward calls accumulate until zero_grad().
template <typename T>
T* grad_buffer(TensorNode<T>& n, std::uint64_t pass) {
    if (n.grad.empty()) n.grad.assign(n.data.size(), T(0));
    else if (n.backward && n.grad_pass != pass) std::fill(n.grad.begin(), n.grad.end(), T(0));
    n.grad_pass = pass;
    return n.grad.data();
}

inline std::atomic<std::uint64_t> g_backward_pass{0};

} // namespace detail

template <typename T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape) {
        node_ = std::make_shared<TensorNode<T>>();
        node_->shape = std::move(shape);
        node_->data.assign(detail::numel_of(node_->shape), T(0));
    }

    Tensor(std::vector<std::size_t> shape, std::vector<T> values) {
        if (detail::numel_of(shape) != values.size())
            throw ShapeError("tensor data length " + std::to_string(values.size()) +
                             " does not match shape " + detail::shape_str(shape));
        node_ = std::make_shared<TensorNode<T>>();
        node_->shape = std::move(shape);
        node_->data = std::move(values);
    }

    static Tensor full(std::vector<std::size_t> shape, T value) {
        Tensor t(std::move(shape));
        std::fill(t.data().begin(), t.data().end(), value);
        return t;
    }

    bool valid() const { return node_ != nullptr; }
    const std::vector<std::size_t>& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t size() const { return node_->data.size(); }

    std::size_t rows() const { return node_->shape.at(0); }
    std::size_t cols() const { return node_->shape.at(node_->shape.size() - 1); }

    std::vector<T>& data() { return node_->data; }
    const std::vector<T>& data() const { return node_->data; }

    T& at(std::size_t i) { return node_->data[i]; }
    const T& at(std::size_t i) const { return node_->data[i]; }
    T& operator()(std::size_t r, std::size_t c) { return node_->data[r * cols() + c]; }
    const T& operator()(std::size_t r, std::size_t c) const { return node_->data[r * cols() + c]; }

    // Scalar payload of a one-element tensor.
    T value() const {
        if (size() != 1) throw ContractError("value() requires a scalar tensor, got " + detail::shape_str(shape()));
        return node_->data[0];
    }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool v) { node_->requires_grad = v; }

    bool has_grad() const { return !node_->grad.empty(); }
    const std::vector<T>& grad() const {
        if (node_->grad.empty()) throw ContractError("gradient not populated; run backward() first");
        return node_->grad;
    }
    void zero_grad() {
        if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
    }

    std::shared_ptr<TensorNode<T>> node() const { return node_; }

private:
    std::shared_ptr<TensorNode<T>> node_;
};

// Builds an op result; records parents and the pullback only when some input
// participates in gradient computation.
template <typename T>
Tensor<T> make_op(std::vector<std::size_t> shape, std::vector<T> data,
                  const std::vector<Tensor<T>>& inputs,
                  std::function<void(TensorNode<T>&, std::uint64_t)> backward) {
    assert(detail::all_finite(data) && "non-finite values produced by tensor op");
    Tensor<T> out(std::move(shape), std::move(data));
    bool rec = false;
    for (const auto& in : inputs) rec = rec || in.requires_grad();
    if (rec) {
        out.node()->requires_grad = true;
        for (const auto& in : inputs) out.node()->parents.push_back(in.node());
        out.node()->backward = std::move(backward);
    }
    return out;
}

// Reverse-mode sweep from a scalar root. Leaf gradients accumulate across
// calls until explicitly zeroed.
template <typename T>
void backward(const Tensor<T>& root) {
    if (root.size() != 1)
        throw ContractError("backward() root must be scalar, got " + detail::shape_str(root.shape()));
    const std::uint64_t pass = ++detail::g_backward_pass;

    // iterative post-order over parents
    std::vector<TensorNode<T>*> order;
    std::unordered_set<TensorNode<T>*> visited;
    std::vector<std::pair<TensorNode<T>*, std::size_t>> stack;
    stack.push_back({root.node().get(), 0});
    visited.insert(root.node().get());
    while (!stack.empty()) {
        auto& [n, idx] = stack.back();
        if (idx < n->parents.size()) {
            TensorNode<T>* p = n->parents[idx++].get();
            if (visited.insert(p).second) stack.push_back({p, 0});
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }

    detail::grad_buffer(*root.node(), pass)[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorNode<T>* n = *it;
        if (n->backward && !n->grad.empty()) n->backward(*n, pass);
    }
}

// ============================================================================
// Shape checks
// ============================================================================

namespace detail {

template <typename T>
void require_rank2(const Tensor<T>& x, const char* op) {
    if (x.rank() != 2)
        throw ShapeError(std::string(op) + " requires a rank-2 tensor, got " + shape_str(x.shape()));
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + " shape mismatch: " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
}

// C = A(M x K) * B(K x N), accumulating into zeroed C
template <typename T>
void matmul_raw(const T* a, const T* b, T* c, std::size_t M, std::size_t K, std::size_t N) {
    for (std::size_t i = 0; i < M; ++i) {
        T* ci = c + i * N;
        for (std::size_t k = 0; k < K; ++k) {
            const T aik = a[i * K + k];
            const T* bk = b + k * N;
            for (std::size_t j = 0; j < N; ++j) ci[j] += aik * bk[j];
        }
    }
}

template <typename T>
void transpose_raw(const T* a, T* at, std::size_t R, std::size_t C) {
    for (std::size_t i = 0; i < R; ++i)
        for (std::size_t j = 0; j < C; ++j) at[j * R + i] = a[i * C + j];
}

} // namespace detail

// ============================================================================
// Elementwise ops
// ============================================================================

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape(a, b, "add");
    std::vector<T> out(a.data());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.at(i);
    auto an = a.node(), bn = b.node();
    return make_op<T>(a.shape(), std::move(out), {a, b}, [an, bn](TensorNode<T>& o, std::uint64_t p) {
        if (an->requires_grad) {
            T* g = detail::grad_buffer(*an, p);
            for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
        }
        if (bn->requires_grad) {
            T* g = detail::grad_buffer(*bn, p);
            for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
        }
    });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape(a, b, "sub");
    std::vector<T> out(a.data());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.at(i);
    auto an = a.node(), bn = b.node();
    return make_op<T>(a.shape(), std::move(out), {a, b}, [an, bn](TensorNode<T>& o, std::uint64_t p) {
        if (an->requires_grad) {
            T* g = detail::grad_buffer(*an, p);
            for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
        }
        if (bn->requires_grad) {
            T* g = detail::grad_buffer(*bn, p);
            for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] -= o.grad[i];
        }
    });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape(a, b, "mul");
    std::vector<T> out(a.data());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.at(i);
    auto an = a.node(), bn = b.node();
    return make_op<T>(a.shape(), std::move(out), {a, b}, [an, bn](TensorNode<T>& o, std::uint64_t p) {
        if (an->requires_grad) {
            T* g = detail::grad_buffer(*an, p);
            for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * bn->data[i];
        }
        if (bn->requires_grad) {
            T* g = detail::grad_buffer(*bn, p);
            for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * an->data[i];
        }
    });
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape(a, b, "div");
    std::vector<T> out(a.data());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] /= b.at(i);
    auto an = a.node(), bn = b.node();
    return make_op<T>(a.shape(), std::move(out), {a, b}, [an, bn](TensorNode<T>& o, std::uint64_t p) {
        if (an->requires_grad) {
            T* g = detail::grad_buffer(*an, p);
            for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] / bn->data[i];
        }
        if (bn->requires_grad) {
            T* g = detail::grad_buffer(*bn, p);
            for (std::size_t i = 0; i < o.grad.size(); ++i) {
                const T bi = bn->data[i];
                g[i] -= o.grad[i] * an->data[i] / (bi * bi);
            }
        }
    });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T s) {
    std::vector<T> out(a.data());
    for (auto& v : out) v += s;
    auto an = a.node();
    return make_op<T>(a.shape(), std::move(out), {a}, [an](TensorNode<T>& o, std::uint64_t p) {
        T* g = detail::grad_buffer(*an, p);
        for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
    });
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& a, T s) {
    std::vector<T> out(a.data());
    for (auto& v : out) v *= s;
    auto an = a.node();
    return make_op<T>(a.shape(), std::move(out), {a}, [an, s](TensorNode<T>& o, std::uint64_t p) {
        T* g = detail::grad_buffer(*an, p);
        for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * s;
    });
}

// |x|, with subgradient 0 at the kink
template <typename T>
Tensor<T> abs_t(const Tensor<T>& a) {
    std::vector<T> out(a.data());
    for (auto& v : out) v = std::abs(v);
    auto an = a.node();
    return make_op<T>(a.shape(), std::move(out), {a}, [an](TensorNode<T>& o, std::uint64_t p) {
        T* g = detail::grad_buffer(*an, p);
        for (std::size_t i = 0; i < o.grad.size(); ++i) {
            const T x = an->data[i];
            g[i] += o.grad[i] * (x > T(0) ? T(1) : x < T(0) ? T(-1) : T(0));
        }
    });
}

template <typename T>
Tensor<T> tanh_t(const Tensor<T>& a) {
    std::vector<T> out(a.data());
    for (auto& v : out) v = std::tanh(v);
    auto an = a.node();
    return make_op<T>(a.shape(), std::move(out), {a}, [an](TensorNode<T>& o, std::uint64_t p) {
        T* g = detail::grad_buffer(*an, p);
        for (std::size_t i = 0; i < o.grad.size(); ++i) {
            const T y = o.data[i];
            g[i] += o.grad[i] * (T(1) - y * y);
        }
    });
}

// Exact-CDF GELU: x * Phi(x) with Phi the standard normal CDF.
template <typename T>
Tensor<T> gelu(const Tensor<T>& a) {
    constexpr T inv_sqrt2 = T(0.7071067811865475244);
    std::vector<T> out(a.data());
    for (auto& v : out) v = v * T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
    auto an = a.node();
    return make_op<T>(a.shape(), std::move(out), {a}, [an](TensorNode<T>& o, std::uint64_t p) {
        constexpr T inv_sqrt2_ = T(0.7071067811865475244);
        const T inv_sqrt2pi = T(1) / std::sqrt(T(2) * std::numbers::pi_v<T>);
        T* g = detail::grad_buffer(*an, p);
        for (std::size_t i = 0; i < o.grad.size(); ++i) {
            const T x = an->data[i];
            const T cdf = T(0.5) * (T(1) + std::erf(x * inv_sqrt2_));
            const T pdf = std::exp(T(-0.5) * x * x) * inv_sqrt2pi;
            g[i] += o.grad[i] * (cdf + x * pdf);
        }
    });
}

// ============================================================================
// Matrix ops
// ============================================================================

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_rank2(a, "matmul");
    detail::require_rank2(b, "matmul");
    if (a.cols() != b.rows())
        throw ShapeError("matmul inner dimensions disagree: " + detail::shape_str(a.shape()) +
                         " vs " + detail::shape_str(b.shape()));
    const std::size_t M = a.rows(), K = a.cols(), N = b.cols();
    std::vector<T> out(M * N, T(0));
    detail::matmul_raw(a.data().data(), b.data().data(), out.data(), M, K, N);
    auto an = a.node(), bn = b.node();
    return make_op<T>({M, N}, std::move(out), {a, b}, [an, bn, M, K, N](TensorNode<T>& o, std::uint64_t p) {
        if (an->requires_grad) {
            // dA += dY * B^T
            std::vector<T> bt(K * N);
            detail::transpose_raw(bn->data.data(), bt.data(), K, N);
            detail::matmul_raw(o.grad.data(), bt.data(), detail::grad_buffer(*an, p), M, N, K);
        }
        if (bn->requires_grad) {
            // dB += A^T * dY
            std::vector<T> at(M * K);
            detail::transpose_raw(an->data.data(), at.data(), M, K);
            detail::matmul_raw(at.data(), o.grad.data(), detail::grad_buffer(*bn, p), K, M, N);
        }
    });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
    detail::require_rank2(a, "transpose");
    const std::size_t R = a.rows(), C = a.cols();
    std::vector<T> out(R * C);
    detail::transpose_raw(a.data().data(), out.data(), R, C);
    auto an = a.node();
    return make_op<T>({C, R}, std::move(out), {a}, [an, R, C](TensorNode<T>& o, std::uint64_t p) {
        T* g = detail::grad_buffer(*an, p);
        for (std::size_t i = 0; i < C; ++i)
            for (std::size_t j = 0; j < R; ++j) g[j * C + i] += o.grad[i * R + j];
    });
}

// Broadcast-add a length-C row vector to every row of a t x C matrix.
template <typename T>
Tensor<T> add_row(const Tensor<T>& x, const Tensor<T>& row) {
    detail::require_rank2(x, "add_row");
    if (row.size() != x.cols())
        throw ShapeError("add_row bias length " + std::to_string(row.size()) +
                         " does not match " + detail::shape_str(x.shape()));
    const std::size_t R = x.rows(), C = x.cols();
    std::vector<T> out(x.data());
    for (std::size_t i = 0; i < R; ++i)
        for (std::size_t j = 0; j < C; ++j) out[i * C + j] += row.at(j);
    auto xn = x.node(), rn = row.node();
    return make_op<T>(x.shape(), std::move(out), {x, row}, [xn, rn, R, C](TensorNode<T>& o, std::uint64_t p) {
        if (xn->requires_grad) {
            T* g = detail::grad_buffer(*xn, p);
            for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
        }
        if (rn->requires_grad) {
            T* g = detail::grad_buffer(*rn, p);
            for (std::size_t i = 0; i < R; ++i)
                for (std::size_t j = 0; j < C; ++j) g[j] += o.grad[i * C + j];
        }
    });
}

// ============================================================================
// Normalization & softmax
// ============================================================================

// Row-wise softmax with per-row max subtraction; identical to the naive form
// where that form does not overflow.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
    detail::require_rank2(x, "softmax_rows");
    const std::size_t R = x.rows(), C = x.cols();
    std::vector<T> out(R * C);
    for (std::size_t i = 0; i < R; ++i) {
        const T* xi = x.data().data() + i * C;
        T mx = xi[0];
        for (std::size_t j = 1; j < C; ++j) mx = std::max(mx, xi[j]);
        T sum = T(0);
        for (std::size_t j = 0; j < C; ++j) {
            out[i * C + j] = std::exp(xi[j] - mx);
            sum += out[i * C + j];
        }
        for (std::size_t j = 0; j < C; ++j) out[i * C + j] /= sum;
    }
    auto xn = x.node();
    return make_op<T>(x.shape(), std::move(out), {x}, [xn, R, C](TensorNode<T>& o, std::uint64_t p) {
        T* g = detail::grad_buffer(*xn, p);
        for (std::size_t i = 0; i < R; ++i) {
            const T* y = o.data.data() + i * C;
            const T* dy = o.grad.data() + i * C;
            T dot = T(0);
            for (std::size_t j = 0; j < C; ++j) dot += y[j] * dy[j];
            for (std::size_t j = 0; j < C; ++j) g[i * C + j] += y[j] * (dy[j] - dot);
        }
    });
}

// Per-token layer normalization over the channel dimension with affine scale/shift.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
    detail::require_rank2(x, "layer_norm");
    const std::size_t R = x.rows(), C = x.cols();
    if (gamma.size() != C || beta.size() != C)
        throw ShapeError("layer_norm affine size mismatch for " + detail::shape_str(x.shape()));
    if (!(eps > T(0))) throw ContractError("layer_norm eps must be positive");

    std::vector<T> out(R * C), xhat(R * C), inv_std(R);
    for (std::size_t i = 0; i < R; ++i) {
        const T* xi = x.data().data() + i * C;
        T mean = T(0);
        for (std::size_t j = 0; j < C; ++j) mean += xi[j];
        mean /= T(C);
        T var = T(0);
        for (std::size_t j = 0; j < C; ++j) {
            const T d = xi[j] - mean;
            var += d * d;
        }
        var /= T(C);
        const T inv = T(1) / std::sqrt(var + eps);
        inv_std[i] = inv;
        for (std::size_t j = 0; j < C; ++j) {
            const T h = (xi[j] - mean) * inv;
            xhat[i * C + j] = h;
            out[i * C + j] = gamma.at(j) * h + beta.at(j);
        }
    }
    auto xn = x.node(), gn = gamma.node(), bn = beta.node();
    return make_op<T>(x.shape(), std::move(out), {x, gamma, beta},
                      [xn, gn, bn, R, C, xhat = std::move(xhat), inv_std = std::move(inv_std)](TensorNode<T>& o, std::uint64_t p) {
        if (gn->requires_grad) {
            T* g = detail::grad_buffer(*gn, p);
            for (std::size_t i = 0; i < R; ++i)
                for (std::size_t j = 0; j < C; ++j) g[j] += o.grad[i * C + j] * xhat[i * C + j];
        }
        if (bn->requires_grad) {
            T* g = detail::grad_buffer(*bn, p);
            for (std::size_t i = 0; i < R; ++i)
                for (std::size_t j = 0; j < C; ++j) g[j] += o.grad[i * C + j];
        }
        if (xn->requires_grad) {
            T* g = detail::grad_buffer(*xn, p);
            std::vector<T> dxh(C);
            for (std::size_t i = 0; i < R; ++i) {
                T m1 = T(0), m2 = T(0);
                for (std::size_t j = 0; j < C; ++j) {
                    dxh[j] = o.grad[i * C + j] * gn->data[j];
                    m1 += dxh[j];
                    m2 += dxh[j] * xhat[i * C + j];
                }
                m1 /= T(C);
                m2 /= T(C);
                for (std::size_t j = 0; j < C; ++j)
                    g[i * C + j] += inv_std[i] * (dxh[j] - m1 - xhat[i * C + j] * m2);
            }
        }
    });
}

// ============================================================================
// Reductions
// ============================================================================

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
    T s = T(0);
    for (T v : x.data()) s += v;
    auto xn = x.node();
    return make_op<T>({1}, {s}, {x}, [xn](TensorNode<T>& o, std::uint64_t p) {
        T* g = detail::grad_buffer(*xn, p);
        for (std::size_t i = 0; i < xn->data.size(); ++i) g[i] += o.grad[0];
    });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
    T s = T(0);
    for (T v : x.data()) s += v;
    const T n = T(x.size());
    auto xn = x.node();
    return make_op<T>({1}, {s / n}, {x}, [xn, n](TensorNode<T>& o, std::uint64_t p) {
        T* g = detail::grad_buffer(*xn, p);
        for (std::size_t i = 0; i < xn->data.size(); ++i) g[i] += o.grad[0] / n;
    });
}

// ============================================================================
// Data movement
// ============================================================================

// Copies into a new shape; the inverse reshape reproduces the data bit-exactly.
template <typename T>
Tensor<T> reshape(const Tensor<T>& x, std::vector<std::size_t> shape) {
    if (detail::numel_of(shape) != x.size())
        throw ShapeError("reshape " + detail::shape_str(x.shape()) + " -> " +
                         detail::shape_str(shape) + " changes element count");
    auto xn = x.node();
    return make_op<T>(std::move(shape), std::vector<T>(x.data()), {x},
                      [xn](TensorNode<T>& o, std::uint64_t p) {
        T* g = detail::grad_buffer(*xn, p);
        for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
    });
}

template <typename T>
Tensor<T> slice_rows(const Tensor<T>& x, std::size_t r0, std::size_t n) {
    detail::require_rank2(x, "slice_rows");
    if (r0 + n > x.rows())
        throw ShapeError("slice_rows [" + std::to_string(r0) + "," + std::to_string(r0 + n) +
                         ") out of range for " + detail::shape_str(x.shape()));
    const std::size_t C = x.cols();
    std::vector<T> out(x.data().begin() + r0 * C, x.data().begin() + (r0 + n) * C);
    auto xn = x.node();
    return make_op<T>({n, C}, std::move(out), {x}, [xn, r0, C](TensorNode<T>& o, std::uint64_t p) {
        T* g = detail::grad_buffer(*xn, p) + r0 * C;
        for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
    });
}

template <typename T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
    if (parts.empty()) throw ContractError("concat_rows of zero tensors");
    const std::size_t C = parts[0].cols();
    std::size_t R = 0;
    for (const auto& t : parts) {
        detail::require_rank2(t, "concat_rows");
        if (t.cols() != C) throw ShapeError("concat_rows column mismatch");
        R += t.rows();
    }
    std::vector<T> out;
    out.reserve(R * C);
    for (const auto& t : parts) out.insert(out.end(), t.data().begin(), t.data().end());
    std::vector<std::shared_ptr<TensorNode<T>>> nodes;
    for (const auto& t : parts) nodes.push_back(t.node());
    return make_op<T>({R, C}, std::move(out), parts, [nodes](TensorNode<T>& o, std::uint64_t p) {
        std::size_t off = 0;
        for (const auto& n : nodes) {
            const std::size_t len = n->data.size();
            if (n->requires_grad) {
                T* g = detail::grad_buffer(*n, p);
                for (std::size_t i = 0; i < len; ++i) g[i] += o.grad[off + i];
            }
            off += len;
        }
    });
}

template <typename T>
Tensor<T> concat_rows(std::initializer_list<Tensor<T>> parts) {
    return concat_rows(std::vector<Tensor<T>>(parts));
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t c0, std::size_t n) {
    detail::require_rank2(x, "slice_cols");
    if (c0 + n > x.cols())
        throw ShapeError("slice_cols [" + std::to_string(c0) + "," + std::to_string(c0 + n) +
                         ") out of range for " + detail::shape_str(x.shape()));
    const std::size_t R = x.rows(), C = x.cols();
    std::vector<T> out(R * n);
    for (std::size_t i = 0; i < R; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x.data()[i * C + c0 + j];
    auto xn = x.node();
    return make_op<T>({R, n}, std::move(out), {x}, [xn, c0, n, R, C](TensorNode<T>& o, std::uint64_t p) {
        T* g = detail::grad_buffer(*xn, p);
        for (std::size_t i = 0; i < R; ++i)
            for (std::size_t j = 0; j < n; ++j) g[i * C + c0 + j] += o.grad[i * n + j];
    });
}

template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
    if (parts.empty()) throw ContractError("concat_cols of zero tensors");
    const std::size_t R = parts[0].rows();
    std::size_t C = 0;
    for (const auto& t : parts) {
        detail::require_rank2(t, "concat_cols");
        if (t.rows() != R) throw ShapeError("concat_cols row mismatch");
        C += t.cols();
    }
    std::vector<T> out(R * C);
    std::size_t off = 0;
    for (const auto& t : parts) {
        const std::size_t c = t.cols();
        for (std::size_t i = 0; i < R; ++i)
            for (std::size_t j = 0; j < c; ++j) out[i * C + off + j] = t.data()[i * c + j];
        off += c;
    }
    std::vector<std::shared_ptr<TensorNode<T>>> nodes;
    std::vector<std::size_t> widths;
    for (const auto& t : parts) {
        nodes.push_back(t.node());
        widths.push_back(t.cols());
    }
    return make_op<T>({R, C}, std::move(out), parts, [nodes, widths, R, C](TensorNode<T>& o, std::uint64_t p) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < nodes.size(); ++k) {
            const std::size_t c = widths[k];
            if (nodes[k]->requires_grad) {
                T* g = detail::grad_buffer(*nodes[k], p);
                for (std::size_t i = 0; i < R; ++i)
                    for (std::size_t j = 0; j < c; ++j) g[i * c + j] += o.grad[i * C + off + j];
            }
            off += c;
        }
    });
}

template <typename T>
Tensor<T> concat_cols(std::initializer_list<Tensor<T>> parts) {
    return concat_cols(std::vector<Tensor<T>>(parts));
}

// Row gather: out row i = x row perm[i], where rows are slices over the last
// dimension. Pure data movement; the pullback scatters. Output shape is given
// explicitly so partition/reverse/shift can reinterpret the grid in one hop.
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, const std::vector<std::size_t>& perm,
                      std::vector<std::size_t> out_shape) {
    if (x.rank() < 2) throw ShapeError("gather_rows requires rank >= 2, got " + detail::shape_str(x.shape()));
    const std::size_t C = x.cols();
    const std::size_t R = x.size() / C;
    if (detail::numel_of(out_shape) != perm.size() * C)
        throw ShapeError("gather_rows output shape " + detail::shape_str(out_shape) + " does not hold " +
                         std::to_string(perm.size()) + " rows of width " + std::to_string(C));
    std::vector<T> out(perm.size() * C);
    for (std::size_t i = 0; i < perm.size(); ++i) {
        if (perm[i] >= R) throw ShapeError("gather_rows index out of range");
        std::copy_n(x.data().data() + perm[i] * C, C, out.data() + i * C);
    }
    auto xn = x.node();
    return make_op<T>(std::move(out_shape), std::move(out), {x},
                      [xn, perm, C](TensorNode<T>& o, std::uint64_t p) {
        T* g = detail::grad_buffer(*xn, p);
        for (std::size_t i = 0; i < perm.size(); ++i)
            for (std::size_t j = 0; j < C; ++j) g[perm[i] * C + j] += o.grad[i * C + j];
    });
}

// Table lookup producing an r x c matrix: out(i,j) = table(idx[i*c+j], col).
// The pullback scatter-adds into the table, so the table is trainable.
template <typename T>
Tensor<T> gather_entries(const Tensor<T>& table, const std::vector<int>& idx,
                         std::size_t col, std::size_t r, std::size_t c) {
    detail::require_rank2(table, "gather_entries");
    if (idx.size() != r * c) throw ShapeError("gather_entries index count mismatch");
    const std::size_t P = table.rows(), H = table.cols();
    if (col >= H) throw ShapeError("gather_entries column out of range");
    std::vector<T> out(r * c);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || static_cast<std::size_t>(idx[i]) >= P)
            throw ShapeError("gather_entries index out of range");
        out[i] = table.data()[static_cast<std::size_t>(idx[i]) * H + col];
    }
    auto tn = table.node();
    return make_op<T>({r, c}, std::move(out), {table}, [tn, idx, col, H](TensorNode<T>& o, std::uint64_t p) {
        T* g = detail::grad_buffer(*tn, p);
        for (std::size_t i = 0; i < idx.size(); ++i)
            g[static_cast<std::size_t>(idx[i]) * H + col] += o.grad[i];
    });
}

// ============================================================================
// Valid 2-d cross-correlation with a constant square kernel
// ============================================================================

template <typename T>
Tensor<T> conv2d_valid(const Tensor<T>& x, const std::vector<T>& kernel, std::size_t k) {
    detail::require_rank2(x, "conv2d_valid");
    if (kernel.size() != k * k) throw ShapeError("conv2d_valid kernel is not k x k");
    const std::size_t H = x.rows(), W = x.cols();
    if (H < k || W < k)
        throw ContractError("conv2d_valid input " + detail::shape_str(x.shape()) +
                            " smaller than kernel " + std::to_string(k));
    const std::size_t OH = H - k + 1, OW = W - k + 1;
    std::vector<T> out(OH * OW, T(0));
    for (std::size_t i = 0; i < OH; ++i)
        for (std::size_t u = 0; u < k; ++u) {
            const T* xr = x.data().data() + (i + u) * W;
            const T* kr = kernel.data() + u * k;
            T* orow = out.data() + i * OW;
            for (std::size_t v = 0; v < k; ++v) {
                const T kv = kr[v];
                for (std::size_t j = 0; j < OW; ++j) orow[j] += kv * xr[j + v];
            }
        }
    auto xn = x.node();
    return make_op<T>({OH, OW}, std::move(out), {x},
                      [xn, kernel, k, W, OH, OW](TensorNode<T>& o, std::uint64_t p) {
        T* g = detail::grad_buffer(*xn, p);
        for (std::size_t i = 0; i < OH; ++i)
            for (std::size_t j = 0; j < OW; ++j) {
                const T d = o.grad[i * OW + j];
                for (std::size_t u = 0; u < k; ++u)
                    for (std::size_t v = 0; v < k; ++v) g[(i + u) * W + (j + v)] += d * kernel[u * k + v];
            }
    });
}

// ============================================================================
// Initialization
// ============================================================================

// Truncated normal: redraw outside two standard deviations.
template <typename T, typename Rng>
void fill_trunc_normal(Tensor<T>& t, Rng& rng, T stddev) {
    std::normal_distribution<double> dist(0.0, static_cast<double>(stddev));
    for (auto& v : t.data()) {
        double d = dist(rng);
        while (std::abs(d) > 2.0 * static_cast<double>(stddev)) d = dist(rng);
        v = static_cast<T>(d);
    }
}

} // namespace swinfuse
