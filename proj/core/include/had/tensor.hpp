#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "had/errors.hpp"

namespace had {

// Dense row-major tensors (rank 0..2 in practice) with reverse-mode autodiff
// over a dynamically recorded graph. Scalar type is a template parameter:
// float for training, double for gradient checking and oracles.
//
// Graphs are thread-confined. Parameter storage (the data vector) may be
// shared across threads read-only via leaf_view(); each graph keeps its own
// grad buffers.

namespace detail {

// Reductions accumulate in double regardless of T. This keeps the float32
// chunkwise-vs-sequential comparison meaningful at the 1e-5 tolerance.
template <typename T>
inline double dot(const T* a, const T* b, std::size_t n) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += static_cast<double>(a[i]) * static_cast<double>(b[i]);
        s1 += static_cast<double>(a[i + 1]) * static_cast<double>(b[i + 1]);
        s2 += static_cast<double>(a[i + 2]) * static_cast<double>(b[i + 2]);
        s3 += static_cast<double>(a[i + 3]) * static_cast<double>(b[i + 3]);
    }
    double s = (s0 + s1) + (s2 + s3);
    for (; i < n; ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    return s;
}

// C (m x n) = A (m x k) * B (k x n), all row-major. B is packed transposed so
// every output element is one contiguous dot product.
template <typename T>
inline void dense_mm(const T* a, const T* b, T* c, int m, int k, int n,
                     std::vector<T>& bt_scratch) {
    if (n == 1) {
        for (int i = 0; i < m; ++i) {
            // stride-n access degenerates to contiguous when n == 1
            c[i] = static_cast<T>(dot(a + static_cast<std::size_t>(i) * k, b, static_cast<std::size_t>(k)));
        }
        return;
    }
    bt_scratch.resize(static_cast<std::size_t>(k) * n);
    for (int p = 0; p < k; ++p) {
        for (int j = 0; j < n; ++j) {
            bt_scratch[static_cast<std::size_t>(j) * k + p] = b[static_cast<std::size_t>(p) * n + j];
        }
    }
    for (int i = 0; i < m; ++i) {
        const T* arow = a + static_cast<std::size_t>(i) * k;
        T* crow = c + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            crow[j] = static_cast<T>(dot(arow, bt_scratch.data() + static_cast<std::size_t>(j) * k,
                                         static_cast<std::size_t>(k)));
        }
    }
}

template <typename T>
inline void dense_mm(const T* a, const T* b, T* c, int m, int k, int n) {
    std::vector<T> scratch;
    dense_mm(a, b, c, m, k, n, scratch);
}

}  // namespace detail

template <typename T>
struct Node {
    std::vector<int> shape;
    std::shared_ptr<std::vector<T>> data;
    std::vector<T> grad;  // lazily allocated, same length as data
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node<T>>> parents;
    std::function<void(Node<T>&)> backprop;  // reads this->grad, accumulates into parents
    const char* op = "leaf";

    std::size_t numel() const { return data ? data->size() : 0; }

    void ensure_grad() {
        if (grad.size() != numel()) grad.assign(numel(), T(0));
    }

    ~Node() {
        // Iterative teardown; deep graphs would otherwise recurse in ~shared_ptr.
        std::vector<std::shared_ptr<Node<T>>> stack(std::move(parents));
        while (!stack.empty()) {
            auto n = std::move(stack.back());
            stack.pop_back();
            if (n && n.use_count() == 1) {
                for (auto& p : n->parents) stack.push_back(std::move(p));
                n->parents.clear();
                n->backprop = nullptr;
            }
        }
    }
};

template <typename T>
class TensorT {
public:
    TensorT() = default;
    explicit TensorT(std::shared_ptr<Node<T>> n) : node_(std::move(n)) {}

    static TensorT zeros(std::vector<int> shape, bool requires_grad = false) {
        return filled(std::move(shape), T(0), requires_grad);
    }

    static TensorT filled(std::vector<int> shape, T value, bool requires_grad = false) {
        auto node = std::make_shared<Node<T>>();
        node->shape = std::move(shape);
        node->data = std::make_shared<std::vector<T>>(count(node->shape), value);
        node->requires_grad = requires_grad;
        return TensorT(std::move(node));
    }

    static TensorT from_data(std::vector<int> shape, std::vector<T> values,
                             bool requires_grad = false) {
        auto node = std::make_shared<Node<T>>();
        node->shape = std::move(shape);
        if (count(node->shape) != values.size()) {
            throw ShapeMismatch("data length " + std::to_string(values.size()) +
                                " does not match shape " + shape_str(node->shape));
        }
        node->data = std::make_shared<std::vector<T>>(std::move(values));
        node->requires_grad = requires_grad;
        return TensorT(std::move(node));
    }

    static TensorT scalar(T value, bool requires_grad = false) {
        return from_data({1}, {value}, requires_grad);
    }

    static TensorT eye(int n) {
        TensorT t = zeros({n, n});
        for (int i = 0; i < n; ++i) t.mut_data()[static_cast<std::size_t>(i) * n + i] = T(1);
        return t;
    }

    // New leaf sharing this tensor's storage; own grad buffer. Used to hand a
    // read-only parameter to another thread's graph.
    TensorT leaf_view() const {
        auto node = std::make_shared<Node<T>>();
        node->shape = node_->shape;
        node->data = node_->data;
        node->requires_grad = node_->requires_grad;
        return TensorT(std::move(node));
    }

    bool defined() const { return node_ != nullptr; }
    const std::vector<int>& shape() const { return node_->shape; }
    int dim(int i) const { return node_->shape[static_cast<std::size_t>(i)]; }
    int rank() const { return static_cast<int>(node_->shape.size()); }
    std::size_t numel() const { return node_->numel(); }
    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool v) { node_->requires_grad = v; }

    const std::vector<T>& data() const { return *node_->data; }
    std::vector<T>& mut_data() { return *node_->data; }
    const std::vector<T>& grad() const { return node_->grad; }

    T value_at(std::size_t i) const { return (*node_->data)[i]; }
    T value_at(int i, int j) const {
        return (*node_->data)[static_cast<std::size_t>(i) * dim(1) + j];
    }

    std::shared_ptr<Node<T>> node() const { return node_; }
    Node<T>* raw() const { return node_.get(); }

    static std::size_t count(const std::vector<int>& shape) {
        std::size_t n = 1;
        for (int d : shape) n *= static_cast<std::size_t>(d);
        return n;
    }

    static std::string shape_str(const std::vector<int>& s) {
        std::string out = "(";
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (i) out += "x";
            out += std::to_string(s[i]);
        }
        out += ")";
        return out;
    }

private:
    std::shared_ptr<Node<T>> node_;
};

using Tensor = TensorT<float>;
using Tensor64 = TensorT<double>;

namespace detail {

template <typename T>
inline TensorT<T> make_op(std::vector<int> shape, std::vector<T> values,
                          std::vector<TensorT<T>> inputs, const char* op,
                          std::function<void(Node<T>&)> backprop) {
    auto node = std::make_shared<Node<T>>();
    node->shape = std::move(shape);
    node->data = std::make_shared<std::vector<T>>(std::move(values));
    node->op = op;
    bool needs = false;
    for (const auto& in : inputs) needs = needs || in.requires_grad();
    node->requires_grad = needs;
    if (needs) {
        node->parents.reserve(inputs.size());
        for (const auto& in : inputs) node->parents.push_back(in.node());
        node->backprop = std::move(backprop);
    }
    return TensorT<T>(std::move(node));
}

template <typename T>
inline void accumulate(Node<T>* target, const std::vector<T>& delta) {
    if (!target->requires_grad) return;
    target->ensure_grad();
    for (std::size_t i = 0; i < delta.size(); ++i) target->grad[i] += delta[i];
}

template <typename T>
inline void check_same_shape(const TensorT<T>& a, const TensorT<T>& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeMismatch(std::string(op) + ": shapes " + TensorT<T>::shape_str(a.shape()) +
                            " and " + TensorT<T>::shape_str(b.shape()) + " differ");
    }
}

template <typename T>
inline std::pair<int, int> as_matrix(const TensorT<T>& t, const char* op) {
    if (t.rank() == 2) return {t.dim(0), t.dim(1)};
    if (t.rank() == 1) return {1, t.dim(0)};
    throw ShapeMismatch(std::string(op) + ": expected rank 1 or 2, got shape " +
                        TensorT<T>::shape_str(t.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
    detail::check_same_shape(a, b, "add");
    std::vector<T> out(a.numel());
    const auto& av = a.data();
    const auto& bv = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    Node<T>* an = a.raw();
    Node<T>* bn = b.raw();
    return detail::make_op<T>(
        a.shape(), std::move(out), {a, b}, "add", [an, bn](Node<T>& self) {
            detail::accumulate(an, self.grad);
            detail::accumulate(bn, self.grad);
        });
}

template <typename T>
TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b) {
    detail::check_same_shape(a, b, "sub");
    std::vector<T> out(a.numel());
    const auto& av = a.data();
    const auto& bv = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
    Node<T>* an = a.raw();
    Node<T>* bn = b.raw();
    return detail::make_op<T>(
        a.shape(), std::move(out), {a, b}, "sub", [an, bn](Node<T>& self) {
            detail::accumulate(an, self.grad);
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] -= self.grad[i];
            }
        });
}

template <typename T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b) {
    detail::check_same_shape(a, b, "mul");
    std::vector<T> out(a.numel());
    const auto& av = a.data();
    const auto& bv = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    Node<T>* an = a.raw();
    Node<T>* bn = b.raw();
    auto adata = a.node()->data;
    auto bdata = b.node()->data;
    return detail::make_op<T>(
        a.shape(), std::move(out), {a, b}, "mul", [an, bn, adata, bdata](Node<T>& self) {
            if (an->requires_grad) {
                an->ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i)
                    an->grad[i] += self.grad[i] * (*bdata)[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i)
                    bn->grad[i] += self.grad[i] * (*adata)[i];
            }
        });
}

template <typename T>
TensorT<T> scale(const TensorT<T>& a, T c) {
    std::vector<T> out(a.numel());
    const auto& av = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * av[i];
    Node<T>* an = a.raw();
    return detail::make_op<T>(a.shape(), std::move(out), {a}, "scale", [an, c](Node<T>& self) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += c * self.grad[i];
        }
    });
}

// Scalar-tensor broadcast: s has exactly one element.
template <typename T>
TensorT<T> mul_scalar(const TensorT<T>& a, const TensorT<T>& s) {
    if (s.numel() != 1) {
        throw ShapeMismatch("mul_scalar: scalar operand has shape " +
                            TensorT<T>::shape_str(s.shape()));
    }
    const T sv = s.value_at(std::size_t{0});
    std::vector<T> out(a.numel());
    const auto& av = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = sv * av[i];
    Node<T>* an = a.raw();
    Node<T>* sn = s.raw();
    auto adata = a.node()->data;
    return detail::make_op<T>(
        a.shape(), std::move(out), {a, s}, "mul_scalar", [an, sn, sv, adata](Node<T>& self) {
            if (an->requires_grad) {
                an->ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i)
                    an->grad[i] += sv * self.grad[i];
            }
            if (sn->requires_grad) {
                sn->ensure_grad();
                double acc = 0.0;
                for (std::size_t i = 0; i < self.grad.size(); ++i)
                    acc += static_cast<double>(self.grad[i]) * static_cast<double>((*adata)[i]);
                sn->grad[0] += static_cast<T>(acc);
            }
        });
}

template <typename T>
TensorT<T> sigmoid(const TensorT<T>& a) {
    std::vector<T> out(a.numel());
    const auto& av = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        const T x = av[i];
        out[i] = x >= T(0) ? T(1) / (T(1) + std::exp(-x))
                           : static_cast<T>(std::exp(x) / (T(1) + std::exp(x)));
    }
    Node<T>* an = a.raw();
    auto ovals = std::make_shared<std::vector<T>>(out);
    return detail::make_op<T>(a.shape(), std::move(out), {a}, "sigmoid",
                              [an, ovals](Node<T>& self) {
                                  if (!an->requires_grad) return;
                                  an->ensure_grad();
                                  for (std::size_t i = 0; i < self.grad.size(); ++i) {
                                      const T y = (*ovals)[i];
                                      an->grad[i] += self.grad[i] * y * (T(1) - y);
                                  }
                              });
}

template <typename T>
TensorT<T> silu(const TensorT<T>& a) {
    std::vector<T> out(a.numel());
    std::vector<T> sig(a.numel());
    const auto& av = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        const T x = av[i];
        const T s = x >= T(0) ? T(1) / (T(1) + std::exp(-x))
                              : static_cast<T>(std::exp(x) / (T(1) + std::exp(x)));
        sig[i] = s;
        out[i] = x * s;
    }
    Node<T>* an = a.raw();
    auto adata = a.node()->data;
    auto sigv = std::make_shared<std::vector<T>>(std::move(sig));
    return detail::make_op<T>(
        a.shape(), std::move(out), {a}, "silu", [an, adata, sigv](Node<T>& self) {
            if (!an->requires_grad) return;
            an->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                const T x = (*adata)[i];
                const T s = (*sigv)[i];
                an->grad[i] += self.grad[i] * (s + x * s * (T(1) - s));
            }
        });
}

template <typename T>
TensorT<T> exp_op(const TensorT<T>& a) {
    std::vector<T> out(a.numel());
    const auto& av = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(av[i]);
    Node<T>* an = a.raw();
    auto ovals = std::make_shared<std::vector<T>>(out);
    return detail::make_op<T>(a.shape(), std::move(out), {a}, "exp",
                              [an, ovals](Node<T>& self) {
                                  if (!an->requires_grad) return;
                                  an->ensure_grad();
                                  for (std::size_t i = 0; i < self.grad.size(); ++i)
                                      an->grad[i] += self.grad[i] * (*ovals)[i];
                              });
}

template <typename T>
TensorT<T> log_op(const TensorT<T>& a) {
    std::vector<T> out(a.numel());
    const auto& av = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(av[i]);
    Node<T>* an = a.raw();
    auto adata = a.node()->data;
    return detail::make_op<T>(a.shape(), std::move(out), {a}, "log",
                              [an, adata](Node<T>& self) {
                                  if (!an->requires_grad) return;
                                  an->ensure_grad();
                                  for (std::size_t i = 0; i < self.grad.size(); ++i)
                                      an->grad[i] += self.grad[i] / (*adata)[i];
                              });
}

// ---------------------------------------------------------------------------
// shape ops
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> reshape(const TensorT<T>& a, std::vector<int> shape) {
    if (TensorT<T>::count(shape) != a.numel()) {
        throw ShapeMismatch("reshape: cannot view " + TensorT<T>::shape_str(a.shape()) +
                            " as " + TensorT<T>::shape_str(shape));
    }
    Node<T>* an = a.raw();
    return detail::make_op<T>(std::move(shape), a.data(), {a}, "reshape",
                              [an](Node<T>& self) { detail::accumulate(an, self.grad); });
}

template <typename T>
TensorT<T> transpose(const TensorT<T>& a) {
    auto [m, n] = detail::as_matrix(a, "transpose");
    std::vector<T> out(a.numel());
    const auto& av = a.data();
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            out[static_cast<std::size_t>(j) * m + i] = av[static_cast<std::size_t>(i) * n + j];
        }
    }
    Node<T>* an = a.raw();
    const int mm = m, nn = n;
    return detail::make_op<T>({n, m}, std::move(out), {a}, "transpose",
                              [an, mm, nn](Node<T>& self) {
                                  if (!an->requires_grad) return;
                                  an->ensure_grad();
                                  for (int i = 0; i < mm; ++i) {
                                      for (int j = 0; j < nn; ++j) {
                                          an->grad[static_cast<std::size_t>(i) * nn + j] +=
                                              self.grad[static_cast<std::size_t>(j) * mm + i];
                                      }
                                  }
                              });
}

template <typename T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b) {
    auto [m, ka] = detail::as_matrix(a, "matmul");
    auto [kb, n] = detail::as_matrix(b, "matmul");
    if (ka != kb) {
        throw ShapeMismatch("matmul: inner dims of " + TensorT<T>::shape_str(a.shape()) +
                            " and " + TensorT<T>::shape_str(b.shape()) + " differ");
    }
    std::vector<T> out(static_cast<std::size_t>(m) * n);
    detail::dense_mm(a.data().data(), b.data().data(), out.data(), m, ka, n);
    std::vector<int> oshape;
    if (a.rank() == 1 && b.rank() == 1) {
        oshape = {n};  // (1xk)*(k x n) -> row vector
    } else if (a.rank() == 1) {
        oshape = {n};
    } else if (b.rank() == 1) {
        oshape = {m, n};
    } else {
        oshape = {m, n};
    }
    Node<T>* an = a.raw();
    Node<T>* bn = b.raw();
    auto adata = a.node()->data;
    auto bdata = b.node()->data;
    const int M = m, K = ka, N = n;
    return detail::make_op<T>(
        std::move(oshape), std::move(out), {a, b}, "matmul",
        [an, bn, adata, bdata, M, K, N](Node<T>& self) {
            // dA = dC * B^T  (m x k);  dB = A^T * dC  (k x n)
            if (an->requires_grad) {
                an->ensure_grad();
                const T* g = self.grad.data();
                const T* bp = bdata->data();
                for (int i = 0; i < M; ++i) {
                    for (int p = 0; p < K; ++p) {
                        // rows of B are contiguous; dot g-row with B-row
                        an->grad[static_cast<std::size_t>(i) * K + p] += static_cast<T>(
                            detail::dot(g + static_cast<std::size_t>(i) * N,
                                        bp + static_cast<std::size_t>(p) * N,
                                        static_cast<std::size_t>(N)));
                    }
                }
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                const T* g = self.grad.data();
                const T* ap = adata->data();
                // accumulate row-wise: dB[p, :] += sum_i A[i, p] * g[i, :]
                for (int i = 0; i < M; ++i) {
                    const T* grow = g + static_cast<std::size_t>(i) * N;
                    const T* arow = ap + static_cast<std::size_t>(i) * K;
                    for (int p = 0; p < K; ++p) {
                        const T w = arow[p];
                        if (w == T(0)) continue;
                        T* brow = bn->grad.data() + static_cast<std::size_t>(p) * N;
                        for (int j = 0; j < N; ++j) brow[j] += w * grow[j];
                    }
                }
            }
        });
}

template <typename T>
TensorT<T> gather_rows(const TensorT<T>& a, std::vector<int> rows) {
    if (a.rank() != 2) {
        throw ShapeMismatch("gather_rows: expected rank-2 input, got " +
                            TensorT<T>::shape_str(a.shape()));
    }
    const int n = a.dim(0), d = a.dim(1);
    std::vector<T> out(rows.size() * static_cast<std::size_t>(d));
    const auto& av = a.data();
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const int src = rows[r];
        if (src < 0 || src >= n) {
            throw ShapeMismatch("gather_rows: row " + std::to_string(src) + " out of range [0," +
                                std::to_string(n) + ")");
        }
        for (int j = 0; j < d; ++j) {
            out[r * static_cast<std::size_t>(d) + j] = av[static_cast<std::size_t>(src) * d + j];
        }
    }
    Node<T>* an = a.raw();
    auto idx = std::make_shared<std::vector<int>>(std::move(rows));
    const int dd = d;
    return detail::make_op<T>({static_cast<int>(idx->size()), d}, std::move(out), {a},
                              "gather_rows", [an, idx, dd](Node<T>& self) {
                                  if (!an->requires_grad) return;
                                  an->ensure_grad();
                                  for (std::size_t r = 0; r < idx->size(); ++r) {
                                      const int dst = (*idx)[r];
                                      for (int j = 0; j < dd; ++j) {
                                          an->grad[static_cast<std::size_t>(dst) * dd + j] +=
                                              self.grad[r * static_cast<std::size_t>(dd) + j];
                                      }
                                  }
                              });
}

template <typename T>
TensorT<T> concat_rows(const std::vector<TensorT<T>>& parts) {
    if (parts.empty()) throw ShapeMismatch("concat_rows: no inputs");
    const int d = parts[0].rank() == 2 ? parts[0].dim(1) : parts[0].dim(0);
    int total = 0;
    for (const auto& p : parts) {
        auto [m, w] = detail::as_matrix(p, "concat_rows");
        if (w != d) {
            throw ShapeMismatch("concat_rows: column mismatch " + std::to_string(w) + " vs " +
                                std::to_string(d));
        }
        total += m;
    }
    std::vector<T> out;
    out.reserve(static_cast<std::size_t>(total) * d);
    for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
    std::vector<Node<T>*> raws;
    std::vector<int> row_counts;
    for (const auto& p : parts) {
        raws.push_back(p.raw());
        row_counts.push_back(detail::as_matrix(p, "concat_rows").first);
    }
    const int dd = d;
    return detail::make_op<T>(
        {total, d}, std::move(out), parts, "concat_rows",
        [raws, row_counts, dd](Node<T>& self) {
            std::size_t offset = 0;
            for (std::size_t p = 0; p < raws.size(); ++p) {
                const std::size_t len = static_cast<std::size_t>(row_counts[p]) * dd;
                if (raws[p]->requires_grad) {
                    raws[p]->ensure_grad();
                    for (std::size_t i = 0; i < len; ++i)
                        raws[p]->grad[i] += self.grad[offset + i];
                }
                offset += len;
            }
        });
}

template <typename T>
TensorT<T> concat_cols(const std::vector<TensorT<T>>& parts) {
    if (parts.empty()) throw ShapeMismatch("concat_cols: no inputs");
    const int m = parts[0].dim(0);
    int total = 0;
    for (const auto& p : parts) {
        if (p.rank() != 2 || p.dim(0) != m) {
            throw ShapeMismatch("concat_cols: row mismatch at shape " +
                                TensorT<T>::shape_str(p.shape()));
        }
        total += p.dim(1);
    }
    std::vector<T> out(static_cast<std::size_t>(m) * total);
    int col0 = 0;
    for (const auto& p : parts) {
        const int w = p.dim(1);
        const auto& pv = p.data();
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < w; ++j) {
                out[static_cast<std::size_t>(i) * total + col0 + j] =
                    pv[static_cast<std::size_t>(i) * w + j];
            }
        }
        col0 += w;
    }
    std::vector<Node<T>*> raws;
    std::vector<int> widths;
    for (const auto& p : parts) {
        raws.push_back(p.raw());
        widths.push_back(p.dim(1));
    }
    const int mm = m, tt = total;
    return detail::make_op<T>(
        {m, total}, std::move(out), parts, "concat_cols",
        [raws, widths, mm, tt](Node<T>& self) {
            int c0 = 0;
            for (std::size_t p = 0; p < raws.size(); ++p) {
                const int w = widths[p];
                if (raws[p]->requires_grad) {
                    raws[p]->ensure_grad();
                    for (int i = 0; i < mm; ++i) {
                        for (int j = 0; j < w; ++j) {
                            raws[p]->grad[static_cast<std::size_t>(i) * w + j] +=
                                self.grad[static_cast<std::size_t>(i) * tt + c0 + j];
                        }
                    }
                }
                c0 += w;
            }
        });
}

// mat (m x n) + row (n), broadcast over rows.
template <typename T>
TensorT<T> add_rows(const TensorT<T>& mat, const TensorT<T>& row) {
    auto [m, n] = detail::as_matrix(mat, "add_rows");
    if (row.numel() != static_cast<std::size_t>(n)) {
        throw ShapeMismatch("add_rows: row has shape " + TensorT<T>::shape_str(row.shape()) +
                            ", matrix " + TensorT<T>::shape_str(mat.shape()));
    }
    std::vector<T> out(mat.numel());
    const auto& mv = mat.data();
    const auto& rv = row.data();
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            out[static_cast<std::size_t>(i) * n + j] = mv[static_cast<std::size_t>(i) * n + j] + rv[static_cast<std::size_t>(j)];
        }
    }
    Node<T>* mn = mat.raw();
    Node<T>* rn = row.raw();
    const int mm = m, nn = n;
    return detail::make_op<T>(
        mat.shape(), std::move(out), {mat, row}, "add_rows", [mn, rn, mm, nn](Node<T>& self) {
            detail::accumulate(mn, self.grad);
            if (rn->requires_grad) {
                rn->ensure_grad();
                for (int j = 0; j < nn; ++j) {
                    double acc = 0.0;
                    for (int i = 0; i < mm; ++i)
                        acc += static_cast<double>(self.grad[static_cast<std::size_t>(i) * nn + j]);
                    rn->grad[static_cast<std::size_t>(j)] += static_cast<T>(acc);
                }
            }
        });
}

// mat (m x n) * row (n), broadcast over rows.
template <typename T>
TensorT<T> mul_rows(const TensorT<T>& mat, const TensorT<T>& row) {
    auto [m, n] = detail::as_matrix(mat, "mul_rows");
    if (row.numel() != static_cast<std::size_t>(n)) {
        throw ShapeMismatch("mul_rows: row has shape " + TensorT<T>::shape_str(row.shape()) +
                            ", matrix " + TensorT<T>::shape_str(mat.shape()));
    }
    std::vector<T> out(mat.numel());
    const auto& mv = mat.data();
    const auto& rv = row.data();
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            out[static_cast<std::size_t>(i) * n + j] =
                mv[static_cast<std::size_t>(i) * n + j] * rv[static_cast<std::size_t>(j)];
        }
    }
    Node<T>* mn = mat.raw();
    Node<T>* rn = row.raw();
    auto mdata = mat.node()->data;
    auto rdata = row.node()->data;
    const int mm = m, nn = n;
    return detail::make_op<T>(
        mat.shape(), std::move(out), {mat, row}, "mul_rows",
        [mn, rn, mdata, rdata, mm, nn](Node<T>& self) {
            if (mn->requires_grad) {
                mn->ensure_grad();
                for (int i = 0; i < mm; ++i) {
                    for (int j = 0; j < nn; ++j) {
                        mn->grad[static_cast<std::size_t>(i) * nn + j] +=
                            self.grad[static_cast<std::size_t>(i) * nn + j] *
                            (*rdata)[static_cast<std::size_t>(j)];
                    }
                }
            }
            if (rn->requires_grad) {
                rn->ensure_grad();
                for (int j = 0; j < nn; ++j) {
                    double acc = 0.0;
                    for (int i = 0; i < mm; ++i) {
                        acc += static_cast<double>(self.grad[static_cast<std::size_t>(i) * nn + j]) *
                               static_cast<double>((*mdata)[static_cast<std::size_t>(i) * nn + j]);
                    }
                    rn->grad[static_cast<std::size_t>(j)] += static_cast<T>(acc);
                }
            }
        });
}

// ---------------------------------------------------------------------------
// reductions and normalizations
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> sum_all(const TensorT<T>& a) {
    double acc = 0.0;
    for (const T v : a.data()) acc += static_cast<double>(v);
    Node<T>* an = a.raw();
    return detail::make_op<T>({1}, {static_cast<T>(acc)}, {a}, "sum_all", [an](Node<T>& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        const T g = self.grad[0];
        for (auto& v : an->grad) v += g;
    });
}

template <typename T>
TensorT<T> mean_all(const TensorT<T>& a) {
    if (a.numel() == 0) throw ShapeMismatch("mean_all: empty tensor");
    double acc = 0.0;
    for (const T v : a.data()) acc += static_cast<double>(v);
    const T inv = static_cast<T>(1.0 / static_cast<double>(a.numel()));
    Node<T>* an = a.raw();
    return detail::make_op<T>({1}, {static_cast<T>(acc * static_cast<double>(inv))}, {a},
                              "mean_all", [an, inv](Node<T>& self) {
                                  if (!an->requires_grad) return;
                                  an->ensure_grad();
                                  const T g = self.grad[0] * inv;
                                  for (auto& v : an->grad) v += g;
                              });
}

// axis 0: column sums -> (n); axis 1: row sums -> (m)
template <typename T>
TensorT<T> sum_axis(const TensorT<T>& a, int axis) {
    auto [m, n] = detail::as_matrix(a, "sum_axis");
    const auto& av = a.data();
    Node<T>* an = a.raw();
    if (axis == 0) {
        std::vector<T> out(static_cast<std::size_t>(n));
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int i = 0; i < m; ++i) acc += static_cast<double>(av[static_cast<std::size_t>(i) * n + j]);
            out[static_cast<std::size_t>(j)] = static_cast<T>(acc);
        }
        const int mm = m, nn = n;
        return detail::make_op<T>({n}, std::move(out), {a}, "sum_axis0",
                                  [an, mm, nn](Node<T>& self) {
                                      if (!an->requires_grad) return;
                                      an->ensure_grad();
                                      for (int i = 0; i < mm; ++i)
                                          for (int j = 0; j < nn; ++j)
                                              an->grad[static_cast<std::size_t>(i) * nn + j] +=
                                                  self.grad[static_cast<std::size_t>(j)];
                                  });
    }
    if (axis == 1) {
        std::vector<T> out(static_cast<std::size_t>(m));
        for (int i = 0; i < m; ++i) {
            double acc = 0.0;
            for (int j = 0; j < n; ++j) acc += static_cast<double>(av[static_cast<std::size_t>(i) * n + j]);
            out[static_cast<std::size_t>(i)] = static_cast<T>(acc);
        }
        const int mm = m, nn = n;
        return detail::make_op<T>({m}, std::move(out), {a}, "sum_axis1",
                                  [an, mm, nn](Node<T>& self) {
                                      if (!an->requires_grad) return;
                                      an->ensure_grad();
                                      for (int i = 0; i < mm; ++i)
                                          for (int j = 0; j < nn; ++j)
                                              an->grad[static_cast<std::size_t>(i) * nn + j] +=
                                                  self.grad[static_cast<std::size_t>(i)];
                                  });
    }
    throw ShapeMismatch("sum_axis: axis must be 0 or 1");
}

template <typename T>
TensorT<T> mean_axis(const TensorT<T>& a, int axis) {
    auto [m, n] = detail::as_matrix(a, "mean_axis");
    const T inv = axis == 0 ? static_cast<T>(1.0 / m) : static_cast<T>(1.0 / n);
    return scale(sum_axis(a, axis), inv);
}

template <typename T>
TensorT<T> softmax_rows(const TensorT<T>& a) {
    auto [m, n] = detail::as_matrix(a, "softmax");
    std::vector<T> out(a.numel());
    const auto& av = a.data();
    for (int i = 0; i < m; ++i) {
        const T* row = av.data() + static_cast<std::size_t>(i) * n;
        T* orow = out.data() + static_cast<std::size_t>(i) * n;
        T mx = row[0];
        for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
        double z = 0.0;
        for (int j = 0; j < n; ++j) {
            orow[j] = std::exp(row[j] - mx);
            z += static_cast<double>(orow[j]);
        }
        const T invz = static_cast<T>(1.0 / z);
        for (int j = 0; j < n; ++j) orow[j] *= invz;
    }
    Node<T>* an = a.raw();
    auto yvals = std::make_shared<std::vector<T>>(out);
    const int mm = m, nn = n;
    return detail::make_op<T>(
        a.shape(), std::move(out), {a}, "softmax", [an, yvals, mm, nn](Node<T>& self) {
            if (!an->requires_grad) return;
            an->ensure_grad();
            for (int i = 0; i < mm; ++i) {
                const T* y = yvals->data() + static_cast<std::size_t>(i) * nn;
                const T* g = self.grad.data() + static_cast<std::size_t>(i) * nn;
                double dotgy = 0.0;
                for (int j = 0; j < nn; ++j) dotgy += static_cast<double>(g[j]) * static_cast<double>(y[j]);
                T* dst = an->grad.data() + static_cast<std::size_t>(i) * nn;
                for (int j = 0; j < nn; ++j)
                    dst[j] += y[j] * (g[j] - static_cast<T>(dotgy));
            }
        });
}

// Row-wise (x - mean) / sqrt(var + eps). Affine gain/bias applied outside via
// mul_rows/add_rows.
template <typename T>
TensorT<T> layer_norm_rows(const TensorT<T>& a, T eps = T(1e-5)) {
    auto [m, n] = detail::as_matrix(a, "layer_norm");
    std::vector<T> out(a.numel());
    std::vector<T> inv_std(static_cast<std::size_t>(m));
    const auto& av = a.data();
    for (int i = 0; i < m; ++i) {
        const T* row = av.data() + static_cast<std::size_t>(i) * n;
        double mu = 0.0;
        for (int j = 0; j < n; ++j) mu += static_cast<double>(row[j]);
        mu /= n;
        double var = 0.0;
        for (int j = 0; j < n; ++j) {
            const double d = static_cast<double>(row[j]) - mu;
            var += d * d;
        }
        var /= n;
        const double is = 1.0 / std::sqrt(var + static_cast<double>(eps));
        inv_std[static_cast<std::size_t>(i)] = static_cast<T>(is);
        T* orow = out.data() + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j)
            orow[j] = static_cast<T>((static_cast<double>(row[j]) - mu) * is);
    }
    Node<T>* an = a.raw();
    auto yvals = std::make_shared<std::vector<T>>(out);
    auto isv = std::make_shared<std::vector<T>>(std::move(inv_std));
    const int mm = m, nn = n;
    return detail::make_op<T>(
        a.shape(), std::move(out), {a}, "layer_norm", [an, yvals, isv, mm, nn](Node<T>& self) {
            if (!an->requires_grad) return;
            an->ensure_grad();
            for (int i = 0; i < mm; ++i) {
                const T* y = yvals->data() + static_cast<std::size_t>(i) * nn;
                const T* g = self.grad.data() + static_cast<std::size_t>(i) * nn;
                double gmean = 0.0, gymean = 0.0;
                for (int j = 0; j < nn; ++j) {
                    gmean += static_cast<double>(g[j]);
                    gymean += static_cast<double>(g[j]) * static_cast<double>(y[j]);
                }
                gmean /= nn;
                gymean /= nn;
                const double is = static_cast<double>((*isv)[static_cast<std::size_t>(i)]);
                T* dst = an->grad.data() + static_cast<std::size_t>(i) * nn;
                for (int j = 0; j < nn; ++j) {
                    dst[j] += static_cast<T>(is * (static_cast<double>(g[j]) - gmean -
                                                   static_cast<double>(y[j]) * gymean));
                }
            }
        });
}

// Row-wise x / (||x|| + eps). The epsilon keeps the zero vector finite.
template <typename T>
TensorT<T> l2_normalize_rows(const TensorT<T>& a, T eps = T(1e-6)) {
    auto [m, n] = detail::as_matrix(a, "l2_normalize");
    std::vector<T> out(a.numel());
    std::vector<T> norms(static_cast<std::size_t>(m));
    const auto& av = a.data();
    for (int i = 0; i < m; ++i) {
        const T* row = av.data() + static_cast<std::size_t>(i) * n;
        const double s = std::sqrt(detail::dot(row, row, static_cast<std::size_t>(n)));
        norms[static_cast<std::size_t>(i)] = static_cast<T>(s);
        const double denom = s + static_cast<double>(eps);
        T* orow = out.data() + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) orow[j] = static_cast<T>(static_cast<double>(row[j]) / denom);
    }
    Node<T>* an = a.raw();
    auto adata = a.node()->data;
    auto nv = std::make_shared<std::vector<T>>(std::move(norms));
    const int mm = m, nn = n;
    const T e = eps;
    return detail::make_op<T>(
        a.shape(), std::move(out), {a}, "l2_normalize",
        [an, adata, nv, mm, nn, e](Node<T>& self) {
            if (!an->requires_grad) return;
            an->ensure_grad();
            for (int i = 0; i < mm; ++i) {
                const T* x = adata->data() + static_cast<std::size_t>(i) * nn;
                const T* g = self.grad.data() + static_cast<std::size_t>(i) * nn;
                const double s = static_cast<double>((*nv)[static_cast<std::size_t>(i)]);
                const double denom = s + static_cast<double>(e);
                double gx = 0.0;
                for (int j = 0; j < nn; ++j) gx += static_cast<double>(g[j]) * static_cast<double>(x[j]);
                // d x_j = g_j / denom - x_j * <g, x> / (s * denom^2); the second
                // term vanishes at the zero vector.
                const double coef = s > 1e-30 ? gx / (s * denom * denom) : 0.0;
                T* dst = an->grad.data() + static_cast<std::size_t>(i) * nn;
                for (int j = 0; j < nn; ++j) {
                    dst[j] += static_cast<T>(static_cast<double>(g[j]) / denom -
                                             static_cast<double>(x[j]) * coef);
                }
            }
        });
}

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> mse(const TensorT<T>& a, const TensorT<T>& b) {
    detail::check_same_shape(a, b, "mse");
    if (a.numel() == 0) throw ShapeMismatch("mse: empty tensors");
    const auto& av = a.data();
    const auto& bv = b.data();
    double acc = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) {
        const double d = static_cast<double>(av[i]) - static_cast<double>(bv[i]);
        acc += d * d;
    }
    const T inv = static_cast<T>(1.0 / static_cast<double>(a.numel()));
    Node<T>* an = a.raw();
    Node<T>* bn = b.raw();
    auto adata = a.node()->data;
    auto bdata = b.node()->data;
    return detail::make_op<T>(
        {1}, {static_cast<T>(acc / static_cast<double>(a.numel()))}, {a, b}, "mse",
        [an, bn, adata, bdata, inv](Node<T>& self) {
            const T g2 = T(2) * self.grad[0] * inv;
            if (an->requires_grad) {
                an->ensure_grad();
                for (std::size_t i = 0; i < adata->size(); ++i)
                    an->grad[i] += g2 * ((*adata)[i] - (*bdata)[i]);
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (std::size_t i = 0; i < adata->size(); ++i)
                    bn->grad[i] -= g2 * ((*adata)[i] - (*bdata)[i]);
            }
        });
}

// Mean over rows of -log softmax(logits)[target].
template <typename T>
TensorT<T> cross_entropy(const TensorT<T>& logits, const std::vector<int>& targets) {
    auto [m, n] = detail::as_matrix(logits, "cross_entropy");
    if (static_cast<std::size_t>(m) != targets.size()) {
        throw ShapeMismatch("cross_entropy: " + std::to_string(targets.size()) +
                            " targets for " + std::to_string(m) + " rows");
    }
    if (m == 0) throw EmptyMaskSet("cross_entropy: no target rows");
    const auto& lv = logits.data();
    auto probs = std::make_shared<std::vector<T>>(logits.numel());
    double total = 0.0;
    for (int i = 0; i < m; ++i) {
        const int t = targets[static_cast<std::size_t>(i)];
        if (t < 0 || t >= n) {
            throw ShapeMismatch("cross_entropy: target " + std::to_string(t) +
                                " out of range [0," + std::to_string(n) + ")");
        }
        const T* row = lv.data() + static_cast<std::size_t>(i) * n;
        T mx = row[0];
        for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
        double z = 0.0;
        T* prow = probs->data() + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            prow[j] = std::exp(row[j] - mx);
            z += static_cast<double>(prow[j]);
        }
        for (int j = 0; j < n; ++j) prow[j] = static_cast<T>(static_cast<double>(prow[j]) / z);
        total += std::log(z) - static_cast<double>(row[t] - mx);
    }
    Node<T>* ln = logits.raw();
    auto tgt = std::make_shared<std::vector<int>>(targets);
    const int mm = m, nn = n;
    return detail::make_op<T>(
        {1}, {static_cast<T>(total / m)}, {logits}, "cross_entropy",
        [ln, probs, tgt, mm, nn](Node<T>& self) {
            if (!ln->requires_grad) return;
            ln->ensure_grad();
            const T g = self.grad[0] / static_cast<T>(mm);
            for (int i = 0; i < mm; ++i) {
                const T* p = probs->data() + static_cast<std::size_t>(i) * nn;
                T* dst = ln->grad.data() + static_cast<std::size_t>(i) * nn;
                const int t = (*tgt)[static_cast<std::size_t>(i)];
                for (int j = 0; j < nn; ++j) {
                    dst[j] += g * (p[j] - (j == t ? T(1) : T(0)));
                }
            }
        });
}

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

template <typename T>
void backward(const TensorT<T>& loss) {
    if (loss.numel() != 1) {
        throw NonScalarLoss("backward: loss has shape " +
                            TensorT<T>::shape_str(loss.shape()));
    }
    // iterative post-order topological sort
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    struct Frame {
        Node<T>* node;
        std::size_t next_parent;
    };
    std::vector<Frame> stack;
    if (loss.raw()->requires_grad) {
        stack.push_back({loss.raw(), 0});
        seen.insert(loss.raw());
    }
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_parent < f.node->parents.size()) {
            Node<T>* p = f.node->parents[f.next_parent++].get();
            if (p && p->requires_grad && seen.insert(p).second) {
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(f.node);
            stack.pop_back();
        }
    }
    loss.raw()->ensure_grad();
    loss.raw()->grad[0] = T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* n = *it;
        if (n->backprop && !n->grad.empty()) n->backprop(*n);
    }
}

// ---------------------------------------------------------------------------
// finite-difference gradient checking
// ---------------------------------------------------------------------------

// Max over all parameter coordinates of
// |analytic - numeric| / max(1e-8, |analytic| + |numeric|), with numeric from
// central differences of f. Meant to run with T = double.
template <typename T>
double grad_check(const std::function<TensorT<T>()>& f, const std::vector<TensorT<T>>& params,
                  T eps) {
    TensorT<T> loss = f();
    backward(loss);
    std::vector<std::vector<T>> analytic;
    analytic.reserve(params.size());
    for (const auto& p : params) {
        std::vector<T> g(p.numel(), T(0));
        if (p.raw()->grad.size() == p.numel()) g = p.raw()->grad;
        analytic.push_back(std::move(g));
    }
    double worst = 0.0;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto& data = const_cast<std::vector<T>&>(params[pi].data());
        for (std::size_t i = 0; i < data.size(); ++i) {
            const T saved = data[i];
            data[i] = saved + eps;
            const double fp = static_cast<double>(f().value_at(std::size_t{0}));
            data[i] = saved - eps;
            const double fm = static_cast<double>(f().value_at(std::size_t{0}));
            data[i] = saved;
            const double numeric = (fp - fm) / (2.0 * static_cast<double>(eps));
            const double a = static_cast<double>(analytic[pi][i]);
            const double denom = std::max(1e-8, std::abs(a) + std::abs(numeric));
            worst = std::max(worst, std::abs(a - numeric) / denom);
        }
    }
    return worst;
}

}  // namespace had
