#pragma once

#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "ditpaint/rope.hpp"
#include "ditpaint/tensor.hpp"

namespace ditpaint {

/// Reverse-mode tape over Tensor ops. Forward calls build values eagerly and
/// push a backward closure; backward() replays them in reverse. Gradients
/// accumulate into Node::grad, so parameter leaves can be shared across
/// several forward passes on one tape (batch accumulation).
template <typename T>
class Tape {
public:
    struct Node {
        Tensor<T> value;
        Tensor<T> grad;
        bool requires_grad = true;
    };
    using Ptr = std::shared_ptr<Node>;

    Ptr leaf(Tensor<T> v, bool requires_grad = true) {
        auto n = std::make_shared<Node>();
        n->grad = Tensor<T>(v.shape());
        n->value = std::move(v);
        n->requires_grad = requires_grad;
        return n;
    }

    Ptr constant(Tensor<T> v) { return leaf(std::move(v), false); }

    Ptr add(Ptr a, Ptr b) {
        auto out = leaf(ditpaint::add(a->value, b->value));
        record([a, b, out] {
            if (a->requires_grad)
                for (size_t i = 0; i < out->grad.size(); ++i) a->grad[i] += out->grad[i];
            if (b->requires_grad)
                for (size_t i = 0; i < out->grad.size(); ++i) b->grad[i] += out->grad[i];
        });
        return out;
    }

    Ptr scale(Ptr a, T s) {
        auto out = leaf(ditpaint::scale(a->value, s));
        record([a, out, s] {
            if (a->requires_grad)
                for (size_t i = 0; i < out->grad.size(); ++i) a->grad[i] += s * out->grad[i];
        });
        return out;
    }

    /// x [L,K] * w [K,D] + b [D]
    Ptr linear(Ptr x, Ptr w, Ptr b) {
        const size_t L = x->value.dim(0), K = x->value.dim(1), D = w->value.dim(1);
        if (w->value.dim(0) != K || b->value.size() != D)
            throw std::invalid_argument("linear: shape mismatch " + shape_str(x->value.shape()) +
                                        " x " + shape_str(w->value.shape()));
        Tensor<T> y = matmul(x->value, w->value);
        for (size_t i = 0; i < L; ++i)
            for (size_t j = 0; j < D; ++j) y[i * D + j] += b->value[j];
        auto out = leaf(std::move(y));
        record([x, w, b, out, L, K, D] {
            const Tensor<T>& g = out->grad;
            if (x->requires_grad) {
                for (size_t i = 0; i < L; ++i)
                    for (size_t j = 0; j < D; ++j) {
                        const T gv = g[i * D + j];
                        for (size_t p = 0; p < K; ++p)
                            x->grad[i * K + p] += gv * w->value[p * D + j];
                    }
            }
            if (w->requires_grad) {
                for (size_t i = 0; i < L; ++i)
                    for (size_t p = 0; p < K; ++p) {
                        const T xv = x->value[i * K + p];
                        for (size_t j = 0; j < D; ++j) w->grad[p * D + j] += xv * g[i * D + j];
                    }
            }
            if (b->requires_grad)
                for (size_t i = 0; i < L; ++i)
                    for (size_t j = 0; j < D; ++j) b->grad[j] += g[i * D + j];
        });
        return out;
    }

    /// x [K] * w [K,D] + b [D] -> [D]
    Ptr vlinear(Ptr x, Ptr w, Ptr b) {
        auto x2 = reshape_view(x, {1, x->value.size()});
        auto y = linear(x2, w, b);
        return reshape_view(y, {y->value.size()});
    }

    /// Pure data movement: out[i] = x[index[i]]; index is a bijection.
    Ptr permute_elements(Ptr x, std::shared_ptr<const std::vector<size_t>> index,
                         std::vector<size_t> out_shape) {
        Tensor<T> y(out_shape);
        if (index->size() != x->value.size() || y.size() != x->value.size())
            throw std::invalid_argument("permute_elements: size mismatch");
        for (size_t i = 0; i < y.size(); ++i) y[i] = x->value[(*index)[i]];
        auto out = leaf(std::move(y));
        record([x, out, index] {
            if (x->requires_grad)
                for (size_t i = 0; i < out->grad.size(); ++i)
                    x->grad[(*index)[i]] += out->grad[i];
        });
        return out;
    }

    Ptr reshape_view(Ptr x, std::vector<size_t> shape) {
        auto out = leaf(reshape(x->value, std::move(shape)));
        record([x, out] {
            if (x->requires_grad)
                for (size_t i = 0; i < out->grad.size(); ++i) x->grad[i] += out->grad[i];
        });
        return out;
    }

    Ptr slice_vec(Ptr x, size_t start, size_t len) {
        if (x->value.rank() != 1 || start + len > x->value.size())
            throw std::invalid_argument("slice_vec: invalid range");
        Tensor<T> y({len});
        for (size_t i = 0; i < len; ++i) y[i] = x->value[start + i];
        auto out = leaf(std::move(y));
        record([x, out, start, len] {
            if (x->requires_grad)
                for (size_t i = 0; i < len; ++i) x->grad[start + i] += out->grad[i];
        });
        return out;
    }

    /// Keep the first `len` columns of [L, D].
    Ptr slice_cols(Ptr x, size_t len) {
        const size_t L = x->value.dim(0), D = x->value.dim(1);
        if (len > D) throw std::invalid_argument("slice_cols: too many columns");
        Tensor<T> y({L, len});
        for (size_t i = 0; i < L; ++i)
            for (size_t j = 0; j < len; ++j) y[i * len + j] = x->value[i * D + j];
        auto out = leaf(std::move(y));
        record([x, out, L, D, len] {
            if (x->requires_grad)
                for (size_t i = 0; i < L; ++i)
                    for (size_t j = 0; j < len; ++j) x->grad[i * D + j] += out->grad[i * len + j];
        });
        return out;
    }

    Ptr gelu(Ptr x) {
        auto out = leaf(ditpaint::gelu(x->value));
        record([x, out] {
            if (x->requires_grad)
                for (size_t i = 0; i < out->grad.size(); ++i)
                    x->grad[i] += out->grad[i] * gelu_grad_scalar(x->value[i]);
        });
        return out;
    }

    /// LayerNorm over the last axis, no learned affine (modulation supplies
    /// scale/shift separately).
    Ptr layer_norm(Ptr x, T eps) {
        const size_t n = x->value.dim(x->value.rank() - 1);
        const size_t rows = x->value.size() / n;
        Tensor<T> y(x->value.shape());
        auto inv_std = std::make_shared<std::vector<T>>(rows);
        for (size_t r = 0; r < rows; ++r) {
            const T* xv = x->value.data() + r * n;
            T mean = 0;
            for (size_t i = 0; i < n; ++i) mean += xv[i];
            mean /= static_cast<T>(n);
            T var = 0;
            for (size_t i = 0; i < n; ++i) var += (xv[i] - mean) * (xv[i] - mean);
            var /= static_cast<T>(n);
            const T inv = static_cast<T>(1) / std::sqrt(var + eps);
            (*inv_std)[r] = inv;
            for (size_t i = 0; i < n; ++i) y[r * n + i] = (xv[i] - mean) * inv;
        }
        auto out = leaf(std::move(y));
        record([x, out, inv_std, rows, n] {
            if (!x->requires_grad) return;
            for (size_t r = 0; r < rows; ++r) {
                const T* g = out->grad.data() + r * n;
                const T* xh = out->value.data() + r * n;  // normalized values
                T gmean = 0, gxmean = 0;
                for (size_t i = 0; i < n; ++i) {
                    gmean += g[i];
                    gxmean += g[i] * xh[i];
                }
                gmean /= static_cast<T>(n);
                gxmean /= static_cast<T>(n);
                const T inv = (*inv_std)[r];
                for (size_t i = 0; i < n; ++i)
                    x->grad[r * n + i] += inv * (g[i] - gmean - xh[i] * gxmean);
            }
        });
        return out;
    }

    /// Rowwise x * scale + shift, scale/shift are [D] vectors.
    Ptr modulate(Ptr x, Ptr sc, Ptr sh) {
        const size_t D = x->value.dim(x->value.rank() - 1);
        if (sc->value.size() != D || sh->value.size() != D)
            throw std::invalid_argument("modulate: vector size mismatch");
        const size_t rows = x->value.size() / D;
        Tensor<T> y(x->value.shape());
        for (size_t r = 0; r < rows; ++r)
            for (size_t j = 0; j < D; ++j)
                y[r * D + j] = x->value[r * D + j] * sc->value[j] + sh->value[j];
        auto out = leaf(std::move(y));
        record([x, sc, sh, out, rows, D] {
            const Tensor<T>& g = out->grad;
            if (x->requires_grad)
                for (size_t r = 0; r < rows; ++r)
                    for (size_t j = 0; j < D; ++j)
                        x->grad[r * D + j] += g[r * D + j] * sc->value[j];
            if (sc->requires_grad)
                for (size_t r = 0; r < rows; ++r)
                    for (size_t j = 0; j < D; ++j)
                        sc->grad[j] += g[r * D + j] * x->value[r * D + j];
            if (sh->requires_grad)
                for (size_t r = 0; r < rows; ++r)
                    for (size_t j = 0; j < D; ++j) sh->grad[j] += g[r * D + j];
        });
        return out;
    }

    /// Residual with a rowwise gate: x + y * gate, gate is a [D] vector.
    Ptr gated_residual(Ptr x, Ptr y, Ptr gate) {
        const size_t D = x->value.dim(x->value.rank() - 1);
        if (gate->value.size() != D)
            throw std::invalid_argument("gated_residual: gate size mismatch");
        require_same_shape(x->value, y->value, "gated_residual");
        const size_t rows = x->value.size() / D;
        Tensor<T> out_v(x->value.shape());
        for (size_t r = 0; r < rows; ++r)
            for (size_t j = 0; j < D; ++j)
                out_v[r * D + j] = x->value[r * D + j] + y->value[r * D + j] * gate->value[j];
        auto out = leaf(std::move(out_v));
        record([x, y, gate, out, rows, D] {
            const Tensor<T>& g = out->grad;
            if (x->requires_grad)
                for (size_t i = 0; i < g.size(); ++i) x->grad[i] += g[i];
            if (y->requires_grad)
                for (size_t r = 0; r < rows; ++r)
                    for (size_t j = 0; j < D; ++j)
                        y->grad[r * D + j] += g[r * D + j] * gate->value[j];
            if (gate->requires_grad)
                for (size_t r = 0; r < rows; ++r)
                    for (size_t j = 0; j < D; ++j)
                        gate->grad[j] += g[r * D + j] * y->value[r * D + j];
        });
        return out;
    }

    /// Multi-head full self-attention with rotary embeddings applied to q/k.
    /// q,k,v: [L, D], D = heads * table->head_dim.
    Ptr attention(Ptr q, Ptr k, Ptr v, size_t heads, std::shared_ptr<const RopeTable<T>> table) {
        const size_t L = q->value.dim(0), D = q->value.dim(1);
        const size_t dh = table->head_dim;
        if (heads * dh != D || !q->value.same_shape(k->value) || !q->value.same_shape(v->value))
            throw std::invalid_argument("attention: inconsistent shapes, q=" +
                                        shape_str(q->value.shape()) + " heads=" +
                                        std::to_string(heads) + " head_dim=" + std::to_string(dh));
        if (table->tokens != L)
            throw std::invalid_argument("attention: rope table built for " +
                                        std::to_string(table->tokens) + " tokens, got L=" +
                                        std::to_string(L));
        const T inv_sqrt = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));

        // Rotated copies, saved for backward.
        auto qr = std::make_shared<Tensor<T>>(q->value);
        auto kr = std::make_shared<Tensor<T>>(k->value);
        for (size_t i = 0; i < L; ++i)
            for (size_t h = 0; h < heads; ++h) {
                rope_rotate_head(qr->data() + i * D + h * dh, *table, i, +1);
                rope_rotate_head(kr->data() + i * D + h * dh, *table, i, +1);
            }

        // Softmax probabilities per head, saved for backward.
        auto probs = std::make_shared<std::vector<Tensor<T>>>();
        probs->reserve(heads);
        Tensor<T> out_v({L, D});
        for (size_t h = 0; h < heads; ++h) {
            Tensor<T> logits({L, L});
            for (size_t i = 0; i < L; ++i)
                for (size_t j = 0; j < L; ++j) {
                    T s = 0;
                    const T* qi = qr->data() + i * D + h * dh;
                    const T* kj = kr->data() + j * D + h * dh;
                    for (size_t d = 0; d < dh; ++d) s += qi[d] * kj[d];
                    logits[i * L + j] = s * inv_sqrt;
                }
            Tensor<T> p = softmax(logits, 1);
            for (size_t i = 0; i < L; ++i)
                for (size_t j = 0; j < L; ++j) {
                    const T pv = p[i * L + j];
                    const T* vj = v->value.data() + j * D + h * dh;
                    T* oi = out_v.data() + i * D + h * dh;
                    for (size_t d = 0; d < dh; ++d) oi[d] += pv * vj[d];
                }
            probs->push_back(std::move(p));
        }
        auto out = leaf(std::move(out_v));
        record([q, k, v, out, qr, kr, probs, table, heads, L, D, dh, inv_sqrt] {
            if (!(q->requires_grad || k->requires_grad || v->requires_grad)) return;
            Tensor<T> dqr({L, D}), dkr({L, D});
            for (size_t h = 0; h < heads; ++h) {
                const Tensor<T>& p = (*probs)[h];
                // dP = dO v^T ; dV = P^T dO
                Tensor<T> dp({L, L});
                for (size_t i = 0; i < L; ++i)
                    for (size_t j = 0; j < L; ++j) {
                        T s = 0;
                        const T* gi = out->grad.data() + i * D + h * dh;
                        const T* vj = v->value.data() + j * D + h * dh;
                        for (size_t d = 0; d < dh; ++d) s += gi[d] * vj[d];
                        dp[i * L + j] = s;
                    }
                if (v->requires_grad)
                    for (size_t j = 0; j < L; ++j)
                        for (size_t i = 0; i < L; ++i) {
                            const T pv = p[i * L + j];
                            const T* gi = out->grad.data() + i * D + h * dh;
                            T* dvj = v->grad.data() + j * D + h * dh;
                            for (size_t d = 0; d < dh; ++d) dvj[d] += pv * gi[d];
                        }
                // dS = P o (dP - rowsum(dP o P))
                for (size_t i = 0; i < L; ++i) {
                    T dot = 0;
                    for (size_t j = 0; j < L; ++j) dot += dp[i * L + j] * p[i * L + j];
                    for (size_t j = 0; j < L; ++j) {
                        const T ds = p[i * L + j] * (dp[i * L + j] - dot) * inv_sqrt;
                        const T* kj = kr->data() + j * D + h * dh;
                        const T* qi = qr->data() + i * D + h * dh;
                        T* dqi = dqr.data() + i * D + h * dh;
                        T* dkj = dkr.data() + j * D + h * dh;
                        for (size_t d = 0; d < dh; ++d) {
                            dqi[d] += ds * kj[d];
                            dkj[d] += ds * qi[d];
                        }
                    }
                }
            }
            // Undo the rotation (inverse rotation is the transpose).
            for (size_t i = 0; i < L; ++i)
                for (size_t h = 0; h < heads; ++h) {
                    rope_rotate_head(dqr.data() + i * D + h * dh, *table, i, -1);
                    rope_rotate_head(dkr.data() + i * D + h * dh, *table, i, -1);
                }
            if (q->requires_grad)
                for (size_t i = 0; i < q->grad.size(); ++i) q->grad[i] += dqr[i];
            if (k->requires_grad)
                for (size_t i = 0; i < k->grad.size(); ++i) k->grad[i] += dkr[i];
        });
        return out;
    }

    /// Mean squared error against a constant target; returns a scalar node.
    Ptr mse(Ptr pred, const Tensor<T>& target) {
        require_same_shape(pred->value, target, "mse");
        const size_t n = pred->value.size();
        T acc = 0;
        for (size_t i = 0; i < n; ++i) {
            const T d = pred->value[i] - target[i];
            acc += d * d;
        }
        auto out = leaf(Tensor<T>::from_data({1}, {acc / static_cast<T>(n)}));
        auto tgt = std::make_shared<Tensor<T>>(target);
        record([pred, out, tgt, n] {
            if (!pred->requires_grad) return;
            const T g = out->grad[0] * static_cast<T>(2) / static_cast<T>(n);
            for (size_t i = 0; i < n; ++i)
                pred->grad[i] += g * (pred->value[i] - (*tgt)[i]);
        });
        return out;
    }

    /// Seed d(out)/d(out) = 1 and replay the tape in reverse.
    void backward(Ptr out) {
        if (out->value.size() != 1)
            throw std::invalid_argument("backward: output must be scalar, got " +
                                        shape_str(out->value.shape()));
        out->grad[0] = static_cast<T>(1);
        for (auto it = back_ops_.rbegin(); it != back_ops_.rend(); ++it) (*it)();
    }

private:
    void record(std::function<void()> fn) { back_ops_.push_back(std::move(fn)); }

    std::vector<std::function<void()>> back_ops_;
};

}  // namespace ditpaint
