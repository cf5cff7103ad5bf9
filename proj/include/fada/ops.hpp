#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "fada/autodiff.hpp"
#include "fada/tensor.hpp"

// Differentiable operations used by the embedding, predictor and
// discriminator networks. Each op computes its forward value eagerly and
// records a closure that accumulates input gradients from grad(out).
namespace fada::ops {

namespace detail {

// The message is only built on failure.
template <typename F>
void require(bool ok, const char* op, F&& message) {
    if (!ok) throw ShapeError(std::string(op) + ": " + message());
}

// Sum of a[i] * b[i] (or of a[i] when b is null) with eight interleaved
// partial sums combined in a fixed order.
template <typename T>
T dot(const T* a, const T* b, std::size_t n) {
    T acc[8] = {};
    std::size_t i = 0;
    if (b) {
        for (; i + 8 <= n; i += 8)
            for (std::size_t j = 0; j < 8; ++j) acc[j] += a[i + j] * b[i + j];
        for (; i < n; ++i) acc[0] += a[i] * b[i];
    } else {
        for (; i + 8 <= n; i += 8)
            for (std::size_t j = 0; j < 8; ++j) acc[j] += a[i + j];
        for (; i < n; ++i) acc[0] += a[i];
    }
    return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

template <typename T>
bool wants(Tape<T>& tape, const Var<T>& v) {
    return tape.requires_grad(v);
}

}  // namespace detail

// out[b,o] = sum_i x[b,i] * w[i,o] + bias[o]
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& bias) {
    const auto& xs = x.shape();
    const auto& ws = w.shape();
    const auto& bs = bias.shape();
    detail::require(xs.size() == 2 && ws.size() == 2 && bs.size() == 1, "linear", [&] {
        return std::string("expected x[BxI], w[IxO], b[O], got x" + shape_str(xs) + " w" + shape_str(ws) + " b" +
                           shape_str(bs));
    });
    detail::require(xs[1] == ws[0] && ws[1] == bs[0], "linear", [&] {
        return std::string("dimension mismatch: x" + shape_str(xs) + " w" + shape_str(ws) + " b" + shape_str(bs));
    });
    const std::size_t B = xs[0], I = xs[1], O = ws[1];
    const auto& X = x.value();
    const auto& W = w.value();
    const auto& Bv = bias.value();
    Tensor<T> out({B, O});
    for (std::size_t b = 0; b < B; ++b) {
        T* row = &out[b * O];
        for (std::size_t o = 0; o < O; ++o) row[o] = Bv[o];
        for (std::size_t i = 0; i < I; ++i) {
            const T xv = X[b * I + i];
            const T* wrow = &W[i * O];
            for (std::size_t o = 0; o < O; ++o) row[o] += xv * wrow[o];
        }
    }
    return x.tape->record(std::move(out), {x, w, bias}, [x, w, bias, B, I, O](Tape<T>& tape, std::size_t id) {
        const auto& G = tape.grad(id);
        if (detail::wants(tape, x)) {
            auto& gx = tape.grad(x.id);
            const auto& W = w.value();
            for (std::size_t b = 0; b < B; ++b) {
                const T* grow = &G[b * O];
                for (std::size_t i = 0; i < I; ++i) {
                    gx[b * I + i] += detail::dot(grow, &W[i * O], O);
                }
            }
        }
        if (detail::wants(tape, w)) {
            auto& gw = tape.grad(w.id);
            const auto& X = x.value();
            for (std::size_t b = 0; b < B; ++b) {
                const T* grow = &G[b * O];
                for (std::size_t i = 0; i < I; ++i) {
                    const T xv = X[b * I + i];
                    T* gwrow = &gw[i * O];
                    for (std::size_t o = 0; o < O; ++o) gwrow[o] += xv * grow[o];
                }
            }
        }
        if (detail::wants(tape, bias)) {
            auto& gb = tape.grad(bias.id);
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t o = 0; o < O; ++o) gb[o] += G[b * O + o];
        }
    });
}

// Valid cross-correlation, stride 1: x[BxCxHxW], k[FxCxKhxKw], bias[F]
// -> out[BxFx(H-Kh+1)x(W-Kw+1)]. Computed through an im2col matrix
// col[(c,kh,kw) x (b,oh,ow)] so the inner loops run over the batch.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& k, const Var<T>& bias) {
    const Shape xs = x.shape(), ks = k.shape();
    detail::require(xs.size() == 4 && ks.size() == 4 && bias.shape().size() == 1, "conv2d", [&] {
        return std::string("expected x[BxCxHxW], k[FxCxKhxKw], b[F], got x" + shape_str(xs) + " k" + shape_str(ks));
    });
    detail::require(xs[1] == ks[1] && bias.shape()[0] == ks[0], "conv2d", [&] {
        return std::string("channel mismatch: x" + shape_str(xs) + " k" + shape_str(ks) + " b" +
                           shape_str(bias.shape()));
    });
    detail::require(xs[2] >= ks[2] && xs[3] >= ks[3], "conv2d",
                    [&] { return std::string("input " + shape_str(xs) + " smaller than kernel " + shape_str(ks)); });
    const std::size_t B = xs[0], C = xs[1], H = xs[2], W = xs[3];
    const std::size_t F = ks[0], KH = ks[2], KW = ks[3];
    const std::size_t OH = H - KH + 1, OW = W - KW + 1;
    const std::size_t P = OH * OW, N = B * P, R = C * KH * KW;
    std::vector<T> col(R * N);
    {
        const auto& X = x.value();
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t kh = 0; kh < KH; ++kh)
                for (std::size_t kw = 0; kw < KW; ++kw) {
                    T* dst = &col[((c * KH + kh) * KW + kw) * N];
                    for (std::size_t b = 0; b < B; ++b) {
                        const T* src = &X[((b * C + c) * H + kh) * W + kw];
                        for (std::size_t oh = 0; oh < OH; ++oh)
                            for (std::size_t ow = 0; ow < OW; ++ow) *dst++ = src[oh * W + ow];
                    }
                }
    }
    // outm[f, n] = bias[f] + sum_r K[f, r] * col[r, n]
    std::vector<T> outm(F * N);
    {
        const auto& K = k.value();
        const auto& Bv = bias.value();
        for (std::size_t f = 0; f < F; ++f) {
            T* o = &outm[f * N];
            std::fill(o, o + N, Bv[f]);
            for (std::size_t r = 0; r < R; ++r) {
                const T kv = K[f * R + r];
                const T* cr = &col[r * N];
                for (std::size_t n = 0; n < N; ++n) o[n] += kv * cr[n];
            }
        }
    }
    Tensor<T> out({B, F, OH, OW});
    for (std::size_t f = 0; f < F; ++f)
        for (std::size_t b = 0; b < B; ++b) std::copy_n(&outm[f * N + b * P], P, &out[(b * F + f) * P]);
    return x.tape->record(
        std::move(out), {x, k, bias},
        [x, k, bias, col = std::move(col), B, C, H, W, F, KH, KW, OH, OW, P, N, R](Tape<T>& tape, std::size_t id) {
            const auto& G = tape.grad(id);
            // gm[f, n] in the im2col column order.
            std::vector<T> gm(F * N);
            for (std::size_t f = 0; f < F; ++f)
                for (std::size_t b = 0; b < B; ++b) std::copy_n(&G[(b * F + f) * P], P, &gm[f * N + b * P]);
            if (detail::wants(tape, bias)) {
                auto& gb = tape.grad(bias.id);
                for (std::size_t f = 0; f < F; ++f) gb[f] += detail::dot(&gm[f * N], static_cast<const T*>(nullptr), N);
            }
            if (detail::wants(tape, k)) {
                auto& gk = tape.grad(k.id);
                for (std::size_t f = 0; f < F; ++f)
                    for (std::size_t r = 0; r < R; ++r) gk[f * R + r] += detail::dot(&gm[f * N], &col[r * N], N);
            }
            if (detail::wants(tape, x)) {
                const auto& K = k.value();
                std::vector<T> gcol(R * N, T(0));
                for (std::size_t f = 0; f < F; ++f) {
                    const T* g = &gm[f * N];
                    for (std::size_t r = 0; r < R; ++r) {
                        const T kv = K[f * R + r];
                        T* dst = &gcol[r * N];
                        for (std::size_t n = 0; n < N; ++n) dst[n] += kv * g[n];
                    }
                }
                auto& gx = tape.grad(x.id);
                for (std::size_t c = 0; c < C; ++c)
                    for (std::size_t kh = 0; kh < KH; ++kh)
                        for (std::size_t kw = 0; kw < KW; ++kw) {
                            const T* src = &gcol[((c * KH + kh) * KW + kw) * N];
                            for (std::size_t b = 0; b < B; ++b) {
                                T* dst = &gx[((b * C + c) * H + kh) * W + kw];
                                for (std::size_t oh = 0; oh < OH; ++oh)
                                    for (std::size_t ow = 0; ow < OW; ++ow) dst[oh * W + ow] += *src++;
                            }
                        }
            }
        });
}

// 2x2 max pooling, stride 2. Gradient goes to the first maximum of each
// window in row-major order.
template <typename T>
Var<T> maxpool2(const Var<T>& x) {
    const auto& xs = x.shape();
    detail::require(xs.size() == 4, "maxpool2",
                    [&] { return std::string("expected x[BxCxHxW], got " + shape_str(xs)); });
    detail::require(xs[2] % 2 == 0 && xs[3] % 2 == 0, "maxpool2",
                    [&] { return std::string("spatial dimensions must be even, got " + shape_str(xs)); });
    const std::size_t B = xs[0], C = xs[1], H = xs[2], W = xs[3];
    const std::size_t OH = H / 2, OW = W / 2;
    const auto& X = x.value();
    Tensor<T> out({B, C, OH, OW});
    std::vector<std::size_t> argmax(out.size());
    for (std::size_t bc = 0; bc < B * C; ++bc) {
        const std::size_t base = bc * H * W;
        for (std::size_t oh = 0; oh < OH; ++oh) {
            for (std::size_t ow = 0; ow < OW; ++ow) {
                std::size_t best = base + (2 * oh) * W + 2 * ow;
                for (std::size_t dh = 0; dh < 2; ++dh) {
                    for (std::size_t dw = 0; dw < 2; ++dw) {
                        const std::size_t idx = base + (2 * oh + dh) * W + 2 * ow + dw;
                        if (X[idx] > X[best]) best = idx;
                    }
                }
                const std::size_t o = (bc * OH + oh) * OW + ow;
                out[o] = X[best];
                argmax[o] = best;
            }
        }
    }
    return x.tape->record(std::move(out), {x}, [x, argmax = std::move(argmax)](Tape<T>& tape, std::size_t id) {
        const auto& G = tape.grad(id);
        auto& gx = tape.grad(x.id);
        for (std::size_t o = 0; o < argmax.size(); ++o) gx[argmax[o]] += G[o];
    });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
    Tensor<T> out = x.value();
    for (auto& v : out.storage()) v = v > T(0) ? v : T(0);
    return x.tape->record(std::move(out), {x}, [x](Tape<T>& tape, std::size_t id) {
        const auto& G = tape.grad(id);
        const auto& X = x.value();
        auto& gx = tape.grad(x.id);
        for (std::size_t i = 0; i < G.size(); ++i)
            if (X[i] > T(0)) gx[i] += G[i];
    });
}

template <typename T>
Var<T> tanh(const Var<T>& x) {
    Tensor<T> out = x.value();
    for (auto& v : out.storage()) v = std::tanh(v);
    return x.tape->record(std::move(out), {x}, [x](Tape<T>& tape, std::size_t id) {
        const auto& G = tape.grad(id);
        const auto& Y = tape.value(id);
        auto& gx = tape.grad(x.id);
        for (std::size_t i = 0; i < G.size(); ++i) gx[i] += G[i] * (T(1) - Y[i] * Y[i]);
    });
}

// Row-wise softmax over the last axis of a [BxK] tensor.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& logits) {
    detail::require(logits.rank() == 2, "softmax",
                    [&] { return std::string("expected [BxK], got " + shape_str(logits.shape())); });
    const std::size_t B = logits.dim(0), K = logits.dim(1);
    Tensor<T> out(logits.shape());
    for (std::size_t b = 0; b < B; ++b) {
        const T* z = &logits[b * K];
        T* p = &out[b * K];
        const T m = *std::max_element(z, z + K);
        T s = T(0);
        for (std::size_t j = 0; j < K; ++j) s += (p[j] = std::exp(z[j] - m));
        for (std::size_t j = 0; j < K; ++j) p[j] /= s;
    }
    return out;
}

template <typename T>
Var<T> softmax(const Var<T>& x) {
    Tensor<T> out = softmax_rows(x.value());
    const std::size_t B = out.dim(0), K = out.dim(1);
    return x.tape->record(std::move(out), {x}, [x, B, K](Tape<T>& tape, std::size_t id) {
        const auto& G = tape.grad(id);
        const auto& Y = tape.value(id);
        auto& gx = tape.grad(x.id);
        for (std::size_t b = 0; b < B; ++b) {
            T dot = T(0);
            for (std::size_t j = 0; j < K; ++j) dot += G[b * K + j] * Y[b * K + j];
            for (std::size_t j = 0; j < K; ++j) gx[b * K + j] += Y[b * K + j] * (G[b * K + j] - dot);
        }
    });
}

// [BxP] ++ [BxQ] -> [Bx(P+Q)], a's columns first.
template <typename T>
Var<T> concat(const Var<T>& a, const Var<T>& b) {
    const auto& as = a.shape();
    const auto& bs = b.shape();
    detail::require(as.size() == 2 && bs.size() == 2 && as[0] == bs[0], "concat", [&] {
        return std::string("expected [BxP] and [BxQ] with equal B, got " + shape_str(as) + " and " + shape_str(bs));
    });
    const std::size_t B = as[0], P = as[1], Q = bs[1];
    Tensor<T> out({B, P + Q});
    const auto& A = a.value();
    const auto& Bt = b.value();
    for (std::size_t r = 0; r < B; ++r) {
        std::copy_n(&A[r * P], P, &out[r * (P + Q)]);
        std::copy_n(&Bt[r * Q], Q, &out[r * (P + Q) + P]);
    }
    return a.tape->record(std::move(out), {a, b}, [a, b, B, P, Q](Tape<T>& tape, std::size_t id) {
        const auto& G = tape.grad(id);
        if (detail::wants(tape, a)) {
            auto& ga = tape.grad(a.id);
            for (std::size_t r = 0; r < B; ++r)
                for (std::size_t j = 0; j < P; ++j) ga[r * P + j] += G[r * (P + Q) + j];
        }
        if (detail::wants(tape, b)) {
            auto& gb = tape.grad(b.id);
            for (std::size_t r = 0; r < B; ++r)
                for (std::size_t j = 0; j < Q; ++j) gb[r * Q + j] += G[r * (P + Q) + P + j];
        }
    });
}

// Columns [begin, begin+count) of a [BxK] tensor.
template <typename T>
Var<T> slice_columns(const Var<T>& x, std::size_t begin, std::size_t count) {
    const auto& xs = x.shape();
    detail::require(xs.size() == 2 && count > 0 && begin + count <= xs[1], "slice_columns", [&] {
        return std::string("range [" + std::to_string(begin) + "," + std::to_string(begin + count) + ") out of " +
                           shape_str(xs));
    });
    const std::size_t B = xs[0], K = xs[1];
    Tensor<T> out({B, count});
    for (std::size_t r = 0; r < B; ++r) std::copy_n(&x.value()[r * K + begin], count, &out[r * count]);
    return x.tape->record(std::move(out), {x}, [x, B, K, begin, count](Tape<T>& tape, std::size_t id) {
        const auto& G = tape.grad(id);
        auto& gx = tape.grad(x.id);
        for (std::size_t r = 0; r < B; ++r)
            for (std::size_t j = 0; j < count; ++j) gx[r * K + begin + j] += G[r * count + j];
    });
}

// Rows [begin, begin+count) of a tensor along its leading axis.
template <typename T>
Var<T> slice_rows(const Var<T>& x, std::size_t begin, std::size_t count) {
    const auto& xs = x.shape();
    detail::require(count > 0 && begin + count <= xs[0], "slice_rows", [&] {
        return std::string("range [" + std::to_string(begin) + "," + std::to_string(begin + count) + ") out of " +
                           shape_str(xs));
    });
    const std::size_t row = x.value().size() / xs[0];
    Shape shape = xs;
    shape[0] = count;
    Tensor<T> out(shape);
    std::copy_n(&x.value()[begin * row], count * row, &out[0]);
    return x.tape->record(std::move(out), {x}, [x, begin, row](Tape<T>& tape, std::size_t id) {
        const auto& G = tape.grad(id);
        auto& gx = tape.grad(x.id);
        for (std::size_t i = 0; i < G.size(); ++i) gx[begin * row + i] += G[i];
    });
}

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape) {
    Tensor<T> out = x.value().reshaped(std::move(shape));
    return x.tape->record(std::move(out), {x}, [x](Tape<T>& tape, std::size_t id) {
        const auto& G = tape.grad(id);
        auto& gx = tape.grad(x.id);
        for (std::size_t i = 0; i < G.size(); ++i) gx[i] += G[i];
    });
}

// Batch-mean categorical cross-entropy of softmax(logits) against integer
// labels, evaluated as logsumexp(z) - z[y] so probabilities are never
// passed through a log.
template <typename T>
Var<T> softmax_cross_entropy(const Var<T>& logits, std::span<const int> labels) {
    const auto& ls = logits.shape();
    detail::require(ls.size() == 2, "cross_entropy",
                    [&] { return std::string("expected logits [BxK], got " + shape_str(ls)); });
    const std::size_t B = ls[0], K = ls[1];
    detail::require(labels.size() == B, "cross_entropy", [&] {
        return std::string("label count " + std::to_string(labels.size()) + " != batch " + std::to_string(B));
    });
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= K) {
            throw std::out_of_range("cross_entropy: label " + std::to_string(y) + " outside [0," + std::to_string(K) +
                                    ")");
        }
    }
    const auto& Z = logits.value();
    Tensor<T> probs = softmax_rows(Z);
    T loss = T(0);
    for (std::size_t b = 0; b < B; ++b) {
        const T* z = &Z[b * K];
        const T m = *std::max_element(z, z + K);
        T s = T(0);
        for (std::size_t j = 0; j < K; ++j) s += std::exp(z[j] - m);
        loss += m + std::log(s) - z[labels[b]];
    }
    loss /= static_cast<T>(B);
    std::vector<int> y(labels.begin(), labels.end());
    return logits.tape->record(
        Tensor<T>::scalar(loss), {logits},
        [logits, probs = std::move(probs), y = std::move(y), B, K](Tape<T>& tape, std::size_t id) {
            const T g = tape.grad(id)[0] / static_cast<T>(B);
            auto& gz = tape.grad(logits.id);
            for (std::size_t b = 0; b < B; ++b) {
                for (std::size_t j = 0; j < K; ++j) {
                    const T target = static_cast<std::size_t>(y[b]) == j ? T(1) : T(0);
                    gz[b * K + j] += g * (probs[b * K + j] - target);
                }
            }
        });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    detail::require(a.shape() == b.shape(), "add",
                    [&] { return std::string(shape_str(a.shape()) + " vs " + shape_str(b.shape())); });
    Tensor<T> out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
    return a.tape->record(std::move(out), {a, b}, [a, b](Tape<T>& tape, std::size_t id) {
        const auto& G = tape.grad(id);
        for (const auto& v : {a, b}) {
            if (!detail::wants(tape, v)) continue;
            auto& gv = tape.grad(v.id);
            for (std::size_t i = 0; i < G.size(); ++i) gv[i] += G[i];
        }
    });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
    detail::require(a.shape() == b.shape(), "mul",
                    [&] { return std::string(shape_str(a.shape()) + " vs " + shape_str(b.shape())); });
    Tensor<T> out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
    return a.tape->record(std::move(out), {a, b}, [a, b](Tape<T>& tape, std::size_t id) {
        const auto& G = tape.grad(id);
        if (detail::wants(tape, a)) {
            auto& ga = tape.grad(a.id);
            for (std::size_t i = 0; i < G.size(); ++i) ga[i] += G[i] * b.value()[i];
        }
        if (detail::wants(tape, b)) {
            auto& gb = tape.grad(b.id);
            for (std::size_t i = 0; i < G.size(); ++i) gb[i] += G[i] * a.value()[i];
        }
    });
}

template <typename T>
Var<T> scale(const Var<T>& x, T factor) {
    Tensor<T> out = x.value();
    for (auto& v : out.storage()) v *= factor;
    return x.tape->record(std::move(out), {x}, [x, factor](Tape<T>& tape, std::size_t id) {
        const auto& G = tape.grad(id);
        auto& gx = tape.grad(x.id);
        for (std::size_t i = 0; i < G.size(); ++i) gx[i] += factor * G[i];
    });
}

template <typename T>
Var<T> sum(const Var<T>& x) {
    T s = T(0);
    for (auto v : x.value().data()) s += v;
    return x.tape->record(Tensor<T>::scalar(s), {x}, [x](Tape<T>& tape, std::size_t id) {
        const T g = tape.grad(id)[0];
        for (auto& v : tape.grad(x.id).storage()) v += g;
    });
}

template <typename T>
Var<T> mean(const Var<T>& x) {
    return scale(sum(x), T(1) / static_cast<T>(x.value().size()));
}

}  // namespace fada::ops
