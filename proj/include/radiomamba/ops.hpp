#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "radiomamba/errors.hpp"
#include "radiomamba/tensor.hpp"

namespace radiomamba {

namespace testing {
// Deliberately corrupts one backward rule (gelu) so gradcheck's negative
// control has something to catch.
inline bool corrupt_backward = false;
}  // namespace testing

namespace ops {

namespace detail {

using radiomamba::detail::Node;

template <typename T>
inline bool want_graph(std::initializer_list<const Tensor<T>*> inputs) {
    if (!grad_enabled()) return false;
    for (const Tensor<T>* t : inputs)
        if (t->tracked()) return true;
    return false;
}

// Prefix broadcast: the smaller operand, after stripping leading 1-dims,
// must equal the trailing dims of the larger one; it is then tiled along
// the leading dims. Returns false if the shapes are not compatible.
inline bool prefix_broadcast_ok(const Shape& big, const Shape& small) {
    std::size_t skip = 0;
    while (skip < small.size() && small[skip] == 1) ++skip;
    const std::size_t eff = small.size() - skip;
    if (eff > big.size()) return false;
    for (std::size_t i = 0; i < eff; ++i)
        if (small[skip + i] != big[big.size() - eff + i]) return false;
    return true;
}

template <typename T>
inline void add_grad_tiled(Node<T>& p, const std::vector<T>& g, std::size_t big_size) {
    p.ensure_grad();
    const std::size_t n = p.values.size();
    if (n == big_size) {
        for (std::size_t i = 0; i < big_size; ++i) p.grad[i] += g[i];
    } else {
        for (std::size_t i = 0; i < big_size; ++i) p.grad[i % n] += g[i];
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise binary ops (add, sub, mul, div) with prefix broadcasting.
// ---------------------------------------------------------------------------

enum class BinaryKind { Add, Sub, Mul, Div };

template <typename T>
Tensor<T> binary(BinaryKind kind, const Tensor<T>& a, const Tensor<T>& b, const char* name) {
    const bool a_big = a.size() >= b.size();
    const Tensor<T>& big = a_big ? a : b;
    const Tensor<T>& small = a_big ? b : a;
    if (!detail::prefix_broadcast_ok(big.shape(), small.shape()))
        throw DimensionError(std::string(name) + ": incompatible shapes " +
                             shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const std::size_t n = big.size();
    const std::size_t m = small.size();
    auto av = a.values();
    auto bv = b.values();
    std::vector<T> out(n);
    const bool swap = !a_big;  // true when b is the big operand
    for (std::size_t i = 0; i < n; ++i) {
        const T x = swap ? av[i % m] : av[i];
        const T y = swap ? bv[i] : bv[i % m];
        switch (kind) {
            case BinaryKind::Add: out[i] = x + y; break;
            case BinaryKind::Sub: out[i] = x - y; break;
            case BinaryKind::Mul: out[i] = x * y; break;
            case BinaryKind::Div: out[i] = x / y; break;
        }
    }
    if (!detail::want_graph<T>({&a, &b}))
        return Tensor<T>::from_data(big.shape(), std::move(out));
    return Tensor<T>::make_node(
        big.shape(), std::move(out), name, {a, b},
        [kind, n, swap](detail::Node<T>& self) {
            auto& pa = *self.parents[0];
            auto& pb = *self.parents[1];
            const std::size_t na = pa.values.size();
            const std::size_t nb = pb.values.size();
            auto idx_a = [&](std::size_t i) { return swap ? i % na : i; };
            auto idx_b = [&](std::size_t i) { return swap ? i : i % nb; };
            std::vector<T> ga, gb;
            if (pa.tracked()) ga.assign(n, T(0));
            if (pb.tracked()) gb.assign(n, T(0));
            for (std::size_t i = 0; i < n; ++i) {
                const T g = self.grad[i];
                switch (kind) {
                    case BinaryKind::Add:
                        if (!ga.empty()) ga[i] = g;
                        if (!gb.empty()) gb[i] = g;
                        break;
                    case BinaryKind::Sub:
                        if (!ga.empty()) ga[i] = g;
                        if (!gb.empty()) gb[i] = -g;
                        break;
                    case BinaryKind::Mul:
                        if (!ga.empty()) ga[i] = g * pb.values[idx_b(i)];
                        if (!gb.empty()) gb[i] = g * pa.values[idx_a(i)];
                        break;
                    case BinaryKind::Div: {
                        const T y = pb.values[idx_b(i)];
                        if (!ga.empty()) ga[i] = g / y;
                        if (!gb.empty()) gb[i] = -g * pa.values[idx_a(i)] / (y * y);
                        break;
                    }
                }
            }
            if (!ga.empty()) detail::add_grad_tiled(pa, ga, n);
            if (!gb.empty()) detail::add_grad_tiled(pb, gb, n);
        });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    return binary(BinaryKind::Add, a, b, "add");
}
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    return binary(BinaryKind::Sub, a, b, "sub");
}
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    return binary(BinaryKind::Mul, a, b, "mul");
}
template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
    return binary(BinaryKind::Div, a, b, "div");
}

// ---------------------------------------------------------------------------
// Elementwise unary ops.
// ---------------------------------------------------------------------------

template <typename T, typename Fwd, typename Bwd>
Tensor<T> unary(const Tensor<T>& x, const char* name, Fwd fwd, Bwd bwd) {
    const std::size_t n = x.size();
    auto xv = x.values();
    std::vector<T> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = fwd(xv[i]);
    if (!detail::want_graph<T>({&x})) return Tensor<T>::from_data(x.shape(), std::move(out));
    std::vector<T> saved(out);  // many rules reuse the forward output
    return Tensor<T>::make_node(
        x.shape(), std::move(out), name, {x},
        [bwd, saved = std::move(saved)](detail::Node<T>& self) {
            auto& p = *self.parents[0];
            if (!p.tracked()) return;
            p.ensure_grad();
            const std::size_t n = self.values.size();
            for (std::size_t i = 0; i < n; ++i)
                p.grad[i] += self.grad[i] * bwd(p.values[i], saved[i]);
        });
}

template <typename T>
Tensor<T> neg(const Tensor<T>& x) {
    return unary(
        x, "neg", [](T v) { return -v; }, [](T, T) { return T(-1); });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T c) {
    return unary(
        x, "scale", [c](T v) { return c * v; }, [c](T, T) { return c; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T c) {
    return unary(
        x, "add_scalar", [c](T v) { return v + c; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& x) {
    return unary(
        x, "exp", [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

// Exact Gaussian-CDF form: gelu(x) = x * Phi(x).
template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
    constexpr T inv_sqrt2 = T(0.7071067811865475244);
    constexpr T inv_sqrt2pi = T(0.3989422804014326779);
    return unary(
        x, "gelu",
        [=](T v) { return T(0.5) * v * (T(1) + std::erf(v * inv_sqrt2)); },
        [=](T v, T) {
            const T phi_cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
            const T phi_pdf = inv_sqrt2pi * std::exp(T(-0.5) * v * v);
            T d = phi_cdf + v * phi_pdf;
            if (testing::corrupt_backward) d *= T(1.05);
            return d;
        });
}

// softplus(x) = ln(1 + e^x), linear branch above 20 to avoid overflow.
template <typename T>
Tensor<T> softplus(const Tensor<T>& x) {
    return unary(
        x, "softplus",
        [](T v) { return v > T(20) ? v : std::log1p(std::exp(v)); },
        [](T v, T) {
            return v > T(20) ? T(1) / (T(1) + std::exp(-v))
                             : std::exp(v) / (T(1) + std::exp(v));
        });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    return unary(
        x, "sigmoid",
        [](T v) {
            if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
            const T e = std::exp(v);
            return e / (T(1) + e);
        },
        [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> abs(const Tensor<T>& x) {
    return unary(
        x, "abs", [](T v) { return std::abs(v); },
        [](T v, T) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
}

// ---------------------------------------------------------------------------
// Reductions.
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
    T acc = 0;
    for (T v : x.values()) acc += v;
    if (!detail::want_graph<T>({&x})) return Tensor<T>::scalar(acc);
    return Tensor<T>::make_node(
        {1}, {acc}, "sum", {x}, [](detail::Node<T>& self) {
            auto& p = *self.parents[0];
            if (!p.tracked()) return;
            p.ensure_grad();
            const T g = self.grad[0];
            for (auto& gi : p.grad) gi += g;
        });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
    if (x.size() == 0) throw DimensionError("mean: empty tensor");
    T acc = 0;
    for (T v : x.values()) acc += v;
    const T inv = T(1) / static_cast<T>(x.size());
    if (!detail::want_graph<T>({&x})) return Tensor<T>::scalar(acc * inv);
    return Tensor<T>::make_node(
        {1}, {acc * inv}, "mean", {x}, [inv](detail::Node<T>& self) {
            auto& p = *self.parents[0];
            if (!p.tracked()) return;
            p.ensure_grad();
            const T g = self.grad[0] * inv;
            for (auto& gi : p.grad) gi += g;
        });
}

// ---------------------------------------------------------------------------
// linear: y[..., j] = sum_i x[..., i] * w[i, j] (+ b[j])
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* b = nullptr) {
    if (x.rank() < 1 || w.rank() != 2)
        throw DimensionError("linear: need x rank>=1 and w rank 2, got " +
                             shape_str(x.shape()) + " and " + shape_str(w.shape()));
    const std::size_t f_in = x.shape().back();
    if (w.dim(0) != f_in)
        throw DimensionError("linear: inner dimensions disagree, x " + shape_str(x.shape()) +
                             " vs w " + shape_str(w.shape()));
    const std::size_t f_out = w.dim(1);
    if (b && (b->rank() != 1 || b->dim(0) != f_out))
        throw DimensionError("linear: bias shape " + shape_str(b->shape()) +
                             " does not match w " + shape_str(w.shape()));
    const std::size_t rows = x.size() / f_in;
    Shape out_shape = x.shape();
    out_shape.back() = f_out;

    auto xv = x.values();
    auto wv = w.values();
    std::vector<T> out(rows * f_out, T(0));
    for (std::size_t m = 0; m < rows; ++m) {
        T* yr = out.data() + m * f_out;
        if (b) {
            auto bv = b->values();
            for (std::size_t j = 0; j < f_out; ++j) yr[j] = bv[j];
        }
        const T* xr = xv.data() + m * f_in;
        for (std::size_t i = 0; i < f_in; ++i) {
            const T xi = xr[i];
            const T* wr = wv.data() + i * f_out;
            for (std::size_t j = 0; j < f_out; ++j) yr[j] += xi * wr[j];
        }
    }

    std::vector<Tensor<T>> parents{x, w};
    bool track;
    if (b) {
        parents.push_back(*b);
        track = detail::want_graph<T>({&x, &w, b});
    } else {
        track = detail::want_graph<T>({&x, &w});
    }
    if (!track) return Tensor<T>::from_data(std::move(out_shape), std::move(out));
    return Tensor<T>::make_node(
        std::move(out_shape), std::move(out), "linear", std::move(parents),
        [rows, f_in, f_out](detail::Node<T>& self) {
            auto& px = *self.parents[0];
            auto& pw = *self.parents[1];
            const T* g = self.grad.data();
            if (px.tracked()) {
                px.ensure_grad();
                for (std::size_t m = 0; m < rows; ++m) {
                    const T* gr = g + m * f_out;
                    T* xr = px.grad.data() + m * f_in;
                    for (std::size_t i = 0; i < f_in; ++i) {
                        const T* wr = pw.values.data() + i * f_out;
                        T acc = 0;
                        for (std::size_t j = 0; j < f_out; ++j) acc += gr[j] * wr[j];
                        xr[i] += acc;
                    }
                }
            }
            if (pw.tracked()) {
                pw.ensure_grad();
                for (std::size_t m = 0; m < rows; ++m) {
                    const T* gr = g + m * f_out;
                    const T* xr = px.values.data() + m * f_in;
                    for (std::size_t i = 0; i < f_in; ++i) {
                        const T xi = xr[i];
                        T* wr = pw.grad.data() + i * f_out;
                        for (std::size_t j = 0; j < f_out; ++j) wr[j] += xi * gr[j];
                    }
                }
            }
            if (self.parents.size() > 2 && self.parents[2]->tracked()) {
                auto& pb = *self.parents[2];
                pb.ensure_grad();
                for (std::size_t m = 0; m < rows; ++m) {
                    const T* gr = g + m * f_out;
                    for (std::size_t j = 0; j < f_out; ++j) pb.grad[j] += gr[j];
                }
            }
        });
}

// ---------------------------------------------------------------------------
// conv2d: NCHW, weight [C_out, C_in/groups, K, K], zero padding.
// groups == C_in with C_out == C_in is the depthwise case; K == 1 the
// pointwise case (which takes a fused fast path).
// ---------------------------------------------------------------------------

struct Conv2dSpec {
    std::size_t stride = 1;
    std::size_t padding = 0;
    std::size_t groups = 1;
};

namespace detail {

template <typename T>
void conv2d_forward_kernel(const T* x, const T* w, const T* bias, T* y, std::size_t batch,
                           std::size_t c_in, std::size_t h, std::size_t wd, std::size_t c_out,
                           std::size_t k, std::size_t stride, std::size_t pad, std::size_t groups,
                           std::size_t ho, std::size_t wo) {
    const std::size_t cig = c_in / groups;
    const std::size_t cog = c_out / groups;
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t oc = 0; oc < c_out; ++oc) {
            T* yp = y + ((b * c_out + oc) * ho) * wo;
            const T bv = bias ? bias[oc] : T(0);
            for (std::size_t i = 0; i < ho * wo; ++i) yp[i] = bv;
            const std::size_t g = oc / cog;
            for (std::size_t icg = 0; icg < cig; ++icg) {
                const std::size_t ic = g * cig + icg;
                const T* xp = x + ((b * c_in + ic) * h) * wd;
                const T* wp = w + ((oc * cig + icg) * k) * k;
                for (std::size_t kh = 0; kh < k; ++kh) {
                    for (std::size_t kw = 0; kw < k; ++kw) {
                        const T wv = wp[kh * k + kw];
                        if (wv == T(0)) continue;
                        for (std::size_t oh = 0; oh < ho; ++oh) {
                            const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * stride + kh) -
                                                      static_cast<std::ptrdiff_t>(pad);
                            if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h)) continue;
                            const T* xrow = xp + ih * wd;
                            T* yrow = yp + oh * wo;
                            for (std::size_t ow = 0; ow < wo; ++ow) {
                                const std::ptrdiff_t iw =
                                    static_cast<std::ptrdiff_t>(ow * stride + kw) -
                                    static_cast<std::ptrdiff_t>(pad);
                                if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(wd)) continue;
                                yrow[ow] += wv * xrow[iw];
                            }
                        }
                    }
                }
            }
        }
    }
}

// 1x1 stride-1 convolution as a channel-mixing matmul over the spatial plane.
template <typename T>
void conv2d_pointwise_forward(const T* x, const T* w, const T* bias, T* y, std::size_t batch,
                              std::size_t c_in, std::size_t plane, std::size_t c_out) {
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t oc = 0; oc < c_out; ++oc) {
            T* yp = y + (b * c_out + oc) * plane;
            const T bv = bias ? bias[oc] : T(0);
            for (std::size_t i = 0; i < plane; ++i) yp[i] = bv;
            for (std::size_t ic = 0; ic < c_in; ++ic) {
                const T wv = w[oc * c_in + ic];
                const T* xp = x + (b * c_in + ic) * plane;
                for (std::size_t i = 0; i < plane; ++i) yp[i] += wv * xp[i];
            }
        }
    }
}

}  // namespace detail

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias,
                 const Conv2dSpec& spec) {
    if (x.rank() != 4 || w.rank() != 4)
        throw DimensionError("conv2d: need x rank 4 and w rank 4, got " + shape_str(x.shape()) +
                             " and " + shape_str(w.shape()));
    const std::size_t batch = x.dim(0), c_in = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const std::size_t c_out = w.dim(0), k = w.dim(2);
    if (w.dim(3) != k) throw DimensionError("conv2d: kernel must be square, got " + shape_str(w.shape()));
    if (k % 2 == 0) throw ConfigError("conv2d: kernel size must be odd, got " + std::to_string(k));
    if (spec.stride != 1 && spec.stride != 2)
        throw ConfigError("conv2d: stride must be 1 or 2, got " + std::to_string(spec.stride));
    if (spec.groups == 0 || c_in % spec.groups != 0 || c_out % spec.groups != 0)
        throw ConfigError("conv2d: channels (" + std::to_string(c_in) + "," +
                          std::to_string(c_out) + ") not divisible by groups " +
                          std::to_string(spec.groups));
    if (w.dim(1) != c_in / spec.groups)
        throw DimensionError("conv2d: weight " + shape_str(w.shape()) + " does not match input " +
                             shape_str(x.shape()) + " with groups " + std::to_string(spec.groups));
    if (bias && (bias->rank() != 1 || bias->dim(0) != c_out))
        throw DimensionError("conv2d: bias shape " + shape_str(bias->shape()) +
                             " does not match C_out " + std::to_string(c_out));
    if (h + 2 * spec.padding < k || wd + 2 * spec.padding < k)
        throw DimensionError("conv2d: input " + shape_str(x.shape()) + " smaller than kernel " +
                             shape_str(w.shape()));
    const std::size_t ho = (h + 2 * spec.padding - k) / spec.stride + 1;
    const std::size_t wo = (wd + 2 * spec.padding - k) / spec.stride + 1;

    const bool pointwise = (k == 1 && spec.stride == 1 && spec.padding == 0 && spec.groups == 1);
    std::vector<T> out(batch * c_out * ho * wo);
    if (pointwise) {
        detail::conv2d_pointwise_forward(x.values().data(), w.values().data(),
                                         bias ? bias->values().data() : nullptr, out.data(), batch,
                                         c_in, h * wd, c_out);
    } else {
        detail::conv2d_forward_kernel(x.values().data(), w.values().data(),
                                      bias ? bias->values().data() : nullptr, out.data(), batch,
                                      c_in, h, wd, c_out, k, spec.stride, spec.padding,
                                      spec.groups, ho, wo);
    }

    Shape out_shape{batch, c_out, ho, wo};
    std::vector<Tensor<T>> parents{x, w};
    bool track;
    if (bias) {
        parents.push_back(*bias);
        track = detail::want_graph<T>({&x, &w, bias});
    } else {
        track = detail::want_graph<T>({&x, &w});
    }
    if (!track) return Tensor<T>::from_data(std::move(out_shape), std::move(out));

    const Conv2dSpec sp = spec;
    return Tensor<T>::make_node(
        std::move(out_shape), std::move(out), "conv2d", std::move(parents),
        [batch, c_in, h, wd, c_out, k, sp, ho, wo](radiomamba::detail::Node<T>& self) {
            auto& px = *self.parents[0];
            auto& pw = *self.parents[1];
            const T* g = self.grad.data();
            const std::size_t cig = c_in / sp.groups;
            const std::size_t cog = c_out / sp.groups;
            if (px.tracked()) {
                px.ensure_grad();
                for (std::size_t b = 0; b < batch; ++b)
                    for (std::size_t oc = 0; oc < c_out; ++oc) {
                        const std::size_t grp = oc / cog;
                        const T* gp = g + ((b * c_out + oc) * ho) * wo;
                        for (std::size_t icg = 0; icg < cig; ++icg) {
                            const std::size_t ic = grp * cig + icg;
                            T* xp = px.grad.data() + ((b * c_in + ic) * h) * wd;
                            const T* wp = pw.values.data() + ((oc * cig + icg) * k) * k;
                            for (std::size_t kh = 0; kh < k; ++kh)
                                for (std::size_t kw = 0; kw < k; ++kw) {
                                    const T wv = wp[kh * k + kw];
                                    if (wv == T(0)) continue;
                                    for (std::size_t oh = 0; oh < ho; ++oh) {
                                        const std::ptrdiff_t ih =
                                            static_cast<std::ptrdiff_t>(oh * sp.stride + kh) -
                                            static_cast<std::ptrdiff_t>(sp.padding);
                                        if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h)) continue;
                                        const T* grow = gp + oh * wo;
                                        T* xrow = xp + ih * wd;
                                        for (std::size_t ow = 0; ow < wo; ++ow) {
                                            const std::ptrdiff_t iw =
                                                static_cast<std::ptrdiff_t>(ow * sp.stride + kw) -
                                                static_cast<std::ptrdiff_t>(sp.padding);
                                            if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(wd))
                                                continue;
                                            xrow[iw] += wv * grow[ow];
                                        }
                                    }
                                }
                        }
                    }
            }
            if (pw.tracked()) {
                pw.ensure_grad();
                for (std::size_t b = 0; b < batch; ++b)
                    for (std::size_t oc = 0; oc < c_out; ++oc) {
                        const std::size_t grp = oc / cog;
                        const T* gp = g + ((b * c_out + oc) * ho) * wo;
                        for (std::size_t icg = 0; icg < cig; ++icg) {
                            const std::size_t ic = grp * cig + icg;
                            const T* xp = px.values.data() + ((b * c_in + ic) * h) * wd;
                            T* wp = pw.grad.data() + ((oc * cig + icg) * k) * k;
                            for (std::size_t kh = 0; kh < k; ++kh)
                                for (std::size_t kw = 0; kw < k; ++kw) {
                                    T acc = 0;
                                    for (std::size_t oh = 0; oh < ho; ++oh) {
                                        const std::ptrdiff_t ih =
                                            static_cast<std::ptrdiff_t>(oh * sp.stride + kh) -
                                            static_cast<std::ptrdiff_t>(sp.padding);
                                        if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h)) continue;
                                        const T* grow = gp + oh * wo;
                                        const T* xrow = xp + ih * wd;
                                        for (std::size_t ow = 0; ow < wo; ++ow) {
                                            const std::ptrdiff_t iw =
                                                static_cast<std::ptrdiff_t>(ow * sp.stride + kw) -
                                                static_cast<std::ptrdiff_t>(sp.padding);
                                            if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(wd))
                                                continue;
                                            acc += xrow[iw] * grow[ow];
                                        }
                                    }
                                    wp[kh * k + kw] += acc;
                                }
                        }
                    }
            }
            if (self.parents.size() > 2 && self.parents[2]->tracked()) {
                auto& pb = *self.parents[2];
                pb.ensure_grad();
                for (std::size_t b = 0; b < batch; ++b)
                    for (std::size_t oc = 0; oc < c_out; ++oc) {
                        const T* gp = g + ((b * c_out + oc) * ho) * wo;
                        T acc = 0;
                        for (std::size_t i = 0; i < ho * wo; ++i) acc += gp[i];
                        pb.grad[oc] += acc;
                    }
            }
        });
}

// ---------------------------------------------------------------------------
// conv2d_transposed: stride-2 upsampling, weight [C_in, C_out, 2, 2].
// With K=2, s=2, p=0 the output extents are exactly doubled and every output
// pixel maps to exactly one (kh, kw) tap. Forward is the adjoint of the
// stride-2 K=2 correlation.
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> conv2d_transposed(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias,
                            std::size_t stride = 2) {
    if (x.rank() != 4 || w.rank() != 4)
        throw DimensionError("conv2d_transposed: need x rank 4 and w rank 4, got " +
                             shape_str(x.shape()) + " and " + shape_str(w.shape()));
    if (stride != 2 || w.dim(2) != 2 || w.dim(3) != 2)
        throw ConfigError("conv2d_transposed: only stride 2 with a 2x2 kernel doubles the "
                          "extents exactly; got stride " + std::to_string(stride) +
                          ", kernel " + shape_str(w.shape()));
    const std::size_t batch = x.dim(0), c_in = x.dim(1), h = x.dim(2), wd = x.dim(3);
    if (w.dim(0) != c_in)
        throw DimensionError("conv2d_transposed: weight " + shape_str(w.shape()) +
                             " does not match input channels " + shape_str(x.shape()));
    const std::size_t c_out = w.dim(1);
    if (bias && (bias->rank() != 1 || bias->dim(0) != c_out))
        throw DimensionError("conv2d_transposed: bias shape " + shape_str(bias->shape()) +
                             " does not match C_out " + std::to_string(c_out));
    const std::size_t ho = 2 * h, wo = 2 * wd;

    auto xv = x.values();
    auto wv = w.values();
    std::vector<T> out(batch * c_out * ho * wo, T(0));
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t oc = 0; oc < c_out; ++oc) {
            T* yp = out.data() + ((b * c_out + oc) * ho) * wo;
            if (bias) {
                const T bv = bias->values()[oc];
                for (std::size_t i = 0; i < ho * wo; ++i) yp[i] = bv;
            }
            for (std::size_t ic = 0; ic < c_in; ++ic) {
                const T* xp = xv.data() + ((b * c_in + ic) * h) * wd;
                const T* wp = wv.data() + ((ic * c_out + oc) * 2) * 2;
                for (std::size_t oh = 0; oh < ho; ++oh) {
                    const std::size_t ih = oh >> 1, kh = oh & 1;
                    const T* xrow = xp + ih * wd;
                    T* yrow = yp + oh * wo;
                    const T w0 = wp[kh * 2 + 0], w1 = wp[kh * 2 + 1];
                    for (std::size_t iw = 0; iw < wd; ++iw) {
                        yrow[2 * iw] += w0 * xrow[iw];
                        yrow[2 * iw + 1] += w1 * xrow[iw];
                    }
                }
            }
        }

    Shape out_shape{batch, c_out, ho, wo};
    std::vector<Tensor<T>> parents{x, w};
    bool track;
    if (bias) {
        parents.push_back(*bias);
        track = detail::want_graph<T>({&x, &w, bias});
    } else {
        track = detail::want_graph<T>({&x, &w});
    }
    if (!track) return Tensor<T>::from_data(std::move(out_shape), std::move(out));
    return Tensor<T>::make_node(
        std::move(out_shape), std::move(out), "conv2d_transposed", std::move(parents),
        [batch, c_in, h, wd, c_out, ho, wo](radiomamba::detail::Node<T>& self) {
            auto& px = *self.parents[0];
            auto& pw = *self.parents[1];
            const T* g = self.grad.data();
            if (px.tracked()) {
                px.ensure_grad();
                for (std::size_t b = 0; b < batch; ++b)
                    for (std::size_t ic = 0; ic < c_in; ++ic) {
                        T* xp = px.grad.data() + ((b * c_in + ic) * h) * wd;
                        for (std::size_t oc = 0; oc < c_out; ++oc) {
                            const T* gp = g + ((b * c_out + oc) * ho) * wo;
                            const T* wp = pw.values.data() + ((ic * c_out + oc) * 2) * 2;
                            for (std::size_t ih = 0; ih < h; ++ih) {
                                T* xrow = xp + ih * wd;
                                const T* g0 = gp + (2 * ih) * wo;
                                const T* g1 = gp + (2 * ih + 1) * wo;
                                for (std::size_t iw = 0; iw < wd; ++iw) {
                                    xrow[iw] += wp[0] * g0[2 * iw] + wp[1] * g0[2 * iw + 1] +
                                                wp[2] * g1[2 * iw] + wp[3] * g1[2 * iw + 1];
                                }
                            }
                        }
                    }
            }
            if (pw.tracked()) {
                pw.ensure_grad();
                for (std::size_t b = 0; b < batch; ++b)
                    for (std::size_t ic = 0; ic < c_in; ++ic) {
                        const T* xp = px.values.data() + ((b * c_in + ic) * h) * wd;
                        for (std::size_t oc = 0; oc < c_out; ++oc) {
                            const T* gp = g + ((b * c_out + oc) * ho) * wo;
                            T* wp = pw.grad.data() + ((ic * c_out + oc) * 2) * 2;
                            T a00 = 0, a01 = 0, a10 = 0, a11 = 0;
                            for (std::size_t ih = 0; ih < h; ++ih) {
                                const T* xrow = xp + ih * wd;
                                const T* g0 = gp + (2 * ih) * wo;
                                const T* g1 = gp + (2 * ih + 1) * wo;
                                for (std::size_t iw = 0; iw < wd; ++iw) {
                                    const T xvv = xrow[iw];
                                    a00 += xvv * g0[2 * iw];
                                    a01 += xvv * g0[2 * iw + 1];
                                    a10 += xvv * g1[2 * iw];
                                    a11 += xvv * g1[2 * iw + 1];
                                }
                            }
                            wp[0] += a00;
                            wp[1] += a01;
                            wp[2] += a10;
                            wp[3] += a11;
                        }
                    }
            }
            if (self.parents.size() > 2 && self.parents[2]->tracked()) {
                auto& pb = *self.parents[2];
                pb.ensure_grad();
                for (std::size_t b = 0; b < batch; ++b)
                    for (std::size_t oc = 0; oc < c_out; ++oc) {
                        const T* gp = g + ((b * c_out + oc) * ho) * wo;
                        T acc = 0;
                        for (std::size_t i = 0; i < ho * wo; ++i) acc += gp[i];
                        pb.grad[oc] += acc;
                    }
            }
        });
}

// ---------------------------------------------------------------------------
// layernorm over the trailing (channel) axis. Biased variance, eps inside
// the square root.
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> layernorm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                    T eps = T(1e-5)) {
    if (x.rank() < 1) throw DimensionError("layernorm: need rank >= 1");
    const std::size_t c = x.shape().back();
    if (c == 0) throw DimensionError("layernorm: channel dimension is zero");
    if (gain.size() != c || bias.size() != c)
        throw DimensionError("layernorm: gain " + shape_str(gain.shape()) + " / bias " +
                             shape_str(bias.shape()) + " do not match channels " +
                             std::to_string(c));
    const std::size_t rows = x.size() / c;
    auto xv = x.values();
    auto gv = gain.values();
    auto bv = bias.values();
    std::vector<T> out(x.size());
    std::vector<T> xhat(x.size());
    std::vector<T> inv_std(rows);
    for (std::size_t m = 0; m < rows; ++m) {
        const T* xr = xv.data() + m * c;
        T mu = 0;
        for (std::size_t i = 0; i < c; ++i) mu += xr[i];
        mu /= static_cast<T>(c);
        T var = 0;
        for (std::size_t i = 0; i < c; ++i) {
            const T d = xr[i] - mu;
            var += d * d;
        }
        var /= static_cast<T>(c);
        const T inv = T(1) / std::sqrt(var + eps);
        inv_std[m] = inv;
        for (std::size_t i = 0; i < c; ++i) {
            const T xh = (xr[i] - mu) * inv;
            xhat[m * c + i] = xh;
            out[m * c + i] = gv[i] * xh + bv[i];
        }
    }
    if (!detail::want_graph<T>({&x, &gain, &bias}))
        return Tensor<T>::from_data(x.shape(), std::move(out));
    return Tensor<T>::make_node(
        x.shape(), std::move(out), "layernorm", {x, gain, bias},
        [rows, c, xhat = std::move(xhat), inv_std = std::move(inv_std)](
            radiomamba::detail::Node<T>& self) {
            auto& px = *self.parents[0];
            auto& pg = *self.parents[1];
            auto& pb = *self.parents[2];
            const T* g = self.grad.data();
            const T* gv = pg.values.data();
            if (pg.tracked()) pg.ensure_grad();
            if (pb.tracked()) pb.ensure_grad();
            if (px.tracked()) px.ensure_grad();
            for (std::size_t m = 0; m < rows; ++m) {
                const T* gr = g + m * c;
                const T* xh = xhat.data() + m * c;
                if (pg.tracked())
                    for (std::size_t i = 0; i < c; ++i) pg.grad[i] += gr[i] * xh[i];
                if (pb.tracked())
                    for (std::size_t i = 0; i < c; ++i) pb.grad[i] += gr[i];
                if (px.tracked()) {
                    T mean_dy = 0, mean_dyxh = 0;
                    for (std::size_t i = 0; i < c; ++i) {
                        const T dy = gr[i] * gv[i];
                        mean_dy += dy;
                        mean_dyxh += dy * xh[i];
                    }
                    mean_dy /= static_cast<T>(c);
                    mean_dyxh /= static_cast<T>(c);
                    const T inv = inv_std[m];
                    T* xg = px.grad.data() + m * c;
                    for (std::size_t i = 0; i < c; ++i) {
                        const T dy = gr[i] * gv[i];
                        xg[i] += inv * (dy - mean_dy - xh[i] * mean_dyxh);
                    }
                }
            }
        });
}

// ---------------------------------------------------------------------------
// Channel concat / split, sequence reversal, raster flatten, reflect pad.
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 4 || b.rank() != 4)
        throw DimensionError("concat_channels: need rank-4 inputs, got " + shape_str(a.shape()) +
                             " and " + shape_str(b.shape()));
    if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
        throw DimensionError("concat_channels: batch/spatial mismatch " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
    const std::size_t batch = a.dim(0), c1 = a.dim(1), c2 = b.dim(1), plane = a.dim(2) * a.dim(3);
    std::vector<T> out(batch * (c1 + c2) * plane);
    auto av = a.values();
    auto bv = b.values();
    for (std::size_t bt = 0; bt < batch; ++bt) {
        std::copy_n(av.data() + bt * c1 * plane, c1 * plane,
                    out.data() + bt * (c1 + c2) * plane);
        std::copy_n(bv.data() + bt * c2 * plane, c2 * plane,
                    out.data() + bt * (c1 + c2) * plane + c1 * plane);
    }
    Shape out_shape{batch, c1 + c2, a.dim(2), a.dim(3)};
    if (!detail::want_graph<T>({&a, &b}))
        return Tensor<T>::from_data(std::move(out_shape), std::move(out));
    return Tensor<T>::make_node(
        std::move(out_shape), std::move(out), "concat_channels", {a, b},
        [batch, c1, c2, plane](radiomamba::detail::Node<T>& self) {
            auto& pa = *self.parents[0];
            auto& pb = *self.parents[1];
            const T* g = self.grad.data();
            if (pa.tracked()) {
                pa.ensure_grad();
                for (std::size_t bt = 0; bt < batch; ++bt) {
                    const T* gp = g + bt * (c1 + c2) * plane;
                    T* ap = pa.grad.data() + bt * c1 * plane;
                    for (std::size_t i = 0; i < c1 * plane; ++i) ap[i] += gp[i];
                }
            }
            if (pb.tracked()) {
                pb.ensure_grad();
                for (std::size_t bt = 0; bt < batch; ++bt) {
                    const T* gp = g + bt * (c1 + c2) * plane + c1 * plane;
                    T* bp = pb.grad.data() + bt * c2 * plane;
                    for (std::size_t i = 0; i < c2 * plane; ++i) bp[i] += gp[i];
                }
            }
        });
}

// Inverse of concat_channels: returns the [0, c1) and [c1, C) channel slices.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& x, std::size_t c1) {
    if (x.rank() != 4) throw DimensionError("split_channels: need rank 4, got " + shape_str(x.shape()));
    const std::size_t batch = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
    if (c1 == 0 || c1 >= c)
        throw DimensionError("split_channels: split point " + std::to_string(c1) +
                             " out of range for " + shape_str(x.shape()));
    const std::size_t c2 = c - c1;
    std::vector<T> ov1(batch * c1 * plane), ov2(batch * c2 * plane);
    auto xv = x.values();
    for (std::size_t bt = 0; bt < batch; ++bt) {
        std::copy_n(xv.data() + bt * c * plane, c1 * plane, ov1.data() + bt * c1 * plane);
        std::copy_n(xv.data() + bt * c * plane + c1 * plane, c2 * plane,
                    ov2.data() + bt * c2 * plane);
    }
    Shape s1{batch, c1, x.dim(2), x.dim(3)}, s2{batch, c2, x.dim(2), x.dim(3)};
    if (!detail::want_graph<T>({&x}))
        return {Tensor<T>::from_data(std::move(s1), std::move(ov1)),
                Tensor<T>::from_data(std::move(s2), std::move(ov2))};
    auto back = [batch, c, plane](std::size_t offset, std::size_t width) {
        return [batch, c, plane, offset, width](radiomamba::detail::Node<T>& self) {
            auto& p = *self.parents[0];
            if (!p.tracked()) return;
            p.ensure_grad();
            const T* g = self.grad.data();
            for (std::size_t bt = 0; bt < batch; ++bt) {
                T* xp = p.grad.data() + bt * c * plane + offset * plane;
                const T* gp = g + bt * width * plane;
                for (std::size_t i = 0; i < width * plane; ++i) xp[i] += gp[i];
            }
        };
    };
    return {Tensor<T>::make_node(std::move(s1), std::move(ov1), "split_channels", {x}, back(0, c1)),
            Tensor<T>::make_node(std::move(s2), std::move(ov2), "split_channels", {x},
                                 back(c1, c2))};
}

// out[b, k, c] = x[b, L-1-k, c]
template <typename T>
Tensor<T> reverse_sequence(const Tensor<T>& x) {
    if (x.rank() != 3)
        throw DimensionError("reverse_sequence: need rank-3 [B,L,C], got " + shape_str(x.shape()));
    const std::size_t batch = x.dim(0), len = x.dim(1), c = x.dim(2);
    auto xv = x.values();
    std::vector<T> out(x.size());
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t k = 0; k < len; ++k)
            std::copy_n(xv.data() + (b * len + (len - 1 - k)) * c, c,
                        out.data() + (b * len + k) * c);
    if (!detail::want_graph<T>({&x})) return Tensor<T>::from_data(x.shape(), std::move(out));
    return Tensor<T>::make_node(
        x.shape(), std::move(out), "reverse_sequence", {x},
        [batch, len, c](radiomamba::detail::Node<T>& self) {
            auto& p = *self.parents[0];
            if (!p.tracked()) return;
            p.ensure_grad();
            const T* g = self.grad.data();
            for (std::size_t b = 0; b < batch; ++b)
                for (std::size_t k = 0; k < len; ++k) {
                    T* xp = p.grad.data() + (b * len + (len - 1 - k)) * c;
                    const T* gp = g + (b * len + k) * c;
                    for (std::size_t i = 0; i < c; ++i) xp[i] += gp[i];
                }
        });
}

// [B,C,H,W] -> [B,H*W,C] in raster order (k = i*W + j); a pure permutation.
template <typename T>
Tensor<T> raster_flatten(const Tensor<T>& x) {
    if (x.rank() != 4)
        throw DimensionError("raster_flatten: need rank-4 [B,C,H,W], got " + shape_str(x.shape()));
    const std::size_t batch = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
    auto xv = x.values();
    std::vector<T> out(x.size());
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t ch = 0; ch < c; ++ch) {
            const T* xp = xv.data() + (b * c + ch) * plane;
            T* op = out.data() + b * plane * c + ch;
            for (std::size_t k = 0; k < plane; ++k) op[k * c] = xp[k];
        }
    Shape out_shape{batch, plane, c};
    if (!detail::want_graph<T>({&x}))
        return Tensor<T>::from_data(std::move(out_shape), std::move(out));
    return Tensor<T>::make_node(
        std::move(out_shape), std::move(out), "raster_flatten", {x},
        [batch, c, plane](radiomamba::detail::Node<T>& self) {
            auto& p = *self.parents[0];
            if (!p.tracked()) return;
            p.ensure_grad();
            const T* g = self.grad.data();
            for (std::size_t b = 0; b < batch; ++b)
                for (std::size_t ch = 0; ch < c; ++ch) {
                    T* xp = p.grad.data() + (b * c + ch) * plane;
                    const T* gp = g + b * plane * c + ch;
                    for (std::size_t k = 0; k < plane; ++k) xp[k] += gp[k * c];
                }
        });
}

// [B,L,C] -> [B,C,H,W]; L must equal H*W.
template <typename T>
Tensor<T> raster_unflatten(const Tensor<T>& x, std::size_t h, std::size_t w) {
    if (x.rank() != 3)
        throw DimensionError("raster_unflatten: need rank-3 [B,L,C], got " + shape_str(x.shape()));
    const std::size_t batch = x.dim(0), len = x.dim(1), c = x.dim(2);
    if (len != h * w)
        throw DimensionError("raster_unflatten: L=" + std::to_string(len) + " does not equal " +
                             std::to_string(h) + "x" + std::to_string(w));
    auto xv = x.values();
    std::vector<T> out(x.size());
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t ch = 0; ch < c; ++ch) {
            T* op = out.data() + (b * c + ch) * len;
            const T* xp = xv.data() + b * len * c + ch;
            for (std::size_t k = 0; k < len; ++k) op[k] = xp[k * c];
        }
    Shape out_shape{batch, c, h, w};
    if (!detail::want_graph<T>({&x}))
        return Tensor<T>::from_data(std::move(out_shape), std::move(out));
    return Tensor<T>::make_node(
        std::move(out_shape), std::move(out), "raster_unflatten", {x},
        [batch, c, len](radiomamba::detail::Node<T>& self) {
            auto& p = *self.parents[0];
            if (!p.tracked()) return;
            p.ensure_grad();
            const T* g = self.grad.data();
            for (std::size_t b = 0; b < batch; ++b)
                for (std::size_t ch = 0; ch < c; ++ch) {
                    const T* gp = g + (b * c + ch) * len;
                    T* xp = p.grad.data() + b * len * c + ch;
                    for (std::size_t k = 0; k < len; ++k) xp[k * c] += gp[k];
                }
        });
}

// Single-pixel reflect padding (edge pixel not repeated); needs H, W >= 2.
template <typename T>
Tensor<T> reflect_pad2d(const Tensor<T>& x, std::size_t pad = 1) {
    if (x.rank() != 4)
        throw DimensionError("reflect_pad2d: need rank-4 input, got " + shape_str(x.shape()));
    const std::size_t batch = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (h <= pad || w <= pad)
        throw DimensionError("reflect_pad2d: input " + shape_str(x.shape()) +
                             " too small for pad " + std::to_string(pad));
    const std::size_t ho = h + 2 * pad, wo = w + 2 * pad;
    auto reflect = [](std::ptrdiff_t i, std::ptrdiff_t n) {
        if (i < 0) return static_cast<std::size_t>(-i);
        if (i >= n) return static_cast<std::size_t>(2 * n - 2 - i);
        return static_cast<std::size_t>(i);
    };
    auto xv = x.values();
    std::vector<T> out(batch * c * ho * wo);
    for (std::size_t bc = 0; bc < batch * c; ++bc) {
        const T* xp = xv.data() + bc * h * w;
        T* op = out.data() + bc * ho * wo;
        for (std::size_t oh = 0; oh < ho; ++oh) {
            const std::size_t ih = reflect(static_cast<std::ptrdiff_t>(oh) -
                                               static_cast<std::ptrdiff_t>(pad),
                                           static_cast<std::ptrdiff_t>(h));
            for (std::size_t ow = 0; ow < wo; ++ow) {
                const std::size_t iw = reflect(static_cast<std::ptrdiff_t>(ow) -
                                                   static_cast<std::ptrdiff_t>(pad),
                                               static_cast<std::ptrdiff_t>(w));
                op[oh * wo + ow] = xp[ih * w + iw];
            }
        }
    }
    Shape out_shape{batch, c, ho, wo};
    if (!detail::want_graph<T>({&x}))
        return Tensor<T>::from_data(std::move(out_shape), std::move(out));
    return Tensor<T>::make_node(
        std::move(out_shape), std::move(out), "reflect_pad2d", {x},
        [batch, c, h, w, pad, ho, wo, reflect](radiomamba::detail::Node<T>& self) {
            auto& p = *self.parents[0];
            if (!p.tracked()) return;
            p.ensure_grad();
            const T* g = self.grad.data();
            for (std::size_t bc = 0; bc < batch * c; ++bc) {
                T* xp = p.grad.data() + bc * h * w;
                const T* gp = g + bc * ho * wo;
                for (std::size_t oh = 0; oh < ho; ++oh) {
                    const std::size_t ih = reflect(static_cast<std::ptrdiff_t>(oh) -
                                                       static_cast<std::ptrdiff_t>(pad),
                                                   static_cast<std::ptrdiff_t>(h));
                    for (std::size_t ow = 0; ow < wo; ++ow) {
                        const std::size_t iw = reflect(static_cast<std::ptrdiff_t>(ow) -
                                                           static_cast<std::ptrdiff_t>(pad),
                                                       static_cast<std::ptrdiff_t>(w));
                        xp[ih * w + iw] += gp[oh * wo + ow];
                    }
                }
            }
        });
}

}  // namespace ops
}  // namespace radiomamba
