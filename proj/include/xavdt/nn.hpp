#pragma once

#include <Eigen/Core>
#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "xavdt/errors.hpp"
#include "xavdt/rng.hpp"
#include "xavdt/tensor.hpp"

// Minimal trainable-layer toolkit with explicit reverse passes. Every layer
// is a plain struct; activations needed by the reverse pass live in a Ctx
// object returned per forward call, so one layer instance can be applied many
// times (per frame, per stream) inside a single graph evaluation. Templated
// on the scalar so the same graph runs in float for training and double for
// finite-difference verification.

namespace xavdt::nn {

template <typename T>
using EMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// c (m x n) = alpha * op(a) * op(b) + beta * c, all row-major contiguous
template <typename T>
void gemm(bool ta, bool tb, int64_t m, int64_t n, int64_t k, T alpha, const T* a, const T* b, T beta, T* c) {
    using Map = Eigen::Map<EMat<T>>;
    using CMap = Eigen::Map<const EMat<T>>;
    Map C(c, m, n);
    if (beta == T{0})
        C.setZero();
    else if (beta != T{1})
        C *= beta;
    const CMap A(a, ta ? k : m, ta ? m : k);
    const CMap B(b, tb ? n : k, tb ? k : n);
    if (!ta && !tb)
        C.noalias() += alpha * A * B;
    else if (ta && !tb)
        C.noalias() += alpha * A.transpose() * B;
    else if (!ta && tb)
        C.noalias() += alpha * A * B.transpose();
    else
        C.noalias() += alpha * A.transpose() * B.transpose();
}

template <typename T>
struct Param {
    Tensor<T> v, g;
    void init(std::vector<int64_t> shape) {
        v = Tensor<T>(shape, T{});
        g = Tensor<T>(shape, T{});
    }
};

template <typename T>
struct ParamRef {
    std::string name;
    Tensor<T>* v;
    Tensor<T>* g;
};

template <typename T>
void collect_param(std::vector<ParamRef<T>>& out, const std::string& name, Param<T>& p) {
    out.push_back({name, &p.v, &p.g});
}

// ---------------------------------------------------------------- linear

template <typename T>
struct Linear {
    Param<T> w;  // in x out
    Param<T> b;  // out
    bool bias = true;

    struct Ctx {
        Tensor<T> x;
    };

    void init(int64_t in, int64_t out, Rng& rng, double scale = -1.0) {
        w.init({in, out});
        b.init({out});
        if (scale < 0.0) scale = 1.0 / std::sqrt(static_cast<double>(in));
        rng.fill_normal(w.v, 0.0, scale);
    }

    int64_t in_dim() const { return w.v.dim(0); }
    int64_t out_dim() const { return w.v.dim(1); }

    // x: [..., in] -> [..., out]
    Tensor<T> forward(const Tensor<T>& x, Ctx& ctx) const {
        const int64_t in = in_dim(), out = out_dim();
        if (x.dim(x.rank() - 1) != in)
            throw DataError("linear: input width " + std::to_string(x.dim(x.rank() - 1)) + " != " +
                            std::to_string(in));
        const int64_t rows = x.numel() / in;
        std::vector<int64_t> shape = x.shape();
        shape.back() = out;
        Tensor<T> y(shape, T{});
        gemm<T>(false, false, rows, out, in, T{1}, x.data(), w.v.data(), T{0}, y.data());
        if (bias)
            for (int64_t r = 0; r < rows; ++r)
                for (int64_t j = 0; j < out; ++j) y[r * out + j] += b.v[j];
        ctx.x = x;
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy, const Ctx& ctx) {
        const int64_t in = in_dim(), out = out_dim();
        const int64_t rows = ctx.x.numel() / in;
        gemm<T>(true, false, in, out, rows, T{1}, ctx.x.data(), dy.data(), T{1}, w.g.data());
        if (bias)
            for (int64_t r = 0; r < rows; ++r)
                for (int64_t j = 0; j < out; ++j) b.g[j] += dy[r * out + j];
        Tensor<T> dx(ctx.x.shape(), T{});
        gemm<T>(false, true, rows, in, out, T{1}, dy.data(), w.v.data(), T{0}, dx.data());
        return dx;
    }

    void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) {
        collect_param(out, prefix + ".w", w);
        if (bias) collect_param(out, prefix + ".b", b);
    }
};

// ----------------------------------------------------------------- conv3d

// Grouped 3-D convolution over [B, C, D, H, W] volumes via im2col + GEMM.
template <typename T>
struct Conv3d {
    int64_t cin = 0, cout = 0, groups = 1;
    std::array<int64_t, 3> kernel{3, 3, 3}, stride{1, 1, 1}, pad{1, 1, 1};
    Param<T> w;  // cout x (cin/groups * kd*kh*kw)
    Param<T> b;  // cout
    bool bias = true;

    struct Ctx {
        std::vector<int64_t> in_shape;
        std::vector<Tensor<T>> cols;  // one per (sample, group)
    };

    void init(int64_t cin_, int64_t cout_, std::array<int64_t, 3> k, std::array<int64_t, 3> s,
              std::array<int64_t, 3> p, int64_t groups_, Rng& rng, double scale = -1.0) {
        if (cin_ % groups_ != 0 || cout_ % groups_ != 0)
            throw ConfigError("conv3d: " + std::to_string(cin_) + "->" + std::to_string(cout_) +
                              " channels not divisible by " + std::to_string(groups_) + " groups");
        cin = cin_;
        cout = cout_;
        groups = groups_;
        kernel = k;
        stride = s;
        pad = p;
        const int64_t kvol = k[0] * k[1] * k[2];
        w.init({cout, (cin / groups) * kvol});
        b.init({cout});
        if (scale < 0.0) scale = 1.0 / std::sqrt(static_cast<double>((cin / groups) * kvol));
        rng.fill_normal(w.v, 0.0, scale);
    }

    std::array<int64_t, 3> out_dims(const std::array<int64_t, 3>& in) const {
        std::array<int64_t, 3> o{};
        for (int i = 0; i < 3; ++i) {
            const int64_t span = in[static_cast<size_t>(i)] + 2 * pad[static_cast<size_t>(i)] -
                                 kernel[static_cast<size_t>(i)];
            if (span < 0)
                throw DataError("conv3d: input " + std::to_string(in[static_cast<size_t>(i)]) +
                                " smaller than kernel " + std::to_string(kernel[static_cast<size_t>(i)]));
            o[static_cast<size_t>(i)] = span / stride[static_cast<size_t>(i)] + 1;
        }
        return o;
    }

    Tensor<T> forward(const Tensor<T>& x, Ctx& ctx) const {
        if (x.rank() != 5 || x.dim(1) != cin)
            throw DataError("conv3d: expected batch x " + std::to_string(cin) + " x D x H x W, got " +
                            x.shape_string());
        const int64_t n = x.dim(0), d = x.dim(2), h = x.dim(3), wdt = x.dim(4);
        const auto od = out_dims({d, h, wdt});
        const int64_t ovol = od[0] * od[1] * od[2];
        const int64_t cg_in = cin / groups, cg_out = cout / groups;
        const int64_t kvol = kernel[0] * kernel[1] * kernel[2];

        Tensor<T> y({n, cout, od[0], od[1], od[2]}, T{});
        ctx.in_shape = x.shape();
        ctx.cols.clear();
        ctx.cols.reserve(static_cast<size_t>(n * groups));

        for (int64_t bi = 0; bi < n; ++bi)
            for (int64_t g = 0; g < groups; ++g) {
                Tensor<T> col({cg_in * kvol, ovol}, T{});
                im2col(x.data() + (bi * cin + g * cg_in) * d * h * wdt, d, h, wdt, od, col.data());
                gemm<T>(false, false, cg_out, ovol, cg_in * kvol, T{1}, w.v.data() + g * cg_out * cg_in * kvol,
                        col.data(), T{0}, y.data() + (bi * cout + g * cg_out) * ovol);
                ctx.cols.push_back(std::move(col));
            }
        if (bias)
            for (int64_t bi = 0; bi < n; ++bi)
                for (int64_t c = 0; c < cout; ++c) {
                    T* row = y.data() + (bi * cout + c) * ovol;
                    for (int64_t i = 0; i < ovol; ++i) row[i] += b.v[c];
                }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy, const Ctx& ctx) {
        const int64_t n = ctx.in_shape[0], d = ctx.in_shape[2], h = ctx.in_shape[3], wdt = ctx.in_shape[4];
        const auto od = out_dims({d, h, wdt});
        const int64_t ovol = od[0] * od[1] * od[2];
        const int64_t cg_in = cin / groups, cg_out = cout / groups;
        const int64_t kvol = kernel[0] * kernel[1] * kernel[2];

        Tensor<T> dx(ctx.in_shape, T{});
        Tensor<T> dcol({cg_in * kvol, ovol}, T{});
        for (int64_t bi = 0; bi < n; ++bi)
            for (int64_t g = 0; g < groups; ++g) {
                const Tensor<T>& col = ctx.cols[static_cast<size_t>(bi * groups + g)];
                const T* dyg = dy.data() + (bi * cout + g * cg_out) * ovol;
                gemm<T>(false, true, cg_out, cg_in * kvol, ovol, T{1}, dyg, col.data(), T{1},
                        w.g.data() + g * cg_out * cg_in * kvol);
                gemm<T>(true, false, cg_in * kvol, ovol, cg_out, T{1}, w.v.data() + g * cg_out * cg_in * kvol, dyg,
                        T{0}, dcol.data());
                col2im(dcol.data(), d, h, wdt, od, dx.data() + (bi * cin + g * cg_in) * d * h * wdt);
            }
        if (bias)
            for (int64_t bi = 0; bi < n; ++bi)
                for (int64_t c = 0; c < cout; ++c) {
                    const T* row = dy.data() + (bi * cout + c) * ovol;
                    for (int64_t i = 0; i < ovol; ++i) b.g[c] += row[i];
                }
        return dx;
    }

    void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) {
        collect_param(out, prefix + ".w", w);
        if (bias) collect_param(out, prefix + ".b", b);
    }

private:
    // src: one group's input block [cg_in, d, h, w] -> col [cg_in*kvol, ovol]
    void im2col(const T* src, int64_t d, int64_t h, int64_t wdt, const std::array<int64_t, 3>& od, T* col) const {
        const int64_t cg_in = cin / groups;
        int64_t r = 0;
        for (int64_t ci = 0; ci < cg_in; ++ci)
            for (int64_t kd = 0; kd < kernel[0]; ++kd)
                for (int64_t kh = 0; kh < kernel[1]; ++kh)
                    for (int64_t kw = 0; kw < kernel[2]; ++kw, ++r) {
                        T* out_row = col + r * od[0] * od[1] * od[2];
                        int64_t oi = 0;
                        for (int64_t z = 0; z < od[0]; ++z) {
                            const int64_t iz = z * stride[0] - pad[0] + kd;
                            for (int64_t y = 0; y < od[1]; ++y) {
                                const int64_t iy = y * stride[1] - pad[1] + kh;
                                for (int64_t x = 0; x < od[2]; ++x, ++oi) {
                                    const int64_t ix = x * stride[2] - pad[2] + kw;
                                    out_row[oi] = (iz >= 0 && iz < d && iy >= 0 && iy < h && ix >= 0 && ix < wdt)
                                                      ? src[(ci * d + iz) * h * wdt + iy * wdt + ix]
                                                      : T{};
                                }
                            }
                        }
                    }
    }

    void col2im(const T* col, int64_t d, int64_t h, int64_t wdt, const std::array<int64_t, 3>& od, T* dst) const {
        const int64_t cg_in = cin / groups;
        int64_t r = 0;
        for (int64_t ci = 0; ci < cg_in; ++ci)
            for (int64_t kd = 0; kd < kernel[0]; ++kd)
                for (int64_t kh = 0; kh < kernel[1]; ++kh)
                    for (int64_t kw = 0; kw < kernel[2]; ++kw, ++r) {
                        const T* in_row = col + r * od[0] * od[1] * od[2];
                        int64_t oi = 0;
                        for (int64_t z = 0; z < od[0]; ++z) {
                            const int64_t iz = z * stride[0] - pad[0] + kd;
                            for (int64_t y = 0; y < od[1]; ++y) {
                                const int64_t iy = y * stride[1] - pad[1] + kh;
                                for (int64_t x = 0; x < od[2]; ++x, ++oi) {
                                    const int64_t ix = x * stride[2] - pad[2] + kw;
                                    if (iz >= 0 && iz < d && iy >= 0 && iy < h && ix >= 0 && ix < wdt)
                                        dst[(ci * d + iz) * h * wdt + iy * wdt + ix] += in_row[oi];
                                }
                            }
                        }
                    }
    }
};

// -------------------------------------------------------------- layer norm

// Normalizes over the last dimension.
template <typename T>
struct LayerNorm {
    Param<T> gamma, beta;
    double eps = 1e-5;

    struct Ctx {
        Tensor<T> xhat;
        std::vector<T> inv_std;
    };

    void init(int64_t dim) {
        gamma.init({dim});
        beta.init({dim});
        for (int64_t i = 0; i < dim; ++i) gamma.v[i] = T{1};
    }

    Tensor<T> forward(const Tensor<T>& x, Ctx& ctx) const {
        const int64_t d = gamma.v.dim(0);
        if (x.dim(x.rank() - 1) != d)
            throw DataError("layernorm: width " + std::to_string(x.dim(x.rank() - 1)) + " != " + std::to_string(d));
        const int64_t rows = x.numel() / d;
        Tensor<T> y(x.shape(), T{});
        ctx.xhat = Tensor<T>(x.shape(), T{});
        ctx.inv_std.assign(static_cast<size_t>(rows), T{});
        for (int64_t r = 0; r < rows; ++r) {
            const T* xr = x.data() + r * d;
            double mu = 0.0;
            for (int64_t i = 0; i < d; ++i) mu += xr[i];
            mu /= static_cast<double>(d);
            double var = 0.0;
            for (int64_t i = 0; i < d; ++i) {
                const double c = static_cast<double>(xr[i]) - mu;
                var += c * c;
            }
            var /= static_cast<double>(d);
            const T inv = static_cast<T>(1.0 / std::sqrt(var + eps));
            ctx.inv_std[static_cast<size_t>(r)] = inv;
            for (int64_t i = 0; i < d; ++i) {
                const T xh = static_cast<T>((static_cast<double>(xr[i]) - mu) * inv);
                ctx.xhat[r * d + i] = xh;
                y[r * d + i] = gamma.v[i] * xh + beta.v[i];
            }
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy, const Ctx& ctx) {
        const int64_t d = gamma.v.dim(0);
        const int64_t rows = ctx.xhat.numel() / d;
        Tensor<T> dx(ctx.xhat.shape(), T{});
        for (int64_t r = 0; r < rows; ++r) {
            const T* dyr = dy.data() + r * d;
            const T* xh = ctx.xhat.data() + r * d;
            T sum_dxh = T{}, sum_dxh_xh = T{};
            for (int64_t i = 0; i < d; ++i) {
                const T dxh = dyr[i] * gamma.v[i];
                sum_dxh += dxh;
                sum_dxh_xh += dxh * xh[i];
                gamma.g[i] += dyr[i] * xh[i];
                beta.g[i] += dyr[i];
            }
            const T inv = ctx.inv_std[static_cast<size_t>(r)];
            for (int64_t i = 0; i < d; ++i) {
                const T dxh = dyr[i] * gamma.v[i];
                dx[r * d + i] = inv * (dxh - sum_dxh / static_cast<T>(d) - xh[i] * sum_dxh_xh / static_cast<T>(d));
            }
        }
        return dx;
    }

    void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) {
        collect_param(out, prefix + ".gamma", gamma);
        collect_param(out, prefix + ".beta", beta);
    }
};

// ------------------------------------------------------------------- relu

template <typename T>
struct ReLU {
    struct Ctx {
        Tensor<T> x;
    };
    Tensor<T> forward(const Tensor<T>& x, Ctx& ctx) const {
        Tensor<T> y(x.shape(), T{});
        for (int64_t i = 0; i < x.numel(); ++i) y[i] = x[i] > T{} ? x[i] : T{};
        ctx.x = x;
        return y;
    }
    Tensor<T> backward(const Tensor<T>& dy, const Ctx& ctx) const {
        Tensor<T> dx(ctx.x.shape(), T{});
        for (int64_t i = 0; i < dx.numel(); ++i) dx[i] = ctx.x[i] > T{} ? dy[i] : T{};
        return dx;
    }
};

// ----------------------------------------------------------self-attention

// Multi-head self-attention over a token sequence [n, d_model].
template <typename T>
struct SelfAttention {
    int64_t heads = 1, d_model = 0, d_head = 0;
    Linear<T> wq, wk, wv, wo;

    struct Ctx {
        typename Linear<T>::Ctx qc, kc, vc, oc;
        Tensor<T> q, k, v;      // [n, heads*d_head]
        Tensor<T> probs;        // [heads, n, n]
        Tensor<T> merged;       // [n, heads*d_head]
    };

    void init(int64_t heads_, int64_t d_model_, Rng& rng) {
        if (d_model_ % heads_ != 0)
            throw ConfigError("attention: " + std::to_string(d_model_) + " channels not divisible by " +
                              std::to_string(heads_) + " heads");
        heads = heads_;
        d_model = d_model_;
        d_head = d_model_ / heads_;
        wq.init(d_model, d_model, rng);
        wk.init(d_model, d_model, rng);
        wv.init(d_model, d_model, rng);
        wo.init(d_model, d_model, rng);
    }

    Tensor<T> forward(const Tensor<T>& x, Ctx& ctx) const {
        if (x.rank() != 2 || x.dim(1) != d_model)
            throw DataError("attention: expected tokens x " + std::to_string(d_model) + ", got " + x.shape_string());
        const int64_t n = x.dim(0);
        ctx.q = wq.forward(x, ctx.qc);
        ctx.k = wk.forward(x, ctx.kc);
        ctx.v = wv.forward(x, ctx.vc);
        ctx.probs = Tensor<T>({heads, n, n}, T{});
        ctx.merged = Tensor<T>({n, d_model}, T{});
        const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(d_head)));

        std::vector<T> scores(static_cast<size_t>(n));
        for (int64_t hd = 0; hd < heads; ++hd) {
            const int64_t off = hd * d_head;
            for (int64_t i = 0; i < n; ++i) {
                T mx = std::numeric_limits<T>::lowest();
                for (int64_t j = 0; j < n; ++j) {
                    T s = T{};
                    for (int64_t d = 0; d < d_head; ++d) s += ctx.q[i * d_model + off + d] * ctx.k[j * d_model + off + d];
                    s *= scale;
                    scores[static_cast<size_t>(j)] = s;
                    if (s > mx) mx = s;
                }
                T denom = T{};
                for (int64_t j = 0; j < n; ++j) {
                    const T e = std::exp(scores[static_cast<size_t>(j)] - mx);
                    ctx.probs.at(hd, i, j) = e;
                    denom += e;
                }
                for (int64_t j = 0; j < n; ++j) ctx.probs.at(hd, i, j) /= denom;
                for (int64_t d = 0; d < d_head; ++d) {
                    T acc = T{};
                    for (int64_t j = 0; j < n; ++j) acc += ctx.probs.at(hd, i, j) * ctx.v[j * d_model + off + d];
                    ctx.merged[i * d_model + off + d] = acc;
                }
            }
        }
        return wo.forward(ctx.merged, ctx.oc);
    }

    Tensor<T> backward(const Tensor<T>& dy, const Ctx& ctx) {
        const int64_t n = ctx.merged.dim(0);
        const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(d_head)));
        Tensor<T> dmerged = wo.backward(dy, ctx.oc);
        Tensor<T> dq(ctx.q.shape(), T{}), dk(ctx.k.shape(), T{}), dv(ctx.v.shape(), T{});

        std::vector<T> dp(static_cast<size_t>(n)), ds(static_cast<size_t>(n));
        for (int64_t hd = 0; hd < heads; ++hd) {
            const int64_t off = hd * d_head;
            for (int64_t i = 0; i < n; ++i) {
                // dP row, then softmax backward to dS row
                T dot = T{};
                for (int64_t j = 0; j < n; ++j) {
                    T acc = T{};
                    for (int64_t d = 0; d < d_head; ++d)
                        acc += dmerged[i * d_model + off + d] * ctx.v[j * d_model + off + d];
                    dp[static_cast<size_t>(j)] = acc;
                    dot += acc * ctx.probs.at(hd, i, j);
                }
                for (int64_t j = 0; j < n; ++j)
                    ds[static_cast<size_t>(j)] = ctx.probs.at(hd, i, j) * (dp[static_cast<size_t>(j)] - dot);

                for (int64_t j = 0; j < n; ++j) {
                    const T s = ds[static_cast<size_t>(j)] * scale;
                    const T p = ctx.probs.at(hd, i, j);
                    for (int64_t d = 0; d < d_head; ++d) {
                        dq[i * d_model + off + d] += s * ctx.k[j * d_model + off + d];
                        dk[j * d_model + off + d] += s * ctx.q[i * d_model + off + d];
                        dv[j * d_model + off + d] += p * dmerged[i * d_model + off + d];
                    }
                }
            }
        }
        Tensor<T> dx = wq.backward(dq, ctx.qc);
        dx += wk.backward(dk, ctx.kc);
        dx += wv.backward(dv, ctx.vc);
        return dx;
    }

    void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) {
        wq.collect(prefix + ".wq", out);
        wk.collect(prefix + ".wk", out);
        wv.collect(prefix + ".wv", out);
        wo.collect(prefix + ".wo", out);
    }
};

// ------------------------------------------------------------- primitives

// Fixed 2-D sinusoidal position code laid out as [c, h, w]; quarter blocks
// carry sin/cos over x then sin/cos over y.
template <typename T>
Tensor<T> positional_encoding_2d(int64_t c, int64_t h, int64_t w) {
    if (c % 4 != 0) throw ConfigError("positional encoding: channels must be divisible by 4");
    Tensor<T> pe({c, h, w}, T{});
    const int64_t q = c / 4;
    for (int64_t i = 0; i < q; ++i) {
        const double omega = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(q));
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x) {
                pe.at(i, y, x) = static_cast<T>(std::sin(static_cast<double>(x) * omega));
                pe.at(q + i, y, x) = static_cast<T>(std::cos(static_cast<double>(x) * omega));
                pe.at(2 * q + i, y, x) = static_cast<T>(std::sin(static_cast<double>(y) * omega));
                pe.at(3 * q + i, y, x) = static_cast<T>(std::cos(static_cast<double>(y) * omega));
            }
    }
    return pe;
}

// global average pool [B, C, D, H, W] -> [B, C]
template <typename T>
Tensor<T> gap_forward(const Tensor<T>& x) {
    const int64_t b = x.dim(0), c = x.dim(1), vol = x.numel() / (b * c);
    Tensor<T> y({b, c}, T{});
    for (int64_t i = 0; i < b * c; ++i) {
        T acc = T{};
        const T* p = x.data() + i * vol;
        for (int64_t j = 0; j < vol; ++j) acc += p[j];
        y[i] = acc / static_cast<T>(vol);
    }
    return y;
}

template <typename T>
Tensor<T> gap_backward(const Tensor<T>& dy, const std::vector<int64_t>& in_shape) {
    Tensor<T> dx(in_shape, T{});
    const int64_t b = in_shape[0], c = in_shape[1];
    const int64_t vol = dx.numel() / (b * c);
    for (int64_t i = 0; i < b * c; ++i) {
        const T g = dy[i] / static_cast<T>(vol);
        T* p = dx.data() + i * vol;
        for (int64_t j = 0; j < vol; ++j) p[j] = g;
    }
    return dx;
}

// row-wise l2 normalization with an epsilon floor on the norm
template <typename T>
Tensor<T> l2_normalize(const Tensor<T>& v, std::vector<T>* norms = nullptr, double eps = 1e-12) {
    const int64_t d = v.dim(v.rank() - 1), rows = v.numel() / d;
    Tensor<T> u(v.shape(), T{});
    if (norms) norms->assign(static_cast<size_t>(rows), T{});
    for (int64_t r = 0; r < rows; ++r) {
        double s = 0.0;
        for (int64_t i = 0; i < d; ++i) s += static_cast<double>(v[r * d + i]) * static_cast<double>(v[r * d + i]);
        const T nrm = static_cast<T>(std::max(std::sqrt(s), eps));
        if (norms) (*norms)[static_cast<size_t>(r)] = nrm;
        for (int64_t i = 0; i < d; ++i) u[r * d + i] = v[r * d + i] / nrm;
    }
    return u;
}

// du -> dv given u = v / max(||v||, eps)
template <typename T>
Tensor<T> l2_normalize_backward(const Tensor<T>& du, const Tensor<T>& u, const std::vector<T>& norms) {
    const int64_t d = u.dim(u.rank() - 1), rows = u.numel() / d;
    Tensor<T> dv(u.shape(), T{});
    for (int64_t r = 0; r < rows; ++r) {
        T dot = T{};
        for (int64_t i = 0; i < d; ++i) dot += du[r * d + i] * u[r * d + i];
        const T inv = T{1} / norms[static_cast<size_t>(r)];
        for (int64_t i = 0; i < d; ++i) dv[r * d + i] = (du[r * d + i] - u[r * d + i] * dot) * inv;
    }
    return dv;
}

template <typename T>
T sigmoid(T s) {
    if (s >= T{}) return T{1} / (T{1} + std::exp(-s));
    const T e = std::exp(s);
    return e / (T{1} + e);
}

// Stable mean binary cross-entropy on logits; optional per-logit gradient of
// the MEAN (i.e. already divided by the batch size).
template <typename T>
double bce_with_logits(const T* logits, const int* labels, int64_t n, T* grad = nullptr) {
    if (n < 1) throw DataError("bce: empty batch");
    double total = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const double s = logits[i];
        const double y = labels[i];
        total += std::max(s, 0.0) - s * y + std::log1p(std::exp(-std::abs(s)));
        if (grad) grad[i] = static_cast<T>((static_cast<double>(sigmoid(s)) - y) / static_cast<double>(n));
    }
    return total / static_cast<double>(n);
}

}  // namespace xavdt::nn
