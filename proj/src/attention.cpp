#include "xavdt/attention.hpp"

#include <cmath>

#include "xavdt/errors.hpp"
#include "xavdt/rng.hpp"

namespace xavdt {

TensorD matmul(const TensorD& x, const TensorD& w) {
    if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(0))
        throw DataError("matmul: incompatible shapes " + x.shape_string() + " x " + w.shape_string());
    const int64_t m = x.dim(0), a = x.dim(1), b = w.dim(1);
    TensorD out({m, b}, 0.0);
    for (int64_t i = 0; i < m; ++i) {
        const double* xi = x.data() + i * a;
        double* oi = out.data() + i * b;
        for (int64_t k = 0; k < a; ++k) {
            const double xv = xi[k];
            if (xv == 0.0) continue;
            const double* wk = w.data() + k * b;
            for (int64_t j = 0; j < b; ++j) oi[j] += xv * wk[j];
        }
    }
    return out;
}

TensorD attention(const TensorD& q, const TensorD& k, const TensorD& v, TensorD* probs) {
    if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2)
        throw DataError("attention: expected rank-2 q/k/v");
    if (q.dim(1) != k.dim(1))
        throw DataError("attention: query dim " + q.shape_string() + " vs key dim " + k.shape_string());
    if (k.dim(0) != v.dim(0))
        throw DataError("attention: key tokens " + k.shape_string() + " vs value tokens " + v.shape_string());
    const int64_t m = q.dim(0), n = k.dim(0), d = q.dim(1), dv = v.dim(1);
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));

    TensorD p({m, n}, 0.0);
    for (int64_t i = 0; i < m; ++i) {
        double* row = p.data() + i * n;
        const double* qi = q.data() + i * d;
        double mx = -std::numeric_limits<double>::infinity();
        for (int64_t j = 0; j < n; ++j) {
            const double* kj = k.data() + j * d;
            double s = 0.0;
            for (int64_t c = 0; c < d; ++c) s += qi[c] * kj[c];
            row[j] = s * scale;
            mx = std::max(mx, row[j]);
        }
        double z = 0.0;
        for (int64_t j = 0; j < n; ++j) {
            row[j] = std::exp(row[j] - mx);
            z += row[j];
        }
        for (int64_t j = 0; j < n; ++j) row[j] /= z;
    }

    TensorD out = matmul(p, v);
    (void)dv;
    if (probs) *probs = std::move(p);
    return out;
}

TensorD MultiHeadAttention::forward(const TensorD& x, const TensorD& ctx, TensorD* per_head) const {
    if (x.rank() != 2 || x.dim(1) != d_model)
        throw DataError("attention block: query tokens " + x.shape_string() + " need width " + std::to_string(d_model));
    if (ctx.rank() != 2 || ctx.dim(1) != d_cond)
        throw DataError("attention block: context tokens " + ctx.shape_string() + " need width " + std::to_string(d_cond));
    const int64_t m = x.dim(0);

    const TensorD q = matmul(x, wq);    // m x heads*dh
    const TensorD k = matmul(ctx, wk);  // n x heads*dh
    const TensorD v = matmul(ctx, wv);
    const int64_t n = ctx.dim(0);

    TensorD heads_out({heads, m, d_head}, 0.0);
    for (int64_t h = 0; h < heads; ++h) {
        TensorD qh({m, d_head}, 0.0), kh({n, d_head}, 0.0), vh({n, d_head}, 0.0);
        for (int64_t i = 0; i < m; ++i)
            for (int64_t c = 0; c < d_head; ++c) qh[i * d_head + c] = q[i * heads * d_head + h * d_head + c];
        for (int64_t j = 0; j < n; ++j)
            for (int64_t c = 0; c < d_head; ++c) {
                kh[j * d_head + c] = k[j * heads * d_head + h * d_head + c];
                vh[j * d_head + c] = v[j * heads * d_head + h * d_head + c];
            }
        const TensorD oh = attention(qh, kh, vh);
        for (int64_t i = 0; i < m; ++i)
            for (int64_t c = 0; c < d_head; ++c) heads_out[(h * m + i) * d_head + c] = oh[i * d_head + c];
    }
    if (per_head) *per_head = heads_out;

    // Interleave heads back to [m x heads*dh] and project.
    TensorD merged({m, heads * d_head}, 0.0);
    for (int64_t h = 0; h < heads; ++h)
        for (int64_t i = 0; i < m; ++i)
            for (int64_t c = 0; c < d_head; ++c)
                merged[i * heads * d_head + h * d_head + c] = heads_out[(h * m + i) * d_head + c];
    return matmul(merged, wo);
}

MultiHeadAttention make_attention(int64_t heads, int64_t d_model, int64_t d_cond, uint64_t seed) {
    if (d_model % heads != 0)
        throw ConfigError("attention block: d_model " + std::to_string(d_model) + " not divisible by heads " +
                          std::to_string(heads));
    MultiHeadAttention a;
    a.heads = heads;
    a.d_model = d_model;
    a.d_cond = d_cond;
    a.d_head = d_model / heads;
    Rng rng(seed);
    auto init = [&](int64_t rows, int64_t cols) {
        TensorD w({rows, cols}, 0.0);
        const double s = 1.0 / std::sqrt(static_cast<double>(rows));
        rng.fill_normal(w, 0.0, s);
        return w;
    };
    a.wq = init(d_model, d_model);
    a.wk = init(d_cond, d_model);
    a.wv = init(d_cond, d_model);
    a.wo = init(d_model, d_model);
    return a;
}

}  // namespace xavdt
