#pragma once

#include <cstdint>
#include <string>

#include "xavdt/tensor.hpp"

namespace xavdt {

// Scaled dot-product attention. q: [m x d], k: [n x d], v: [n x dv].
// Returns [m x dv]; when probs is non-null it receives the [m x n] softmax
// matrix (each row a probability vector).
TensorD attention(const TensorD& q, const TensorD& k, const TensorD& v, TensorD* probs = nullptr);

// Raw per-head attention output captured at a named backend site, kept
// alongside the site's output projection so the head dimension can be
// collapsed downstream.
struct HeadCapture {
    std::string site;
    int64_t timestep = -1;
    int64_t frames = 0;           // per-frame captures stacked along dim 0
    int64_t heads = 0;
    int64_t grid_h = 0, grid_w = 0;  // token grid of the query positions
    TensorD per_head;             // frames x heads x tokens x d_head
    TensorD out_proj;             // (heads*d_head) x channels
    bool valid() const { return heads > 0; }
};

// Frozen multi-head attention block parameters (double precision, forward
// only — trainable attention lives in the detector's own layer stack).
struct MultiHeadAttention {
    int64_t heads = 1;
    int64_t d_model = 0;  // query/channel dim
    int64_t d_cond = 0;   // key/value source dim
    int64_t d_head = 0;
    TensorD wq;  // d_model x heads*d_head
    TensorD wk;  // d_cond  x heads*d_head
    TensorD wv;  // d_cond  x heads*d_head
    TensorD wo;  // heads*d_head x d_model

    // x: [m x d_model] query tokens, ctx: [n x d_cond] key/value tokens.
    // Returns [m x d_model]. When capture is non-null, fills per_head with
    // [heads x m x d_head] (caller stacks frames) and out_proj with wo.
    TensorD forward(const TensorD& x, const TensorD& ctx, TensorD* per_head = nullptr) const;
};

MultiHeadAttention make_attention(int64_t heads, int64_t d_model, int64_t d_cond, uint64_t seed);

// out = x . w  for x: [m x a], w: [a x b].
TensorD matmul(const TensorD& x, const TensorD& w);

}  // namespace xavdt
