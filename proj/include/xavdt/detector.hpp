#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "xavdt/nn.hpp"

namespace xavdt {

// Architecture and optimizer settings. Defaults are the full-scale values;
// desk_scale() shrinks everything to sizes a CPU test run can train.
struct DetectorConfig {
    // stream inputs
    int64_t phi_channels = 12;
    int64_t psi_channels = 320;
    // per-stream encoders
    int64_t encoder_channels = 1024;  // each stream's output width (concat doubles it)
    int64_t encoder_layers = 2;
    int64_t encoder_groups = 32;
    int64_t v_spatial_stride = 8;  // collapses the pixel grid onto the latent grid
    // fusion decoder
    int64_t fused_channels = 1024;  // width after the 1x1 projection
    int64_t attn_heads = 8;
    int64_t conv_stack = 3;    // grouped residual conv layers after attention
    int64_t block_groups = 32; // cardinality inside those layers
    int64_t embed_dim = 128;   // metric-learning head width
    // ablation switches (flags, not forks)
    bool use_phi = true;
    bool use_psi = true;
    bool use_residual = true;  // drop the last 3 composite channels when false
    std::string mask_mode = "fixed";  // "joint" adds a learned 3-way mask mixture
    // losses
    double margin = 0.3;
    double lambda_tri = 0.3;
    std::string mining = "random";  // or "semi-hard"
    // optimizer
    double lr = 1e-4;
    double weight_decay = 0.05;
    int64_t batch = 8;
    int64_t epochs = 2;
    uint64_t seed = 0xd7;

    void validate() const;
    int64_t phi_in() const { return use_residual ? phi_channels : phi_channels - 3; }
    int64_t concat_channels() const {
        return (use_phi ? encoder_channels : 0) + (use_psi ? encoder_channels : 0);
    }

    std::string serialize() const;
    static DetectorConfig parse(const std::string& text);
    static DetectorConfig desk_scale();
};

// Per-stage tensor geometry computed from config alone — used to check the
// full-scale wiring without ever allocating it.
struct StageShapes {
    std::array<int64_t, 4> v_out{};  // C, N, H, W after the composite encoder
    std::array<int64_t, 4> a_out{};  // after the attention-feature encoder
    int64_t concat_channels = 0;
    std::array<int64_t, 4> fused{};  // after the 1x1 projection
    int64_t tokens = 0;              // spatial positions seen by self-attention
    int64_t g_dim = 0;
};
StageShapes detector_shapes(const DetectorConfig& cfg, int64_t frames, std::array<int64_t, 2> phi_hw,
                            std::array<int64_t, 2> psi_hw);

struct DetectorOutput {
    double s = 0.0;              // raw logit
    std::vector<double> u;       // unit-norm embedding
    std::vector<double> g;       // fused feature
};

struct TripletBatch {
    TensorD anchors, positives, negatives;  // rows are embeddings
    std::vector<int> anchor_labels, positive_labels, negative_labels;
    int64_t size() const { return anchors.empty() ? 0 : anchors.dim(0); }
};

double bce_loss(const std::vector<double>& logits, const std::vector<int>& labels);
double triplet_loss(const TripletBatch& batch, double m);
double total_loss(double bce, double tri, double lambda);

// anchor/positive/negative row indices into a batch embedding matrix; empty
// when the batch holds a single class. Deterministic for a given generator
// state. With one sample per class the positive degenerates to the anchor.
template <typename T>
std::vector<std::array<int64_t, 3>> mine_triplet_indices(const Tensor<T>& u, const std::vector<int>& labels,
                                                         const std::string& policy, Rng& rng);

TripletBatch mine_triplets(const TensorD& u, const std::vector<int>& labels, const std::string& policy,
                           uint64_t seed);

// frames-first [N, C, ...] -> channel-first volume [C, N, ...]
template <typename T>
Tensor<T> to_volume(const Tensor<T>& x) {
    if (x.rank() < 2) throw DataError("to_volume: rank-" + std::to_string(x.rank()) + " input");
    const int64_t n = x.dim(0), c = x.dim(1), inner = x.numel() / (n * c);
    std::vector<int64_t> shape = x.shape();
    std::swap(shape[0], shape[1]);
    Tensor<T> out(shape, T{});
    for (int64_t f = 0; f < n; ++f)
        for (int64_t ch = 0; ch < c; ++ch)
            std::copy(x.data() + (f * c + ch) * inner, x.data() + (f * c + ch + 1) * inner,
                      out.data() + (ch * n + f) * inner);
    return out;
}

// ------------------------------------------------------------------ model

template <typename T>
struct StreamEncoder {
    std::vector<nn::Conv3d<T>> convs;
    nn::ReLU<T> relu;

    struct Ctx {
        std::vector<typename nn::Conv3d<T>::Ctx> conv;
        std::vector<typename nn::ReLU<T>::Ctx> act;
    };

    void init(int64_t in, const DetectorConfig& cfg, int64_t spatial_stride, Rng& rng) {
        convs.resize(static_cast<size_t>(cfg.encoder_layers));
        for (int64_t l = 0; l < cfg.encoder_layers; ++l) {
            const bool first = l == 0;
            convs[static_cast<size_t>(l)].init(first ? in : cfg.encoder_channels, cfg.encoder_channels, {3, 3, 3},
                                               {1, first ? spatial_stride : 1, first ? spatial_stride : 1},
                                               {1, 1, 1}, first ? 1 : cfg.encoder_groups, rng);
        }
    }

    Tensor<T> forward(const Tensor<T>& x, Ctx& ctx) const {
        ctx.conv.resize(convs.size());
        ctx.act.resize(convs.size());
        Tensor<T> h = x;
        for (size_t l = 0; l < convs.size(); ++l) {
            h = convs[l].forward(h, ctx.conv[l]);
            h = relu.forward(h, ctx.act[l]);
        }
        return h;
    }

    Tensor<T> backward(const Tensor<T>& dy, const Ctx& ctx) {
        Tensor<T> d = dy;
        for (size_t l = convs.size(); l-- > 0;) {
            d = relu.backward(d, ctx.act[l]);
            d = convs[l].backward(d, ctx.conv[l]);
        }
        return d;
    }

    void collect(const std::string& prefix, std::vector<nn::ParamRef<T>>& out) {
        for (size_t l = 0; l < convs.size(); ++l) convs[l].collect(prefix + "." + std::to_string(l), out);
    }
};

// grouped residual bottleneck: 1x1 reduce -> 3x3x3 grouped -> 1x1 expand
template <typename T>
struct GroupedResBlock {
    nn::Conv3d<T> reduce, conv, expand;
    nn::ReLU<T> relu;

    struct Ctx {
        typename nn::Conv3d<T>::Ctx c1, c2, c3;
        typename nn::ReLU<T>::Ctx a1, a2, a3;
    };

    void init(int64_t channels, int64_t groups, Rng& rng) {
        const int64_t inner = channels / 2;
        reduce.init(channels, inner, {1, 1, 1}, {1, 1, 1}, {0, 0, 0}, 1, rng);
        conv.init(inner, inner, {3, 3, 3}, {1, 1, 1}, {1, 1, 1}, groups, rng);
        expand.init(inner, channels, {1, 1, 1}, {1, 1, 1}, {0, 0, 0}, 1, rng);
    }

    Tensor<T> forward(const Tensor<T>& x, Ctx& ctx) const {
        Tensor<T> h = relu.forward(reduce.forward(x, ctx.c1), ctx.a1);
        h = relu.forward(conv.forward(h, ctx.c2), ctx.a2);
        h = expand.forward(h, ctx.c3);
        h += x;
        return relu.forward(h, ctx.a3);
    }

    Tensor<T> backward(const Tensor<T>& dy, const Ctx& ctx) {
        Tensor<T> dsum = relu.backward(dy, ctx.a3);
        Tensor<T> d = expand.backward(dsum, ctx.c3);
        d = relu.backward(d, ctx.a2);
        d = conv.backward(d, ctx.c2);
        d = relu.backward(d, ctx.a1);
        d = reduce.backward(d, ctx.c1);
        d += dsum;  // residual path
        return d;
    }

    void collect(const std::string& prefix, std::vector<nn::ParamRef<T>>& out) {
        reduce.collect(prefix + ".reduce", out);
        conv.collect(prefix + ".conv", out);
        expand.collect(prefix + ".expand", out);
    }
};

// Two-stream fused detector. Batched layout: composite [B, Cphi, N, H, W];
// attention feature [B, Cpsi, N, h, w] (fixed masks) or [B, 3, Cpsi, N, h, w]
// (joint mode, mixed by a learned 3-way weight initialized uniform).
template <typename T>
class DetectorModel {
public:
    struct Output {
        Tensor<T> logits;  // [B]
        Tensor<T> u;       // [B, embed]
        Tensor<T> g;       // [B, fused]
    };

    struct Tape {
        typename StreamEncoder<T>::Ctx enc_v, enc_a;
        typename nn::Conv3d<T>::Ctx proj;
        std::vector<typename nn::LayerNorm<T>::Ctx> ln1, ln2;
        std::vector<typename nn::SelfAttention<T>::Ctx> attn;
        std::vector<typename GroupedResBlock<T>::Ctx> blocks;
        typename nn::Linear<T>::Ctx head_s, head_u;
        Tensor<T> psi_joint;       // retained input for the mixture gradient
        Tensor<T> mixed;           // mixed psi volume
        std::vector<int64_t> cat_shape, vol_shape;
        Tensor<T> u_raw;           // pre-normalization embedding
        Tensor<T> u_norm;
        std::vector<T> u_norms;
        int64_t batch = 0, frames = 0, grid_h = 0, grid_w = 0;

        // Optional probe: set `capture` to "fused" or "block.<i>" before the
        // forward pass to record that volume and, on backward, its gradient.
        std::string capture;
        Tensor<T> captured_act, captured_grad;  // [B, C, N, h, w]
    };

    DetectorModel(const DetectorConfig& cfg, std::array<int64_t, 2> phi_hw, std::array<int64_t, 2> psi_hw)
        : cfg_(cfg) {
        cfg.validate();
        const StageShapes ss = detector_shapes(cfg, 1, phi_hw, psi_hw);
        grid_h_ = ss.fused[2];
        grid_w_ = ss.fused[3];

        Rng rng(derive_seed(cfg.seed, "detector.init"));
        if (cfg.use_phi) enc_v_.init(cfg.phi_in(), cfg, cfg.v_spatial_stride, rng);
        if (cfg.use_psi) enc_a_.init(cfg.psi_channels, cfg, 1, rng);
        proj_.init(cfg.concat_channels(), cfg.fused_channels, {1, 1, 1}, {1, 1, 1}, {0, 0, 0}, 1, rng);
        ln1_.init(cfg.fused_channels);
        ln2_.init(cfg.fused_channels);
        attn_.init(cfg.attn_heads, cfg.fused_channels, rng);
        blocks_.resize(static_cast<size_t>(cfg.conv_stack));
        for (auto& b : blocks_) b.init(cfg.fused_channels, cfg.block_groups, rng);
        head_s_.init(cfg.fused_channels, 1, rng);
        head_u_.init(cfg.fused_channels, cfg.embed_dim, rng);
        mask_mix_.init({3});
        for (int64_t k = 0; k < 3; ++k) mask_mix_.v[k] = static_cast<T>(1.0 / 3.0);
        pe_ = nn::positional_encoding_2d<T>(cfg.fused_channels, grid_h_, grid_w_);
    }

    const DetectorConfig& config() const { return cfg_; }
    int64_t grid_h() const { return grid_h_; }
    int64_t grid_w() const { return grid_w_; }

    Output forward(const Tensor<T>& phi, const Tensor<T>& psi, Tape& tape) {
        const int64_t b = cfg_.use_phi ? phi.dim(0) : psi.dim(0);
        Tensor<T> cat = encode_concat(phi, psi, tape);
        tape.cat_shape = cat.shape();
        tape.batch = b;
        tape.frames = cat.dim(2);

        Tensor<T> p = proj_.forward(cat, tape.proj);
        add_positional(p);
        attention_rounds(p, tape);

        tape.vol_shape = p.shape();
        tape.blocks.resize(blocks_.size());
        if (tape.capture == "fused") tape.captured_act = p;
        for (size_t i = 0; i < blocks_.size(); ++i) {
            p = blocks_[i].forward(p, tape.blocks[i]);
            if (tape.capture == "block." + std::to_string(i)) tape.captured_act = p;
        }

        Output out;
        out.g = nn::gap_forward(p);
        Tensor<T> s = head_s_.forward(out.g, tape.head_s);  // [B,1]
        out.logits = s.reshaped({b});
        tape.u_raw = head_u_.forward(out.g, tape.head_u);
        out.u = nn::l2_normalize(tape.u_raw, &tape.u_norms);
        tape.u_norm = out.u;
        return out;
    }

    // Gradients w.r.t. the three outputs; du is w.r.t. the NORMALIZED u.
    void backward(const Tensor<T>& dlogits, const Tensor<T>& du, const Tensor<T>& dg_extra, Tape& tape) {
        Tensor<T> dg = head_s_.backward(dlogits.reshaped({tape.batch, int64_t{1}}), tape.head_s);
        if (!du.empty()) {
            Tensor<T> du_raw = nn::l2_normalize_backward(du, tape.u_norm, tape.u_norms);
            dg += head_u_.backward(du_raw, tape.head_u);
        }
        if (!dg_extra.empty()) dg += dg_extra;

        Tensor<T> d = nn::gap_backward(dg, tape.vol_shape);
        for (size_t i = blocks_.size(); i-- > 0;) {
            if (tape.capture == "block." + std::to_string(i)) tape.captured_grad = d;
            d = blocks_[i].backward(d, tape.blocks[i]);
        }
        if (tape.capture == "fused") tape.captured_grad = d;
        attention_rounds_backward(d, tape);
        Tensor<T> dcat = proj_.backward(d, tape.proj);
        decode_concat_backward(dcat, tape);
    }

    // spec-facing single-sample encoders: frames-first in, volumes out
    std::pair<Tensor<T>, Tensor<T>> encode_streams(const Tensor<T>& phi_frames, const Tensor<T>& psi_frames) {
        Tensor<T> phi_b, psi_b;
        if (cfg_.use_phi) phi_b = batch_of_one(to_volume(phi_frames));
        if (cfg_.use_psi) psi_b = batch_of_one(to_volume(psi_frames));
        typename StreamEncoder<T>::Ctx cv, ca;
        Tensor<T> v, a;
        if (cfg_.use_phi) v = strip_batch(enc_v_.forward(phi_b, cv));
        if (cfg_.use_psi) a = strip_batch(enc_a_.forward(psi_b, ca));
        if (cfg_.use_phi && cfg_.use_psi && !(v.dim(1) == a.dim(1) && v.dim(2) == a.dim(2) && v.dim(3) == a.dim(3)))
            throw ConfigError("encoded streams disagree: " + v.shape_string() + " vs " + a.shape_string());
        return {std::move(v), std::move(a)};
    }

    // classification + embedding heads on a single fused vector
    DetectorOutput heads(const Tensor<T>& g) const {
        if (g.numel() != cfg_.fused_channels)
            throw DataError("heads: fused vector has " + std::to_string(g.numel()) + " dims, expected " +
                            std::to_string(cfg_.fused_channels));
        if (!g.all_finite()) throw DataError("heads: fused vector contains non-finite values");
        typename nn::Linear<T>::Ctx cs, cu;
        const Tensor<T> gb = g.reshaped({int64_t{1}, g.numel()});
        const Tensor<T> s = head_s_.forward(gb, cs);
        const Tensor<T> raw = head_u_.forward(gb, cu);
        const Tensor<T> u = nn::l2_normalize(raw);
        DetectorOutput out;
        out.s = static_cast<double>(s[0]);
        out.u.assign(u.data(), u.data() + u.numel());
        out.g.assign(g.data(), g.data() + g.numel());
        return out;
    }

    std::vector<nn::ParamRef<T>> params() {
        std::vector<nn::ParamRef<T>> out;
        if (cfg_.use_phi) enc_v_.collect("enc_v", out);
        if (cfg_.use_psi) enc_a_.collect("enc_a", out);
        proj_.collect("proj", out);
        ln1_.collect("ln1", out);
        attn_.collect("attn", out);
        ln2_.collect("ln2", out);
        for (size_t i = 0; i < blocks_.size(); ++i) blocks_[i].collect("block." + std::to_string(i), out);
        head_s_.collect("head_s", out);
        head_u_.collect("head_u", out);
        if (cfg_.use_psi && cfg_.mask_mode == "joint") nn::collect_param(out, "mask_mix", mask_mix_);
        return out;
    }

    void zero_grads() {
        for (auto& p : params()) std::fill(p.g->data(), p.g->data() + p.g->numel(), T{});
    }

private:
    Tensor<T> batch_of_one(const Tensor<T>& x) const {
        std::vector<int64_t> s = x.shape();
        s.insert(s.begin(), 1);
        return x.reshaped(s);
    }
    Tensor<T> strip_batch(const Tensor<T>& x) const {
        std::vector<int64_t> s(x.shape().begin() + 1, x.shape().end());
        return x.reshaped(s);
    }

    Tensor<T> mix_joint(const Tensor<T>& psi, Tape& tape) const {
        // [B, 3, C, N, h, w] -> [B, C, N, h, w]
        if (psi.rank() != 6 || psi.dim(1) != 3)
            throw DataError("joint mask mode expects batch x 3 x C x N x h x w, got " + psi.shape_string());
        const int64_t b = psi.dim(0);
        const int64_t block = psi.numel() / (b * 3);
        Tensor<T> mixed({b, psi.dim(2), psi.dim(3), psi.dim(4), psi.dim(5)}, T{});
        for (int64_t bi = 0; bi < b; ++bi)
            for (int64_t k = 0; k < 3; ++k) {
                const T wk = mask_mix_.v[k];
                const T* src = psi.data() + (bi * 3 + k) * block;
                T* dst = mixed.data() + bi * block;
                for (int64_t i = 0; i < block; ++i) dst[i] += wk * src[i];
            }
        tape.psi_joint = psi;
        return mixed;
    }

    Tensor<T> encode_concat(const Tensor<T>& phi, const Tensor<T>& psi, Tape& tape) {
        Tensor<T> v, a;
        if (cfg_.use_phi) {
            if (phi.rank() != 5 || phi.dim(1) != cfg_.phi_in())
                throw DataError("composite batch must be B x " + std::to_string(cfg_.phi_in()) + " x N x H x W, got " +
                                phi.shape_string());
            v = enc_v_.forward(phi, tape.enc_v);
        }
        if (cfg_.use_psi) {
            Tensor<T> psi_in = cfg_.mask_mode == "joint" ? mix_joint(psi, tape) : psi;
            if (psi_in.rank() != 5 || psi_in.dim(1) != cfg_.psi_channels)
                throw DataError("attention-feature batch must be B x " + std::to_string(cfg_.psi_channels) +
                                " x N x h x w, got " + psi_in.shape_string());
            if (cfg_.mask_mode == "joint") tape.mixed = psi_in;
            a = enc_a_.forward(psi_in, tape.enc_a);
        }
        if (cfg_.use_phi && cfg_.use_psi) {
            if (!(v.dim(2) == a.dim(2) && v.dim(3) == a.dim(3) && v.dim(4) == a.dim(4)))
                throw ConfigError("encoded streams disagree: " + v.shape_string() + " vs " + a.shape_string());
            return concat_channels(v, a);
        }
        return cfg_.use_phi ? v : a;
    }

    void decode_concat_backward(const Tensor<T>& dcat, Tape& tape) {
        Tensor<T> dv, da;
        if (cfg_.use_phi && cfg_.use_psi) {
            split_channels(dcat, cfg_.encoder_channels, dv, da);
        } else if (cfg_.use_phi) {
            dv = dcat;
        } else {
            da = dcat;
        }
        if (cfg_.use_phi) enc_v_.backward(dv, tape.enc_v);
        if (cfg_.use_psi) {
            Tensor<T> dpsi = enc_a_.backward(da, tape.enc_a);
            if (cfg_.mask_mode == "joint") {
                const int64_t b = tape.psi_joint.dim(0);
                const int64_t block = tape.psi_joint.numel() / (b * 3);
                for (int64_t bi = 0; bi < b; ++bi)
                    for (int64_t k = 0; k < 3; ++k) {
                        const T* src = tape.psi_joint.data() + (bi * 3 + k) * block;
                        const T* dm = dpsi.data() + bi * block;
                        T acc = T{};
                        for (int64_t i = 0; i < block; ++i) acc += src[i] * dm[i];
                        mask_mix_.g[k] += acc;
                    }
            }
        }
    }

    static Tensor<T> concat_channels(const Tensor<T>& v, const Tensor<T>& a) {
        std::vector<int64_t> s = v.shape();
        s[1] += a.dim(1);
        Tensor<T> out(s, T{});
        const int64_t b = v.dim(0);
        const int64_t vb = v.numel() / b, ab = a.numel() / b;
        for (int64_t bi = 0; bi < b; ++bi) {
            std::copy(v.data() + bi * vb, v.data() + (bi + 1) * vb, out.data() + bi * (vb + ab));
            std::copy(a.data() + bi * ab, a.data() + (bi + 1) * ab, out.data() + bi * (vb + ab) + vb);
        }
        return out;
    }

    static void split_channels(const Tensor<T>& cat, int64_t c_first, Tensor<T>& v, Tensor<T>& a) {
        const int64_t b = cat.dim(0), n = cat.dim(2), h = cat.dim(3), w = cat.dim(4);
        const int64_t c_second = cat.dim(1) - c_first;
        v = Tensor<T>({b, c_first, n, h, w}, T{});
        a = Tensor<T>({b, c_second, n, h, w}, T{});
        const int64_t vb = v.numel() / b, ab = a.numel() / b;
        for (int64_t bi = 0; bi < b; ++bi) {
            std::copy(cat.data() + bi * (vb + ab), cat.data() + bi * (vb + ab) + vb, v.data() + bi * vb);
            std::copy(cat.data() + bi * (vb + ab) + vb, cat.data() + (bi + 1) * (vb + ab), a.data() + bi * ab);
        }
    }

    void add_positional(Tensor<T>& p) const {
        const int64_t b = p.dim(0), c = p.dim(1), n = p.dim(2), plane = grid_h_ * grid_w_;
        for (int64_t bi = 0; bi < b; ++bi)
            for (int64_t ch = 0; ch < c; ++ch) {
                const T* pec = pe_.data() + ch * plane;
                for (int64_t f = 0; f < n; ++f) {
                    T* dst = p.data() + ((bi * c + ch) * n + f) * plane;
                    for (int64_t i = 0; i < plane; ++i) dst[i] += pec[i];
                }
            }
    }

    // per (sample, frame): tokens = LN -> self-attention -> residual -> LN
    void attention_rounds(Tensor<T>& p, Tape& tape) {
        const int64_t b = p.dim(0), c = p.dim(1), n = p.dim(2), plane = grid_h_ * grid_w_;
        const int64_t rounds = b * n;
        tape.ln1.resize(static_cast<size_t>(rounds));
        tape.ln2.resize(static_cast<size_t>(rounds));
        tape.attn.resize(static_cast<size_t>(rounds));
        tape.grid_h = grid_h_;
        tape.grid_w = grid_w_;
        for (int64_t bi = 0; bi < b; ++bi)
            for (int64_t f = 0; f < n; ++f) {
                const size_t r = static_cast<size_t>(bi * n + f);
                Tensor<T> tokens = gather_tokens(p, bi, f, c, n, plane);
                Tensor<T> t = ln1_.forward(tokens, tape.ln1[r]);
                Tensor<T> o = attn_.forward(t, tape.attn[r]);
                o += tokens;  // residual
                Tensor<T> z = ln2_.forward(o, tape.ln2[r]);
                scatter_tokens(p, z, bi, f, c, n, plane);
            }
    }

    void attention_rounds_backward(Tensor<T>& d, Tape& tape) {
        const int64_t b = d.dim(0), c = d.dim(1), n = d.dim(2), plane = grid_h_ * grid_w_;
        for (int64_t bi = b; bi-- > 0;)
            for (int64_t f = n; f-- > 0;) {
                const size_t r = static_cast<size_t>(bi * n + f);
                Tensor<T> dz = gather_tokens(d, bi, f, c, n, plane);
                Tensor<T> dres = ln2_.backward(dz, tape.ln2[r]);
                Tensor<T> dt = attn_.backward(dres, tape.attn[r]);
                Tensor<T> dtokens = ln1_.backward(dt, tape.ln1[r]);
                dtokens += dres;  // residual path
                scatter_tokens(d, dtokens, bi, f, c, n, plane);
            }
    }

    Tensor<T> gather_tokens(const Tensor<T>& p, int64_t bi, int64_t f, int64_t c, int64_t n, int64_t plane) const {
        Tensor<T> tokens({plane, c}, T{});
        for (int64_t ch = 0; ch < c; ++ch) {
            const T* src = p.data() + ((bi * c + ch) * n + f) * plane;
            for (int64_t i = 0; i < plane; ++i) tokens[i * c + ch] = src[i];
        }
        return tokens;
    }

    void scatter_tokens(Tensor<T>& p, const Tensor<T>& tokens, int64_t bi, int64_t f, int64_t c, int64_t n,
                        int64_t plane) const {
        for (int64_t ch = 0; ch < c; ++ch) {
            T* dst = p.data() + ((bi * c + ch) * n + f) * plane;
            for (int64_t i = 0; i < plane; ++i) dst[i] = tokens[i * c + ch];
        }
    }

    DetectorConfig cfg_;
    int64_t grid_h_ = 0, grid_w_ = 0;
    StreamEncoder<T> enc_v_, enc_a_;
    nn::Conv3d<T> proj_;
    nn::LayerNorm<T> ln1_, ln2_;
    nn::SelfAttention<T> attn_;
    std::vector<GroupedResBlock<T>> blocks_;
    nn::Linear<T> head_s_, head_u_;
    nn::Param<T> mask_mix_;
    Tensor<T> pe_;
};

extern template class DetectorModel<float>;
extern template class DetectorModel<double>;
extern template std::vector<std::array<int64_t, 3>> mine_triplet_indices<float>(const TensorF&,
                                                                                const std::vector<int>&,
                                                                                const std::string&, Rng&);
extern template std::vector<std::array<int64_t, 3>> mine_triplet_indices<double>(const TensorD&,
                                                                                 const std::vector<int>&,
                                                                                 const std::string&, Rng&);

}  // namespace xavdt
