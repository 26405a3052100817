#include "xavdt/backends.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "xavdt/errors.hpp"
#include "xavdt/rng.hpp"

namespace xavdt {

TensorD ConstantDenoiser::predict_eps(const TensorD& z, int64_t, const Condition&, const std::string& capture_site,
                                      HeadCapture*) const {
    if (!capture_site.empty())
        throw ConfigError("constant denoiser exposes no attention sites (requested '" + capture_site + "')");
    if (fixed_) {
        if (!eps_.same_shape(z))
            throw DataError("constant denoiser fixed to shape " + eps_.shape_string() + ", got latent " +
                            z.shape_string());
        return eps_;
    }
    return TensorD(z.shape(), value_);
}

GaussianScoreDenoiser::GaussianScoreDenoiser(double mean, double stddev, NoiseSchedule schedule)
    : mu_(mean), var0_(stddev * stddev), sched_(std::move(schedule)) {
    if (!(stddev > 0.0)) throw ConfigError("gaussian score denoiser: stddev must be positive");
}

TensorD GaussianScoreDenoiser::predict_eps(const TensorD& z, int64_t t, const Condition&,
                                           const std::string& capture_site, HeadCapture*) const {
    if (!capture_site.empty())
        throw ConfigError("gaussian score denoiser exposes no attention sites (requested '" + capture_site + "')");
    const double ab = sched_.alpha_bar(t);
    const double root_ab = std::sqrt(ab), root_1m = std::sqrt(1.0 - ab);
    const double denom = ab * var0_ + (1.0 - ab);
    TensorD out = TensorD::zeros_like(z);
    for (int64_t i = 0; i < z.numel(); ++i) out[i] = root_1m * (z[i] - root_ab * mu_) / denom;
    return out;
}

namespace {

TensorD conv3x3(const TensorD& weight, const TensorD& bias, const TensorD& x) {
    const int64_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int64_t cout = weight.dim(0);
    TensorD out({n, cout, h, w}, 0.0);
    for (int64_t f = 0; f < n; ++f)
        for (int64_t oc = 0; oc < cout; ++oc) {
            for (int64_t ic = 0; ic < cin; ++ic) {
                const double* wp = weight.data() + ((oc * cin + ic) * 3) * 3;
                const double* xp = x.data() + (f * cin + ic) * h * w;
                double* op = out.data() + (f * cout + oc) * h * w;
                for (int64_t y = 0; y < h; ++y)
                    for (int64_t xx = 0; xx < w; ++xx) {
                        double acc = 0.0;
                        for (int64_t ky = -1; ky <= 1; ++ky) {
                            const int64_t sy = y + ky;
                            if (sy < 0 || sy >= h) continue;
                            for (int64_t kx = -1; kx <= 1; ++kx) {
                                const int64_t sx = xx + kx;
                                if (sx < 0 || sx >= w) continue;
                                acc += wp[(ky + 1) * 3 + (kx + 1)] * xp[sy * w + sx];
                            }
                        }
                        op[y * w + xx] += acc;
                    }
            }
            double* op = out.data() + (f * cout + oc) * h * w;
            for (int64_t i = 0; i < h * w; ++i) op[i] += bias[oc];
        }
    return out;
}

TensorD avgpool2(const TensorD& x) {
    const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    TensorD out({n, c, h / 2, w / 2}, 0.0);
    for (int64_t f = 0; f < n; ++f)
        for (int64_t ch = 0; ch < c; ++ch)
            for (int64_t y = 0; y < h / 2; ++y)
                for (int64_t xx = 0; xx < w / 2; ++xx)
                    out.at(f, ch, y, xx) = 0.25 * (x.at(f, ch, 2 * y, 2 * xx) + x.at(f, ch, 2 * y, 2 * xx + 1) +
                                                   x.at(f, ch, 2 * y + 1, 2 * xx) + x.at(f, ch, 2 * y + 1, 2 * xx + 1));
    return out;
}

TensorD upsample2(const TensorD& x) {
    const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    TensorD out({n, c, h * 2, w * 2}, 0.0);
    for (int64_t f = 0; f < n; ++f)
        for (int64_t ch = 0; ch < c; ++ch)
            for (int64_t y = 0; y < 2 * h; ++y)
                for (int64_t xx = 0; xx < 2 * w; ++xx) out.at(f, ch, y, xx) = x.at(f, ch, y / 2, xx / 2);
    return out;
}

TensorD concat_channels(const TensorD& a, const TensorD& b) {
    const int64_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1), h = a.dim(2), w = a.dim(3);
    TensorD out({n, ca + cb, h, w}, 0.0);
    for (int64_t f = 0; f < n; ++f) {
        std::copy(a.data() + f * ca * h * w, a.data() + (f + 1) * ca * h * w, out.data() + f * (ca + cb) * h * w);
        std::copy(b.data() + f * cb * h * w, b.data() + (f + 1) * cb * h * w,
                  out.data() + (f * (ca + cb) + ca) * h * w);
    }
    return out;
}

void tanh_inplace(TensorD& x) {
    for (int64_t i = 0; i < x.numel(); ++i) x[i] = std::tanh(x[i]);
}

TensorD time_embedding(int64_t t, int64_t dim, int64_t train_steps) {
    TensorD e({dim}, 0.0);
    const double tn = static_cast<double>(t) / static_cast<double>(train_steps);
    for (int64_t j = 0; j < dim / 2; ++j) {
        const double w = 3.14159265358979323846 * std::pow(2.0, static_cast<double>(j));
        e[2 * j] = std::sin(w * tn);
        e[2 * j + 1] = std::cos(w * tn);
    }
    return e;
}

// frames x channels x h x w -> per-frame token rows (hw x channels).
TensorD frame_tokens(const TensorD& x, int64_t f) {
    const int64_t c = x.dim(1), h = x.dim(2), w = x.dim(3);
    TensorD tok({h * w, c}, 0.0);
    for (int64_t ch = 0; ch < c; ++ch)
        for (int64_t p = 0; p < h * w; ++p) tok[p * c + ch] = x[(f * c + ch) * h * w + p];
    return tok;
}

void scatter_frame_tokens(TensorD& x, int64_t f, const TensorD& tok) {
    const int64_t c = x.dim(1), h = x.dim(2), w = x.dim(3);
    for (int64_t ch = 0; ch < c; ++ch)
        for (int64_t p = 0; p < h * w; ++p) x[(f * c + ch) * h * w + p] = tok[p * c + ch];
}

}  // namespace

TinyUNetDenoiser::TinyUNetDenoiser(const TinyUNetConfig& cfg) : cfg_(cfg) {
    if (cfg.time_dim % 2 != 0) throw ConfigError("unet: time_dim must be even");
    if (cfg.base_width % cfg.heads != 0 || (cfg.base_width * cfg.mid_mult) % cfg.heads != 0)
        throw ConfigError("unet: stage widths must be divisible by heads");
    const int64_t w0 = cfg.base_width, wm = cfg.base_width * cfg.mid_mult;

    auto make_conv = [&](int64_t out, int64_t in, const char* tag) {
        Conv cv;
        cv.weight = TensorD({out, in, 3, 3}, 0.0);
        cv.bias = TensorD({out}, 0.0);
        Rng rng(derive_seed(cfg.seed, tag));
        rng.fill_normal(cv.weight, 0.0, cfg.weight_scale / std::sqrt(static_cast<double>(in * 9)));
        return cv;
    };
    auto make_stage = [&](int64_t in, int64_t width, const std::string& tag) {
        Stage st;
        st.conv = make_conv(width, in, (tag + ".conv").c_str());
        st.spatial = make_attention(cfg.heads, width, width, derive_seed(cfg.seed, tag + ".spatial"));
        st.temporal = make_attention(cfg.heads, width, width, derive_seed(cfg.seed, tag + ".temporal"));
        st.cross = make_attention(cfg.heads, width, cfg.d_audio, derive_seed(cfg.seed, tag + ".cross"));
        for (auto* a : {&st.spatial, &st.temporal, &st.cross})
            for (int64_t i = 0; i < a->wo.numel(); ++i) a->wo[i] *= cfg.weight_scale;
        st.time_w = TensorD({cfg.time_dim, width}, 0.0);
        st.time_b = TensorD({width}, 0.0);
        Rng rng(derive_seed(cfg.seed, tag + ".time"));
        rng.fill_normal(st.time_w, 0.0, 1.0 / std::sqrt(static_cast<double>(cfg.time_dim)));
        return st;
    };

    down0_ = make_stage(cfg.in_channels, w0, "down0");
    mid_ = make_stage(w0, wm, "mid");
    up0_ = make_stage(wm + w0, w0, "up0");
    out_conv_ = make_conv(cfg.in_channels, w0, "out");
    ref_conv_ = make_conv(w0, cfg.in_channels, "ref");
}

std::vector<std::string> TinyUNetDenoiser::capture_sites() const {
    std::vector<std::string> v;
    for (const char* st : {"down0", "mid", "up0"})
        for (const char* k : {"spatial", "temporal", "cross"}) v.push_back(std::string(st) + "." + k);
    return v;
}

int64_t TinyUNetDenoiser::site_channels(const std::string& site) const {
    const auto dot = site.find('.');
    const std::string stage = site.substr(0, dot);
    if (stage == "down0" || stage == "up0") return cfg_.base_width;
    if (stage == "mid") return cfg_.base_width * cfg_.mid_mult;
    throw ConfigError("unet: unknown site '" + site + "'");
}

const TinyUNetDenoiser::Stage& TinyUNetDenoiser::stage_by_name(const std::string& name) const {
    if (name == "down0") return down0_;
    if (name == "mid") return mid_;
    if (name == "up0") return up0_;
    throw ConfigError("unet: unknown stage '" + name + "'");
}

namespace {

// Runs one attention kind over x (frames x c x h x w) and returns the
// pre-residual attention output; optionally fills the per-head capture.
TensorD apply_attention(const MultiHeadAttention& mha, const std::string& kind, const TensorD& x,
                        const Condition& c, HeadCapture* capture) {
    const int64_t n = x.dim(0), ch = x.dim(1), h = x.dim(2), w = x.dim(3);
    TensorD out = TensorD::zeros_like(x);
    if (capture) {
        capture->frames = n;
        capture->heads = mha.heads;
        capture->grid_h = h;
        capture->grid_w = w;
        capture->per_head = TensorD({n, mha.heads, h * w, mha.d_head}, 0.0);
        capture->out_proj = mha.wo;
    }
    if (kind == "spatial" || kind == "cross") {
        TensorD ctx;
        if (kind == "cross") {
            if (c.audio.empty()) throw DataError("cross-attention site needs audio conditioning, none provided");
            if (c.audio.rank() != 2 || c.audio.dim(1) != mha.d_cond)
                throw DataError("audio tokens " + c.audio.shape_string() + " need width " +
                                std::to_string(mha.d_cond));
            ctx = c.audio;
        }
        for (int64_t f = 0; f < n; ++f) {
            const TensorD tok = frame_tokens(x, f);
            TensorD ph;
            const TensorD o = mha.forward(tok, kind == "cross" ? ctx : tok, capture ? &ph : nullptr);
            scatter_frame_tokens(out, f, o);
            if (capture)
                for (int64_t hd = 0; hd < mha.heads; ++hd)
                    for (int64_t p = 0; p < h * w; ++p)
                        for (int64_t d = 0; d < mha.d_head; ++d)
                            capture->per_head.at(f, hd, p, d) = ph[(hd * h * w + p) * mha.d_head + d];
        }
    } else if (kind == "temporal") {
        TensorD tok({n, ch}, 0.0);
        for (int64_t p = 0; p < h * w; ++p) {
            for (int64_t f = 0; f < n; ++f)
                for (int64_t cc = 0; cc < ch; ++cc) tok[f * ch + cc] = x[(f * ch + cc) * h * w + p];
            TensorD ph;
            const TensorD o = mha.forward(tok, tok, capture ? &ph : nullptr);
            for (int64_t f = 0; f < n; ++f)
                for (int64_t cc = 0; cc < ch; ++cc) out[(f * ch + cc) * h * w + p] = o[f * ch + cc];
            if (capture)
                for (int64_t hd = 0; hd < mha.heads; ++hd)
                    for (int64_t f = 0; f < n; ++f)
                        for (int64_t d = 0; d < mha.d_head; ++d)
                            capture->per_head.at(f, hd, p, d) = ph[(hd * n + f) * mha.d_head + d];
        }
    } else {
        throw ConfigError("unet: unknown attention kind '" + kind + "'");
    }
    return out;
}

}  // namespace

TensorD TinyUNetDenoiser::run_stage(const Stage& st, const std::string& stage_name, const TensorD& x,
                                    const TensorD& temb, const Condition& c, const std::string& capture_site,
                                    HeadCapture* capture) const {
    TensorD h = conv3x3(st.conv.weight, st.conv.bias, x);
    // per-channel timestep bias
    const int64_t width = h.dim(1);
    TensorD tb({width}, 0.0);
    for (int64_t j = 0; j < width; ++j) {
        double acc = st.time_b[j];
        for (int64_t i = 0; i < temb.numel(); ++i) acc += temb[i] * st.time_w[i * width + j];
        tb[j] = std::tanh(acc);
    }
    const int64_t n = h.dim(0), hw = h.dim(2) * h.dim(3);
    for (int64_t f = 0; f < n; ++f)
        for (int64_t ch = 0; ch < width; ++ch) {
            double* p = h.data() + (f * width + ch) * hw;
            for (int64_t i = 0; i < hw; ++i) p[i] += tb[ch];
        }
    tanh_inplace(h);

    const bool skip_cross = c.audio.empty();
    for (const char* kind : {"spatial", "temporal", "cross"}) {
        if (skip_cross && std::string(kind) == "cross") continue;
        const std::string site = stage_name + "." + kind;
        const bool want = capture && capture_site == site;
        const MultiHeadAttention& mha = std::string(kind) == "spatial"    ? st.spatial
                                        : std::string(kind) == "temporal" ? st.temporal
                                                                          : st.cross;
        const TensorD a = apply_attention(mha, kind, h, c, want ? capture : nullptr);
        if (want) capture->site = site;
        h += a;
    }
    return h;
}

TensorD TinyUNetDenoiser::predict_eps(const TensorD& z, int64_t t, const Condition& c,
                                      const std::string& capture_site, HeadCapture* capture) const {
    if (z.rank() != 4 || z.dim(1) != cfg_.in_channels)
        throw DataError("unet: expected frames x " + std::to_string(cfg_.in_channels) + " x H x W, got " +
                        z.shape_string());
    if (z.dim(2) % 2 != 0 || z.dim(3) % 2 != 0 || z.dim(2) < 2 || z.dim(3) < 2)
        throw DataError("unet: spatial dims must be even and >= 2, got " + z.shape_string());
    if (!capture_site.empty()) {
        const auto sites = capture_sites();
        if (std::find(sites.begin(), sites.end(), capture_site) == sites.end()) {
            std::ostringstream os;
            os << "unet: unknown capture site '" << capture_site << "'; available:";
            for (const auto& s : sites) os << " " << s;
            throw ConfigError(os.str());
        }
    }

    const TensorD temb = time_embedding(t, cfg_.time_dim, cfg_.train_steps);

    TensorD d = run_stage(down0_, "down0", z, temb, c, capture_site, capture);
    if (!c.reference.empty()) {
        TensorD ref = c.reference;
        if (ref.rank() == 3) ref = ref.reshaped({1, ref.dim(0), ref.dim(1), ref.dim(2)});
        if (ref.rank() != 4 || ref.dim(1) != cfg_.in_channels || ref.dim(2) != z.dim(2) || ref.dim(3) != z.dim(3))
            throw DataError("unet: reference latent " + ref.shape_string() + " does not match input " +
                            z.shape_string());
        TensorD rf = conv3x3(ref_conv_.weight, ref_conv_.bias, ref);
        tanh_inplace(rf);
        const int64_t n = d.dim(0), chw = d.dim(1) * d.dim(2) * d.dim(3);
        for (int64_t f = 0; f < n; ++f)
            for (int64_t i = 0; i < chw; ++i) d[f * chw + i] += rf[i];
    }

    TensorD m = run_stage(mid_, "mid", avgpool2(d), temb, c, capture_site, capture);
    TensorD u = run_stage(up0_, "up0", concat_channels(upsample2(m), d), temb, c, capture_site, capture);
    TensorD eps = conv3x3(out_conv_.weight, out_conv_.bias, u);

    if (capture && !capture_site.empty() && capture->valid()) capture->timestep = t;
    return eps;
}

std::pair<TensorD, HeadCapture> TinyUNetDenoiser::cross_attention_capture(const TensorD& hidden, const Condition& c,
                                                                          const std::string& site) const {
    const auto sites = capture_sites();
    if (std::find(sites.begin(), sites.end(), site) == sites.end()) {
        std::ostringstream os;
        os << "unet: unknown capture site '" << site << "'; available:";
        for (const auto& s : sites) os << " " << s;
        throw ConfigError(os.str());
    }
    const auto dot = site.find('.');
    const std::string stage_name = site.substr(0, dot), kind = site.substr(dot + 1);
    const Stage& st = stage_by_name(stage_name);
    const int64_t width = site_channels(site);
    if (hidden.rank() != 4 || hidden.dim(1) != width)
        throw DataError("unet: hidden state " + hidden.shape_string() + " needs " + std::to_string(width) +
                        " channels for site '" + site + "'");
    HeadCapture cap;
    const MultiHeadAttention& mha = kind == "spatial" ? st.spatial : kind == "temporal" ? st.temporal : st.cross;
    TensorD out = apply_attention(mha, kind, hidden, c, &cap);
    cap.site = site;
    return {std::move(out), std::move(cap)};
}

}  // namespace xavdt
