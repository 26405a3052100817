#include "xavdt/features.hpp"

#include <cmath>
#include <sstream>

#include "xavdt/errors.hpp"

namespace xavdt {

namespace {

// rows [begin, begin+count) of a frames-first tensor, repeating the final
// row when the range runs past the end
template <typename T>
Tensor<T> slice_frames_padded(const Tensor<T>& t, int64_t begin, int64_t count) {
    std::vector<int64_t> shape = t.shape();
    const int64_t frames = shape[0];
    int64_t row = t.numel() / frames;
    shape[0] = count;
    Tensor<T> out(shape, T{});
    for (int64_t i = 0; i < count; ++i) {
        const int64_t src = std::min(begin + i, frames - 1);
        std::copy(t.data() + src * row, t.data() + (src + 1) * row, out.data() + i * row);
    }
    return out;
}

void check_mask_grid(const TensorF& m, const char* name, int64_t frames, int64_t h, int64_t w) {
    if (m.rank() != 3 || m.dim(0) != frames || m.dim(1) != h || m.dim(2) != w)
        throw DataError(std::string("mask '") + name + "' has shape " + m.shape_string() + ", expected (" +
                        std::to_string(frames) + ", " + std::to_string(h) + ", " + std::to_string(w) + ")");
}

// audio tokens plus the encoded reference frame, shared by both traversal
// directions so they see the same conditioning
Condition make_condition(const TensorD& pixels, const AudioCondition& audio, int64_t ref_frame,
                         const LatentCodec& codec) {
    Condition cond;
    cond.audio = audio.tokens;
    const TensorD ref_pix = slice_frames_padded(pixels, ref_frame, 1);
    const TensorD ref_lat = codec.encode(ref_pix);
    cond.reference = ref_lat.reshaped({ref_lat.dim(1), ref_lat.dim(2), ref_lat.dim(3)});
    return cond;
}

}  // namespace

std::vector<SegmentPair> segment_clip(const VideoClip& clip, const AudioCondition& audio, int64_t segment_len) {
    if (segment_len < 1) throw ConfigError("segment length must be positive");
    const int64_t n = clip.frame_count();
    if (n < 1) throw DataError("cannot segment an empty clip" + (clip.clip_id.empty() ? "" : ": " + clip.clip_id));
    if (audio.tokens.rank() != 2 || audio.tokens.dim(0) != n)
        throw DataError("audio tokens " + audio.tokens.shape_string() + " not aligned with " + std::to_string(n) +
                        " frames");

    const int64_t count = (n + segment_len - 1) / segment_len;
    std::vector<SegmentPair> out;
    out.reserve(static_cast<size_t>(count));
    for (int64_t s = 0; s < count; ++s) {
        SegmentPair seg;
        seg.video.frames = slice_frames_padded(clip.frames, s * segment_len, segment_len);
        seg.video.fps = clip.fps;
        seg.video.clip_id = clip.clip_id + "#" + std::to_string(s);
        seg.audio.tokens = slice_frames_padded(audio.tokens, s * segment_len, segment_len);
        seg.audio.provenance = audio.provenance;
        out.push_back(std::move(seg));
    }
    return out;
}

std::string ExtractionConfig::describe() const {
    std::ostringstream os;
    os << "schedule{" << schedule.serialize() << "}t_star=" << t_star << ";site=" << site
       << ";segment_len=" << segment_len << ";ref_frame=" << ref_frame << ";mask_mode=" << mask_mode;
    return os.str();
}

InversionOutput invert_and_capture(const VideoClip& x, const AudioCondition& c, const MaskSet& masks,
                                   const ExtractionConfig& cfg, const DenoiserBackend& backend,
                                   const LatentCodec& codec, const NoiseSchedule& sched) {
    const int64_t n = x.frame_count();
    if (n < 1) throw DataError("inversion needs at least one frame");
    if (x.frames.min() < -1e-6f || x.frames.max() > 1.0f + 1e-6f)
        throw DataError("clip pixel values outside [0,1]: min " + std::to_string(x.frames.min()) + ", max " +
                        std::to_string(x.frames.max()));

    const TensorD pixels = x.frames.cast<double>();
    const TensorD z0 = codec.encode(pixels);
    const int64_t lh = z0.dim(2), lw = z0.dim(3);

    check_mask_grid(masks.full, "full", n, lh, lw);
    check_mask_grid(masks.face, "face", n, lh, lw);
    check_mask_grid(masks.lip, "lip", n, lh, lw);

    if (cfg.ref_frame < 0 || cfg.ref_frame >= n)
        throw ConfigError("reference frame " + std::to_string(cfg.ref_frame) + " outside clip of " +
                          std::to_string(n) + " frames");

    const Condition cond = make_condition(pixels, c, cfg.ref_frame, codec);
    const auto grid = sched.sample_grid(cfg.schedule.sample_steps, cfg.schedule.spacing);
    InversionOutput out;
    out.z_T = invert_chain(Latent{z0, 0}, cond, backend, sched, grid, cfg.site, cfg.t_star, &out.psi_raw);
    return out;
}

Latent reconstruct(const Latent& z_T, const Condition& c, const DenoiserBackend& backend, const NoiseSchedule& sched,
                   const std::vector<int64_t>& grid) {
    return sample_chain(z_T, c, backend, sched, grid);
}

CompositeFeature assemble_composite(const TensorF& x, const TensorF& decoded_noise, const TensorF& reconstruction) {
    for (const TensorF* t : {&x, &decoded_noise, &reconstruction})
        if (t->rank() != 4 || t->dim(1) != 3)
            throw DataError("composite inputs must be frames x 3 x H x W, got " + t->shape_string());
    if (!x.same_shape(decoded_noise) || !x.same_shape(reconstruction))
        throw DataError("composite inputs disagree: " + x.shape_string() + " vs " + decoded_noise.shape_string() +
                        " vs " + reconstruction.shape_string());

    const int64_t n = x.dim(0), h = x.dim(2), w = x.dim(3), plane = h * w;
    CompositeFeature phi;
    phi.data = TensorF({n, 12, h, w}, 0.0f);
    for (int64_t f = 0; f < n; ++f)
        for (int64_t ch = 0; ch < 3; ++ch) {
            const float* xs = x.data() + (f * 3 + ch) * plane;
            const float* ns = decoded_noise.data() + (f * 3 + ch) * plane;
            const float* rs = reconstruction.data() + (f * 3 + ch) * plane;
            float* base = phi.data.data() + (f * 12 + ch) * plane;
            for (int64_t i = 0; i < plane; ++i) {
                base[i] = xs[i];
                base[3 * plane + i] = ns[i];
                base[6 * plane + i] = rs[i];
                base[9 * plane + i] = std::abs(xs[i] - rs[i]);
            }
        }
    return phi;
}

TensorF project_heads(const HeadCapture& raw) {
    if (!raw.valid()) throw DataError("head projection: capture is empty");
    if (raw.per_head.rank() != 4)
        throw DataError("head projection: expected frames x heads x tokens x d_head, got " +
                        raw.per_head.shape_string());
    const int64_t n = raw.per_head.dim(0), heads = raw.per_head.dim(1), tokens = raw.per_head.dim(2),
                  dh = raw.per_head.dim(3);
    if (tokens != raw.grid_h * raw.grid_w)
        throw DataError("head projection: " + std::to_string(tokens) + " tokens do not fill the expected " +
                        std::to_string(raw.grid_h) + "x" + std::to_string(raw.grid_w) + " grid");
    if (raw.out_proj.rank() != 2 || raw.out_proj.dim(0) != heads * dh)
        throw DataError("head projection: projection " + raw.out_proj.shape_string() + " does not accept " +
                        std::to_string(heads * dh) + " merged channels");
    const int64_t c_out = raw.out_proj.dim(1);

    TensorF psi({n, c_out, raw.grid_h, raw.grid_w}, 0.0f);
    for (int64_t f = 0; f < n; ++f)
        for (int64_t p = 0; p < tokens; ++p)
            for (int64_t co = 0; co < c_out; ++co) {
                double acc = 0.0;
                for (int64_t hd = 0; hd < heads; ++hd)
                    for (int64_t d = 0; d < dh; ++d)
                        acc += raw.per_head.at(f, hd, p, d) * raw.out_proj.at(hd * dh + d, co);
                psi.at(f, co, p / raw.grid_w, p % raw.grid_w) = static_cast<float>(acc);
            }
    return psi;
}

namespace {

void gate_into(TensorF& dst, const TensorF& psi, const TensorF& mask, double weight) {
    const int64_t n = psi.dim(0), c = psi.dim(1), h = psi.dim(2), w = psi.dim(3), plane = h * w;
    for (int64_t f = 0; f < n; ++f)
        for (int64_t ch = 0; ch < c; ++ch) {
            const float* src = psi.data() + (f * c + ch) * plane;
            const float* m = mask.data() + f * plane;
            float* out = dst.data() + (f * c + ch) * plane;
            for (int64_t i = 0; i < plane; ++i)
                out[i] += static_cast<float>(weight * static_cast<double>(src[i]) * static_cast<double>(m[i]));
        }
}

// block average a frames x h x w mask down by an integer factor
TensorF pool_mask(const TensorF& m, int64_t factor) {
    const int64_t n = m.dim(0), h = m.dim(1) / factor, w = m.dim(2) / factor;
    TensorF out({n, h, w}, 0.0f);
    const double inv = 1.0 / static_cast<double>(factor * factor);
    for (int64_t f = 0; f < n; ++f)
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x) {
                double acc = 0.0;
                for (int64_t dy = 0; dy < factor; ++dy)
                    for (int64_t dx = 0; dx < factor; ++dx)
                        acc += m.at(f, y * factor + dy, x * factor + dx);
                out.at(f, y, x) = static_cast<float>(acc * inv);
            }
    return out;
}

// masks live at latent resolution; captures from half-resolution stages
// need them pooled down to the attention grid before gating
MaskSet masks_at_grid(const MaskSet& masks, int64_t h, int64_t w) {
    if (masks.full.dim(1) == h && masks.full.dim(2) == w) return masks;
    if (h < 1 || w < 1 || masks.full.dim(1) % h != 0 || masks.full.dim(2) % w != 0 ||
        masks.full.dim(1) / h != masks.full.dim(2) / w)
        throw DataError("masks at " + std::to_string(masks.full.dim(1)) + "x" + std::to_string(masks.full.dim(2)) +
                        " cannot be pooled to the " + std::to_string(h) + "x" + std::to_string(w) +
                        " attention grid");
    const int64_t factor = masks.full.dim(1) / h;
    MaskSet out;
    out.full = pool_mask(masks.full, factor);
    out.face = pool_mask(masks.face, factor);
    out.lip = pool_mask(masks.lip, factor);
    out.w_full = masks.w_full;
    out.w_face = masks.w_face;
    out.w_lip = masks.w_lip;
    return out;
}

void check_gate_inputs(const TensorF& psi_tilde, const MaskSet& masks) {
    if (psi_tilde.rank() != 4)
        throw DataError("gating: expected frames x C x h x w, got " + psi_tilde.shape_string());
    const int64_t n = psi_tilde.dim(0), h = psi_tilde.dim(2), w = psi_tilde.dim(3);
    check_mask_grid(masks.full, "full", n, h, w);
    check_mask_grid(masks.face, "face", n, h, w);
    check_mask_grid(masks.lip, "lip", n, h, w);
    for (double wt : {masks.w_full, masks.w_face, masks.w_lip})
        if (!std::isfinite(wt) || wt < 0.0) throw DataError("gating: mask weights must be finite and non-negative");
}

}  // namespace

CrossAttnFeature gate_and_aggregate(const TensorF& psi_tilde, const MaskSet& masks) {
    check_gate_inputs(psi_tilde, masks);
    CrossAttnFeature out;
    out.data = TensorF(psi_tilde.shape(), 0.0f);
    gate_into(out.data, psi_tilde, masks.full, masks.w_full);
    gate_into(out.data, psi_tilde, masks.face, masks.w_face);
    gate_into(out.data, psi_tilde, masks.lip, masks.w_lip);
    return out;
}

TensorF gate_stack(const TensorF& psi_tilde, const MaskSet& masks) {
    check_gate_inputs(psi_tilde, masks);
    const int64_t n = psi_tilde.dim(0), c = psi_tilde.dim(1), h = psi_tilde.dim(2), w = psi_tilde.dim(3);
    TensorF out({3, n, c, h, w}, 0.0f);
    const int64_t block = n * c * h * w;
    const TensorF* ms[3] = {&masks.full, &masks.face, &masks.lip};
    for (int64_t k = 0; k < 3; ++k) {
        TensorF gated({n, c, h, w}, 0.0f);
        gate_into(gated, psi_tilde, *ms[static_cast<size_t>(k)], 1.0);
        std::copy(gated.data(), gated.data() + block, out.data() + k * block);
    }
    return out;
}

ClipFeatures extract_clip_features(const VideoClip& clip, const AudioCondition& audio, const MaskSet& masks,
                                   const ExtractionConfig& cfg, const DenoiserBackend& backend,
                                   const LatentCodec& codec, const NoiseSchedule& sched) {
    const auto segments = segment_clip(clip, audio, cfg.segment_len);
    const int64_t n_pad = static_cast<int64_t>(segments.size()) * cfg.segment_len;

    ClipFeatures out;
    out.padded_frames = n_pad;
    const auto grid = sched.sample_grid(cfg.schedule.sample_steps, cfg.schedule.spacing);

    std::vector<TensorF> phi_parts, psi_parts;
    for (size_t s = 0; s < segments.size(); ++s) {
        const SegmentPair& seg = segments[s];
        MaskSet seg_masks;
        seg_masks.full = slice_frames_padded(masks.full, static_cast<int64_t>(s) * cfg.segment_len, cfg.segment_len);
        seg_masks.face = slice_frames_padded(masks.face, static_cast<int64_t>(s) * cfg.segment_len, cfg.segment_len);
        seg_masks.lip = slice_frames_padded(masks.lip, static_cast<int64_t>(s) * cfg.segment_len, cfg.segment_len);
        seg_masks.w_full = masks.w_full;
        seg_masks.w_face = masks.w_face;
        seg_masks.w_lip = masks.w_lip;

        const InversionOutput inv = invert_and_capture(seg.video, seg.audio, seg_masks, cfg, backend, codec, sched);
        const Condition cond = make_condition(seg.video.frames.cast<double>(), seg.audio, cfg.ref_frame, codec);
        const Latent z0_hat = reconstruct(inv.z_T, cond, backend, sched, grid);

        const TensorF decoded_noise = codec.decode(inv.z_T.data).cast<float>();
        const TensorF reconstruction = codec.decode(z0_hat.data).cast<float>();
        phi_parts.push_back(assemble_composite(seg.video.frames, decoded_noise, reconstruction).data);

        const TensorF psi_tilde = project_heads(inv.psi_raw);
        const MaskSet gate_masks = masks_at_grid(seg_masks, psi_tilde.dim(2), psi_tilde.dim(3));
        if (cfg.mask_mode == "joint") {
            psi_parts.push_back(gate_stack(psi_tilde, gate_masks));
        } else if (cfg.mask_mode == "fixed") {
            psi_parts.push_back(gate_and_aggregate(psi_tilde, gate_masks).data);
        } else {
            throw ConfigError("unknown mask mode '" + cfg.mask_mode + "' (expected fixed or joint)");
        }
    }

    // stitch segments back together along the frame axis
    auto concat_frames = [](const std::vector<TensorF>& parts, int frame_dim) {
        std::vector<int64_t> shape = parts.front().shape();
        int64_t per = parts.front().numel();
        shape[static_cast<size_t>(frame_dim)] *= static_cast<int64_t>(parts.size());
        TensorF out_t(shape, 0.0f);
        if (frame_dim == 0) {
            for (size_t i = 0; i < parts.size(); ++i)
                std::copy(parts[i].data(), parts[i].data() + per, out_t.data() + static_cast<int64_t>(i) * per);
        } else {
            // rank-5 gated stack: frame axis is dim 1 under the mask axis
            const int64_t groups = parts.front().dim(0);
            const int64_t block = per / groups;
            const int64_t total = static_cast<int64_t>(parts.size());
            for (int64_t g = 0; g < groups; ++g)
                for (int64_t i = 0; i < total; ++i)
                    std::copy(parts[static_cast<size_t>(i)].data() + g * block,
                              parts[static_cast<size_t>(i)].data() + (g + 1) * block,
                              out_t.data() + (g * total + i) * block);
        }
        return out_t;
    };

    out.phi.data = concat_frames(phi_parts, 0);
    out.psi.data = concat_frames(psi_parts, cfg.mask_mode == "joint" ? 1 : 0);
    out.psi.t_star = cfg.t_star;
    out.psi.site = cfg.site;
    return out;
}

}  // namespace xavdt
