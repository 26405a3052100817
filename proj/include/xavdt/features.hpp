#pragma once

#include <string>
#include <vector>

#include "xavdt/audio.hpp"
#include "xavdt/backends.hpp"
#include "xavdt/clip.hpp"
#include "xavdt/codec.hpp"
#include "xavdt/diffusion.hpp"

namespace xavdt {

// 12-channel per-frame stack [x | D(z_T) | D(z_0) | residual].
struct CompositeFeature {
    TensorF data;  // N x 12 x H x W
};

// Projected, mask-gated attention descriptor. Fixed mask mode: N x C x h x w.
// Joint mode keeps the three gated copies: 3 x N x C x h x w.
struct CrossAttnFeature {
    TensorF data;
    int64_t t_star = -1;
    std::string site;
};

struct SegmentPair {
    VideoClip video;        // exactly segment_len frames (last frame repeated as padding)
    AudioCondition audio;   // rows aligned with the padded frames
};

std::vector<SegmentPair> segment_clip(const VideoClip& clip, const AudioCondition& audio, int64_t segment_len = 16);

struct ExtractionConfig {
    ScheduleSpec schedule;      // traversal count/spacing come from here
    int64_t t_star = 24;
    std::string site = "up0.cross";
    int64_t segment_len = 16;
    int64_t ref_frame = 0;      // clip frame used for the reference pass
    std::string mask_mode = "fixed";  // fixed | joint

    std::string describe() const;  // canonical text, folded into cache hashes
};

struct InversionOutput {
    Latent z_T;
    HeadCapture psi_raw;
};

// Encode -> reference pass -> fine-to-coarse inversion, capturing the
// configured site's per-head output at t_star. Masks are validated against
// the latent grid here so gating cannot fail later mid-pipeline.
InversionOutput invert_and_capture(const VideoClip& x, const AudioCondition& c, const MaskSet& masks,
                                   const ExtractionConfig& cfg, const DenoiserBackend& backend,
                                   const LatentCodec& codec, const NoiseSchedule& sched);

// Coarse-to-fine deterministic reverse chain back to a clean latent.
Latent reconstruct(const Latent& z_T, const Condition& c, const DenoiserBackend& backend, const NoiseSchedule& sched,
                   const std::vector<int64_t>& grid);

CompositeFeature assemble_composite(const TensorF& x, const TensorF& decoded_noise, const TensorF& reconstruction);

// Collapses the head dimension with the capture site's output projection and
// lays tokens back onto the per-frame grid: N x C x h x w.
TensorF project_heads(const HeadCapture& raw);

// Weighted sum of element-wise gated copies (fixed mask mode).
CrossAttnFeature gate_and_aggregate(const TensorF& psi_tilde, const MaskSet& masks);

// The three gated copies, stacked (joint mask mode): 3 x N x C x h x w.
TensorF gate_stack(const TensorF& psi_tilde, const MaskSet& masks);

struct ClipFeatures {
    CompositeFeature phi;
    CrossAttnFeature psi;
    int64_t padded_frames = 0;  // frame count after segmentation padding
};

// Full extraction path for one clip: segmentation, inversion with capture,
// reconstruction, composite assembly, head projection, mask gating.
ClipFeatures extract_clip_features(const VideoClip& clip, const AudioCondition& audio, const MaskSet& masks,
                                   const ExtractionConfig& cfg, const DenoiserBackend& backend,
                                   const LatentCodec& codec, const NoiseSchedule& sched);

}  // namespace xavdt
