#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "xavdt/errors.hpp"
#include "xavdt/tensor.hpp"
#include "xavdt/train.hpp"

namespace xavdt {

// Map normalization used throughout: per-map min-max to [0,1]. A flat map
// normalizes to 0.5 everywhere, which keeps the convention invariant under
// shared shifts and positive scales.
void normalize_map(TensorD& map);

// Channel-weighted, rectified class-activation map. `act` and `grad` are the
// captured volume and its gradient, both [C, N, h, w]; each frame is
// bilinearly upsampled to out_hw and min-max normalized.
TensorD cam_from_volumes(const TensorD& act, const TensorD& grad, std::array<int64_t, 2> out_hw);

// End-to-end localization probe on a trained detector. `layer` names a fused
// volume: "fused" (after attention, entering the conv stack) or "block.<i>".
// target_label ∈ {0,1} picks the logit direction. Returns [N, H, W] in [0,1].
TensorD grad_cam(Predictor& pred, const FeatureSample& sample, int target_label,
                 const std::string& layer, std::array<int64_t, 2> out_hw);

// Per-frame min-max normalization followed by the temporal mean: [N,h,w] -> [h,w].
TensorD temporal_attention_heatmap(const TensorD& frame_maps);

// Fraction of the smallest pixel set carrying >= q of total attention mass
// that falls inside the binary roi (greedy descending, ties by flat index).
double topq_roi_coverage(const TensorD& attn, const TensorD& roi, double q);

// mean(fake) - mean(real), each map normalized first. All maps share [h,w].
TensorD delta_attention_map(const std::vector<TensorD>& real_maps,
                            const std::vector<TensorD>& fake_maps);

struct RaterResponse {
    std::string rater_id;
    std::string clip_id;
    int verdict = 0;  // 1 = judged fake, 0 = judged real
};

struct HfarReport {
    double rate = 0.0;  // fraction of fake clips whose majority verdict is "real"
    std::map<std::string, double> per_rater;  // micro rate: fakes this rater judged real
    int64_t fake_clips = 0;
};

// Human false-acceptance rate over fake clips; `labels` maps clip_id -> {0,1}.
HfarReport human_fooling_rate(const std::vector<RaterResponse>& responses,
                              const std::map<std::string, int>& labels);

// Study file: one "rater_id<TAB>clip_id<TAB>verdict" line per response, with
// verdict spelled "real" or "fake". Blank lines and #-comments are skipped.
std::vector<RaterResponse> load_rater_responses(const std::string& path);

// Grayscale map in [0,1] written as a binary PGM (P5), 8-bit.
void write_pgm(const std::string& path, const TensorD& map);

}  // namespace xavdt
