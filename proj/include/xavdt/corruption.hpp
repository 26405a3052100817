#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "xavdt/clip.hpp"
#include "xavdt/errors.hpp"

namespace xavdt {

// One cell of the robustness protocol. Severity 0 is the identity for every
// kind; indices above it step through the fixed parameter ladder:
//   jpeg          quality        90, 70, 50, 30
//   blur          gauss radius   0.5, 1.0, 2.0, 3.0
//   noise         sigma (pixel)  5, 10, 20, 35   (of 255; clamped to [0,1])
//   resize        down-up scale  75%, 60%, 50%, 40% (bilinear both ways)
//   frame_drop    drop prob      0.05, 0.10, 0.20, 0.30 (no duplication)
//   audio_desync  offset tau     -0.5 s, +0.5 s
//   audio_bitrate cap            32 kbps, 8 kbps
struct CorruptionSpec {
    std::string kind;
    int severity = 0;
    uint64_t seed = 0;

    void validate() const;  // unknown kind or severity off the ladder
    bool is_audio() const { return kind == "audio_desync" || kind == "audio_bitrate"; }
    static const std::vector<std::string>& video_kinds();
    static const std::vector<std::string>& audio_kinds();
    static int max_severity(const std::string& kind);  // 4 video, 2 audio
};

// Stochastic kinds draw from deterministic streams: frame_drop is keyed by
// (spec.seed, clip.clip_id), noise per frame by (spec.seed, frame content).
// The same clip always gets the same corruption, and the frame-wise kinds
// (jpeg, blur, noise, resize) commute with segmentation.
VideoClip corrupt_video(const VideoClip& clip, const CorruptionSpec& spec);

// Desync shifts the waveform (+tau prepends silence, -tau trims the head;
// |tau| >= clip duration is an error). Bitrate caps are simulated:
// low-pass + resample down, 8-bit mu-law quantization, resample up.
std::vector<float> corrupt_audio(const std::vector<float>& wav, int64_t sample_rate,
                                 const CorruptionSpec& spec);

}  // namespace xavdt
