#pragma once

#include <string>

#include "xavdt/tensor.hpp"

namespace xavdt {

struct VideoClip {
    TensorF frames;  // N x 3 x H x W, values in [0,1]
    double fps = 25.0;
    std::string clip_id;

    int64_t frame_count() const { return frames.rank() == 4 ? frames.dim(0) : 0; }
};

// Spatial gates at latent resolution, one map per frame. Weights are the
// fixed-mode aggregation coefficients; joint mode learns its own inside the
// detector and ignores these.
struct MaskSet {
    TensorF full, face, lip;  // N x h x w, each in [0,1]
    double w_full = 1.0, w_face = 0.0, w_lip = 0.0;
};

}  // namespace xavdt
