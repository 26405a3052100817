#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "xavdt/train.hpp"

namespace xavdt {

// Class-dependent feature statistics for detector training sanity runs: both
// streams draw every value from a Gaussian, and the first half of each
// stream's channels carries a class-signed mean of +-gap/2.
struct FeatureSetSpec {
    int64_t clips = 500;  // alternating real/fake
    int64_t frames = 4, height = 6, width = 6;
    int64_t phi_channels = 12, psi_channels = 8;
    double gap = 2.0;
    double sigma = 0.25;
    uint64_t seed = 1;
};

FeatureDataset make_feature_set(const FeatureSetSpec& spec);

// Toy on-disk corpus: root/<clip_id>/{meta.json, frames.xavf, audio.wav,
// roi.xavf}. Each pair is a smooth moving pattern (real) and the same pattern
// with a bright mouth-region artifact (fake). The first ceil(pairs/2) pairs
// land in train, the rest in test; fake generator tags cycle through the
// per-split lists so the splits never share one.
struct CorpusSpec {
    int64_t pairs = 4;
    int64_t frames = 8;  // at 25 fps
    int64_t height = 16, width = 16;
    int64_t mask_factor = 2;  // roi sidecar resolution = pixel / factor
    int64_t sample_rate = 16000;
    std::vector<std::string> train_generators = {"talking-head"};
    std::vector<std::string> test_generators = {"face-swap"};
    int64_t face_fail = 0;  // this many fakes get face_ok = false
    uint64_t seed = 7;
};

struct CorpusLayout {
    std::vector<std::string> clip_ids;
    std::vector<std::string> flagged;  // the face_ok = false subset
};

CorpusLayout write_toy_corpus(const std::string& root, const CorpusSpec& spec);

}  // namespace xavdt
