#pragma once

#include <string>
#include <vector>

#include "xavdt/clip.hpp"
#include "xavdt/features.hpp"
#include "xavdt/manifest.hpp"

namespace xavdt {

// On-disk store for extracted feature volumes, keyed by
//   <clip_id>.<kind>.<hash16>.xavf
// where hash16 is the first 16 hex chars of SHA-256 over the extraction
// config's description plus the run context (backend/codec identity). A key
// that exists but fails its stored-hash or checksum change is an error, never
// a silent recompute.
class FeatureCache {
public:
    // root: directory for cache files; "" consults $XAVDT_CACHE_ROOT.
    // context: free-form tag folded into the key hash so features produced by
    // different backends or codecs never collide.
    explicit FeatureCache(std::string root = "", std::string context = "");

    const std::string& root() const { return root_; }
    std::string key(const std::string& clip_id, const std::string& kind, const ExtractionConfig& cfg) const;
    std::string path(const std::string& clip_id, const std::string& kind, const ExtractionConfig& cfg) const;

    bool has(const std::string& clip_id, const ExtractionConfig& cfg);  // counts hits/misses
    void store(const std::string& clip_id, const ClipFeatures& features, const ExtractionConfig& cfg);
    ClipFeatures load(const std::string& clip_id, const ExtractionConfig& cfg);

    int64_t hits = 0, misses = 0;  // has() outcomes, for idempotence checks

private:
    std::string root_;
    std::string context_;
};

// One fully hydrated corpus clip: frames, waveform, and the mask sidecar
// (rank-0 tensors when the record has none; the caller substitutes
// full-frame gates at latent resolution).
struct CorpusClip {
    VideoClip video;
    std::vector<float> wav;
    int64_t sample_rate = 0;
    MaskSet masks;

    bool has_masks() const { return masks.full.rank() == 3; }
};

CorpusClip load_corpus_clip(const ManifestRecord& rec);

// All-pass gates: full = 1 everywhere, face/lip = 0 (the fixed-mode weights
// already point at full).
MaskSet default_masks(int64_t n, int64_t h, int64_t w);

}  // namespace xavdt
