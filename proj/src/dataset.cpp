#include "xavdt/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <filesystem>

#include "xavdt/audio.hpp"
#include "xavdt/xavf.hpp"

namespace fs = std::filesystem;

namespace xavdt {

namespace {

bool clean_token(const std::string& s) {
    if (s.empty()) return false;
    for (const char c : s)
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '.' && c != '_' && c != '-') return false;
    return true;
}

}  // namespace

FeatureCache::FeatureCache(std::string root, std::string context)
    : root_(std::move(root)), context_(std::move(context)) {
    if (root_.empty()) {
        const char* env = std::getenv("XAVDT_CACHE_ROOT");
        if (env == nullptr || *env == '\0')
            throw ConfigError("no cache root: pass one explicitly or set XAVDT_CACHE_ROOT");
        root_ = env;
    }
    fs::create_directories(root_);
}

std::string FeatureCache::key(const std::string& clip_id, const std::string& kind,
                              const ExtractionConfig& cfg) const {
    if (!clean_token(clip_id))
        throw ConfigError("cache key needs a clip id restricted to [A-Za-z0-9._-], got '" + clip_id + "'");
    if (kind != "phi" && kind != "psi") throw ConfigError("unknown feature kind '" + kind + "'");
    const Sha256 h = sha256(cfg.describe() + "|" + context_);
    return clip_id + "." + kind + "." + hex(h.data(), 8) + ".xavf";
}

std::string FeatureCache::path(const std::string& clip_id, const std::string& kind,
                               const ExtractionConfig& cfg) const {
    return (fs::path(root_) / key(clip_id, kind, cfg)).string();
}

bool FeatureCache::has(const std::string& clip_id, const ExtractionConfig& cfg) {
    const bool present =
        fs::exists(path(clip_id, "phi", cfg)) && fs::exists(path(clip_id, "psi", cfg));
    ++(present ? hits : misses);
    return present;
}

void FeatureCache::store(const std::string& clip_id, const ClipFeatures& features, const ExtractionConfig& cfg) {
    const Sha256 h = sha256(cfg.describe() + "|" + context_);
    write_xavf(path(clip_id, "phi", cfg), features.phi.data, h);
    write_xavf(path(clip_id, "psi", cfg), features.psi.data, h);
}

ClipFeatures FeatureCache::load(const std::string& clip_id, const ExtractionConfig& cfg) {
    const Sha256 h = sha256(cfg.describe() + "|" + context_);
    ClipFeatures out;
    out.phi.data = read_xavf<float>(path(clip_id, "phi", cfg), &h);
    out.psi.data = read_xavf<float>(path(clip_id, "psi", cfg), &h);
    out.psi.t_star = cfg.t_star;
    out.psi.site = cfg.site;
    out.padded_frames = out.phi.data.rank() == 4 ? out.phi.data.dim(0) : 0;
    return out;
}

CorpusClip load_corpus_clip(const ManifestRecord& rec) {
    CorpusClip out;
    out.video.frames = read_xavf<float>(rec.video_path);
    out.video.clip_id = rec.clip_id;
    if (out.video.frames.rank() != 4 || out.video.frames.dim(1) != 3)
        throw DataError("clip '" + rec.clip_id + "': frames are " + out.video.frames.shape_string() +
                        ", expected N x 3 x H x W");
    if (!rec.audio_path.empty()) out.wav = read_wav(rec.audio_path, &out.sample_rate);
    if (!rec.roi_path.empty()) {
        const TensorF roi = read_xavf<float>(rec.roi_path);
        if (roi.rank() != 4 || roi.dim(0) != 3 || roi.dim(1) != out.video.frame_count())
            throw DataError("clip '" + rec.clip_id + "': roi sidecar is " + roi.shape_string() +
                            ", expected 3 x " + std::to_string(out.video.frame_count()) + " x h x w");
        const int64_t n = roi.dim(1), h = roi.dim(2), w = roi.dim(3);
        const int64_t plane = n * h * w;
        TensorF* dst[3] = {&out.masks.full, &out.masks.face, &out.masks.lip};
        for (int m = 0; m < 3; ++m) {
            *dst[m] = TensorF({n, h, w});
            std::copy(roi.data() + m * plane, roi.data() + (m + 1) * plane, dst[m]->data());
        }
    }
    return out;
}

MaskSet default_masks(int64_t n, int64_t h, int64_t w) {
    if (n < 1 || h < 1 || w < 1) throw ConfigError("mask grid dims must be positive");
    MaskSet m;
    m.full = TensorF({n, h, w}, 1.0f);
    m.face = TensorF({n, h, w}, 0.0f);
    m.lip = TensorF({n, h, w}, 0.0f);
    return m;
}

}  // namespace xavdt
