#include "xavdt/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "xavdt/audio.hpp"
#include "xavdt/rng.hpp"
#include "xavdt/xavf.hpp"

namespace fs = std::filesystem;

namespace xavdt {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::string clip_name(char prefix, int64_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%c%03lld", prefix, static_cast<long long>(i));
    return buf;
}

}  // namespace

FeatureDataset make_feature_set(const FeatureSetSpec& spec) {
    if (spec.clips < 2) throw ConfigError("a feature set needs at least one clip per class");
    if (spec.sigma <= 0.0) throw ConfigError("sigma must be positive");
    FeatureDataset out;
    out.samples.reserve(static_cast<size_t>(spec.clips));
    for (int64_t i = 0; i < spec.clips; ++i) {
        FeatureSample s;
        s.label = static_cast<int>(i % 2);
        char name[32];
        std::snprintf(name, sizeof name, "syn%04lld", static_cast<long long>(i));
        s.clip_id = name;
        Rng rng(derive_seed(spec.seed, std::string("synth.feat.") + name));
        const double shift = (s.label == 1 ? 0.5 : -0.5) * spec.gap;
        s.phi = TensorF({spec.phi_channels, spec.frames, spec.height, spec.width});
        s.psi = TensorF({spec.psi_channels, spec.frames, spec.height, spec.width});
        for (TensorF* t : {&s.phi, &s.psi}) {
            const int64_t carrying = t->dim(0) / 2;  // class-signed channels
            const int64_t per_channel = t->numel() / t->dim(0);
            for (int64_t c = 0; c < t->dim(0); ++c) {
                const double mean = c < carrying ? shift : 0.0;
                float* p = t->data() + c * per_channel;
                for (int64_t j = 0; j < per_channel; ++j)
                    p[j] = static_cast<float>(mean + spec.sigma * rng.normal());
            }
        }
        out.samples.push_back(std::move(s));
    }
    return out;
}

namespace {

// smooth moving pattern, distinct per pair; fakes add a bright lower-face
// artifact on top of their paired real
TensorF render_frames(const CorpusSpec& spec, int64_t pair, bool fake, Rng& rng) {
    TensorF frames({spec.frames, 3, spec.height, spec.width});
    const double phase = 0.37 * static_cast<double>(pair);
    for (int64_t n = 0; n < spec.frames; ++n)
        for (int64_t c = 0; c < 3; ++c)
            for (int64_t y = 0; y < spec.height; ++y)
                for (int64_t x = 0; x < spec.width; ++x) {
                    const double u = static_cast<double>(x) / static_cast<double>(spec.width);
                    const double v = static_cast<double>(y) / static_cast<double>(spec.height);
                    double val = 0.5 +
                                 0.22 * std::sin(2.0 * kPi * (u + 0.08 * static_cast<double>(n)) + phase) *
                                     std::cos(2.0 * kPi * v + 0.5 * static_cast<double>(c)) +
                                 0.02 * rng.normal();
                    frames.at(n, c, y, x) = static_cast<float>(std::clamp(val, 0.0, 1.0));
                }
    if (fake) {
        // mouth-region artifact: rows [H/2, 3H/4), cols [W/4, 3W/4)
        for (int64_t n = 0; n < spec.frames; ++n)
            for (int64_t c = 0; c < 3; ++c)
                for (int64_t y = spec.height / 2; y < 3 * spec.height / 4; ++y)
                    for (int64_t x = spec.width / 4; x < 3 * spec.width / 4; ++x) {
                        const double bump =
                            0.35 * std::sin(2.0 * kPi * static_cast<double>(n) / static_cast<double>(spec.frames));
                        frames.at(n, c, y, x) =
                            static_cast<float>(std::clamp(frames.at(n, c, y, x) + 0.25 + bump, 0.0, 1.0));
                    }
    }
    return frames;
}

TensorF render_roi(const CorpusSpec& spec) {
    const int64_t h = spec.height / spec.mask_factor, w = spec.width / spec.mask_factor;
    TensorF roi({3, spec.frames, h, w}, 0.0f);
    for (int64_t n = 0; n < spec.frames; ++n)
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x) {
                roi.at(0, n, y, x) = 1.0f;  // full
                const bool face = y >= h / 4 && y < 7 * h / 8 && x >= w / 4 && x < 3 * w / 4;
                const bool lip = y >= h / 2 && y < 3 * h / 4 && x >= w / 4 && x < 3 * w / 4;
                if (face) roi.at(1, n, y, x) = 1.0f;
                if (lip) roi.at(2, n, y, x) = 1.0f;
            }
    return roi;
}

std::vector<float> render_audio(const CorpusSpec& spec, int64_t pair, bool fake, Rng& rng) {
    const int64_t samples =
        spec.frames * spec.sample_rate / 25;  // honest duration at the fixed 25 fps
    std::vector<float> wav(static_cast<size_t>(samples));
    const double f0 = 140.0 + 12.0 * static_cast<double>(pair);
    const double detune = fake ? 1.17 : 1.0;  // fakes hum off-key
    for (int64_t i = 0; i < samples; ++i) {
        const double t = static_cast<double>(i) / static_cast<double>(spec.sample_rate);
        wav[static_cast<size_t>(i)] =
            static_cast<float>(0.4 * std::sin(2.0 * kPi * f0 * detune * t) + 0.02 * rng.normal());
    }
    return wav;
}

}  // namespace

CorpusLayout write_toy_corpus(const std::string& root, const CorpusSpec& spec) {
    if (spec.pairs < 1) throw ConfigError("corpus needs at least one pair");
    if (spec.mask_factor < 1 || spec.height % spec.mask_factor != 0 || spec.width % spec.mask_factor != 0)
        throw ConfigError("mask factor must divide the frame dims");
    if (spec.train_generators.empty() || spec.test_generators.empty())
        throw ConfigError("each split needs at least one generator tag");
    if (spec.face_fail > spec.pairs) throw ConfigError("cannot flag more fakes than there are pairs");

    const Sha256 corpus_hash = sha256("xavdt.toy.corpus.v1");
    const int64_t train_pairs = (spec.pairs + 1) / 2;
    CorpusLayout layout;

    for (int64_t p = 0; p < spec.pairs; ++p) {
        const bool in_train = p < train_pairs;
        const auto& tags = in_train ? spec.train_generators : spec.test_generators;
        const std::string generator = tags[static_cast<size_t>(p) % tags.size()];
        const std::string split = in_train ? "train" : "test";

        for (const bool fake : {false, true}) {
            const std::string id = clip_name(fake ? 'f' : 'r', p);
            const fs::path dir = fs::path(root) / id;
            fs::create_directories(dir);
            Rng rng(derive_seed(spec.seed, "synth.corpus." + id));

            write_xavf((dir / "frames.xavf").string(), render_frames(spec, p, fake, rng), corpus_hash);
            write_wav((dir / "audio.wav").string(), render_audio(spec, p, fake, rng), spec.sample_rate);
            write_xavf((dir / "roi.xavf").string(), render_roi(spec), corpus_hash);

            const bool flagged = fake && p < spec.face_fail;
            nlohmann::json meta{{"clip_id", id},
                                {"label", fake ? 1 : 0},
                                {"generator", fake ? generator : "source"},
                                {"split", split},
                                {"paired_real", fake ? clip_name('r', p) : ""},
                                {"duration_s", static_cast<double>(spec.frames) / 25.0},
                                {"short_side", std::min(spec.height, spec.width)},
                                {"face_ok", !flagged}};
            std::ofstream f(dir / "meta.json");
            if (!f) throw DataError("cannot write '" + (dir / "meta.json").string() + "'");
            f << meta.dump(2) << '\n';

            layout.clip_ids.push_back(id);
            if (flagged) layout.flagged.push_back(id);
        }
    }
    return layout;
}

}  // namespace xavdt
