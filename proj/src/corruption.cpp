#include "xavdt/corruption.hpp"

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>

#include <jpeglib.h>

#include "xavdt/hash.hpp"
#include "xavdt/imageops.hpp"
#include "xavdt/rng.hpp"

namespace xavdt {

namespace {

constexpr double kPi = 3.14159265358979323846;

constexpr int kJpegQuality[4] = {90, 70, 50, 30};
constexpr double kBlurRadius[4] = {0.5, 1.0, 2.0, 3.0};
constexpr double kNoiseSigma[4] = {5.0 / 255.0, 10.0 / 255.0, 20.0 / 255.0, 35.0 / 255.0};
constexpr double kResizePct[4] = {75.0, 60.0, 50.0, 40.0};
constexpr double kDropProb[4] = {0.05, 0.10, 0.20, 0.30};
constexpr double kDesyncTau[2] = {-0.5, 0.5};
constexpr double kBitrateKbps[2] = {32.0, 8.0};

struct JpegErrorTrap {
    jpeg_error_mgr mgr;
    std::jmp_buf env;
    unsigned char* buf = nullptr;  // lives here so longjmp cannot clobber it
    unsigned long buf_size = 0;
};

void jpeg_trap_exit(j_common_ptr cinfo) {
    std::longjmp(reinterpret_cast<JpegErrorTrap*>(cinfo->err)->env, 1);
}

// Encode+decode one RGB8 frame in memory at the given quality.
void jpeg_roundtrip(std::vector<unsigned char>& rgb, int h, int w, int quality) {
    JpegErrorTrap trap;

    jpeg_compress_struct enc;
    enc.err = jpeg_std_error(&trap.mgr);
    trap.mgr.error_exit = jpeg_trap_exit;
    if (setjmp(trap.env)) {
        jpeg_destroy_compress(&enc);
        std::free(trap.buf);
        throw NumericError("jpeg encoder failed");
    }
    jpeg_create_compress(&enc);
    jpeg_mem_dest(&enc, &trap.buf, &trap.buf_size);
    enc.image_width = static_cast<JDIMENSION>(w);
    enc.image_height = static_cast<JDIMENSION>(h);
    enc.input_components = 3;
    enc.in_color_space = JCS_RGB;
    jpeg_set_defaults(&enc);
    jpeg_set_quality(&enc, quality, TRUE);
    jpeg_start_compress(&enc, TRUE);
    while (enc.next_scanline < enc.image_height) {
        JSAMPROW row = rgb.data() + static_cast<size_t>(enc.next_scanline) * w * 3;
        jpeg_write_scanlines(&enc, &row, 1);
    }
    jpeg_finish_compress(&enc);
    jpeg_destroy_compress(&enc);

    jpeg_decompress_struct dec;
    dec.err = jpeg_std_error(&trap.mgr);
    if (setjmp(trap.env)) {
        jpeg_destroy_decompress(&dec);
        std::free(trap.buf);
        throw NumericError("jpeg decoder failed");
    }
    jpeg_create_decompress(&dec);
    jpeg_mem_src(&dec, trap.buf, trap.buf_size);
    jpeg_read_header(&dec, TRUE);
    dec.out_color_space = JCS_RGB;
    jpeg_start_decompress(&dec);
    while (dec.output_scanline < dec.output_height) {
        JSAMPROW row = rgb.data() + static_cast<size_t>(dec.output_scanline) * w * 3;
        jpeg_read_scanlines(&dec, &row, 1);
    }
    jpeg_finish_decompress(&dec);
    jpeg_destroy_decompress(&dec);
    std::free(trap.buf);
}

void apply_jpeg(TensorF& frames, int quality) {
    const int64_t n = frames.dim(0), h = frames.dim(2), w = frames.dim(3);
    std::vector<unsigned char> rgb(static_cast<size_t>(h * w * 3));
    for (int64_t f = 0; f < n; ++f) {
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x)
                for (int64_t c = 0; c < 3; ++c) {
                    const float v = std::clamp(frames.at(f, c, y, x), 0.0f, 1.0f);
                    rgb[static_cast<size_t>((y * w + x) * 3 + c)] =
                        static_cast<unsigned char>(std::lround(v * 255.0f));
                }
        jpeg_roundtrip(rgb, static_cast<int>(h), static_cast<int>(w), quality);
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x)
                for (int64_t c = 0; c < 3; ++c)
                    frames.at(f, c, y, x) =
                        static_cast<float>(rgb[static_cast<size_t>((y * w + x) * 3 + c)]) / 255.0f;
    }
}

std::vector<double> gauss_taps(double sigma) {
    const int64_t r = std::max<int64_t>(1, static_cast<int64_t>(std::ceil(3.0 * sigma)));
    std::vector<double> taps(static_cast<size_t>(2 * r + 1));
    double sum = 0.0;
    for (int64_t i = -r; i <= r; ++i) {
        const double v = std::exp(-0.5 * (static_cast<double>(i) * i) / (sigma * sigma));
        taps[static_cast<size_t>(i + r)] = v;
        sum += v;
    }
    for (auto& t : taps) t /= sum;
    return taps;
}

void apply_blur(TensorF& frames, double sigma) {
    const int64_t n = frames.dim(0), ch = frames.dim(1), h = frames.dim(2), w = frames.dim(3);
    const auto taps = gauss_taps(sigma);
    const int64_t r = (static_cast<int64_t>(taps.size()) - 1) / 2;
    std::vector<double> tmp(static_cast<size_t>(h * w));
    for (int64_t f = 0; f < n; ++f)
        for (int64_t c = 0; c < ch; ++c) {
            float* plane = frames.data() + ((f * ch + c) * h) * w;
            for (int64_t y = 0; y < h; ++y)  // horizontal pass, clamp to edge
                for (int64_t x = 0; x < w; ++x) {
                    double acc = 0.0;
                    for (int64_t k = -r; k <= r; ++k) {
                        const int64_t xx = std::clamp<int64_t>(x + k, 0, w - 1);
                        acc += taps[static_cast<size_t>(k + r)] * plane[y * w + xx];
                    }
                    tmp[static_cast<size_t>(y * w + x)] = acc;
                }
            for (int64_t y = 0; y < h; ++y)  // vertical pass
                for (int64_t x = 0; x < w; ++x) {
                    double acc = 0.0;
                    for (int64_t k = -r; k <= r; ++k) {
                        const int64_t yy = std::clamp<int64_t>(y + k, 0, h - 1);
                        acc += taps[static_cast<size_t>(k + r)] * tmp[static_cast<size_t>(yy * w + x)];
                    }
                    plane[y * w + x] = static_cast<float>(acc);
                }
        }
}

// Each frame's noise stream is keyed by the frame's own (pre-noise) bytes, not
// by position: segmenting a clip renames it and duplicates its last frame as
// padding, and content keying is what keeps corrupt-then-segment bit-identical
// to segment-then-corrupt in the face of both.
void apply_noise(TensorF& frames, double sigma, uint64_t seed) {
    const int64_t n = frames.dim(0);
    const int64_t stride = frames.numel() / n;
    char key[20];
    for (int64_t f = 0; f < n; ++f) {
        float* plane = frames.data() + f * stride;
        const uint64_t content = fnv1a64(plane, static_cast<size_t>(stride) * sizeof(float));
        std::snprintf(key, sizeof key, "%016llx", static_cast<unsigned long long>(content));
        Rng rng(derive_seed(seed, std::string("corrupt.noise.") + key));
        for (int64_t i = 0; i < stride; ++i) {
            const double v = static_cast<double>(plane[i]) + sigma * rng.normal();
            plane[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
    }
}

void apply_resize(TensorF& frames, double pct) {
    const int64_t n = frames.dim(0), ch = frames.dim(1), h = frames.dim(2), w = frames.dim(3);
    const int64_t dh = std::max<int64_t>(1, static_cast<int64_t>(std::lround(h * pct / 100.0)));
    const int64_t dw = std::max<int64_t>(1, static_cast<int64_t>(std::lround(w * pct / 100.0)));
    TensorF plane({h, w});
    for (int64_t f = 0; f < n; ++f)
        for (int64_t c = 0; c < ch; ++c) {
            float* src = frames.data() + ((f * ch + c) * h) * w;
            std::copy(src, src + h * w, plane.data());
            const TensorF up = bilinear_resize_plane(bilinear_resize_plane(plane, dh, dw), h, w);
            std::copy(up.data(), up.data() + h * w, src);
        }
}

TensorF apply_frame_drop(const TensorF& frames, double p, uint64_t seed, const std::string& clip_id) {
    Rng rng(derive_seed(seed, "corrupt.drop." + clip_id));
    const int64_t n = frames.dim(0);
    std::vector<int64_t> keep;
    for (int64_t f = 0; f < n; ++f)
        if (rng.uniform() >= p) keep.push_back(f);
    if (keep.empty()) keep.push_back(0);  // never hand back an empty clip
    const int64_t stride = frames.numel() / n;
    TensorF out({static_cast<int64_t>(keep.size()), frames.dim(1), frames.dim(2), frames.dim(3)});
    for (size_t i = 0; i < keep.size(); ++i)
        std::copy(frames.data() + keep[i] * stride, frames.data() + (keep[i] + 1) * stride,
                  out.data() + static_cast<int64_t>(i) * stride);
    return out;
}

// Windowed-sinc low-pass (Hamming), used before decimation so supra-Nyquist
// content is attenuated instead of aliased.
std::vector<float> lowpass(const std::vector<float>& x, double cutoff_hz, int64_t sr) {
    const double fc = cutoff_hz / static_cast<double>(sr);  // normalized (0, 0.5)
    const int64_t half = std::max<int64_t>(8, static_cast<int64_t>(std::ceil(2.0 / fc)));
    std::vector<double> taps(static_cast<size_t>(2 * half + 1));
    double sum = 0.0;
    for (int64_t i = -half; i <= half; ++i) {
        const double t = static_cast<double>(i);
        const double sinc = i == 0 ? 2.0 * fc : std::sin(2.0 * kPi * fc * t) / (kPi * t);
        const double win = 0.54 + 0.46 * std::cos(kPi * t / static_cast<double>(half));
        taps[static_cast<size_t>(i + half)] = sinc * win;
        sum += sinc * win;
    }
    for (auto& t : taps) t /= sum;
    std::vector<float> y(x.size());
    const int64_t n = static_cast<int64_t>(x.size());
    for (int64_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int64_t k = -half; k <= half; ++k) {
            const int64_t j = std::clamp<int64_t>(i + k, 0, n - 1);
            acc += taps[static_cast<size_t>(k + half)] * x[static_cast<size_t>(j)];
        }
        y[static_cast<size_t>(i)] = static_cast<float>(acc);
    }
    return y;
}

std::vector<float> resample_linear(const std::vector<float>& x, int64_t out_n, double step) {
    std::vector<float> y(static_cast<size_t>(out_n));
    const int64_t n = static_cast<int64_t>(x.size());
    for (int64_t i = 0; i < out_n; ++i) {
        const double pos = static_cast<double>(i) * step;
        const int64_t j = std::min<int64_t>(static_cast<int64_t>(pos), n - 1);
        const int64_t j1 = std::min<int64_t>(j + 1, n - 1);
        const double frac = pos - static_cast<double>(j);
        y[static_cast<size_t>(i)] =
            static_cast<float>((1.0 - frac) * x[static_cast<size_t>(j)] + frac * x[static_cast<size_t>(j1)]);
    }
    return y;
}

std::vector<float> apply_bitrate(const std::vector<float>& wav, int64_t sr, double kbps) {
    // 8-bit mu-law companding: the byte budget fixes the carrier rate
    const int64_t target_sr = static_cast<int64_t>(kbps * 1000.0 / 8.0);
    if (target_sr >= sr) return wav;
    const int64_t down_n =
        std::max<int64_t>(2, static_cast<int64_t>(wav.size()) * target_sr / sr);
    std::vector<float> low = lowpass(wav, 0.45 * static_cast<double>(target_sr), sr);
    std::vector<float> down = resample_linear(low, down_n,
                                              static_cast<double>(wav.size()) / static_cast<double>(down_n));
    constexpr double mu = 255.0;
    for (auto& v : down) {
        const double x = std::clamp(static_cast<double>(v), -1.0, 1.0);
        const double y = std::copysign(std::log1p(mu * std::abs(x)) / std::log1p(mu), x);
        const double q = std::round(y * 127.0) / 127.0;  // 8-bit grid
        v = static_cast<float>(std::copysign((std::pow(1.0 + mu, std::abs(q)) - 1.0) / mu, q));
    }
    return resample_linear(down, static_cast<int64_t>(wav.size()),
                           static_cast<double>(down_n) / static_cast<double>(wav.size()));
}

}  // namespace

const std::vector<std::string>& CorruptionSpec::video_kinds() {
    static const std::vector<std::string> k{"jpeg", "blur", "noise", "resize", "frame_drop"};
    return k;
}

const std::vector<std::string>& CorruptionSpec::audio_kinds() {
    static const std::vector<std::string> k{"audio_desync", "audio_bitrate"};
    return k;
}

int CorruptionSpec::max_severity(const std::string& kind) {
    for (const auto& k : video_kinds())
        if (k == kind) return 4;
    for (const auto& k : audio_kinds())
        if (k == kind) return 2;
    throw ConfigError("unknown corruption kind '" + kind + "'");
}

void CorruptionSpec::validate() const {
    const int top = max_severity(kind);  // throws on unknown kind
    if (severity < 0 || severity > top)
        throw ConfigError("severity " + std::to_string(severity) + " is off the '" + kind +
                          "' ladder (0.." + std::to_string(top) + ")");
}

VideoClip corrupt_video(const VideoClip& clip, const CorruptionSpec& spec) {
    spec.validate();
    if (spec.is_audio())
        throw ConfigError("'" + spec.kind + "' corrupts the audio track, not video frames");
    if (clip.frames.rank() != 4 || clip.frames.dim(1) != 3)
        throw DataError("clip frames must be [N, 3, H, W]");
    VideoClip out = clip;
    if (spec.severity == 0) return out;
    const int idx = spec.severity - 1;
    if (spec.kind == "jpeg")
        apply_jpeg(out.frames, kJpegQuality[idx]);
    else if (spec.kind == "blur")
        apply_blur(out.frames, kBlurRadius[idx]);
    else if (spec.kind == "noise")
        apply_noise(out.frames, kNoiseSigma[idx], spec.seed);
    else if (spec.kind == "resize")
        apply_resize(out.frames, kResizePct[idx]);
    else
        out.frames = apply_frame_drop(clip.frames, kDropProb[idx], spec.seed, clip.clip_id);
    return out;
}

std::vector<float> corrupt_audio(const std::vector<float>& wav, int64_t sample_rate,
                                 const CorruptionSpec& spec) {
    spec.validate();
    if (!spec.is_audio())
        throw ConfigError("'" + spec.kind + "' corrupts video frames, not the audio track");
    if (sample_rate <= 0) throw DataError("sample rate must be positive");
    if (spec.severity == 0) return wav;
    const int idx = spec.severity - 1;

    if (spec.kind == "audio_desync") {
        const double tau = kDesyncTau[idx];
        const int64_t shift = static_cast<int64_t>(std::llround(std::abs(tau) * sample_rate));
        if (shift >= static_cast<int64_t>(wav.size()))
            throw DataError("desync offset covers the whole clip (" + std::to_string(shift) +
                            " samples of " + std::to_string(wav.size()) + ")");
        std::vector<float> out;
        if (tau > 0.0) {
            out.assign(static_cast<size_t>(shift), 0.0f);
            out.insert(out.end(), wav.begin(), wav.end());
        } else {
            out.assign(wav.begin() + shift, wav.end());
        }
        return out;
    }
    return apply_bitrate(wav, sample_rate, kBitrateKbps[idx]);
}

}  // namespace xavdt
