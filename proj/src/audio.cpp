#include "xavdt/audio.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "xavdt/errors.hpp"
#include "xavdt/rng.hpp"

namespace xavdt {

namespace {
constexpr double kPi = 3.14159265358979323846;

double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }
}  // namespace

std::string AudioEmbedderConfig::id() const {
    std::ostringstream os;
    os << "melstack[sr=" << sample_rate << ",win=" << window << ",mels=" << n_mels << ",layers=" << layers
       << ",dim=" << layer_dim << ",seed=" << seed << "]";
    return os.str();
}

AudioEmbedder::AudioEmbedder(const AudioEmbedderConfig& cfg) : cfg_(cfg) {
    if (cfg.window < 4 || cfg.window % 2 != 0) throw ConfigError("audio embedder: window must be even and >= 4");
    if (cfg.n_mels < 1 || cfg.layers < 1 || cfg.layer_dim < 1)
        throw ConfigError("audio embedder: n_mels, layers, layer_dim must be positive");

    // triangular mel filters over the magnitude-spectrum bins
    const int64_t bins = cfg.window / 2 + 1;
    mel_weights_ = TensorD({cfg.n_mels, bins}, 0.0);
    const double mel_lo = hz_to_mel(0.0), mel_hi = hz_to_mel(static_cast<double>(cfg.sample_rate) / 2.0);
    std::vector<double> centers(static_cast<size_t>(cfg.n_mels) + 2);
    for (size_t i = 0; i < centers.size(); ++i) {
        const double mel = mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) / static_cast<double>(cfg.n_mels + 1);
        centers[i] = mel_to_hz(mel);
    }
    for (int64_t m = 0; m < cfg.n_mels; ++m) {
        const double lo = centers[static_cast<size_t>(m)], mid = centers[static_cast<size_t>(m) + 1],
                     hi = centers[static_cast<size_t>(m) + 2];
        for (int64_t b = 0; b < bins; ++b) {
            const double f = static_cast<double>(b) * static_cast<double>(cfg.sample_rate) /
                             static_cast<double>(cfg.window);
            double w = 0.0;
            if (f > lo && f < mid) w = (f - lo) / (mid - lo);
            else if (f >= mid && f < hi) w = (hi - f) / (hi - mid);
            mel_weights_.at(m, b) = w;
        }
    }

    layer_w_.reserve(static_cast<size_t>(cfg.layers));
    layer_b_.reserve(static_cast<size_t>(cfg.layers));
    for (int64_t l = 0; l < cfg.layers; ++l) {
        const int64_t in = (l == 0) ? cfg.n_mels : cfg.layer_dim;
        TensorD w({in, cfg.layer_dim}, 0.0), b({cfg.layer_dim}, 0.0);
        Rng rng(derive_seed(cfg.seed, "audio.layer" + std::to_string(l)));
        rng.fill_normal(w, 0.0, 1.0 / std::sqrt(static_cast<double>(in)));
        rng.fill_normal(b, 0.0, 0.1);
        layer_w_.push_back(std::move(w));
        layer_b_.push_back(std::move(b));
    }
}

TensorD AudioEmbedder::layered_features(const std::vector<float>& wav, int64_t sample_rate, int64_t frames,
                                        double fps) const {
    if (frames < 1) throw DataError("audio embedder: frame count must be positive");
    if (fps <= 0.0) throw DataError("audio embedder: fps must be positive");
    if (sample_rate != cfg_.sample_rate)
        throw DataError("audio embedder: sample rate " + std::to_string(sample_rate) + " != configured " +
                        std::to_string(cfg_.sample_rate));

    const int64_t bins = cfg_.window / 2 + 1;
    TensorD out({cfg_.layers, frames, cfg_.layer_dim}, 0.0);
    std::vector<double> windowed(static_cast<size_t>(cfg_.window));
    std::vector<double> power(static_cast<size_t>(bins));

    for (int64_t f = 0; f < frames; ++f) {
        const int64_t center = static_cast<int64_t>(
            std::llround((static_cast<double>(f) + 0.5) / fps * static_cast<double>(sample_rate)));
        for (int64_t i = 0; i < cfg_.window; ++i) {
            const int64_t s = center - cfg_.window / 2 + i;
            const double x = (s >= 0 && s < static_cast<int64_t>(wav.size())) ? wav[static_cast<size_t>(s)] : 0.0;
            const double hann =
                0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(i) / static_cast<double>(cfg_.window - 1));
            windowed[static_cast<size_t>(i)] = x * hann;
        }
        for (int64_t b = 0; b < bins; ++b) {
            double re = 0.0, im = 0.0;
            const double w = 2.0 * kPi * static_cast<double>(b) / static_cast<double>(cfg_.window);
            for (int64_t i = 0; i < cfg_.window; ++i) {
                re += windowed[static_cast<size_t>(i)] * std::cos(w * static_cast<double>(i));
                im -= windowed[static_cast<size_t>(i)] * std::sin(w * static_cast<double>(i));
            }
            power[static_cast<size_t>(b)] = re * re + im * im;
        }

        std::vector<double> h(static_cast<size_t>(cfg_.n_mels));
        for (int64_t m = 0; m < cfg_.n_mels; ++m) {
            double acc = 0.0;
            for (int64_t b = 0; b < bins; ++b) acc += mel_weights_.at(m, b) * power[static_cast<size_t>(b)];
            h[static_cast<size_t>(m)] = std::log1p(acc);
        }

        for (int64_t l = 0; l < cfg_.layers; ++l) {
            const TensorD& w = layer_w_[static_cast<size_t>(l)];
            const TensorD& bvec = layer_b_[static_cast<size_t>(l)];
            std::vector<double> next(static_cast<size_t>(cfg_.layer_dim));
            for (int64_t j = 0; j < cfg_.layer_dim; ++j) {
                double acc = bvec[j];
                for (int64_t i = 0; i < w.dim(0); ++i) acc += h[static_cast<size_t>(i)] * w.at(i, j);
                next[static_cast<size_t>(j)] = std::tanh(acc);
            }
            h = std::move(next);
            for (int64_t j = 0; j < cfg_.layer_dim; ++j) out.at(l, f, j) = h[static_cast<size_t>(j)];
        }
    }
    return out;
}

AudioCondition audio_context(const TensorD& layered, const AudioContextConfig& cfg) {
    if (layered.rank() != 3)
        throw DataError("audio context: expected layers x frames x dim, got " + layered.shape_string());
    const int64_t layers = layered.dim(0), frames = layered.dim(1), dim = layered.dim(2);
    if (layers < cfg.last_k)
        throw DataError("audio context: " + std::to_string(layers) + " layers available, " +
                        std::to_string(cfg.last_k) + " requested");
    if (cfg.context < 1 || cfg.context % 2 == 0) throw ConfigError("audio context: window must be odd and positive");

    const int64_t concat_dim = cfg.last_k * dim;
    const int64_t stacked_dim = cfg.context * concat_dim;

    // per frame: concat the last K layers, then stack the local window with
    // edge replication at clip boundaries
    TensorD stacked({frames, stacked_dim}, 0.0);
    for (int64_t f = 0; f < frames; ++f)
        for (int64_t wslot = 0; wslot < cfg.context; ++wslot) {
            int64_t src = f + wslot - cfg.context / 2;
            src = std::min(std::max<int64_t>(src, 0), frames - 1);
            for (int64_t k = 0; k < cfg.last_k; ++k) {
                const int64_t layer = layers - cfg.last_k + k;
                for (int64_t j = 0; j < dim; ++j)
                    stacked.at(f, wslot * concat_dim + k * dim + j) = layered.at(layer, src, j);
            }
        }

    AudioCondition cond;
    std::ostringstream prov;
    prov << "lastK=" << cfg.last_k << ",window=" << cfg.context << ",out=" << cfg.out_dim << ",seed=" << cfg.seed;
    cond.provenance = prov.str();

    if (cfg.identity_projection) {
        if (cfg.out_dim != stacked_dim)
            throw ConfigError("audio context: identity projection needs out_dim == " + std::to_string(stacked_dim));
        cond.tokens = std::move(stacked);
        return cond;
    }

    TensorD proj({stacked_dim, cfg.out_dim}, 0.0);
    Rng rng(derive_seed(cfg.seed, "audio.context.proj"));
    rng.fill_normal(proj, 0.0, 1.0 / std::sqrt(static_cast<double>(stacked_dim)));
    cond.tokens = TensorD({frames, cfg.out_dim}, 0.0);
    for (int64_t f = 0; f < frames; ++f)
        for (int64_t j = 0; j < cfg.out_dim; ++j) {
            double acc = 0.0;
            for (int64_t i = 0; i < stacked_dim; ++i) acc += stacked.at(f, i) * proj.at(i, j);
            cond.tokens.at(f, j) = acc;
        }
    return cond;
}

namespace {

void put_u32(std::string& s, uint32_t v) {
    for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u16(std::string& s, uint16_t v) {
    for (int i = 0; i < 2; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
uint32_t get_u32(const uint8_t* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) | (static_cast<uint32_t>(p[2]) << 16) |
           (static_cast<uint32_t>(p[3]) << 24);
}
uint16_t get_u16(const uint8_t* p) { return static_cast<uint16_t>(p[0] | (p[1] << 8)); }

}  // namespace

std::vector<float> read_wav(const std::string& path, int64_t* sample_rate) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("wav: cannot open: " + path);
    std::vector<uint8_t> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (buf.size() < 44 || std::memcmp(buf.data(), "RIFF", 4) != 0 || std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
        throw DataError("wav: not a RIFF/WAVE file: " + path);

    size_t off = 12;
    int64_t sr = 0;
    uint16_t channels = 0, bits = 0;
    std::vector<float> samples;
    bool got_fmt = false, got_data = false;
    while (off + 8 <= buf.size()) {
        const char* tag = reinterpret_cast<const char*>(buf.data() + off);
        const uint32_t len = get_u32(buf.data() + off + 4);
        off += 8;
        if (off + len > buf.size()) throw DataError("wav: truncated chunk: " + path);
        if (std::memcmp(tag, "fmt ", 4) == 0) {
            if (len < 16) throw DataError("wav: short fmt chunk: " + path);
            const uint16_t format = get_u16(buf.data() + off);
            channels = get_u16(buf.data() + off + 2);
            sr = get_u32(buf.data() + off + 4);
            bits = get_u16(buf.data() + off + 14);
            if (format != 1 || bits != 16) throw DataError("wav: only 16-bit PCM supported: " + path);
            if (channels != 1) throw DataError("wav: only mono supported: " + path);
            got_fmt = true;
        } else if (std::memcmp(tag, "data", 4) == 0) {
            if (!got_fmt) throw DataError("wav: data before fmt: " + path);
            samples.resize(len / 2);
            for (size_t i = 0; i < samples.size(); ++i) {
                const int16_t v = static_cast<int16_t>(buf[off + 2 * i] | (buf[off + 2 * i + 1] << 8));
                samples[i] = static_cast<float>(v) / 32768.0f;
            }
            got_data = true;
        }
        off += len + (len & 1);
    }
    if (!got_fmt || !got_data) throw DataError("wav: missing fmt or data chunk: " + path);
    if (sample_rate) *sample_rate = sr;
    return samples;
}

void write_wav(const std::string& path, const std::vector<float>& samples, int64_t sample_rate) {
    std::string out;
    const uint32_t data_len = static_cast<uint32_t>(samples.size() * 2);
    out.append("RIFF");
    put_u32(out, 36 + data_len);
    out.append("WAVE");
    out.append("fmt ");
    put_u32(out, 16);
    put_u16(out, 1);  // PCM
    put_u16(out, 1);  // mono
    put_u32(out, static_cast<uint32_t>(sample_rate));
    put_u32(out, static_cast<uint32_t>(sample_rate * 2));  // byte rate
    put_u16(out, 2);                                       // block align
    put_u16(out, 16);                                      // bits
    out.append("data");
    put_u32(out, data_len);
    for (float s : samples) {
        const double clamped = std::max(-1.0, std::min(1.0, static_cast<double>(s)));
        const int16_t v = static_cast<int16_t>(std::lround(clamped * 32767.0));
        out.push_back(static_cast<char>(v & 0xff));
        out.push_back(static_cast<char>((v >> 8) & 0xff));
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("wav: cannot open for write: " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw DataError("wav: short write: " + path);
}

}  // namespace xavdt
