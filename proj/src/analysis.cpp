#include "xavdt/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "xavdt/imageops.hpp"

namespace xavdt {

void normalize_map(TensorD& map) {
    if (map.numel() == 0) throw DataError("cannot normalize an empty map");
    double lo = map[0], hi = map[0];
    for (int64_t i = 0; i < map.numel(); ++i) {
        if (!std::isfinite(map[i])) throw DataError("non-finite value in attention map");
        lo = std::min(lo, map[i]);
        hi = std::max(hi, map[i]);
    }
    if (hi == lo) {
        for (int64_t i = 0; i < map.numel(); ++i) map[i] = 0.5;
        return;
    }
    const double inv = 1.0 / (hi - lo);
    for (int64_t i = 0; i < map.numel(); ++i) map[i] = (map[i] - lo) * inv;
}

TensorD cam_from_volumes(const TensorD& act, const TensorD& grad, std::array<int64_t, 2> out_hw) {
    if (act.rank() != 4 || grad.rank() != 4)
        throw DataError("activation volumes must be [C, N, h, w]");
    if (act.shape() != grad.shape())
        throw DataError("activation shape " + act.shape_string() + " does not match gradient " +
                        grad.shape_string());
    const int64_t c = act.dim(0), n = act.dim(1), h = act.dim(2), w = act.dim(3);
    const int64_t plane = n * h * w;

    // channel weights: global average of the gradient over frames and space
    std::vector<double> wc(static_cast<size_t>(c));
    for (int64_t ch = 0; ch < c; ++ch) {
        double s = 0.0;
        const double* g = grad.data() + ch * plane;
        for (int64_t i = 0; i < plane; ++i) s += g[i];
        wc[static_cast<size_t>(ch)] = s / static_cast<double>(plane);
    }

    TensorD out({n, out_hw[0], out_hw[1]});
    for (int64_t f = 0; f < n; ++f) {
        TensorD cam({h, w});
        for (int64_t ch = 0; ch < c; ++ch) {
            const double* a = act.data() + (ch * n + f) * h * w;
            for (int64_t i = 0; i < h * w; ++i) cam[i] += wc[static_cast<size_t>(ch)] * a[i];
        }
        for (int64_t i = 0; i < h * w; ++i) cam[i] = std::max(cam[i], 0.0);  // rectify
        TensorD up = bilinear_resize_plane(cam, out_hw[0], out_hw[1]);
        normalize_map(up);
        std::copy(up.data(), up.data() + up.numel(), out.data() + f * out_hw[0] * out_hw[1]);
    }
    return out;
}

TensorD grad_cam(Predictor& pred, const FeatureSample& sample, int target_label,
                 const std::string& layer, std::array<int64_t, 2> out_hw) {
    auto [act_f, grad_f] = pred.probe_gradients(sample, target_label, layer);
    TensorD act(act_f.shape()), grad(grad_f.shape());
    for (int64_t i = 0; i < act_f.numel(); ++i) act[i] = static_cast<double>(act_f[i]);
    for (int64_t i = 0; i < grad_f.numel(); ++i) grad[i] = static_cast<double>(grad_f[i]);
    return cam_from_volumes(act, grad, out_hw);
}

TensorD temporal_attention_heatmap(const TensorD& frame_maps) {
    if (frame_maps.rank() != 3) throw DataError("expected [N, h, w] attention maps");
    const int64_t n = frame_maps.dim(0), h = frame_maps.dim(1), w = frame_maps.dim(2);
    if (n == 0) throw DataError("no frames to aggregate");
    TensorD mean({h, w});
    for (int64_t f = 0; f < n; ++f) {
        TensorD frame({h, w});
        std::copy(frame_maps.data() + f * h * w, frame_maps.data() + (f + 1) * h * w,
                  frame.data());
        normalize_map(frame);
        for (int64_t i = 0; i < h * w; ++i) mean[i] += frame[i];
    }
    for (int64_t i = 0; i < h * w; ++i) mean[i] /= static_cast<double>(n);
    return mean;
}

double topq_roi_coverage(const TensorD& attn, const TensorD& roi, double q) {
    if (!(q > 0.0 && q <= 1.0)) throw ConfigError("q must lie in (0, 1]");
    if (attn.shape() != roi.shape())
        throw DataError("attention map " + attn.shape_string() + " and roi " + roi.shape_string() +
                        " differ in shape");
    const int64_t n = attn.numel();
    double total = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        if (!std::isfinite(attn[i]) || attn[i] < 0.0)
            throw DataError("attention mass must be finite and non-negative");
        if (roi[i] != 0.0 && roi[i] != 1.0) throw DataError("roi mask must be binary");
        total += attn[i];
    }
    if (total <= 0.0) throw DataError("attention map carries zero mass");

    std::vector<int64_t> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
        if (attn[a] != attn[b]) return attn[a] > attn[b];
        return a < b;
    });

    const double target = q * total;
    double mass = 0.0;
    int64_t picked = 0, inside = 0;
    for (int64_t idx : order) {
        mass += attn[idx];
        ++picked;
        if (roi[idx] == 1.0) ++inside;
        if (mass >= target) break;
    }
    return static_cast<double>(inside) / static_cast<double>(picked);
}

TensorD delta_attention_map(const std::vector<TensorD>& real_maps,
                            const std::vector<TensorD>& fake_maps) {
    if (real_maps.empty() || fake_maps.empty())
        throw DataError("both map collections must be non-empty");
    const auto& shape = real_maps.front().shape();
    auto mean_of = [&](const std::vector<TensorD>& maps) {
        TensorD acc(shape);
        for (const auto& m : maps) {
            if (m.shape() != shape)
                throw DataError("map shape " + m.shape_string() + " does not match " +
                                real_maps.front().shape_string());
            TensorD norm = m;
            normalize_map(norm);
            acc += norm;
        }
        for (int64_t i = 0; i < acc.numel(); ++i) acc[i] /= static_cast<double>(maps.size());
        return acc;
    };
    TensorD fake = mean_of(fake_maps);
    const TensorD real = mean_of(real_maps);
    for (int64_t i = 0; i < fake.numel(); ++i) fake[i] -= real[i];
    return fake;
}

HfarReport human_fooling_rate(const std::vector<RaterResponse>& responses,
                              const std::map<std::string, int>& labels) {
    if (responses.empty()) throw DataError("no rater responses");
    std::map<std::string, std::pair<int64_t, int64_t>> votes;  // clip -> (real votes, fake votes)
    std::map<std::string, std::pair<int64_t, int64_t>> rater;  // rater -> (real votes, fakes seen)
    for (const auto& r : responses) {
        auto it = labels.find(r.clip_id);
        if (it == labels.end())
            throw DataError("response references unknown clip '" + r.clip_id + "'");
        if (r.verdict != 0 && r.verdict != 1)
            throw DataError("verdict must be 0 (real) or 1 (fake)");
        if (it->second != 1) continue;  // rate is defined over fake clips
        auto& v = votes[r.clip_id];
        (r.verdict == 0 ? v.first : v.second) += 1;
        auto& m = rater[r.rater_id];
        if (r.verdict == 0) m.first += 1;
        m.second += 1;
    }
    if (votes.empty()) throw DataError("no responses cover fake clips");

    HfarReport rep;
    rep.fake_clips = static_cast<int64_t>(votes.size());
    int64_t fooled = 0;
    for (const auto& [clip, v] : votes)
        if (v.first > v.second) ++fooled;  // strict majority judged it real
    rep.rate = static_cast<double>(fooled) / static_cast<double>(rep.fake_clips);
    for (const auto& [id, m] : rater)
        rep.per_rater[id] = static_cast<double>(m.first) / static_cast<double>(m.second);
    return rep;
}

std::vector<RaterResponse> load_rater_responses(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot read rater responses '" + path + "'");
    std::vector<RaterResponse> out;
    std::string line;
    int64_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream is(line);
        RaterResponse r;
        std::string verdict;
        if (!std::getline(is, r.rater_id, '\t') || !std::getline(is, r.clip_id, '\t') ||
            !std::getline(is, verdict) || r.rater_id.empty() || r.clip_id.empty())
            throw DataError("'" + path + "' line " + std::to_string(lineno) +
                            ": expected rater_id<TAB>clip_id<TAB>verdict");
        if (verdict == "fake")
            r.verdict = 1;
        else if (verdict == "real")
            r.verdict = 0;
        else
            throw DataError("'" + path + "' line " + std::to_string(lineno) + ": verdict '" + verdict +
                            "' is neither real nor fake");
        out.push_back(std::move(r));
    }
    return out;
}

void write_pgm(const std::string& path, const TensorD& map) {
    if (map.rank() != 2) throw DataError("pgm writer expects a [H, W] map");
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw DataError("cannot open '" + path + "' for writing");
    std::fprintf(f, "P5\n%lld %lld\n255\n", static_cast<long long>(map.dim(1)),
                 static_cast<long long>(map.dim(0)));
    for (int64_t i = 0; i < map.numel(); ++i) {
        const double v = std::clamp(map[i], 0.0, 1.0);
        const unsigned char b = static_cast<unsigned char>(std::lround(v * 255.0));
        std::fputc(b, f);
    }
    std::fclose(f);
}

}  // namespace xavdt
