#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "xavdt/analysis.hpp"
#include "xavdt/rng.hpp"

using namespace xavdt;

namespace {

TensorD map_of(std::initializer_list<double> vals, int64_t h, int64_t w) {
    TensorD m({h, w});
    int64_t i = 0;
    for (double v : vals) m[i++] = v;
    return m;
}

DetectorConfig probe_config() {
    DetectorConfig cfg;
    cfg.phi_channels = 4;
    cfg.psi_channels = 2;
    cfg.encoder_channels = 4;
    cfg.encoder_layers = 1;
    cfg.encoder_groups = 1;
    cfg.v_spatial_stride = 1;
    cfg.fused_channels = 4;
    cfg.attn_heads = 2;
    cfg.conv_stack = 2;
    cfg.block_groups = 2;
    cfg.embed_dim = 2;
    cfg.batch = 4;
    cfg.epochs = 1;
    cfg.lr = 1e-3;
    cfg.seed = 0x90b;
    return cfg;
}

FeatureDataset probe_dataset() {
    Rng rng(0xfeed);
    FeatureDataset ds;
    for (int i = 0; i < 4; ++i) {
        FeatureSample s;
        s.label = i % 2;
        s.clip_id = "clip" + std::to_string(i);
        s.phi = TensorF({4, 2, 3, 3});
        s.psi = TensorF({2, 2, 3, 3});
        rng.fill_normal(s.phi, s.label ? 1.0 : -1.0, 0.5);
        rng.fill_normal(s.psi, 0.0, 0.5);
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

}  // namespace

TEST_CASE("map normalization") {
    SUBCASE("min-max to the unit interval") {
        TensorD m = map_of({0.0, 1.0, 3.0}, 1, 3);
        normalize_map(m);
        CHECK(m[0] == 0.0);
        CHECK(m[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
        CHECK(m[2] == 1.0);
    }
    SUBCASE("flat maps settle at one half") {
        TensorD m = map_of({2.5, 2.5, 2.5, 2.5}, 2, 2);
        normalize_map(m);
        for (int64_t i = 0; i < 4; ++i) CHECK(m[i] == 0.5);
        TensorD z({2, 2});
        normalize_map(z);
        CHECK(z[0] == 0.5);
    }
    SUBCASE("rejects empty and non-finite") {
        TensorD e;
        CHECK_THROWS_AS(normalize_map(e), DataError);
        TensorD bad = map_of({1.0, std::nan("")}, 1, 2);
        CHECK_THROWS_AS(normalize_map(bad), DataError);
    }
}

TEST_CASE("class activation maps from captured volumes") {
    SUBCASE("uniform activation with uniform gradient is a uniform heatmap") {
        TensorD act({3, 2, 2, 2}, 2.0);
        TensorD grad({3, 2, 2, 2}, 0.5);
        const TensorD cam = cam_from_volumes(act, grad, {4, 4});
        CHECK(cam.shape() == std::vector<int64_t>{2, 4, 4});
        for (int64_t i = 0; i < cam.numel(); ++i) CHECK(cam[i] == 0.5);
    }
    SUBCASE("single-channel hand weighting") {
        TensorD act({1, 1, 2, 2});
        act[0] = 1.0;
        act[1] = 2.0;
        act[2] = 3.0;
        act[3] = 4.0;
        TensorD grad({1, 1, 2, 2}, 0.4);  // channel weight = mean grad = 0.4
        const TensorD cam = cam_from_volumes(act, grad, {2, 2});
        // cam = 0.4 * act, then min-max: {0, 1/3, 2/3, 1}
        CHECK(cam[0] == doctest::Approx(0.0).epsilon(1e-15));
        CHECK(cam[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
        CHECK(cam[2] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
        CHECK(cam[3] == doctest::Approx(1.0).epsilon(1e-15));
    }
    SUBCASE("negative channel weights are rectified away") {
        TensorD act({1, 1, 2, 2});
        act[0] = 5.0;  // only positive activations, but the gradient points down
        act[1] = 1.0;
        TensorD grad({1, 1, 2, 2}, -1.0);
        const TensorD cam = cam_from_volumes(act, grad, {2, 2});
        for (int64_t i = 0; i < 4; ++i) CHECK(cam[i] == 0.5);  // all clipped to zero, flat
    }
    SUBCASE("values stay inside the unit interval") {
        Rng rng(0xcab);
        TensorD act({5, 3, 4, 4}), grad({5, 3, 4, 4});
        rng.fill_normal(act);
        rng.fill_normal(grad);
        const TensorD cam = cam_from_volumes(act, grad, {8, 8});
        for (int64_t i = 0; i < cam.numel(); ++i) {
            CHECK(cam[i] >= 0.0);
            CHECK(cam[i] <= 1.0);
        }
    }
    SUBCASE("upsampling runs before normalization") {
        TensorD act({1, 1, 1, 2});
        act[0] = 0.0;
        act[1] = 1.0;
        TensorD grad({1, 1, 1, 2}, 1.0);
        const TensorD cam = cam_from_volumes(act, grad, {1, 4});
        // bilinear stretch of {0,1}: clamped edges, interior samples at 0.25/0.75
        CHECK(cam[0] == 0.0);
        CHECK(cam[3] == 1.0);
        CHECK(cam[1] == doctest::Approx(0.25).epsilon(1e-12));
        CHECK(cam[2] == doctest::Approx(0.75).epsilon(1e-12));
    }
    SUBCASE("shape validation") {
        TensorD a({1, 1, 2, 2}), g({1, 1, 2, 3});
        CHECK_THROWS_AS(cam_from_volumes(a, g, {2, 2}), DataError);
        CHECK_THROWS_AS(cam_from_volumes(TensorD({2, 2}), TensorD({2, 2}), {2, 2}), DataError);
    }
}

TEST_CASE("localization probe on a trained detector") {
    const Checkpoint ckpt = train(probe_dataset(), probe_config());
    Predictor pred(ckpt);
    const FeatureSample sample = probe_dataset().samples[1];

    for (const std::string layer : {"fused", "block.0", "block.1"}) {
        CAPTURE(layer);
        const TensorD cam = grad_cam(pred, sample, 1, layer, {6, 6});
        CHECK(cam.shape() == std::vector<int64_t>{2, 6, 6});
        for (int64_t i = 0; i < cam.numel(); ++i) {
            CHECK(cam[i] >= 0.0);
            CHECK(cam[i] <= 1.0);
        }
    }
    SUBCASE("probe is repeatable and leaves the model clean") {
        const TensorD a = grad_cam(pred, sample, 1, "block.0", {3, 3});
        const double score0 = pred.predict(sample).first;
        const TensorD b = grad_cam(pred, sample, 1, "block.0", {3, 3});
        for (int64_t i = 0; i < a.numel(); ++i) CHECK(a[i] == b[i]);
        CHECK(pred.predict(sample).first == score0);
    }
    SUBCASE("target changes the map") {
        const TensorD pos = grad_cam(pred, sample, 1, "fused", {3, 3});
        const TensorD neg = grad_cam(pred, sample, 0, "fused", {3, 3});
        bool differs = false;
        for (int64_t i = 0; i < pos.numel() && !differs; ++i) differs = pos[i] != neg[i];
        CHECK(differs);
    }
    SUBCASE("unknown layer and bad target") {
        CHECK_THROWS_AS(grad_cam(pred, sample, 1, "block.9", {3, 3}), ConfigError);
        CHECK_THROWS_AS(grad_cam(pred, sample, 1, "logits", {3, 3}), ConfigError);
        CHECK_THROWS_AS(grad_cam(pred, sample, 2, "fused", {3, 3}), ConfigError);
    }
}

TEST_CASE("temporal aggregation of attention maps") {
    SUBCASE("single frame passes through normalized") {
        TensorD maps({1, 1, 3});
        maps[0] = 0.0;
        maps[1] = 2.0;
        maps[2] = 4.0;
        const TensorD h = temporal_attention_heatmap(maps);
        CHECK(h.shape() == std::vector<int64_t>{1, 3});
        CHECK(h[0] == 0.0);
        CHECK(h[1] == 0.5);
        CHECK(h[2] == 1.0);
    }
    SUBCASE("two identical frames equal one") {
        TensorD maps({2, 1, 2});
        maps[0] = 1.0;
        maps[1] = 3.0;
        maps[2] = 1.0;
        maps[3] = 3.0;
        const TensorD h = temporal_attention_heatmap(maps);
        CHECK(h[0] == 0.0);
        CHECK(h[1] == 1.0);
    }
    SUBCASE("two hand frames average their normalized maps") {
        TensorD maps({2, 1, 3});
        // frame 0: {0,1,2} -> {0, .5, 1}; frame 1: {2,2,6} -> {0, 0, 1}
        maps[0] = 0.0;
        maps[1] = 1.0;
        maps[2] = 2.0;
        maps[3] = 2.0;
        maps[4] = 2.0;
        maps[5] = 6.0;
        const TensorD h = temporal_attention_heatmap(maps);
        CHECK(h[0] == 0.0);
        CHECK(h[1] == 0.25);
        CHECK(h[2] == 1.0);
    }
    SUBCASE("empty sequence") {
        CHECK_THROWS_AS(temporal_attention_heatmap(TensorD({0, 2, 2})), DataError);
        CHECK_THROWS_AS(temporal_attention_heatmap(TensorD({2, 2})), DataError);
    }
}

TEST_CASE("top-mass roi coverage") {
    SUBCASE("all mass on one in-roi pixel") {
        const TensorD attn = map_of({0.0, 5.0, 0.0, 0.0}, 2, 2);
        const TensorD roi = map_of({0.0, 1.0, 0.0, 0.0}, 2, 2);
        CHECK(topq_roi_coverage(attn, roi, 0.5) == 1.0);
    }
    SUBCASE("uniform map over a half-covering roi at q=1") {
        const TensorD attn = map_of({1.0, 1.0, 1.0, 1.0}, 2, 2);
        const TensorD roi = map_of({1.0, 1.0, 0.0, 0.0}, 2, 2);
        CHECK(topq_roi_coverage(attn, roi, 1.0) == 0.5);
    }
    SUBCASE("four-pixel hand case") {
        const TensorD attn = map_of({0.4, 0.3, 0.2, 0.1}, 1, 4);
        const TensorD roi = map_of({1.0, 1.0, 0.0, 0.0}, 1, 4);
        CHECK(topq_roi_coverage(attn, roi, 0.7) == 1.0);
    }
    SUBCASE("positive scaling changes nothing") {
        Rng rng(0x70b);
        TensorD attn({5, 5}), roi({5, 5});
        for (int64_t i = 0; i < 25; ++i) {
            attn[i] = rng.uniform() + 0.01;
            roi[i] = rng.uniform() < 0.4 ? 1.0 : 0.0;
        }
        const double base = topq_roi_coverage(attn, roi, 0.6);
        for (double s : {7.25, 0.03125, 256.0}) {
            TensorD scaled = attn;
            for (int64_t i = 0; i < 25; ++i) scaled[i] *= s;
            CHECK(topq_roi_coverage(scaled, roi, 0.6) == base);
        }
    }
    SUBCASE("tie-break by index is deterministic") {
        const TensorD attn = map_of({0.5, 0.5, 0.5, 0.5}, 1, 4);
        const TensorD roi = map_of({1.0, 0.0, 0.0, 0.0}, 1, 4);
        // q=0.5 needs two pixels; ties resolve to indices 0,1 -> one inside
        CHECK(topq_roi_coverage(attn, roi, 0.5) == 0.5);
    }
    SUBCASE("validation") {
        const TensorD attn = map_of({1.0, 1.0}, 1, 2);
        const TensorD roi = map_of({1.0, 0.0}, 1, 2);
        CHECK_THROWS_AS(topq_roi_coverage(attn, roi, 0.0), ConfigError);
        CHECK_THROWS_AS(topq_roi_coverage(attn, roi, 1.5), ConfigError);
        CHECK_THROWS_AS(topq_roi_coverage(map_of({0.0, 0.0}, 1, 2), roi, 0.5), DataError);
        CHECK_THROWS_AS(topq_roi_coverage(map_of({-1.0, 2.0}, 1, 2), roi, 0.5), DataError);
        CHECK_THROWS_AS(topq_roi_coverage(attn, map_of({0.5, 1.0}, 1, 2), 0.5), DataError);
        CHECK_THROWS_AS(topq_roi_coverage(attn, map_of({1.0, 0.0, 0.0}, 1, 3), 0.5), DataError);
    }
}

TEST_CASE("differential attention maps") {
    SUBCASE("identical populations cancel") {
        const TensorD m = map_of({0.0, 1.0, 2.0, 3.0}, 2, 2);
        const TensorD d = delta_attention_map({m, m}, {m, m});
        for (int64_t i = 0; i < 4; ++i) CHECK(d[i] == 0.0);
    }
    SUBCASE("shared shifts vanish under per-map normalization") {
        Rng rng(0xd1f);
        TensorD real({3, 3});
        rng.fill_normal(real);
        TensorD fake = real;
        for (int64_t i = 0; i < 9; ++i) fake[i] += 3.7;
        const TensorD d = delta_attention_map({real}, {fake});
        for (int64_t i = 0; i < 9; ++i) CHECK(std::abs(d[i]) < 1e-12);
    }
    SUBCASE("hand pairs subtract") {
        const TensorD a = map_of({0.0, 1.0}, 1, 2);  // -> {0,1}
        const TensorD b = map_of({0.0, 2.0}, 1, 2);  // -> {0,1}
        const TensorD c = map_of({0.0, 4.0}, 1, 2);  // -> {0,1}
        const TensorD e = map_of({2.0, 0.0}, 1, 2);  // -> {1,0}
        const TensorD d = delta_attention_map({a, b}, {c, e});
        CHECK(d[0] == 0.5);
        CHECK(d[1] == -0.5);
    }
    SUBCASE("dimension mismatch and empties") {
        const TensorD m = map_of({0.0, 1.0}, 1, 2);
        const TensorD n = map_of({0.0, 1.0, 2.0}, 1, 3);
        CHECK_THROWS_AS(delta_attention_map({m}, {n}), DataError);
        CHECK_THROWS_AS(delta_attention_map({}, {m}), DataError);
        CHECK_THROWS_AS(delta_attention_map({m}, {}), DataError);
    }
}

TEST_CASE("human false-acceptance rate") {
    const std::map<std::string, int> labels{
        {"f1", 1}, {"f2", 1}, {"f3", 1}, {"r1", 0}, {"r2", 0}};

    SUBCASE("unanimous outcomes") {
        std::vector<RaterResponse> all_fake, all_real;
        for (const std::string rater : {"a", "b", "c"})
            for (const std::string clip : {"f1", "f2", "f3"}) {
                all_fake.push_back({rater, clip, 1});
                all_real.push_back({rater, clip, 0});
            }
        CHECK(human_fooling_rate(all_fake, labels).rate == 0.0);
        CHECK(human_fooling_rate(all_real, labels).rate == 1.0);
    }
    SUBCASE("majority vote per clip, enumerated by hand") {
        // f1: real,real,fake -> fooled; f2: fake,fake,real -> caught;
        // f3: real,real,real -> fooled; responses on real clips don't count
        const std::vector<RaterResponse> rs{
            {"a", "f1", 0}, {"b", "f1", 0}, {"c", "f1", 1},
            {"a", "f2", 1}, {"b", "f2", 1}, {"c", "f2", 0},
            {"a", "f3", 0}, {"b", "f3", 0}, {"c", "f3", 0},
            {"a", "r1", 0}, {"b", "r2", 1},
        };
        const HfarReport rep = human_fooling_rate(rs, labels);
        CHECK(rep.fake_clips == 3);
        CHECK(rep.rate == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
        // rater a judged fakes real on f1,f3 of 3 seen; c on f2? no: c said real on f2
        CHECK(rep.per_rater.at("a") == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
        CHECK(rep.per_rater.at("b") == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
        CHECK(rep.per_rater.at("c") == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    }
    SUBCASE("split verdicts need a strict majority to fool") {
        const std::vector<RaterResponse> rs{{"a", "f1", 0}, {"b", "f1", 1}};
        CHECK(human_fooling_rate(rs, labels).rate == 0.0);
    }
    SUBCASE("validation") {
        CHECK_THROWS_AS(human_fooling_rate({}, labels), DataError);
        CHECK_THROWS_AS(human_fooling_rate({{"a", "ghost", 0}}, labels), DataError);
        CHECK_THROWS_AS(human_fooling_rate({{"a", "f1", 2}}, labels), DataError);
        // only real clips rated: the rate over fakes is undefined
        CHECK_THROWS_AS(human_fooling_rate({{"a", "r1", 0}}, labels), DataError);
    }
}

TEST_CASE("grayscale maps serialize as binary pgm") {
    TensorD m({2, 3});
    m[0] = 0.0;
    m[1] = 0.5;
    m[2] = 1.0;
    m[3] = 2.0;   // clamps to 255
    m[4] = -1.0;  // clamps to 0
    m[5] = 0.2;
    const std::string path = "/tmp/xavdt_test_heatmap.pgm";
    write_pgm(path, m);

    std::ifstream in(path, std::ios::binary);
    std::string header;
    std::getline(in, header);
    CHECK(header == "P5");
    std::getline(in, header);
    CHECK(header == "3 2");  // width height
    std::getline(in, header);
    CHECK(header == "255");
    unsigned char px[6];
    in.read(reinterpret_cast<char*>(px), 6);
    CHECK(in.gcount() == 6);
    CHECK(px[0] == 0);
    CHECK(px[1] == 128);  // lround(0.5*255)
    CHECK(px[2] == 255);
    CHECK(px[3] == 255);
    CHECK(px[4] == 0);
    CHECK(px[5] == 51);
    std::remove(path.c_str());

    CHECK_THROWS_AS(write_pgm("/tmp/x.pgm", TensorD({2})), DataError);
    CHECK_THROWS_AS(write_pgm("/nonexistent-dir/x.pgm", m), DataError);
}
