#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "xavdt/detector.hpp"
#include "xavdt/nn.hpp"

using namespace xavdt;
using nn::ParamRef;

namespace {

// Relative error with an absolute floor: below the floor, finite-difference
// cancellation noise (~1e-11 for unit-scale losses at h=1e-5) dominates and a
// pure ratio would be meaningless.
double rel_err(double a, double b, double floor_ = 1e-6) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor_});
}

// Central finite differences over every parameter element; analytic gradients
// must already be accumulated. Returns the worst relative error.
double check_param_grads(std::vector<ParamRef<double>> params, const std::function<double()>& loss,
                         double h = 1e-5) {
    double worst = 0.0;
    for (auto& p : params) {
        for (int64_t i = 0; i < p.v->numel(); ++i) {
            const double keep = (*p.v)[i];
            (*p.v)[i] = keep + h;
            const double lp = loss();
            (*p.v)[i] = keep - h;
            const double lm = loss();
            (*p.v)[i] = keep;
            worst = std::max(worst, rel_err((lp - lm) / (2.0 * h), (*p.g)[i]));
        }
    }
    return worst;
}

double check_input_grads(TensorD& x, const TensorD& dx, const std::function<double()>& loss, double h = 1e-5) {
    double worst = 0.0;
    for (int64_t i = 0; i < x.numel(); ++i) {
        const double keep = x[i];
        x[i] = keep + h;
        const double lp = loss();
        x[i] = keep - h;
        const double lm = loss();
        x[i] = keep;
        worst = std::max(worst, rel_err((lp - lm) / (2.0 * h), dx[i]));
    }
    return worst;
}

// scalar read-out sum(w .* y) so every output element gets a distinct weight
double weighted_sum(const TensorD& w, const TensorD& y) {
    double s = 0.0;
    for (int64_t i = 0; i < y.numel(); ++i) s += w[i] * y[i];
    return s;
}

void zero_grads(std::vector<ParamRef<double>> params) {
    for (auto& p : params) std::fill(p.g->data(), p.g->data() + p.g->numel(), 0.0);
}

}  // namespace

TEST_CASE("gemm matches naive triple loop for all transpose modes") {
    Rng rng(11);
    const int64_t m = 3, n = 4, k = 5;
    TensorD a({m, k}), at({k, m}), b({k, n}), bt({n, k});
    rng.fill_normal(a);
    rng.fill_normal(b);
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < k; ++j) at[j * m + i] = a[i * k + j];
    for (int64_t i = 0; i < k; ++i)
        for (int64_t j = 0; j < n; ++j) bt[j * k + i] = b[i * n + j];

    TensorD ref({m, n}, 0.5);  // nonzero start exercises beta
    TensorD refc = ref;
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int64_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
            refc[i * n + j] = 2.0 * acc + 0.25 * ref[i * n + j];
        }

    auto run = [&](bool ta, bool tb, const TensorD& A, const TensorD& B) {
        TensorD c = ref;
        nn::gemm<double>(ta, tb, m, n, k, 2.0, A.data(), B.data(), 0.25, c.data());
        for (int64_t i = 0; i < m * n; ++i) CHECK(c[i] == doctest::Approx(refc[i]).epsilon(1e-12));
    };
    run(false, false, a, b);
    run(true, false, at, b);
    run(false, true, a, bt);
    run(true, true, at, bt);
}

TEST_CASE("linear layer gradients match finite differences") {
    Rng rng(21);
    nn::Linear<double> lin;
    lin.init(3, 2, rng);
    rng.fill_normal(lin.b.v, 0.0, 0.5);
    TensorD x({4, 3});
    rng.fill_normal(x);
    TensorD w({4, 2});
    rng.fill_normal(w);

    auto loss = [&] {
        nn::Linear<double>::Ctx c;
        return weighted_sum(w, lin.forward(x, c));
    };
    nn::Linear<double>::Ctx c;
    lin.forward(x, c);
    std::vector<ParamRef<double>> params;
    lin.collect("lin", params);
    zero_grads(params);
    TensorD dx = lin.backward(w, c);

    CHECK(check_param_grads(params, loss) < 1e-6);
    CHECK(check_input_grads(x, dx, loss) < 1e-6);
}

TEST_CASE("conv3d matches a direct seven-loop convolution") {
    Rng rng(31);
    nn::Conv3d<double> conv;
    conv.init(4, 6, {3, 3, 3}, {1, 2, 2}, {1, 1, 1}, 2, rng);
    rng.fill_normal(conv.b.v, 0.0, 0.5);
    TensorD x({2, 4, 3, 5, 5});
    rng.fill_normal(x);

    nn::Conv3d<double>::Ctx c;
    TensorD y = conv.forward(x, c);
    REQUIRE(y.shape() == std::vector<int64_t>({2, 6, 3, 3, 3}));

    const int64_t cin_g = 2, cout_g = 3;  // 4 in / 6 out over 2 groups
    for (int64_t bi = 0; bi < 2; ++bi)
        for (int64_t co = 0; co < 6; ++co) {
            const int64_t g = co / cout_g;
            for (int64_t od = 0; od < 3; ++od)
                for (int64_t oh = 0; oh < 3; ++oh)
                    for (int64_t ow = 0; ow < 3; ++ow) {
                        double acc = conv.b.v[co];
                        for (int64_t ci = 0; ci < cin_g; ++ci)
                            for (int64_t kd = 0; kd < 3; ++kd)
                                for (int64_t kh = 0; kh < 3; ++kh)
                                    for (int64_t kw = 0; kw < 3; ++kw) {
                                        const int64_t id = od * 1 + kd - 1;
                                        const int64_t ih = oh * 2 + kh - 1;
                                        const int64_t iw = ow * 2 + kw - 1;
                                        if (id < 0 || id >= 3 || ih < 0 || ih >= 5 || iw < 0 || iw >= 5) continue;
                                        const double wv = conv.w.v[co * (cin_g * 27) + ci * 27 + kd * 9 + kh * 3 + kw];
                                        acc += wv * x.at(bi, g * cin_g + ci, id, ih, iw);
                                    }
                        CHECK(y.at(bi, co, od, oh, ow) == doctest::Approx(acc).epsilon(1e-10));
                    }
        }
}

TEST_CASE("conv3d gradients (grouped, strided, padded) match finite differences") {
    Rng rng(41);
    nn::Conv3d<double> conv;
    conv.init(4, 4, {3, 1, 3}, {1, 1, 2}, {1, 0, 1}, 2, rng);
    rng.fill_normal(conv.b.v, 0.0, 0.5);
    TensorD x({2, 4, 2, 2, 4});
    rng.fill_normal(x);

    nn::Conv3d<double>::Ctx c;
    TensorD y = conv.forward(x, c);
    TensorD w(y.shape());
    rng.fill_normal(w);

    auto loss = [&] {
        nn::Conv3d<double>::Ctx cc;
        return weighted_sum(w, conv.forward(x, cc));
    };
    std::vector<ParamRef<double>> params;
    conv.collect("conv", params);
    zero_grads(params);
    TensorD dx = conv.backward(w, c);

    CHECK(check_param_grads(params, loss) < 1e-6);
    CHECK(check_input_grads(x, dx, loss) < 1e-6);
}

TEST_CASE("layernorm forward oracle and gradients") {
    nn::LayerNorm<double> ln;
    ln.init(2);

    SUBCASE("hand rows normalize to +-1/sqrt(1+eps/var)") {
        TensorD x({2, 2});
        x[0] = 1.0;
        x[1] = 3.0;  // mean 2, var 1
        x[2] = 2.0;
        x[3] = 6.0;  // mean 4, var 4
        nn::LayerNorm<double>::Ctx c;
        TensorD y = ln.forward(x, c);
        CHECK(y[0] == doctest::Approx(-1.0 / std::sqrt(1.0 + 1e-5)).epsilon(1e-12));
        CHECK(y[1] == doctest::Approx(+1.0 / std::sqrt(1.0 + 1e-5)).epsilon(1e-12));
        CHECK(y[2] == doctest::Approx(-2.0 / std::sqrt(4.0 + 1e-5)).epsilon(1e-12));
        CHECK(y[3] == doctest::Approx(+2.0 / std::sqrt(4.0 + 1e-5)).epsilon(1e-12));
    }

    SUBCASE("gradients match finite differences") {
        Rng rng(51);
        nn::LayerNorm<double> ln4;
        ln4.init(4);
        rng.fill_normal(ln4.gamma.v, 1.0, 0.2);
        rng.fill_normal(ln4.beta.v, 0.0, 0.2);
        TensorD x({3, 4});
        rng.fill_normal(x);
        TensorD w({3, 4});
        rng.fill_normal(w);

        auto loss = [&] {
            nn::LayerNorm<double>::Ctx c;
            return weighted_sum(w, ln4.forward(x, c));
        };
        nn::LayerNorm<double>::Ctx c;
        ln4.forward(x, c);
        std::vector<ParamRef<double>> params;
        ln4.collect("ln", params);
        zero_grads(params);
        TensorD dx = ln4.backward(w, c);

        CHECK(check_param_grads(params, loss) < 1e-5);
        CHECK(check_input_grads(x, dx, loss) < 1e-5);
    }
}

TEST_CASE("self-attention with identity projections leaves identical tokens unchanged") {
    Rng rng(61);
    nn::SelfAttention<double> attn;
    attn.init(2, 4, rng);
    // identity projections, zero bias
    for (auto* lp : {&attn.wq, &attn.wk, &attn.wv, &attn.wo}) {
        std::fill(lp->w.v.data(), lp->w.v.data() + lp->w.v.numel(), 0.0);
        for (int64_t i = 0; i < 4; ++i) lp->w.v[i * 4 + i] = 1.0;
        std::fill(lp->b.v.data(), lp->b.v.data() + lp->b.v.numel(), 0.0);
    }
    TensorD x({3, 4});
    for (int64_t t = 0; t < 3; ++t)
        for (int64_t i = 0; i < 4; ++i) x[t * 4 + i] = 0.3 * static_cast<double>(i) - 0.5;

    nn::SelfAttention<double>::Ctx c;
    TensorD y = attn.forward(x, c);
    // identical tokens -> uniform attention -> context == the shared token
    for (int64_t i = 0; i < y.numel(); ++i) CHECK(y[i] == doctest::Approx(x[i]).epsilon(1e-12));
    for (int64_t hd = 0; hd < 2; ++hd)
        for (int64_t i = 0; i < 3; ++i)
            for (int64_t j = 0; j < 3; ++j) CHECK(c.probs.at(hd, i, j) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("self-attention gradients match finite differences") {
    Rng rng(71);
    nn::SelfAttention<double> attn;
    attn.init(2, 4, rng);
    for (auto* lp : {&attn.wq, &attn.wk, &attn.wv, &attn.wo}) rng.fill_normal(lp->b.v, 0.0, 0.1);
    TensorD x({3, 4});
    rng.fill_normal(x);
    TensorD w({3, 4});
    rng.fill_normal(w);

    auto loss = [&] {
        nn::SelfAttention<double>::Ctx c;
        return weighted_sum(w, attn.forward(x, c));
    };
    nn::SelfAttention<double>::Ctx c;
    attn.forward(x, c);
    std::vector<ParamRef<double>> params;
    attn.collect("attn", params);
    zero_grads(params);
    TensorD dx = attn.backward(w, c);

    CHECK(check_param_grads(params, loss) < 1e-4);
    CHECK(check_input_grads(x, dx, loss) < 1e-4);
}

TEST_CASE("grouped residual block gradients match finite differences") {
    Rng rng(81);
    GroupedResBlock<double> block;
    block.init(4, 2, rng);
    TensorD x({1, 4, 2, 2, 2});
    rng.fill_normal(x);
    TensorD w(x.shape());
    rng.fill_normal(w);

    auto loss = [&] {
        GroupedResBlock<double>::Ctx c;
        return weighted_sum(w, block.forward(x, c));
    };
    GroupedResBlock<double>::Ctx c;
    block.forward(x, c);
    std::vector<ParamRef<double>> params;
    block.collect("block", params);
    zero_grads(params);
    TensorD dx = block.backward(w, c);

    CHECK(check_param_grads(params, loss) < 1e-4);
    CHECK(check_input_grads(x, dx, loss) < 1e-4);
}

TEST_CASE("2-d positional encoding layout and bounds") {
    CHECK_THROWS_AS(nn::positional_encoding_2d<double>(6, 2, 2), ConfigError);

    const TensorD pe = nn::positional_encoding_2d<double>(8, 3, 4);
    REQUIRE(pe.shape() == std::vector<int64_t>({8, 3, 4}));
    for (int64_t i = 0; i < pe.numel(); ++i) {
        CHECK(pe[i] <= 1.0);
        CHECK(pe[i] >= -1.0);
    }
    // first half encodes x only, second half y only
    for (int64_t ch = 0; ch < 4; ++ch)
        for (int64_t x = 0; x < 4; ++x)
            for (int64_t y = 1; y < 3; ++y) CHECK(pe.at(ch, y, x) == pe.at(ch, 0, x));
    for (int64_t ch = 4; ch < 8; ++ch)
        for (int64_t y = 0; y < 3; ++y)
            for (int64_t x = 1; x < 4; ++x) CHECK(pe.at(ch, y, x) == pe.at(ch, y, 0));
    // position (0,0): sin blocks 0, cos blocks 1
    CHECK(pe.at(0, 0, 0) == 0.0);
    CHECK(pe.at(2, 0, 0) == 1.0);
    CHECK(pe.at(4, 0, 0) == 0.0);
    CHECK(pe.at(6, 0, 0) == 1.0);
    // distinct grid positions get distinct codes
    auto code = [&](int64_t y, int64_t x) {
        std::vector<double> v;
        for (int64_t ch = 0; ch < 8; ++ch) v.push_back(pe.at(ch, y, x));
        return v;
    };
    CHECK(code(0, 0) != code(0, 1));
    CHECK(code(0, 0) != code(1, 0));
    CHECK(code(1, 2) != code(2, 1));
}

TEST_CASE("global average pool and its adjoint") {
    TensorD x({1, 2, 1, 2, 2}, 0.0);
    for (int64_t i = 0; i < 4; ++i) x[i] = 7.5;           // constant channel
    for (int64_t i = 4; i < 8; ++i) x[i] = double(i - 4);  // 0..3 -> mean 1.5
    TensorD y = nn::gap_forward(x);
    REQUIRE(y.shape() == std::vector<int64_t>({1, 2}));
    CHECK(y[0] == 7.5);
    CHECK(y[1] == 1.5);

    TensorD dy({1, 2}, 0.0);
    dy[0] = 4.0;
    dy[1] = -8.0;
    TensorD dx = nn::gap_backward(dy, x.shape());
    for (int64_t i = 0; i < 4; ++i) CHECK(dx[i] == 1.0);
    for (int64_t i = 4; i < 8; ++i) CHECK(dx[i] == -2.0);
}

TEST_CASE("l2 normalization: hand case, zero stabilization, gradient") {
    SUBCASE("(3,4) -> (0.6,0.8)") {
        TensorD v({1, 2});
        v[0] = 3.0;
        v[1] = 4.0;
        TensorD u = nn::l2_normalize(v);
        CHECK(u[0] == doctest::Approx(0.6).epsilon(1e-12));
        CHECK(u[1] == doctest::Approx(0.8).epsilon(1e-12));
    }
    SUBCASE("zero vector stays finite") {
        TensorD v({1, 3}, 0.0);
        TensorD u = nn::l2_normalize(v);
        for (int64_t i = 0; i < 3; ++i) CHECK(u[i] == 0.0);
        CHECK(u.all_finite());
    }
    SUBCASE("gradient matches finite differences") {
        Rng rng(91);
        TensorD v({2, 3});
        rng.fill_normal(v);
        TensorD w({2, 3});
        rng.fill_normal(w);
        auto loss = [&] { return weighted_sum(w, nn::l2_normalize(v)); };
        std::vector<double> norms;
        TensorD u = nn::l2_normalize(v, &norms);
        TensorD dv = nn::l2_normalize_backward(w, u, norms);
        CHECK(check_input_grads(v, dv, loss) < 1e-6);
    }
}

TEST_CASE("binary cross-entropy on logits: values and gradient") {
    const double logits0[] = {0.0};
    const int one[] = {1};
    CHECK(nn::bce_with_logits<double>(logits0, one, 1) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    const double big[] = {50.0};
    CHECK(nn::bce_with_logits<double>(big, one, 1) < 1e-20);

    // huge logits stay finite in the log-sum form
    const double huge[] = {1e4, -1e4};
    const int y2[] = {0, 1};
    CHECK(std::isfinite(nn::bce_with_logits<double>(huge, y2, 2)));

    CHECK_THROWS_AS(nn::bce_with_logits<double>(nullptr, nullptr, 0), DataError);

    Rng rng(101);
    const int64_t n = 5;
    double s[n];
    int y[n];
    for (int64_t i = 0; i < n; ++i) {
        s[i] = rng.normal();
        y[i] = rng.uniform() < 0.5 ? 0 : 1;
    }
    double g[n];
    nn::bce_with_logits<double>(s, y, n, g);
    const double h = 1e-6;
    for (int64_t i = 0; i < n; ++i) {
        const double keep = s[i];
        s[i] = keep + h;
        const double lp = nn::bce_with_logits<double>(s, y, n);
        s[i] = keep - h;
        const double lm = nn::bce_with_logits<double>(s, y, n);
        s[i] = keep;
        CHECK(rel_err((lp - lm) / (2.0 * h), g[i]) < 1e-6);
    }
}

// Total training loss through the full fusion decoder and both heads on a
// 2-token / 2-channel toy, against central differences at step 1e-5.
TEST_CASE("analytic gradient of the total loss through fusion and heads") {
    DetectorConfig cfg;
    cfg.phi_channels = 4;
    cfg.psi_channels = 2;
    cfg.encoder_channels = 4;
    cfg.encoder_layers = 1;
    cfg.encoder_groups = 1;
    cfg.v_spatial_stride = 1;
    cfg.fused_channels = 4;
    cfg.attn_heads = 2;
    cfg.conv_stack = 1;
    cfg.block_groups = 2;
    cfg.embed_dim = 3;
    cfg.margin = 4.5;  // keeps every hinge active so the metric path carries gradient
    cfg.lambda_tri = 0.3;
    cfg.seed = 7;
    cfg.validate();

    DetectorModel<double> model(cfg, {1, 2}, {1, 2});  // 1x2 grid -> 2 tokens
    // nonzero biases so no path is trivially dead
    Rng brng(111);
    for (auto& p : model.params())
        if (p.name.ends_with(".b") || p.name.ends_with(".beta")) brng.fill_normal(*p.v, 0.0, 0.1);

    Rng rng(121);
    TensorD phi({2, 4, 1, 1, 2});
    TensorD psi({2, 2, 1, 1, 2});
    rng.fill_normal(phi);
    rng.fill_normal(psi);
    const std::vector<int> labels = {0, 1};
    // one sample per class: the mined triplets are forced and theta-independent
    const std::vector<std::array<int64_t, 3>> triplets = {{0, 0, 1}, {1, 1, 0}};
    const double lambda = cfg.lambda_tri;

    auto total = [&](DetectorModel<double>::Output& out) {
        const double bce = nn::bce_with_logits<double>(out.logits.data(), labels.data(), 2);
        double tri = 0.0;
        for (const auto& [a, p, g] : triplets) {
            double dap = 0.0, dan = 0.0;
            for (int64_t j = 0; j < cfg.embed_dim; ++j) {
                dap += (out.u.at(a, j) - out.u.at(p, j)) * (out.u.at(a, j) - out.u.at(p, j));
                dan += (out.u.at(a, j) - out.u.at(g, j)) * (out.u.at(a, j) - out.u.at(g, j));
            }
            const double hinge = dap - dan + cfg.margin;
            REQUIRE(hinge > 0.0);
            tri += hinge / 2.0;
        }
        return (1.0 - lambda) * bce + lambda * tri;
    };
    auto loss = [&] {
        DetectorModel<double>::Tape tape;
        auto out = model.forward(phi, psi, tape);
        return total(out);
    };

    DetectorModel<double>::Tape tape;
    auto out = model.forward(phi, psi, tape);

    TensorD dlogits({2});
    nn::bce_with_logits<double>(out.logits.data(), labels.data(), 2, dlogits.data());
    dlogits[0] *= 1.0 - lambda;
    dlogits[1] *= 1.0 - lambda;
    TensorD du(out.u.shape(), 0.0);
    for (const auto& [a, p, g] : triplets) {
        const double s = 2.0 * lambda / 2.0;
        for (int64_t j = 0; j < cfg.embed_dim; ++j) {
            du.at(a, j) += s * (out.u.at(g, j) - out.u.at(p, j));
            du.at(p, j) += s * (out.u.at(p, j) - out.u.at(a, j));
            du.at(g, j) += s * (out.u.at(a, j) - out.u.at(g, j));
        }
    }
    model.zero_grads();
    model.backward(dlogits, du, TensorD{}, tape);

    const double worst = check_param_grads(model.params(), loss, 1e-5);
    CHECK(worst < 1e-4);
}
