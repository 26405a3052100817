#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "xavdt/backends.hpp"
#include "xavdt/diffusion.hpp"
#include "xavdt/errors.hpp"
#include "xavdt/rng.hpp"

using namespace xavdt;

namespace {

NoiseSchedule default_schedule() { return NoiseSchedule::make(ScheduleSpec{}); }

Latent random_latent(const std::vector<int64_t>& shape, uint64_t seed, int64_t t = 0) {
    Latent z{TensorD(shape, 0.0), t};
    Rng rng(seed);
    rng.fill_normal(z.data);
    return z;
}

}  // namespace

TEST_CASE("forward diffuse endpoints") {
    const auto s = default_schedule();
    const Latent x0 = random_latent({1, 3, 4, 4}, 1);
    TensorD eps = TensorD::zeros_like(x0.data);
    Rng(2).fill_normal(eps);

    const Latent at0 = forward_diffuse(x0, 0, eps, s);  // alpha_bar(0) = 1
    CHECK((at0.data + (x0.data * -1.0)).norm_linf() == 0.0);

    const Latent noeps = forward_diffuse(x0, 600, TensorD::zeros_like(x0.data), s);
    const double a = std::sqrt(s.alpha_bar(600));
    for (int64_t i = 0; i < x0.data.numel(); ++i) CHECK(noeps.data[i] == doctest::Approx(a * x0.data[i]));

    TensorD bad({1, 3, 4, 2}, 0.0);
    CHECK_THROWS_AS(forward_diffuse(x0, 10, bad, s), DataError);
}

TEST_CASE("forward diffuse preserves unit variance") {
    const auto s = default_schedule();
    const int64_t n = 100000;
    Latent x0{TensorD({1, 1, 250, 400}, 0.0), 0};
    TensorD eps = TensorD::zeros_like(x0.data);
    Rng rng(11);
    rng.fill_normal(x0.data);
    rng.fill_normal(eps);
    const Latent z = forward_diffuse(x0, 500, eps, s);
    double s1 = 0.0, s2 = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        s1 += z.data[i];
        s2 += z.data[i] * z.data[i];
    }
    const double var = s2 / n - (s1 / n) * (s1 / n);
    CHECK(var == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("clean estimate inverts forward diffusion when the noise is known") {
    const auto s = default_schedule();
    const Latent x0 = random_latent({2, 3, 4, 4}, 5);
    TensorD eps = TensorD::zeros_like(x0.data);
    Rng(6).fill_normal(eps);
    const Latent zt = forward_diffuse(x0, 700, eps, s);
    const ConstantDenoiser exact(eps);
    const Latent rec = predict_x0(zt, {}, exact, s);
    CHECK((rec.data + (x0.data * -1.0)).norm_linf() < 1e-10);

    const ConstantDenoiser zero(0.0);
    const Latent scaled = predict_x0(zt, {}, zero, s);
    const double inv = 1.0 / std::sqrt(s.alpha_bar(700));
    for (int64_t i = 0; i < 8; ++i) CHECK(scaled.data[i] == doctest::Approx(zt.data[i] * inv));

    Latent clean = x0;
    CHECK_THROWS_AS(predict_x0(clean, {}, zero, s), ConfigError);
}

TEST_CASE("gaussian score backend recovers the posterior mean") {
    const auto s = default_schedule();
    const double mu = 0.7, sd = 1.9;
    const GaussianScoreDenoiser g(mu, sd, s);
    const int64_t t = 350;
    Latent z = random_latent({1, 1, 2, 2}, 9, t);
    const Latent xhat = predict_x0(z, {}, g, s);
    // Bayes oracle: prior x0~N(mu, sd^2), likelihood z|x0 ~ N(sqrt(ab) x0, 1-ab)
    const double ab = s.alpha_bar(t);
    for (int64_t i = 0; i < 4; ++i) {
        const double post = (sd * sd * std::sqrt(ab) * z.data[i] + (1.0 - ab) * mu) / (ab * sd * sd + (1.0 - ab));
        CHECK(xhat.data[i] == doctest::Approx(post).epsilon(1e-12));
    }
}

TEST_CASE("single reverse step reaches the clean estimate at t_prev = 0") {
    const auto s = default_schedule();
    const ConstantDenoiser eps(0.25);
    Latent z = random_latent({1, 2, 2, 2}, 12, 400);
    const Latent x0 = predict_x0(z, {}, eps, s);
    const Latent stepped = ddim_step(z, 0, {}, eps, s);
    CHECK((stepped.data + (x0.data * -1.0)).norm_linf() < 1e-12);
    CHECK(stepped.timestep == 0);
    CHECK_THROWS_AS(ddim_step(z, 400, {}, eps, s), ConfigError);
    CHECK_THROWS_AS(ddim_step(z, 500, {}, eps, s), ConfigError);
}

TEST_CASE("constant noise makes single steps exactly invertible") {
    const auto s = default_schedule();
    const ConstantDenoiser eps(-0.4);
    Latent z = random_latent({1, 2, 2, 2}, 13, 500);
    const Latent down = ddim_step(z, 250, {}, eps, s);
    const Latent back = ddim_invert_step(down, 500, {}, eps, s);
    CHECK((back.data + (z.data * -1.0)).norm_linf() < 1e-10);
}

TEST_CASE("invert step with equal timesteps is the identity") {
    const auto s = default_schedule();
    const ConstantDenoiser eps(0.1);
    Latent z = random_latent({1, 1, 2, 2}, 14, 300);
    const Latent same = ddim_invert_step(z, 300, {}, eps, s);
    CHECK((same.data + (z.data * -1.0)).norm_linf() == 0.0);
    CHECK_THROWS_AS(ddim_invert_step(z, 200, {}, eps, s), ConfigError);
}

TEST_CASE("frozen-noise transport is an exact inverse pair") {
    const auto s = default_schedule();
    Latent z = random_latent({1, 3, 4, 4}, 15, 600);
    TensorD eps = TensorD::zeros_like(z.data);
    Rng(16).fill_normal(eps);
    const Latent down = ddim_transport(z, 200, eps, s);
    const Latent back = ddim_transport(down, 600, eps, s);
    CHECK((back.data + (z.data * -1.0)).norm_linf() < 1e-10);
}

TEST_CASE("constant-noise inversion chain telescopes to one transport") {
    const auto s = default_schedule();
    const double ev = 0.3;
    const ConstantDenoiser backend(ev);
    const Latent z0 = random_latent({1, 3, 8, 8}, 17);
    const auto grid = s.sample_grid(40, "trailing");
    const Latent zT = invert_chain(z0, {}, backend, s, grid);
    CHECK(zT.timestep == 999);
    // affine chain with fixed eps collapses algebraically: since abar(0)=1,
    // z_T = sqrt(abar_T) z_0 + sqrt(1-abar_T) eps
    const double a = std::sqrt(s.alpha_bar(999)), b = std::sqrt(1.0 - s.alpha_bar(999));
    for (int64_t i = 0; i < z0.data.numel(); ++i)
        CHECK(zT.data[i] == doctest::Approx(a * z0.data[i] + b * ev).epsilon(1e-10));

    const Latent round = sample_chain(zT, {}, backend, s, grid);
    CHECK((round.data + (z0.data * -1.0)).norm_linf() < 1e-10);
}

TEST_CASE("chain endpoint and capture validation") {
    const auto s = default_schedule();
    const ConstantDenoiser backend(0.0);
    const Latent z0 = random_latent({1, 1, 2, 2}, 18);
    const auto grid = s.sample_grid(4, "trailing");
    Latent wrong = z0;
    wrong.timestep = 5;
    CHECK_THROWS_AS(invert_chain(wrong, {}, backend, s, grid), ConfigError);

    Latent top = random_latent({1, 1, 2, 2}, 19, 123);
    CHECK_THROWS_AS(sample_chain(top, {}, backend, s, grid), ConfigError);

    // capture timestep must be one of the inversion evaluation points
    HeadCapture cap;
    CHECK_THROWS_WITH_AS(
        (void)invert_chain(z0, {}, backend, s, grid, "nowhere.cross", grid.back(), &cap),
        doctest::Contains("not on the inversion grid"), ConfigError);
    const auto pts = inversion_eval_points(grid);
    REQUIRE(pts.size() == grid.size());
    CHECK(pts.front() == 0);
    CHECK(pts.back() == grid[grid.size() - 2]);
}

TEST_CASE("reverse chain transports the noise marginal onto the data law") {
    const auto s = default_schedule();
    const double mu = 1.5, sd = 0.8;
    const GaussianScoreDenoiser g(mu, sd, s);
    const auto grid = s.sample_grid(40, "trailing");
    const int64_t top = grid.back();
    // draw z_top from its exact marginal N(sqrt(ab) mu, ab sd^2 + 1 - ab)
    const double ab = s.alpha_bar(top);
    const double m_t = std::sqrt(ab) * mu, s_t = std::sqrt(ab * sd * sd + 1.0 - ab);
    Latent zT{TensorD({1, 1, 100, 100}, 0.0), top};
    Rng rng(20);
    for (int64_t i = 0; i < zT.data.numel(); ++i) zT.data[i] = m_t + s_t * rng.normal();
    const Latent x0 = sample_chain(zT, {}, g, s, grid);
    const int64_t n = x0.data.numel();
    double s1 = 0.0, s2 = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        s1 += x0.data[i];
        s2 += x0.data[i] * x0.data[i];
    }
    const double mean = s1 / n, var = s2 / n - mean * mean;
    CHECK(mean == doctest::Approx(mu).epsilon(0.05));
    CHECK(std::sqrt(var) == doctest::Approx(sd).epsilon(0.05));
}
