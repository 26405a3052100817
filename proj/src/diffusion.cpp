#include "xavdt/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "xavdt/errors.hpp"

namespace xavdt {

std::pair<TensorD, HeadCapture> DenoiserBackend::cross_attention_capture(const TensorD&, const Condition&,
                                                                         const std::string& site) const {
    throw ConfigError("backend exposes no attention sites (requested '" + site + "')");
}

Latent forward_diffuse(const Latent& x0, int64_t t, const TensorD& eps, const NoiseSchedule& s) {
    if (!x0.data.same_shape(eps))
        throw DataError("forward_diffuse: noise shape " + eps.shape_string() + " != latent shape " +
                        x0.data.shape_string());
    const double ab = s.alpha_bar(t);
    const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
    Latent out{TensorD::zeros_like(x0.data), t};
    for (int64_t i = 0; i < out.data.numel(); ++i) out.data[i] = a * x0.data[i] + b * eps[i];
    return out;
}

namespace {

// x_hat0 from (z at t, eps); requires abar_t > 0.
TensorD clean_estimate(const TensorD& z, int64_t t, const TensorD& eps, const NoiseSchedule& s) {
    const double ab = s.alpha_bar(t);
    if (ab <= 0.0)
        throw NumericError("singular schedule: alpha_bar(" + std::to_string(t) + ") = 0");
    const double inv = 1.0 / std::sqrt(ab), b = std::sqrt(1.0 - ab);
    TensorD x0 = TensorD::zeros_like(z);
    for (int64_t i = 0; i < z.numel(); ++i) x0[i] = (z[i] - b * eps[i]) * inv;
    return x0;
}

}  // namespace

Latent predict_x0(const Latent& z, const Condition& c, const DenoiserBackend& b, const NoiseSchedule& s) {
    if (z.timestep < 1)
        throw ConfigError("predict_x0: needs timestep >= 1, got " + std::to_string(z.timestep));
    const TensorD eps = b.predict_eps(z.data, z.timestep, c);
    if (!eps.same_shape(z.data))
        throw DataError("backend returned shape " + eps.shape_string() + " for latent " + z.data.shape_string());
    return Latent{clean_estimate(z.data, z.timestep, eps, s), 0};
}

Latent ddim_transport(const Latent& z, int64_t t_target, const TensorD& eps, const NoiseSchedule& s) {
    if (!eps.same_shape(z.data))
        throw DataError("ddim_transport: noise shape " + eps.shape_string() + " != latent shape " +
                        z.data.shape_string());
    const TensorD x0 = clean_estimate(z.data, z.timestep, eps, s);
    const double ab = s.alpha_bar(t_target);
    const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
    Latent out{TensorD::zeros_like(z.data), t_target};
    for (int64_t i = 0; i < x0.numel(); ++i) out.data[i] = a * x0[i] + b * eps[i];
    return out;
}

Latent ddim_step(const Latent& z, int64_t t_prev, const Condition& c, const DenoiserBackend& b,
                 const NoiseSchedule& s) {
    if (t_prev >= z.timestep)
        throw ConfigError("ddim_step: needs t_prev < t, got t_prev=" + std::to_string(t_prev) +
                          " t=" + std::to_string(z.timestep));
    const TensorD eps = b.predict_eps(z.data, z.timestep, c);
    return ddim_transport(z, t_prev, eps, s);
}

Latent ddim_invert_step(const Latent& z, int64_t t_next, const Condition& c, const DenoiserBackend& b,
                        const NoiseSchedule& s) {
    if (t_next < z.timestep)
        throw ConfigError("ddim_invert_step: needs t_next >= t, got t_next=" + std::to_string(t_next) +
                          " t=" + std::to_string(z.timestep));
    if (t_next == z.timestep) return z;
    const TensorD eps = b.predict_eps(z.data, z.timestep, c);
    return ddim_transport(z, t_next, eps, s);
}

std::vector<int64_t> inversion_eval_points(const std::vector<int64_t>& grid) {
    std::vector<int64_t> pts;
    pts.reserve(grid.size());
    pts.push_back(0);
    for (size_t i = 0; i + 1 < grid.size(); ++i) pts.push_back(grid[i]);
    return pts;
}

Latent invert_chain(const Latent& z0, const Condition& c, const DenoiserBackend& b, const NoiseSchedule& s,
                    const std::vector<int64_t>& grid, const std::string& capture_site, int64_t t_star,
                    HeadCapture* capture) {
    if (grid.empty()) throw ConfigError("invert_chain: empty timestep grid");
    if (z0.timestep != 0)
        throw ConfigError("invert_chain: expected clean latent at timestep 0, got " + std::to_string(z0.timestep));
    if (!capture_site.empty()) {
        const auto pts = inversion_eval_points(grid);
        if (std::find(pts.begin(), pts.end(), t_star) == pts.end()) {
            std::ostringstream os;
            os << "capture timestep " << t_star << " is not on the inversion grid; valid timesteps:";
            for (int64_t p : pts) os << " " << p;
            throw ConfigError(os.str());
        }
    }

    Latent z = z0;
    for (size_t i = 0; i < grid.size(); ++i) {
        const int64_t t_next = grid[i];
        if (t_next < z.timestep) throw ConfigError("invert_chain: grid must be non-decreasing");
        const bool want = !capture_site.empty() && z.timestep == t_star;
        const TensorD eps =
            b.predict_eps(z.data, z.timestep, c, want ? capture_site : std::string{}, want ? capture : nullptr);
        if (want && capture) capture->timestep = t_star;
        z = ddim_transport(z, t_next, eps, s);
    }
    return z;
}

Latent sample_chain(const Latent& zT, const Condition& c, const DenoiserBackend& b, const NoiseSchedule& s,
                    const std::vector<int64_t>& grid) {
    if (grid.empty()) throw ConfigError("sample_chain: empty timestep grid");
    if (zT.timestep != grid.back())
        throw ConfigError("sample_chain: latent at timestep " + std::to_string(zT.timestep) +
                          " does not match the top of the grid (" + std::to_string(grid.back()) + ")");
    Latent z = zT;
    for (size_t i = grid.size(); i-- > 0;) {
        const int64_t t_prev = (i == 0) ? 0 : grid[i - 1];
        z = ddim_step(z, t_prev, c, b, s);
    }
    return z;
}

}  // namespace xavdt
