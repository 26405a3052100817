#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "xavdt/attention.hpp"
#include "xavdt/schedule.hpp"
#include "xavdt/tensor.hpp"

namespace xavdt {

// Latent-space tensor tagged with its position on the noise schedule.
// timestep 0 is clean data; timestep T is the noisiest point.
struct Latent {
    TensorD data;  // frames x channels x height x width
    int64_t timestep = 0;
};

// Conditioning bundle fed to the denoiser on every call.
struct Condition {
    TensorD audio;      // frames x d_a per-frame audio tokens (empty = unconditioned)
    TensorD reference;  // encoded reference latent, channels x h x w (empty = none)
};

// Noise predictor interface. Implementations must be deterministic for fixed
// (z, t, c) and read-only after construction; the optional capture output
// keeps predict_eps safe for concurrent calls on one instance.
class DenoiserBackend {
public:
    virtual ~DenoiserBackend() = default;

    // Returns the noise estimate, same shape as z. When capture_site is
    // non-empty the named attention site's per-head output is written to
    // *capture (unknown site -> config error).
    virtual TensorD predict_eps(const TensorD& z, int64_t t, const Condition& c,
                                const std::string& capture_site = {}, HeadCapture* capture = nullptr) const = 0;

    virtual std::vector<std::string> capture_sites() const { return {}; }

    // Runs the named attention site on an externally supplied hidden state
    // (frames x channels x h x w). Default: backend exposes no sites.
    virtual std::pair<TensorD, HeadCapture> cross_attention_capture(const TensorD& hidden, const Condition& c,
                                                                    const std::string& site) const;
};

// Pixel <-> latent mapping. decode(encode(x)) must preserve the pixel shape;
// latent spatial dims are pixel dims divided by factor().
class LatentCodec {
public:
    virtual ~LatentCodec() = default;
    virtual TensorD encode(const TensorD& pixels) const = 0;
    virtual TensorD decode(const TensorD& latent) const = 0;
    virtual int64_t factor() const = 0;
};

// q(z_t | x0): sqrt(abar_t) x0 + sqrt(1 - abar_t) eps.
Latent forward_diffuse(const Latent& x0, int64_t t, const TensorD& eps, const NoiseSchedule& s);

// (z_t - sqrt(1 - abar_t) eps_theta) / sqrt(abar_t); t >= 1.
Latent predict_x0(const Latent& z, const Condition& c, const DenoiserBackend& b, const NoiseSchedule& s);

// One deterministic reverse update t -> t_prev (t_prev < t).
Latent ddim_step(const Latent& z, int64_t t_prev, const Condition& c, const DenoiserBackend& b,
                 const NoiseSchedule& s);

// One inversion update t -> t_next (t_next >= t), evaluating the denoiser at
// the current, less-noisy latent; t_next == t is the identity.
Latent ddim_invert_step(const Latent& z, int64_t t_next, const Condition& c, const DenoiserBackend& b,
                        const NoiseSchedule& s);

// Shared core with a caller-supplied noise estimate: moves z from its own
// timestep to t_target in either direction. Feeding the same eps both ways
// is an exact inverse pair.
Latent ddim_transport(const Latent& z, int64_t t_target, const TensorD& eps, const NoiseSchedule& s);

// The timesteps the denoiser is evaluated at while inverting along `grid`:
// {0} followed by all grid points except the last.
std::vector<int64_t> inversion_eval_points(const std::vector<int64_t>& grid);

// Runs the whole inversion chain 0 -> grid[0] -> ... -> grid.back(). When
// capture_site is non-empty, the evaluation at t_star fills *capture;
// t_star must be one of inversion_eval_points(grid).
Latent invert_chain(const Latent& z0, const Condition& c, const DenoiserBackend& b, const NoiseSchedule& s,
                    const std::vector<int64_t>& grid, const std::string& capture_site = {},
                    int64_t t_star = -1, HeadCapture* capture = nullptr);

// Runs the reverse chain grid.back() -> ... -> grid[0] -> 0.
Latent sample_chain(const Latent& zT, const Condition& c, const DenoiserBackend& b, const NoiseSchedule& s,
                    const std::vector<int64_t>& grid);

}  // namespace xavdt
