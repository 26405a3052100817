#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace xavdt {

// Text-serializable description of a diffusion noise schedule. `law` selects
// how betas are generated; "explicit" takes the betas verbatim (mostly for
// tests and tiny hand schedules).
struct ScheduleSpec {
    int64_t steps = 1000;  // T
    std::string law = "linear";  // linear | explicit
    double beta_start = 1e-4;
    double beta_end = 2e-2;
    std::vector<double> betas;   // used when law == "explicit"
    int64_t sample_steps = 40;   // k evaluation steps when traversing
    std::string spacing = "trailing";  // trailing | linspace

    // key=value lines, one per field; round-trips through parse().
    std::string serialize() const;
    static ScheduleSpec parse(const std::string& text);
};

// Cumulative noise schedule. Timesteps run 0..T where 0 is clean data:
// alpha(t) is defined for t in [1,T], alpha_bar(0) = 1 and
// alpha_bar(t) = alpha_bar(t-1) * alpha(t).
class NoiseSchedule {
public:
    static NoiseSchedule make(const ScheduleSpec& spec);

    int64_t steps() const { return T_; }
    double alpha(int64_t t) const;      // t in [1, T]
    double alpha_bar(int64_t t) const;  // t in [0, T]

    // Ascending evaluation grid of k timesteps within [1, T]. "trailing"
    // places points at round(j*T/k)-1 for j=1..k (so T=1000, k=40 yields
    // 24, 49, ..., 999); "linspace" at round(j*T/k) (25, 50, ..., 1000).
    // Grid values index into this schedule's alpha_bar, so sub-sampled
    // traversals reuse the exact cumulative products of the full schedule.
    std::vector<int64_t> sample_grid(int64_t k, const std::string& spacing) const;
    std::vector<int64_t> sample_grid(const ScheduleSpec& spec) const {
        return sample_grid(spec.sample_steps, spec.spacing);
    }

private:
    int64_t T_ = 0;
    std::vector<double> alphas_;      // size T, alphas_[t-1] = alpha(t)
    std::vector<double> alpha_bars_;  // size T+1, alpha_bars_[t] = alpha_bar(t)
};

}  // namespace xavdt
