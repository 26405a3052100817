#include "xavdt/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "xavdt/errors.hpp"

namespace xavdt {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("schedule: bad numeric value for '" + key + "': " + v);
    }
}

int64_t parse_int(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const long long d = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("schedule: bad integer value for '" + key + "': " + v);
    }
}

}  // namespace

std::string ScheduleSpec::serialize() const {
    std::ostringstream os;
    os.precision(17);
    os << "steps = " << steps << "\n";
    os << "law = " << law << "\n";
    if (law == "explicit") {
        os << "betas =";
        for (double b : betas) os << " " << b;
        os << "\n";
    } else {
        os << "beta_start = " << beta_start << "\n";
        os << "beta_end = " << beta_end << "\n";
    }
    os << "sample_steps = " << sample_steps << "\n";
    os << "spacing = " << spacing << "\n";
    return os.str();
}

ScheduleSpec ScheduleSpec::parse(const std::string& text) {
    ScheduleSpec spec;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("schedule: expected 'key = value', got: " + line);
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key == "steps") {
            spec.steps = parse_int(key, val);
        } else if (key == "law") {
            spec.law = val;
        } else if (key == "beta_start") {
            spec.beta_start = parse_double(key, val);
        } else if (key == "beta_end") {
            spec.beta_end = parse_double(key, val);
        } else if (key == "betas") {
            spec.betas.clear();
            std::istringstream vs(val);
            std::string tok;
            while (vs >> tok) spec.betas.push_back(parse_double(key, tok));
        } else if (key == "sample_steps") {
            spec.sample_steps = parse_int(key, val);
        } else if (key == "spacing") {
            spec.spacing = val;
        } else {
            throw ConfigError("schedule: unknown key '" + key + "'");
        }
    }
    return spec;
}

NoiseSchedule NoiseSchedule::make(const ScheduleSpec& spec) {
    if (spec.steps < 1) throw ConfigError("schedule: steps must be >= 1, got " + std::to_string(spec.steps));

    std::vector<double> betas;
    if (spec.law == "linear") {
        betas.resize(static_cast<size_t>(spec.steps));
        if (spec.steps == 1) {
            betas[0] = spec.beta_start;
        } else {
            for (int64_t i = 0; i < spec.steps; ++i)
                betas[static_cast<size_t>(i)] =
                    spec.beta_start + (spec.beta_end - spec.beta_start) *
                                          static_cast<double>(i) / static_cast<double>(spec.steps - 1);
        }
        if (spec.beta_end < spec.beta_start)
            throw ConfigError("schedule: beta_end < beta_start makes a non-monotonic linear law");
    } else if (spec.law == "explicit") {
        betas = spec.betas;
        if (static_cast<int64_t>(betas.size()) != spec.steps)
            throw ConfigError("schedule: explicit law needs exactly 'steps' betas, got " +
                              std::to_string(betas.size()) + " for steps=" + std::to_string(spec.steps));
    } else {
        throw ConfigError("schedule: unknown law '" + spec.law + "' (expected linear or explicit)");
    }

    for (size_t i = 0; i < betas.size(); ++i) {
        if (!(betas[i] >= 0.0 && betas[i] < 1.0))
            throw ConfigError("schedule: beta[" + std::to_string(i + 1) + "] = " + std::to_string(betas[i]) +
                              " outside [0,1)");
    }

    NoiseSchedule s;
    s.T_ = spec.steps;
    s.alphas_.resize(betas.size());
    s.alpha_bars_.resize(betas.size() + 1);
    s.alpha_bars_[0] = 1.0;
    for (size_t i = 0; i < betas.size(); ++i) {
        s.alphas_[i] = 1.0 - betas[i];
        s.alpha_bars_[i + 1] = s.alpha_bars_[i] * s.alphas_[i];
    }
    return s;
}

double NoiseSchedule::alpha(int64_t t) const {
    if (t < 1 || t > T_) throw ConfigError("schedule: alpha(t) needs t in [1," + std::to_string(T_) + "], got " + std::to_string(t));
    return alphas_[static_cast<size_t>(t - 1)];
}

double NoiseSchedule::alpha_bar(int64_t t) const {
    if (t < 0 || t > T_) throw ConfigError("schedule: alpha_bar(t) needs t in [0," + std::to_string(T_) + "], got " + std::to_string(t));
    return alpha_bars_[static_cast<size_t>(t)];
}

std::vector<int64_t> NoiseSchedule::sample_grid(int64_t k, const std::string& spacing) const {
    if (k < 1 || k > T_)
        throw ConfigError("schedule: sample_steps must be in [1," + std::to_string(T_) + "], got " + std::to_string(k));
    int64_t shift;
    if (spacing == "trailing") {
        shift = -1;
    } else if (spacing == "linspace") {
        shift = 0;
    } else {
        throw ConfigError("schedule: unknown spacing '" + spacing + "' (expected trailing or linspace)");
    }
    std::vector<int64_t> grid(static_cast<size_t>(k));
    const double stride = static_cast<double>(T_) / static_cast<double>(k);
    for (int64_t j = 1; j <= k; ++j) {
        int64_t t = static_cast<int64_t>(std::llround(static_cast<double>(j) * stride)) + shift;
        t = std::clamp<int64_t>(t, 1, T_);
        grid[static_cast<size_t>(j - 1)] = t;
    }
    for (size_t i = 1; i < grid.size(); ++i)
        if (grid[i] <= grid[i - 1])
            throw ConfigError("schedule: sample grid not strictly increasing; too many steps for T");
    return grid;
}

}  // namespace xavdt
