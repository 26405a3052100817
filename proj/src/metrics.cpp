#include "xavdt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include <nlohmann/json.hpp>

namespace xavdt {

void ScoredSet::validate(bool need_both_classes) const {
    if (scores.size() != labels.size())
        throw DataError("scored set has " + std::to_string(scores.size()) + " scores but " +
                        std::to_string(labels.size()) + " labels");
    if (scores.empty()) throw DataError("scored set is empty");
    int64_t pos = 0, neg = 0;
    for (size_t i = 0; i < scores.size(); ++i) {
        if (!std::isfinite(scores[i]))
            throw DataError("score " + std::to_string(i) + " is not finite");
        if (labels[i] == 1)
            ++pos;
        else if (labels[i] == 0)
            ++neg;
        else
            throw DataError("label " + std::to_string(i) + " is " + std::to_string(labels[i]) +
                            ", expected 0 or 1");
    }
    if (need_both_classes && (pos == 0 || neg == 0))
        throw DataError("ranking metrics need both classes; got " + std::to_string(pos) +
                        " fake and " + std::to_string(neg) + " real");
}

double roc_auc(const ScoredSet& set) {
    set.validate();
    const int64_t n = set.size();
    std::vector<int64_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int64_t a, int64_t b) { return set.scores[a] < set.scores[b]; });

    // Tie-averaged ranks give the Mann-Whitney statistic with half credit for
    // tied (positive, negative) pairs.
    std::vector<double> rank(n);
    int64_t i = 0;
    while (i < n) {
        int64_t j = i;
        while (j + 1 < n && set.scores[order[j + 1]] == set.scores[order[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;  // 1-based
        for (int64_t k = i; k <= j; ++k) rank[order[k]] = avg;
        i = j + 1;
    }

    double rank_sum = 0.0;
    int64_t pos = 0;
    for (int64_t k = 0; k < n; ++k)
        if (set.labels[k] == 1) {
            rank_sum += rank[k];
            ++pos;
        }
    const int64_t neg = n - pos;
    const double pairs = static_cast<double>(pos) * static_cast<double>(neg);
    const double u = rank_sum - 0.5 * static_cast<double>(pos) * static_cast<double>(pos + 1);
    // Evaluate the smaller side and mirror it, so that swapping the classes
    // yields values summing to 100 exactly even after rounding.
    const double u_flip = pairs - u;
    if (u <= u_flip) return 100.0 * u / pairs;
    return 100.0 - 100.0 * u_flip / pairs;
}

namespace {

// Operating points swept over unique scores, descending; rule: score >= t.
struct OpPoint {
    double threshold;
    int64_t tp, fp;
};

std::vector<OpPoint> sweep_points(const ScoredSet& set) {
    const int64_t n = set.size();
    std::vector<int64_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int64_t a, int64_t b) { return set.scores[a] > set.scores[b]; });

    std::vector<OpPoint> pts;
    int64_t tp = 0, fp = 0;
    int64_t i = 0;
    while (i < n) {
        const double t = set.scores[order[i]];
        while (i < n && set.scores[order[i]] == t) {
            if (set.labels[order[i]] == 1)
                ++tp;
            else
                ++fp;
            ++i;
        }
        pts.push_back({t, tp, fp});
    }
    return pts;
}

}  // namespace

double average_precision(const ScoredSet& set) {
    set.validate();
    const auto pts = sweep_points(set);
    const int64_t total_pos = pts.back().tp;

    double ap = 0.0;
    int64_t prev_tp = 0;
    for (const auto& p : pts) {
        if (p.tp == prev_tp) continue;
        const double precision = static_cast<double>(p.tp) / static_cast<double>(p.tp + p.fp);
        const double recall_gain =
            static_cast<double>(p.tp - prev_tp) / static_cast<double>(total_pos);
        ap += precision * recall_gain;
        prev_tp = p.tp;
    }
    return 100.0 * ap;
}

double accuracy_at(const ScoredSet& set, double threshold) {
    set.validate(false);
    int64_t correct = 0;
    for (int64_t i = 0; i < set.size(); ++i) {
        const int pred = set.scores[i] >= threshold ? 1 : 0;
        if (pred == set.labels[i]) ++correct;
    }
    return 100.0 * static_cast<double>(correct) / static_cast<double>(set.size());
}

EerResult eer_and_acc(const ScoredSet& set) {
    set.validate();
    const auto pts = sweep_points(set);
    const int64_t total_pos = pts.back().tp;
    const int64_t total_neg = pts.back().fp;

    // Walk operating points from the strictest rule down. The miss rate
    // starts at 1 and falls; the false-positive rate starts at 0 and rises;
    // scan for the first point where they meet or cross.
    double prev_fpr = 0.0, prev_fnr = 1.0;
    double prev_t = pts.front().threshold + 1.0;  // virtual "reject everything" point
    EerResult r;
    for (size_t j = 0; j < pts.size(); ++j) {
        const double fpr = static_cast<double>(pts[j].fp) / static_cast<double>(total_neg);
        const double fnr =
            static_cast<double>(total_pos - pts[j].tp) / static_cast<double>(total_pos);
        const double t = pts[j].threshold;
        if (fnr == fpr) {
            r.eer = 100.0 * fpr;
            const double below = j + 1 < pts.size() ? pts[j + 1].threshold : t - 1.0;
            r.threshold = 0.5 * (t + below);
            r.acc_at_eer = accuracy_at(set, r.threshold);
            return r;
        }
        if (fnr < fpr) {
            // Crossing lies between the previous point and this one.
            const double d0 = prev_fnr - prev_fpr;
            const double d1 = fnr - fpr;
            const double alpha = d0 / (d0 - d1);
            r.eer = 100.0 * (prev_fpr + alpha * (fpr - prev_fpr));
            r.threshold = 0.5 * (prev_t + t);
            r.acc_at_eer = accuracy_at(set, r.threshold);
            return r;
        }
        prev_fpr = fpr;
        prev_fnr = fnr;
        prev_t = t;
    }
    // Unreachable: the final point has fnr == 0 <= fpr == 1.
    throw NumericError("equal-error search failed to converge");
}

namespace {

EvalReport leaf_report(const ScoredSet& set) {
    EvalReport r;
    r.auroc = roc_auc(set);
    r.ap = average_precision(set);
    const EerResult e = eer_and_acc(set);
    r.eer = e.eer;
    r.eer_threshold = e.threshold;
    r.acc_at_eer = e.acc_at_eer;
    r.acc = accuracy_at(set, 0.5);
    return r;
}

std::string pct(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

void text_lines(const EvalReport& r, const std::string& indent, std::string& out) {
    out += indent + "auroc: " + pct(r.auroc) + "\n";
    out += indent + "ap: " + pct(r.ap) + "\n";
    out += indent + "eer: " + pct(r.eer) + "\n";
    out += indent + "eer_threshold: " + pct(100.0 * r.eer_threshold) + "\n";
    out += indent + "acc_at_eer: " + pct(r.acc_at_eer) + "\n";
    out += indent + "acc: " + pct(r.acc) + "\n";
    for (const auto& [tag, sub] : r.per_generator) {
        out += indent + "[" + tag + "]\n";
        text_lines(sub, indent + "  ", out);
    }
}

nlohmann::json to_json(const EvalReport& r) {
    nlohmann::json j;
    j["auroc"] = r.auroc;
    j["ap"] = r.ap;
    j["eer"] = r.eer;
    j["eer_threshold"] = r.eer_threshold;
    j["acc_at_eer"] = r.acc_at_eer;
    j["acc"] = r.acc;
    if (!r.per_generator.empty()) {
        nlohmann::json sub = nlohmann::json::object();
        for (const auto& [tag, s] : r.per_generator) sub[tag] = to_json(s);
        j["per_generator"] = sub;
    }
    return j;
}

}  // namespace

std::string EvalReport::text() const {
    std::string out;
    text_lines(*this, "", out);
    return out;
}

std::string EvalReport::json() const { return to_json(*this).dump(2); }

EvalReport evaluate(const ScoredSet& set, const std::vector<std::string>& generator_tags) {
    set.validate();
    EvalReport r = leaf_report(set);
    if (generator_tags.empty()) return r;
    if (static_cast<int64_t>(generator_tags.size()) != set.size())
        throw DataError("generator tag count " + std::to_string(generator_tags.size()) +
                        " does not match scored set size " + std::to_string(set.size()));

    // Each generator's fakes are scored against the shared pool of reals.
    std::vector<std::string> tags;
    for (int64_t i = 0; i < set.size(); ++i)
        if (set.labels[i] == 1 &&
            std::find(tags.begin(), tags.end(), generator_tags[i]) == tags.end())
            tags.push_back(generator_tags[i]);
    for (const auto& tag : tags) {
        ScoredSet sub;
        for (int64_t i = 0; i < set.size(); ++i) {
            const bool keep = set.labels[i] == 0 || generator_tags[i] == tag;
            if (keep) {
                sub.scores.push_back(set.scores[i]);
                sub.labels.push_back(set.labels[i]);
            }
        }
        r.per_generator[tag] = leaf_report(sub);
    }
    return r;
}

}  // namespace xavdt
