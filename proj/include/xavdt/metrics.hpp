#pragma once

#include <map>
#include <string>
#include <vector>

#include "xavdt/errors.hpp"

namespace xavdt {

// Scores in [0,1] with binary ground truth (1 = fake). Ranking metrics need
// both classes present.
struct ScoredSet {
    std::vector<double> scores;
    std::vector<int> labels;

    void validate(bool need_both_classes = true) const;
    int64_t size() const { return static_cast<int64_t>(scores.size()); }
};

struct EerResult {
    double eer = 0.0;        // percent
    double threshold = 0.0;  // decision rule: score >= threshold -> fake
    double acc_at_eer = 0.0; // percent, evaluated with the returned threshold
};

// Mann-Whitney AUROC as a percentage: fraction of (positive, negative) pairs
// ranked correctly, ties counted half.
double roc_auc(const ScoredSet& set);

// Step-wise average precision over unique-score thresholds, as a percentage.
double average_precision(const ScoredSet& set);

// Equal-error-rate operating point with midpoint threshold interpolation;
// ties score as positive.
EerResult eer_and_acc(const ScoredSet& set);

// Accuracy (percent) of the rule score >= threshold.
double accuracy_at(const ScoredSet& set, double threshold);

struct EvalReport {
    double auroc = 0.0;
    double ap = 0.0;
    double eer = 0.0;
    double eer_threshold = 0.0;
    double acc_at_eer = 0.0;
    double acc = 0.0;  // fixed 0.5 threshold
    std::map<std::string, EvalReport> per_generator;  // leaf reports have an empty map

    std::string text() const;  // table-style, percentages with 2 decimals
    std::string json() const;
};

// Full report; optional per-clip generator tags produce the breakdown map.
// Each group scores one generator's fakes against the shared pool of reals,
// so tags on real clips never form groups of their own.
EvalReport evaluate(const ScoredSet& set, const std::vector<std::string>& generator_tags = {});

}  // namespace xavdt
