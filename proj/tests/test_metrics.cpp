#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include <nlohmann/json.hpp>

#include "xavdt/metrics.hpp"
#include "xavdt/rng.hpp"

using namespace xavdt;

namespace {

// Independent ranking oracle: count every (fake, real) pair directly,
// half credit for ties.
double pairwise_auc_oracle(const ScoredSet& set) {
    int64_t twice_u = 0, pos = 0, neg = 0;
    for (size_t i = 0; i < set.scores.size(); ++i) {
        if (set.labels[i] != 1) continue;
        ++pos;
        for (size_t j = 0; j < set.scores.size(); ++j) {
            if (set.labels[j] != 0) continue;
            if (set.scores[i] > set.scores[j])
                twice_u += 2;
            else if (set.scores[i] == set.scores[j])
                twice_u += 1;
        }
    }
    for (int v : set.labels)
        if (v == 0) ++neg;
    return 100.0 * static_cast<double>(twice_u) / (2.0 * static_cast<double>(pos * neg));
}

// Independent precision/recall sweep: recount the confusion matrix from
// scratch at every unique score, then integrate precision over recall steps.
double sweep_ap_oracle(const ScoredSet& set) {
    std::set<double, std::greater<double>> thresholds(set.scores.begin(), set.scores.end());
    int64_t total_pos = 0;
    for (int v : set.labels) total_pos += v;
    double ap = 0.0, prev_recall = 0.0;
    for (double t : thresholds) {
        int64_t tp = 0, fp = 0;
        for (size_t i = 0; i < set.scores.size(); ++i) {
            if (set.scores[i] < t) continue;
            if (set.labels[i] == 1)
                ++tp;
            else
                ++fp;
        }
        const double recall = static_cast<double>(tp) / static_cast<double>(total_pos);
        if (recall > prev_recall) {
            const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
            ap += precision * (recall - prev_recall);
            prev_recall = recall;
        }
    }
    return 100.0 * ap;
}

// Accuracy recount independent of accuracy_at.
double acc_oracle(const ScoredSet& set, double threshold) {
    int64_t ok = 0;
    for (size_t i = 0; i < set.scores.size(); ++i) {
        const int pred = set.scores[i] >= threshold ? 1 : 0;
        if (pred == set.labels[i]) ++ok;
    }
    return 100.0 * static_cast<double>(ok) / static_cast<double>(set.scores.size());
}

ScoredSet random_set(Rng& rng, bool quantized) {
    while (true) {
        const int64_t n = rng.uniform_int(2, 64);
        ScoredSet s;
        for (int64_t i = 0; i < n; ++i) {
            double v = rng.uniform();
            if (quantized) v = std::round(v * 4.0) / 4.0;  // heavy ties
            s.scores.push_back(v);
            s.labels.push_back(static_cast<int>(rng.uniform_int(0, 1)));
        }
        const int64_t pos = std::count(s.labels.begin(), s.labels.end(), 1);
        if (pos > 0 && pos < n) return s;
    }
}

}  // namespace

TEST_CASE("ranking metrics match exhaustive oracles on 200 random sets") {
    Rng rng(0xace5);
    for (int trial = 0; trial < 200; ++trial) {
        const ScoredSet s = random_set(rng, trial % 2 == 1);
        CAPTURE(trial);
        CHECK(std::abs(roc_auc(s) - pairwise_auc_oracle(s)) <= 1e-9);
        CHECK(std::abs(average_precision(s) - sweep_ap_oracle(s)) <= 1e-9);
        const EerResult e = eer_and_acc(s);
        CHECK(e.eer >= 0.0);
        CHECK(e.eer <= 100.0);
        // the returned operating point must reproduce its own accuracy
        CHECK(e.acc_at_eer == acc_oracle(s, e.threshold));
    }
}

TEST_CASE("ranking hand values") {
    SUBCASE("perfect separation") {
        ScoredSet s{{1.0, 0.9, 0.1, 0.0}, {1, 1, 0, 0}};
        CHECK(roc_auc(s) == 100.0);
        CHECK(average_precision(s) == 100.0);
    }
    SUBCASE("inverted ranking") {
        ScoredSet s{{0.0, 0.1, 0.9, 1.0}, {1, 1, 0, 0}};
        CHECK(roc_auc(s) == 0.0);
    }
    SUBCASE("all scores tied") {
        ScoredSet s{{0.5, 0.5, 0.5, 0.5}, {1, 1, 0, 0}};
        CHECK(roc_auc(s) == 50.0);
        // one threshold group: precision 1/2 at full recall
        CHECK(average_precision(s) == 50.0);
    }
    SUBCASE("single positive ranked last") {
        ScoredSet s{{0.8, 0.6, 0.4, 0.1}, {0, 0, 0, 1}};
        CHECK(average_precision(s) == doctest::Approx(100.0 / 4.0).epsilon(1e-12));
        CHECK(roc_auc(s) == 0.0);
    }
    SUBCASE("interleaved") {
        // pairs won: (0.9 beats 0.5, 0.2), (0.4 beats 0.2) -> 3 of 4
        ScoredSet s{{0.9, 0.4, 0.5, 0.2}, {1, 1, 0, 0}};
        CHECK(roc_auc(s) == 75.0);
    }
}

TEST_CASE("class-complement identity holds exactly") {
    Rng rng(0xc0de);
    for (int trial = 0; trial < 300; ++trial) {
        const ScoredSet s = random_set(rng, trial % 3 == 0);
        ScoredSet flipped = s;
        for (auto& v : flipped.labels) v = 1 - v;
        CHECK(roc_auc(s) + roc_auc(flipped) == 100.0);
    }
}

TEST_CASE("monotone score transforms leave ranking metrics unchanged") {
    Rng rng(0xbeef);
    const auto cube = [](double x) { return x * x * x; };
    const auto squash = [](double x) { return 0.2 + 0.6 / (1.0 + std::exp(-3.0 * x)); };
    for (int trial = 0; trial < 50; ++trial) {
        const ScoredSet s = random_set(rng, trial % 2 == 0);
        for (int which = 0; which < 2; ++which) {
            ScoredSet t = s;
            for (auto& v : t.scores) v = which == 0 ? cube(v) : squash(v);
            CHECK(roc_auc(t) == roc_auc(s));
            CHECK(average_precision(t) == average_precision(s));
        }
    }
}

TEST_CASE("equal-error operating point") {
    SUBCASE("balanced four-sample hand sweep") {
        ScoredSet s{{0.9, 0.6, 0.4, 0.1}, {1, 1, 0, 0}};
        const EerResult e = eer_and_acc(s);
        CHECK(e.eer == 0.0);
        CHECK(e.threshold > 0.4);
        CHECK(e.threshold < 0.6);
        CHECK(e.acc_at_eer == 100.0);
    }
    SUBCASE("perfectly separated") {
        ScoredSet s{{0.99, 0.8, 0.75, 0.3, 0.2, 0.05}, {1, 1, 1, 0, 0, 0}};
        const EerResult e = eer_and_acc(s);
        CHECK(e.eer == 0.0);
        CHECK(e.acc_at_eer == 100.0);
    }
    SUBCASE("fully inverted binary scores") {
        ScoredSet s{{0.0, 0.0, 1.0, 1.0}, {1, 1, 0, 0}};
        const EerResult e = eer_and_acc(s);
        CHECK(e.eer == 100.0);
        // at the equal-error point both rates are 1, so every prediction is
        // wrong there; the threshold still reproduces the reported accuracy
        CHECK(e.acc_at_eer == 0.0);
        CHECK(e.acc_at_eer == accuracy_at(s, e.threshold));
    }
    SUBCASE("coin-flip scores land mid-scale") {
        ScoredSet s{{0.5, 0.5}, {1, 0}};
        const EerResult e = eer_and_acc(s);
        CHECK(e.eer == 50.0);
    }
}

TEST_CASE("threshold rule counts ties as fake") {
    ScoredSet s{{0.5, 0.5}, {1, 0}};
    CHECK(accuracy_at(s, 0.5) == 50.0);
    ScoredSet t{{0.5, 0.4}, {1, 0}};
    CHECK(accuracy_at(t, 0.5) == 100.0);
}

TEST_CASE("input validation") {
    CHECK_THROWS_AS(roc_auc({{}, {}}), DataError);
    CHECK_THROWS_AS(roc_auc({{0.5}, {1, 0}}), DataError);
    CHECK_THROWS_AS(roc_auc({{0.5, 0.4}, {1, 2}}), DataError);
    CHECK_THROWS_AS(roc_auc({{0.5, 0.4}, {1, 1}}), DataError);  // one class
    CHECK_THROWS_AS(average_precision({{0.5, 0.4}, {0, 0}}), DataError);
    const double bad = std::nan("");
    CHECK_THROWS_AS(roc_auc({{bad, 0.4}, {1, 0}}), DataError);
    // accuracy is defined even for a single class
    CHECK(accuracy_at({{0.8, 0.7}, {1, 1}}, 0.5) == 100.0);
}

TEST_CASE("evaluation report with per-generator breakdown") {
    // generator "a" fakes are separable, "b" fakes overlap the reals
    ScoredSet s;
    std::vector<std::string> tags;
    s.scores = {0.9, 0.85, 0.25, 0.15, 0.2, 0.1};
    s.labels = {1, 1, 1, 1, 0, 0};
    tags = {"a", "a", "b", "b", "-", "-"};

    const EvalReport r = evaluate(s, tags);
    CHECK(r.per_generator.size() == 2);
    CHECK(r.per_generator.count("a") == 1);
    CHECK(r.per_generator.count("b") == 1);
    CHECK(r.per_generator.count("-") == 0);  // reals are the shared pool, not a group

    ScoredSet only_a{{0.9, 0.85, 0.2, 0.1}, {1, 1, 0, 0}};
    CHECK(r.per_generator.at("a").auroc == roc_auc(only_a));
    CHECK(r.per_generator.at("a").ap == average_precision(only_a));
    CHECK(r.per_generator.at("a").auroc == 100.0);
    CHECK(r.per_generator.at("b").auroc < 100.0);

    CHECK(r.auroc == roc_auc(s));
    CHECK(r.acc == accuracy_at(s, 0.5));
    CHECK(r.eer_threshold > 0.0);
    CHECK(r.acc_at_eer == accuracy_at(s, r.eer_threshold));

    SUBCASE("text formatting carries two decimals") {
        const std::string text = r.text();
        CHECK(text.find("auroc: 100.00") != std::string::npos);
        CHECK(text.find("[a]") != std::string::npos);
        CHECK(text.find("[b]") != std::string::npos);
        CHECK(text.find("\n  auroc:") != std::string::npos);  // indented leaf
    }
    SUBCASE("machine report round-trips") {
        const auto j = nlohmann::json::parse(r.json());
        CHECK(j["auroc"].get<double>() == r.auroc);
        CHECK(j["per_generator"]["a"]["auroc"].get<double>() == 100.0);
        CHECK(j["per_generator"].size() == 2);
    }
    SUBCASE("tag count must match") {
        CHECK_THROWS_AS(evaluate(s, {"a", "b"}), DataError);
    }
    SUBCASE("tags on real clips never form groups") {
        const EvalReport r2 = evaluate(s, {"a", "a", "b", "b", "real", "real"});
        CHECK(r2.per_generator.size() == 2);
        CHECK(r2.per_generator.count("real") == 0);
    }
}

TEST_CASE("report without tags has no breakdown") {
    ScoredSet s{{0.9, 0.1}, {1, 0}};
    const EvalReport r = evaluate(s);
    CHECK(r.per_generator.empty());
    const auto j = nlohmann::json::parse(r.json());
    CHECK(j.count("per_generator") == 0);
}
