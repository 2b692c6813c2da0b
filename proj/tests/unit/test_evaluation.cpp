#include "maglive/error.hpp"
#include "maglive/evaluation.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

namespace maglive::eval {
namespace {

std::vector<ScoredSample> make(const std::vector<double>& attacks, const std::vector<double>& humans) {
    std::vector<ScoredSample> s;
    for (double v : attacks) s.push_back({v, 0, {}});
    for (double v : humans) s.push_back({v, 1, {}});
    return s;
}

std::vector<ScoredSample> random_set(std::mt19937_64& rng, std::size_t n, bool coarse) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<ScoredSample> s;
    for (std::size_t i = 0; i < n; ++i) {
        const int label = i < 2 ? static_cast<int>(i) : static_cast<int>(rng() % 2);
        double v = std::clamp(u(rng) * 0.7 + (label ? 0.3 : 0.0), 0.0, 1.0);
        if (coarse) v = std::round(v * 20) / 20;  // force ties
        s.push_back({v, label, {}});
    }
    return s;
}

// Step-function rates sampled on a dense grid, interpolated at the first sign
// change of FAR - FRR. Independent of the implementation's knot placement.
double grid_eer(const std::vector<ScoredSample>& s) {
    auto rates = [&](double t) {
        double fa = 0, fr = 0, na = 0, nh = 0;
        for (const auto& x : s) {
            if (x.label) nh += 1, fr += x.score > t ? 0 : 1;
            else na += 1, fa += x.score > t ? 1 : 0;
        }
        return std::pair{fa / na, fr / nh};
    };
    const int steps = 10000;
    auto [f0, r0] = rates(-1e-3);
    if (f0 - r0 <= 0) return f0;
    for (int k = 0; k <= steps; ++k) {
        const double t = static_cast<double>(k) / steps;
        auto [f1, r1] = rates(t);
        const double d0 = f0 - r0, d1 = f1 - r1;
        if (d1 <= 0) {
            if (d1 == 0) return f1;
            const double a = d0 / (d0 - d1);
            return f0 + a * (f1 - f0);
        }
        f0 = f1, r0 = r1;
    }
    return f0;
}

double pairwise_auc(const std::vector<ScoredSample>& s) {
    double wins = 0, pairs = 0;
    for (const auto& h : s)
        for (const auto& a : s) {
            if (h.label != 1 || a.label != 0) continue;
            pairs += 1;
            wins += h.score > a.score ? 1.0 : h.score == a.score ? 0.5 : 0.0;
        }
    return wins / pairs;
}

TEST(Confusion, PerfectSeparation) {
    const auto r = confusion_rates(make({0.1, 0.2}, {0.8, 0.9}), 0.5);
    EXPECT_EQ(r.bac, 1.0);
    EXPECT_EQ(r.far, 0.0);
    EXPECT_EQ(r.frr, 0.0);
}

TEST(Confusion, TiesAtThresholdReject) {
    const auto r = confusion_rates(make({0.5, 0.5}, {0.5, 0.5}), 0.5);
    EXPECT_EQ(r.far, 0.0);
    EXPECT_EQ(r.frr, 1.0);
    EXPECT_EQ(r.bac, 0.5);
}

TEST(Confusion, FourSampleHandCount) {
    const auto r = confusion_rates(make({0.6, 0.2}, {0.8, 0.4}), 0.5);
    EXPECT_EQ(r.far, 0.5);
    EXPECT_EQ(r.frr, 0.5);
    EXPECT_EQ(r.bac, 0.5);
}

TEST(Confusion, SingleClassIsEvaluationError) {
    EXPECT_THROW(confusion_rates(make({}, {0.3, 0.6}), 0.5), EvaluationError);
    EXPECT_THROW(eer(make({0.1}, {})), EvaluationError);
    EXPECT_THROW(roc_auc(make({0.1}, {})), EvaluationError);
}

TEST(Eer, PerfectSeparationIsZero) {
    EXPECT_EQ(eer(make({0.1, 0.2, 0.3}, {0.7, 0.8})).eer, 0.0);
}

TEST(Eer, InvertedScoresGiveOne) {
    EXPECT_NEAR(eer(make({0.8, 0.9}, {0.1, 0.2, 0.3})).eer, 1.0, 1e-12);
    EXPECT_NEAR(grid_eer(make({0.8, 0.9}, {0.1, 0.2, 0.3})), 1.0, 1e-12);
}

TEST(Eer, MatchesDenseGridOracle) {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 100; ++trial) {
        const auto s = random_set(rng, 50, trial % 3 == 0);
        EXPECT_NEAR(eer(s).eer, grid_eer(s), 1e-3) << "trial " << trial;
    }
}

TEST(Eer, BacAtEerThresholdIsOneMinusEer) {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 100; ++trial) {
        const auto s = random_set(rng, 40, trial % 2 == 0);
        const auto e = eer(s);
        EXPECT_NEAR(interpolated_rates(s, e.threshold).bac, 1.0 - e.eer, 1e-6) << trial;
    }
}

TEST(Auc, PerfectAndIdentical) {
    EXPECT_EQ(roc_auc(make({0.1, 0.2}, {0.8, 0.9})).auc, 1.0);
    EXPECT_EQ(roc_auc(make({0.1, 0.4, 0.4}, {0.4, 0.1, 0.4})).auc, 0.5);
}

TEST(Auc, MatchesPairwiseOracleExactly) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        const auto s = random_set(rng, 20 + trial % 30, trial % 2 == 0);
        EXPECT_EQ(roc_auc(s).auc, pairwise_auc(s)) << trial;
    }
}

TEST(Auc, InvariantUnderMonotoneTransform) {
    std::mt19937_64 rng(4);
    auto s = random_set(rng, 60, true);
    const double a = roc_auc(s).auc;
    for (auto& x : s) x.score = std::pow(x.score, 3.0) * 0.5 + 0.1;
    EXPECT_EQ(roc_auc(s).auc, a);
}

TEST(Roc, RatesNonIncreasingInThreshold) {
    std::mt19937_64 rng(5);
    const auto roc = roc_auc(random_set(rng, 80, true));
    for (std::size_t i = 1; i < roc.curve.size(); ++i) {
        EXPECT_GT(roc.curve[i].threshold, roc.curve[i - 1].threshold);
        EXPECT_LE(roc.curve[i].tar, roc.curve[i - 1].tar);
        EXPECT_LE(roc.curve[i].far, roc.curve[i - 1].far);
    }
}

TEST(Command, Examples) {
    EXPECT_TRUE(command_verdict({0.9, 0.8, 0.7}, 0.5));
    EXPECT_FALSE(command_verdict({0.9, 0.4}, 0.5));
    EXPECT_THROW(command_verdict({}, 0.5), EvaluationError);
}

TEST(Command, ExhaustiveThreeWordFrr) {
    // Each word of a human command is independently rejected with p = 0.5;
    // enumerate all 8 equally likely outcomes.
    int rejected = 0;
    for (int mask = 0; mask < 8; ++mask) {
        std::vector<double> scores;
        for (int w = 0; w < 3; ++w) scores.push_back(mask >> w & 1 ? 0.2 : 0.9);
        rejected += !command_verdict(scores, 0.5);
    }
    EXPECT_EQ(rejected, 7);
    EXPECT_DOUBLE_EQ(rejected / 8.0, 1.0 - std::pow(0.5, 3));
}

TEST(Command, RepeatedWordEqualsSingleWord) {
    for (double s : {0.1, 0.5, 0.51, 0.99})
        for (std::size_t k = 1; k <= 5; ++k)
            EXPECT_EQ(command_verdict(std::vector<double>(k, s), 0.5), command_verdict({s}, 0.5));
}

TEST(Command, GroupingAndCommandFarNeverExceedsWordFar) {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u;
    std::vector<ScoredSample> s;
    for (int c = 0; c < 40; ++c)
        for (int w = 0; w < 3; ++w) {
            ScoredSample x;
            x.label = c % 2;
            x.score = u(rng);
            x.meta = {x.label ? Label::human : Label::loudspeaker, "u", "d", "c", "cmd" + std::to_string(c)};
            s.push_back(x);
        }
    const auto report = evaluate(s);
    EXPECT_EQ(report.commands.size(), 40u);
    EXPECT_LE(report.command_rates.far, report.at_threshold.far);
    EXPECT_GE(report.command_rates.frr, report.at_threshold.frr);
}

std::vector<ScoredSample> with_group(std::vector<ScoredSample> s, const std::string& user) {
    for (auto& x : s) x.meta.user_id = user;
    return s;
}

TEST(Groups, IdenticalGroupsGiveIdenticalRows) {
    auto s = with_group(make({0.1, 0.6, 0.3}, {0.7, 0.4}), "a");
    auto t = with_group(make({0.1, 0.6, 0.3}, {0.7, 0.4}), "b");
    s.insert(s.end(), t.begin(), t.end());
    const auto table = group_breakdown(s, GroupKey::user, 0.5);
    ASSERT_EQ(table.rows.size(), 2u);
    EXPECT_EQ(table.rows[0].bac, table.rows[1].bac);
    EXPECT_EQ(table.rows[0].eer, table.rows[1].eer);
}

TEST(Groups, SingleGroupEqualsGlobal) {
    std::mt19937_64 rng(7);
    const auto s = with_group(random_set(rng, 30, false), "only");
    const auto table = group_breakdown(s, GroupKey::user, 0.5);
    ASSERT_EQ(table.rows.size(), 1u);
    EXPECT_EQ(table.rows[0].bac, confusion_rates(s, 0.5).bac);
    EXPECT_EQ(table.rows[0].eer, eer(s).eer);
    EXPECT_EQ(table.macro_bac, table.rows[0].bac);
}

TEST(Groups, ThreeGroupsMatchManualAndFlagDegenerate) {
    auto a = with_group(make({0.2}, {0.9}), "a");           // bac 1
    auto b = with_group(make({0.7, 0.1}, {0.6, 0.3}), "b");  // far .5, frr .5
    auto c = with_group(make({0.2, 0.4}, {}), "c");         // attacks only
    std::vector<ScoredSample> s = a;
    s.insert(s.end(), b.begin(), b.end());
    s.insert(s.end(), c.begin(), c.end());
    const auto table = group_breakdown(s, GroupKey::user, 0.5);
    ASSERT_EQ(table.rows.size(), 3u);
    std::map<std::string, GroupRow> rows;
    for (const auto& r : table.rows) rows[r.group] = r;
    EXPECT_EQ(rows["a"].bac, 1.0);
    EXPECT_EQ(rows["b"].bac, 0.5);
    EXPECT_EQ(rows["b"].eer, eer(b).eer);
    EXPECT_TRUE(rows["c"].degenerate);
    EXPECT_DOUBLE_EQ(table.macro_bac, 0.75);
}

double dist(const std::array<double, 2>& a, const std::array<double, 2>& b) {
    return std::hypot(a[0] - b[0], a[1] - b[1]);
}

TEST(Pca, PlanarDataKeepsPairwiseDistances) {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> g;
    std::vector<std::vector<double>> f;
    for (int i = 0; i < 20; ++i) {
        std::vector<double> v(128, 0.0);
        v[5] = 3.0 * g(rng);
        v[77] = g(rng);
        f.push_back(v);
    }
    const auto p = pca_project(f, 1);
    for (std::size_t i = 0; i < f.size(); ++i)
        for (std::size_t j = i + 1; j < f.size(); ++j)
            EXPECT_NEAR(dist(p.points[i], p.points[j]), std::hypot(f[i][5] - f[j][5], f[i][77] - f[j][77]), 1e-6);
}

TEST(Pca, IdenticalVectorsAreDegenerate) {
    const auto p = pca_project(std::vector<std::vector<double>>(5, std::vector<double>(128, 2.0)));
    EXPECT_TRUE(p.degenerate);
    for (const auto& pt : p.points) EXPECT_EQ(pt, (std::array<double, 2>{0.0, 0.0}));
}

TEST(Pca, SeparatedClustersStaySeparated) {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> g(0.0, 0.3);
    std::vector<std::vector<double>> f;
    for (int i = 0; i < 40; ++i) {
        std::vector<double> v(128);
        for (auto& x : v) x = g(rng) + (i < 20 ? 2.0 : -2.0) * 0.1;
        v[0] += i < 20 ? 5.0 : -5.0;
        f.push_back(v);
    }
    const auto p = pca_project(f);
    std::array<double, 2> c[2] = {{0, 0}, {0, 0}};
    for (int i = 0; i < 40; ++i)
        for (int k = 0; k < 2; ++k) c[i < 20 ? 0 : 1][k] += p.points[i][k] / 20.0;
    double radius = 0.0;
    for (int i = 0; i < 40; ++i) radius += dist(p.points[i], c[i < 20 ? 0 : 1]) / 40.0;
    EXPECT_GT(dist(c[0], c[1]), radius);
}

TEST(Pca, TooFewVectorsIsEvaluationError) {
    EXPECT_THROW(pca_project({{1.0}, {2.0}}), EvaluationError);
}

TEST(Report, RatesAreProbabilities) {
    std::mt19937_64 rng(10);
    const auto r = evaluate(random_set(rng, 100, false));
    for (double v : {r.at_threshold.bac, r.at_threshold.far, r.at_threshold.frr, r.eer.eer, r.roc.auc}) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
    EXPECT_NEAR(r.at_eer.bac, 1.0 - r.eer.eer, 1e-6);
}

}  // namespace
}  // namespace maglive::eval
