#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "systemmatch/errors.hpp"
#include "systemmatch/ranking.hpp"
#include "systemmatch/synthetic.hpp"

using namespace systemmatch;

namespace {

const DistanceMetricSpec l2log{MetricKind::l2_pseudobulk, Preprocessing::log_normalized};

StudyCollection log_study(double noise, std::uint64_t seed, std::size_t cells = 40) {
    SyntheticSpec spec;
    spec.noise = noise;
    spec.seed = seed;
    spec.cells_per_condition = cells;
    auto study = generate_synthetic(spec);
    const auto& c = study.collection;
    ConditionDataset target(c.target().condition_id, log_normalize(c.target().matrix), DatasetRole::target);
    std::vector<ConditionDataset> queries;
    for (const auto& q : c.queries()) queries.emplace_back(q.condition_id, log_normalize(q.matrix));
    return StudyCollection(target, queries, c.panel());
}

}

TEST(RankByDistance, SortsAndBreaksTiesById) {
    auto r = rank_by_distance({"a", "b", "c"}, {5, 2, 9}, l2log);
    ASSERT_EQ(r.entries.size(), 3u);
    EXPECT_EQ(r.entries[0].condition_id, "b");
    EXPECT_EQ(r.entries[1].condition_id, "a");
    EXPECT_EQ(r.entries[2].condition_id, "c");
    EXPECT_EQ(r.entries[2].rank, 3u);

    auto tie = rank_by_distance({"zeta", "alpha"}, {1, 1}, l2log);
    EXPECT_EQ(tie.entries[0].condition_id, "alpha");

    auto one = rank_by_distance({"only"}, {42}, l2log);
    EXPECT_EQ(one.entries[0].rank, 1u);
    EXPECT_THROW(rank_by_distance({}, {}, l2log), UsageError);
}

TEST(RankByDistance, InvariantUnderMonotoneTransform) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0, 5);
    std::vector<std::string> ids;
    std::vector<double> d, t;
    for (int i = 0; i < 20; ++i) {
        ids.push_back("q" + std::to_string(i));
        d.push_back(u(rng));
        t.push_back(std::exp(3 * d.back()) + 7);
    }
    auto a = rank_by_distance(ids, d, l2log), b = rank_by_distance(ids, t, l2log);
    for (int i = 0; i < 20; ++i) EXPECT_EQ(a.entries[i].condition_id, b.entries[i].condition_id);
}

TEST(ScoreMetric, HandExamples) {
    std::vector<double> perfect{0, 5, 10}, good{4, 5, 8}, swapped{5, 4, 8};
    EXPECT_EQ(score_metric(perfect).score, 1.0);
    EXPECT_EQ(score_metric(good).score, 0.75);
    EXPECT_NEAR(score_metric(swapped).score, (1.0 / 3 + 3.0 / 8) / 2, 1e-15);
    EXPECT_EQ(score_metric(swapped).ranks, (std::vector<std::size_t>{2, 1, 3}));
    EXPECT_EQ(score_metric(swapped).expected_ranks, (std::vector<std::size_t>{1, 2, 3}));
}

TEST(ScoreMetric, Errors) {
    std::vector<double> degenerate{1, 2, 0}, single{1};
    EXPECT_THROW(score_metric(degenerate), NumericError);
    EXPECT_THROW(score_metric(single), UsageError);
}

TEST(ScoreMetric, MatchesOracleAndIsScaleInvariant) {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(0.01, 10), scale(1e-3, 1e3);
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<double> d(2 + trial % 5);
        for (auto& v : d) v = u(rng);
        double s = score_metric(d).score;
        EXPECT_NEAR(s, oracle::score(d), 1e-14);
        EXPECT_LE(s, 1.0);
        double c = scale(rng);
        std::vector<double> scaled;
        for (double v : d) scaled.push_back(c * v);
        EXPECT_NEAR(score_metric(scaled).score, s, 1e-12);
    }
}

TEST(ScoreMetric, OneOnlyWhenPerfectAndNearestIsZero) {
    std::vector<double> a{0, 1, 2}, b{0.1, 1, 2}, c{0, 2, 1};
    EXPECT_EQ(score_metric(a).score, 1.0);
    EXPECT_LT(score_metric(b).score, 1.0);
    EXPECT_LT(score_metric(c).score, 1.0);
}

TEST(RankQueries, RecoversPlantedOrderForAllMetrics) {
    SyntheticSpec spec;
    spec.query_positions = {0.0, 1.0, 0.5};
    spec.cells_per_condition = 30;
    auto study = generate_synthetic(spec);
    const auto& c = study.collection;
    ConditionDataset target(c.target().condition_id, log_normalize(c.target().matrix), DatasetRole::target);
    std::vector<ConditionDataset> queries;
    for (const auto& q : c.queries()) queries.emplace_back(q.condition_id, log_normalize(q.matrix));
    StudyCollection logged(target, queries, c.panel());
    for (const auto& m : all_metrics()) {
        auto r = rank_queries(preprocess_for(logged, m.preprocessing), m);
        std::vector<std::string> got;
        for (const auto& e : r.entries) got.push_back(e.condition_id);
        EXPECT_EQ(got, study.planted_order) << to_string(m);
    }
}

TEST(CorruptionSweep, FullFractionIsDeterministicSingleRepeat) {
    auto c = log_study(0.1, 3);
    CorruptionProtocol p;
    p.fractions = {1.0};
    auto s = corruption_sweep(c, {"query0", "query1", "query2"}, {l2log}, p);
    ASSERT_EQ(s.cells.size(), 1u);
    EXPECT_EQ(s.cells[0].repeats, 1u);
    EXPECT_TRUE(s.cells[0].converged);
}

TEST(CorruptionSweep, InfiniteToleranceStopsAfterOneRepeat) {
    auto c = log_study(0.1, 3);
    CorruptionProtocol p;
    p.fractions = {1.0, 0.5, 0.2};
    p.convergence_tol = std::numeric_limits<double>::infinity();
    auto s = corruption_sweep(c, {"query0", "query1", "query2"}, {l2log}, p);
    for (const auto& cell : s.cells) EXPECT_EQ(cell.repeats, 1u);
}

TEST(CorruptionSweep, HonoursRepeatCap) {
    auto c = log_study(0.5, 3, 10);
    CorruptionProtocol p;
    p.fractions = {1.0, 0.1};
    p.max_repeats = 25;
    p.min_repeats = 5;
    p.convergence_tol = 1e-15;
    auto s = corruption_sweep(c, {"query0", "query1", "query2"}, {l2log}, p);
    EXPECT_EQ(s.cells[1].repeats + s.cells[1].skipped, 25u);
    EXPECT_FALSE(s.cells[1].converged);
}

TEST(CorruptionSweep, BitReproducibleAndScheduleIndependent) {
    auto c = log_study(0.2, 8, 15);
    CorruptionProtocol p;
    p.fractions = {1.0, 0.4};
    p.max_repeats = 30;
    p.seed = 77;
    std::vector<DistanceMetricSpec> specs{l2log, parse_metric("emdxzscore")};
    auto a = corruption_sweep(c, {"query0", "query1", "query2"}, specs, p);
    auto b = corruption_sweep(c, {"query0", "query1", "query2"}, specs, p, {}, kernels::Execution::serial);
    ASSERT_EQ(a.cells.size(), b.cells.size());
    for (std::size_t i = 0; i < a.cells.size(); ++i) {
        EXPECT_EQ(a.cells[i].scores, b.cells[i].scores);
        EXPECT_EQ(a.cells[i].mean_score, b.cells[i].mean_score);
    }
}

TEST(CorruptionSweep, ExpectedOrderMustCoverQueries) {
    auto c = log_study(0.1, 3);
    CorruptionProtocol p;
    EXPECT_THROW(corruption_sweep(c, {"query0", "query1"}, {l2log}, p), UsageError);
    EXPECT_THROW(corruption_sweep(c, {"query0", "query1", "nope"}, {l2log}, p), UsageError);
    EXPECT_THROW(corruption_sweep(c, {"query0", "query0", "query1"}, {l2log}, p), UsageError);
}

TEST(CompareMetrics, HandTrapezoid) {
    SweepResult s;
    auto a = parse_metric("l2xlog"), b = parse_metric("emdxlog");
    s.cells = {{a, 1.0, 0.8}, {a, 0.5, 0.6}, {b, 1.0, 0.7}, {b, 0.5, 0.7}};
    auto areas = compare_metrics(s);
    ASSERT_EQ(areas.size(), 2u);
    EXPECT_NEAR(areas[0].area, 0.35, 1e-15);
    EXPECT_NEAR(areas[1].area, 0.35, 1e-15);
    EXPECT_EQ(areas[0].metric, a);
}

TEST(CompareMetrics, DominatingCurveFirstAndSingleFraction) {
    SweepResult s;
    auto a = parse_metric("l2xlog"), b = parse_metric("emdxlog");
    s.cells = {{a, 1.0, 0.5}, {a, 0.2, 0.3}, {b, 1.0, 0.6}, {b, 0.2, 0.4}};
    EXPECT_EQ(compare_metrics(s)[0].metric, b);

    SweepResult single;
    single.cells = {{a, 1.0, 0.4}, {b, 1.0, 0.9}};
    auto areas = compare_metrics(single);
    EXPECT_EQ(areas[0].metric, b);
    EXPECT_EQ(areas[0].area, 0.9);

    SweepResult mismatched;
    mismatched.cells = {{a, 1.0, 0.4}, {a, 0.5, 0.4}, {b, 1.0, 0.9}};
    EXPECT_THROW(compare_metrics(mismatched), UsageError);
}
