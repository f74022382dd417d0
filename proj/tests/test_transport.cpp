#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "systemmatch/errors.hpp"
#include "systemmatch/transport.hpp"

using namespace systemmatch;

TEST(LpOracle, SmallKnownProblem) {
    // Two sources, two sinks, crossing is cheap.
    Eigen::MatrixXd cost(2, 2);
    cost << 5, 1,
            1, 5;
    EXPECT_NEAR(oracle::emd_by_lp(cost), 1.0, 1e-12);
    EXPECT_NEAR(oracle::emd_by_permutations(cost), 1.0, 1e-12);
}

TEST(SolveTransport, MarginalsAndCostOnRandomInstances) {
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<int> size(1, 9);
    std::uniform_real_distribution<double> u(0, 10);
    for (int trial = 0; trial < 200; ++trial) {
        int m = size(rng), n = size(rng);
        Eigen::MatrixXd cost(m, n);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) cost(i, j) = u(rng);
        auto f = solve_uniform_transport(cost);
        for (int i = 0; i < m; ++i) EXPECT_NEAR(f.flows.row(i).sum(), 1.0 / m, 1e-9);
        for (int j = 0; j < n; ++j) EXPECT_NEAR(f.flows.col(j).sum(), 1.0 / n, 1e-9);
        EXPECT_GE(f.flows.minCoeff(), 0.0);
        EXPECT_NEAR(f.cost, (f.flows.array() * cost.array()).sum(), 1e-9);
        EXPECT_NEAR(f.cost, oracle::emd_by_lp(cost), 1e-9);
    }
}

TEST(SolveTransport, EqualSizesMatchPermutationOracle) {
    std::mt19937_64 rng(5);
    for (int n = 1; n <= 6; ++n) {
        for (int trial = 0; trial < 10; ++trial) {
            auto x = oracle::random_points(rng, n, 2), y = oracle::random_points(rng, n, 2);
            auto cost = oracle::euclidean(y, x);
            EXPECT_NEAR(solve_uniform_transport(cost).cost, oracle::emd_by_permutations(cost), 1e-9);
        }
    }
}

TEST(SolveTransport, IntegerMasses) {
    Eigen::MatrixXd cost(2, 3);
    cost << 1, 2, 3,
            4, 1, 1;
    std::vector<std::int64_t> supply{3, 2}, demand{1, 2, 2};
    auto s = solve_transport(cost, supply, demand);
    EXPECT_EQ(s.flow.row(0).sum(), 3);
    EXPECT_EQ(s.flow.row(1).sum(), 2);
    EXPECT_EQ(s.flow.col(2).sum(), 2);
    // Row 0 sends 1 to col 0 and 2 to col 1 (cost 5); row 1 sends 2 to col 2 (cost 2).
    EXPECT_DOUBLE_EQ(s.cost, 7.0);
}

TEST(SolveTransport, DegenerateInstancesTerminate) {
    // All-equal costs and many ties are the classic cycling setup.
    Eigen::MatrixXd cost = Eigen::MatrixXd::Ones(12, 12);
    auto f = solve_uniform_transport(cost);
    EXPECT_NEAR(f.cost, 1.0, 1e-12);

    Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(7, 5);
    EXPECT_EQ(solve_uniform_transport(zero).cost, 0.0);
}

TEST(SolveTransport, BlandFallbackGivesSameOptimum) {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> small(0, 3);
    for (int trial = 0; trial < 30; ++trial) {
        Eigen::MatrixXd cost(8, 6);
        for (int i = 0; i < 8; ++i)
            for (int j = 0; j < 6; ++j) cost(i, j) = small(rng);
        TransportOptions forced;
        forced.degenerate_limit = 1;
        auto a = solve_uniform_transport(cost);
        auto b = solve_uniform_transport(cost, forced);
        EXPECT_NEAR(a.cost, b.cost, 1e-12);
    }
}

TEST(SolveTransport, InvalidInputs) {
    Eigen::MatrixXd cost = Eigen::MatrixXd::Ones(2, 2);
    std::vector<std::int64_t> a{1, 1}, b{1, 2};
    EXPECT_THROW(solve_transport(cost, a, b), UsageError);
    std::vector<std::int64_t> neg{-1, 3};
    EXPECT_THROW(solve_transport(cost, neg, b), UsageError);
    Eigen::MatrixXd bad = cost;
    bad(0, 0) = std::nan("");
    EXPECT_THROW(solve_uniform_transport(bad), UsageError);
}

TEST(SolveTransport, IterationCapRaisesNumericError) {
    std::mt19937_64 rng(1);
    auto x = oracle::random_points(rng, 30, 3), y = oracle::random_points(rng, 30, 3);
    TransportOptions capped;
    capped.max_iterations = 1;
    EXPECT_THROW(solve_uniform_transport(oracle::euclidean(y, x), capped), NumericError);
}
