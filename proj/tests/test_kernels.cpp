#include <gtest/gtest.h>

#include <random>

#include "systemmatch/errors.hpp"
#include "systemmatch/kernels.hpp"

using namespace systemmatch;
using namespace systemmatch::kernels;

namespace {

Matrix random_matrix(int rows, int cols, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    Matrix m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = normal(rng);
    return m;
}

}

TEST(EuclideanCost, SerialMatchesParallelExactly) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto a = random_matrix(37, 11, seed), b = random_matrix(23, 11, seed + 50);
        auto s = euclidean_cost_serial(a, b);
        auto p = euclidean_cost_parallel(a, b);
        EXPECT_EQ(s, p);
        EXPECT_NEAR(s(3, 4), (a.row(3) - b.row(4)).norm(), 1e-12);
    }
}

TEST(FillGrid, SerialMatchesParallel) {
    auto fn = [](std::size_t i, std::size_t j) { return std::sin(double(i) * 7 + double(j)); };
    EXPECT_EQ(fill_grid(13, 17, fn, Execution::serial), fill_grid(13, 17, fn, Execution::parallel));
}

TEST(FillGrid, RethrowsLowestIndexError) {
    auto fn = [](std::size_t i, std::size_t j) -> double {
        if (i * 10 + j >= 42) throw DataError("cell " + std::to_string(i * 10 + j));
        return 0;
    };
    try {
        fill_grid(10, 10, fn, Execution::parallel);
        FAIL();
    } catch (const DataError& e) {
        EXPECT_STREQ(e.what(), "cell 42");
    }
}

TEST(NearestTwo, TracksBestAndRunnerUp) {
    Eigen::MatrixXd d(3, 3);
    d << 0, 1, 5,
         1, 0, 2,
         5, 2, 0;
    std::vector<std::size_t> medoids{0, 2};
    auto a = nearest_two(d, medoids);
    EXPECT_EQ(a.nearest[1], 0u);
    EXPECT_EQ(a.nearest_distance[1], 1.0);
    EXPECT_EQ(a.second_distance[1], 2.0);
    EXPECT_EQ(a.nearest[2], 1u);  // index into the medoid list, so point 2
    EXPECT_EQ(a.nearest_distance[2], 0.0);
    EXPECT_EQ(a.second_distance[2], 5.0);
}

TEST(SwapCosts, SerialMatchesParallelAndBruteForce) {
    auto pts = random_matrix(30, 3, 8);
    Eigen::MatrixXd d = euclidean_cost_serial(pts, pts);
    std::vector<std::size_t> medoids{0, 5, 9};
    std::vector<std::size_t> slots{1, 2};  // medoid 0 stays fixed
    std::vector<std::size_t> candidates;
    for (std::size_t i = 10; i < 30; ++i) candidates.push_back(i);
    auto assignment = nearest_two(d, medoids);
    auto s = swap_costs_serial(d, slots, candidates, assignment);
    auto p = swap_costs_parallel(d, slots, candidates, assignment);
    EXPECT_EQ(s, p);

    for (std::size_t si = 0; si < slots.size(); ++si) {
        for (std::size_t c = 0; c < candidates.size(); ++c) {
            auto swapped = medoids;
            swapped[slots[si]] = candidates[c];
            double total = 0;
            for (int i = 0; i < 30; ++i) {
                double best = 1e300;
                for (auto m : swapped) best = std::min(best, d(i, m));
                total += best;
            }
            EXPECT_NEAR(s(si, c), total, 1e-12);
        }
    }
}
