#ifndef SYSTEMMATCH_TRANSPORT_HPP
#define SYSTEMMATCH_TRANSPORT_HPP

#include <cstdint>
#include <span>

#include <Eigen/Dense>

/**
 * @file transport.hpp
 * @brief Exact solver for the balanced transportation problem.
 *
 * The solver runs the primal network simplex on the complete bipartite graph between supply and demand nodes,
 * keeping a spanning-tree basis of `m + n - 1` cells.
 * Masses are integers so that flows are exact; uniform empirical distributions are handled by
 * `solve_uniform_transport()`, which scales each side by the other side's size.
 */

namespace systemmatch {

struct TransportOptions {
    /**
     * Number of arcs priced per block before the best candidate is taken.
     * Zero selects `ceil(sqrt(m * n))`.
     */
    std::size_t block_size = 0;

    /**
     * Consecutive degenerate pivots tolerated before switching permanently to Bland's rule,
     * which cannot cycle. Zero selects `10 * (m + n)`.
     */
    std::size_t degenerate_limit = 0;

    /**
     * Hard cap on pivots. Zero selects a bound proportional to `m * n`.
     * Exceeding it raises `NumericError`.
     */
    std::size_t max_iterations = 0;
};

struct TransportSolution {
    /** Integer flows, `m` by `n`; rows sum to the supplies, columns to the demands. */
    Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> flow;
    /** Sum of `flow(i, j) * cost(i, j)`. */
    double cost = 0;
    std::size_t iterations = 0;
    bool used_bland = false;
};

/**
 * Minimize `sum(flow .* cost)` subject to row sums equal to `supply` and column sums equal to `demand`.
 * @param cost `m` by `n` matrix of finite, non-negative costs.
 * @param supply Positive integer masses, one per row.
 * @param demand Positive integer masses, one per column; must have the same total as `supply`.
 */
TransportSolution solve_transport(const Eigen::MatrixXd& cost,
                                  std::span<const std::int64_t> supply,
                                  std::span<const std::int64_t> demand,
                                  const TransportOptions& options = {});

/**
 * @brief Optimal coupling of two uniform empirical distributions.
 */
struct FlowMatrix {
    /** `m` by `n`; rows sum to `1/m` and columns to `1/n`. */
    Eigen::MatrixXd flows;
    /** Sum of `flows(i, j) * cost(i, j)`. */
    double cost = 0;
};

/**
 * Earth mover's distance between uniform masses on the rows and columns of `cost`.
 */
FlowMatrix solve_uniform_transport(const Eigen::MatrixXd& cost, const TransportOptions& options = {});

}

#endif
