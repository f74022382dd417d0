#ifndef SYSTEMMATCH_KERNELS_HPP
#define SYSTEMMATCH_KERNELS_HPP

#include <cstddef>
#include <exception>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "expression.hpp"

/**
 * @file kernels.hpp
 * @brief Data-parallel inner loops, each with a serial reference and an OpenMP version.
 *
 * The serial versions are the reference for tests; both must produce bit-identical output
 * since every output slot is written by exactly one iteration with no cross-iteration reduction.
 */

namespace systemmatch::kernels {

enum class Execution { serial, parallel };

/**
 * Euclidean distance between every row of `rows` and every row of `cols`.
 * @return `rows.rows()` by `cols.rows()` matrix.
 */
Eigen::MatrixXd euclidean_cost_serial(const Matrix& rows, const Matrix& cols);
Eigen::MatrixXd euclidean_cost_parallel(const Matrix& rows, const Matrix& cols);
Eigen::MatrixXd euclidean_cost(const Matrix& rows, const Matrix& cols, Execution exec = Execution::parallel);

/**
 * Evaluate `fn(i, j)` for every cell of an `n_rows` by `n_cols` grid.
 */
template<typename Function_>
Eigen::MatrixXd fill_grid(std::size_t n_rows, std::size_t n_cols, Function_ fn, Execution exec = Execution::parallel) {
    Eigen::MatrixXd out(n_rows, n_cols);
    const auto total = static_cast<long long>(n_rows * n_cols);
    if (exec == Execution::serial) {
        for (long long t = 0; t < total; ++t) {
            out(t / n_cols, t % n_cols) = fn(static_cast<std::size_t>(t / n_cols), static_cast<std::size_t>(t % n_cols));
        }
        return out;
    }

    // Exceptions cannot cross the parallel region; keep the one from the lowest cell index.
    std::exception_ptr error;
    long long error_at = total;
    #pragma omp parallel for schedule(dynamic)
    for (long long t = 0; t < total; ++t) {
        try {
            out(t / n_cols, t % n_cols) = fn(static_cast<std::size_t>(t / n_cols), static_cast<std::size_t>(t % n_cols));
        } catch (...) {
            #pragma omp critical(systemmatch_fill_grid)
            {
                if (t < error_at) {
                    error_at = t;
                    error = std::current_exception();
                }
            }
        }
    }
    if (error) {
        std::rethrow_exception(error);
    }
    return out;
}

/**
 * @brief Per-point assignment summary used to price medoid swaps.
 */
struct NearestTwo {
    std::vector<std::size_t> nearest;  ///< index into the medoid list
    std::vector<double> nearest_distance;
    std::vector<double> second_distance; ///< infinity if there is only one medoid
};

/**
 * Nearest and second-nearest medoid of every point.
 * @param dist Symmetric point-by-point distance matrix.
 * @param medoids Point indices acting as medoids.
 */
NearestTwo nearest_two(const Eigen::MatrixXd& dist, std::span<const std::size_t> medoids);

/**
 * Total assignment cost after replacing medoid `medoids[swappable[s]]` by point `candidates[c]`,
 * for every `(s, c)`.
 * @return `swappable.size()` by `candidates.size()` matrix.
 */
Eigen::MatrixXd swap_costs_serial(const Eigen::MatrixXd& dist,
                                  std::span<const std::size_t> swappable,
                                  std::span<const std::size_t> candidates,
                                  const NearestTwo& assignment);
Eigen::MatrixXd swap_costs_parallel(const Eigen::MatrixXd& dist,
                                    std::span<const std::size_t> swappable,
                                    std::span<const std::size_t> candidates,
                                    const NearestTwo& assignment);
Eigen::MatrixXd swap_costs(const Eigen::MatrixXd& dist,
                           std::span<const std::size_t> swappable,
                           std::span<const std::size_t> candidates,
                           const NearestTwo& assignment,
                           Execution exec = Execution::parallel);

}

#endif
