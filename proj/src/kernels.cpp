#include "systemmatch/kernels.hpp"

#include <cmath>
#include <limits>

namespace systemmatch::kernels {

namespace {

inline double row_distance(const Matrix& a, Eigen::Index i, const Matrix& b, Eigen::Index j) {
    return std::sqrt((a.row(i) - b.row(j)).squaredNorm());
}

inline double swapped_cost(const Eigen::MatrixXd& dist,
                           std::size_t slot,
                           std::size_t candidate,
                           const NearestTwo& assignment)
{
    double total = 0;
    const auto n = static_cast<std::size_t>(dist.rows());
    for (std::size_t p = 0; p < n; ++p) {
        double kept = (assignment.nearest[p] == slot ? assignment.second_distance[p] : assignment.nearest_distance[p]);
        total += std::min(kept, dist(p, candidate));
    }
    return total;
}

}

Eigen::MatrixXd euclidean_cost_serial(const Matrix& rows, const Matrix& cols) {
    Eigen::MatrixXd out(rows.rows(), cols.rows());
    for (Eigen::Index i = 0; i < rows.rows(); ++i) {
        for (Eigen::Index j = 0; j < cols.rows(); ++j) {
            out(i, j) = row_distance(rows, i, cols, j);
        }
    }
    return out;
}

Eigen::MatrixXd euclidean_cost_parallel(const Matrix& rows, const Matrix& cols) {
    Eigen::MatrixXd out(rows.rows(), cols.rows());
    const Eigen::Index n_rows = rows.rows(), n_cols = cols.rows();
    #pragma omp parallel for schedule(static)
    for (Eigen::Index i = 0; i < n_rows; ++i) {
        for (Eigen::Index j = 0; j < n_cols; ++j) {
            out(i, j) = row_distance(rows, i, cols, j);
        }
    }
    return out;
}

Eigen::MatrixXd euclidean_cost(const Matrix& rows, const Matrix& cols, Execution exec) {
    return exec == Execution::serial ? euclidean_cost_serial(rows, cols) : euclidean_cost_parallel(rows, cols);
}

NearestTwo nearest_two(const Eigen::MatrixXd& dist, std::span<const std::size_t> medoids) {
    const auto n = static_cast<std::size_t>(dist.rows());
    constexpr double inf = std::numeric_limits<double>::infinity();
    NearestTwo out{std::vector<std::size_t>(n, 0), std::vector<double>(n, inf), std::vector<double>(n, inf)};
    for (std::size_t p = 0; p < n; ++p) {
        for (std::size_t m = 0; m < medoids.size(); ++m) {
            double d = dist(p, medoids[m]);
            if (d < out.nearest_distance[p]) {
                out.second_distance[p] = out.nearest_distance[p];
                out.nearest_distance[p] = d;
                out.nearest[p] = m;
            } else if (d < out.second_distance[p]) {
                out.second_distance[p] = d;
            }
        }
    }
    return out;
}

Eigen::MatrixXd swap_costs_serial(const Eigen::MatrixXd& dist,
                                  std::span<const std::size_t> swappable,
                                  std::span<const std::size_t> candidates,
                                  const NearestTwo& assignment)
{
    Eigen::MatrixXd out(swappable.size(), candidates.size());
    for (std::size_t s = 0; s < swappable.size(); ++s) {
        for (std::size_t c = 0; c < candidates.size(); ++c) {
            out(s, c) = swapped_cost(dist, swappable[s], candidates[c], assignment);
        }
    }
    return out;
}

Eigen::MatrixXd swap_costs_parallel(const Eigen::MatrixXd& dist,
                                    std::span<const std::size_t> swappable,
                                    std::span<const std::size_t> candidates,
                                    const NearestTwo& assignment)
{
    Eigen::MatrixXd out(swappable.size(), candidates.size());
    const auto n_swap = static_cast<long long>(swappable.size());
    const auto n_cand = static_cast<long long>(candidates.size());
    #pragma omp parallel for collapse(2) schedule(static)
    for (long long s = 0; s < n_swap; ++s) {
        for (long long c = 0; c < n_cand; ++c) {
            out(s, c) = swapped_cost(dist, swappable[s], candidates[c], assignment);
        }
    }
    return out;
}

Eigen::MatrixXd swap_costs(const Eigen::MatrixXd& dist,
                           std::span<const std::size_t> swappable,
                           std::span<const std::size_t> candidates,
                           const NearestTwo& assignment,
                           Execution exec)
{
    return exec == Execution::serial
        ? swap_costs_serial(dist, swappable, candidates, assignment)
        : swap_costs_parallel(dist, swappable, candidates, assignment);
}

}
