#ifndef SYSTEMMATCH_TEST_ORACLES_HPP
#define SYSTEMMATCH_TEST_ORACLES_HPP

// Slow, independent reference implementations used only by tests.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

/**
 * min c'x subject to A x = b, x >= 0, with b >= 0.
 * Two-phase dense tableau simplex with Bland's rule. Returns the optimal objective.
 */
inline double lp_equality_min(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, const Eigen::VectorXd& c) {
    const int m = static_cast<int>(A.rows()), n = static_cast<int>(A.cols());
    const double eps = 1e-10;

    // Columns: n originals, m artificials, then the right-hand side.
    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(m, n + m + 1);
    T.leftCols(n) = A;
    T.block(0, n, m, m).setIdentity();
    T.col(n + m) = b;
    std::vector<int> basis(m);
    std::iota(basis.begin(), basis.end(), n);
    std::vector<bool> row_alive(m, true);

    auto pivot = [&](int r, int col) {
        T.row(r) /= T(r, col);
        for (int i = 0; i < m; ++i) {
            if (i != r && row_alive[i] && T(i, col) != 0) T.row(i) -= T(i, col) * T.row(r);
        }
        basis[r] = col;
    };

    auto solve = [&](const Eigen::VectorXd& cost, int allowed) {
        while (true) {
            // Reduced costs, recomputed from scratch each iteration.
            int enter = -1;
            for (int j = 0; j < allowed; ++j) {
                double rc = cost[j];
                for (int i = 0; i < m; ++i) {
                    if (row_alive[i]) rc -= cost[basis[i]] * T(i, j);
                }
                if (rc < -eps) {
                    enter = j;
                    break;
                }
            }
            if (enter < 0) return;
            int leave = -1;
            double best = std::numeric_limits<double>::infinity();
            for (int i = 0; i < m; ++i) {
                if (!row_alive[i] || T(i, enter) <= eps) continue;
                double ratio = T(i, n + m) / T(i, enter);
                if (ratio < best - eps || (std::abs(ratio - best) <= eps && basis[i] < basis[leave])) {
                    best = ratio;
                    leave = i;
                }
            }
            if (leave < 0) throw std::runtime_error("unbounded LP");
            pivot(leave, enter);
        }
    };

    Eigen::VectorXd phase1 = Eigen::VectorXd::Zero(n + m);
    phase1.tail(m).setOnes();
    solve(phase1, n + m);
    double infeasibility = 0;
    for (int i = 0; i < m; ++i) {
        if (basis[i] >= n) infeasibility += T(i, n + m);
    }
    if (infeasibility > 1e-8) throw std::runtime_error("infeasible LP");

    // Drive remaining artificials out of the basis, dropping redundant rows.
    for (int i = 0; i < m; ++i) {
        if (basis[i] < n) continue;
        int col = -1;
        for (int j = 0; j < n && col < 0; ++j) {
            if (std::abs(T(i, j)) > eps) col = j;
        }
        if (col < 0) {
            row_alive[i] = false;
        } else {
            pivot(i, col);
        }
    }

    Eigen::VectorXd phase2 = Eigen::VectorXd::Zero(n + m);
    phase2.head(n) = c;
    solve(phase2, n);
    double objective = 0;
    for (int i = 0; i < m; ++i) {
        if (row_alive[i]) objective += phase2[basis[i]] * T(i, n + m);
    }
    return objective;
}

/**
 * Wasserstein-1 between uniform empirical measures, cost rows index y cells and columns x cells.
 */
inline double emd_by_lp(const Eigen::MatrixXd& cost) {
    const int ny = static_cast<int>(cost.rows()), nx = static_cast<int>(cost.cols());
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(ny + nx, ny * nx);
    Eigen::VectorXd b(ny + nx), c(ny * nx);
    for (int i = 0; i < ny; ++i) {
        for (int j = 0; j < nx; ++j) {
            int v = i * nx + j;
            A(i, v) = 1;
            A(ny + j, v) = 1;
            c[v] = cost(i, j);
        }
    }
    b.head(ny).setConstant(1.0 / ny);
    b.tail(nx).setConstant(1.0 / nx);
    return lp_equality_min(A, b, c);
}

/**
 * Equal-size case: an optimal plan is a permutation (Birkhoff), so enumerate all of them.
 */
inline double emd_by_permutations(const Eigen::MatrixXd& cost) {
    const int n = static_cast<int>(cost.rows());
    std::vector<int> p(n);
    std::iota(p.begin(), p.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
        double total = 0;
        for (int i = 0; i < n; ++i) total += cost(i, p[i]);
        best = std::min(best, total);
    } while (std::next_permutation(p.begin(), p.end()));
    return best / n;
}

inline Eigen::MatrixXd euclidean(const Eigen::MatrixXd& rows, const Eigen::MatrixXd& cols) {
    Eigen::MatrixXd out(rows.rows(), cols.rows());
    for (Eigen::Index i = 0; i < rows.rows(); ++i) {
        for (Eigen::Index j = 0; j < cols.rows(); ++j) {
            out(i, j) = (rows.row(i) - cols.row(j)).norm();
        }
    }
    return out;
}

inline Eigen::MatrixXd random_points(std::mt19937_64& rng, int n, int d, double scale = 1.0) {
    std::normal_distribution<double> normal(0.0, scale);
    Eigen::MatrixXd out(n, d);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) out(i, j) = normal(rng);
    }
    return out;
}

/**
 * Score written out directly from its definition for a vector already in expected order.
 */
inline double score(const std::vector<double>& d) {
    const std::size_t n = d.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return d[a] < d[b]; });
    std::vector<std::size_t> rank(n);
    for (std::size_t r = 0; r < n; ++r) rank[idx[r]] = r + 1;
    double correct = 0;
    for (std::size_t i = 0; i < n; ++i) correct += rank[i] == i + 1;
    return (correct / n + (d.back() - d.front()) / d.back()) / 2;
}

}

#endif
