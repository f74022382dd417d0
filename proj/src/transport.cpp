#include "systemmatch/transport.hpp"
#include "systemmatch/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace systemmatch {

namespace {

/**
 * Primal network simplex on the transportation tableau.
 *
 * Nodes `0..m-1` are supply rows, `m..m+n-1` are demand columns.
 * The basis always holds exactly `m + n - 1` arcs forming a spanning tree, including degenerate zero-flow arcs.
 */
class TransportSimplex {
public:
    TransportSimplex(const Eigen::MatrixXd& cost,
                     std::span<const std::int64_t> supply,
                     std::span<const std::int64_t> demand,
                     const TransportOptions& options) :
        my_m(cost.rows()),
        my_n(cost.cols()),
        my_cost(cost),
        my_cell_arc(static_cast<std::size_t>(my_m * my_n), -1),
        my_adjacency(my_m + my_n),
        my_potential(my_m + my_n),
        my_parent(my_m + my_n),
        my_parent_arc(my_m + my_n),
        my_depth(my_m + my_n)
    {
        const auto cells = static_cast<std::size_t>(my_m * my_n);
        my_block = options.block_size ? options.block_size
                                      : static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(cells))));
        my_block = std::max<std::size_t>(my_block, 1);
        my_degenerate_limit = options.degenerate_limit ? options.degenerate_limit : 10 * static_cast<std::size_t>(my_m + my_n);
        my_max_iterations = options.max_iterations ? options.max_iterations : 50 * cells + 10000;

        double max_cost = cells ? cost.maxCoeff() : 0.0;
        my_tolerance = 1e-11 * max_cost;

        northwest_corner(supply, demand);
    }

    TransportSolution solve() {
        TransportSolution out;
        std::size_t degenerate_streak = 0;

        while (true) {
            compute_potentials();
            auto entering = my_bland ? price_bland() : price_block();
            if (entering < 0) {
                break;
            }
            if (out.iterations == my_max_iterations) {
                throw NumericError("transportation simplex did not converge within " + std::to_string(my_max_iterations) + " pivots");
            }
            ++out.iterations;

            std::int64_t moved = pivot(entering);
            if (moved == 0) {
                if (++degenerate_streak > my_degenerate_limit) {
                    my_bland = true;
                }
            } else {
                degenerate_streak = 0;
            }
        }

        out.flow.setZero(my_m, my_n);
        for (const auto& arc : my_arcs) {
            out.flow(arc.row, arc.col) = arc.flow;
            out.cost += static_cast<double>(arc.flow) * my_cost(arc.row, arc.col);
        }
        out.used_bland = my_bland;
        return out;
    }

private:
    struct Arc {
        Eigen::Index row;
        Eigen::Index col;
        std::int64_t flow;
    };

    Eigen::Index my_m, my_n;
    const Eigen::MatrixXd& my_cost;

    std::vector<Arc> my_arcs;
    std::vector<int> my_cell_arc;
    std::vector<std::vector<int>> my_adjacency;

    std::vector<double> my_potential;
    std::vector<int> my_parent, my_parent_arc, my_depth;
    std::vector<int> my_queue;

    std::size_t my_block = 1, my_next_arc = 0;
    std::size_t my_degenerate_limit = 0, my_max_iterations = 0;
    double my_tolerance = 0;
    bool my_bland = false;

    std::vector<int> my_left, my_right, my_cycle;

    int col_node(Eigen::Index c) const { return static_cast<int>(my_m + c); }

    std::size_t cell(Eigen::Index r, Eigen::Index c) const { return static_cast<std::size_t>(r * my_n + c); }

    void add_arc(Eigen::Index r, Eigen::Index c, std::int64_t flow) {
        int id = static_cast<int>(my_arcs.size());
        my_arcs.push_back(Arc{r, c, flow});
        my_cell_arc[cell(r, c)] = id;
        my_adjacency[r].push_back(id);
        my_adjacency[col_node(c)].push_back(id);
    }

    void northwest_corner(std::span<const std::int64_t> supply, std::span<const std::int64_t> demand) {
        std::vector<std::int64_t> left_s(supply.begin(), supply.end()), left_d(demand.begin(), demand.end());
        my_arcs.reserve(my_m + my_n - 1);
        Eigen::Index i = 0, j = 0;
        while (true) {
            std::int64_t x = std::min(left_s[i], left_d[j]);
            add_arc(i, j, x);
            left_s[i] -= x;
            left_d[j] -= x;
            if (i == my_m - 1 && j == my_n - 1) {
                break;
            }
            if (left_s[i] == 0 && i < my_m - 1) {
                ++i;
            } else {
                ++j;
            }
        }
    }

    int other_end(const Arc& arc, int node) const {
        return node < my_m ? col_node(arc.col) : static_cast<int>(arc.row);
    }

    void compute_potentials() {
        const int n_nodes = static_cast<int>(my_m + my_n);
        std::fill(my_depth.begin(), my_depth.end(), -1);
        my_queue.clear();
        my_queue.push_back(0);
        my_potential[0] = 0;
        my_depth[0] = 0;
        my_parent[0] = -1;
        my_parent_arc[0] = -1;

        for (std::size_t head = 0; head < my_queue.size(); ++head) {
            int node = my_queue[head];
            for (int id : my_adjacency[node]) {
                const auto& arc = my_arcs[id];
                int next = other_end(arc, node);
                if (my_depth[next] >= 0) {
                    continue;
                }
                my_depth[next] = my_depth[node] + 1;
                my_parent[next] = node;
                my_parent_arc[next] = id;
                my_potential[next] = my_cost(arc.row, arc.col) - my_potential[node];
                my_queue.push_back(next);
            }
        }

        if (static_cast<int>(my_queue.size()) != n_nodes) {
            throw NumericError("transportation basis is not a spanning tree");
        }
    }

    double reduced_cost(std::size_t k) const {
        auto r = static_cast<Eigen::Index>(k / my_n), c = static_cast<Eigen::Index>(k % my_n);
        return my_cost(r, c) - my_potential[r] - my_potential[col_node(c)];
    }

    long long price_block() {
        const std::size_t cells = my_cell_arc.size();
        double best = -my_tolerance;
        long long best_arc = -1;
        std::size_t in_block = 0;
        for (std::size_t scanned = 0; scanned < cells; ++scanned) {
            std::size_t k = my_next_arc;
            my_next_arc = (my_next_arc + 1 == cells ? 0 : my_next_arc + 1);
            if (my_cell_arc[k] < 0) {
                double rc = reduced_cost(k);
                if (rc < best) {
                    best = rc;
                    best_arc = static_cast<long long>(k);
                }
            }
            if (++in_block == my_block) {
                if (best_arc >= 0) {
                    return best_arc;
                }
                in_block = 0;
            }
        }
        return best_arc;
    }

    long long price_bland() const {
        for (std::size_t k = 0; k < my_cell_arc.size(); ++k) {
            if (my_cell_arc[k] < 0 && reduced_cost(k) < -my_tolerance) {
                return static_cast<long long>(k);
            }
        }
        return -1;
    }

    std::int64_t pivot(long long entering) {
        auto r = static_cast<Eigen::Index>(entering / my_n), c = static_cast<Eigen::Index>(entering % my_n);

        // Tree path from the column node back to the row node closes the cycle.
        int a = static_cast<int>(r), b = col_node(c);
        my_left.clear();
        my_right.clear();
        while (a != b) {
            if (my_depth[a] > my_depth[b]) {
                my_right.push_back(my_parent_arc[a]);
                a = my_parent[a];
            } else {
                my_left.push_back(my_parent_arc[b]);
                b = my_parent[b];
            }
        }
        my_cycle.assign(my_left.begin(), my_left.end());
        my_cycle.insert(my_cycle.end(), my_right.rbegin(), my_right.rend());

        // Even positions lose flow, odd positions gain it.
        std::int64_t theta = std::numeric_limits<std::int64_t>::max();
        int leaving = -1;
        std::size_t leaving_cell = 0;
        for (std::size_t p = 0; p < my_cycle.size(); p += 2) {
            const auto& arc = my_arcs[my_cycle[p]];
            std::size_t k = cell(arc.row, arc.col);
            bool better = arc.flow < theta || (my_bland && arc.flow == theta && k < leaving_cell);
            if (better) {
                theta = arc.flow;
                leaving = my_cycle[p];
                leaving_cell = k;
            }
        }

        for (std::size_t p = 0; p < my_cycle.size(); ++p) {
            my_arcs[my_cycle[p]].flow += (p % 2 == 0 ? -theta : theta);
        }

        auto& slot = my_arcs[leaving];
        detach(static_cast<int>(slot.row), leaving);
        detach(col_node(slot.col), leaving);
        my_cell_arc[cell(slot.row, slot.col)] = -1;

        slot = Arc{r, c, theta};
        my_cell_arc[static_cast<std::size_t>(entering)] = leaving;
        my_adjacency[r].push_back(leaving);
        my_adjacency[col_node(c)].push_back(leaving);
        return theta;
    }

    void detach(int node, int id) {
        auto& adj = my_adjacency[node];
        auto it = std::find(adj.begin(), adj.end(), id);
        *it = adj.back();
        adj.pop_back();
    }
};

}

TransportSolution solve_transport(const Eigen::MatrixXd& cost,
                                  std::span<const std::int64_t> supply,
                                  std::span<const std::int64_t> demand,
                                  const TransportOptions& options)
{
    if (cost.rows() == 0 || cost.cols() == 0) {
        throw DataError("transportation problem has no supply or demand nodes");
    }
    if (static_cast<std::size_t>(cost.rows()) != supply.size() || static_cast<std::size_t>(cost.cols()) != demand.size()) {
        throw UsageError("cost matrix dimensions do not match the supply/demand vectors");
    }
    if (!cost.allFinite() || cost.minCoeff() < 0) {
        throw UsageError("transport costs must be finite and non-negative");
    }
    auto positive = [](std::int64_t x) { return x > 0; };
    if (!std::all_of(supply.begin(), supply.end(), positive) || !std::all_of(demand.begin(), demand.end(), positive)) {
        throw UsageError("transport masses must be positive");
    }
    if (std::accumulate(supply.begin(), supply.end(), std::int64_t{0}) != std::accumulate(demand.begin(), demand.end(), std::int64_t{0})) {
        throw UsageError("total supply and demand differ");
    }

    TransportSimplex simplex(cost, supply, demand, options);
    return simplex.solve();
}

FlowMatrix solve_uniform_transport(const Eigen::MatrixXd& cost, const TransportOptions& options) {
    const auto m = static_cast<std::int64_t>(cost.rows()), n = static_cast<std::int64_t>(cost.cols());
    std::vector<std::int64_t> supply(m, n), demand(n, m);
    auto solution = solve_transport(cost, supply, demand, options);

    const double total = static_cast<double>(m) * static_cast<double>(n);
    FlowMatrix out;
    out.flows = solution.flow.cast<double>() / total;
    out.cost = solution.cost / total;
    return out;
}

}
