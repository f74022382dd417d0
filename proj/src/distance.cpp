#include "systemmatch/distance.hpp"
#include "systemmatch/errors.hpp"

#include <numeric>
#include <random>

namespace systemmatch {

std::string to_string(const DistanceMetricSpec& spec) {
    std::string out = (spec.kind == MetricKind::l2_pseudobulk ? "l2" : "emd");
    out += (spec.preprocessing == Preprocessing::log_normalized ? "xlog" : "xzscore");
    return out;
}

DistanceMetricSpec parse_metric(std::string_view name) {
    for (const auto& spec : all_metrics()) {
        if (to_string(spec) == name) {
            return spec;
        }
    }
    throw UsageError("unknown metric '" + std::string(name) + "', expected one of l2xlog, l2xzscore, emdxlog, emdxzscore");
}

std::array<DistanceMetricSpec, 4> all_metrics() {
    return {
        DistanceMetricSpec{MetricKind::l2_pseudobulk, Preprocessing::log_normalized},
        DistanceMetricSpec{MetricKind::l2_pseudobulk, Preprocessing::zscored_log_normalized},
        DistanceMetricSpec{MetricKind::emd, Preprocessing::log_normalized},
        DistanceMetricSpec{MetricKind::emd, Preprocessing::zscored_log_normalized}
    };
}

NormState required_state(const DistanceMetricSpec& spec) {
    return spec.preprocessing == Preprocessing::log_normalized ? NormState::log_normalized : NormState::zscored;
}

namespace {

void check_comparable(const ConditionDataset& x, const ConditionDataset& y) {
    if (x.matrix.gene_ids() != y.matrix.gene_ids()) {
        throw DataError("gene order differs between '" + x.condition_id + "' and '" + y.condition_id + "'");
    }
    if (x.matrix.norm_state() != y.matrix.norm_state()) {
        throw DataError("normalization state differs between '" + x.condition_id + "' and '" + y.condition_id + "'");
    }
}

Matrix capped_cells(const CellExpressionMatrix& m, std::size_t max_cells, std::uint64_t seed) {
    if (m.n_cells() <= max_cells) {
        return m.values();
    }
    std::vector<std::size_t> rows(m.n_cells());
    std::iota(rows.begin(), rows.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(rows.begin(), rows.end(), rng);
    rows.resize(max_cells);
    std::sort(rows.begin(), rows.end());

    Matrix out(max_cells, m.values().cols());
    for (std::size_t i = 0; i < max_cells; ++i) {
        out.row(i) = m.values().row(rows[i]);
    }
    return out;
}

}

double l2_pseudobulk_distance(const ConditionDataset& x, const ConditionDataset& y) {
    check_comparable(x, y);
    return (pseudobulk(x) - pseudobulk(y)).norm();
}

EmdResult emd_distance(const ConditionDataset& x, const ConditionDataset& y, const EmdOptions& options) {
    check_comparable(x, y);
    if (options.max_cells == 0) {
        throw UsageError("EMD cell cap must be positive");
    }
    // Distinct streams for the two sides so that identical inputs are not subsampled identically by accident.
    Matrix xs = capped_cells(x.matrix, options.max_cells, options.seed);
    Matrix ys = capped_cells(y.matrix, options.max_cells, options.seed ^ 0x9e3779b97f4a7c15ULL);

    Eigen::MatrixXd cost = kernels::euclidean_cost(ys, xs, options.execution);
    EmdResult out;
    out.flow = solve_uniform_transport(cost, options.transport);
    out.distance = out.flow.cost;
    return out;
}

double dataset_distance(const ConditionDataset& x,
                        const ConditionDataset& y,
                        const DistanceMetricSpec& spec,
                        const EmdOptions& options)
{
    auto expected = required_state(spec);
    for (const auto* d : {&x, &y}) {
        if (d->matrix.norm_state() != expected) {
            throw UsageError("metric " + to_string(spec) + " requires " + to_string(expected) + " data but '" +
                             d->condition_id + "' is " + to_string(d->matrix.norm_state()));
        }
    }
    if (spec.kind == MetricKind::l2_pseudobulk) {
        return l2_pseudobulk_distance(x, y);
    }
    return emd_distance(x, y, options).distance;
}

DistanceMatrix pairwise_distance_matrix(const std::vector<ConditionDataset>& rows,
                                        const std::vector<ConditionDataset>& cols,
                                        const DistanceMetricSpec& spec,
                                        const EmdOptions& options,
                                        kernels::Execution exec)
{
    if (rows.empty() || cols.empty()) {
        throw UsageError("pairwise distance matrix needs at least one row and one column dataset");
    }

    DistanceMatrix out;
    out.metric = spec;
    for (const auto& r : rows) out.row_ids.push_back(r.condition_id);
    for (const auto& c : cols) out.col_ids.push_back(c.condition_id);

    // Cells already run in parallel; keep the inner cost kernel serial to avoid nested teams.
    EmdOptions inner = options;
    if (exec == kernels::Execution::parallel) {
        inner.execution = kernels::Execution::serial;
    }

    out.values = kernels::fill_grid(rows.size(), cols.size(), [&](std::size_t i, std::size_t j) {
        return dataset_distance(rows[i], cols[j], spec, inner);
    }, exec);
    return out;
}

DistanceMatrix normalize_columns_minmax(const DistanceMatrix& m) {
    if (m.normalized) {
        throw UsageError("distance matrix is already normalized");
    }
    DistanceMatrix out = m;
    for (Eigen::Index j = 0; j < out.values.cols(); ++j) {
        auto col = out.values.col(j);
        double lo = col.minCoeff(), hi = col.maxCoeff();
        if (hi > lo) {
            col = (col.array() - lo) / (hi - lo);
        } else {
            col.setZero();
        }
    }
    out.normalized = true;
    return out;
}

}
