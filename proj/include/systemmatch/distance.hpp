#ifndef SYSTEMMATCH_DISTANCE_HPP
#define SYSTEMMATCH_DISTANCE_HPP

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "expression.hpp"
#include "kernels.hpp"
#include "transport.hpp"

/**
 * @file distance.hpp
 * @brief Dataset-to-dataset distances: pseudobulk L2 and exact earth mover's distance.
 */

namespace systemmatch {

enum class MetricKind { l2_pseudobulk, emd };
enum class Preprocessing { log_normalized, zscored_log_normalized };

/**
 * @brief One of the four metric/preprocessing combinations.
 *
 * Textual form is `<l2|emd>x<log|zscore>`, e.g. `emdxzscore`.
 */
struct DistanceMetricSpec {
    MetricKind kind = MetricKind::l2_pseudobulk;
    Preprocessing preprocessing = Preprocessing::log_normalized;

    bool operator==(const DistanceMetricSpec&) const = default;
};

std::string to_string(const DistanceMetricSpec& spec);

/**
 * @throws UsageError on an unrecognized name.
 */
DistanceMetricSpec parse_metric(std::string_view name);

/**
 * All four variants, in the order L2/log, L2/z-score, EMD/log, EMD/z-score.
 */
std::array<DistanceMetricSpec, 4> all_metrics();

/**
 * Normalization state that datasets must be in before being compared under `spec`.
 */
NormState required_state(const DistanceMetricSpec& spec);

struct EmdOptions {
    /** Cells per side above which a side is subsampled without replacement. */
    std::size_t max_cells = 1000;
    std::uint64_t seed = 0;
    kernels::Execution execution = kernels::Execution::parallel;
    TransportOptions transport;
};

/**
 * Euclidean norm of the difference between the two pseudobulk vectors.
 */
double l2_pseudobulk_distance(const ConditionDataset& x, const ConditionDataset& y);

struct EmdResult {
    double distance = 0;
    /** Rows are the (possibly subsampled) cells of `y`, columns those of `x`. */
    FlowMatrix flow;
};

/**
 * Wasserstein-1 distance between uniform masses on the cells of `x` and `y`, with Euclidean ground cost.
 */
EmdResult emd_distance(const ConditionDataset& x, const ConditionDataset& y, const EmdOptions& options = {});

/**
 * Dispatch on `spec.kind`, after checking that both datasets are in the state required by `spec.preprocessing`.
 */
double dataset_distance(const ConditionDataset& x,
                        const ConditionDataset& y,
                        const DistanceMetricSpec& spec,
                        const EmdOptions& options = {});

struct DistanceMatrix {
    std::vector<std::string> row_ids;
    std::vector<std::string> col_ids;
    Eigen::MatrixXd values;
    DistanceMetricSpec metric;
    bool normalized = false;
};

/**
 * `dataset_distance()` between every row and column dataset.
 * Cells are evaluated in parallel when `exec` is parallel; each cell is written exactly once.
 */
DistanceMatrix pairwise_distance_matrix(const std::vector<ConditionDataset>& rows,
                                        const std::vector<ConditionDataset>& cols,
                                        const DistanceMetricSpec& spec,
                                        const EmdOptions& options = {},
                                        kernels::Execution exec = kernels::Execution::parallel);

/**
 * Rescale each column to span [0, 1]. Constant columns become all zeros.
 */
DistanceMatrix normalize_columns_minmax(const DistanceMatrix& m);

}

#endif
