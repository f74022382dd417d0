#ifndef SYSTEMMATCH_RANKING_HPP
#define SYSTEMMATCH_RANKING_HPP

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "distance.hpp"
#include "expression.hpp"

/**
 * @file ranking.hpp
 * @brief Ranking of query conditions against a target and evaluation of distance metrics.
 */

namespace systemmatch {

struct RankingEntry {
    std::string condition_id;
    double distance = 0;
    std::size_t rank = 0; ///< 1-based
};

/**
 * @brief Queries sorted by ascending distance to the target; ties broken by condition identifier.
 */
struct RankingReport {
    DistanceMetricSpec metric;
    std::vector<RankingEntry> entries;
};

/**
 * Sort `(id, distance)` pairs into a report.
 */
RankingReport rank_by_distance(const std::vector<std::string>& ids,
                               const std::vector<double>& distances,
                               const DistanceMetricSpec& metric);

/**
 * Bring a collection into the state required by `preprocessing`.
 * Log-normalized collections are z-scored with statistics pooled over the target and all queries.
 * Collections already in the required state are returned unchanged.
 */
StudyCollection preprocess_for(const StudyCollection& collection, Preprocessing preprocessing);

/**
 * Distance from every query to the target, ranked.
 * The collection must already be in the state required by `spec`, see `preprocess_for()`.
 */
RankingReport rank_queries(const StudyCollection& collection,
                           const DistanceMetricSpec& spec,
                           const EmdOptions& options = {},
                           kernels::Execution exec = kernels::Execution::parallel);

/**
 * @brief Agreement between a metric's ranking and the expected ranking.
 */
struct ScoreReport {
    /** Distances in expected order, so that the expected ranks are 1..n. */
    std::vector<double> distances;
    /** Rank of each entry under the metric; equal distances keep the expected order. */
    std::vector<std::size_t> ranks;
    std::vector<std::size_t> expected_ranks;
    double score = 0;
};

/**
 * Average of the fraction of correctly ranked entries and the relative separation
 * `(d_last - d_first) / d_last` between the expected-farthest and expected-nearest entries.
 *
 * @param distances At least two distances, ordered by expected rank.
 * @throws NumericError if the expected-farthest distance is not positive.
 */
ScoreReport score_metric(std::span<const double> distances);

/**
 * @brief How to corrupt a collection by gene subsampling.
 */
struct CorruptionProtocol {
    /** Fractions of genes kept, sorted in decreasing order and including 1. */
    std::vector<double> fractions{1.0, 0.8, 0.6, 0.4, 0.2, 0.1};
    std::size_t max_repeats = 200;
    /** Repeats always performed (subject to `max_repeats`) before convergence is checked. */
    std::size_t min_repeats = 20;
    /** Convergence is reached when the running mean moves less than `convergence_tol` over `window` repeats. */
    std::size_t window = 10;
    double convergence_tol = 1e-3;
    std::uint64_t seed = 0;
};

struct SweepCell {
    DistanceMetricSpec metric;
    double fraction = 1;
    double mean_score = 0;
    double std_error = 0;
    std::size_t repeats = 0;
    std::size_t skipped = 0;
    bool converged = false;
    std::vector<double> scores;
};

struct SweepResult {
    /** Metric-major, fractions in protocol order within each metric. */
    std::vector<SweepCell> cells;
    std::vector<std::string> warnings;
};

/**
 * Score each metric at each corruption level, repeating gene subsampling until the running mean converges.
 *
 * The gene subset of repeat `r` at the `f`-th fraction is drawn with seed `protocol.seed + 1000003 * f + r`,
 * so all metrics see the same subsets and results do not depend on scheduling.
 *
 * @param collection Log-normalized collection; z-scoring for z-score metrics happens after subsampling.
 * @param expected_order Query identifiers from expected-nearest to expected-farthest.
 */
SweepResult corruption_sweep(const StudyCollection& collection,
                             const std::vector<std::string>& expected_order,
                             const std::vector<DistanceMetricSpec>& specs,
                             const CorruptionProtocol& protocol,
                             const EmdOptions& options = {},
                             kernels::Execution exec = kernels::Execution::parallel);

struct MetricArea {
    DistanceMetricSpec metric;
    double area = 0;
};

/**
 * Trapezoidal area under each metric's mean-score curve over its fraction range, sorted decreasing.
 * Ties keep the order in which metrics appear in the sweep.
 * With a single fraction, the area is the raw mean score.
 */
std::vector<MetricArea> compare_metrics(const SweepResult& sweep);

}

#endif
