#ifndef SYSTEMMATCH_RECOMMENDER_HPP
#define SYSTEMMATCH_RECOMMENDER_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "distance.hpp"
#include "kernels.hpp"
#include "ranking.hpp"

/**
 * @file recommender.hpp
 * @brief Selection of new conditions by k-medoids with already-tested conditions as fixed medoids.
 */

namespace systemmatch {

/**
 * @brief A condition summarized by its pseudobulk vector.
 */
struct CandidatePoint {
    std::string condition_id;
    Eigen::VectorXd vector;
    /** Already tested: always a medoid, never swapped out. */
    bool fixed = false;
};

/**
 * @brief Points, their fixed flags and a symmetric distance matrix, indexed in increasing identifier order.
 */
struct MedoidProblem {
    std::vector<std::string> ids;
    std::vector<bool> fixed;
    Eigen::MatrixXd distances;

    /** Euclidean distances between candidate vectors. */
    static MedoidProblem from_points(const std::vector<CandidatePoint>& points);

    /**
     * Distances between datasets under `spec`.
     * @param fixed One flag per dataset.
     */
    static MedoidProblem from_datasets(const std::vector<ConditionDataset>& datasets,
                                       const std::vector<bool>& fixed,
                                       const DistanceMetricSpec& spec,
                                       const EmdOptions& options = {});

    std::size_t size() const { return ids.size(); }
    std::size_t n_free() const;
};

struct MedoidSelection {
    std::size_t k = 0;
    /** Selected non-fixed medoids, sorted by identifier. */
    std::vector<std::string> chosen;
    std::vector<std::string> fixed;
    /** Every point mapped to its nearest medoid among fixed and chosen. */
    std::map<std::string, std::string> assignment;
    /** Sum over all points of the distance to the assigned medoid. */
    double total_cost = 0;
    /** Set when no single exchange lowers the cost. */
    bool local_optimum = false;
    std::size_t swaps = 0;
};

/**
 * Greedy farthest-first initialization from the fixed medoids, followed by best-improvement swaps until none lowers the cost.
 * Exact ties in the initialization are broken with `seed`; ties between swaps go to the lexicographically smallest
 * (removed, added) pair.
 *
 * @throws UsageError if `k` exceeds the number of non-fixed points, or if there would be no medoid at all.
 */
MedoidSelection constrained_kmedoids(const MedoidProblem& problem,
                                     std::size_t k,
                                     std::uint64_t seed = 0,
                                     kernels::Execution exec = kernels::Execution::parallel);

MedoidSelection constrained_kmedoids(const std::vector<CandidatePoint>& candidates,
                                     std::size_t k,
                                     std::uint64_t seed = 0,
                                     kernels::Execution exec = kernels::Execution::parallel);

/**
 * Apply the best strictly improving exchange of one chosen medoid for one non-medoid, non-fixed point.
 * Returns the input (with `local_optimum` set) when no exchange improves.
 */
MedoidSelection swap_step(const MedoidSelection& current,
                          const MedoidProblem& problem,
                          kernels::Execution exec = kernels::Execution::parallel);

/**
 * Assignment and cost of a given set of chosen medoids.
 */
MedoidSelection evaluate_selection(const MedoidProblem& problem, std::vector<std::string> chosen);

/**
 * Globally optimal selection by enumeration.
 * @throws UsageError if more than 10,000 subsets would be enumerated.
 */
MedoidSelection exhaustive_medoid_oracle(const MedoidProblem& problem, std::size_t k);

/**
 * Rank in-silico candidates by distance to the target.
 * Candidates and target must be log-normalized; z-scoring for z-score metrics is pooled over all of them.
 */
RankingReport rank_candidates_to_target(const std::vector<ConditionDataset>& candidates,
                                        const ConditionDataset& target,
                                        const DistanceMetricSpec& spec,
                                        const EmdOptions& options = {});

}

#endif
