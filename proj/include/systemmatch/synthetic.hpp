#ifndef SYSTEMMATCH_SYNTHETIC_HPP
#define SYSTEMMATCH_SYNTHETIC_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "expression.hpp"
#include "perturb.hpp"

/**
 * @file synthetic.hpp
 * @brief Synthetic studies with planted ground truth, used for validation.
 */

namespace systemmatch {

/**
 * @brief Conditions placed along a single axis between a reference state (0) and the target state (1).
 *
 * Every cell is `base + position * signature + noise`, clamped at zero, in raw-count units.
 * The signature is `effect_size` on `n_signature_genes` randomly chosen genes and zero elsewhere.
 */
struct SyntheticSpec {
    std::size_t n_genes = 50;
    std::size_t n_signature_genes = 10;
    std::size_t cells_per_condition = 100;
    double target_position = 1.0;
    std::vector<double> query_positions{0.8, 0.5, 0.2};
    /** Per-gene base expression is uniform in `[0.5, 1.5] * base_level`. */
    double base_level = 5.0;
    double effect_size = 2.0;
    /** Standard deviation of the per-value Gaussian noise. */
    double noise = 0.0;
    std::uint64_t seed = 0;
};

struct SyntheticStudy {
    /** Raw counts; the target is `target`, queries are `query0`, `query1`, ... in spec order. */
    StudyCollection collection;
    /** Query identifiers by increasing `|position - target_position|`, ties by identifier. */
    std::vector<std::string> planted_order;
    std::vector<double> positions;
};

SyntheticStudy generate_synthetic(const SyntheticSpec& spec);

/**
 * @brief Base conditions with additive add-on effects, in log-normalized units.
 *
 * A condition on base `b` with add-ons `S` has cells `base_b + sum of effect_a over S + noise`, clamped at zero.
 * Controls and single add-ons are for training; `held_out` combinations are generated with the same exactly additive rule.
 */
struct PerturbationalSpec {
    std::size_t n_genes = 20;
    std::size_t cells_per_condition = 60;
    std::vector<std::string> bases{"baseA", "baseB"};
    std::vector<std::string> addons{"A", "B", "C", "D", "E", "F"};
    /** Base vectors are uniform in `[0.5, 1.5] * base_level`. */
    double base_level = 3.0;
    /** Each add-on moves `effect_fraction` of genes by a uniform amount in `[-effect_size, effect_size]`. */
    double effect_size = 1.0;
    double effect_fraction = 0.3;
    double noise = 0.1;
    /** Batches per condition; with more than one, cells carry a `batch` covariate with a small additive shift. */
    std::size_t n_batches = 1;
    double batch_effect = 0.2;
    /** `(base, add-ons)` combinations to generate as held-out conditions. */
    std::vector<std::pair<std::string, PerturbationSet>> held_out{
        {"baseA", {"A", "B"}}, {"baseB", {"C", "D"}},
        {"baseA", {"A", "C", "E"}}, {"baseA", {"B", "D", "F"}},
        {"baseB", {"A", "D", "E"}}, {"baseB", {"B", "C", "F"}}
    };
    /** Overrides for the drawn vectors, keyed by base or add-on name. */
    std::map<std::string, Eigen::VectorXd> base_vectors;
    std::map<std::string, Eigen::VectorXd> effect_vectors;
    std::uint64_t seed = 0;
};

struct PerturbationalCondition {
    ConditionDataset data;
    std::string base;
    PerturbationSet addons;
    /** Per-cell covariates are stored separately, since batches vary within a condition. */
    std::vector<CovariateMap> cell_covariates;
    bool held_out = false;
    /** Noise-free expected expression (averaged over batches). */
    Eigen::VectorXd expected_mean;
};

struct PerturbationalData {
    std::vector<std::string> gene_ids;
    std::vector<PerturbationalCondition> conditions;

    /** Controls and single add-ons, with base (and batch) covariates. */
    TrainingSet training_set() const;
    /** One base per control condition. */
    std::vector<CombinationBase> combination_bases() const;
    std::vector<ConditionDataset> held_out() const;
    /** Identifiers of all non-held-out conditions. */
    std::set<std::string> tested_ids() const;
};

PerturbationalData generate_synthetic_perturbational(const PerturbationalSpec& spec);

}

#endif
