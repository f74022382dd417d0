#ifndef SYSTEMMATCH_PERTURB_HPP
#define SYSTEMMATCH_PERTURB_HPP

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "autoencoder.hpp"
#include "distance.hpp"
#include "expression.hpp"

/**
 * @file perturb.hpp
 * @brief Training of the compositional autoencoder and generation of in-silico conditions.
 */

namespace systemmatch {

using PerturbationSet = std::set<std::string>;
using CovariateMap = std::map<std::string, std::string>;

struct CellLabels {
    PerturbationSet perturbations;
    CovariateMap covariates;
};

/**
 * @brief Labelled cells for training, all on one gene order.
 */
class TrainingSet {
public:
    explicit TrainingSet(std::vector<std::string> gene_ids);

    /**
     * Append every cell of `m` with the same labels.
     * An empty perturbation set marks a control condition.
     */
    void add_condition(const CellExpressionMatrix& m, const PerturbationSet& perturbations, const CovariateMap& covariates);

    const std::vector<std::string>& gene_ids() const { return my_gene_ids; }
    const Eigen::MatrixXd& expression() const { return my_expression; }
    const std::vector<CellLabels>& labels() const { return my_labels; }
    std::size_t size() const { return my_labels.size(); }

    /** Sorted perturbation names seen in the data. */
    PerturbationVocabulary perturbation_vocabulary() const;
    /** Sorted covariate classes and levels seen in the data. */
    CovariateVocabulary covariate_vocabulary() const;

    /** Rows `rows` as a batch indexed against the model's vocabularies. */
    Batch make_batch(const ModelParams& params, const std::vector<std::size_t>& rows) const;

private:
    std::vector<std::string> my_gene_ids;
    Eigen::MatrixXd my_expression;
    std::vector<CellLabels> my_labels;
};

struct TrainConfig {
    std::size_t epochs = 200;
    std::size_t batch_size = 64;
    double lr_autoencoder = 3e-3;
    double lr_adversary = 3e-3;
    /** Weight of the adversary loss subtracted from the reconstruction loss. */
    double adversary_weight = 0.5;
    /** Adversary updates after each autoencoder update. */
    std::size_t adversary_steps = 1;
    ModelHyperparameters hyper;
    std::uint64_t seed = 0;
};

struct TrainResult {
    ModelParams params;
    /** Mean reconstruction loss over each epoch. */
    std::vector<double> reconstruction_history;
    std::vector<double> adversary_history;
};

/**
 * Initial parameters for `data`: vocabularies from the labels, output bias set to the inverse softplus of the mean expression.
 */
ModelParams initialize_for(const TrainingSet& data, const TrainConfig& cfg);

/**
 * Alternating Adam updates of the autoencoder (reconstruction minus weighted adversary loss)
 * and the adversary (perturbation and covariate classification from basal latents).
 *
 * Deterministic for a given data order and `cfg.seed`.
 * @throws NumericError with the epoch index if a loss becomes non-finite.
 */
TrainResult train(const TrainingSet& data, const TrainConfig& cfg);
TrainResult train(const TrainingSet& data, const TrainConfig& cfg, ModelParams initial);

/**
 * Identifier for a base condition with a set of add-on perturbations, e.g. `base+A+B`.
 */
std::string combination_id(const std::string& base, const PerturbationSet& addons);

struct PredictOptions {
    std::size_t n_cells = 100;
    std::uint64_t seed = 0;
    /** Sample basal cells with replacement; otherwise `n_cells` must not exceed the control size. */
    bool with_replacement = false;
};

/**
 * Encode sampled control cells, add the requested embeddings and decode.
 * The result is log-normalized and labelled `in_silico`.
 */
ConditionDataset predict_condition(const ModelParams& params,
                                   const CellExpressionMatrix& basal_cells,
                                   const PerturbationSet& perturbations,
                                   const CovariateMap& covariates,
                                   const std::string& condition_id,
                                   const PredictOptions& options = {});

/**
 * @brief A control condition that combinations are built on.
 */
struct CombinationBase {
    std::string id;
    CellExpressionMatrix control_cells;
    CovariateMap covariates;
};

/**
 * Predict every combination of `order` add-ons (for each requested order, 2 or 3) on every base,
 * skipping identifiers in `exclude`. The seed of the `i`-th emitted condition is `options.seed + i`.
 */
std::vector<ConditionDataset> generate_combination_grid(const ModelParams& params,
                                                        const std::vector<CombinationBase>& bases,
                                                        const std::vector<std::string>& addons,
                                                        const std::set<int>& orders,
                                                        const std::set<std::string>& exclude,
                                                        const PredictOptions& options = {});

struct HeldOutValidation {
    /** Rows are held-out conditions, columns predictions; columns rescaled to [0, 1]. */
    DistanceMatrix normalized;
    /** Raw distances before column rescaling. */
    DistanceMatrix raw;
    /** Nearest prediction for each held-out condition, by raw distance (ties to the earlier column). */
    std::vector<std::string> nearest;
};

HeldOutValidation validate_held_out(const std::vector<ConditionDataset>& predicted,
                                    const std::vector<ConditionDataset>& held_out,
                                    const DistanceMetricSpec& spec,
                                    const EmdOptions& options = {});

/**
 * Coefficient of determination of `predicted` against `actual`.
 */
double r_squared(const Eigen::VectorXd& actual, const Eigen::VectorXd& predicted);

/**
 * Write a model and its training configuration to a versioned JSON checkpoint.
 * Doubles are written in shortest round-trip form, so loading restores every bit.
 */
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params, const TrainConfig& cfg);

struct Checkpoint {
    ModelParams params;
    TrainConfig config;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

inline constexpr int checkpoint_version = 1;

}

#endif
