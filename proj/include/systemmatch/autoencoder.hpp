#ifndef SYSTEMMATCH_AUTOENCODER_HPP
#define SYSTEMMATCH_AUTOENCODER_HPP

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "expression.hpp"

/**
 * @file autoencoder.hpp
 * @brief Compositional perturbation autoencoder: parameters, forward pass and analytic gradients.
 *
 * A cell is encoded into a basal latent; perturbation and covariate embeddings are added to it and the sum is decoded.
 * An adversary tries to recover the perturbations and covariates from the basal latent alone.
 * All tensors are double precision so that gradients can be checked against finite differences.
 */

namespace systemmatch {

/**
 * @brief Fully connected layer, `output = input * weight^T + bias`.
 */
struct DenseLayer {
    Eigen::MatrixXd weight; ///< output by input
    Eigen::VectorXd bias;
};

/**
 * @brief Stack of dense layers with tanh between them and a linear final layer.
 */
struct Mlp {
    std::vector<DenseLayer> layers;

    Eigen::Index input_dim() const { return layers.front().weight.cols(); }
    Eigen::Index output_dim() const { return layers.back().weight.rows(); }
};

struct ModelHyperparameters {
    std::size_t latent_dim = 16;
    std::size_t hidden_width = 64;
    /** Hidden layers in the encoder and decoder. The adversary always has one. */
    std::size_t depth = 2;
};

/**
 * Ordered perturbation names. Embeddings live in `ModelTensors::perturbation_embeddings`, one row per name.
 */
struct PerturbationVocabulary {
    std::vector<std::string> names;

    /** @throws UsageError for unknown names. */
    std::size_t index_of(std::string_view name) const;
};

/**
 * Covariate classes (e.g. batch, donor) and their ordered levels.
 * Level embeddings live in `ModelTensors::covariate_embeddings[class]`, one row per level.
 */
struct CovariateVocabulary {
    std::vector<std::string> classes;
    std::vector<std::vector<std::string>> levels;

    std::size_t class_index(std::string_view name) const;
    std::size_t level_index(std::size_t cls, std::string_view level) const;
};

/**
 * @brief Every trainable tensor. Also used to hold gradients and optimizer moments.
 */
struct ModelTensors {
    Mlp encoder;
    Mlp decoder;
    Mlp adversary;
    Eigen::MatrixXd perturbation_embeddings;
    std::vector<Eigen::MatrixXd> covariate_embeddings;

    /** Same shapes, all zeros. */
    ModelTensors zeros_like() const;
};

/**
 * Visit every tensor as `fn(name, data, size, is_adversary)`.
 * The iteration order is fixed and is the serialization order.
 */
template<class Tensors_, class Function_>
void for_each_tensor(Tensors_& tensors, Function_ fn) {
    auto visit_mlp = [&](auto& mlp, const std::string& prefix, bool adversary) {
        for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
            auto& layer = mlp.layers[l];
            fn(prefix + "." + std::to_string(l) + ".weight", layer.weight.data(), static_cast<std::size_t>(layer.weight.size()), adversary);
            fn(prefix + "." + std::to_string(l) + ".bias", layer.bias.data(), static_cast<std::size_t>(layer.bias.size()), adversary);
        }
    };
    visit_mlp(tensors.encoder, "encoder", false);
    visit_mlp(tensors.decoder, "decoder", false);
    fn(std::string("perturbation_embeddings"), tensors.perturbation_embeddings.data(),
       static_cast<std::size_t>(tensors.perturbation_embeddings.size()), false);
    for (std::size_t c = 0; c < tensors.covariate_embeddings.size(); ++c) {
        auto& e = tensors.covariate_embeddings[c];
        fn("covariate_embeddings." + std::to_string(c), e.data(), static_cast<std::size_t>(e.size()), false);
    }
    visit_mlp(tensors.adversary, "adversary", true);
}

/**
 * @brief Complete model: vocabularies, hyperparameters and tensors.
 */
struct ModelParams {
    std::vector<std::string> gene_ids;
    ModelHyperparameters hyper;
    PerturbationVocabulary perturbations;
    CovariateVocabulary covariates;
    ModelTensors tensors;

    std::size_t n_genes() const { return gene_ids.size(); }
};

/**
 * Glorot-uniform weights, zero biases, small normal embeddings.
 */
ModelParams initialize_model(std::vector<std::string> gene_ids,
                             PerturbationVocabulary perturbations,
                             CovariateVocabulary covariates,
                             const ModelHyperparameters& hyper,
                             std::uint64_t seed);

/**
 * Map an expression vector to its basal latent.
 * @throws UsageError on a dimension mismatch.
 */
Eigen::VectorXd encode(const ModelParams& params, const Eigen::VectorXd& cell);

/**
 * Map a latent vector to non-negative expression through a softplus output.
 */
Eigen::VectorXd decode(const ModelParams& params, const Eigen::VectorXd& latent);

/**
 * @brief A basal latent with the attributes to add to it.
 */
struct LatentState {
    Eigen::VectorXd basal;
    std::set<std::string> perturbations;
    std::map<std::string, std::string> covariates;
};

/**
 * `basal + sum of perturbation embeddings + sum of covariate-level embeddings`.
 */
Eigen::VectorXd compose_latent(const ModelParams& params, const LatentState& state);

/**
 * @brief Attributes of a batch of cells, already indexed against a model's vocabularies.
 */
struct Batch {
    Eigen::MatrixXd expression;   ///< cells by genes
    Eigen::MatrixXd perturbation; ///< cells by perturbations, 0/1 membership
    std::vector<std::vector<std::size_t>> covariate_levels; ///< per class, per cell
};

struct LossBreakdown {
    double reconstruction = 0;
    double adversary = 0;
    /** `reconstruction - adversary_weight * adversary`, minimized by the autoencoder. */
    double objective = 0;
};

/**
 * Forward pass only.
 */
LossBreakdown evaluate_losses(const ModelParams& params, const Batch& batch, double adversary_weight);

/**
 * Forward and backward pass.
 *
 * Encoder, decoder and embedding entries of `grad` receive the gradient of `objective`;
 * adversary entries receive the gradient of the adversary loss with the basal latents held fixed.
 */
LossBreakdown compute_gradients(const ModelParams& params, const Batch& batch, double adversary_weight, ModelTensors& grad);

/**
 * Decoded expression for every cell of the batch, after composing each with its own attributes.
 */
Eigen::MatrixXd reconstruct(const ModelParams& params, const Batch& batch);

/**
 * Basal latents for every row of `expression`.
 */
Eigen::MatrixXd encode_batch(const ModelParams& params, const Eigen::MatrixXd& expression);

/**
 * Decoded expression for every row of `latents`.
 */
Eigen::MatrixXd decode_batch(const ModelParams& params, const Eigen::MatrixXd& latents);

}

#endif
