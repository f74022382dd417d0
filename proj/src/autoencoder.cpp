#include "systemmatch/autoencoder.hpp"
#include "systemmatch/errors.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace systemmatch {

std::size_t PerturbationVocabulary::index_of(std::string_view name) const {
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) {
        throw UsageError("unknown perturbation '" + std::string(name) + "'");
    }
    return static_cast<std::size_t>(it - names.begin());
}

std::size_t CovariateVocabulary::class_index(std::string_view name) const {
    auto it = std::find(classes.begin(), classes.end(), name);
    if (it == classes.end()) {
        throw UsageError("unknown covariate class '" + std::string(name) + "'");
    }
    return static_cast<std::size_t>(it - classes.begin());
}

std::size_t CovariateVocabulary::level_index(std::size_t cls, std::string_view level) const {
    const auto& lv = levels.at(cls);
    auto it = std::find(lv.begin(), lv.end(), level);
    if (it == lv.end()) {
        throw UsageError("unknown level '" + std::string(level) + "' of covariate '" + classes[cls] + "'");
    }
    return static_cast<std::size_t>(it - lv.begin());
}

ModelTensors ModelTensors::zeros_like() const {
    ModelTensors out = *this;
    for_each_tensor(out, [](const std::string&, double* data, std::size_t n, bool) { std::fill(data, data + n, 0.0); });
    return out;
}

namespace {

inline double softplus(double x) {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

inline double sigmoid(double x) {
    if (x >= 0) {
        return 1 / (1 + std::exp(-x));
    }
    double e = std::exp(x);
    return e / (1 + e);
}

Mlp make_mlp(const std::vector<std::size_t>& dims, std::mt19937_64& rng) {
    Mlp out;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        DenseLayer layer;
        const auto in = static_cast<Eigen::Index>(dims[l]), outd = static_cast<Eigen::Index>(dims[l + 1]);
        double limit = std::sqrt(6.0 / static_cast<double>(in + outd));
        std::uniform_real_distribution<double> unif(-limit, limit);
        layer.weight.resize(outd, in);
        for (Eigen::Index j = 0; j < in; ++j) {
            for (Eigen::Index i = 0; i < outd; ++i) {
                layer.weight(i, j) = unif(rng);
            }
        }
        layer.bias = Eigen::VectorXd::Zero(outd);
        out.layers.push_back(std::move(layer));
    }
    return out;
}

struct MlpCache {
    std::vector<Eigen::MatrixXd> inputs;
};

Eigen::MatrixXd forward(const Mlp& mlp, const Eigen::MatrixXd& x, MlpCache* cache) {
    Eigen::MatrixXd h = x;
    if (cache) {
        cache->inputs.clear();
    }
    for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
        const auto& layer = mlp.layers[l];
        Eigen::MatrixXd a = (h * layer.weight.transpose()).rowwise() + layer.bias.transpose();
        if (cache) {
            cache->inputs.push_back(std::move(h));
        }
        h = (l + 1 < mlp.layers.size()) ? Eigen::MatrixXd(a.array().tanh()) : std::move(a);
    }
    return h;
}

// Accumulates parameter gradients into `grad` and returns the gradient with respect to the input.
Eigen::MatrixXd backward(const Mlp& mlp, const MlpCache& cache, Eigen::MatrixXd d, Mlp& grad) {
    for (std::size_t l = mlp.layers.size(); l-- > 0;) {
        const auto& input = cache.inputs[l];
        grad.layers[l].weight.noalias() += d.transpose() * input;
        grad.layers[l].bias += d.colwise().sum().transpose();
        Eigen::MatrixXd d_in = d * mlp.layers[l].weight;
        if (l == 0) {
            return d_in;
        }
        d = d_in.array() * (1 - input.array().square());
    }
    return d;
}

Eigen::MatrixXd compose_batch(const ModelParams& params, const Eigen::MatrixXd& basal, const Batch& batch) {
    Eigen::MatrixXd z = basal;
    if (params.tensors.perturbation_embeddings.rows() > 0) {
        z.noalias() += batch.perturbation * params.tensors.perturbation_embeddings;
    }
    for (std::size_t c = 0; c < batch.covariate_levels.size(); ++c) {
        const auto& emb = params.tensors.covariate_embeddings[c];
        for (Eigen::Index i = 0; i < z.rows(); ++i) {
            z.row(i) += emb.row(batch.covariate_levels[c][i]);
        }
    }
    return z;
}

void check_batch(const ModelParams& params, const Batch& batch) {
    if (static_cast<std::size_t>(batch.expression.cols()) != params.n_genes()) {
        throw UsageError("batch has " + std::to_string(batch.expression.cols()) + " genes but the model expects " +
                         std::to_string(params.n_genes()));
    }
    if (batch.perturbation.rows() != batch.expression.rows() ||
        static_cast<std::size_t>(batch.perturbation.cols()) != params.perturbations.names.size()) {
        throw UsageError("batch perturbation indicator has the wrong shape");
    }
    if (batch.covariate_levels.size() != params.covariates.classes.size()) {
        throw UsageError("batch covariates do not match the model's covariate classes");
    }
    for (const auto& levels : batch.covariate_levels) {
        if (static_cast<Eigen::Index>(levels.size()) != batch.expression.rows()) {
            throw UsageError("batch covariate levels have the wrong length");
        }
    }
}

struct AdversaryTerms {
    double loss = 0;
    Eigen::MatrixXd d_logits;
};

AdversaryTerms adversary_terms(const ModelParams& params, const Batch& batch, const Eigen::MatrixXd& logits, bool want_grad) {
    AdversaryTerms out;
    const auto n = static_cast<double>(logits.rows());
    const auto n_pert = batch.perturbation.cols();
    if (want_grad) {
        out.d_logits = Eigen::MatrixXd::Zero(logits.rows(), logits.cols());
    }

    if (n_pert > 0) {
        const double denom = n * static_cast<double>(n_pert);
        for (Eigen::Index i = 0; i < logits.rows(); ++i) {
            for (Eigen::Index p = 0; p < n_pert; ++p) {
                double l = logits(i, p), y = batch.perturbation(i, p);
                out.loss += (softplus(l) - y * l) / denom;
                if (want_grad) {
                    out.d_logits(i, p) = (sigmoid(l) - y) / denom;
                }
            }
        }
    }

    Eigen::Index offset = n_pert;
    for (std::size_t c = 0; c < batch.covariate_levels.size(); ++c) {
        const auto width = static_cast<Eigen::Index>(params.covariates.levels[c].size());
        for (Eigen::Index i = 0; i < logits.rows(); ++i) {
            auto row = logits.row(i).segment(offset, width);
            double mx = row.maxCoeff();
            double lse = mx + std::log((row.array() - mx).exp().sum());
            auto truth = static_cast<Eigen::Index>(batch.covariate_levels[c][i]);
            out.loss += (lse - row(truth)) / n;
            if (want_grad) {
                auto d = out.d_logits.row(i).segment(offset, width);
                d = (row.array() - lse).exp().matrix() / n;
                d(truth) -= 1 / n;
            }
        }
        offset += width;
    }
    return out;
}

}

ModelParams initialize_model(std::vector<std::string> gene_ids,
                             PerturbationVocabulary perturbations,
                             CovariateVocabulary covariates,
                             const ModelHyperparameters& hyper,
                             std::uint64_t seed)
{
    if (gene_ids.empty()) {
        throw UsageError("model needs at least one gene");
    }
    if (hyper.latent_dim == 0 || hyper.hidden_width == 0) {
        throw UsageError("latent dimension and hidden width must be positive");
    }
    if (covariates.levels.size() != covariates.classes.size()) {
        throw UsageError("covariate vocabulary is inconsistent");
    }

    ModelParams out;
    out.gene_ids = std::move(gene_ids);
    out.hyper = hyper;
    out.perturbations = std::move(perturbations);
    out.covariates = std::move(covariates);

    std::mt19937_64 rng(seed);
    const auto G = out.n_genes(), L = hyper.latent_dim, H = hyper.hidden_width;

    std::vector<std::size_t> enc{G}, dec{L};
    for (std::size_t d = 0; d < hyper.depth; ++d) {
        enc.push_back(H);
        dec.push_back(H);
    }
    enc.push_back(L);
    dec.push_back(G);
    out.tensors.encoder = make_mlp(enc, rng);
    out.tensors.decoder = make_mlp(dec, rng);

    std::size_t n_logits = out.perturbations.names.size();
    for (const auto& lv : out.covariates.levels) {
        n_logits += lv.size();
    }
    if (n_logits == 0) {
        throw UsageError("model needs at least one perturbation or covariate for the adversary");
    }
    out.tensors.adversary = make_mlp({L, H, n_logits}, rng);

    std::normal_distribution<double> normal(0.0, 0.1);
    auto fill_normal = [&](Eigen::MatrixXd& m, Eigen::Index rows) {
        m.resize(rows, static_cast<Eigen::Index>(L));
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            for (Eigen::Index i = 0; i < m.rows(); ++i) {
                m(i, j) = normal(rng);
            }
        }
    };
    fill_normal(out.tensors.perturbation_embeddings, static_cast<Eigen::Index>(out.perturbations.names.size()));
    for (const auto& lv : out.covariates.levels) {
        Eigen::MatrixXd e;
        fill_normal(e, static_cast<Eigen::Index>(lv.size()));
        out.tensors.covariate_embeddings.push_back(std::move(e));
    }
    return out;
}

Eigen::MatrixXd encode_batch(const ModelParams& params, const Eigen::MatrixXd& expression) {
    if (static_cast<std::size_t>(expression.cols()) != params.n_genes()) {
        throw UsageError("expression has " + std::to_string(expression.cols()) + " genes but the model expects " +
                         std::to_string(params.n_genes()));
    }
    return forward(params.tensors.encoder, expression, nullptr);
}

Eigen::VectorXd encode(const ModelParams& params, const Eigen::VectorXd& cell) {
    return encode_batch(params, cell.transpose()).row(0).transpose();
}

Eigen::MatrixXd decode_batch(const ModelParams& params, const Eigen::MatrixXd& latents) {
    if (static_cast<std::size_t>(latents.cols()) != params.hyper.latent_dim) {
        throw UsageError("latent vector has dimension " + std::to_string(latents.cols()) + " but the model expects " +
                         std::to_string(params.hyper.latent_dim));
    }
    Eigen::MatrixXd pre = forward(params.tensors.decoder, latents, nullptr);
    return pre.unaryExpr([](double x) { return softplus(x); });
}

Eigen::VectorXd decode(const ModelParams& params, const Eigen::VectorXd& latent) {
    return decode_batch(params, latent.transpose()).row(0).transpose();
}

Eigen::VectorXd compose_latent(const ModelParams& params, const LatentState& state) {
    if (static_cast<std::size_t>(state.basal.size()) != params.hyper.latent_dim) {
        throw UsageError("basal latent has the wrong dimension");
    }
    Eigen::VectorXd z = state.basal;
    for (const auto& p : state.perturbations) {
        z += params.tensors.perturbation_embeddings.row(params.perturbations.index_of(p)).transpose();
    }
    for (const auto& [cls, level] : state.covariates) {
        auto c = params.covariates.class_index(cls);
        z += params.tensors.covariate_embeddings[c].row(params.covariates.level_index(c, level)).transpose();
    }
    return z;
}

Eigen::MatrixXd reconstruct(const ModelParams& params, const Batch& batch) {
    check_batch(params, batch);
    Eigen::MatrixXd basal = forward(params.tensors.encoder, batch.expression, nullptr);
    Eigen::MatrixXd pre = forward(params.tensors.decoder, compose_batch(params, basal, batch), nullptr);
    return pre.unaryExpr([](double x) { return softplus(x); });
}

LossBreakdown evaluate_losses(const ModelParams& params, const Batch& batch, double adversary_weight) {
    check_batch(params, batch);
    Eigen::MatrixXd basal = forward(params.tensors.encoder, batch.expression, nullptr);
    Eigen::MatrixXd pre = forward(params.tensors.decoder, compose_batch(params, basal, batch), nullptr);
    Eigen::MatrixXd xhat = pre.unaryExpr([](double x) { return softplus(x); });

    LossBreakdown out;
    out.reconstruction = (xhat - batch.expression).array().square().mean();
    Eigen::MatrixXd logits = forward(params.tensors.adversary, basal, nullptr);
    out.adversary = adversary_terms(params, batch, logits, false).loss;
    out.objective = out.reconstruction - adversary_weight * out.adversary;
    return out;
}

LossBreakdown compute_gradients(const ModelParams& params, const Batch& batch, double adversary_weight, ModelTensors& grad) {
    check_batch(params, batch);
    grad = params.tensors.zeros_like();

    MlpCache enc_cache, dec_cache, adv_cache;
    Eigen::MatrixXd basal = forward(params.tensors.encoder, batch.expression, &enc_cache);
    Eigen::MatrixXd z = compose_batch(params, basal, batch);
    Eigen::MatrixXd pre = forward(params.tensors.decoder, z, &dec_cache);
    Eigen::MatrixXd xhat = pre.unaryExpr([](double x) { return softplus(x); });

    LossBreakdown out;
    Eigen::MatrixXd residual = xhat - batch.expression;
    out.reconstruction = residual.array().square().mean();

    Eigen::MatrixXd logits = forward(params.tensors.adversary, basal, &adv_cache);
    auto adv = adversary_terms(params, batch, logits, true);
    out.adversary = adv.loss;
    out.objective = out.reconstruction - adversary_weight * out.adversary;

    // Reconstruction path.
    Eigen::MatrixXd d_pre = (2.0 / static_cast<double>(residual.size())) * residual.array() *
                            pre.unaryExpr([](double x) { return sigmoid(x); }).array();
    Eigen::MatrixXd d_z = backward(params.tensors.decoder, dec_cache, std::move(d_pre), grad.decoder);

    if (grad.perturbation_embeddings.rows() > 0) {
        grad.perturbation_embeddings.noalias() += batch.perturbation.transpose() * d_z;
    }
    for (std::size_t c = 0; c < batch.covariate_levels.size(); ++c) {
        for (Eigen::Index i = 0; i < d_z.rows(); ++i) {
            grad.covariate_embeddings[c].row(batch.covariate_levels[c][i]) += d_z.row(i);
        }
    }

    // Adversary path: parameter gradients of the adversary loss, input gradient enters the objective with -weight.
    Eigen::MatrixXd d_basal_adv = backward(params.tensors.adversary, adv_cache, std::move(adv.d_logits), grad.adversary);
    Eigen::MatrixXd d_basal = d_z - adversary_weight * d_basal_adv;
    backward(params.tensors.encoder, enc_cache, std::move(d_basal), grad.encoder);
    return out;
}

}
