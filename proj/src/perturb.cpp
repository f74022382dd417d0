#include "systemmatch/perturb.hpp"
#include "systemmatch/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace systemmatch {

TrainingSet::TrainingSet(std::vector<std::string> gene_ids) :
    my_gene_ids(std::move(gene_ids)), my_expression(0, static_cast<Eigen::Index>(my_gene_ids.size())) {}

void TrainingSet::add_condition(const CellExpressionMatrix& m, const PerturbationSet& perturbations, const CovariateMap& covariates) {
    if (m.gene_ids() != my_gene_ids) {
        throw DataError("training condition does not share the training gene order");
    }
    if (m.norm_state() == NormState::raw_counts) {
        throw UsageError("training data must be normalized");
    }
    const auto start = my_expression.rows();
    my_expression.conservativeResize(start + m.values().rows(), Eigen::NoChange);
    my_expression.bottomRows(m.values().rows()) = m.values();
    for (std::size_t i = 0; i < m.n_cells(); ++i) {
        my_labels.push_back(CellLabels{perturbations, covariates});
    }
}

PerturbationVocabulary TrainingSet::perturbation_vocabulary() const {
    std::set<std::string> names;
    for (const auto& l : my_labels) {
        names.insert(l.perturbations.begin(), l.perturbations.end());
    }
    return PerturbationVocabulary{std::vector<std::string>(names.begin(), names.end())};
}

CovariateVocabulary TrainingSet::covariate_vocabulary() const {
    std::map<std::string, std::set<std::string>> seen;
    for (const auto& l : my_labels) {
        for (const auto& [cls, level] : l.covariates) {
            seen[cls].insert(level);
        }
    }
    CovariateVocabulary out;
    for (const auto& [cls, levels] : seen) {
        out.classes.push_back(cls);
        out.levels.emplace_back(levels.begin(), levels.end());
    }
    return out;
}

Batch TrainingSet::make_batch(const ModelParams& params, const std::vector<std::size_t>& rows) const {
    Batch batch;
    const auto n = static_cast<Eigen::Index>(rows.size());
    batch.expression.resize(n, my_expression.cols());
    batch.perturbation = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(params.perturbations.names.size()));
    batch.covariate_levels.assign(params.covariates.classes.size(), std::vector<std::size_t>(rows.size()));

    for (Eigen::Index i = 0; i < n; ++i) {
        batch.expression.row(i) = my_expression.row(rows[i]);
        const auto& label = my_labels[rows[i]];
        for (const auto& p : label.perturbations) {
            batch.perturbation(i, params.perturbations.index_of(p)) = 1;
        }
        for (std::size_t c = 0; c < params.covariates.classes.size(); ++c) {
            auto it = label.covariates.find(params.covariates.classes[c]);
            if (it == label.covariates.end()) {
                throw DataError("cell lacks a level for covariate '" + params.covariates.classes[c] + "'");
            }
            batch.covariate_levels[c][i] = params.covariates.level_index(c, it->second);
        }
    }
    return batch;
}

namespace {

struct TensorRef {
    double* data;
    std::size_t size;
    bool adversary;
};

std::vector<TensorRef> refs(ModelTensors& t) {
    std::vector<TensorRef> out;
    for_each_tensor(t, [&](const std::string&, double* data, std::size_t n, bool adv) { out.push_back(TensorRef{data, n, adv}); });
    return out;
}

class Adam {
public:
    Adam(const ModelTensors& shape) : my_m(shape.zeros_like()), my_v(shape.zeros_like()) {}

    void step(ModelTensors& params, ModelTensors& grad, bool adversary, double lr) {
        auto& t = adversary ? my_t_adv : my_t_ae;
        ++t;
        const double c1 = 1 - std::pow(beta1, static_cast<double>(t));
        const double c2 = 1 - std::pow(beta2, static_cast<double>(t));
        auto p = refs(params), g = refs(grad), m = refs(my_m), v = refs(my_v);
        for (std::size_t k = 0; k < p.size(); ++k) {
            if (p[k].adversary != adversary) {
                continue;
            }
            for (std::size_t i = 0; i < p[k].size; ++i) {
                double gi = g[k].data[i];
                m[k].data[i] = beta1 * m[k].data[i] + (1 - beta1) * gi;
                v[k].data[i] = beta2 * v[k].data[i] + (1 - beta2) * gi * gi;
                p[k].data[i] -= lr * (m[k].data[i] / c1) / (std::sqrt(v[k].data[i] / c2) + epsilon);
            }
        }
    }

private:
    static constexpr double beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8;
    ModelTensors my_m, my_v;
    std::size_t my_t_ae = 0, my_t_adv = 0;
};

void check_config(const TrainConfig& cfg) {
    if (cfg.epochs == 0 || cfg.batch_size == 0) {
        throw UsageError("training needs positive epochs and batch size");
    }
    if (cfg.lr_autoencoder < 0 || cfg.lr_adversary < 0 || cfg.adversary_weight < 0) {
        throw UsageError("learning rates and adversary weight must be non-negative");
    }
}

void check_data(const TrainingSet& data) {
    if (data.size() == 0) {
        throw DataError("no training cells");
    }
    std::set<PerturbationSet> conditions;
    bool has_control = false;
    for (const auto& l : data.labels()) {
        conditions.insert(l.perturbations);
        has_control = has_control || l.perturbations.empty();
    }
    if (conditions.size() < 2) {
        throw DataError("training needs at least two distinct perturbation conditions");
    }
    if (!has_control) {
        throw DataError("training needs a control condition (empty perturbation set)");
    }
}

}

ModelParams initialize_for(const TrainingSet& data, const TrainConfig& cfg) {
    auto params = initialize_model(data.gene_ids(), data.perturbation_vocabulary(), data.covariate_vocabulary(), cfg.hyper, cfg.seed);
    if (data.size()) {
        Eigen::VectorXd mean = data.expression().colwise().mean().transpose();
        auto& bias = params.tensors.decoder.layers.back().bias;
        for (Eigen::Index g = 0; g < bias.size(); ++g) {
            double y = std::max(mean[g], 1e-3);
            bias[g] = y > 30 ? y : std::log(std::expm1(y));
        }
    }
    return params;
}

TrainResult train(const TrainingSet& data, const TrainConfig& cfg) {
    check_data(data);
    return train(data, cfg, initialize_for(data, cfg));
}

TrainResult train(const TrainingSet& data, const TrainConfig& cfg, ModelParams initial) {
    check_config(cfg);
    check_data(data);
    if (initial.gene_ids != data.gene_ids()) {
        throw UsageError("initial model and training data have different genes");
    }

    TrainResult out;
    out.params = std::move(initial);
    auto& params = out.params;
    Adam optimizer(params.tensors);
    ModelTensors grad;

    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(cfg.seed ^ 0x5851f42d4c957f2dULL);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double recon = 0, adv = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            std::vector<std::size_t> rows(order.begin() + start, order.begin() + std::min(order.size(), start + cfg.batch_size));
            auto batch = data.make_batch(params, rows);

            auto loss = compute_gradients(params, batch, cfg.adversary_weight, grad);
            if (!std::isfinite(loss.objective)) {
                throw NumericError("training diverged at epoch " + std::to_string(epoch) + " (non-finite loss)");
            }
            optimizer.step(params.tensors, grad, false, cfg.lr_autoencoder);

            for (std::size_t s = 0; s < cfg.adversary_steps; ++s) {
                compute_gradients(params, batch, cfg.adversary_weight, grad);
                optimizer.step(params.tensors, grad, true, cfg.lr_adversary);
            }

            recon += loss.reconstruction * static_cast<double>(rows.size());
            adv += loss.adversary * static_cast<double>(rows.size());
        }
        recon /= static_cast<double>(order.size());
        adv /= static_cast<double>(order.size());
        if (!std::isfinite(recon) || !std::isfinite(adv)) {
            throw NumericError("training diverged at epoch " + std::to_string(epoch) + " (non-finite loss)");
        }
        out.reconstruction_history.push_back(recon);
        out.adversary_history.push_back(adv);
    }
    return out;
}

std::string combination_id(const std::string& base, const PerturbationSet& addons) {
    std::string out = base;
    for (const auto& a : addons) {
        out += "+" + a;
    }
    return out;
}

ConditionDataset predict_condition(const ModelParams& params,
                                   const CellExpressionMatrix& basal_cells,
                                   const PerturbationSet& perturbations,
                                   const CovariateMap& covariates,
                                   const std::string& condition_id,
                                   const PredictOptions& options)
{
    if (basal_cells.gene_ids() != params.gene_ids) {
        throw DataError("control cells do not share the model's gene order");
    }
    if (options.n_cells == 0) {
        throw UsageError("number of predicted cells must be positive");
    }
    const auto available = basal_cells.n_cells();
    if (available == 0) {
        throw DataError("no control cells to predict from");
    }

    std::mt19937_64 rng(options.seed);
    std::vector<std::size_t> rows;
    if (options.with_replacement) {
        std::uniform_int_distribution<std::size_t> pick(0, available - 1);
        for (std::size_t i = 0; i < options.n_cells; ++i) {
            rows.push_back(pick(rng));
        }
    } else {
        if (options.n_cells > available) {
            throw UsageError("requested " + std::to_string(options.n_cells) + " cells without replacement from " +
                             std::to_string(available) + " control cells");
        }
        rows.resize(available);
        std::iota(rows.begin(), rows.end(), 0);
        std::shuffle(rows.begin(), rows.end(), rng);
        rows.resize(options.n_cells);
    }

    Eigen::MatrixXd input(rows.size(), basal_cells.values().cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        input.row(i) = basal_cells.values().row(rows[i]);
    }

    Eigen::MatrixXd basal = encode_batch(params, input);
    LatentState shift{Eigen::VectorXd::Zero(params.hyper.latent_dim), perturbations, covariates};
    Eigen::VectorXd offset = compose_latent(params, shift);
    Eigen::MatrixXd z = basal.rowwise() + offset.transpose();
    Matrix decoded = decode_batch(params, z);

    std::vector<std::string> cell_ids;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        cell_ids.push_back(condition_id + "#" + std::to_string(i));
    }
    return ConditionDataset(condition_id,
                            CellExpressionMatrix(std::move(decoded), params.gene_ids, std::move(cell_ids), NormState::log_normalized),
                            DatasetRole::in_silico);
}

std::vector<ConditionDataset> generate_combination_grid(const ModelParams& params,
                                                        const std::vector<CombinationBase>& bases,
                                                        const std::vector<std::string>& addons,
                                                        const std::set<int>& orders,
                                                        const std::set<std::string>& exclude,
                                                        const PredictOptions& options)
{
    if (bases.empty() || addons.empty()) {
        throw UsageError("combination grid needs at least one base and one add-on");
    }
    for (int order : orders) {
        if (order != 2 && order != 3) {
            throw UsageError("combination order must be 2 or 3, got " + std::to_string(order));
        }
    }

    std::vector<ConditionDataset> out;
    for (const auto& base : bases) {
        for (int order : orders) {
            const auto k = static_cast<std::size_t>(order);
            if (k > addons.size()) {
                continue;
            }
            // Lexicographic walk over k-subsets of add-on positions.
            std::vector<bool> mask(addons.size(), false);
            std::fill(mask.begin(), mask.begin() + k, true);
            do {
                PerturbationSet chosen;
                for (std::size_t a = 0; a < addons.size(); ++a) {
                    if (mask[a]) chosen.insert(addons[a]);
                }
                auto id = combination_id(base.id, chosen);
                if (exclude.count(id)) {
                    continue;
                }
                PredictOptions opt = options;
                opt.seed = options.seed + out.size();
                out.push_back(predict_condition(params, base.control_cells, chosen, base.covariates, id, opt));
            } while (std::prev_permutation(mask.begin(), mask.end()));
        }
    }
    return out;
}

HeldOutValidation validate_held_out(const std::vector<ConditionDataset>& predicted,
                                    const std::vector<ConditionDataset>& held_out,
                                    const DistanceMetricSpec& spec,
                                    const EmdOptions& options)
{
    HeldOutValidation out;
    out.raw = pairwise_distance_matrix(held_out, predicted, spec, options);
    out.normalized = normalize_columns_minmax(out.raw);
    for (Eigen::Index i = 0; i < out.raw.values.rows(); ++i) {
        Eigen::Index best;
        out.raw.values.row(i).minCoeff(&best);
        out.nearest.push_back(out.raw.col_ids[best]);
    }
    return out;
}

double r_squared(const Eigen::VectorXd& actual, const Eigen::VectorXd& predicted) {
    if (actual.size() != predicted.size() || actual.size() == 0) {
        throw UsageError("R-squared needs two non-empty vectors of equal length");
    }
    double ss_tot = (actual.array() - actual.mean()).square().sum();
    if (ss_tot == 0) {
        throw NumericError("R-squared is undefined for a constant reference vector");
    }
    double ss_res = (actual - predicted).squaredNorm();
    return 1 - ss_res / ss_tot;
}

}
