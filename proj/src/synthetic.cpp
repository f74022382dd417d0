#include "systemmatch/synthetic.hpp"
#include "systemmatch/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

namespace systemmatch {

namespace {

std::vector<std::string> gene_names(std::size_t n) {
    std::vector<std::string> out;
    char buffer[32];
    for (std::size_t g = 0; g < n; ++g) {
        std::snprintf(buffer, sizeof(buffer), "gene%03zu", g);
        out.emplace_back(buffer);
    }
    return out;
}

std::vector<std::string> cell_names(const std::string& condition, std::size_t n) {
    std::vector<std::string> out;
    for (std::size_t c = 0; c < n; ++c) {
        out.push_back(condition + "_" + std::to_string(c));
    }
    return out;
}

Eigen::VectorXd uniform_base(std::size_t n, double level, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.5 * level, 1.5 * level);
    Eigen::VectorXd out(n);
    for (std::size_t g = 0; g < n; ++g) out[g] = u(rng);
    return out;
}

Matrix noisy_cells(const Eigen::VectorXd& mean, std::size_t n_cells, double sigma, std::mt19937_64& rng) {
    Matrix out(n_cells, mean.size());
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t c = 0; c < n_cells; ++c) {
        for (Eigen::Index g = 0; g < mean.size(); ++g) {
            double noise = sigma > 0 ? sigma * normal(rng) : 0.0;
            out(c, g) = std::max(0.0, mean[g] + noise);
        }
    }
    return out;
}

}

SyntheticStudy generate_synthetic(const SyntheticSpec& spec) {
    if (spec.n_genes == 0 || spec.cells_per_condition == 0) {
        throw UsageError("synthetic study needs genes and cells");
    }
    if (spec.n_signature_genes > spec.n_genes) {
        throw UsageError("more signature genes than genes");
    }
    if (spec.query_positions.empty()) {
        throw UsageError("synthetic study needs at least one query");
    }

    std::mt19937_64 rng(spec.seed);
    auto genes = gene_names(spec.n_genes);
    Eigen::VectorXd base = uniform_base(spec.n_genes, spec.base_level, rng);

    std::vector<std::size_t> order(spec.n_genes);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    Eigen::VectorXd signature = Eigen::VectorXd::Zero(spec.n_genes);
    for (std::size_t s = 0; s < spec.n_signature_genes; ++s) {
        signature[order[s]] = spec.effect_size;
    }

    auto make = [&](const std::string& id, double position, DatasetRole role) {
        Eigen::VectorXd mean = base + position * signature;
        return ConditionDataset(id,
                                CellExpressionMatrix(noisy_cells(mean, spec.cells_per_condition, spec.noise, rng),
                                                     genes, cell_names(id, spec.cells_per_condition)),
                                role);
    };

    auto target = make("target", spec.target_position, DatasetRole::target);
    std::vector<ConditionDataset> queries;
    std::vector<std::string> ids;
    for (std::size_t q = 0; q < spec.query_positions.size(); ++q) {
        ids.push_back("query" + std::to_string(q));
        queries.push_back(make(ids.back(), spec.query_positions[q], DatasetRole::query));
    }

    std::vector<std::size_t> planted(ids.size());
    std::iota(planted.begin(), planted.end(), 0);
    std::sort(planted.begin(), planted.end(), [&](std::size_t a, std::size_t b) {
        double da = std::abs(spec.query_positions[a] - spec.target_position);
        double db = std::abs(spec.query_positions[b] - spec.target_position);
        return da != db ? da < db : ids[a] < ids[b];
    });

    SyntheticStudy out{StudyCollection(std::move(target), std::move(queries), GenePanel(genes)), {}, spec.query_positions};
    for (auto i : planted) out.planted_order.push_back(ids[i]);
    return out;
}

PerturbationalData generate_synthetic_perturbational(const PerturbationalSpec& spec) {
    if (spec.n_genes == 0 || spec.cells_per_condition == 0 || spec.n_batches == 0) {
        throw UsageError("perturbational spec needs genes, cells and at least one batch");
    }
    if (spec.bases.empty() || spec.addons.empty()) {
        throw UsageError("perturbational spec needs bases and add-ons");
    }

    std::mt19937_64 rng(spec.seed);
    PerturbationalData out;
    out.gene_ids = gene_names(spec.n_genes);
    const auto G = static_cast<Eigen::Index>(spec.n_genes);

    auto check_length = [&](const Eigen::VectorXd& v, const std::string& name) {
        if (v.size() != G) {
            throw UsageError("override vector for '" + name + "' has the wrong length");
        }
        return v;
    };

    std::map<std::string, Eigen::VectorXd> base_vec, effect_vec;
    for (const auto& b : spec.bases) {
        auto drawn = uniform_base(spec.n_genes, spec.base_level, rng);
        auto it = spec.base_vectors.find(b);
        base_vec[b] = (it == spec.base_vectors.end() ? drawn : check_length(it->second, b));
    }
    std::uniform_real_distribution<double> effect(-spec.effect_size, spec.effect_size);
    std::bernoulli_distribution affected(spec.effect_fraction);
    for (const auto& a : spec.addons) {
        Eigen::VectorXd drawn = Eigen::VectorXd::Zero(G);
        for (Eigen::Index g = 0; g < G; ++g) {
            if (affected(rng)) drawn[g] = effect(rng);
        }
        auto it = spec.effect_vectors.find(a);
        effect_vec[a] = (it == spec.effect_vectors.end() ? drawn : check_length(it->second, a));
    }
    std::vector<Eigen::VectorXd> batch_vec;
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t b = 0; b < spec.n_batches; ++b) {
        Eigen::VectorXd v(G);
        for (Eigen::Index g = 0; g < G; ++g) v[g] = spec.n_batches > 1 ? spec.batch_effect * normal(rng) : 0.0;
        batch_vec.push_back(std::move(v));
    }

    auto make = [&](const std::string& base, const PerturbationSet& addons, bool held_out) {
        if (!base_vec.count(base)) {
            throw UsageError("unknown base '" + base + "'");
        }
        Eigen::VectorXd mean = base_vec[base];
        for (const auto& a : addons) {
            if (!effect_vec.count(a)) {
                throw UsageError("unknown add-on '" + a + "'");
            }
            mean += effect_vec[a];
        }

        auto id = combination_id(base, addons);
        Matrix values(spec.cells_per_condition, G);
        std::vector<CovariateMap> covs;
        Eigen::VectorXd expected = Eigen::VectorXd::Zero(G);
        for (std::size_t c = 0; c < spec.cells_per_condition; ++c) {
            std::size_t batch = c % spec.n_batches;
            Eigen::VectorXd cell_mean = mean + batch_vec[batch];
            values.row(c) = noisy_cells(cell_mean, 1, spec.noise, rng).row(0);
            expected += cell_mean;
            CovariateMap cov{{"base", base}};
            if (spec.n_batches > 1) {
                cov["batch"] = "batch" + std::to_string(batch);
            }
            covs.push_back(std::move(cov));
        }
        expected /= static_cast<double>(spec.cells_per_condition);

        PerturbationalCondition cond{
            ConditionDataset(id,
                             CellExpressionMatrix(std::move(values), out.gene_ids, cell_names(id, spec.cells_per_condition), NormState::log_normalized),
                             held_out ? DatasetRole::held_out : DatasetRole::query),
            base, addons, std::move(covs), held_out, std::move(expected)
        };
        out.conditions.push_back(std::move(cond));
    };

    for (const auto& b : spec.bases) {
        make(b, {}, false);
        for (const auto& a : spec.addons) {
            make(b, {a}, false);
        }
    }
    for (const auto& [b, addons] : spec.held_out) {
        make(b, addons, true);
    }
    return out;
}

TrainingSet PerturbationalData::training_set() const {
    TrainingSet out(gene_ids);
    for (const auto& c : conditions) {
        if (c.held_out) {
            continue;
        }
        // Cells of one condition can differ in batch, so add them one at a time.
        for (std::size_t i = 0; i < c.data.matrix.n_cells(); ++i) {
            out.add_condition(c.data.matrix.select_cells({i}), c.addons, c.cell_covariates[i]);
        }
    }
    return out;
}

std::vector<CombinationBase> PerturbationalData::combination_bases() const {
    std::vector<CombinationBase> out;
    for (const auto& c : conditions) {
        if (!c.held_out && c.addons.empty()) {
            out.push_back(CombinationBase{c.base, c.data.matrix, c.cell_covariates.front()});
        }
    }
    return out;
}

std::vector<ConditionDataset> PerturbationalData::held_out() const {
    std::vector<ConditionDataset> out;
    for (const auto& c : conditions) {
        if (c.held_out) out.push_back(c.data);
    }
    return out;
}

std::set<std::string> PerturbationalData::tested_ids() const {
    std::set<std::string> out;
    for (const auto& c : conditions) {
        if (!c.held_out) out.insert(c.data.condition_id);
    }
    return out;
}

}
