#include "systemmatch/expression.hpp"
#include "systemmatch/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <unordered_map>
#include <unordered_set>

namespace systemmatch {

const char* to_string(NormState state) {
    switch (state) {
        case NormState::raw_counts: return "raw_counts";
        case NormState::log_normalized: return "log_normalized";
        case NormState::zscored: return "zscored";
    }
    return "unknown";
}

const char* to_string(DatasetRole role) {
    switch (role) {
        case DatasetRole::target: return "target";
        case DatasetRole::query: return "query";
        case DatasetRole::held_out: return "held_out";
        case DatasetRole::in_silico: return "in_silico";
    }
    return "unknown";
}

namespace {

void check_unique(const std::vector<std::string>& ids, const char* what) {
    std::unordered_set<std::string> seen;
    seen.reserve(ids.size());
    for (const auto& id : ids) {
        if (!seen.insert(id).second) {
            throw DataError(std::string("duplicate ") + what + " identifier '" + id + "'");
        }
    }
}

}

GenePanel::GenePanel(std::vector<std::string> genes) : my_genes(std::move(genes)) {
    if (my_genes.empty()) {
        throw DataError("gene panel must not be empty");
    }
    check_unique(my_genes, "gene");
}

CellExpressionMatrix::CellExpressionMatrix(Matrix values,
                                           std::vector<std::string> gene_ids,
                                           std::vector<std::string> cell_ids,
                                           NormState state,
                                           std::optional<ZscoreStats> zscore) :
    my_values(std::move(values)),
    my_gene_ids(std::move(gene_ids)),
    my_cell_ids(std::move(cell_ids)),
    my_state(state),
    my_zscore(std::move(zscore))
{
    if (static_cast<std::size_t>(my_values.rows()) != my_cell_ids.size()) {
        throw DataError("row count does not match the number of cell identifiers");
    }
    if (static_cast<std::size_t>(my_values.cols()) != my_gene_ids.size()) {
        throw DataError("column count does not match the number of gene identifiers");
    }
    check_unique(my_gene_ids, "gene");
    if (!my_values.allFinite()) {
        throw DataError("expression values must be finite");
    }
    if (my_state != NormState::zscored) {
        if (my_values.size() && my_values.minCoeff() < 0) {
            throw DataError(std::string("negative expression value in ") + to_string(my_state) + " matrix");
        }
    } else {
        if (!my_zscore) {
            throw DataError("z-scored matrix must record its mean/std vectors");
        }
        if (static_cast<std::size_t>(my_zscore->mean.size()) != my_gene_ids.size() ||
            static_cast<std::size_t>(my_zscore->std.size()) != my_gene_ids.size()) {
            throw DataError("z-score statistics do not match the number of genes");
        }
    }
}

CellExpressionMatrix CellExpressionMatrix::select_cells(const std::vector<std::size_t>& rows) const {
    Matrix out(rows.size(), my_values.cols());
    std::vector<std::string> ids;
    ids.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= n_cells()) {
            throw UsageError("cell index out of range");
        }
        out.row(i) = my_values.row(rows[i]);
        ids.push_back(my_cell_ids[rows[i]]);
    }
    return CellExpressionMatrix(std::move(out), my_gene_ids, std::move(ids), my_state, my_zscore);
}

CellExpressionMatrix CellExpressionMatrix::select_genes(const std::vector<std::size_t>& cols) const {
    Matrix out(my_values.rows(), cols.size());
    std::vector<std::string> ids;
    ids.reserve(cols.size());
    std::optional<ZscoreStats> stats;
    if (my_zscore) {
        stats = ZscoreStats{Vector(cols.size()), Vector(cols.size())};
    }
    for (std::size_t j = 0; j < cols.size(); ++j) {
        if (cols[j] >= n_genes()) {
            throw UsageError("gene index out of range");
        }
        out.col(j) = my_values.col(cols[j]);
        ids.push_back(my_gene_ids[cols[j]]);
        if (stats) {
            stats->mean[j] = my_zscore->mean[cols[j]];
            stats->std[j] = my_zscore->std[cols[j]];
        }
    }
    return CellExpressionMatrix(std::move(out), std::move(ids), my_cell_ids, my_state, std::move(stats));
}

ConditionDataset::ConditionDataset(std::string id, CellExpressionMatrix m, DatasetRole r) :
    condition_id(std::move(id)), matrix(std::move(m)), role(r)
{
    if (matrix.n_cells() == 0) {
        throw DataError("condition '" + condition_id + "' has no cells");
    }
}

StudyCollection::StudyCollection(ConditionDataset target, std::vector<ConditionDataset> queries, GenePanel panel) :
    my_target(std::move(target)), my_queries(std::move(queries)), my_panel(std::move(panel))
{
    std::unordered_set<std::string> ids{my_target.condition_id};
    for (const auto& q : my_queries) {
        if (!ids.insert(q.condition_id).second) {
            throw DataError("duplicate condition identifier '" + q.condition_id + "'");
        }
        if (q.matrix.gene_ids() != my_panel.genes()) {
            throw DataError("query '" + q.condition_id + "' is not projected onto the panel");
        }
    }
    if (my_target.matrix.gene_ids() != my_panel.genes()) {
        throw DataError("target is not projected onto the panel");
    }
}

CellExpressionMatrix filter_low_quality_cells(const CellExpressionMatrix& m, std::size_t min_nonzero_genes) {
    if (m.norm_state() != NormState::raw_counts) {
        throw UsageError("quality filtering requires raw counts");
    }
    if (min_nonzero_genes == 0) {
        throw UsageError("minimum number of non-zero genes must be positive");
    }
    const auto& values = m.values();
    std::vector<std::size_t> keep;
    for (Eigen::Index c = 0; c < values.rows(); ++c) {
        auto detected = static_cast<std::size_t>((values.row(c).array() != 0).count());
        if (detected >= min_nonzero_genes) {
            keep.push_back(c);
        }
    }
    if (keep.empty()) {
        throw DataError("all cells were removed by quality filtering");
    }
    return m.select_cells(keep);
}

CellExpressionMatrix log_normalize(const CellExpressionMatrix& m, double scale) {
    if (m.norm_state() != NormState::raw_counts) {
        throw UsageError("log-normalization requires raw counts");
    }
    if (!(scale > 0)) {
        throw UsageError("normalization scale must be positive");
    }
    Matrix out = m.values();
    for (Eigen::Index c = 0; c < out.rows(); ++c) {
        double total = out.row(c).sum();
        if (total <= 0) {
            throw DataError("cell '" + m.cell_ids()[c] + "' has a zero total count");
        }
        out.row(c) = (out.row(c).array() * (scale / total)).log1p();
    }
    return CellExpressionMatrix(std::move(out), m.gene_ids(), m.cell_ids(), NormState::log_normalized);
}

PanelProjection project_to_panel(const CellExpressionMatrix& m, const GenePanel& panel) {
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t g = 0; g < m.n_genes(); ++g) {
        index.emplace(m.gene_ids()[g], g);
    }

    Matrix out = Matrix::Zero(m.values().rows(), panel.size());
    std::vector<std::string> missing;
    std::optional<ZscoreStats> stats;
    if (m.zscore_stats()) {
        stats = ZscoreStats{Vector::Zero(panel.size()), Vector::Ones(panel.size())};
    }

    for (std::size_t j = 0; j < panel.size(); ++j) {
        auto it = index.find(panel.genes()[j]);
        if (it == index.end()) {
            missing.push_back(panel.genes()[j]);
            continue;
        }
        out.col(j) = m.values().col(it->second);
        if (stats) {
            stats->mean[j] = m.zscore_stats()->mean[it->second];
            stats->std[j] = m.zscore_stats()->std[it->second];
        }
    }

    if (missing.size() == panel.size()) {
        throw DataError("none of the panel genes are present in the matrix");
    }

    return PanelProjection{
        CellExpressionMatrix(std::move(out), panel.genes(), m.cell_ids(), m.norm_state(), std::move(stats)),
        std::move(missing)
    };
}

std::vector<CellExpressionMatrix> zscore_fit_apply(const std::vector<CellExpressionMatrix>& datasets) {
    if (datasets.empty()) {
        throw UsageError("no datasets supplied for z-scoring");
    }
    const auto& genes = datasets.front().gene_ids();
    std::size_t total_cells = 0;
    for (const auto& d : datasets) {
        if (d.norm_state() != NormState::log_normalized) {
            throw UsageError(std::string("z-scoring requires log-normalized input, got ") + to_string(d.norm_state()));
        }
        if (d.gene_ids() != genes) {
            throw DataError("gene order differs between datasets being z-scored");
        }
        total_cells += d.n_cells();
    }

    // Two-pass pooled mean and population variance.
    const auto n_genes = static_cast<Eigen::Index>(genes.size());
    Vector mean = Vector::Zero(n_genes);
    for (const auto& d : datasets) {
        mean += d.values().colwise().sum().transpose();
    }
    mean /= static_cast<double>(total_cells);

    Vector var = Vector::Zero(n_genes);
    for (const auto& d : datasets) {
        var += (d.values().rowwise() - mean.transpose()).array().square().colwise().sum().matrix().transpose();
    }
    var /= static_cast<double>(total_cells);
    Vector sd = var.array().sqrt().max(zscore_std_floor);

    std::vector<CellExpressionMatrix> output;
    output.reserve(datasets.size());
    for (const auto& d : datasets) {
        Matrix z = (d.values().rowwise() - mean.transpose()).array().rowwise() / sd.transpose().array();
        output.emplace_back(std::move(z), d.gene_ids(), d.cell_ids(), NormState::zscored, ZscoreStats{mean, sd});
    }
    return output;
}

Vector pseudobulk(const CellExpressionMatrix& m) {
    if (m.n_cells() == 0) {
        throw DataError("cannot pseudobulk an empty dataset");
    }
    return m.values().colwise().mean().transpose();
}

Vector pseudobulk(const ConditionDataset& d) {
    return pseudobulk(d.matrix);
}

std::vector<std::size_t> sample_gene_indices(std::size_t n_genes, double fraction, std::uint64_t seed) {
    if (!(fraction > 0) || fraction > 1) {
        throw UsageError("gene subsampling fraction must lie in (0, 1]");
    }
    // The small offset keeps e.g. 0.1 * 30 from rounding up to 4.
    auto keep = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n_genes) - 1e-9));
    keep = std::clamp<std::size_t>(keep, n_genes ? 1 : 0, n_genes);

    std::vector<std::size_t> order(n_genes);
    std::iota(order.begin(), order.end(), 0);
    if (keep < n_genes) {
        std::mt19937_64 rng(seed);
        std::shuffle(order.begin(), order.end(), rng);
        order.resize(keep);
        std::sort(order.begin(), order.end());
    }
    return order;
}

CellExpressionMatrix subsample_genes(const CellExpressionMatrix& m, double fraction, std::uint64_t seed) {
    return m.select_genes(sample_gene_indices(m.n_genes(), fraction, seed));
}

}
