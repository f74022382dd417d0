#ifndef SYSTEMMATCH_EXPRESSION_HPP
#define SYSTEMMATCH_EXPRESSION_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

/**
 * @file expression.hpp
 * @brief Expression-matrix data model, quality control, normalization and gene subsetting.
 */

namespace systemmatch {

/**
 * Dense cells-by-genes storage. Row-major so that each cell is contiguous.
 */
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

enum class NormState { raw_counts, log_normalized, zscored };

const char* to_string(NormState state);

/**
 * @brief Ordered set of gene identifiers defining the analysis subspace.
 */
class GenePanel {
public:
    /**
     * @param genes Gene identifiers, in the order that columns should take after projection.
     * Must be non-empty and free of duplicates.
     */
    explicit GenePanel(std::vector<std::string> genes);

    const std::vector<std::string>& genes() const { return my_genes; }
    std::size_t size() const { return my_genes.size(); }

private:
    std::vector<std::string> my_genes;
};

/**
 * @brief Per-gene statistics used to z-score a set of matrices.
 */
struct ZscoreStats {
    Vector mean;
    Vector std;
};

/**
 * @brief Immutable cells-by-genes expression matrix with identifiers.
 */
class CellExpressionMatrix {
public:
    CellExpressionMatrix(Matrix values,
                         std::vector<std::string> gene_ids,
                         std::vector<std::string> cell_ids,
                         NormState state = NormState::raw_counts,
                         std::optional<ZscoreStats> zscore = std::nullopt);

    const Matrix& values() const { return my_values; }
    const std::vector<std::string>& gene_ids() const { return my_gene_ids; }
    const std::vector<std::string>& cell_ids() const { return my_cell_ids; }
    NormState norm_state() const { return my_state; }
    const std::optional<ZscoreStats>& zscore_stats() const { return my_zscore; }

    std::size_t n_cells() const { return static_cast<std::size_t>(my_values.rows()); }
    std::size_t n_genes() const { return static_cast<std::size_t>(my_values.cols()); }

    /**
     * @return New matrix restricted to the given cell rows, in the given order.
     */
    CellExpressionMatrix select_cells(const std::vector<std::size_t>& rows) const;

    /**
     * @return New matrix restricted to the given gene columns, in the given order.
     * Z-score statistics are subset accordingly.
     */
    CellExpressionMatrix select_genes(const std::vector<std::size_t>& cols) const;

private:
    Matrix my_values;
    std::vector<std::string> my_gene_ids;
    std::vector<std::string> my_cell_ids;
    NormState my_state;
    std::optional<ZscoreStats> my_zscore;
};

enum class DatasetRole { target, query, held_out, in_silico };

const char* to_string(DatasetRole role);

/**
 * @brief A named condition's cell population.
 */
struct ConditionDataset {
    ConditionDataset(std::string id, CellExpressionMatrix m, DatasetRole r = DatasetRole::query);

    std::string condition_id;
    CellExpressionMatrix matrix;
    DatasetRole role;
};

/**
 * @brief One target plus its candidate queries, all sharing the panel's gene order.
 */
class StudyCollection {
public:
    StudyCollection(ConditionDataset target, std::vector<ConditionDataset> queries, GenePanel panel);

    const ConditionDataset& target() const { return my_target; }
    const std::vector<ConditionDataset>& queries() const { return my_queries; }
    const GenePanel& panel() const { return my_panel; }

private:
    ConditionDataset my_target;
    std::vector<ConditionDataset> my_queries;
    GenePanel my_panel;
};

/**
 * Keep cells with at least `min_nonzero_genes` non-zero entries.
 * Requires raw counts; throws `DataError` if no cell survives.
 */
CellExpressionMatrix filter_low_quality_cells(const CellExpressionMatrix& m, std::size_t min_nonzero_genes);

/**
 * Library-size normalization to `scale` total counts per cell, followed by `log1p`.
 */
CellExpressionMatrix log_normalize(const CellExpressionMatrix& m, double scale = 10000);

/**
 * @brief Result of projecting a matrix onto a gene panel.
 */
struct PanelProjection {
    CellExpressionMatrix matrix;
    /** Panel genes absent from the input, filled with zeros. */
    std::vector<std::string> missing_genes;
};

PanelProjection project_to_panel(const CellExpressionMatrix& m, const GenePanel& panel);

inline constexpr double zscore_std_floor = 1e-8;

/**
 * Z-score every gene using the population mean and standard deviation pooled over all cells of all inputs.
 * The standard deviation is floored at `zscore_std_floor`.
 */
std::vector<CellExpressionMatrix> zscore_fit_apply(const std::vector<CellExpressionMatrix>& datasets);

/**
 * Per-gene mean over cells.
 */
Vector pseudobulk(const CellExpressionMatrix& m);
Vector pseudobulk(const ConditionDataset& d);

/**
 * Column indices chosen by `subsample_genes()`, sorted ascending.
 * Exposed separately so that several matrices can be corrupted with the same gene subset.
 */
std::vector<std::size_t> sample_gene_indices(std::size_t n_genes, double fraction, std::uint64_t seed);

/**
 * Keep `ceil(fraction * n_genes)` uniformly sampled gene columns, preserving their relative order.
 */
CellExpressionMatrix subsample_genes(const CellExpressionMatrix& m, double fraction, std::uint64_t seed);

}

#endif
