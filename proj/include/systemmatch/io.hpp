#ifndef SYSTEMMATCH_IO_HPP
#define SYSTEMMATCH_IO_HPP

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "expression.hpp"

/**
 * @file io.hpp
 * @brief Reading and writing expression matrices, gene panels and report tables.
 *
 * Dense CSV: the first row holds a corner label followed by gene identifiers;
 * each following row holds a cell identifier followed by one non-negative number per gene.
 *
 * Sparse triplet: an optional block of `%` comment lines, a header `rows cols nnz`, then `nnz` lines of
 * 1-based `row col value` with rows indexing cells and columns indexing genes.
 * Sidecar `<path>.genes` lists one gene identifier per line, and `<path>.cells` lists `cell_id condition` per line.
 */

namespace systemmatch {

enum class InputFormat { dense_csv, sparse_triplet };

InputFormat parse_format(std::string_view name);
const char* to_string(InputFormat format);

struct IngestedMatrix {
    /** Raw counts. */
    CellExpressionMatrix matrix;
    /** Condition of each cell; empty for dense input. */
    std::vector<std::string> cell_conditions;
};

/**
 * @throws ParseError with the offending line for malformed content.
 */
IngestedMatrix ingest(const std::filesystem::path& path, InputFormat format);

/**
 * Cells of one condition from a multi-condition ingest.
 */
CellExpressionMatrix extract_condition(const IngestedMatrix& ingested, const std::string& condition);

void write_dense_csv(const std::filesystem::path& path, const CellExpressionMatrix& m);
void write_sparse_triplet(const std::filesystem::path& path, const CellExpressionMatrix& m, const std::vector<std::string>& conditions);

/**
 * One gene identifier per line; blank lines and `#` comments are ignored.
 */
GenePanel read_panel(const std::filesystem::path& path);
void write_panel(const std::filesystem::path& path, const GenePanel& panel);

/**
 * @brief Tab-separated report table.
 *
 * Numbers are written with 6 decimals. The first line is a `#` comment carrying provenance (seed and config).
 */
class Table {
public:
    explicit Table(std::vector<std::string> columns);

    Table& row();
    Table& add(std::string_view text);
    Table& add(double value);
    Table& add(long long value);
    Table& add(std::size_t value) { return add(static_cast<long long>(value)); }
    Table& add(int value) { return add(static_cast<long long>(value)); }

    void write(const std::filesystem::path& path, const std::string& provenance) const;

    std::size_t n_rows() const { return my_rows.size(); }

private:
    std::vector<std::string> my_columns;
    std::vector<std::vector<std::string>> my_rows;
};

std::string format_fixed6(double value);

/**
 * @brief A parsed report table; the provenance comment is kept separately.
 */
struct ParsedTable {
    std::string provenance;
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;
};

ParsedTable read_table(const std::filesystem::path& path);

}

#endif
