#include "systemmatch/io.hpp"
#include "systemmatch/errors.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_set>

namespace systemmatch {

InputFormat parse_format(std::string_view name) {
    if (name == "dense_csv" || name == "dense") return InputFormat::dense_csv;
    if (name == "sparse_triplet" || name == "sparse") return InputFormat::sparse_triplet;
    throw UsageError("unknown input format '" + std::string(name) + "', expected dense_csv or sparse_triplet");
}

const char* to_string(InputFormat format) {
    return format == InputFormat::dense_csv ? "dense_csv" : "sparse_triplet";
}

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find(sep, start);
        out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

std::vector<std::string_view> split_whitespace(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        std::size_t j = i;
        while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
        if (j > i) out.push_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

double parse_count(std::string_view field, const std::string& path, std::size_t line) {
    double value = 0;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc() || ptr != field.data() + field.size() || !std::isfinite(value)) {
        throw ParseError(path, line, "non-numeric entry '" + std::string(field) + "'");
    }
    if (value < 0) {
        throw ParseError(path, line, "negative count '" + std::string(field) + "'");
    }
    return value;
}

long long parse_index(std::string_view field, const std::string& path, std::size_t line) {
    long long value = 0;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc() || ptr != field.data() + field.size()) {
        throw ParseError(path, line, "non-integer index '" + std::string(field) + "'");
    }
    return value;
}

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open '" + path.string() + "'");
    }
    return in;
}

IngestedMatrix ingest_dense(const std::filesystem::path& path) {
    const auto name = path.string();
    auto in = open_input(path);
    std::string line;
    std::size_t lineno = 0;

    if (!std::getline(in, line)) {
        throw ParseError(name, 1, "missing header");
    }
    ++lineno;
    auto header = split(line, ',');
    if (header.size() < 2) {
        throw ParseError(name, lineno, "header must hold a corner label and at least one gene identifier");
    }
    std::vector<std::string> genes;
    std::unordered_set<std::string> seen;
    for (std::size_t i = 1; i < header.size(); ++i) {
        if (header[i].empty()) {
            throw ParseError(name, lineno, "empty gene identifier in column " + std::to_string(i + 1));
        }
        if (!seen.emplace(header[i]).second) {
            throw ParseError(name, lineno, "duplicate gene identifier '" + std::string(header[i]) + "'");
        }
        genes.emplace_back(header[i]);
    }

    std::vector<std::string> cells;
    std::vector<double> values;
    std::unordered_set<std::string> seen_cells;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) {
            continue;
        }
        auto fields = split(line, ',');
        if (fields.size() != genes.size() + 1) {
            throw ParseError(name, lineno, "expected " + std::to_string(genes.size() + 1) + " fields, found " + std::to_string(fields.size()));
        }
        if (!seen_cells.emplace(fields[0]).second) {
            throw ParseError(name, lineno, "duplicate cell identifier '" + std::string(fields[0]) + "'");
        }
        cells.emplace_back(fields[0]);
        for (std::size_t i = 1; i < fields.size(); ++i) {
            values.push_back(parse_count(fields[i], name, lineno));
        }
    }

    Matrix m = Eigen::Map<Matrix>(values.data(), static_cast<Eigen::Index>(cells.size()), static_cast<Eigen::Index>(genes.size()));
    return IngestedMatrix{CellExpressionMatrix(std::move(m), std::move(genes), std::move(cells)), {}};
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
    auto in = open_input(path);
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        auto t = trim(line);
        if (!t.empty()) {
            out.emplace_back(t);
        }
    }
    return out;
}

IngestedMatrix ingest_sparse(const std::filesystem::path& path) {
    const auto name = path.string();
    auto in = open_input(path);
    std::string line;
    std::size_t lineno = 0;

    long long n_rows = -1, n_cols = -1, nnz = -1;
    while (std::getline(in, line)) {
        ++lineno;
        auto t = trim(line);
        if (t.empty() || t.front() == '%') {
            continue;
        }
        auto fields = split_whitespace(t);
        if (fields.size() != 3) {
            throw ParseError(name, lineno, "header must be 'rows cols nnz'");
        }
        n_rows = parse_index(fields[0], name, lineno);
        n_cols = parse_index(fields[1], name, lineno);
        nnz = parse_index(fields[2], name, lineno);
        if (n_rows <= 0 || n_cols <= 0 || nnz < 0 || nnz > n_rows * n_cols) {
            throw ParseError(name, lineno, "invalid header dimensions");
        }
        break;
    }
    if (n_rows < 0) {
        throw ParseError(name, lineno + 1, "missing header");
    }

    Matrix m = Matrix::Zero(n_rows, n_cols);
    std::vector<bool> filled(static_cast<std::size_t>(n_rows * n_cols), false);
    long long seen = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto t = trim(line);
        if (t.empty()) {
            continue;
        }
        auto fields = split_whitespace(t);
        if (fields.size() != 3) {
            throw ParseError(name, lineno, "expected 'row col value'");
        }
        auto r = parse_index(fields[0], name, lineno), c = parse_index(fields[1], name, lineno);
        if (r < 1 || r > n_rows || c < 1 || c > n_cols) {
            throw ParseError(name, lineno, "index (" + std::to_string(r) + ", " + std::to_string(c) + ") out of bounds");
        }
        auto slot = static_cast<std::size_t>((r - 1) * n_cols + (c - 1));
        if (filled[slot]) {
            throw ParseError(name, lineno, "duplicate entry for (" + std::to_string(r) + ", " + std::to_string(c) + ")");
        }
        filled[slot] = true;
        m(r - 1, c - 1) = parse_count(fields[2], name, lineno);
        ++seen;
    }
    if (seen != nnz) {
        throw ParseError(name, lineno, "header declares " + std::to_string(nnz) + " entries, found " + std::to_string(seen));
    }

    auto genes_path = std::filesystem::path(name + ".genes");
    auto cells_path = std::filesystem::path(name + ".cells");
    auto genes = read_lines(genes_path);
    if (static_cast<long long>(genes.size()) != n_cols) {
        throw ParseError(genes_path.string(), genes.size(), "expected " + std::to_string(n_cols) + " gene identifiers");
    }
    std::unordered_set<std::string> seen_genes;
    for (std::size_t g = 0; g < genes.size(); ++g) {
        if (!seen_genes.insert(genes[g]).second) {
            throw ParseError(genes_path.string(), g + 1, "duplicate gene identifier '" + genes[g] + "'");
        }
    }

    auto cell_lines = read_lines(cells_path);
    if (static_cast<long long>(cell_lines.size()) != n_rows) {
        throw ParseError(cells_path.string(), cell_lines.size(), "expected " + std::to_string(n_rows) + " cell lines");
    }
    std::vector<std::string> cells, conditions;
    for (std::size_t i = 0; i < cell_lines.size(); ++i) {
        auto fields = split_whitespace(cell_lines[i]);
        if (fields.size() != 2) {
            throw ParseError(cells_path.string(), i + 1, "expected 'cell_id condition'");
        }
        cells.emplace_back(fields[0]);
        conditions.emplace_back(fields[1]);
    }

    return IngestedMatrix{CellExpressionMatrix(std::move(m), std::move(genes), std::move(cells)), std::move(conditions)};
}

std::ofstream open_output(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw DataError("cannot open '" + path.string() + "' for writing");
    }
    return out;
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
    out.flush();
    if (!out) {
        throw DataError("failed to write '" + path.string() + "'");
    }
}

std::string format_value(double v) {
    char buffer[64];
    auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof(buffer), v);
    return std::string(buffer, ptr);
}

}

IngestedMatrix ingest(const std::filesystem::path& path, InputFormat format) {
    return format == InputFormat::dense_csv ? ingest_dense(path) : ingest_sparse(path);
}

CellExpressionMatrix extract_condition(const IngestedMatrix& ingested, const std::string& condition) {
    if (ingested.cell_conditions.empty()) {
        return ingested.matrix;
    }
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < ingested.cell_conditions.size(); ++i) {
        if (ingested.cell_conditions[i] == condition) rows.push_back(i);
    }
    if (rows.empty()) {
        throw DataError("no cells belong to condition '" + condition + "'");
    }
    return ingested.matrix.select_cells(rows);
}

void write_dense_csv(const std::filesystem::path& path, const CellExpressionMatrix& m) {
    auto out = open_output(path);
    out << "cell";
    for (const auto& g : m.gene_ids()) out << ',' << g;
    out << '\n';
    for (std::size_t c = 0; c < m.n_cells(); ++c) {
        out << m.cell_ids()[c];
        for (std::size_t g = 0; g < m.n_genes(); ++g) out << ',' << format_value(m.values()(c, g));
        out << '\n';
    }
    finish(out, path);
}

void write_sparse_triplet(const std::filesystem::path& path, const CellExpressionMatrix& m, const std::vector<std::string>& conditions) {
    if (conditions.size() != m.n_cells()) {
        throw UsageError("one condition label is needed per cell");
    }
    const auto& v = m.values();
    auto out = open_output(path);
    out << v.rows() << ' ' << v.cols() << ' ' << (v.array() != 0).count() << '\n';
    for (Eigen::Index r = 0; r < v.rows(); ++r) {
        for (Eigen::Index c = 0; c < v.cols(); ++c) {
            if (v(r, c) != 0) out << r + 1 << ' ' << c + 1 << ' ' << format_value(v(r, c)) << '\n';
        }
    }
    finish(out, path);

    auto genes_path = std::filesystem::path(path.string() + ".genes");
    auto genes = open_output(genes_path);
    for (const auto& g : m.gene_ids()) genes << g << '\n';
    finish(genes, genes_path);

    auto cells_path = std::filesystem::path(path.string() + ".cells");
    auto cells = open_output(cells_path);
    for (std::size_t i = 0; i < m.n_cells(); ++i) cells << m.cell_ids()[i] << '\t' << conditions[i] << '\n';
    finish(cells, cells_path);
}

GenePanel read_panel(const std::filesystem::path& path) {
    std::vector<std::string> genes;
    for (auto& line : read_lines(path)) {
        if (line.front() != '#') genes.push_back(std::move(line));
    }
    return GenePanel(std::move(genes));
}

void write_panel(const std::filesystem::path& path, const GenePanel& panel) {
    auto out = open_output(path);
    for (const auto& g : panel.genes()) out << g << '\n';
    finish(out, path);
}

std::string format_fixed6(double value) {
    if (std::isnan(value)) return "nan";
    char buffer[64];
    std::snprintf(buffer, sizeof(buffer), "%.6f", value);
    // Avoid "-0.000000" so that tables compare equal across tiny sign flips.
    if (std::string_view(buffer) == "-0.000000") return "0.000000";
    return buffer;
}

Table::Table(std::vector<std::string> columns) : my_columns(std::move(columns)) {}

Table& Table::row() {
    my_rows.emplace_back();
    return *this;
}

Table& Table::add(std::string_view text) {
    my_rows.back().emplace_back(text);
    return *this;
}

Table& Table::add(double value) {
    my_rows.back().push_back(format_fixed6(value));
    return *this;
}

Table& Table::add(long long value) {
    my_rows.back().push_back(std::to_string(value));
    return *this;
}

void Table::write(const std::filesystem::path& path, const std::string& provenance) const {
    auto out = open_output(path);
    out << "# " << provenance << '\n';
    for (std::size_t i = 0; i < my_columns.size(); ++i) out << (i ? "\t" : "") << my_columns[i];
    out << '\n';
    for (const auto& r : my_rows) {
        if (r.size() != my_columns.size()) {
            throw UsageError("table row has " + std::to_string(r.size()) + " fields, expected " + std::to_string(my_columns.size()));
        }
        for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "\t" : "") << r[i];
        out << '\n';
    }
    finish(out, path);
}

ParsedTable read_table(const std::filesystem::path& path) {
    auto in = open_input(path);
    ParsedTable out;
    std::string line;
    bool header = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line.front() == '#') {
            out.provenance = line.substr(std::min<std::size_t>(2, line.size()));
            continue;
        }
        std::vector<std::string> fields;
        for (auto f : split(line, '\t')) fields.emplace_back(f);
        if (!header) {
            out.columns = std::move(fields);
            header = true;
        } else {
            out.rows.push_back(std::move(fields));
        }
    }
    return out;
}

}
