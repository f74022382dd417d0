#include "systemmatch/ranking.hpp"
#include "systemmatch/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>

namespace systemmatch {

RankingReport rank_by_distance(const std::vector<std::string>& ids,
                               const std::vector<double>& distances,
                               const DistanceMetricSpec& metric)
{
    if (ids.size() != distances.size()) {
        throw UsageError("number of identifiers and distances differ");
    }
    if (ids.empty()) {
        throw UsageError("nothing to rank");
    }
    std::vector<std::size_t> order(ids.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (distances[a] != distances[b]) {
            return distances[a] < distances[b];
        }
        return ids[a] < ids[b];
    });

    RankingReport out;
    out.metric = metric;
    for (std::size_t r = 0; r < order.size(); ++r) {
        out.entries.push_back(RankingEntry{ids[order[r]], distances[order[r]], r + 1});
    }
    return out;
}

StudyCollection preprocess_for(const StudyCollection& collection, Preprocessing preprocessing) {
    auto state = collection.target().matrix.norm_state();
    for (const auto& q : collection.queries()) {
        if (q.matrix.norm_state() != state) {
            throw DataError("datasets in a collection must share a normalization state");
        }
    }

    if (preprocessing == Preprocessing::log_normalized) {
        if (state != NormState::log_normalized) {
            throw UsageError(std::string("collection must be log-normalized, got ") + to_string(state));
        }
        return collection;
    }
    if (state == NormState::zscored) {
        return collection;
    }

    std::vector<CellExpressionMatrix> inputs{collection.target().matrix};
    for (const auto& q : collection.queries()) {
        inputs.push_back(q.matrix);
    }
    auto scaled = zscore_fit_apply(inputs);

    std::vector<ConditionDataset> queries;
    for (std::size_t i = 0; i < collection.queries().size(); ++i) {
        const auto& q = collection.queries()[i];
        queries.emplace_back(q.condition_id, std::move(scaled[i + 1]), q.role);
    }
    ConditionDataset target(collection.target().condition_id, std::move(scaled[0]), collection.target().role);
    return StudyCollection(std::move(target), std::move(queries), collection.panel());
}

RankingReport rank_queries(const StudyCollection& collection,
                           const DistanceMetricSpec& spec,
                           const EmdOptions& options,
                           kernels::Execution exec)
{
    if (collection.queries().empty()) {
        throw UsageError("no query conditions to rank");
    }
    auto matrix = pairwise_distance_matrix(collection.queries(), {collection.target()}, spec, options, exec);
    std::vector<double> distances(matrix.values.rows());
    for (Eigen::Index i = 0; i < matrix.values.rows(); ++i) {
        distances[i] = matrix.values(i, 0);
    }
    return rank_by_distance(matrix.row_ids, distances, spec);
}

ScoreReport score_metric(std::span<const double> distances) {
    const auto n = distances.size();
    if (n < 2) {
        throw UsageError("scoring a ranking needs at least two distances");
    }
    if (!(distances.back() > 0)) {
        throw NumericError("expected-farthest distance must be positive to score a ranking");
    }

    ScoreReport out;
    out.distances.assign(distances.begin(), distances.end());
    out.expected_ranks.resize(n);
    std::iota(out.expected_ranks.begin(), out.expected_ranks.end(), 1);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return distances[a] < distances[b]; });
    out.ranks.resize(n);
    for (std::size_t r = 0; r < n; ++r) {
        out.ranks[order[r]] = r + 1;
    }

    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) {
        correct += (out.ranks[i] == out.expected_ranks[i]);
    }
    double agreement = static_cast<double>(correct) / static_cast<double>(n);
    double separation = (distances.back() - distances.front()) / distances.back();
    out.score = (agreement + separation) / 2;
    return out;
}

namespace {

struct RepeatOutcome {
    bool valid = false;
    double score = 0;
    std::string warning;
};

RepeatOutcome run_repeat(const StudyCollection& collection,
                         const std::vector<std::size_t>& expected_index,
                         const DistanceMetricSpec& spec,
                         double fraction,
                         std::uint64_t seed,
                         const EmdOptions& options)
{
    RepeatOutcome out;
    auto genes = sample_gene_indices(collection.panel().size(), fraction, seed);
    if (genes.size() < 2) {
        out.warning = "fraction " + std::to_string(fraction) + " keeps fewer than 2 genes, repeat skipped";
        return out;
    }

    std::vector<std::string> kept_ids;
    for (auto g : genes) {
        kept_ids.push_back(collection.panel().genes()[g]);
    }
    ConditionDataset target(collection.target().condition_id, collection.target().matrix.select_genes(genes), DatasetRole::target);
    std::vector<ConditionDataset> queries;
    for (const auto& q : collection.queries()) {
        queries.emplace_back(q.condition_id, q.matrix.select_genes(genes), q.role);
    }
    StudyCollection corrupted(std::move(target), std::move(queries), GenePanel(std::move(kept_ids)));
    auto prepared = preprocess_for(corrupted, spec.preprocessing);

    std::vector<double> ordered;
    for (auto idx : expected_index) {
        ordered.push_back(dataset_distance(prepared.queries()[idx], prepared.target(), spec, options));
    }
    try {
        out.score = score_metric(ordered).score;
        out.valid = true;
    } catch (const NumericError& e) {
        out.warning = std::string("repeat skipped: ") + e.what();
    }
    return out;
}

}

SweepResult corruption_sweep(const StudyCollection& collection,
                             const std::vector<std::string>& expected_order,
                             const std::vector<DistanceMetricSpec>& specs,
                             const CorruptionProtocol& protocol,
                             const EmdOptions& options,
                             kernels::Execution exec)
{
    const auto& fractions = protocol.fractions;
    if (fractions.empty() || std::find(fractions.begin(), fractions.end(), 1.0) == fractions.end()) {
        throw UsageError("corruption fractions must include 1");
    }
    if (!std::is_sorted(fractions.begin(), fractions.end(), std::greater<>())) {
        throw UsageError("corruption fractions must be sorted in decreasing order");
    }
    if (protocol.max_repeats == 0 || protocol.window == 0 || !(protocol.convergence_tol > 0)) {
        throw UsageError("corruption protocol needs positive max_repeats, window and convergence tolerance");
    }
    if (specs.empty()) {
        throw UsageError("no metrics to evaluate");
    }

    std::unordered_map<std::string, std::size_t> position;
    for (std::size_t i = 0; i < collection.queries().size(); ++i) {
        position.emplace(collection.queries()[i].condition_id, i);
    }
    if (expected_order.size() != position.size()) {
        throw UsageError("expected order must list every query exactly once");
    }
    std::vector<std::size_t> expected_index;
    for (const auto& id : expected_order) {
        auto it = position.find(id);
        if (it == position.end()) {
            throw UsageError("expected order names unknown condition '" + id + "'");
        }
        expected_index.push_back(it->second);
    }
    {
        auto sorted = expected_index;
        std::sort(sorted.begin(), sorted.end());
        if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
            throw UsageError("expected order lists a condition twice");
        }
    }

    EmdOptions inner = options;
    if (exec == kernels::Execution::parallel) {
        inner.execution = kernels::Execution::serial;
    }

    SweepResult out;
    const auto n_genes = collection.panel().size();
    const bool infinite_tol = std::isinf(protocol.convergence_tol);
    const std::size_t checks_from = std::max(protocol.min_repeats, protocol.window + 1);

    for (const auto& spec : specs) {
        for (std::size_t f = 0; f < fractions.size(); ++f) {
            SweepCell cell;
            cell.metric = spec;
            cell.fraction = fractions[f];
            const std::uint64_t seed_base = protocol.seed + 1000003ULL * f;
            const bool deterministic = sample_gene_indices(n_genes, fractions[f], seed_base).size() == n_genes;

            std::vector<double> running_mean;
            double sum = 0;
            std::size_t attempt = 0;
            while (attempt < protocol.max_repeats && !cell.converged) {
                // Batches are evaluated in parallel but consumed in repeat order, so the stopping point is schedule-independent.
                std::size_t batch = deterministic ? 1 : std::min(protocol.window, protocol.max_repeats - attempt);
                std::vector<RepeatOutcome> outcomes(batch);
                auto fill = [&](std::size_t b) {
                    outcomes[b] = run_repeat(collection, expected_index, spec, fractions[f], seed_base + attempt + b, inner);
                };
                kernels::fill_grid(batch, 1, [&](std::size_t b, std::size_t) { fill(b); return 0.0; }, exec);

                for (const auto& outcome : outcomes) {
                    ++attempt;
                    if (!outcome.valid) {
                        ++cell.skipped;
                        out.warnings.push_back(to_string(spec) + ": " + outcome.warning);
                        continue;
                    }
                    cell.scores.push_back(outcome.score);
                    sum += outcome.score;
                    running_mean.push_back(sum / static_cast<double>(cell.scores.size()));

                    const auto c = cell.scores.size();
                    if (deterministic || infinite_tol) {
                        cell.converged = true;
                    } else if (c >= checks_from &&
                               std::abs(running_mean[c - 1] - running_mean[c - 1 - protocol.window]) < protocol.convergence_tol) {
                        cell.converged = true;
                    }
                    if (cell.converged) {
                        break;
                    }
                }
            }

            cell.repeats = cell.scores.size();
            if (cell.repeats) {
                cell.mean_score = sum / static_cast<double>(cell.repeats);
                if (cell.repeats > 1) {
                    double ss = 0;
                    for (double s : cell.scores) {
                        ss += (s - cell.mean_score) * (s - cell.mean_score);
                    }
                    double sd = std::sqrt(ss / static_cast<double>(cell.repeats - 1));
                    cell.std_error = sd / std::sqrt(static_cast<double>(cell.repeats));
                }
            } else {
                cell.mean_score = std::numeric_limits<double>::quiet_NaN();
                out.warnings.push_back(to_string(spec) + ": no valid repeats at fraction " + std::to_string(fractions[f]));
            }
            out.cells.push_back(std::move(cell));
        }
    }
    return out;
}

std::vector<MetricArea> compare_metrics(const SweepResult& sweep) {
    std::vector<DistanceMetricSpec> metrics;
    std::vector<std::vector<std::pair<double, double>>> curves;
    for (const auto& cell : sweep.cells) {
        auto it = std::find(metrics.begin(), metrics.end(), cell.metric);
        std::size_t idx = it - metrics.begin();
        if (it == metrics.end()) {
            metrics.push_back(cell.metric);
            curves.emplace_back();
        }
        curves[idx].emplace_back(cell.fraction, cell.mean_score);
    }
    if (metrics.empty()) {
        throw UsageError("empty sweep");
    }

    std::vector<double> grid;
    for (const auto& c : curves.front()) grid.push_back(c.first);
    std::sort(grid.begin(), grid.end());

    std::vector<MetricArea> out;
    for (std::size_t m = 0; m < metrics.size(); ++m) {
        auto curve = curves[m];
        std::sort(curve.begin(), curve.end());
        if (curve.size() != grid.size() ||
            !std::equal(grid.begin(), grid.end(), curve.begin(), [](double g, const auto& p) { return g == p.first; })) {
            throw UsageError("metrics were evaluated on different fraction grids");
        }
        double area = 0;
        if (curve.size() == 1) {
            area = curve.front().second;
        } else {
            for (std::size_t i = 1; i < curve.size(); ++i) {
                area += (curve[i].first - curve[i - 1].first) * (curve[i].second + curve[i - 1].second) / 2;
            }
        }
        out.push_back(MetricArea{metrics[m], area});
    }

    // Areas that differ only by rounding are ties.
    std::stable_sort(out.begin(), out.end(), [](const MetricArea& a, const MetricArea& b) {
        return std::llround(a.area * 1e12) > std::llround(b.area * 1e12);
    });
    return out;
}

}
