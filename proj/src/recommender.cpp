#include "systemmatch/recommender.hpp"
#include "systemmatch/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <unordered_map>

namespace systemmatch {

namespace {

std::vector<std::size_t> sorted_order(const std::vector<std::string>& ids) {
    std::vector<std::size_t> order(ids.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ids[a] < ids[b]; });
    for (std::size_t i = 1; i < order.size(); ++i) {
        if (ids[order[i]] == ids[order[i - 1]]) {
            throw DataError("duplicate candidate identifier '" + ids[order[i]] + "'");
        }
    }
    return order;
}

std::unordered_map<std::string, std::size_t> index_of(const MedoidProblem& problem) {
    std::unordered_map<std::string, std::size_t> out;
    for (std::size_t i = 0; i < problem.size(); ++i) {
        out.emplace(problem.ids[i], i);
    }
    return out;
}

// Fixed medoids first, then chosen ones, both in index order.
std::vector<std::size_t> medoid_list(const MedoidProblem& problem, const std::vector<std::size_t>& chosen) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < problem.size(); ++i) {
        if (problem.fixed[i]) out.push_back(i);
    }
    out.insert(out.end(), chosen.begin(), chosen.end());
    return out;
}

MedoidSelection build_selection(const MedoidProblem& problem, std::vector<std::size_t> chosen) {
    std::sort(chosen.begin(), chosen.end());
    auto medoids = medoid_list(problem, chosen);
    if (medoids.empty()) {
        throw UsageError("k-medoids needs at least one medoid (k = 0 and no fixed points)");
    }
    auto nearest = kernels::nearest_two(problem.distances, medoids);

    MedoidSelection out;
    out.k = chosen.size();
    for (auto c : chosen) out.chosen.push_back(problem.ids[c]);
    for (std::size_t i = 0; i < problem.size(); ++i) {
        if (problem.fixed[i]) out.fixed.push_back(problem.ids[i]);
    }
    for (std::size_t p = 0; p < problem.size(); ++p) {
        out.assignment[problem.ids[p]] = problem.ids[medoids[nearest.nearest[p]]];
        out.total_cost += nearest.nearest_distance[p];
    }
    return out;
}

std::vector<std::size_t> chosen_indices(const MedoidSelection& sel, const MedoidProblem& problem) {
    auto index = index_of(problem);
    std::vector<std::size_t> out;
    for (const auto& id : sel.chosen) {
        auto it = index.find(id);
        if (it == index.end()) {
            throw UsageError("selection refers to unknown candidate '" + id + "'");
        }
        if (problem.fixed[it->second]) {
            throw UsageError("fixed candidate '" + id + "' cannot be chosen");
        }
        out.push_back(it->second);
    }
    std::sort(out.begin(), out.end());
    if (std::adjacent_find(out.begin(), out.end()) != out.end()) {
        throw UsageError("selection lists a medoid twice");
    }
    return out;
}

}

std::size_t MedoidProblem::n_free() const {
    return static_cast<std::size_t>(std::count(fixed.begin(), fixed.end(), false));
}

MedoidProblem MedoidProblem::from_points(const std::vector<CandidatePoint>& points) {
    std::vector<std::string> ids;
    for (const auto& p : points) ids.push_back(p.condition_id);
    auto order = sorted_order(ids);

    MedoidProblem out;
    if (points.empty()) {
        return out;
    }
    const auto dim = points.front().vector.size();
    Matrix coords(points.size(), dim);
    for (std::size_t i = 0; i < order.size(); ++i) {
        const auto& p = points[order[i]];
        if (p.vector.size() != dim) {
            throw DataError("candidate '" + p.condition_id + "' has a different dimension");
        }
        out.ids.push_back(p.condition_id);
        out.fixed.push_back(p.fixed);
        coords.row(i) = p.vector.transpose();
    }
    out.distances = kernels::euclidean_cost(coords, coords);
    return out;
}

MedoidProblem MedoidProblem::from_datasets(const std::vector<ConditionDataset>& datasets,
                                           const std::vector<bool>& fixed,
                                           const DistanceMetricSpec& spec,
                                           const EmdOptions& options)
{
    if (datasets.size() != fixed.size()) {
        throw UsageError("one fixed flag is needed per dataset");
    }
    std::vector<std::string> ids;
    for (const auto& d : datasets) ids.push_back(d.condition_id);
    auto order = sorted_order(ids);

    std::vector<ConditionDataset> sorted;
    MedoidProblem out;
    for (auto i : order) {
        sorted.push_back(datasets[i]);
        out.ids.push_back(ids[i]);
        out.fixed.push_back(fixed[i]);
    }
    out.distances = pairwise_distance_matrix(sorted, sorted, spec, options).values;
    // Exact symmetry regardless of solver rounding.
    out.distances = (out.distances + out.distances.transpose()) / 2;
    out.distances.diagonal().setZero();
    return out;
}

MedoidSelection evaluate_selection(const MedoidProblem& problem, std::vector<std::string> chosen) {
    MedoidSelection tmp;
    tmp.chosen = std::move(chosen);
    return build_selection(problem, chosen_indices(tmp, problem));
}

MedoidSelection swap_step(const MedoidSelection& current, const MedoidProblem& problem, kernels::Execution exec) {
    auto chosen = chosen_indices(current, problem);
    auto medoids = medoid_list(problem, chosen);
    const std::size_t n_fixed = medoids.size() - chosen.size();

    std::vector<bool> is_medoid(problem.size(), false);
    for (auto m : medoids) is_medoid[m] = true;
    std::vector<std::size_t> incoming;
    for (std::size_t i = 0; i < problem.size(); ++i) {
        if (!is_medoid[i] && !problem.fixed[i]) incoming.push_back(i);
    }

    auto base = build_selection(problem, chosen);
    base.swaps = current.swaps;
    if (chosen.empty() || incoming.empty()) {
        base.local_optimum = true;
        return base;
    }

    std::vector<std::size_t> slots(chosen.size());
    std::iota(slots.begin(), slots.end(), n_fixed);
    auto nearest = kernels::nearest_two(problem.distances, medoids);
    auto costs = kernels::swap_costs(problem.distances, slots, incoming, nearest, exec);

    // Candidate swaps in lexicographic (removed id, added id) order; keep the first strict minimum.
    const double tolerance = 1e-12 * (1 + base.total_cost);
    double best = base.total_cost - tolerance;
    std::size_t best_s = 0, best_c = 0;
    bool improved = false;
    for (std::size_t s = 0; s < slots.size(); ++s) {
        for (std::size_t c = 0; c < incoming.size(); ++c) {
            if (costs(s, c) < best) {
                best = costs(s, c);
                best_s = s;
                best_c = c;
                improved = true;
            }
        }
    }
    if (!improved) {
        base.local_optimum = true;
        return base;
    }

    chosen[best_s] = incoming[best_c];
    auto out = build_selection(problem, chosen);
    out.swaps = current.swaps + 1;
    return out;
}

MedoidSelection constrained_kmedoids(const MedoidProblem& problem, std::size_t k, std::uint64_t seed, kernels::Execution exec) {
    if (k > problem.n_free()) {
        throw UsageError("k = " + std::to_string(k) + " exceeds the " + std::to_string(problem.n_free()) + " non-fixed candidates");
    }

    std::mt19937_64 rng(seed);
    std::vector<std::size_t> chosen;
    std::vector<bool> taken(problem.fixed);
    std::vector<double> gap(problem.size(), std::numeric_limits<double>::infinity());
    bool any_medoid = false;
    for (std::size_t i = 0; i < problem.size(); ++i) {
        if (problem.fixed[i]) {
            any_medoid = true;
            for (std::size_t p = 0; p < problem.size(); ++p) {
                gap[p] = std::min(gap[p], problem.distances(p, i));
            }
        }
    }

    auto pick = [&](const std::vector<std::size_t>& ties) {
        std::uniform_int_distribution<std::size_t> u(0, ties.size() - 1);
        return ties[u(rng)];
    };

    for (std::size_t step = 0; step < k; ++step) {
        std::vector<std::size_t> ties;
        double best = 0;
        for (std::size_t i = 0; i < problem.size(); ++i) {
            if (taken[i]) {
                continue;
            }
            // Without any medoid yet, start from the point with the smallest total distance.
            double score = any_medoid ? gap[i] : -problem.distances.row(i).sum();
            if (ties.empty() || score > best) {
                best = score;
                ties.assign(1, i);
            } else if (score == best) {
                ties.push_back(i);
            }
        }
        auto next = pick(ties);
        chosen.push_back(next);
        taken[next] = true;
        any_medoid = true;
        for (std::size_t p = 0; p < problem.size(); ++p) {
            gap[p] = std::min(gap[p], problem.distances(p, next));
        }
    }

    auto current = build_selection(problem, chosen);
    while (true) {
        auto next = swap_step(current, problem, exec);
        if (next.local_optimum) {
            return next;
        }
        current = std::move(next);
    }
}

MedoidSelection constrained_kmedoids(const std::vector<CandidatePoint>& candidates, std::size_t k, std::uint64_t seed, kernels::Execution exec) {
    return constrained_kmedoids(MedoidProblem::from_points(candidates), k, seed, exec);
}

MedoidSelection exhaustive_medoid_oracle(const MedoidProblem& problem, std::size_t k) {
    const auto n_free = problem.n_free();
    if (k > n_free) {
        throw UsageError("k exceeds the number of non-fixed candidates");
    }
    double subsets = 1;
    for (std::size_t i = 0; i < k; ++i) {
        subsets = subsets * static_cast<double>(n_free - i) / static_cast<double>(i + 1);
    }
    if (subsets > 10000) {
        throw UsageError("exhaustive search over " + std::to_string(static_cast<long long>(std::llround(subsets))) + " subsets exceeds the limit of 10000");
    }

    std::vector<std::size_t> free;
    for (std::size_t i = 0; i < problem.size(); ++i) {
        if (!problem.fixed[i]) free.push_back(i);
    }

    std::vector<bool> mask(n_free, false);
    std::fill(mask.begin(), mask.begin() + k, true);
    MedoidSelection best;
    bool have = false;
    do {
        std::vector<std::size_t> chosen;
        for (std::size_t i = 0; i < n_free; ++i) {
            if (mask[i]) chosen.push_back(free[i]);
        }
        auto sel = build_selection(problem, chosen);
        if (!have || sel.total_cost < best.total_cost) {
            best = std::move(sel);
            have = true;
        }
    } while (std::prev_permutation(mask.begin(), mask.end()));
    best.local_optimum = true;
    return best;
}

RankingReport rank_candidates_to_target(const std::vector<ConditionDataset>& candidates,
                                        const ConditionDataset& target,
                                        const DistanceMetricSpec& spec,
                                        const EmdOptions& options)
{
    if (candidates.empty()) {
        throw UsageError("no candidates to rank");
    }
    StudyCollection collection(target, candidates, GenePanel(target.matrix.gene_ids()));
    return rank_queries(preprocess_for(collection, spec.preprocessing), spec, options);
}

}
