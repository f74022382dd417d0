// One PASS/FAIL line per acceptance criterion; exits nonzero if any criterion fails.

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <thread>

#include "../oracles.hpp"

#include "systemmatch/autoencoder.hpp"
#include "systemmatch/distance.hpp"
#include "systemmatch/errors.hpp"
#include "systemmatch/perturb.hpp"
#include "systemmatch/ranking.hpp"
#include "systemmatch/recommender.hpp"
#include "systemmatch/synthetic.hpp"

using namespace systemmatch;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool pass;
    std::string detail;
};

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), f, v);
    return buf;
}

ConditionDataset points(const std::string& id, const Eigen::MatrixXd& v) {
    std::vector<std::string> genes, cells;
    for (Eigen::Index j = 0; j < v.cols(); ++j) genes.push_back("g" + std::to_string(j));
    for (Eigen::Index i = 0; i < v.rows(); ++i) cells.push_back(id + std::to_string(i));
    // Shifted to stay nonnegative; distances are translation invariant.
    return ConditionDataset(id, CellExpressionMatrix((v.array() + 20).matrix(), genes, cells, NormState::log_normalized));
}

StudyCollection logged(const StudyCollection& c) {
    ConditionDataset target(c.target().condition_id, log_normalize(c.target().matrix), DatasetRole::target);
    std::vector<ConditionDataset> queries;
    for (const auto& q : c.queries()) queries.emplace_back(q.condition_id, log_normalize(q.matrix));
    return StudyCollection(target, queries, c.panel());
}

Outcome emd_oracle() {
    auto t0 = Clock::now();
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<int> size(1, 6), dim(1, 3);
    double worst = 0;
    for (int trial = 0; trial < 100; ++trial) {
        int d = dim(rng);
        auto xp = oracle::random_points(rng, size(rng), d), yp = oracle::random_points(rng, size(rng), d);
        double exact = emd_distance(points("x", xp), points("y", yp)).distance;
        worst = std::max(worst, std::abs(exact - oracle::emd_by_lp(oracle::euclidean(yp, xp))));
    }
    double t = seconds_since(t0);
    return {worst <= 1e-6 && t < 30, "100 instances, max |exact - LP| " + fmt("%.2e", worst) + ", " + fmt("%.2f", t) + " s"};
}

Outcome metric_axioms() {
    auto t0 = Clock::now();
    std::mt19937_64 rng(2);
    std::uniform_int_distribution<int> size(1, 8), dim(1, 4);
    int violations = 0;
    const double eps = 1e-9;
    for (int trial = 0; trial < 200; ++trial) {
        int d = dim(rng);
        auto x = points("x", oracle::random_points(rng, size(rng), d, 1 + trial % 3));
        auto y = points("y", oracle::random_points(rng, size(rng), d));
        auto z = points("z", oracle::random_points(rng, size(rng), d, 2));
        double lxy = l2_pseudobulk_distance(x, y), lyx = l2_pseudobulk_distance(y, x);
        double exy = emd_distance(x, y).distance, eyx = emd_distance(y, x).distance;
        bool ok = lxy >= 0 && exy >= 0;
        ok = ok && std::abs(lxy - lyx) <= eps && std::abs(exy - eyx) <= eps;
        ok = ok && l2_pseudobulk_distance(x, x) == 0 && emd_distance(x, x).distance <= eps;
        ok = ok && l2_pseudobulk_distance(x, z) <= lxy + l2_pseudobulk_distance(y, z) + eps;
        ok = ok && exy >= lxy - eps;
        violations += !ok;
    }
    double t = seconds_since(t0);
    return {violations == 0 && t < 30, "200 instances, " + std::to_string(violations) + " violations, " + fmt("%.2f", t) + " s"};
}

Outcome score_examples() {
    auto s = [](std::vector<double> d) { return score_metric(d).score; };
    bool ok = s({0, 5, 10}) == 1.0 && s({4, 5, 8}) == 0.75 && std::abs(s({5, 4, 8}) - 0.3541666666666667) <= 1e-15;
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.1, 10), scale(1e-3, 1e3);
    double worst = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<double> d{u(rng), u(rng), u(rng), u(rng)};
        double c = scale(rng);
        std::vector<double> scaled;
        for (double v : d) scaled.push_back(c * v);
        worst = std::max(worst, std::abs(s(d) - s(scaled)));
    }
    return {ok && worst <= 1e-12, std::string("hand examples ") + (ok ? "exact" : "wrong") + ", max scaling drift " + fmt("%.1e", worst)};
}

Outcome planted_recovery() {
    int clean = 0, noisy = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        for (double noise : {0.0, 0.2}) {
            SyntheticSpec spec;
            spec.seed = seed;
            spec.noise = noise;
            spec.cells_per_condition = 50;
            auto study = generate_synthetic(spec);
            auto c = logged(study.collection);
            bool all = true;
            for (const auto& m : all_metrics()) {
                auto r = rank_queries(preprocess_for(c, m.preprocessing), m);
                for (std::size_t i = 0; i < r.entries.size(); ++i) all = all && r.entries[i].condition_id == study.planted_order[i];
            }
            (noise == 0 ? clean : noisy) += all;
        }
    }
    return {clean == 20 && noisy >= 19,
            "all four metrics: noise-free " + std::to_string(clean) + "/20, noise 0.1 x effect " + std::to_string(noisy) + "/20"};
}

Outcome sweep_monotone() {
    SyntheticSpec spec;
    spec.noise = 0.2;
    spec.cells_per_condition = 40;
    spec.seed = 5;
    auto study = generate_synthetic(spec);
    auto c = logged(study.collection);
    CorruptionProtocol protocol;
    protocol.seed = 11;
    auto all = all_metrics();
    std::vector<DistanceMetricSpec> metrics(all.begin(), all.end());
    EmdOptions emd;
    emd.max_cells = 40;
    auto sweep = corruption_sweep(c, study.planted_order, metrics, protocol, emd);

    int breaks = 0, under = 0, capped = 0;
    std::string per_metric;
    std::size_t min_rep = 1000000, max_rep = 0;
    const std::size_t nf = protocol.fractions.size();
    for (std::size_t m = 0; m < metrics.size(); ++m) {
        int metric_breaks = 0;
        for (std::size_t f = 0; f < nf; ++f) {
            const auto& cell = sweep.cells[m * nf + f];
            if (cell.fraction < 1) {
                min_rep = std::min(min_rep, cell.repeats);
                under += cell.repeats < 20;
            }
            max_rep = std::max(max_rep, cell.repeats);
            capped += cell.repeats > protocol.max_repeats;
            // A non-converged cell must have hit the cap.
            capped += !cell.converged && cell.repeats != protocol.max_repeats;
            if (f > 0) {
                const auto& prev = sweep.cells[m * nf + f - 1];
                metric_breaks += cell.mean_score > prev.mean_score + std::max(prev.std_error, cell.std_error);
            }
        }
        const auto& first = sweep.cells[m * nf];
        const auto& last = sweep.cells[m * nf + nf - 1];
        per_metric += " " + to_string(metrics[m]) + " " + fmt("%.3f", first.mean_score) + "->" + fmt("%.3f", last.mean_score) +
                      " (" + std::to_string(metric_breaks) + " breaks)";
        breaks += metric_breaks;
    }
    return {breaks == 0 && under == 0 && capped == 0,
            "noise 0.1 x effect, score at 1.0->0.1:" + per_metric + "; repeats " + std::to_string(min_rep) + ".." +
                std::to_string(max_rep) + " of cap 200"};
}

Outcome gradient_check() {
    auto t0 = Clock::now();
    ModelHyperparameters hyper;
    hyper.latent_dim = 3;
    hyper.hidden_width = 5;
    hyper.depth = 2;
    auto params = initialize_model({"g0", "g1", "g2", "g3"}, PerturbationVocabulary{{"A", "B"}},
                                   CovariateVocabulary{{"base", "donor"}, {{"b0", "b1"}, {"d0", "d1", "d2"}}}, hyper, 7);
    std::mt19937_64 rng(8);
    std::normal_distribution<double> normal(0, 0.3);
    for_each_tensor(params.tensors, [&](const std::string& name, double* data, std::size_t n, bool) {
        if (name.find("bias") != std::string::npos) {
            for (std::size_t i = 0; i < n; ++i) data[i] = normal(rng);
        }
    });
    Batch batch;
    batch.expression = Eigen::MatrixXd::Random(5, 4).array().abs() * 2;
    batch.perturbation = Eigen::MatrixXd::Zero(5, 2);
    batch.perturbation(1, 0) = batch.perturbation(2, 1) = batch.perturbation(3, 0) = batch.perturbation(3, 1) = 1;
    batch.covariate_levels = {{0, 1, 0, 1, 1}, {0, 1, 2, 0, 2}};

    const double lambda = 0.5, h = 1e-5;
    auto grad = params.tensors.zeros_like();
    compute_gradients(params, batch, lambda, grad);
    std::vector<std::vector<double>> analytic;
    for_each_tensor(grad, [&](const std::string&, double* data, std::size_t n, bool) { analytic.emplace_back(data, data + n); });

    double worst = 0;
    std::string worst_name;
    std::size_t t = 0, tensors = 0;
    for_each_tensor(params.tensors, [&](const std::string& name, double* data, std::size_t n, bool adversary) {
        double diff2 = 0, norm2 = 0;
        for (std::size_t i = 0; i < n; ++i) {
            double saved = data[i];
            data[i] = saved + h;
            auto up = evaluate_losses(params, batch, lambda);
            data[i] = saved - h;
            auto down = evaluate_losses(params, batch, lambda);
            data[i] = saved;
            double numeric = adversary ? (up.adversary - down.adversary) / (2 * h) : (up.objective - down.objective) / (2 * h);
            diff2 += std::pow(numeric - analytic[t][i], 2);
            norm2 += std::max(numeric * numeric, analytic[t][i] * analytic[t][i]);
        }
        double rel = std::sqrt(diff2) / std::max(std::sqrt(norm2), 1e-12);
        if (rel > worst) {
            worst = rel;
            worst_name = name;
        }
        ++t;
        ++tensors;
    });
    double secs = seconds_since(t0);
    return {worst < 1e-4 && secs < 60,
            std::to_string(tensors) + " tensors, worst relative error " + fmt("%.2e", worst) + " (" + worst_name + "), " + fmt("%.2f", secs) + " s"};
}

struct PredictionRuns {
    std::map<std::string, int> matched;
    int runs = 0;
    double min_r2 = 1;
    double seconds = 0;
};

PredictionRuns prediction_runs() {
    auto t0 = Clock::now();
    PredictionRuns out;
    for (std::uint64_t s = 0; s < 20; ++s) {
        PerturbationalSpec spec;
        spec.seed = 100 + s;
        auto data = generate_synthetic_perturbational(spec);
        TrainConfig cfg;
        cfg.seed = s;
        cfg.epochs = 120;
        auto model = train(data.training_set(), cfg).params;

        PredictOptions po;
        po.n_cells = spec.cells_per_condition;
        po.seed = 7;
        auto grid = generate_combination_grid(model, data.combination_bases(), spec.addons, {2, 3}, {}, po);
        auto held = data.held_out();
        auto v = validate_held_out(grid, held, parse_metric("l2xlog"));
        for (std::size_t i = 0; i < held.size(); ++i) out.matched[held[i].condition_id] += v.nearest[i] == held[i].condition_id;

        for (const auto& c : data.conditions) {
            if (c.held_out) continue;
            const CellExpressionMatrix* control = nullptr;
            for (const auto& other : data.conditions) {
                if (other.base == c.base && other.addons.empty()) control = &other.data.matrix;
            }
            auto p = predict_condition(model, *control, c.addons, c.cell_covariates.front(), "check", po);
            out.min_r2 = std::min(out.min_r2, r_squared(pseudobulk(c.data), pseudobulk(p)));
        }
        ++out.runs;
    }
    out.seconds = seconds_since(t0);
    return out;
}

Outcome combination_prediction(const PredictionRuns& r) {
    int worst = r.runs;
    std::string worst_id;
    for (const auto& [id, n] : r.matched) {
        if (n < worst) {
            worst = n;
            worst_id = id;
        }
    }
    bool pass = r.runs == 20 && 10 * worst >= 9 * r.runs && r.seconds < 300;
    return {pass, std::to_string(r.matched.size()) + " held-out conditions, worst matched in " + std::to_string(worst) + "/" +
                      std::to_string(r.runs) + " runs" + (worst_id.empty() ? "" : " (" + worst_id + ")") + ", " +
                      fmt("%.1f", r.seconds) + " s"};
}

Outcome reconstruction(const PredictionRuns& r) {
    return {r.min_r2 > 0.9, "min training-condition R2 over " + std::to_string(r.runs) + " runs " + fmt("%.4f", r.min_r2)};
}

Outcome kmedoids() {
    auto t0 = Clock::now();
    std::mt19937_64 rng(9);
    std::normal_distribution<double> normal;
    int local = 0, exact = 0, invariant = 0;
    for (int trial = 0; trial < 50; ++trial) {
        int n_free = 5 + trial % 8, n_fixed = trial % 4;
        std::size_t k = 1 + trial % 3;
        std::vector<CandidatePoint> pts;
        for (int i = 0; i < n_free + n_fixed; ++i) {
            Eigen::VectorXd v(3);
            v << normal(rng), normal(rng), normal(rng);
            pts.push_back({"c" + std::to_string(100 + i), v, i >= n_free});
        }
        auto p = MedoidProblem::from_points(pts);
        auto s = constrained_kmedoids(p, k, trial);
        local += swap_step(s, p).local_optimum;
        exact += std::abs(exhaustive_medoid_oracle(p, k).total_cost - s.total_cost) <= 1e-9;

        bool ok = s.chosen.size() == k && s.k == k && static_cast<int>(s.fixed.size()) == n_fixed;
        std::map<std::string, std::size_t> index;
        for (std::size_t i = 0; i < p.size(); ++i) index[p.ids[i]] = i;
        std::set<std::string> medoids(s.fixed.begin(), s.fixed.end());
        for (const auto& c : s.chosen) {
            ok = ok && index.count(c) && !p.fixed[index[c]] && medoids.insert(c).second;
        }
        double total = 0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& m : medoids) best = std::min(best, p.distances(i, index[m]));
            const auto& a = s.assignment.at(p.ids[i]);
            ok = ok && medoids.count(a) && std::abs(p.distances(i, index[a]) - best) <= 1e-12;
            total += best;
        }
        ok = ok && std::abs(total - s.total_cost) <= 1e-9;
        invariant += ok;
    }
    double t = seconds_since(t0);
    return {local == 50 && exact >= 40 && invariant == 50 && t < 60,
            "local optimum " + std::to_string(local) + "/50, zero gap " + std::to_string(exact) + "/50, invariants " +
                std::to_string(invariant) + "/50, " + fmt("%.2f", t) + " s"};
}

Outcome grid_count() {
    PerturbationalSpec spec;
    spec.n_genes = 8;
    spec.cells_per_condition = 5;
    auto data = generate_synthetic_perturbational(spec);
    TrainConfig cfg;
    cfg.epochs = 1;
    auto model = initialize_for(data.training_set(), cfg);
    PredictOptions po;
    po.n_cells = 2;
    std::set<std::string> exclude{"baseA+A+C+E", "baseA+B+D+F", "baseB+A+D+E", "baseB+B+C+F"};
    auto grid = generate_combination_grid(model, data.combination_bases(), spec.addons, {2, 3}, exclude, po);
    std::set<std::string> ids;
    for (const auto& g : grid) ids.insert(g.condition_id);
    return {grid.size() == 66 && ids.size() == 66, std::to_string(grid.size()) + " generated conditions"};
}

int shell(const std::string& cmd) {
    int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome determinism() {
    auto root = fs::temp_directory_path() / ("systemmatch_acceptance_" + std::to_string(::getpid()));
    fs::remove_all(root);
    const std::string cli = SYSTEMMATCH_CLI;
    if (shell(cli + " synth --seed 4 --out " + (root / "data").string() + " > /dev/null") != 0) {
        return {false, "synth failed"};
    }
    std::map<std::string, std::string> runs[2];
    for (int i = 0; i < 2; ++i) {
        auto out = root / "out";
        fs::remove_all(out);
        if (shell(cli + " run --config " + (root / "data" / "config.json").string() + " --out " + out.string() + " > /dev/null") != 0) {
            return {false, "run failed"};
        }
        for (const auto& e : fs::directory_iterator(out)) {
            std::string text = slurp(e.path()), kept;
            std::istringstream lines(text);
            std::string line;
            while (std::getline(lines, line)) {
                if (line.find("\"timestamp\"") == std::string::npos) kept += line + '\n';
            }
            runs[i][e.path().filename().string()] = kept;
        }
    }
    fs::remove_all(root);
    std::size_t differing = 0;
    for (const auto& [name, text] : runs[0]) differing += !runs[1].count(name) || runs[1].at(name) != text;
    differing += runs[1].size() != runs[0].size();
    return {differing == 0 && runs[0].size() > 5,
            std::to_string(runs[0].size()) + " report files, " + std::to_string(differing) + " differ (timestamp line excluded)"};
}

Outcome suite_runtime(double own_seconds) {
#ifdef SYSTEMMATCH_CTEST
    auto t0 = Clock::now();
    int rc = shell(std::string(SYSTEMMATCH_CTEST) + " --test-dir " + SYSTEMMATCH_BUILD_DIR + " -E '^acceptance$' > /dev/null 2>&1");
    double rest = seconds_since(t0);
    double total = rest + own_seconds;
    return {rc == 0 && total < 600, "unit tests " + fmt("%.0f", rest) + " s (" + (rc == 0 ? "passing" : "FAILING") + ") + acceptance " +
                                         fmt("%.0f", own_seconds) + " s = " + fmt("%.0f", total) + " s on " +
                                         std::to_string(std::thread::hardware_concurrency()) + " core(s)"};
#else
    return {false, "ctest location unknown, not measured"};
#endif
}

}

int main() {
    auto start = Clock::now();
    int failed = 0;
    auto report = [&](int id, const std::string& name, const Outcome& o) {
        std::cout << (o.pass ? "PASS" : "FAIL") << " " << id << " " << name << ": " << o.detail << std::endl;
        failed += !o.pass;
    };
    auto guarded = [](const std::function<Outcome()>& fn) {
        try {
            return fn();
        } catch (const std::exception& e) {
            return Outcome{false, std::string("threw: ") + e.what()};
        }
    };

    report(1, "emd-oracle", guarded(emd_oracle));
    report(2, "metric-axioms", guarded(metric_axioms));
    report(3, "score-examples", guarded(score_examples));
    report(4, "planted-ranking", guarded(planted_recovery));
    report(5, "corruption-sweep", guarded(sweep_monotone));
    report(6, "gradient-check", guarded(gradient_check));
    PredictionRuns runs;
    try {
        runs = prediction_runs();
    } catch (const std::exception& e) {
        std::cout << "prediction runs threw: " << e.what() << std::endl;
    }
    report(7, "combination-prediction", combination_prediction(runs));
    report(8, "reconstruction-r2", reconstruction(runs));
    report(9, "constrained-kmedoids", guarded(kmedoids));
    report(10, "combination-grid", guarded(grid_count));
    report(11, "determinism", guarded(determinism));
    report(12, "suite-runtime", guarded([&] { return suite_runtime(seconds_since(start)); }));
    std::cout << failed << " of 12 criteria failed" << std::endl;
    return failed == 0 ? 0 : 1;
}
