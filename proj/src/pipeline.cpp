#include "systemmatch/pipeline.hpp"
#include "systemmatch/errors.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

namespace systemmatch {

using nlohmann::json;

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) {
        throw UsageError(where + " must be an object");
    }
    for (const auto& item : j.items()) {
        if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) { return item.key() == a; }) == allowed.end()) {
            throw UsageError("unknown key '" + item.key() + "' in " + where);
        }
    }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback, const std::string& where) {
    if (!j.contains(key)) {
        return fallback;
    }
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw UsageError("key '" + std::string(key) + "' in " + where + " has the wrong type");
    }
}

NormState parse_input_state(const std::string& name) {
    if (name == "raw_counts") return NormState::raw_counts;
    if (name == "log_normalized") return NormState::log_normalized;
    throw UsageError("input_state must be raw_counts or log_normalized, got '" + name + "'");
}

std::filesystem::path resolve(const std::string& p, const std::filesystem::path& base_dir) {
    std::filesystem::path path(p);
    if (path.is_relative()) {
        path = base_dir / path;
    }
    return path.lexically_normal();
}

void require_file(const std::filesystem::path& path, const std::string& what) {
    if (!std::filesystem::is_regular_file(path)) {
        throw UsageError(what + " '" + path.string() + "' does not exist");
    }
}

DatasetSource parse_source(const json& j, const std::filesystem::path& base_dir, const std::string& where) {
    check_keys(j, {"id", "path", "format", "condition", "input_state"}, where);
    DatasetSource s;
    s.id = get_or<std::string>(j, "id", "", where);
    if (s.id.empty()) {
        throw UsageError(where + " needs an id");
    }
    auto path = get_or<std::string>(j, "path", "", where);
    if (path.empty()) {
        throw UsageError(where + " needs a path");
    }
    s.path = resolve(path, base_dir);
    s.format = parse_format(get_or<std::string>(j, "format", "dense_csv", where));
    s.condition = get_or<std::string>(j, "condition", s.id, where);
    s.input_state = parse_input_state(get_or<std::string>(j, "input_state", "raw_counts", where));
    require_file(s.path, where + " path");
    if (s.format == InputFormat::sparse_triplet) {
        require_file(s.path.string() + ".genes", where + " gene sidecar");
        require_file(s.path.string() + ".cells", where + " cell sidecar");
    }
    return s;
}

json source_json(const DatasetSource& s) {
    return json{{"id", s.id}, {"path", s.path.string()}, {"format", to_string(s.format)},
                {"condition", s.condition}, {"input_state", to_string(s.input_state)}};
}

std::vector<DistanceMetricSpec> parse_metrics(const json& j, const std::string& where) {
    if (!j.is_array()) {
        throw UsageError(where + " must be a list of metric names");
    }
    std::vector<DistanceMetricSpec> out;
    for (const auto& m : j) {
        out.push_back(parse_metric(m.get<std::string>()));
    }
    return out;
}

template <typename Fn>
auto in_stage(const char* stage, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const UsageError& e) {
        throw UsageError(std::string(stage) + " stage: " + e.what());
    } catch (const NumericError& e) {
        throw NumericError(std::string(stage) + " stage: " + e.what());
    } catch (const Error& e) {
        throw DataError(std::string(stage) + " stage: " + e.what());
    }
}

CellExpressionMatrix relabel(const CellExpressionMatrix& m, NormState state) {
    return CellExpressionMatrix(m.values(), m.gene_ids(), m.cell_ids(), state);
}

/**
 * Pools z-scoring over every dataset when the metric asks for it.
 */
std::vector<ConditionDataset> prepare_for_metric(const std::vector<ConditionDataset>& datasets, const DistanceMetricSpec& spec) {
    if (spec.preprocessing == Preprocessing::log_normalized) {
        return datasets;
    }
    std::vector<CellExpressionMatrix> inputs;
    for (const auto& d : datasets) inputs.push_back(d.matrix);
    auto scaled = zscore_fit_apply(inputs);
    std::vector<ConditionDataset> out;
    for (std::size_t i = 0; i < datasets.size(); ++i) {
        out.emplace_back(datasets[i].condition_id, std::move(scaled[i]), datasets[i].role);
    }
    return out;
}

class DatasetLoader {
public:
    DatasetLoader(const PipelineConfig& cfg, PipelineReport& report) : my_cfg(cfg), my_report(report) {}

    const IngestedMatrix& ingested(const DatasetSource& s) {
        auto key = s.path.string() + "|" + to_string(s.format);
        auto it = my_cache.find(key);
        if (it == my_cache.end()) {
            it = my_cache.emplace(key, ingest(s.path, s.format)).first;
        }
        return it->second;
    }

    /** QC and log-normalization, before panel projection. */
    CellExpressionMatrix normalized(const DatasetSource& s) {
        auto m = extract_condition(ingested(s), s.condition);
        if (s.input_state == NormState::log_normalized) {
            m = relabel(m, NormState::log_normalized);
            my_report.qc_retained.emplace_back(s.id, m.n_cells());
            return m;
        }
        auto kept = filter_low_quality_cells(m, my_cfg.qc_min_nonzero_genes);
        my_report.qc_retained.emplace_back(s.id, kept.n_cells());
        return log_normalize(kept, my_cfg.normalization_scale);
    }

    ConditionDataset load(const DatasetSource& s, const GenePanel& panel, DatasetRole role) {
        auto projected = project_to_panel(normalized(s), panel);
        for (const auto& g : projected.missing_genes) {
            my_report.warnings.push_back("condition '" + s.id + "' lacks panel gene '" + g + "', filled with zeros");
            if (std::find(my_report.missing_panel_genes.begin(), my_report.missing_panel_genes.end(), g) == my_report.missing_panel_genes.end()) {
                my_report.missing_panel_genes.push_back(g);
            }
        }
        return ConditionDataset(s.id, std::move(projected.matrix), role);
    }

private:
    const PipelineConfig& my_cfg;
    PipelineReport& my_report;
    std::map<std::string, IngestedMatrix> my_cache;
};

std::vector<GeneContribution> gene_contributions(const StudyCollection& collection, std::size_t top) {
    std::vector<GeneContribution> out;
    auto target = pseudobulk(collection.target());
    const auto& genes = collection.panel().genes();
    for (const auto& q : collection.queries()) {
        Vector diff = pseudobulk(q) - target;
        std::vector<std::size_t> order(genes.size());
        for (std::size_t g = 0; g < order.size(); ++g) order[g] = g;
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return std::abs(diff[a]) > std::abs(diff[b]);
        });
        for (std::size_t i = 0; i < std::min(top, order.size()); ++i) {
            out.push_back(GeneContribution{q.condition_id, genes[order[i]], diff[order[i]]});
        }
    }
    return out;
}

}

void apply_seed(PipelineConfig& cfg, std::uint64_t seed) {
    cfg.seed = seed;
    cfg.evaluation.protocol.seed = seed;
    cfg.perturbation.training.seed = seed;
}

PipelineConfig config_from_json(const std::string& text, const std::filesystem::path& base_dir) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw UsageError(std::string("config is not valid JSON: ") + e.what());
    }
    check_keys(j, {"schema_version", "seed", "panel", "target", "queries", "qc_min_nonzero_genes", "normalization_scale",
                   "metric", "emd_max_cells", "top_genes", "evaluation", "perturbation", "recommender", "output_dir"},
               "config");

    PipelineConfig cfg;
    cfg.schema_version = get_or<int>(j, "schema_version", 0, "config");
    if (cfg.schema_version != config_schema_version) {
        throw UsageError("unsupported config schema_version " + std::to_string(cfg.schema_version) + ", expected " +
                         std::to_string(config_schema_version));
    }
    auto seed = get_or<std::uint64_t>(j, "seed", 0, "config");

    if (j.contains("panel") && !j["panel"].is_null()) {
        cfg.panel = resolve(j["panel"].get<std::string>(), base_dir);
        require_file(*cfg.panel, "panel");
    }
    if (!j.contains("target")) {
        throw UsageError("config needs a target");
    }
    cfg.target = parse_source(j["target"], base_dir, "target");
    if (j.contains("queries")) {
        if (!j["queries"].is_array()) {
            throw UsageError("queries must be a list");
        }
        for (std::size_t i = 0; i < j["queries"].size(); ++i) {
            cfg.queries.push_back(parse_source(j["queries"][i], base_dir, "queries[" + std::to_string(i) + "]"));
        }
    }

    cfg.qc_min_nonzero_genes = get_or<std::size_t>(j, "qc_min_nonzero_genes", cfg.qc_min_nonzero_genes, "config");
    if (cfg.qc_min_nonzero_genes == 0) {
        throw UsageError("qc_min_nonzero_genes must be positive");
    }
    cfg.normalization_scale = get_or<double>(j, "normalization_scale", cfg.normalization_scale, "config");
    if (!(cfg.normalization_scale > 0)) {
        throw UsageError("normalization_scale must be positive");
    }
    cfg.metric = parse_metric(get_or<std::string>(j, "metric", to_string(cfg.metric), "config"));
    cfg.emd_max_cells = get_or<std::size_t>(j, "emd_max_cells", cfg.emd_max_cells, "config");
    if (cfg.emd_max_cells == 0) {
        throw UsageError("emd_max_cells must be positive");
    }
    cfg.top_genes = get_or<std::size_t>(j, "top_genes", cfg.top_genes, "config");
    cfg.output_dir = resolve(get_or<std::string>(j, "output_dir", cfg.output_dir.string(), "config"), base_dir);

    if (j.contains("evaluation")) {
        const auto& e = j["evaluation"];
        const std::string where = "evaluation";
        check_keys(e, {"enabled", "expected_order", "metrics", "fractions", "max_repeats", "min_repeats", "window", "convergence_tol"}, where);
        auto& ev = cfg.evaluation;
        ev.enabled = get_or<bool>(e, "enabled", false, where);
        ev.expected_order = get_or<std::vector<std::string>>(e, "expected_order", {}, where);
        if (e.contains("metrics")) {
            ev.metrics = parse_metrics(e["metrics"], "evaluation.metrics");
        }
        auto& p = ev.protocol;
        p.fractions = get_or<std::vector<double>>(e, "fractions", p.fractions, where);
        for (double f : p.fractions) {
            if (!(f > 0 && f <= 1)) {
                throw UsageError("evaluation fractions must lie in (0, 1]");
            }
        }
        if (std::find(p.fractions.begin(), p.fractions.end(), 1.0) == p.fractions.end() ||
            !std::is_sorted(p.fractions.begin(), p.fractions.end(), std::greater<>())) {
            throw UsageError("evaluation fractions must include 1 and be sorted in decreasing order");
        }
        p.max_repeats = get_or<std::size_t>(e, "max_repeats", p.max_repeats, where);
        p.min_repeats = get_or<std::size_t>(e, "min_repeats", p.min_repeats, where);
        p.window = get_or<std::size_t>(e, "window", p.window, where);
        if (e.contains("convergence_tol") && e["convergence_tol"].is_string() && e["convergence_tol"] == "inf") {
            p.convergence_tol = std::numeric_limits<double>::infinity();
        } else {
            p.convergence_tol = get_or<double>(e, "convergence_tol", p.convergence_tol, where);
        }
    }
    if (cfg.evaluation.metrics.empty()) {
        auto all = all_metrics();
        cfg.evaluation.metrics.assign(all.begin(), all.end());
    }

    if (j.contains("perturbation")) {
        const auto& pj = j["perturbation"];
        const std::string where = "perturbation";
        check_keys(pj, {"enabled", "conditions", "addons", "orders", "exclude", "cells_per_prediction", "validation_metric", "training"}, where);
        auto& pc = cfg.perturbation;
        pc.enabled = get_or<bool>(pj, "enabled", false, where);
        if (pj.contains("conditions")) {
            for (std::size_t i = 0; i < pj["conditions"].size(); ++i) {
                const auto& cj = pj["conditions"][i];
                auto cw = "perturbation.conditions[" + std::to_string(i) + "]";
                check_keys(cj, {"id", "path", "format", "condition", "input_state", "perturbations", "covariates", "held_out"}, cw);
                json source = json::object();
                for (const char* k : {"id", "path", "format", "condition", "input_state"}) {
                    if (cj.contains(k)) source[k] = cj[k];
                }
                PerturbationCondition c;
                c.source = parse_source(source, base_dir, cw);
                auto perts = get_or<std::vector<std::string>>(cj, "perturbations", {}, cw);
                c.perturbations = PerturbationSet(perts.begin(), perts.end());
                c.covariates = get_or<std::map<std::string, std::string>>(cj, "covariates", {}, cw);
                c.held_out = get_or<bool>(cj, "held_out", false, cw);
                pc.conditions.push_back(std::move(c));
            }
        }
        pc.addons = get_or<std::vector<std::string>>(pj, "addons", {}, where);
        pc.orders = get_or<std::set<int>>(pj, "orders", pc.orders, where);
        pc.exclude = get_or<std::set<std::string>>(pj, "exclude", {}, where);
        pc.cells_per_prediction = get_or<std::size_t>(pj, "cells_per_prediction", pc.cells_per_prediction, where);
        pc.validation_metric = parse_metric(get_or<std::string>(pj, "validation_metric", to_string(pc.validation_metric), where));
        if (pj.contains("training")) {
            const auto& t = pj["training"];
            const std::string tw = "perturbation.training";
            check_keys(t, {"epochs", "batch_size", "lr_autoencoder", "lr_adversary", "adversary_weight", "adversary_steps",
                           "latent_dim", "hidden_width", "depth"}, tw);
            auto& tc = pc.training;
            tc.epochs = get_or<std::size_t>(t, "epochs", tc.epochs, tw);
            tc.batch_size = get_or<std::size_t>(t, "batch_size", tc.batch_size, tw);
            tc.lr_autoencoder = get_or<double>(t, "lr_autoencoder", tc.lr_autoencoder, tw);
            tc.lr_adversary = get_or<double>(t, "lr_adversary", tc.lr_adversary, tw);
            tc.adversary_weight = get_or<double>(t, "adversary_weight", tc.adversary_weight, tw);
            tc.adversary_steps = get_or<std::size_t>(t, "adversary_steps", tc.adversary_steps, tw);
            tc.hyper.latent_dim = get_or<std::size_t>(t, "latent_dim", tc.hyper.latent_dim, tw);
            tc.hyper.hidden_width = get_or<std::size_t>(t, "hidden_width", tc.hyper.hidden_width, tw);
            tc.hyper.depth = get_or<std::size_t>(t, "depth", tc.hyper.depth, tw);
        }
    }

    if (j.contains("recommender")) {
        const auto& r = j["recommender"];
        check_keys(r, {"enabled", "k", "metric"}, "recommender");
        cfg.recommender.enabled = get_or<bool>(r, "enabled", false, "recommender");
        cfg.recommender.k = get_or<std::size_t>(r, "k", cfg.recommender.k, "recommender");
        cfg.recommender.metric = parse_metric(get_or<std::string>(r, "metric", to_string(cfg.recommender.metric), "recommender"));
    }

    apply_seed(cfg, seed);
    return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw UsageError("cannot open config '" + path.string() + "'");
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    auto base = std::filesystem::absolute(path).parent_path();
    return config_from_json(buffer.str(), base);
}

namespace {

json config_object(const PipelineConfig& cfg) {
    json j;
    j["schema_version"] = cfg.schema_version;
    j["seed"] = cfg.seed;
    j["panel"] = cfg.panel ? json(cfg.panel->string()) : json(nullptr);
    j["target"] = source_json(cfg.target);
    j["queries"] = json::array();
    for (const auto& q : cfg.queries) j["queries"].push_back(source_json(q));
    j["qc_min_nonzero_genes"] = cfg.qc_min_nonzero_genes;
    j["normalization_scale"] = cfg.normalization_scale;
    j["metric"] = to_string(cfg.metric);
    j["emd_max_cells"] = cfg.emd_max_cells;
    j["top_genes"] = cfg.top_genes;

    const auto& ev = cfg.evaluation;
    json metrics = json::array();
    for (const auto& m : ev.metrics) metrics.push_back(to_string(m));
    j["evaluation"] = {
        {"enabled", ev.enabled}, {"expected_order", ev.expected_order}, {"metrics", metrics},
        {"fractions", ev.protocol.fractions}, {"max_repeats", ev.protocol.max_repeats},
        {"min_repeats", ev.protocol.min_repeats}, {"window", ev.protocol.window},
        {"convergence_tol", std::isinf(ev.protocol.convergence_tol) ? json("inf") : json(ev.protocol.convergence_tol)}
    };

    const auto& pc = cfg.perturbation;
    json conditions = json::array();
    for (const auto& c : pc.conditions) {
        auto cj = source_json(c.source);
        cj["perturbations"] = std::vector<std::string>(c.perturbations.begin(), c.perturbations.end());
        cj["covariates"] = c.covariates;
        cj["held_out"] = c.held_out;
        conditions.push_back(std::move(cj));
    }
    const auto& tc = pc.training;
    j["perturbation"] = {
        {"enabled", pc.enabled}, {"conditions", conditions}, {"addons", pc.addons}, {"orders", pc.orders},
        {"exclude", pc.exclude}, {"cells_per_prediction", pc.cells_per_prediction},
        {"validation_metric", to_string(pc.validation_metric)},
        {"training", {{"epochs", tc.epochs}, {"batch_size", tc.batch_size}, {"lr_autoencoder", tc.lr_autoencoder},
                      {"lr_adversary", tc.lr_adversary}, {"adversary_weight", tc.adversary_weight},
                      {"adversary_steps", tc.adversary_steps}, {"latent_dim", tc.hyper.latent_dim},
                      {"hidden_width", tc.hyper.hidden_width}, {"depth", tc.hyper.depth}}}
    };
    j["recommender"] = {{"enabled", cfg.recommender.enabled}, {"k", cfg.recommender.k}, {"metric", to_string(cfg.recommender.metric)}};
    j["output_dir"] = cfg.output_dir.string();
    return j;
}

}

std::string config_to_json(const PipelineConfig& cfg, int indent) {
    return config_object(cfg).dump(indent);
}

PipelineReport run_pipeline(const PipelineConfig& cfg, const RunOptions& options) {
    PipelineReport report;
    DatasetLoader loader(cfg, report);
    EmdOptions emd;
    emd.max_cells = cfg.emd_max_cells;
    emd.seed = cfg.seed;
    emd.execution = options.execution;

    auto panel = in_stage("ingest", [&] {
        return cfg.panel ? read_panel(*cfg.panel) : GenePanel(loader.ingested(cfg.target).matrix.gene_ids());
    });

    auto target = in_stage("normalize", [&] { return loader.load(cfg.target, panel, DatasetRole::target); });
    std::vector<ConditionDataset> queries;
    in_stage("normalize", [&] {
        for (const auto& q : cfg.queries) queries.push_back(loader.load(q, panel, DatasetRole::query));
    });

    const auto& st = options.stages;
    bool need_collection = (st.rank || (st.evaluate && cfg.evaluation.enabled)) && !queries.empty();
    std::optional<StudyCollection> collection;
    if (need_collection) {
        collection.emplace(in_stage("project", [&] { return StudyCollection(target, queries, panel); }));
    }

    if (st.rank) {
        if (!collection) {
            throw UsageError("rank stage: config lists no queries");
        }
        in_stage("rank", [&] {
            auto prepared = preprocess_for(*collection, cfg.metric.preprocessing);
            report.ranking = rank_queries(prepared, cfg.metric, emd, options.execution);
            report.contributions = gene_contributions(*collection, cfg.top_genes);
        });
    }

    if (st.evaluate && cfg.evaluation.enabled) {
        in_stage("evaluate", [&] {
            if (!collection) {
                throw UsageError("config lists no queries");
            }
            auto order = cfg.evaluation.expected_order;
            if (order.empty()) {
                throw UsageError("expected_order is required for metric evaluation");
            }
            report.sweep = corruption_sweep(*collection, order, cfg.evaluation.metrics, cfg.evaluation.protocol, emd, options.execution);
            report.metric_areas = compare_metrics(*report.sweep);
            for (const auto& w : report.sweep->warnings) report.warnings.push_back(w);
        });
    }

    const auto& pc = cfg.perturbation;
    bool perturb = pc.enabled && (st.train || st.predict || (st.recommend && cfg.recommender.enabled));
    std::vector<ConditionDataset> tested, held_out;
    if (perturb) {
        TrainingSet training(panel.genes());
        std::vector<CombinationBase> bases;
        in_stage("normalize", [&] {
            for (const auto& c : pc.conditions) {
                auto d = loader.load(c.source, panel, c.held_out ? DatasetRole::held_out : DatasetRole::query);
                if (c.held_out) {
                    held_out.push_back(std::move(d));
                    continue;
                }
                training.add_condition(d.matrix, c.perturbations, c.covariates);
                if (c.perturbations.empty()) {
                    bases.push_back(CombinationBase{d.condition_id, d.matrix, c.covariates});
                }
                tested.push_back(std::move(d));
            }
        });

        if (options.checkpoint) {
            report.model = in_stage("train", [&] {
                auto loaded = load_checkpoint(*options.checkpoint);
                if (loaded.params.gene_ids != panel.genes()) {
                    throw DataError("checkpoint genes do not match the panel");
                }
                return loaded.params;
            });
        } else if (st.train || st.predict || st.recommend) {
            in_stage("train", [&] {
                auto result = train(training, pc.training);
                report.model = std::move(result.params);
                report.reconstruction_history = std::move(result.reconstruction_history);
                report.adversary_history = std::move(result.adversary_history);
            });
        }

        if ((st.predict || (st.recommend && cfg.recommender.enabled)) && report.model) {
            in_stage("predict", [&] {
                if (bases.empty()) {
                    throw UsageError("no control condition (empty perturbation set) to predict from");
                }
                PredictOptions po;
                po.n_cells = pc.cells_per_prediction;
                po.seed = cfg.seed;
                for (const auto& b : bases) {
                    if (b.control_cells.n_cells() < po.n_cells) {
                        po.with_replacement = true;
                        report.warnings.push_back("control '" + b.id + "' has fewer cells than cells_per_prediction; sampling with replacement");
                    }
                }
                report.predictions = generate_combination_grid(*report.model, bases, pc.addons, pc.orders, pc.exclude, po);
            });
            if (!held_out.empty() && !report.predictions.empty()) {
                report.validation = in_stage("validate", [&] {
                    auto pooled = report.predictions;
                    pooled.insert(pooled.end(), held_out.begin(), held_out.end());
                    pooled = prepare_for_metric(pooled, pc.validation_metric);
                    std::vector<ConditionDataset> pred(pooled.begin(), pooled.begin() + static_cast<std::ptrdiff_t>(report.predictions.size()));
                    std::vector<ConditionDataset> held(pooled.begin() + static_cast<std::ptrdiff_t>(report.predictions.size()), pooled.end());
                    return validate_held_out(pred, held, pc.validation_metric, emd);
                });
            }
        }
    }

    if (st.recommend && cfg.recommender.enabled) {
        in_stage("recommend", [&] {
            std::vector<ConditionDataset> candidates;
            std::vector<bool> fixed;
            if (perturb) {
                for (const auto& d : tested) {
                    candidates.push_back(d);
                    fixed.push_back(true);
                }
                for (const auto& d : report.predictions) {
                    candidates.push_back(d);
                    fixed.push_back(false);
                }
            } else {
                for (const auto& d : queries) {
                    candidates.push_back(d);
                    fixed.push_back(false);
                }
            }
            if (candidates.empty()) {
                throw UsageError("no candidates to recommend from");
            }
            auto prepared = prepare_for_metric(candidates, cfg.recommender.metric);
            auto problem = MedoidProblem::from_datasets(prepared, fixed, cfg.recommender.metric, emd);
            report.selection = constrained_kmedoids(problem, cfg.recommender.k, cfg.seed, options.execution);
            if (!report.predictions.empty()) {
                report.candidate_ranking = rank_candidates_to_target(report.predictions, target, cfg.metric, emd);
            }
        });
    }

    return report;
}

std::string ranking_svg(const RankingReport& ranking) {
    const double bar_height = 18, gap = 6, left = 180, width = 360, top = 30;
    double max_distance = 0;
    for (const auto& e : ranking.entries) max_distance = std::max(max_distance, e.distance);
    double height = top + static_cast<double>(ranking.entries.size()) * (bar_height + gap) + 10;

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << left + width + 110 << "\" height=\"" << height
        << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    svg << "<text x=\"10\" y=\"18\">distance to target (" << to_string(ranking.metric) << ")</text>\n";
    for (std::size_t i = 0; i < ranking.entries.size(); ++i) {
        const auto& e = ranking.entries[i];
        double y = top + static_cast<double>(i) * (bar_height + gap);
        double w = max_distance > 0 ? width * e.distance / max_distance : 0;
        svg << "<text x=\"10\" y=\"" << format_fixed6(y + 13) << "\">" << e.rank << ". " << e.condition_id << "</text>\n";
        svg << "<rect x=\"" << left << "\" y=\"" << format_fixed6(y) << "\" width=\"" << format_fixed6(w) << "\" height=\""
            << bar_height << "\" fill=\"#4a7ab5\"/>\n";
        svg << "<text x=\"" << format_fixed6(left + w + 6) << "\" y=\"" << format_fixed6(y + 13) << "\">" << format_fixed6(e.distance) << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

void emit_reports(const PipelineReport& report, const PipelineConfig& cfg, const std::filesystem::path& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) {
        throw DataError("cannot create output directory '" + out_dir.string() + "': " + ec.message());
    }

    const auto provenance = std::string("systemmatch ") + systemmatch_version + " seed=" + std::to_string(cfg.seed) +
                            " config=" + config_to_json(cfg);
    std::vector<std::string> files;
    auto write = [&](const Table& t, const std::string& name) {
        t.write(out_dir / name, provenance);
        files.push_back(name);
    };

    Table qc({"condition_id", "cells_retained"});
    for (const auto& [id, n] : report.qc_retained) qc.row().add(id).add(n);
    write(qc, "qc.tsv");

    json results = json::object();
    if (report.ranking) {
        Table t({"rank", "condition_id", "distance"});
        for (const auto& e : report.ranking->entries) t.row().add(e.rank).add(e.condition_id).add(e.distance);
        write(t, "ranking.tsv");

        Table c({"condition_id", "gene", "difference"});
        for (const auto& g : report.contributions) c.row().add(g.condition_id).add(g.gene).add(g.difference);
        write(c, "gene_contributions.tsv");

        std::ofstream svg(out_dir / "ranking.svg");
        svg << ranking_svg(*report.ranking);
        if (!svg) {
            throw DataError("failed to write '" + (out_dir / "ranking.svg").string() + "'");
        }
        files.push_back("ranking.svg");

        std::vector<std::string> order;
        for (const auto& e : report.ranking->entries) order.push_back(e.condition_id);
        results["ranking"] = {{"metric", to_string(report.ranking->metric)}, {"order", order}};
    }

    if (report.sweep) {
        Table t({"metric", "fraction", "mean_score", "std_error", "repeats", "skipped", "converged"});
        for (const auto& c : report.sweep->cells) {
            t.row().add(to_string(c.metric)).add(c.fraction).add(c.mean_score).add(c.std_error).add(c.repeats).add(c.skipped)
                .add(c.converged ? "yes" : "no");
        }
        write(t, "corruption_sweep.tsv");

        Table a({"rank", "metric", "area"});
        for (std::size_t i = 0; i < report.metric_areas.size(); ++i) {
            a.row().add(i + 1).add(to_string(report.metric_areas[i].metric)).add(report.metric_areas[i].area);
        }
        write(a, "metric_comparison.tsv");
        if (!report.metric_areas.empty()) {
            results["best_metric"] = to_string(report.metric_areas.front().metric);
        }
    }

    if (!report.reconstruction_history.empty()) {
        Table t({"epoch", "reconstruction_loss", "adversary_loss"});
        for (std::size_t e = 0; e < report.reconstruction_history.size(); ++e) {
            t.row().add(e + 1).add(report.reconstruction_history[e]).add(report.adversary_history.at(e));
        }
        write(t, "training_loss.tsv");
        save_checkpoint(out_dir / "model.json", *report.model, cfg.perturbation.training);
        files.push_back("model.json");
    }

    if (!report.predictions.empty()) {
        std::vector<std::string> columns{"condition_id"};
        const auto& genes = report.predictions.front().matrix.gene_ids();
        columns.insert(columns.end(), genes.begin(), genes.end());
        Table t(columns);
        for (const auto& p : report.predictions) {
            t.row().add(p.condition_id);
            auto pb = pseudobulk(p);
            for (Eigen::Index g = 0; g < pb.size(); ++g) t.add(pb[g]);
        }
        write(t, "predicted_pseudobulk.tsv");
        results["predicted_conditions"] = report.predictions.size();
    }

    if (report.validation) {
        auto matrix_table = [](const DistanceMatrix& m) {
            std::vector<std::string> columns{"held_out"};
            columns.insert(columns.end(), m.col_ids.begin(), m.col_ids.end());
            Table t(columns);
            for (Eigen::Index r = 0; r < m.values.rows(); ++r) {
                t.row().add(m.row_ids[r]);
                for (Eigen::Index c = 0; c < m.values.cols(); ++c) t.add(m.values(r, c));
            }
            return t;
        };
        write(matrix_table(report.validation->raw), "heldout_distances.tsv");
        write(matrix_table(report.validation->normalized), "heldout_distances_normalized.tsv");

        Table n({"held_out", "nearest_prediction", "matches"});
        std::size_t hits = 0;
        for (std::size_t i = 0; i < report.validation->nearest.size(); ++i) {
            const auto& id = report.validation->raw.row_ids[i];
            bool match = report.validation->nearest[i] == id;
            hits += match;
            n.row().add(id).add(report.validation->nearest[i]).add(match ? "yes" : "no");
        }
        write(n, "heldout_nearest.tsv");
        results["heldout_matches"] = {{"matched", hits}, {"total", report.validation->nearest.size()}};
    }

    if (report.selection) {
        const auto& s = *report.selection;
        Table t({"condition_id", "role", "assigned_medoid"});
        for (const auto& [id, medoid] : s.assignment) {
            bool is_fixed = std::find(s.fixed.begin(), s.fixed.end(), id) != s.fixed.end();
            bool is_chosen = std::find(s.chosen.begin(), s.chosen.end(), id) != s.chosen.end();
            t.row().add(id).add(is_fixed ? "fixed" : (is_chosen ? "recommended" : "member")).add(medoid);
        }
        write(t, "recommendation.tsv");
        results["recommendation"] = {{"k", s.k}, {"chosen", s.chosen}, {"total_cost", std::stod(format_fixed6(s.total_cost))}};
    }

    if (report.candidate_ranking) {
        Table t({"rank", "condition_id", "distance"});
        for (const auto& e : report.candidate_ranking->entries) t.row().add(e.rank).add(e.condition_id).add(e.distance);
        write(t, "candidate_ranking.tsv");
    }

    auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char stamp[32];
    std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));

    json summary;
    summary["tool"] = "systemmatch";
    summary["version"] = systemmatch_version;
    summary["status"] = "complete";
    summary["timestamp"] = stamp;
    summary["seed"] = cfg.seed;
    summary["config"] = config_object(cfg);
    summary["missing_panel_genes"] = report.missing_panel_genes;
    summary["warnings"] = report.warnings;
    summary["results"] = results;
    summary["files"] = files;

    std::ofstream out(out_dir / "summary.json");
    out << summary.dump(2) << '\n';
    if (!out) {
        throw DataError("failed to write '" + (out_dir / "summary.json").string() + "'");
    }
}

}
