#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "systemmatch/errors.hpp"
#include "systemmatch/io.hpp"
#include "systemmatch/pipeline.hpp"
#include "systemmatch/synthetic.hpp"

namespace fs = std::filesystem;
using namespace systemmatch;

namespace {

struct Overrides {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> metric;
    std::optional<std::size_t> k;
    std::optional<std::string> out;
    std::optional<std::size_t> max_cells;
    std::optional<std::string> checkpoint;
};

enum class Force { none, evaluation, perturbation, recommender };

void add_common(CLI::App* sub, Overrides& o, bool with_checkpoint) {
    sub->add_option("--config", o.config, "Pipeline config (JSON)")->required();
    sub->add_option("--seed", o.seed, "Global seed, overrides the config");
    sub->add_option("--metric", o.metric, "Metric <l2|emd>x<log|zscore>, overrides the config");
    sub->add_option("--k", o.k, "Number of new conditions to recommend");
    sub->add_option("--out", o.out, "Output directory, overrides the config");
    sub->add_option("--max-cells", o.max_cells, "Per-side cell cap for EMD");
    if (with_checkpoint) {
        sub->add_option("--checkpoint", o.checkpoint, "Load this model instead of training");
    }
}

PipelineConfig configure(const Overrides& o, Force force) {
    auto cfg = load_config(o.config);
    if (force == Force::evaluation) cfg.evaluation.enabled = true;
    if (force == Force::perturbation) cfg.perturbation.enabled = true;
    if (force == Force::recommender) cfg.recommender.enabled = true;
    if (o.seed) apply_seed(cfg, *o.seed);
    if (o.metric) cfg.metric = parse_metric(*o.metric);
    if (o.k) {
        cfg.recommender.k = *o.k;
        cfg.recommender.enabled = true;
    }
    if (o.out) cfg.output_dir = fs::absolute(*o.out).lexically_normal();
    if (o.max_cells) {
        if (*o.max_cells == 0) throw UsageError("--max-cells must be positive");
        cfg.emd_max_cells = *o.max_cells;
    }
    return cfg;
}

void mark_failed(const fs::path& out_dir, const std::string& message) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    std::ofstream status(out_dir / "FAILED");
    status << message << '\n';
}

int run_stages(const Overrides& o, StageSelection stages, Force force = Force::none) {
    auto cfg = configure(o, force);
    RunOptions options;
    options.stages = stages;
    if (o.checkpoint) {
        options.checkpoint = fs::absolute(*o.checkpoint);
    }
    PipelineReport report;
    try {
        report = run_pipeline(cfg, options);
    } catch (const Error& e) {
        mark_failed(cfg.output_dir, e.what());
        throw;
    }
    emit_reports(report, cfg, cfg.output_dir);

    if (report.ranking) {
        for (const auto& e : report.ranking->entries) {
            std::cout << e.rank << '\t' << e.condition_id << '\t' << format_fixed6(e.distance) << '\n';
        }
    }
    for (const auto& a : report.metric_areas) {
        std::cout << "metric " << to_string(a.metric) << " area " << format_fixed6(a.area) << '\n';
    }
    if (report.validation) {
        for (std::size_t i = 0; i < report.validation->nearest.size(); ++i) {
            std::cout << "held-out " << report.validation->raw.row_ids[i] << " nearest " << report.validation->nearest[i] << '\n';
        }
    }
    if (report.selection) {
        std::cout << "recommended";
        for (const auto& id : report.selection->chosen) std::cout << ' ' << id;
        std::cout << " (cost " << format_fixed6(report.selection->total_cost) << ")\n";
    }
    for (const auto& w : report.warnings) {
        std::cerr << "warning: " << w << '\n';
    }
    std::cout << "reports written to " << cfg.output_dir.string() << '\n';
    return 0;
}

int run_ingest(const std::string& input, const std::string& format, const std::optional<std::string>& out) {
    auto ingested = ingest(input, parse_format(format));
    const auto& m = ingested.matrix;
    std::cout << "cells " << m.n_cells() << "\ngenes " << m.n_genes() << '\n';
    if (!ingested.cell_conditions.empty()) {
        std::map<std::string, std::size_t> counts;
        for (const auto& c : ingested.cell_conditions) ++counts[c];
        for (const auto& [c, n] : counts) std::cout << "condition " << c << ' ' << n << '\n';
    }
    if (out) {
        write_dense_csv(*out, m);
        std::cout << "wrote " << *out << '\n';
    }
    return 0;
}

/**
 * Writes a planted study and an additive perturbational set plus a config that runs every stage on them.
 */
int run_synth(const fs::path& out, std::uint64_t seed, double noise, std::size_t cells, std::size_t k) {
    fs::create_directories(out);

    SyntheticSpec spec;
    spec.seed = seed;
    spec.noise = noise;
    spec.cells_per_condition = cells;
    auto study = generate_synthetic(spec);

    nlohmann::json cfg;
    cfg["schema_version"] = config_schema_version;
    cfg["seed"] = seed;
    cfg["qc_min_nonzero_genes"] = 1;
    cfg["metric"] = "l2xlog";
    cfg["output_dir"] = "run";

    write_dense_csv(out / "target.csv", study.collection.target().matrix);
    cfg["target"] = {{"id", "target"}, {"path", "target.csv"}};
    cfg["queries"] = nlohmann::json::array();
    for (const auto& q : study.collection.queries()) {
        write_dense_csv(out / (q.condition_id + ".csv"), q.matrix);
        cfg["queries"].push_back({{"id", q.condition_id}, {"path", q.condition_id + ".csv"}});
    }
    cfg["evaluation"] = {{"enabled", true}, {"expected_order", study.planted_order}, {"max_repeats", 50}};

    PerturbationalSpec pspec;
    pspec.seed = seed;
    pspec.n_genes = spec.n_genes;
    auto data = generate_synthetic_perturbational(pspec);
    std::vector<std::string> labels;
    Matrix all(0, static_cast<Eigen::Index>(data.gene_ids.size()));
    std::vector<std::string> cell_ids;
    for (const auto& c : data.conditions) {
        const auto& m = c.data.matrix;
        Matrix grown(all.rows() + m.values().rows(), all.cols());
        grown << all, m.values();
        all = std::move(grown);
        cell_ids.insert(cell_ids.end(), m.cell_ids().begin(), m.cell_ids().end());
        labels.insert(labels.end(), m.n_cells(), c.data.condition_id);
    }
    write_sparse_triplet(out / "perturbations.mtx", CellExpressionMatrix(all, data.gene_ids, cell_ids), labels);

    nlohmann::json conditions = nlohmann::json::array();
    for (const auto& c : data.conditions) {
        conditions.push_back({{"id", c.data.condition_id}, {"path", "perturbations.mtx"}, {"format", "sparse_triplet"},
                              {"input_state", "log_normalized"},
                              {"perturbations", std::vector<std::string>(c.addons.begin(), c.addons.end())},
                              {"covariates", {{"base", c.base}}}, {"held_out", c.held_out}});
    }
    cfg["perturbation"] = {{"enabled", true}, {"conditions", conditions}, {"addons", pspec.addons},
                           {"orders", {2, 3}}, {"cells_per_prediction", pspec.cells_per_condition},
                           {"training", {{"epochs", 120}}}};
    cfg["recommender"] = {{"enabled", true}, {"k", k}};

    std::ofstream config(out / "config.json");
    config << cfg.dump(2) << '\n';
    if (!config) {
        throw DataError("failed to write '" + (out / "config.json").string() + "'");
    }

    std::cout << "planted order";
    for (const auto& id : study.planted_order) std::cout << ' ' << id;
    std::cout << "\nwrote " << (out / "config.json").string() << '\n';
    return 0;
}

}

int main(int argc, char** argv) {
    CLI::App app{"systemmatch: rank model systems against a target population, predict combinations and recommend experiments"};
    app.require_subcommand(1);

    std::string ingest_input, ingest_format = "dense_csv";
    std::optional<std::string> ingest_out;
    auto* ingest_cmd = app.add_subcommand("ingest", "Parse an expression file and report its shape");
    ingest_cmd->add_option("input", ingest_input, "Expression file")->required();
    ingest_cmd->add_option("--format", ingest_format, "dense_csv or sparse_triplet");
    ingest_cmd->add_option("--out", ingest_out, "Write the parsed matrix as dense CSV");

    Overrides rank_o, eval_o, train_o, predict_o, recommend_o, run_o;
    auto* rank_cmd = app.add_subcommand("rank", "Rank queries by distance to the target");
    add_common(rank_cmd, rank_o, false);
    auto* eval_cmd = app.add_subcommand("evaluate-metrics", "Score all metrics under gene-subsampling corruption");
    add_common(eval_cmd, eval_o, false);
    auto* train_cmd = app.add_subcommand("train", "Train the perturbation autoencoder and write a checkpoint");
    add_common(train_cmd, train_o, false);
    auto* predict_cmd = app.add_subcommand("predict", "Generate the combination grid and validate held-out conditions");
    add_common(predict_cmd, predict_o, true);
    auto* recommend_cmd = app.add_subcommand("recommend", "Choose new conditions by constrained k-medoids");
    add_common(recommend_cmd, recommend_o, true);
    auto* run_cmd = app.add_subcommand("run", "Run every enabled stage");
    add_common(run_cmd, run_o, true);

    std::string synth_out;
    std::uint64_t synth_seed = 0;
    double synth_noise = 0.1;
    std::size_t synth_cells = 100, synth_k = 2;
    auto* synth_cmd = app.add_subcommand("synth", "Write synthetic data with planted ground truth and a matching config");
    synth_cmd->add_option("--out", synth_out, "Output directory")->required();
    synth_cmd->add_option("--seed", synth_seed, "Generator seed");
    synth_cmd->add_option("--noise", synth_noise, "Per-cell noise sd of the planted study");
    synth_cmd->add_option("--cells", synth_cells, "Cells per condition of the planted study");
    synth_cmd->add_option("--k", synth_k, "Recommender k written into the config");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*ingest_cmd) return run_ingest(ingest_input, ingest_format, ingest_out);
        if (*synth_cmd) return run_synth(synth_out, synth_seed, synth_noise, synth_cells, synth_k);
        if (*rank_cmd) return run_stages(rank_o, {true, false, false, false, false});
        if (*eval_cmd) return run_stages(eval_o, {false, true, false, false, false}, Force::evaluation);
        if (*train_cmd) return run_stages(train_o, {false, false, true, false, false}, Force::perturbation);
        if (*predict_cmd) return run_stages(predict_o, {false, false, true, true, false}, Force::perturbation);
        if (*recommend_cmd) return run_stages(recommend_o, {false, false, true, true, true}, Force::recommender);
        if (*run_cmd) return run_stages(run_o, {true, true, true, true, true});
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 1;
}
