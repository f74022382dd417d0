#ifndef SYSTEMMATCH_PIPELINE_HPP
#define SYSTEMMATCH_PIPELINE_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "distance.hpp"
#include "expression.hpp"
#include "io.hpp"
#include "perturb.hpp"
#include "ranking.hpp"
#include "recommender.hpp"

/**
 * @file pipeline.hpp
 * @brief Config-driven orchestration of one rank, evaluate, predict and recommend iteration.
 */

namespace systemmatch {

inline constexpr int config_schema_version = 1;
inline constexpr const char* systemmatch_version = "0.1.0";

/**
 * @brief Where one condition's cells come from.
 *
 * For sparse inputs holding several conditions, `condition` selects the cells; it defaults to `id`.
 * Inputs already in the log-normalized state skip QC and normalization.
 */
struct DatasetSource {
    std::string id;
    std::filesystem::path path;
    InputFormat format = InputFormat::dense_csv;
    std::string condition;
    NormState input_state = NormState::raw_counts;
};

struct EvaluationConfig {
    bool enabled = false;
    std::vector<std::string> expected_order;
    std::vector<DistanceMetricSpec> metrics;
    CorruptionProtocol protocol;
};

struct PerturbationCondition {
    DatasetSource source;
    PerturbationSet perturbations;
    CovariateMap covariates;
    /** Held-out conditions are excluded from training and used for validation only. */
    bool held_out = false;
};

struct PerturbationConfig {
    bool enabled = false;
    std::vector<PerturbationCondition> conditions;
    std::vector<std::string> addons;
    std::set<int> orders{2, 3};
    std::set<std::string> exclude;
    std::size_t cells_per_prediction = 100;
    DistanceMetricSpec validation_metric;
    TrainConfig training;
};

struct RecommenderConfig {
    bool enabled = false;
    std::size_t k = 1;
    DistanceMetricSpec metric;
};

struct PipelineConfig {
    int schema_version = config_schema_version;
    std::uint64_t seed = 0;
    std::optional<std::filesystem::path> panel;
    DatasetSource target;
    std::vector<DatasetSource> queries;
    std::size_t qc_min_nonzero_genes = 1500;
    double normalization_scale = 10000;
    DistanceMetricSpec metric;
    std::size_t emd_max_cells = 1000;
    std::size_t top_genes = 10;
    EvaluationConfig evaluation;
    PerturbationConfig perturbation;
    RecommenderConfig recommender;
    std::filesystem::path output_dir = "systemmatch_out";
};

/**
 * Relative paths are resolved against the directory of the config file.
 *
 * @throws UsageError for schema problems or missing files.
 */
PipelineConfig load_config(const std::filesystem::path& path);

/**
 * Effective config as compact JSON text, with every default filled in.
 */
std::string config_to_json(const PipelineConfig& cfg, int indent = -1);

PipelineConfig config_from_json(const std::string& text, const std::filesystem::path& base_dir);

/**
 * Propagates the global seed into the per-stage seeds.
 */
void apply_seed(PipelineConfig& cfg, std::uint64_t seed);

struct StageSelection {
    bool rank = true;
    bool evaluate = true;
    bool train = true;
    bool predict = true;
    bool recommend = true;
};

struct RunOptions {
    StageSelection stages;
    /** Skip training and load this checkpoint instead. */
    std::optional<std::filesystem::path> checkpoint;
    kernels::Execution execution = kernels::Execution::parallel;
};

struct GeneContribution {
    std::string condition_id;
    std::string gene;
    double difference = 0;
};

struct PipelineReport {
    std::vector<std::string> missing_panel_genes;
    std::vector<std::pair<std::string, std::size_t>> qc_retained;
    std::optional<RankingReport> ranking;
    std::vector<GeneContribution> contributions;
    std::optional<SweepResult> sweep;
    std::vector<MetricArea> metric_areas;
    std::optional<ModelParams> model;
    std::vector<double> reconstruction_history;
    std::vector<double> adversary_history;
    std::vector<ConditionDataset> predictions;
    std::optional<HeldOutValidation> validation;
    std::optional<MedoidSelection> selection;
    std::optional<RankingReport> candidate_ranking;
    std::vector<std::string> warnings;
};

/**
 * @throws Error subclasses whose message is prefixed with the failing stage.
 */
PipelineReport run_pipeline(const PipelineConfig& cfg, const RunOptions& options = {});

/**
 * Writes the tables, `summary.json`, the model checkpoint when one was trained and `ranking.svg`.
 *
 * Apart from the timestamp in `summary.json`, output is a pure function of the config.
 */
void emit_reports(const PipelineReport& report, const PipelineConfig& cfg, const std::filesystem::path& out_dir);

/**
 * Simple horizontal bar chart of a ranking.
 */
std::string ranking_svg(const RankingReport& ranking);

}

#endif
