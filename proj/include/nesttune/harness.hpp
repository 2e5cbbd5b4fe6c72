#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nesttune/baselines.hpp"
#include "nesttune/ensemble.hpp"
#include "nesttune/fixtures.hpp"

namespace nesttune {

// A named search algorithm configuration. The mcts presets mirror the
// configuration table of the evaluation suite: per-decision wall-clock
// timeouts of 30/10/1/0.5 seconds, the two exploration-heavy variants, and
// the cost+real pair that re-ranks roots by measurement. budget_scale (0.1
// by default) shrinks those timeouts to desk scale; scale 1.0 restores them
// verbatim.
struct AlgoPreset {
    enum class Kind { kMctsEnsemble, kBeam, kGreedy, kRandom, kBruteForce };

    std::string name;
    Kind kind = Kind::kMctsEnsemble;

    // mcts
    UcbVariant ucb;
    double decision_seconds = 1.0;  // per-tree wall clock per root decision
    RootSelection root_selection = RootSelection::kByCost;

    // beam
    BeamConfig beam;

    // random
    double random_budget_seconds = 600.0;
};

const std::vector<AlgoPreset>& algorithm_presets();
const AlgoPreset& find_preset(const std::string& name);

struct EvaluatorSelection {
    enum class Kind { kModel, kModelNoise, kReal, kModelReal };

    Kind kind = Kind::kModel;
    double sigma = 0.0;

    static EvaluatorSelection parse(const std::string& text);
    std::string to_string() const;
};

struct PipelineRef {
    std::string path;
    std::string model_config_path;  // empty = default constants
};

struct ExperimentSpec {
    std::string name;
    std::vector<PipelineRef> pipelines;
    std::vector<std::string> algorithms;
    std::vector<std::uint64_t> seeds;
    double budget_scale = 0.1;
    std::optional<double> budget_ms_override;  // per root decision / search
    EvaluatorSelection evaluator;
    std::string out_path;
    int trees = 15;
    int greedy_trees = 1;
    int workers = 0;
    int measurement_repeats = 3;

    void validate() const;
    static ExperimentSpec parse(const std::string& text);
    static ExperimentSpec load_file(const std::string& path);
};

struct ResultRow {
    std::string pipeline;
    std::string algorithm;
    std::uint64_t seed = 0;
    bool failed = false;
    std::string error;
    double model_cost_ms = 0.0;
    std::optional<double> measured_ms;
    double search_seconds = 0.0;
    std::uint64_t iterations = 0;
    double ratio = 0.0;  // normalized-to-best within the pipeline group

    bool operator==(const ResultRow&) const = default;
};

// Fills row.ratio: within each pipeline group the best row's metric gets
// ratio 1.0 and every other row is metric/best. The metric is measured time
// when every successful row has one, model cost otherwise.
void normalize_rows(std::vector<ResultRow>& rows);

// Per-algorithm geometric mean over pipelines of the best-of-seeds ratio.
struct AlgorithmSummary {
    std::string algorithm;
    double geomean_ratio = 0.0;
    int pipelines = 0;
};
std::vector<AlgorithmSummary> summarize(const std::vector<ResultRow>& rows);

// CSV with a fixed column set and deterministic row order; ratios printed to
// 4 decimals. include_timing=false drops the wall-clock column (the one
// field that cannot be byte-reproducible).
std::string rows_to_csv(const std::vector<ResultRow>& rows, bool include_timing = true);
std::vector<ResultRow> rows_from_csv(const std::string& csv);
std::string summary_table(const std::vector<ResultRow>& rows);

// Runs the full (pipeline x algorithm x seed) matrix. Cell failures become
// failed rows; the matrix keeps going.
std::vector<ResultRow> run_experiment(const ExperimentSpec& spec);

// One algorithm run on one pipeline. Exposed so `tune` and run_experiment
// share the exact same wiring.
struct RunRequest {
    const Pipeline* pipeline = nullptr;
    CostModelConfig model;
    const AlgoPreset* preset = nullptr;
    std::uint64_t seed = 0;
    double budget_scale = 0.1;
    std::optional<double> budget_ms_override;
    EvaluatorSelection evaluator;
    int trees = 15;
    int greedy_trees = 1;
    int workers = 0;
    int measurement_repeats = 3;
};

struct RunOutcome {
    PartialSchedule schedule;
    double model_cost_ms = 0.0;
    std::optional<double> measured_ms;
    double search_seconds = 0.0;
    std::uint64_t iterations = 0;
    std::optional<EnsembleTrace> trace;
};

RunOutcome run_algorithm(const RunRequest& req);

// Re-runs the preset with fresh seeds until the wall-clock budget expires
// (the in-flight run finishes), measuring every final schedule; returns the
// best-measured one.
struct AutotuneRun {
    std::uint64_t seed = 0;
    double measured_ms = 0.0;
    double model_cost_ms = 0.0;
};

struct AutotuneResult {
    PartialSchedule schedule;
    double measured_ms = 0.0;
    std::vector<AutotuneRun> runs;
};

AutotuneResult autotune(const RunRequest& req, double wall_budget_seconds);

}  // namespace nesttune
