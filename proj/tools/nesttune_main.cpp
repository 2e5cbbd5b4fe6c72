// nesttune: schedule miniature loop-nest pipelines with ensemble Monte Carlo
// tree search, beam/greedy/random baselines, and a brute-force oracle.
//
// Subcommands:
//   tune    search one pipeline with a named algorithm preset
//   bench   run an experiment matrix from a spec file
//   oracle  brute-force the schedule space
//   show    pretty-print a schedule and report both of its costs
//
// Exit codes: 0 success, 2 validation error, 3 runtime failure.

#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "nesttune/harness.hpp"
#include "nesttune/interp.hpp"

namespace {

using namespace nesttune;

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw RuntimeFailure("cannot write '" + path + "'");
    out << content;
}

CostModelConfig model_from(const std::string& path) {
    return path.empty() ? CostModelConfig{} : CostModelConfig::load_file(path);
}

struct TuneOptions {
    std::string pipeline_path;
    std::string algo = "mcts_1s";
    std::uint64_t seed = 0;
    double budget_ms = 0.0;
    double budget_scale = 0.1;
    std::string measure = "model";
    int trees = 15;
    int greedy_trees = 1;
    int workers = 0;
    int repeats = 3;
    double autotune_s = 0.0;
    std::string model_config;
    std::string out_csv;
    std::string schedule_out;
    std::string trace_out;
};

int run_tune(const TuneOptions& opt) {
    const Pipeline p = load_pipeline_file(opt.pipeline_path);
    const AlgoPreset& preset = find_preset(opt.algo);

    RunRequest req;
    req.pipeline = &p;
    req.model = model_from(opt.model_config);
    req.preset = &preset;
    req.seed = opt.seed;
    req.budget_scale = opt.budget_scale;
    if (opt.budget_ms > 0.0) req.budget_ms_override = opt.budget_ms;
    req.evaluator = EvaluatorSelection::parse(opt.measure);
    req.trees = opt.trees;
    req.greedy_trees = opt.greedy_trees;
    req.workers = opt.workers;
    req.measurement_repeats = opt.repeats;

    std::vector<ResultRow> rows;
    ResultRow row;
    row.pipeline = p.name();
    row.algorithm = preset.name;
    row.seed = opt.seed;

    PartialSchedule best = initial_state(p);
    if (opt.autotune_s > 0.0) {
        AutotuneResult result = autotune(req, opt.autotune_s);
        best = result.schedule;
        AnalyticalCostModel model(req.model);
        row.model_cost_ms = model.evaluate(best).ms;
        row.measured_ms = result.measured_ms;
        row.iterations = result.runs.size();
        std::cout << "autotune: " << result.runs.size() << " runs, best measured "
                  << result.measured_ms << " ms\n";
    } else {
        RunOutcome out = run_algorithm(req);
        best = out.schedule;
        row.model_cost_ms = out.model_cost_ms;
        row.measured_ms = out.measured_ms;
        row.search_seconds = out.search_seconds;
        row.iterations = out.iterations;
        if (out.trace && !opt.trace_out.empty()) write_file(opt.trace_out, out.trace->to_log());
    }
    rows.push_back(row);
    normalize_rows(rows);

    std::cout << "pipeline " << p.name() << ", algorithm " << preset.name << "\n";
    std::cout << schedule_to_text(best);
    std::cout << "model_cost_ms " << row.model_cost_ms << "\n";
    if (row.measured_ms) std::cout << "measured_ms " << *row.measured_ms << "\n";

    if (!opt.out_csv.empty()) write_file(opt.out_csv, rows_to_csv(rows));
    if (!opt.schedule_out.empty()) write_file(opt.schedule_out, schedule_to_text(best));
    return 0;
}

int run_bench(const std::string& spec_path, const std::string& out_csv) {
    ExperimentSpec spec = ExperimentSpec::load_file(spec_path);
    if (!out_csv.empty()) spec.out_path = out_csv;
    const std::vector<ResultRow> rows = run_experiment(spec);
    std::cout << summary_table(rows);
    if (!spec.out_path.empty()) {
        write_file(spec.out_path, rows_to_csv(rows));
        std::cout << "\nwrote " << rows.size() << " rows to " << spec.out_path << "\n";
    }
    return 0;
}

int run_oracle(const std::string& pipeline_path, const std::string& model_config,
               std::uint64_t cap) {
    const Pipeline p = load_pipeline_file(pipeline_path);
    AnalyticalCostModel model(model_from(model_config));
    const std::uint64_t space = schedule_space_size(p, cap);
    if (space > cap) {
        throw ValidationError("schedule space of '" + p.name() + "' exceeds the cap of " +
                              std::to_string(cap));
    }
    SearchResult best = brute_force(p, model, cap);
    std::cout << "pipeline " << p.name() << ": " << space << " schedules\n";
    std::cout << schedule_to_text(best.schedule);
    std::cout << "model_cost_ms " << best.cost.ms << "\n";
    return 0;
}

int run_show(const std::string& pipeline_path, const std::string& schedule_path,
             const std::string& model_config, int repeats) {
    const Pipeline p = load_pipeline_file(pipeline_path);
    const PartialSchedule s = load_schedule_file(p, schedule_path);
    std::cout << pipeline_to_text(p) << "\n" << schedule_to_text(s);
    if (!s.terminal()) {
        std::cout << "(partial schedule: " << s.decisions().size() << "/" << p.stage_count()
                  << " stages decided; costs need a terminal schedule)\n";
        return 0;
    }
    AnalyticalCostModel model(model_from(model_config));
    std::cout << "model_cost_ms " << model.evaluate(s).ms << "\n";
    for (int stage : p.schedule_order()) {
        const StageCostTerms t = model.stage_terms(s, stage);
        std::cout << "  stage " << p.stage(stage).id << ": compute_ns " << t.compute_ns
                  << " memory_ns " << t.memory_ns << " overhead_ns " << t.overhead_ns << "\n";
    }
    const ExecutionResult r = execute_schedule(p, s, repeats);
    std::cout << "measured_ms " << r.cost.ms << " (min of " << repeats << " runs)\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"miniature loop-nest autotuner"};
    app.require_subcommand(1);

    TuneOptions tune;
    CLI::App* cmd_tune = app.add_subcommand("tune", "search one pipeline");
    cmd_tune->add_option("pipeline", tune.pipeline_path, "pipeline definition file")->required();
    cmd_tune->add_option("--algo", tune.algo, "algorithm preset (see README)");
    cmd_tune->add_option("--seed", tune.seed, "search seed");
    cmd_tune->add_option("--budget-ms", tune.budget_ms, "per-decision budget override (ms)");
    cmd_tune->add_option("--budget-scale", tune.budget_scale,
                         "scale factor on preset budgets (default 0.1)");
    cmd_tune->add_option("--measure", tune.measure, "model|model+noise:<sigma>|real|model+real");
    cmd_tune->add_option("--trees", tune.trees, "standard trees in the ensemble");
    cmd_tune->add_option("--greedy-trees", tune.greedy_trees, "greedy trees in the ensemble");
    cmd_tune->add_option("--workers", tune.workers, "worker threads (0 = one per tree)");
    cmd_tune->add_option("--repeats", tune.repeats, "measurement repeats");
    cmd_tune->add_option("--autotune-s", tune.autotune_s,
                         "rerun with fresh seeds until this wall-clock budget expires");
    cmd_tune->add_option("--model-config", tune.model_config, "cost-model constants file");
    cmd_tune->add_option("--out", tune.out_csv, "result CSV path");
    cmd_tune->add_option("--schedule-out", tune.schedule_out, "write the best schedule here");
    cmd_tune->add_option("--trace-out", tune.trace_out, "write the ensemble trace log here");

    std::string bench_spec, bench_out;
    CLI::App* cmd_bench = app.add_subcommand("bench", "run an experiment matrix");
    cmd_bench->add_option("--spec", bench_spec, "experiment spec file")->required();
    cmd_bench->add_option("--out", bench_out, "result CSV path (overrides the spec)");

    std::string oracle_pipeline, oracle_model;
    std::uint64_t oracle_cap = 1'000'000;
    CLI::App* cmd_oracle = app.add_subcommand("oracle", "brute-force the schedule space");
    cmd_oracle->add_option("pipeline", oracle_pipeline, "pipeline definition file")->required();
    cmd_oracle->add_option("--model-config", oracle_model, "cost-model constants file");
    cmd_oracle->add_option("--cap", oracle_cap, "schedule-space cap");

    std::string show_pipeline, show_schedule, show_model;
    int show_repeats = 3;
    CLI::App* cmd_show = app.add_subcommand("show", "pretty-print a schedule with both costs");
    cmd_show->add_option("pipeline", show_pipeline, "pipeline definition file")->required();
    cmd_show->add_option("schedule", show_schedule, "schedule file")->required();
    cmd_show->add_option("--model-config", show_model, "cost-model constants file");
    cmd_show->add_option("--repeats", show_repeats, "measurement repeats");

    CLI11_PARSE(app, argc, argv);

    try {
        if (cmd_tune->parsed()) return run_tune(tune);
        if (cmd_bench->parsed()) return run_bench(bench_spec, bench_out);
        if (cmd_oracle->parsed()) return run_oracle(oracle_pipeline, oracle_model, oracle_cap);
        if (cmd_show->parsed()) return run_show(show_pipeline, show_schedule, show_model,
                                                show_repeats);
    } catch (const nesttune::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const nesttune::RuntimeFailure& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
