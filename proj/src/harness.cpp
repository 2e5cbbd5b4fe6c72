#include "nesttune/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "nesttune/interp.hpp"
#include "nesttune/rng.hpp"

namespace nesttune {

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

namespace {

std::vector<AlgoPreset> make_presets() {
    const UcbVariant inv1 = UcbVariant::inverse_avg_multiplicative(1.0);
    std::vector<AlgoPreset> out;

    auto mcts = [&](std::string name, UcbVariant ucb, double seconds, RootSelection sel) {
        AlgoPreset a;
        a.name = std::move(name);
        a.kind = AlgoPreset::Kind::kMctsEnsemble;
        a.ucb = ucb;
        a.decision_seconds = seconds;
        a.root_selection = sel;
        out.push_back(a);
    };

    mcts("mcts_30s", inv1, 30.0, RootSelection::kByCost);
    mcts("mcts_10s", inv1, 10.0, RootSelection::kByCost);
    mcts("mcts_1s", inv1, 1.0, RootSelection::kByCost);
    mcts("mcts_0.5s", inv1, 0.5, RootSelection::kByCost);
    mcts("mcts_Cp10_30s", UcbVariant::inverse_avg_multiplicative(10.0), 30.0,
         RootSelection::kByCost);
    mcts("mcts_sqrt2_30s", UcbVariant::avg_inverse_additive(std::sqrt(2.0)), 30.0,
         RootSelection::kByCost);
    mcts("mcts_cost+real_30s", inv1, 30.0, RootSelection::kByRealMeasurement);
    mcts("mcts_cost+real_1s", inv1, 1.0, RootSelection::kByRealMeasurement);
    mcts("adaptive_cp", UcbVariant::adaptive_cp(), 1.0, RootSelection::kByCost);
    mcts("binary_reward", UcbVariant::binary_reward(std::sqrt(2.0)), 1.0, RootSelection::kByCost);

    {
        AlgoPreset a;
        a.name = "beam_halide";
        a.kind = AlgoPreset::Kind::kBeam;
        a.beam = beam_halide_preset(0);
        out.push_back(a);
    }
    {
        AlgoPreset a;
        a.name = "greedy";
        a.kind = AlgoPreset::Kind::kGreedy;
        out.push_back(a);
    }
    {
        AlgoPreset a;
        a.name = "random";
        a.kind = AlgoPreset::Kind::kRandom;
        a.random_budget_seconds = 600.0;
        out.push_back(a);
    }
    {
        AlgoPreset a;
        a.name = "brute_force";
        a.kind = AlgoPreset::Kind::kBruteForce;
        out.push_back(a);
    }
    return out;
}

}  // namespace

const std::vector<AlgoPreset>& algorithm_presets() {
    static const std::vector<AlgoPreset> presets = make_presets();
    return presets;
}

const AlgoPreset& find_preset(const std::string& name) {
    for (const AlgoPreset& p : algorithm_presets()) {
        if (p.name == name) return p;
    }
    throw ValidationError("unknown algorithm preset '" + name + "'");
}

// ---------------------------------------------------------------------------
// EvaluatorSelection / ExperimentSpec
// ---------------------------------------------------------------------------

EvaluatorSelection EvaluatorSelection::parse(const std::string& text) {
    EvaluatorSelection sel;
    if (text == "model") {
        sel.kind = Kind::kModel;
    } else if (text == "real") {
        sel.kind = Kind::kReal;
    } else if (text == "model+real") {
        sel.kind = Kind::kModelReal;
    } else if (text.rfind("model+noise:", 0) == 0) {
        sel.kind = Kind::kModelNoise;
        try {
            sel.sigma = std::stod(text.substr(12));
        } catch (const std::exception&) {
            throw ValidationError("bad noise sigma in '" + text + "'");
        }
        if (sel.sigma < 0.0) throw ValidationError("noise sigma must be >= 0");
    } else {
        throw ValidationError("unknown evaluator selection '" + text + "'");
    }
    return sel;
}

std::string EvaluatorSelection::to_string() const {
    switch (kind) {
        case Kind::kModel: return "model";
        case Kind::kModelNoise: {
            std::ostringstream out;
            out << "model+noise:" << sigma;
            return out.str();
        }
        case Kind::kReal: return "real";
        case Kind::kModelReal: return "model+real";
    }
    return "?";
}

void ExperimentSpec::validate() const {
    if (pipelines.empty()) throw ValidationError("experiment needs at least one pipeline");
    if (algorithms.empty()) throw ValidationError("experiment needs at least one algorithm");
    if (seeds.empty()) throw ValidationError("experiment needs at least one seed");
    if (budget_scale <= 0.0) throw ValidationError("budget scale must be > 0");
    for (const std::string& a : algorithms) find_preset(a);
}

ExperimentSpec ExperimentSpec::parse(const std::string& text) {
    ExperimentSpec spec;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ls(line);
        std::vector<std::string> tokens;
        std::string tok;
        while (ls >> tok) {
            if (tok[0] == '#') break;
            tokens.push_back(tok);
        }
        if (tokens.empty()) continue;
        const std::string& kw = tokens[0];
        const auto need = [&](std::size_t n, const char* usage) {
            if (tokens.size() != n) throw ParseError(line_no, usage);
        };
        if (kw == "experiment") {
            need(2, "usage: experiment <name>");
            spec.name = tokens[1];
        } else if (kw == "pipeline") {
            if (tokens.size() < 2 || tokens.size() > 3) {
                throw ParseError(line_no, "usage: pipeline <path> [model=<path>]");
            }
            PipelineRef ref;
            ref.path = tokens[1];
            if (tokens.size() == 3) {
                if (tokens[2].rfind("model=", 0) != 0) {
                    throw ParseError(line_no, "expected model=<path>");
                }
                ref.model_config_path = tokens[2].substr(6);
            }
            spec.pipelines.push_back(ref);
        } else if (kw == "algo") {
            need(2, "usage: algo <preset>");
            spec.algorithms.push_back(tokens[1]);
        } else if (kw == "seed") {
            for (std::size_t i = 1; i < tokens.size(); ++i) {
                try {
                    spec.seeds.push_back(std::stoull(tokens[i]));
                } catch (const std::exception&) {
                    throw ParseError(line_no, "bad seed '" + tokens[i] + "'");
                }
            }
        } else if (kw == "budget_scale") {
            need(2, "usage: budget_scale <factor>");
            spec.budget_scale = std::stod(tokens[1]);
        } else if (kw == "budget_ms") {
            need(2, "usage: budget_ms <ms>");
            spec.budget_ms_override = std::stod(tokens[1]);
        } else if (kw == "evaluator") {
            need(2, "usage: evaluator model|model+noise:<sigma>|real|model+real");
            spec.evaluator = EvaluatorSelection::parse(tokens[1]);
        } else if (kw == "out") {
            need(2, "usage: out <path>");
            spec.out_path = tokens[1];
        } else if (kw == "trees") {
            need(2, "usage: trees <n>");
            spec.trees = std::stoi(tokens[1]);
        } else if (kw == "greedy_trees") {
            need(2, "usage: greedy_trees <n>");
            spec.greedy_trees = std::stoi(tokens[1]);
        } else if (kw == "workers") {
            need(2, "usage: workers <n>");
            spec.workers = std::stoi(tokens[1]);
        } else if (kw == "repeats") {
            need(2, "usage: repeats <n>");
            spec.measurement_repeats = std::stoi(tokens[1]);
        } else {
            throw ParseError(line_no, "unknown directive '" + kw + "'");
        }
    }
    spec.validate();
    return spec;
}

ExperimentSpec ExperimentSpec::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw RuntimeFailure("cannot open experiment file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
}

// ---------------------------------------------------------------------------
// run_algorithm
// ---------------------------------------------------------------------------

namespace {

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

RunOutcome run_algorithm(const RunRequest& req) {
    const Pipeline& p = *req.pipeline;
    const AlgoPreset& preset = *req.preset;
    AnalyticalCostModel clean_model(req.model);
    const auto t0 = std::chrono::steady_clock::now();

    std::optional<RunOutcome> out;

    switch (preset.kind) {
        case AlgoPreset::Kind::kMctsEnsemble: {
            EnsembleConfig cfg;
            cfg.standard_trees = req.trees;
            cfg.greedy_trees = req.greedy_trees;
            cfg.tree.ucb = preset.ucb;
            const double wall_ms =
                req.budget_ms_override.value_or(preset.decision_seconds * 1000.0 *
                                                req.budget_scale);
            cfg.tree.budget = Budget::by_wall_clock_ms(wall_ms);
            cfg.root_selection = preset.root_selection;
            if (req.evaluator.kind == EvaluatorSelection::Kind::kModelReal) {
                cfg.root_selection = RootSelection::kByRealMeasurement;
            }
            cfg.master_seed = req.seed;
            cfg.workers = req.workers;
            cfg.measurement_repeats = req.measurement_repeats;

            EnsembleResult result = [&] {
                switch (req.evaluator.kind) {
                    case EvaluatorSelection::Kind::kModelNoise: {
                        std::vector<std::unique_ptr<NoisyCostModel>> noisy;
                        noisy.reserve(static_cast<std::size_t>(cfg.total_trees()));
                        for (int i = 0; i < cfg.total_trees(); ++i) {
                            noisy.push_back(std::make_unique<NoisyCostModel>(
                                req.model, req.evaluator.sigma,
                                hash_combine(req.seed, 0x5150 + static_cast<std::uint64_t>(i))));
                        }
                        return run_ensemble(p, cfg, [&](int i) -> CostEvaluator& {
                            return *noisy[static_cast<std::size_t>(i)];
                        });
                    }
                    case EvaluatorSelection::Kind::kReal: {
                        MeasuredCostEvaluator measured(req.measurement_repeats);
                        // Measurement must stay serial: run the trees one at
                        // a time.
                        EnsembleConfig serial = cfg;
                        serial.workers = 1;
                        return run_ensemble(p, serial, measured);
                    }
                    default: return run_ensemble(p, cfg, clean_model);
                }
            }();

            RunOutcome o{result.schedule, 0.0, std::nullopt, 0.0, 0, std::move(result.trace)};
            o.model_cost_ms = clean_model.evaluate(result.schedule).ms;
            if (result.measured) o.measured_ms = result.measured->ms;
            for (const DecisionRecord& r : o.trace->records) o.iterations += r.iterations_total;
            out = std::move(o);
            break;
        }
        case AlgoPreset::Kind::kBeam:
        case AlgoPreset::Kind::kGreedy: {
            std::unique_ptr<CostEvaluator> owned;
            CostEvaluator* guide = &clean_model;
            if (req.evaluator.kind == EvaluatorSelection::Kind::kModelNoise) {
                owned = std::make_unique<NoisyCostModel>(req.model, req.evaluator.sigma,
                                                         hash_combine(req.seed, 0x6e015e));
                guide = owned.get();
            } else if (req.evaluator.kind == EvaluatorSelection::Kind::kReal) {
                owned = std::make_unique<MeasuredCostEvaluator>(req.measurement_repeats);
                guide = owned.get();
            }
            SearchResult r = preset.kind == AlgoPreset::Kind::kBeam
                                 ? [&] {
                                       BeamConfig bc = preset.beam;
                                       bc.seed = req.seed;
                                       return beam_search(p, bc, *guide);
                                   }()
                                 : greedy_search(p, *guide, req.seed);
            RunOutcome o{r.schedule, clean_model.evaluate(r.schedule).ms, std::nullopt, 0.0,
                         r.evaluations, std::nullopt};
            out = std::move(o);
            break;
        }
        case AlgoPreset::Kind::kRandom: {
            const double budget_s =
                req.budget_ms_override ? *req.budget_ms_override / 1000.0
                                       : preset.random_budget_seconds * req.budget_scale;
            const auto measure = [&](const PartialSchedule& s) {
                return execute_schedule(p, s, req.measurement_repeats).cost;
            };
            SearchResult r = random_search(p, budget_s, measure, req.seed);
            RunOutcome o{r.schedule, clean_model.evaluate(r.schedule).ms, r.cost.ms, 0.0,
                         r.candidates, std::nullopt};
            out = std::move(o);
            break;
        }
        case AlgoPreset::Kind::kBruteForce: {
            std::unique_ptr<CostEvaluator> owned;
            CostEvaluator* guide = &clean_model;
            if (req.evaluator.kind == EvaluatorSelection::Kind::kModelNoise) {
                owned = std::make_unique<NoisyCostModel>(req.model, req.evaluator.sigma,
                                                         hash_combine(req.seed, 0x6e015e));
                guide = owned.get();
            }
            SearchResult r = brute_force(p, *guide);
            RunOutcome o{r.schedule, clean_model.evaluate(r.schedule).ms, std::nullopt, 0.0,
                         r.evaluations, std::nullopt};
            out = std::move(o);
            break;
        }
    }

    // Real-measurement modes always report a measured time for the final
    // schedule.
    if ((req.evaluator.kind == EvaluatorSelection::Kind::kReal ||
         req.evaluator.kind == EvaluatorSelection::Kind::kModelReal) &&
        !out->measured_ms) {
        out->measured_ms = execute_schedule(p, out->schedule, req.measurement_repeats).cost.ms;
    }
    out->search_seconds = seconds_since(t0);
    return std::move(*out);
}

// ---------------------------------------------------------------------------
// Experiment matrix
// ---------------------------------------------------------------------------

std::vector<ResultRow> run_experiment(const ExperimentSpec& spec) {
    spec.validate();
    std::vector<ResultRow> rows;

    for (const PipelineRef& pref : spec.pipelines) {
        Pipeline p = load_pipeline_file(pref.path);
        CostModelConfig model = pref.model_config_path.empty()
                                    ? CostModelConfig{}
                                    : CostModelConfig::load_file(pref.model_config_path);
        for (const std::string& algo : spec.algorithms) {
            const AlgoPreset& preset = find_preset(algo);
            for (std::uint64_t seed : spec.seeds) {
                ResultRow row;
                row.pipeline = p.name();
                row.algorithm = algo;
                row.seed = seed;
                RunRequest req;
                req.pipeline = &p;
                req.model = model;
                req.preset = &preset;
                req.seed = seed;
                req.budget_scale = spec.budget_scale;
                req.budget_ms_override = spec.budget_ms_override;
                req.evaluator = spec.evaluator;
                req.trees = spec.trees;
                req.greedy_trees = spec.greedy_trees;
                req.workers = spec.workers;
                req.measurement_repeats = spec.measurement_repeats;
                try {
                    RunOutcome o = run_algorithm(req);
                    row.model_cost_ms = o.model_cost_ms;
                    row.measured_ms = o.measured_ms;
                    row.search_seconds = o.search_seconds;
                    row.iterations = o.iterations;
                } catch (const std::exception& e) {
                    row.failed = true;
                    row.error = e.what();
                    std::cerr << "experiment cell failed (" << row.pipeline << ", " << algo
                              << ", seed " << seed << "): " << e.what() << "\n";
                }
                rows.push_back(std::move(row));
            }
        }
    }
    normalize_rows(rows);
    return rows;
}

void normalize_rows(std::vector<ResultRow>& rows) {
    std::map<std::string, std::vector<ResultRow*>> groups;
    for (ResultRow& r : rows) groups[r.pipeline].push_back(&r);

    for (auto& [pipeline, group] : groups) {
        bool all_measured = true;
        bool any_ok = false;
        for (const ResultRow* r : group) {
            if (r->failed) continue;
            any_ok = true;
            all_measured &= r->measured_ms.has_value();
        }
        if (!any_ok) continue;
        const auto metric = [&](const ResultRow& r) {
            return all_measured ? *r.measured_ms : r.model_cost_ms;
        };
        double best = 0.0;
        bool have_best = false;
        for (const ResultRow* r : group) {
            if (r->failed) continue;
            if (!have_best || metric(*r) < best) {
                best = metric(*r);
                have_best = true;
            }
        }
        for (ResultRow* r : group) {
            if (r->failed) continue;
            r->ratio = metric(*r) / best;
        }
    }
}

std::vector<AlgorithmSummary> summarize(const std::vector<ResultRow>& rows) {
    // Best-of-seeds ratio per (pipeline, algorithm), then geometric mean over
    // pipelines. Means are taken over ratios, never raw times.
    std::map<std::string, std::map<std::string, double>> best;  // algo -> pipeline -> ratio
    for (const ResultRow& r : rows) {
        if (r.failed) continue;
        auto& per_pipeline = best[r.algorithm];
        auto it = per_pipeline.find(r.pipeline);
        if (it == per_pipeline.end() || r.ratio < it->second) per_pipeline[r.pipeline] = r.ratio;
    }
    std::vector<AlgorithmSummary> out;
    for (const auto& [algo, per_pipeline] : best) {
        double log_sum = 0.0;
        for (const auto& [pipeline, ratio] : per_pipeline) log_sum += std::log(ratio);
        AlgorithmSummary s;
        s.algorithm = algo;
        s.pipelines = static_cast<int>(per_pipeline.size());
        s.geomean_ratio = std::exp(log_sum / static_cast<double>(per_pipeline.size()));
        out.push_back(s);
    }
    return out;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

namespace {

std::string format_double(double v) {
    std::ostringstream out;
    out.precision(17);
    out << v;
    return out.str();
}

std::string format_ratio(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.push_back("");
    return fields;
}

}  // namespace

std::string rows_to_csv(const std::vector<ResultRow>& rows, bool include_timing) {
    std::vector<const ResultRow*> sorted;
    sorted.reserve(rows.size());
    for (const ResultRow& r : rows) sorted.push_back(&r);
    std::sort(sorted.begin(), sorted.end(), [](const ResultRow* a, const ResultRow* b) {
        return std::tie(a->pipeline, a->algorithm, a->seed) <
               std::tie(b->pipeline, b->algorithm, b->seed);
    });

    std::ostringstream out;
    out << "pipeline,algorithm,seed,status,model_cost_ms,measured_ms";
    if (include_timing) out << ",search_s";
    out << ",iterations,ratio\n";
    for (const ResultRow* r : sorted) {
        std::vector<std::string> fields = {r->pipeline, r->algorithm, std::to_string(r->seed)};
        if (r->failed) {
            fields.push_back("failed");
            fields.insert(fields.end(), include_timing ? 5 : 4, "");
        } else {
            fields.push_back("ok");
            fields.push_back(format_double(r->model_cost_ms));
            fields.push_back(r->measured_ms ? format_double(*r->measured_ms) : "");
            if (include_timing) {
                char buf[32];
                std::snprintf(buf, sizeof buf, "%.3f", r->search_seconds);
                fields.push_back(buf);
            }
            fields.push_back(std::to_string(r->iterations));
            fields.push_back(format_ratio(r->ratio));
        }
        for (std::size_t i = 0; i < fields.size(); ++i) {
            out << (i == 0 ? "" : ",") << fields[i];
        }
        out << "\n";
    }
    return out.str();
}

std::vector<ResultRow> rows_from_csv(const std::string& csv) {
    std::istringstream in(csv);
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("empty CSV");
    const std::vector<std::string> header = split_csv_line(line);
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
    for (const char* required :
         {"pipeline", "algorithm", "seed", "status", "model_cost_ms", "measured_ms", "iterations",
          "ratio"}) {
        if (!col.contains(required)) {
            throw ValidationError(std::string("CSV is missing column '") + required + "'");
        }
    }

    std::vector<ResultRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const std::vector<std::string> f = split_csv_line(line);
        if (f.size() != header.size()) throw ValidationError("CSV row has wrong field count");
        ResultRow r;
        r.pipeline = f[col["pipeline"]];
        r.algorithm = f[col["algorithm"]];
        r.seed = std::stoull(f[col["seed"]]);
        r.failed = f[col["status"]] != "ok";
        if (!r.failed) {
            r.model_cost_ms = std::stod(f[col["model_cost_ms"]]);
            if (!f[col["measured_ms"]].empty()) r.measured_ms = std::stod(f[col["measured_ms"]]);
            if (col.contains("search_s") && !f[col["search_s"]].empty()) {
                r.search_seconds = std::stod(f[col["search_s"]]);
            }
            r.iterations = std::stoull(f[col["iterations"]]);
            r.ratio = std::stod(f[col["ratio"]]);
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

std::string summary_table(const std::vector<ResultRow>& rows) {
    std::ostringstream out;
    out << "pipeline              algorithm            seed  status  model_cost_ms  measured_ms  "
           "ratio\n";
    std::vector<const ResultRow*> sorted;
    for (const ResultRow& r : rows) sorted.push_back(&r);
    std::sort(sorted.begin(), sorted.end(), [](const ResultRow* a, const ResultRow* b) {
        return std::tie(a->pipeline, a->algorithm, a->seed) <
               std::tie(b->pipeline, b->algorithm, b->seed);
    });
    for (const ResultRow* r : sorted) {
        char line[256];
        if (r->failed) {
            std::snprintf(line, sizeof line, "%-20s  %-20s %5llu  failed  (%s)\n",
                          r->pipeline.c_str(), r->algorithm.c_str(),
                          static_cast<unsigned long long>(r->seed), r->error.c_str());
        } else {
            std::snprintf(line, sizeof line,
                          "%-20s  %-20s %5llu  ok      %13.6f  %11.6f  %.4f\n",
                          r->pipeline.c_str(), r->algorithm.c_str(),
                          static_cast<unsigned long long>(r->seed), r->model_cost_ms,
                          r->measured_ms.value_or(0.0), r->ratio);
        }
        out << line;
    }
    out << "\ngeometric means (best-of-seeds ratio per pipeline):\n";
    for (const AlgorithmSummary& s : summarize(rows)) {
        char line[128];
        std::snprintf(line, sizeof line, "  %-20s %.4f  (over %d pipelines)\n",
                      s.algorithm.c_str(), s.geomean_ratio, s.pipelines);
        out << line;
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// Autotune
// ---------------------------------------------------------------------------

AutotuneResult autotune(const RunRequest& req, double wall_budget_seconds) {
    if (wall_budget_seconds <= 0.0) throw ValidationError("autotune budget must be > 0");
    const auto t0 = std::chrono::steady_clock::now();
    std::optional<AutotuneResult> best;
    std::vector<AutotuneRun> runs;
    std::uint64_t attempt = 0;

    do {
        RunRequest r = req;
        r.seed = hash_combine(req.seed, attempt);
        RunOutcome out = run_algorithm(r);
        const double measured =
            out.measured_ms ? *out.measured_ms
                            : execute_schedule(*req.pipeline, out.schedule,
                                               req.measurement_repeats)
                                  .cost.ms;
        runs.push_back(AutotuneRun{r.seed, measured, out.model_cost_ms});
        if (!best || measured < best->measured_ms) {
            best = AutotuneResult{out.schedule, measured, {}};
        }
        ++attempt;
    } while (seconds_since(t0) < wall_budget_seconds);

    best->runs = std::move(runs);
    return *best;
}

}  // namespace nesttune
