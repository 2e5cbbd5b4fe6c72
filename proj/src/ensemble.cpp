#include "nesttune/ensemble.hpp"

#include <algorithm>
#include <exception>
#include <iostream>
#include <map>
#include <sstream>
#include <thread>

namespace nesttune {

void EnsembleConfig::validate() const {
    if (standard_trees < 0 || greedy_trees < 0 || total_trees() < 1) {
        throw ValidationError("ensemble needs at least one tree");
    }
    if (measurement_repeats < 1) throw ValidationError("measurement repeats must be >= 1");
    if (workers < 0) throw ValidationError("workers must be >= 0");
    tree.validate();
}

double EnsembleTrace::greedy_decision_fraction() const {
    if (records.empty()) return 0.0;
    int greedy_wins = 0;
    for (const DecisionRecord& r : records) greedy_wins += r.chosen_greedy ? 1 : 0;
    return static_cast<double>(greedy_wins) / static_cast<double>(records.size());
}

std::string EnsembleTrace::to_log() const {
    // Columns: decision, chosen_tree, greedy, stage, action fields, chosen
    // model cost, per-tree candidate costs, measured (tree:ms) pairs.
    std::ostringstream out;
    out.precision(17);
    out << "# decision chosen_tree greedy on_best_path stage tile at par vec unroll cost_ms "
           "candidates measured\n";
    for (const DecisionRecord& r : records) {
        const SchedulingDecision& d = r.chosen_action.decision;
        out << r.decision_index << " " << r.chosen_tree << " " << (r.chosen_greedy ? 1 : 0) << " "
            << (r.winner_on_best_path ? 1 : 0) << " "
            << r.chosen_action.stage << " " << d.tile_outer << "x" << d.tile_inner << " "
            << granularity_name(d.granularity) << " " << (d.parallel_outer ? 1 : 0) << " "
            << d.vectorize_factor << " " << d.unroll_factor << " " << r.chosen_cost_ms << " ";
        for (std::size_t i = 0; i < r.candidate_costs_ms.size(); ++i) {
            out << (i == 0 ? "" : ";") << r.candidate_costs_ms[i];
        }
        out << " ";
        if (r.measured_trees.empty()) {
            out << "-";
        } else {
            for (std::size_t i = 0; i < r.measured_trees.size(); ++i) {
                out << (i == 0 ? "" : ";") << r.measured_trees[i] << ":" << r.measured_ms[i];
            }
        }
        out << "\n";
    }
    out << "# greedy_decision_fraction " << greedy_decision_fraction() << "\n";
    return out.str();
}

int select_next_root(const std::vector<RootCandidate>& candidates, RootSelection mode,
                     const std::function<Cost(const PartialSchedule&)>& measure,
                     DecisionRecord* record) {
    if (candidates.empty()) throw ValidationError("select_next_root with no candidates");

    if (mode == RootSelection::kByCost) {
        int best = 0;
        for (int i = 1; i < static_cast<int>(candidates.size()); ++i) {
            if (candidates[static_cast<std::size_t>(i)].best_cost.ms <
                candidates[static_cast<std::size_t>(best)].best_cost.ms) {
                best = i;
            }
        }
        return best;
    }

    // Deduplicate identical candidate schedules before measuring; greedy
    // trees in particular tend to return the same best state, and the serial
    // measurement budget is the scarce resource here.
    std::map<std::vector<SchedulingDecision>, int> first_with;
    std::vector<int> distinct;
    for (int i = 0; i < static_cast<int>(candidates.size()); ++i) {
        const auto& key = candidates[static_cast<std::size_t>(i)].best_schedule.decisions();
        if (first_with.emplace(key, i).second) distinct.push_back(i);
    }

    int best = -1;
    double best_ms = 0.0;
    std::map<int, double> measured;
    for (int idx : distinct) {
        try {
            const Cost c = measure(candidates[static_cast<std::size_t>(idx)].best_schedule);
            measured[idx] = c.ms;
            if (best < 0 || c.ms < best_ms) {
                best = idx;
                best_ms = c.ms;
            }
        } catch (const RuntimeFailure& e) {
            std::cerr << "ensemble: measurement failed for candidate " << idx << ": " << e.what()
                      << "\n";
        }
    }
    if (best < 0) throw RuntimeFailure("ensemble: every candidate failed to measure");
    if (record != nullptr) {
        for (const auto& [tree, ms] : measured) {
            record->measured_trees.push_back(tree);
            record->measured_ms.push_back(ms);
        }
    }
    return best;
}

EnsembleResult run_ensemble(const Pipeline& p, const EnsembleConfig& cfg,
                            CostEvaluator& evaluator) {
    return run_ensemble(p, cfg, [&evaluator](int) -> CostEvaluator& { return evaluator; });
}

EnsembleResult run_ensemble(const Pipeline& p, const EnsembleConfig& cfg,
                            const EvaluatorProvider& evaluator_for) {
    cfg.validate();
    const int n_trees = cfg.total_trees();

    std::vector<std::unique_ptr<SearchTree>> trees;
    trees.reserve(static_cast<std::size_t>(n_trees));
    for (int i = 0; i < n_trees; ++i) {
        TreeConfig tc = cfg.tree;
        tc.seed = hash_combine(cfg.master_seed, static_cast<std::uint64_t>(i));
        tc.simulation = i < cfg.greedy_trees ? SimulationPolicy::kPureGreedy
                                             : SimulationPolicy::kUniformRandom;
        trees.push_back(std::make_unique<SearchTree>(p, tc, evaluator_for(i)));
    }

    const auto measure = [&](const PartialSchedule& s) {
        return execute_schedule(p, s, cfg.measurement_repeats, cfg.exec).cost;
    };

    EnsembleTrace trace;
    trace.greedy_trees = cfg.greedy_trees;
    trace.total_trees = n_trees;

    PartialSchedule current = initial_state(p);
    std::optional<RootCandidate> final_choice;
    std::optional<double> final_measured_ms;

    int decision_index = 0;
    while (!current.terminal()) {
        // Fork: every tree runs its budget from the shared root. Results land
        // in per-tree slots, so the reduction is identical for any worker
        // count.
        std::vector<std::optional<RootCandidate>> results(static_cast<std::size_t>(n_trees));
        std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n_trees));
        const int workers = cfg.workers > 0 ? std::min(cfg.workers, n_trees) : n_trees;

        auto run_slice = [&](int first_tree) {
            for (int i = first_tree; i < n_trees; i += workers) {
                try {
                    TreeOutcome out = trees[static_cast<std::size_t>(i)]->run_root_decision();
                    if (out.iterations_run == 0) {
                        throw ValidationError("tree budget too small: zero iterations");
                    }
                    results[static_cast<std::size_t>(i)] =
                        RootCandidate{std::move(out.best_schedule), out.best_cost,
                                      out.winner_action, out.iterations_run};
                } catch (...) {
                    errors[static_cast<std::size_t>(i)] = std::current_exception();
                }
            }
        };

        if (workers <= 1) {
            run_slice(0);
        } else {
            std::vector<std::thread> threads;
            threads.reserve(static_cast<std::size_t>(workers - 1));
            for (int w = 1; w < workers; ++w) threads.emplace_back(run_slice, w);
            run_slice(0);
            for (auto& t : threads) t.join();
        }
        for (const auto& err : errors) {
            if (err) std::rethrow_exception(err);
        }

        std::vector<RootCandidate> candidates;
        candidates.reserve(static_cast<std::size_t>(n_trees));
        for (auto& r : results) candidates.push_back(std::move(*r));

        DecisionRecord record;
        record.decision_index = decision_index;
        for (const RootCandidate& c : candidates) {
            record.candidate_costs_ms.push_back(c.best_cost.ms);
            record.iterations_total += c.iterations;
        }

        const int best = select_next_root(candidates, cfg.root_selection, measure, &record);
        const RootCandidate& chosen = candidates[static_cast<std::size_t>(best)];

        record.chosen_tree = best;
        record.chosen_greedy = best < cfg.greedy_trees;
        record.chosen_action = chosen.winner_action;
        record.chosen_cost_ms = chosen.best_cost.ms;
        record.winner_on_best_path =
            chosen.best_schedule.decisions()[current.cursor()] == chosen.winner_action.decision;
        if (cfg.root_selection == RootSelection::kByRealMeasurement) {
            for (std::size_t i = 0; i < record.measured_trees.size(); ++i) {
                if (record.measured_trees[i] == best) final_measured_ms = record.measured_ms[i];
            }
        }

        // All trees adopt the winner's next root.
        current = apply_action(current, chosen.winner_action);
        for (auto& tree : trees) tree->reset_root(current);

        final_choice = chosen;
        trace.records.push_back(std::move(record));
        ++decision_index;
    }

    EnsembleResult out{final_choice->best_schedule, final_choice->best_cost, std::nullopt,
                       std::move(trace)};
    if (final_measured_ms) out.measured = Cost{*final_measured_ms};
    return out;
}

}  // namespace nesttune
