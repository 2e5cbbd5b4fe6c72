#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "nesttune/cost.hpp"
#include "nesttune/interp.hpp"
#include "nesttune/mcts.hpp"

namespace nesttune {

enum class RootSelection { kByCost, kByRealMeasurement };

// N trees searching the same root in parallel. Greedy-simulation trees come
// first (indices [0, greedy_trees)); tree i draws its seed from
// hash(master_seed, i), so results do not depend on the worker count.
struct EnsembleConfig {
    int standard_trees = 15;
    int greedy_trees = 1;
    TreeConfig tree;  // shared base; seed is derived per tree
    RootSelection root_selection = RootSelection::kByCost;
    int measurement_repeats = 3;
    std::uint64_t master_seed = 0;
    int workers = 0;  // 0 = one worker per tree
    ExecutionConfig exec;

    int total_trees() const { return standard_trees + greedy_trees; }
    void validate() const;
};

// What one tree reported at a synchronization barrier.
struct RootCandidate {
    PartialSchedule best_schedule;  // terminal
    Cost best_cost;                 // evaluator cost of best_schedule
    Action winner_action;
    std::uint64_t iterations = 0;
};

struct DecisionRecord {
    int decision_index = 0;
    std::vector<double> candidate_costs_ms;  // per tree
    std::uint64_t iterations_total = 0;      // summed over trees
    int chosen_tree = -1;
    bool chosen_greedy = false;
    Action chosen_action;
    double chosen_cost_ms = 0.0;
    // Whether the adopted action is the first undecided step of the chosen
    // candidate's best schedule. When it is, the next barrier's chosen cost
    // cannot regress under keep-subtree re-rooting.
    bool winner_on_best_path = false;
    // by-real-measurement bookkeeping: which trees' candidates were measured
    // (first tree per distinct schedule) and what they measured.
    std::vector<int> measured_trees;
    std::vector<double> measured_ms;
};

struct EnsembleTrace {
    std::vector<DecisionRecord> records;
    int greedy_trees = 0;
    int total_trees = 0;

    // Fraction of root decisions won by greedy-simulation trees.
    double greedy_decision_fraction() const;
    // Line-per-decision log; no timing fields, so by-cost runs are
    // byte-identical for a fixed master seed.
    std::string to_log() const;
};

struct EnsembleResult {
    PartialSchedule schedule;  // terminal
    Cost model_cost;           // tree-evaluator cost of the final schedule
    std::optional<Cost> measured;  // set when root selection measured the winner
    EnsembleTrace trace;
};

// Selects the winning candidate index. By cost: argmin of candidate costs.
// By real measurement: deduplicates identical schedules, measures each
// distinct one serially via `measure`, argmin of measured times. Ties break
// toward the lowest tree index. Measurement failures exclude the candidate
// with a warning; all-failed is an error. `record`, when given, receives the
// measurement bookkeeping.
int select_next_root(const std::vector<RootCandidate>& candidates, RootSelection mode,
                     const std::function<Cost(const PartialSchedule&)>& measure,
                     DecisionRecord* record = nullptr);

// Runs the full ensemble loop: every root decision runs all trees for their
// budget, picks the winning next root, re-roots every tree there, and
// repeats until the schedule is complete.
//
// The provider form hands each tree its own evaluator; stateful evaluators
// (noise) must not be shared across concurrently running trees.
using EvaluatorProvider = std::function<CostEvaluator&(int tree_index)>;
EnsembleResult run_ensemble(const Pipeline& p, const EnsembleConfig& cfg,
                            const EvaluatorProvider& evaluator_for);
EnsembleResult run_ensemble(const Pipeline& p, const EnsembleConfig& cfg,
                            CostEvaluator& evaluator);

}  // namespace nesttune
