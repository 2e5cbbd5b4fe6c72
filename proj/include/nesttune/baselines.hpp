#pragma once

#include <cstdint>
#include <functional>

#include "nesttune/cost.hpp"
#include "nesttune/mdp.hpp"

namespace nesttune {

struct BeamConfig {
    int beam_size = 32;
    int passes = 5;
    std::uint64_t seed = 0;
    int parallel_restarts = 1;

    void validate() const;
};

// Named preset from the comparison suite: beam of 32, five passes, sixteen
// restarts.
BeamConfig beam_halide_preset(std::uint64_t seed);

struct SearchResult {
    PartialSchedule schedule;  // terminal
    Cost cost;
    std::uint64_t evaluations = 0;  // evaluator/measurement calls made
    std::uint64_t candidates = 0;   // terminal candidates considered
};

// Breadth-first search over stages keeping the top-k partial schedules per
// depth. Partial states are scored by evaluating their default-completed
// schedules; ties break by a seeded hash so that passes differ only in
// tie-breaking.
SearchResult beam_search(const Pipeline& p, const BeamConfig& cfg, CostEvaluator& evaluator);

// Beam of one, implemented directly; cross-checks beam_search's k=1 path.
SearchResult greedy_search(const Pipeline& p, CostEvaluator& evaluator, std::uint64_t seed);

// Samples uniform-random terminal schedules and keeps the best measured one.
// Never consults a cost model. Measurement failures skip the candidate;
// at least one candidate always runs. max_candidates = 0 means unlimited.
SearchResult random_search(const Pipeline& p, double budget_seconds,
                           const std::function<Cost(const PartialSchedule&)>& measure,
                           std::uint64_t seed, std::uint64_t max_candidates = 0);

// Exact argmin of the evaluator over the whole schedule space; ties keep the
// first schedule in canonical order.
SearchResult brute_force(const Pipeline& p, CostEvaluator& evaluator,
                         std::uint64_t cap = 1'000'000);

}  // namespace nesttune
