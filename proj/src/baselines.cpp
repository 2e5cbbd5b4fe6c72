#include "nesttune/baselines.hpp"

#include <algorithm>
#include <chrono>
#include <iostream>

#include "nesttune/rng.hpp"

namespace nesttune {

void BeamConfig::validate() const {
    if (beam_size < 1) throw ValidationError("beam size must be >= 1");
    if (passes < 1) throw ValidationError("passes must be >= 1");
    if (parallel_restarts < 1) throw ValidationError("parallel_restarts must be >= 1");
}

BeamConfig beam_halide_preset(std::uint64_t seed) {
    return BeamConfig{32, 5, seed, 16};
}

namespace {

std::uint64_t decisions_digest(const PartialSchedule& s) {
    std::uint64_t h = 0x5eed;
    for (const SchedulingDecision& d : s.decisions()) {
        h = hash_combine(h, static_cast<std::uint64_t>(d.tile_outer));
        h = hash_combine(h, static_cast<std::uint64_t>(d.tile_inner));
        h = hash_combine(h, static_cast<std::uint64_t>(d.granularity));
        h = hash_combine(h, d.parallel_outer ? 1 : 0);
        h = hash_combine(h, static_cast<std::uint64_t>(d.vectorize_factor));
        h = hash_combine(h, static_cast<std::uint64_t>(d.unroll_factor));
    }
    return h;
}

struct ScoredState {
    PartialSchedule state;
    double score_ms;
    std::uint64_t tie_key;

    bool operator<(const ScoredState& other) const {
        if (score_ms != other.score_ms) return score_ms < other.score_ms;
        if (tie_key != other.tie_key) return tie_key < other.tie_key;
        return state.decisions() < other.state.decisions();
    }
};

// One full beam pass. Partial states are ranked by the evaluator applied to
// their default completion; equal scores are ordered by a pass-seeded hash.
SearchResult beam_pass(const Pipeline& p, int k, std::uint64_t pass_seed,
                       CostEvaluator& evaluator) {
    std::vector<PartialSchedule> beam;
    beam.push_back(initial_state(p));
    std::uint64_t evaluations = 0;
    std::uint64_t candidates_seen = 0;

    std::vector<ScoredState> candidates;
    for (int depth = 0; depth < p.stage_count(); ++depth) {
        candidates.clear();
        for (const PartialSchedule& s : beam) {
            for (const Action& a : enumerate_actions(s)) {
                PartialSchedule child = apply_action(s, a);
                const Cost c = evaluator.evaluate(default_completed(child));
                ++evaluations;
                const std::uint64_t tie = hash_combine(pass_seed, decisions_digest(child));
                candidates.push_back({std::move(child), c.ms, tie});
            }
        }
        candidates_seen += candidates.size();
        const std::size_t keep = std::min<std::size_t>(static_cast<std::size_t>(k),
                                                       candidates.size());
        std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep),
                          candidates.end());
        beam.clear();
        for (std::size_t i = 0; i < keep; ++i) beam.push_back(std::move(candidates[i].state));
        // The kept states stay sorted, so beam[0] at terminal depth is the
        // pass winner and its score was just computed.
        if (depth + 1 == p.stage_count()) {
            return SearchResult{beam[0], Cost{candidates[0].score_ms}, evaluations,
                                candidates_seen};
        }
    }
    throw ValidationError("beam pass on an empty pipeline");
}

}  // namespace

SearchResult beam_search(const Pipeline& p, const BeamConfig& cfg, CostEvaluator& evaluator) {
    cfg.validate();
    std::optional<SearchResult> best;
    std::uint64_t evaluations = 0;
    std::uint64_t candidates = 0;
    for (int restart = 0; restart < cfg.parallel_restarts; ++restart) {
        for (int pass = 0; pass < cfg.passes; ++pass) {
            const std::uint64_t pass_seed =
                hash_combine(hash_combine(cfg.seed, static_cast<std::uint64_t>(restart)),
                             static_cast<std::uint64_t>(pass));
            SearchResult r = beam_pass(p, cfg.beam_size, pass_seed, evaluator);
            evaluations += r.evaluations;
            candidates += r.candidates;
            if (!best || r.cost.ms < best->cost.ms) best = std::move(r);
        }
    }
    best->evaluations = evaluations;
    best->candidates = candidates;
    return *best;
}

SearchResult greedy_search(const Pipeline& p, CostEvaluator& evaluator, std::uint64_t seed) {
    const std::uint64_t pass_seed = hash_combine(hash_combine(seed, 0ULL), 0ULL);
    PartialSchedule state = initial_state(p);
    std::uint64_t evaluations = 0;
    std::uint64_t candidates = 0;
    double final_score = 0.0;

    while (!state.terminal()) {
        std::optional<ScoredState> best;
        for (const Action& a : enumerate_actions(state)) {
            PartialSchedule child = apply_action(state, a);
            const Cost c = evaluator.evaluate(default_completed(child));
            ++evaluations;
            ++candidates;
            const std::uint64_t tie = hash_combine(pass_seed, decisions_digest(child));
            ScoredState scored{std::move(child), c.ms, tie};
            if (!best || scored < *best) best = std::move(scored);
        }
        final_score = best->score_ms;
        state = std::move(best->state);
    }
    return SearchResult{std::move(state), Cost{final_score}, evaluations, candidates};
}

SearchResult random_search(const Pipeline& p, double budget_seconds,
                           const std::function<Cost(const PartialSchedule&)>& measure,
                           std::uint64_t seed, std::uint64_t max_candidates) {
    if (budget_seconds <= 0.0) throw ValidationError("random search budget must be > 0");
    Rng rng(hash_combine(seed, 0xa11d));
    std::optional<SearchResult> best;
    std::uint64_t tried = 0;
    std::uint64_t measured_ok = 0;
    const auto t0 = std::chrono::steady_clock::now();

    do {
        PartialSchedule candidate = random_completed(initial_state(p), rng);
        ++tried;
        try {
            const Cost c = measure(candidate);
            ++measured_ok;
            if (!best || c.ms < best->cost.ms) {
                best = SearchResult{std::move(candidate), c, 0, 0};
            }
        } catch (const RuntimeFailure& e) {
            std::cerr << "random_search: skipping candidate: " << e.what() << "\n";
        }
        if (max_candidates > 0 && tried >= max_candidates) break;
    } while (std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() <
             budget_seconds);

    if (!best) throw RuntimeFailure("random search: every candidate failed to measure");
    best->evaluations = measured_ok;
    best->candidates = tried;
    return *best;
}

SearchResult brute_force(const Pipeline& p, CostEvaluator& evaluator, std::uint64_t cap) {
    ScheduleEnumerator en(p, cap);
    std::optional<SearchResult> best;
    std::uint64_t evaluations = 0;
    while (auto s = en.next()) {
        const Cost c = evaluator.evaluate(*s);
        ++evaluations;
        if (!best || c.ms < best->cost.ms) best = SearchResult{std::move(*s), c, 0, 0};
    }
    best->evaluations = evaluations;
    best->candidates = evaluations;
    return *best;
}

}  // namespace nesttune
