#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "nesttune/baselines.hpp"
#include "nesttune/ensemble.hpp"
#include "nesttune/fixtures.hpp"
#include "test_support.hpp"

using namespace nesttune;

namespace {

EnsembleConfig small_config(int standard, int greedy, std::uint64_t master_seed,
                            std::uint64_t iterations) {
    EnsembleConfig cfg;
    cfg.standard_trees = standard;
    cfg.greedy_trees = greedy;
    cfg.tree.budget = Budget::by_iterations(iterations);
    cfg.master_seed = master_seed;
    return cfg;
}

RootCandidate candidate(const Pipeline& p, double cost_ms, Rng& rng) {
    PartialSchedule s = random_completed(initial_state(p), rng);
    const Action first{p.output_stage(), s.decisions().front()};
    return RootCandidate{std::move(s), Cost{cost_ms}, first, 1};
}

}  // namespace

TEST_CASE("an ensemble of one standard tree replays a single-tree chain") {
    const Pipeline p = fixture_chain2();
    AnalyticalCostModel model;
    const EnsembleConfig cfg = small_config(1, 0, 99, 120);
    const EnsembleResult ensemble = run_ensemble(p, cfg, model);

    // manual chain with the same derived seed
    AnalyticalCostModel model2;
    TreeConfig tc = cfg.tree;
    tc.seed = hash_combine(cfg.master_seed, 0);
    SearchTree tree(p, tc, model2);
    PartialSchedule current = initial_state(p);
    PartialSchedule last_best = current;
    while (!current.terminal()) {
        const TreeOutcome out = tree.run_root_decision();
        last_best = out.best_schedule;
        current = apply_action(current, out.winner_action);
        tree.reset_root(current);
    }
    CHECK(ensemble.schedule == last_best);
    CHECK(ensemble.trace.records.size() == static_cast<std::size_t>(p.stage_count()));
}

TEST_CASE("sixteen trees with generous budgets reach the oracle on the small fixture") {
    const Pipeline p = fixture_single();
    AnalyticalCostModel model;
    const SearchResult oracle = brute_force(p, model);
    const EnsembleResult r = run_ensemble(p, small_config(15, 1, 5, 10 * 104), model);
    CHECK(r.model_cost.ms == oracle.cost.ms);
    CHECK(r.schedule.decisions() == oracle.schedule.decisions());
}

TEST_CASE("by-cost ensembles are byte-deterministic across runs and worker counts") {
    const Pipeline p = fixture_chain2();
    AnalyticalCostModel model;
    std::string reference;
    for (int workers : {1, 4, 16}) {
        for (int rep = 0; rep < 2; ++rep) {
            EnsembleConfig cfg = small_config(7, 1, 1234, 60);
            cfg.workers = workers;
            const EnsembleResult r = run_ensemble(p, cfg, model);
            const std::string log = r.trace.to_log();
            if (reference.empty()) {
                reference = log;
            } else {
                CHECK(log == reference);
            }
        }
    }
}

TEST_CASE("the final cost is the minimum over the last barrier's candidates") {
    const Pipeline p = fixture_chain2();
    AnalyticalCostModel model;
    const EnsembleResult r = run_ensemble(p, small_config(5, 1, 3, 80), model);
    const DecisionRecord& last = r.trace.records.back();
    const double min_candidate =
        *std::min_element(last.candidate_costs_ms.begin(), last.candidate_costs_ms.end());
    CHECK(r.model_cost.ms == min_candidate);
    for (double c : last.candidate_costs_ms) CHECK(r.model_cost.ms <= c);
}

TEST_CASE("select_next_root picks the cost argmin with lowest-index ties") {
    const Pipeline p = fixture_single();
    Rng rng(1);
    std::vector<RootCandidate> cands;
    cands.push_back(candidate(p, 3.0, rng));
    cands.push_back(candidate(p, 2.0, rng));
    cands.push_back(candidate(p, 5.0, rng));
    const auto no_measure = [](const PartialSchedule&) -> Cost {
        throw RuntimeFailure("must not measure in by-cost mode");
    };
    CHECK(select_next_root(cands, RootSelection::kByCost, no_measure) == 1);

    cands[2].best_cost = Cost{2.0};  // tie with index 1
    CHECK(select_next_root(cands, RootSelection::kByCost, no_measure) == 1);
}

TEST_CASE("by-real-measurement deduplicates identical candidate schedules") {
    const Pipeline p = fixture_single();
    Rng rng(2);
    const RootCandidate proto = candidate(p, 1.0, rng);
    std::vector<RootCandidate> cands(16, proto);  // all identical

    int measured = 0;
    const auto measure = [&measured](const PartialSchedule&) {
        ++measured;
        return Cost{4.2};
    };
    DecisionRecord record;
    const int chosen =
        select_next_root(cands, RootSelection::kByRealMeasurement, measure, &record);
    CHECK(measured == 1);
    CHECK(chosen == 0);
    CHECK(record.measured_trees == std::vector<int>{0});
}

TEST_CASE("by-real-measurement overrides the model's preference") {
    const Pipeline p = fixture_single();
    Rng rng(3);
    RootCandidate model_favorite = candidate(p, 1.0, rng);   // model says best
    RootCandidate actually_fast = candidate(p, 10.0, rng);   // model says worst
    REQUIRE(model_favorite.best_schedule.decisions() != actually_fast.best_schedule.decisions());
    std::vector<RootCandidate> cands = {model_favorite, actually_fast};

    const auto measure = [&](const PartialSchedule& s) {
        return Cost{s == cands[0].best_schedule ? 9.0 : 2.0};
    };
    CHECK(select_next_root(cands, RootSelection::kByCost, measure) == 0);
    CHECK(select_next_root(cands, RootSelection::kByRealMeasurement, measure) == 1);
}

TEST_CASE("measurement failures exclude candidates; all-failed is an error") {
    const Pipeline p = fixture_single();
    Rng rng(4);
    std::vector<RootCandidate> cands;
    cands.push_back(candidate(p, 1.0, rng));
    cands.push_back(candidate(p, 2.0, rng));
    REQUIRE(cands[0].best_schedule.decisions() != cands[1].best_schedule.decisions());

    const auto first_fails = [&](const PartialSchedule& s) -> Cost {
        if (s == cands[0].best_schedule) throw RuntimeFailure("boom");
        return Cost{1.0};
    };
    CHECK(select_next_root(cands, RootSelection::kByRealMeasurement, first_fails) == 1);

    const auto all_fail = [](const PartialSchedule&) -> Cost {
        throw RuntimeFailure("boom");
    };
    CHECK_THROWS_AS(select_next_root(cands, RootSelection::kByRealMeasurement, all_fail),
                    RuntimeFailure);
}

TEST_CASE("real-measurement root selection wins on the divergent fixture") {
    auto [p, model_cfg] = build_divergent_fixture();
    AnalyticalCostModel model(model_cfg);
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        EnsembleConfig by_cost = small_config(7, 1, seed, 150);
        EnsembleConfig by_real = by_cost;
        by_real.root_selection = RootSelection::kByRealMeasurement;

        const EnsembleResult cost_run = run_ensemble(p, by_cost, model);
        const EnsembleResult real_run = run_ensemble(p, by_real, model);
        REQUIRE(real_run.measured.has_value());
        const double cost_measured = execute_schedule(p, cost_run.schedule, 3).cost.ms;
        CHECK(real_run.measured->ms <= cost_measured);
    }
}

TEST_CASE("the trace reports the greedy decision fraction") {
    auto [p, model_cfg] = build_deceptive_fixture();
    AnalyticalCostModel model(model_cfg);

    EnsembleConfig none = small_config(4, 0, 7, 60);
    const EnsembleResult r0 = run_ensemble(p, none, model);
    CHECK(r0.trace.greedy_decision_fraction() == 0.0);

    EnsembleConfig with_greedy = small_config(4, 1, 7, 250);
    const EnsembleResult r1 = run_ensemble(p, with_greedy, model);
    CHECK(r1.trace.greedy_decision_fraction() > 0.0);
    CHECK(r1.trace.greedy_decision_fraction() <= 1.0);
    CHECK(r1.trace.to_log().find("greedy_decision_fraction") != std::string::npos);
}

TEST_CASE("keep-subtree re-rooting cannot regress along the best path") {
    // When the adopted action is the first step of the chosen best schedule,
    // the kept subtree (plus the carried best) still contains that schedule,
    // so the next barrier's chosen cost cannot be worse. Off-path decisions
    // (the winner rule walked away from the recorded best) are recorded in
    // the trace rather than asserted.
    const Pipeline p = fixture_diamond();
    AnalyticalCostModel model;
    int on_path_checks = 0;
    for (std::uint64_t seed : {7ull, 11ull, 23ull}) {
        EnsembleConfig cfg = small_config(3, 1, seed, 50);
        cfg.tree.reroot = RerootMode::kKeepSubtree;
        const EnsembleResult r = run_ensemble(p, cfg, model);
        REQUIRE(r.trace.records.size() == 4);
        for (std::size_t i = 1; i < r.trace.records.size(); ++i) {
            if (r.trace.records[i - 1].winner_on_best_path) {
                CHECK(r.trace.records[i].chosen_cost_ms <=
                      r.trace.records[i - 1].chosen_cost_ms);
                ++on_path_checks;
            }
        }
        CHECK(r.trace.to_log().find("on_best_path") != std::string::npos);
    }
    CHECK(on_path_checks > 0);
}

TEST_CASE("ensemble configuration is validated") {
    const Pipeline p = fixture_single();
    AnalyticalCostModel model;
    EnsembleConfig cfg = small_config(0, 0, 1, 10);
    CHECK_THROWS_AS(run_ensemble(p, cfg, model), ValidationError);
    cfg = small_config(1, 0, 1, 10);
    cfg.measurement_repeats = 0;
    CHECK_THROWS_AS(run_ensemble(p, cfg, model), ValidationError);
}
