#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <limits>
#include <set>
#include <thread>

#include "nesttune/fixtures.hpp"
#include "nesttune/interp.hpp"
#include "nesttune/mdp.hpp"
#include "nesttune/rng.hpp"
#include "test_support.hpp"

using namespace nesttune;

namespace {

PartialSchedule schedule_with(const Pipeline& p,
                              const std::vector<SchedulingDecision>& decisions) {
    PartialSchedule s = initial_state(p);
    for (const SchedulingDecision& d : decisions) {
        s = apply_action(s, Action{s.cursor_stage(), d});
    }
    return s;
}

// A pipeline sized so one run takes a stable, measurable time; sub-ms runs
// pick up too much scheduler noise for a tight repeatability bound.
Pipeline timing_pipeline() {
    return Pipeline::build("timing", {Stage{"s", 128, 128, 64, 4}}, {}, 0);
}

}  // namespace

TEST_CASE("execute_schedule validates its inputs") {
    const Pipeline p = fixture_single();
    const PartialSchedule done = default_completed(initial_state(p));
    CHECK_THROWS_AS(execute_schedule(p, done, 0), ValidationError);
    CHECK_THROWS_AS(execute_schedule(p, initial_state(p), 3), ValidationError);
    const Pipeline other = fixture_chain2();
    CHECK_THROWS_AS(execute_schedule(other, done, 3), ValidationError);
}

TEST_CASE("repeated measurement stays within the jitter tolerance") {
    const Pipeline p = timing_pipeline();
    const PartialSchedule s = default_completed(initial_state(p));
    // A transient load spike can spoil one pairing; consistently unstable
    // timing fails all three attempts.
    double best_ratio = std::numeric_limits<double>::infinity();
    for (int attempt = 0; attempt < 3 && best_ratio >= 1.2; ++attempt) {
        const double a = execute_schedule(p, s, 5).cost.ms;
        const double b = execute_schedule(p, s, 5).cost.ms;
        REQUIRE(a > 0.0);
        REQUIRE(b > 0.0);
        best_ratio = std::min(best_ratio, a > b ? a / b : b / a);
    }
    CHECK(best_ratio < 1.2);  // documented default tolerance: 20% relative
}

TEST_CASE("parallel + vectorized beats the default on the compute fixture") {
    if (std::thread::hardware_concurrency() < 2) return;  // needs real cores
    const Pipeline p = fixture_compute();
    const PartialSchedule dflt = default_completed(initial_state(p));
    const PartialSchedule opt = schedule_with(
        p, {SchedulingDecision{32, 256, Granularity::kRoot, true, 8, 4}});
    const double t_default = execute_schedule(p, dflt, 3).cost.ms;
    const double t_opt = execute_schedule(p, opt, 3).cost.ms;
    CHECK(t_opt < t_default);
}

TEST_CASE("buffer footprints beyond the memory cap are rejected") {
    const Pipeline p = fixture_compute();  // 256*256*4 bytes of output
    const PartialSchedule s = default_completed(initial_state(p));
    ExecutionConfig cfg;
    cfg.memory_cap_bytes = 1024;
    CHECK_THROWS_AS(execute_schedule(p, s, 1, cfg), RuntimeFailure);
}

TEST_CASE("every schedule of a pipeline computes the same values") {
    // The interpreter executes the same function whatever the schedule;
    // granularity, tiling, batching, and threading must not change a single
    // output bit. This checks the materialized/recomputed/inlined read paths
    // against each other.
    for (const Pipeline& p : {fixture_chain2(), fixture_diamond()}) {
        const double reference =
            execute_schedule(p, default_completed(initial_state(p)), 1).checksum;
        Rng rng(17);
        std::set<std::string> seen;
        for (int trial = 0; trial < 40; ++trial) {
            const PartialSchedule s = random_completed(initial_state(p), rng);
            seen.insert(schedule_to_text(s));
            CHECK(execute_schedule(p, s, 1).checksum == reference);
        }
        CHECK(seen.size() > 30);  // actually exercised distinct schedules
    }
}

TEST_CASE("granularity chains and parallel tiles keep values identical") {
    const Pipeline p = fixture_chain5();
    const double reference =
        execute_schedule(p, default_completed(initial_state(p)), 1).checksum;

    // inline chain feeding an at-tile stage, parallel consumer at root
    const PartialSchedule mixed = schedule_with(
        p, {SchedulingDecision{8, 64, Granularity::kRoot, true, 8, 2},     // s4 (output)
            SchedulingDecision{16, 16, Granularity::kAtConsumerTile, false, 4, 1},  // s3
            SchedulingDecision{64, 64, Granularity::kInlined, false, 1, 1},         // s2
            SchedulingDecision{32, 32, Granularity::kInlined, false, 1, 1},         // s1
            SchedulingDecision{16, 64, Granularity::kAtConsumerTile, false, 8, 4}});  // s0
    CHECK(execute_schedule(p, mixed, 1).checksum == reference);

    // everything at consumer tile
    const PartialSchedule tiled = schedule_with(
        p, {SchedulingDecision{16, 16, Granularity::kRoot, false, 1, 2},
            SchedulingDecision{8, 8, Granularity::kAtConsumerTile, false, 1, 1},
            SchedulingDecision{4, 32, Granularity::kAtConsumerTile, false, 4, 2},
            SchedulingDecision{64, 8, Granularity::kAtConsumerTile, false, 8, 1},
            SchedulingDecision{2, 4, Granularity::kAtConsumerTile, false, 1, 4}});
    CHECK(execute_schedule(p, tiled, 1).checksum == reference);
}

TEST_CASE("measurement result reports the requested repeats") {
    const Pipeline p = fixture_single();
    const PartialSchedule s = default_completed(initial_state(p));
    const ExecutionResult r = execute_schedule(p, s, 4);
    CHECK(r.repeats == 4);
    CHECK(r.cost.ms > 0.0);
}

TEST_CASE("measured evaluator is a measurement and counts calls") {
    const Pipeline p = fixture_single();
    const PartialSchedule s = default_completed(initial_state(p));
    MeasuredCostEvaluator ev(2);
    CHECK(ev.is_measurement());
    CHECK(ev.evaluate(s).ms > 0.0);
    CHECK(ev.call_count() == 1);
    CHECK_THROWS_AS(MeasuredCostEvaluator(0), ValidationError);
}
