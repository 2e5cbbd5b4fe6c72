#pragma once

#include <utility>

#include "nesttune/cost.hpp"
#include "nesttune/pipeline.hpp"

namespace nesttune {

// The shipped pipeline suite. Each builder returns the same pipeline as the
// matching file under bench/.

// 1 stage, 8x8: small enough to enumerate every schedule (104 of them).
Pipeline fixture_single();

// 2 stages, 8x8: oracle-tractable (32448 schedules).
Pipeline fixture_chain2();

// 5-stage chain of 64x64 stages; far beyond the enumeration cap.
Pipeline fixture_chain5();

// Diamond DAG: the fan-out stage has two consumers, so inlining it is
// illegal.
Pipeline fixture_diamond();

// Single compute-bound 256x256 stage; parallel + vectorized schedules beat
// the default by a wide margin in real execution.
Pipeline fixture_compute();

// Pipeline plus model constants where the output stage's locally best
// decision (large tiles, scored on default completions) leads away from the
// global optimum: the memory-heavy producer only earns its consumer-tile
// discount when the output picks small tiles, and enough large-tile
// decisions rank above every small-tile one to flush a beam of 32.
// Verified at construction: greedy and beam(k=32) land strictly above the
// brute-force optimum. Throws when a constant change breaks the property.
std::pair<Pipeline, CostModelConfig> build_deceptive_fixture();

// Pipeline plus model constants whose cost-model argmin differs from the
// measured argmin: the model prices parallel task launch at almost nothing,
// while a real worker-pool dispatch dwarfs this stage's tiny kernel.
std::pair<Pipeline, CostModelConfig> build_divergent_fixture();

}  // namespace nesttune
