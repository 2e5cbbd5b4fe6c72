#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nesttune/pipeline.hpp"
#include "nesttune/rng.hpp"

namespace nesttune {

// Where a stage's values are computed relative to its consumers.
//   kRoot          - fully materialized before consumers run (always legal)
//   kAtConsumerTile- recomputed per consumer tile (needs >= 1 consumer)
//   kInlined       - recomputed per use (needs exactly one consumer)
enum class Granularity : std::uint8_t { kRoot = 0, kAtConsumerTile = 1, kInlined = 2 };

const char* granularity_name(Granularity g);

// One scheduling decision for one stage. Field order defines the canonical
// (lexicographic) action order used everywhere search results must be
// reproducible.
struct SchedulingDecision {
    int tile_outer = 0;
    int tile_inner = 0;
    Granularity granularity = Granularity::kRoot;
    bool parallel_outer = false;
    int vectorize_factor = 1;
    int unroll_factor = 1;

    auto operator<=>(const SchedulingDecision&) const = default;
};

// The decision to make for the stage currently at the cursor.
struct Action {
    int stage = -1;  // stage index in the pipeline
    SchedulingDecision decision;

    auto operator<=>(const Action&) const = default;
};

// MDP state: decisions committed so far, in schedule order (output stage
// first, then backward toward the inputs). Immutable value type.
class PartialSchedule {
  public:
    explicit PartialSchedule(const Pipeline& p) : pipeline_(&p) {}

    static PartialSchedule with_decisions(const Pipeline& p,
                                          std::vector<SchedulingDecision> decisions);

    const Pipeline& pipeline() const { return *pipeline_; }
    std::size_t cursor() const { return decisions_.size(); }
    bool terminal() const {
        return decisions_.size() == static_cast<std::size_t>(pipeline_->stage_count());
    }
    // Stage index at the cursor; throws when terminal.
    int cursor_stage() const;

    // Decisions aligned with pipeline().schedule_order().
    const std::vector<SchedulingDecision>& decisions() const { return decisions_; }
    // Decision for a stage index; nullptr while undecided.
    const SchedulingDecision* decision_for(int stage) const;

    bool operator==(const PartialSchedule& other) const {
        return *pipeline_ == *other.pipeline_ && decisions_ == other.decisions_;
    }

  private:
    friend PartialSchedule apply_action(const PartialSchedule&, const Action&);

    const Pipeline* pipeline_;
    std::vector<SchedulingDecision> decisions_;
};

PartialSchedule initial_state(const Pipeline& p);

// The full set of legal decisions for one stage, addressable by ordinal in
// canonical order without materializing the set. Tile candidates are the
// power-of-two divisors of each extent; vectorize in {1,4,8} dividing
// tile_inner; unroll in {1,2,4} with vectorize*unroll dividing tile_inner.
class ActionSpace {
  public:
    ActionSpace(const Pipeline& p, int stage);

    std::uint64_t size() const { return total_; }
    // Decision at a canonical-order ordinal in [0, size()).
    SchedulingDecision at(std::uint64_t ordinal) const;
    bool legal(const SchedulingDecision& d) const;

    const std::vector<int>& outer_tiles() const { return outer_tiles_; }
    const std::vector<int>& inner_tiles() const { return inner_tiles_; }
    int granularity_count() const { return granularity_count_; }

  private:
    std::uint64_t block_for_inner(std::size_t inner_idx) const;

    std::vector<int> outer_tiles_;
    std::vector<int> inner_tiles_;
    std::vector<std::uint64_t> pair_counts_;  // legal (vec, unroll) pairs per inner tile
    int granularity_count_ = 1;               // prefix of {root, at_consumer_tile, inlined}
    std::uint64_t per_outer_ = 0;
    std::uint64_t total_ = 0;
};

// Complete, duplicate-free list of legal actions for the cursor stage, in
// canonical order. Throws when s is terminal.
std::vector<Action> enumerate_actions(const PartialSchedule& s);

// Uniformly random legal action for the cursor stage, drawn by ordinal
// without materializing the list. Distribution equals uniform over
// enumerate_actions(s).
Action sample_action(const PartialSchedule& s, Rng& rng);

// Returns a new state with the action recorded and the cursor advanced.
// Throws ValidationError when the action is illegal for the cursor stage.
PartialSchedule apply_action(const PartialSchedule& s, const Action& a);

// Canonical default decision: tile = extent, root placement, no
// parallelism, vectorization, or unrolling.
SchedulingDecision default_decision(const Stage& stage);

// Fills every undecided stage with the default decision.
PartialSchedule default_completed(const PartialSchedule& s);

// Completes a prefix by sampling uniformly random actions to a terminal state.
PartialSchedule random_completed(const PartialSchedule& s, Rng& rng);

// Product of per-stage action counts, saturating at cap+1 to avoid overflow.
std::uint64_t schedule_space_size(const Pipeline& p, std::uint64_t cap);

// Yields every terminal schedule exactly once, in canonical order (first
// scheduled stage is the outermost digit). Throws ValidationError when the
// space exceeds cap.
class ScheduleEnumerator {
  public:
    static constexpr std::uint64_t kDefaultCap = 1'000'000;

    explicit ScheduleEnumerator(const Pipeline& p, std::uint64_t cap = kDefaultCap);

    std::uint64_t space_size() const { return space_; }
    std::optional<PartialSchedule> next();

  private:
    const Pipeline* pipeline_;
    std::vector<ActionSpace> spaces_;     // in schedule order
    std::vector<std::uint64_t> counter_;  // odometer, most-significant digit first
    std::uint64_t space_ = 0;
    bool done_ = false;
};

// Schedule (de)serialization:
//   decide <stage_id> tile=<o>x<i> at=<root|consumer|inline> par=<0|1> vec=<f> unroll=<f>
// Lines appear in schedule order. parse_schedule validates every decision.
std::string schedule_to_text(const PartialSchedule& s);
PartialSchedule parse_schedule(const Pipeline& p, const std::string& text);
PartialSchedule load_schedule_file(const Pipeline& p, const std::string& path);

}  // namespace nesttune
