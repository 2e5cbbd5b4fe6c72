#pragma once

#include <cstdint>

#include "nesttune/cost.hpp"
#include "nesttune/mdp.hpp"

namespace nesttune {

// Knobs for real execution. memory_cap_bytes bounds the total buffer
// allocation of one run; max_threads bounds the worker pool (0 = hardware
// concurrency).
struct ExecutionConfig {
    int max_threads = 0;
    std::uint64_t memory_cap_bytes = 1ull << 30;
};

struct ExecutionResult {
    Cost cost;        // minimum wall-clock time over all repeats
    double checksum;  // fold of the output buffer; schedule-invariant
    int repeats = 0;
};

// Interprets the scheduled loop nests on synthetic data and returns the
// minimum wall-clock time over `repeats` runs. Buffers are materialized per
// compute granularity, parallel_outer runs outer tiles on a worker pool,
// and vectorize/unroll batch the inner loop.
//
// Callers must not run two measurements concurrently; the contract is
// exclusive machine access.
ExecutionResult execute_schedule(const Pipeline& p, const PartialSchedule& schedule, int repeats,
                                 const ExecutionConfig& cfg = {});

// CostEvaluator backed by real execution.
class MeasuredCostEvaluator : public CostEvaluator {
  public:
    explicit MeasuredCostEvaluator(int repeats = 3, ExecutionConfig cfg = {})
        : repeats_(repeats), cfg_(cfg) {
        if (repeats_ < 1) throw ValidationError("measurement repeats must be >= 1");
    }

    bool is_measurement() const override { return true; }
    int repeats() const { return repeats_; }

  protected:
    Cost do_evaluate(const PartialSchedule& s) override {
        return execute_schedule(s.pipeline(), s, repeats_, cfg_).cost;
    }

  private:
    int repeats_;
    ExecutionConfig cfg_;
};

}  // namespace nesttune
