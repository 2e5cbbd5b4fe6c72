#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <string>

#include "nesttune/mdp.hpp"
#include "nesttune/rng.hpp"

namespace nesttune {

// Estimated or measured execution time in milliseconds. Always finite and
// strictly positive.
struct Cost {
    double ms = 0.0;

    auto operator<=>(const Cost&) const = default;
};

// Constants of the analytical cost model. Loaded from a key=value file;
// every key is optional and falls back to the documented default.
struct CostModelConfig {
    double compute_ns_per_op = 1.0;
    double mem_ns_per_byte = 0.5;
    double parallel_launch_ns = 2000.0;
    double loop_overhead_ns = 5.0;
    // Halo width (points) charged as redundant coverage per consumer tile
    // when a stage is computed at consumer-tile granularity.
    double recompute_penalty = 4.0;
    // Traffic multiplier for inlined stages (values live in registers).
    double inline_discount = 0.25;
    // Modeled core count available to parallel_outer.
    double parallel_threads = 8.0;
    // Traffic multiplier for consumer-tile buffers that fit in cache_bytes.
    double tile_locality_discount = 0.25;
    double cache_bytes = 262144.0;

    bool operator==(const CostModelConfig&) const = default;

    static CostModelConfig parse(const std::string& text);
    static CostModelConfig load_file(const std::string& path);
    std::string to_text() const;
};

// Per-stage breakdown of the analytical estimate, in nanoseconds.
struct StageCostTerms {
    double compute_ns = 0.0;
    double memory_ns = 0.0;
    double overhead_ns = 0.0;

    double total_ns() const { return compute_ns + memory_ns + overhead_ns; }
};

// Contract shared by the analytical model and real measurement. Defined only
// for terminal schedules; evaluating a partial schedule throws. Every call
// is counted so tests can assert which oracle an algorithm consulted.
class CostEvaluator {
  public:
    virtual ~CostEvaluator() = default;

    Cost evaluate(const PartialSchedule& s);
    virtual bool is_measurement() const = 0;
    std::uint64_t call_count() const { return calls_.load(std::memory_order_relaxed); }

  protected:
    virtual Cost do_evaluate(const PartialSchedule& s) = 0;

  private:
    std::atomic<std::uint64_t> calls_{0};
};

// Fast, deliberately imperfect analytical model. Pure function of the
// schedule; safe under concurrent calls.
class AnalyticalCostModel : public CostEvaluator {
  public:
    AnalyticalCostModel() = default;
    explicit AnalyticalCostModel(CostModelConfig cfg) : cfg_(cfg) {}

    bool is_measurement() const override { return false; }
    const CostModelConfig& config() const { return cfg_; }

    // Terms for one stage of a schedule that has decided that stage (and its
    // consumers). Exposed for tests and the `show` command.
    StageCostTerms stage_terms(const PartialSchedule& s, int stage) const;

  protected:
    Cost do_evaluate(const PartialSchedule& s) override;

  private:
    CostModelConfig cfg_;
};

// Analytical model with multiplicative log-normal noise:
// cost * exp(gaussian(0, sigma)). Seeded and reproducible. Holds a private
// generator, so each concurrent caller needs its own instance.
class NoisyCostModel : public CostEvaluator {
  public:
    NoisyCostModel(CostModelConfig cfg, double sigma, std::uint64_t seed);

    bool is_measurement() const override { return false; }
    double sigma() const { return sigma_; }

  protected:
    Cost do_evaluate(const PartialSchedule& s) override;

  private:
    AnalyticalCostModel base_;
    double sigma_;
    Rng rng_;
};

// Per-pipeline normalization anchor for rewards. When no reference is set,
// the first observed cost becomes the anchor.
struct RewardScale {
    std::optional<double> reference_ms;

    bool set() const { return reference_ms.has_value(); }
    void anchor_if_unset(Cost c) {
        if (!reference_ms) reference_ms = c.ms;
    }
};

// reference / max(cost, reference): 1.0 at or below the anchor, monotone
// decreasing above it, always in (0, 1].
double reward_from_cost(Cost c, const RewardScale& scale);

}  // namespace nesttune
