#include "nesttune/cost.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace nesttune {

// ---------------------------------------------------------------------------
// CostModelConfig
// ---------------------------------------------------------------------------

CostModelConfig CostModelConfig::parse(const std::string& text) {
    CostModelConfig cfg;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::string key, value;
        std::istringstream ls(line);
        if (!std::getline(ls, key, '=')) continue;
        key.erase(0, key.find_first_not_of(" \t"));
        key.erase(key.find_last_not_of(" \t") + 1);
        if (key.empty()) continue;
        if (!std::getline(ls, value)) throw ParseError(line_no, "expected key=value");
        value.erase(0, value.find_first_not_of(" \t"));
        value.erase(value.find_last_not_of(" \t\r") + 1);
        double parsed = 0.0;
        try {
            std::size_t used = 0;
            parsed = std::stod(value, &used);
            if (used != value.size()) throw std::invalid_argument(value);
        } catch (const std::exception&) {
            throw ParseError(line_no, "bad numeric value '" + value + "' for key '" + key + "'");
        }
        if (key == "compute_ns_per_op") {
            cfg.compute_ns_per_op = parsed;
        } else if (key == "mem_ns_per_byte") {
            cfg.mem_ns_per_byte = parsed;
        } else if (key == "parallel_launch_ns") {
            cfg.parallel_launch_ns = parsed;
        } else if (key == "loop_overhead_ns") {
            cfg.loop_overhead_ns = parsed;
        } else if (key == "recompute_penalty") {
            cfg.recompute_penalty = parsed;
        } else if (key == "inline_discount") {
            cfg.inline_discount = parsed;
        } else if (key == "parallel_threads") {
            cfg.parallel_threads = parsed;
        } else if (key == "tile_locality_discount") {
            cfg.tile_locality_discount = parsed;
        } else if (key == "cache_bytes") {
            cfg.cache_bytes = parsed;
        } else {
            throw ParseError(line_no, "unknown cost-model key '" + key + "'");
        }
    }
    return cfg;
}

CostModelConfig CostModelConfig::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw RuntimeFailure("cannot open cost-model config '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
}

std::string CostModelConfig::to_text() const {
    std::ostringstream out;
    out << "compute_ns_per_op = " << compute_ns_per_op << "\n";
    out << "mem_ns_per_byte = " << mem_ns_per_byte << "\n";
    out << "parallel_launch_ns = " << parallel_launch_ns << "\n";
    out << "loop_overhead_ns = " << loop_overhead_ns << "\n";
    out << "recompute_penalty = " << recompute_penalty << "\n";
    out << "inline_discount = " << inline_discount << "\n";
    out << "parallel_threads = " << parallel_threads << "\n";
    out << "tile_locality_discount = " << tile_locality_discount << "\n";
    out << "cache_bytes = " << cache_bytes << "\n";
    return out.str();
}

// ---------------------------------------------------------------------------
// CostEvaluator
// ---------------------------------------------------------------------------

Cost CostEvaluator::evaluate(const PartialSchedule& s) {
    if (!s.terminal()) {
        throw ValidationError("cost is only defined for fully scheduled pipelines");
    }
    calls_.fetch_add(1, std::memory_order_relaxed);
    return do_evaluate(s);
}

// ---------------------------------------------------------------------------
// AnalyticalCostModel
// ---------------------------------------------------------------------------

StageCostTerms AnalyticalCostModel::stage_terms(const PartialSchedule& s, int stage) const {
    const Pipeline& p = s.pipeline();
    const Stage& st = p.stage(stage);
    const SchedulingDecision* dp = s.decision_for(stage);
    if (dp == nullptr) throw ValidationError("stage '" + st.id + "' is undecided");
    const SchedulingDecision& d = *dp;

    const double points = static_cast<double>(st.extent_outer) * st.extent_inner;
    const double bytes = points * st.footprint_bytes_per_point;

    StageCostTerms terms;

    if (d.granularity == Granularity::kInlined) {
        // Inlined stages compute inside the consumer's loop body; their own
        // vectorization/parallelism decisions do not apply and they carry no
        // loop structure of their own.
        terms.compute_ns = points * st.arithmetic_intensity * cfg_.compute_ns_per_op;
        terms.memory_ns = bytes * cfg_.mem_ns_per_byte * cfg_.inline_discount;
        terms.overhead_ns = 0.0;
        return terms;
    }

    const double n_outer = static_cast<double>(st.extent_outer) / d.tile_outer;
    const double n_inner = static_cast<double>(st.extent_inner) / d.tile_inner;
    const double n_tiles = n_outer * n_inner;
    const double par_eff =
        d.parallel_outer ? std::min(n_outer, std::max(1.0, cfg_.parallel_threads)) : 1.0;

    terms.compute_ns =
        points * st.arithmetic_intensity * cfg_.compute_ns_per_op / (d.vectorize_factor * par_eff);

    double traffic_factor = 1.0;
    if (d.granularity == Granularity::kAtConsumerTile) {
        // Recomputed once per consumer tile, with a halo of recompute_penalty
        // points charged along each tile edge. Tile-resident buffers that fit
        // in cache earn the locality discount.
        traffic_factor = 0.0;
        for (int consumer : p.consumers(stage)) {
            const SchedulingDecision* cd = s.decision_for(consumer);
            if (cd == nullptr) {
                throw ValidationError("consumer '" + p.stage(consumer).id +
                                      "' of stage '" + st.id + "' is undecided");
            }
            const double halo = (1.0 + cfg_.recompute_penalty / cd->tile_outer) *
                                (1.0 + cfg_.recompute_penalty / cd->tile_inner);
            const double tile_buffer_bytes = static_cast<double>(cd->tile_outer) *
                                             cd->tile_inner * st.footprint_bytes_per_point;
            const double locality =
                tile_buffer_bytes <= cfg_.cache_bytes ? cfg_.tile_locality_discount : 1.0;
            traffic_factor += halo * locality;
        }
    }
    terms.memory_ns = bytes * cfg_.mem_ns_per_byte * traffic_factor;

    terms.overhead_ns =
        cfg_.loop_overhead_ns *
            (n_tiles + points / (static_cast<double>(d.vectorize_factor) * d.unroll_factor)) +
        (d.parallel_outer ? cfg_.parallel_launch_ns * n_outer : 0.0);
    return terms;
}

Cost AnalyticalCostModel::do_evaluate(const PartialSchedule& s) {
    double total_ns = 0.0;
    for (int stage : s.pipeline().schedule_order()) {
        total_ns += stage_terms(s, stage).total_ns();
    }
    return Cost{total_ns * 1e-6};
}

// ---------------------------------------------------------------------------
// NoisyCostModel
// ---------------------------------------------------------------------------

NoisyCostModel::NoisyCostModel(CostModelConfig cfg, double sigma, std::uint64_t seed)
    : base_(cfg), sigma_(sigma), rng_(seed) {
    if (sigma < 0.0) throw ValidationError("noise sigma must be >= 0");
}

Cost NoisyCostModel::do_evaluate(const PartialSchedule& s) {
    const Cost base = base_.evaluate(s);
    if (sigma_ == 0.0) return base;
    const double noisy = base.ms * std::exp(sigma_ * rng_.gaussian());
    return Cost{std::max(noisy, 1e-12)};
}

// ---------------------------------------------------------------------------
// Rewards
// ---------------------------------------------------------------------------

double reward_from_cost(Cost c, const RewardScale& scale) {
    if (!scale.set() || *scale.reference_ms <= 0.0) {
        throw ValidationError("reward scale has no positive reference cost");
    }
    return *scale.reference_ms / std::max(c.ms, *scale.reference_ms);
}

}  // namespace nesttune
