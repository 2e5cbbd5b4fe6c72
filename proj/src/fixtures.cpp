#include "nesttune/fixtures.hpp"

#include "nesttune/baselines.hpp"

namespace nesttune {

Pipeline fixture_single() {
    return Pipeline::build("single", {Stage{"s0", 8, 8, 1, 4}}, {}, 0);
}

Pipeline fixture_chain2() {
    return Pipeline::build("chain2",
                           {Stage{"producer", 8, 8, 4, 16}, Stage{"consumer", 8, 8, 2, 4}},
                           {{0, 1}}, 1);
}

Pipeline fixture_chain5() {
    return Pipeline::build("chain5",
                           {Stage{"s0", 64, 64, 8, 16}, Stage{"s1", 64, 64, 16, 4},
                            Stage{"s2", 64, 64, 4, 32}, Stage{"s3", 64, 64, 32, 8},
                            Stage{"s4", 64, 64, 8, 4}},
                           {{0, 1}, {1, 2}, {2, 3}, {3, 4}}, 4);
}

Pipeline fixture_diamond() {
    return Pipeline::build("diamond",
                           {Stage{"a", 32, 32, 8, 8}, Stage{"b", 32, 32, 16, 4},
                            Stage{"c", 32, 32, 4, 16}, Stage{"d", 32, 32, 8, 4}},
                           {{0, 1}, {0, 2}, {1, 3}, {2, 3}}, 3);
}

Pipeline fixture_compute() {
    return Pipeline::build("compute", {Stage{"k", 256, 256, 128, 4}}, {}, 0);
}

std::pair<Pipeline, CostModelConfig> build_deceptive_fixture() {
    Pipeline p = Pipeline::build(
        "deceptive", {Stage{"feed", 16, 16, 4, 1024}, Stage{"out", 16, 16, 1, 4}}, {{0, 1}}, 1);

    CostModelConfig cfg;
    cfg.compute_ns_per_op = 1.0;
    cfg.mem_ns_per_byte = 0.5;
    cfg.parallel_launch_ns = 10000.0;
    cfg.loop_overhead_ns = 20.0;
    cfg.recompute_penalty = 2.0;
    cfg.inline_discount = 1.25;
    cfg.parallel_threads = 8.0;
    cfg.tile_locality_discount = 0.25;
    cfg.cache_bytes = 16384.0;

    // Construction-time verification: the fixture is only deceptive while
    // greedy and a one-pass beam of 32 both miss the brute-force optimum.
    AnalyticalCostModel model(cfg);
    const SearchResult oracle = brute_force(p, model);
    const SearchResult greedy = greedy_search(p, model, 0);
    const SearchResult beam = beam_search(p, BeamConfig{32, 1, 0, 1}, model);
    if (!(greedy.cost.ms > oracle.cost.ms) || !(beam.cost.ms > oracle.cost.ms)) {
        throw ValidationError(
            "deceptive fixture verification failed: greedy or beam(32) reaches the optimum");
    }
    return {std::move(p), cfg};
}

std::pair<Pipeline, CostModelConfig> build_divergent_fixture() {
    // Zero loop overhead and a zero halo make the model blind to tiling and
    // to per-tile realization cost: its whole argmin class (feed at consumer
    // tile, any tiles, vec 8, serial) is exactly tied. Real execution pays a
    // producer realization per consumer tile, so the tiny-tile members are
    // several times slower than the full-tile ones -- and canonical
    // tie-breaking lands model-guided searches on the tiny tiles first.
    Pipeline p = Pipeline::build(
        "divergent", {Stage{"feed", 64, 64, 1, 4}, Stage{"out", 64, 64, 1, 4}}, {{0, 1}}, 1);

    CostModelConfig cfg;
    cfg.compute_ns_per_op = 10.0;
    cfg.mem_ns_per_byte = 0.5;
    cfg.parallel_launch_ns = 2000.0;
    cfg.loop_overhead_ns = 0.0;
    cfg.recompute_penalty = 0.0;
    cfg.inline_discount = 0.9;
    cfg.parallel_threads = 8.0;
    cfg.tile_locality_discount = 0.25;
    cfg.cache_bytes = 1.0e9;
    return {std::move(p), cfg};
}

}  // namespace nesttune
