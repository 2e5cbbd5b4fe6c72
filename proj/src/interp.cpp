#include "nesttune/interp.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <exception>
#include <functional>
#include <map>
#include <mutex>
#include <thread>
#include <vector>

namespace nesttune {

namespace {

volatile float g_sink = 0.0f;  // keeps the computation observable

struct Region {
    int o0 = 0, o1 = 0, i0 = 0, i1 = 0;  // half-open

    int width() const { return i1 - i0; }
    std::uint64_t area() const {
        return static_cast<std::uint64_t>(o1 - o0) * static_cast<std::uint64_t>(i1 - i0);
    }
    bool contains(int o, int i) const { return o >= o0 && o < o1 && i >= i0 && i < i1; }

    Region union_with(const Region& r) const {
        return Region{std::min(o0, r.o0), std::max(o1, r.o1), std::min(i0, r.i0),
                      std::max(i1, r.i1)};
    }
};

// Reads outside a producer's domain clamp to its border (min composition, so
// the value of a point is independent of how the read is routed).
Region clamp_region(const Region& r, const Stage& producer) {
    Region out;
    out.o0 = std::min(r.o0, producer.extent_outer - 1);
    out.o1 = std::min(r.o1, producer.extent_outer);
    out.i0 = std::min(r.i0, producer.extent_inner - 1);
    out.i1 = std::min(r.i1, producer.extent_inner);
    return out;
}

inline float source_value(int o, int i) {
    return static_cast<float>((o * 31 + i * 7) & 63) * 0.03125f;
}

// Fixed fork-join pool. run() hands each worker a static slice of the index
// range; the calling thread works slot 0, so a pool of one adds no threads.
class WorkerPool {
  public:
    explicit WorkerPool(int workers) : workers_(workers) {
        for (int w = 1; w < workers_; ++w) {
            threads_.emplace_back([this, w] { worker_loop(w); });
        }
    }

    ~WorkerPool() {
        {
            std::unique_lock lock(mutex_);
            stop_ = true;
            ++generation_;
        }
        cv_.notify_all();
        for (auto& t : threads_) t.join();
    }

    int workers() const { return workers_; }

    void run(int n_items, const std::function<void(int, int, int)>& fn) {
        if (n_items <= 0) return;
        const int active = std::min(workers_, n_items);
        if (active <= 1) {
            fn(0, n_items, 0);
            return;
        }
        {
            std::unique_lock lock(mutex_);
            fn_ = &fn;
            n_items_ = n_items;
            active_ = active;
            done_ = 0;
            error_ = nullptr;
            ++generation_;
        }
        cv_.notify_all();
        run_slice(0);
        std::unique_lock lock(mutex_);
        done_cv_.wait(lock, [this] { return done_ >= active_ - 1; });
        fn_ = nullptr;
        if (error_) std::rethrow_exception(error_);
    }

  private:
    void run_slice(int slot) {
        const int chunk = (n_items_ + active_ - 1) / active_;
        const int first = slot * chunk;
        const int last = std::min(n_items_, first + chunk);
        if (first >= last) return;
        (*fn_)(first, last, slot);
    }

    void worker_loop(int slot) {
        std::uint64_t seen = 0;
        for (;;) {
            {
                std::unique_lock lock(mutex_);
                cv_.wait(lock, [&] { return stop_ || generation_ != seen; });
                seen = generation_;
                if (stop_) return;
                // Only active workers may touch done_; an idle worker
                // acknowledging could otherwise satisfy the completion wait
                // while a slice is still running.
                if (slot >= active_) continue;
            }
            try {
                run_slice(slot);
            } catch (...) {
                std::unique_lock lock(mutex_);
                if (!error_) error_ = std::current_exception();
            }
            {
                std::unique_lock lock(mutex_);
                ++done_;
            }
            done_cv_.notify_one();
        }
    }

    int workers_;
    std::vector<std::thread> threads_;
    std::mutex mutex_;
    std::condition_variable cv_;
    std::condition_variable done_cv_;
    const std::function<void(int, int, int)>* fn_ = nullptr;
    int n_items_ = 0;
    int active_ = 0;
    int done_ = 0;
    std::uint64_t generation_ = 0;
    bool stop_ = false;
    std::exception_ptr error_;
};

class Interpreter {
  public:
    static constexpr int kMaxFastSources = 8;

    Interpreter(const Pipeline& p, const PartialSchedule& s, const ExecutionConfig& cfg)
        : p_(p), cfg_(cfg) {
        const int n = p.stage_count();
        decisions_.resize(static_cast<std::size_t>(n));
        comps_.resize(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            decisions_[static_cast<std::size_t>(i)] = *s.decision_for(i);
            comps_[static_cast<std::size_t>(i)] = (p.stage(i).footprint_bytes_per_point + 3) / 4;
        }
        // A stage has a cheap batched read path only when none of its inputs
        // must be recomputed per point.
        fast_reads_.resize(static_cast<std::size_t>(n));
        needs_tile_realize_.resize(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            bool fast = p.producers(i).size() <= kMaxFastSources;
            for (int pr : p.producers(i)) {
                if (decisions_[static_cast<std::size_t>(pr)].granularity ==
                    Granularity::kInlined) {
                    fast = false;
                }
            }
            fast_reads_[static_cast<std::size_t>(i)] = fast;
            needs_tile_realize_[static_cast<std::size_t>(i)] = stage_needs_tile_realize(i);
        }

        int hw = static_cast<int>(std::thread::hardware_concurrency());
        if (hw < 1) hw = 1;
        workers_ = cfg.max_threads > 0 ? std::min(cfg.max_threads, hw) : hw;

        bool any_parallel = false;
        for (int i = 0; i < n; ++i) {
            if (realized_at_root(i) && decisions_[static_cast<std::size_t>(i)].parallel_outer) {
                any_parallel = true;
            }
        }
        if (!any_parallel) workers_ = 1;

        root_buffers_.resize(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            if (!realized_at_root(i)) continue;
            const Stage& st = p.stage(i);
            const std::uint64_t floats = static_cast<std::uint64_t>(st.extent_outer) *
                                         st.extent_inner * comps(i);
            track_alloc(floats * sizeof(float));
            root_buffers_[static_cast<std::size_t>(i)].resize(floats);
        }
        scratch_.resize(static_cast<std::size_t>(workers_));
        for (auto& arena : scratch_) arena.resize(static_cast<std::size_t>(n));
        if (workers_ > 1) pool_ = std::make_unique<WorkerPool>(workers_);
    }

    void run_once() {
        // Producers before consumers.
        const auto& order = p_.schedule_order();
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            if (realized_at_root(*it)) realize_root(*it);
        }
    }

    double checksum() const {
        const int out = p_.output_stage();
        const auto& buf = root_buffers_[static_cast<std::size_t>(out)];
        double sum = 0.0;
        const std::size_t stride = std::max<std::size_t>(1, buf.size() / 4096);
        for (std::size_t i = 0; i < buf.size(); i += stride) sum += buf[i];
        g_sink = static_cast<float>(sum);
        return sum;
    }

  private:
    struct Scratch {
        std::vector<float> buf;
        Region region;
        bool valid = false;
    };

    const SchedulingDecision& decision(int stage) const {
        return decisions_[static_cast<std::size_t>(stage)];
    }
    int comps(int stage) const { return comps_[static_cast<std::size_t>(stage)]; }

    bool realized_at_root(int stage) const {
        return decision(stage).granularity == Granularity::kRoot;
    }

    void track_alloc(std::uint64_t bytes) {
        const std::uint64_t now =
            allocated_.fetch_add(bytes, std::memory_order_relaxed) + bytes;
        if (now > cfg_.memory_cap_bytes) {
            throw RuntimeFailure("schedule buffers exceed the memory cap of " +
                                 std::to_string(cfg_.memory_cap_bytes) + " bytes");
        }
    }

    void realize_root(int stage) {
        const Stage& st = p_.stage(stage);
        const SchedulingDecision& d = decision(stage);
        const Region full{0, st.extent_outer, 0, st.extent_inner};
        float* out = root_buffers_[static_cast<std::size_t>(stage)].data();
        if (d.parallel_outer && workers_ > 1) {
            const int n_outer_tiles = st.extent_outer / d.tile_outer;
            pool_->run(n_outer_tiles, [&](int first, int last, int slot) {
                Region band = full;
                band.o0 = first * d.tile_outer;
                band.o1 = last * d.tile_outer;
                realize_region(stage, band, out, full, slot);
            });
        } else {
            realize_region(stage, full, out, full, 0);
        }
    }

    // Computes `stage` over `r` into `out`, which is laid out for
    // `out_region` (a superset of r). Iterates the stage's own tiling,
    // clipped to r.
    void realize_region(int stage, const Region& r, float* out, const Region& out_region,
                        int worker) {
        const SchedulingDecision& d = decision(stage);
        const bool tile_realize = needs_tile_realize_[static_cast<std::size_t>(stage)];
        for (int to = r.o0; to < r.o1; to += d.tile_outer) {
            const int to_end = std::min(to + d.tile_outer, r.o1);
            for (int ti = r.i0; ti < r.i1; ti += d.tile_inner) {
                const int ti_end = std::min(ti + d.tile_inner, r.i1);
                const Region tile{to, to_end, ti, ti_end};
                if (tile_realize) realize_tile_producers(stage, tile, worker);
                compute_tile(stage, tile, out, out_region, worker);
            }
        }
    }

    // True when anything reachable through inline chains sits at
    // consumer-tile granularity.
    bool stage_needs_tile_realize(int stage) const {
        for (int pr : p_.producers(stage)) {
            switch (decision(pr).granularity) {
                case Granularity::kAtConsumerTile: return true;
                case Granularity::kInlined:
                    if (stage_needs_tile_realize(pr)) return true;
                    break;
                case Granularity::kRoot: break;
            }
        }
        return false;
    }

    // Realizes every producer reachable through inline chains that is placed
    // at consumer-tile granularity, over the (clamp-composed) region this
    // tile needs. Consumers realize before their own producers so nested
    // realizes cannot clobber a region that is still needed.
    void realize_tile_producers(int stage, const Region& tile, int worker) {
        std::map<int, Region> needed;  // stage -> bounding region
        collect_tile_producers(stage, tile, needed);
        std::vector<std::pair<int, int>> ordered;  // (schedule_pos, stage)
        ordered.reserve(needed.size());
        for (const auto& [pr, region] : needed) {
            ordered.emplace_back(p_.schedule_pos(pr), pr);
        }
        std::sort(ordered.begin(), ordered.end());
        for (const auto& [pos, pr] : ordered) {
            realize_scratch(pr, needed.at(pr), worker);
        }
    }

    void collect_tile_producers(int stage, const Region& r, std::map<int, Region>& needed) {
        for (int pr : p_.producers(stage)) {
            const Region mapped = clamp_region(r, p_.stage(pr));
            const Granularity g = decision(pr).granularity;
            if (g == Granularity::kAtConsumerTile) {
                auto [it, inserted] = needed.emplace(pr, mapped);
                if (!inserted) it->second = it->second.union_with(mapped);
            } else if (g == Granularity::kInlined) {
                collect_tile_producers(pr, mapped, needed);
            }
        }
    }

    void realize_scratch(int stage, const Region& r, int worker) {
        Scratch& sc = scratch_[static_cast<std::size_t>(worker)][static_cast<std::size_t>(stage)];
        const std::uint64_t floats = r.area() * comps(stage);
        if (sc.buf.size() < floats) {
            track_alloc((floats - sc.buf.size()) * sizeof(float));
            sc.buf.resize(floats);
        }
        sc.region = r;
        sc.valid = true;
        realize_region(stage, r, sc.buf.data(), r, worker);
    }

    void compute_tile(int stage, const Region& tile, float* out, const Region& out_region,
                      int worker) {
        const Stage& st = p_.stage(stage);
        const SchedulingDecision& d = decision(stage);
        const int batch = d.vectorize_factor * d.unroll_factor;
        const int k_out = comps(stage);
        const int out_width = out_region.width();

        for (int o = tile.o0; o < tile.o1; ++o) {
            float* row = out + (static_cast<std::size_t>(o - out_region.o0) * out_width +
                                (tile.i0 - out_region.i0)) *
                                   k_out;
            int i = tile.i0;
            while (i < tile.i1) {
                const int i_end = std::min(i + batch, tile.i1);
                if (fast_reads_[static_cast<std::size_t>(stage)] &&
                    batched_span_ok(stage, i_end)) {
                    compute_span_fast(stage, o, i, i_end, row + static_cast<std::size_t>(
                                                                    i - tile.i0) * k_out,
                                      worker);
                } else {
                    float* px = row + static_cast<std::size_t>(i - tile.i0) * k_out;
                    for (int j = i; j < i_end; ++j, px += k_out) {
                        write_point(st, px, k_out, point_accum(stage, o, j, worker));
                    }
                }
                i = i_end;
            }
        }
    }

    // The batched path needs unit-stride reads: no producer may clamp inside
    // the span.
    bool batched_span_ok(int stage, int i_end) const {
        for (int pr : p_.producers(stage)) {
            if (i_end > p_.stage(pr).extent_inner) return false;
        }
        return true;
    }

    void compute_span_fast(int stage, int o, int i0, int i1, float* out, int worker) {
        const Stage& st = p_.stage(stage);
        const auto& prods = p_.producers(stage);
        const int k_out = comps(stage);

        // Resolve one (buffer, row offset, component count) per producer for
        // the whole span; this amortized setup is what vector/unroll batching
        // buys over the per-point path.
        struct Src {
            const float* buf;
            std::ptrdiff_t row;  // element index of inner coordinate 0
            int k;
        };
        Src srcs[kMaxFastSources];
        const int n_src = static_cast<int>(prods.size());
        for (int idx = 0; idx < n_src; ++idx) {
            const int pr = prods[static_cast<std::size_t>(idx)];
            const int po = std::min(o, p_.stage(pr).extent_outer - 1);
            srcs[idx].k = comps(pr);
            if (realized_at_root(pr)) {
                srcs[idx].buf = root_buffers_[static_cast<std::size_t>(pr)].data();
                srcs[idx].row = static_cast<std::ptrdiff_t>(po) * p_.stage(pr).extent_inner *
                                srcs[idx].k;
            } else {
                const Scratch& sc =
                    scratch_[static_cast<std::size_t>(worker)][static_cast<std::size_t>(pr)];
                srcs[idx].buf = sc.buf.data();
                srcs[idx].row = (static_cast<std::ptrdiff_t>(po - sc.region.o0) *
                                     sc.region.width() -
                                 sc.region.i0) *
                                srcs[idx].k;
            }
        }

        float* px = out;
        for (int i = i0; i < i1; ++i, px += k_out) {
            float acc;
            if (n_src == 0) {
                acc = source_value(o, i);
            } else {
                acc = 0.0f;
                for (int idx = 0; idx < n_src; ++idx) {
                    const float* v =
                        srcs[idx].buf + (srcs[idx].row + static_cast<std::ptrdiff_t>(i) *
                                                             srcs[idx].k);
                    for (int k = 0; k < srcs[idx].k; ++k) acc += v[k];
                }
            }
            write_point(st, px, k_out, acc);
        }
    }

    static void write_point(const Stage& st, float* out, int k_out, float acc) {
        float x = acc;
        for (int it = 0; it < st.arithmetic_intensity; ++it) x = x * 1.000001f + 0.0625f;
        for (int k = 0; k < k_out; ++k) out[k] = x + 0.5f * static_cast<float>(k);
    }

    // Per-point input resolution: clamp, dispatch on granularity, recurse
    // through inlined producers.
    float point_accum(int stage, int o, int i, int worker) {
        const auto& prods = p_.producers(stage);
        if (prods.empty()) return source_value(o, i);
        float acc = 0.0f;
        for (int pr : prods) {
            const Stage& pst = p_.stage(pr);
            const int po = std::min(o, pst.extent_outer - 1);
            const int pi = std::min(i, pst.extent_inner - 1);
            const int k_pr = comps(pr);
            switch (decision(pr).granularity) {
                case Granularity::kRoot: {
                    const float* v = root_buffers_[static_cast<std::size_t>(pr)].data() +
                                     (static_cast<std::size_t>(po) * pst.extent_inner + pi) * k_pr;
                    for (int k = 0; k < k_pr; ++k) acc += v[k];
                    break;
                }
                case Granularity::kAtConsumerTile: {
                    const Scratch& sc =
                        scratch_[static_cast<std::size_t>(worker)][static_cast<std::size_t>(pr)];
                    const float* v =
                        sc.buf.data() +
                        (static_cast<std::size_t>(po - sc.region.o0) * sc.region.width() +
                         (pi - sc.region.i0)) *
                            k_pr;
                    for (int k = 0; k < k_pr; ++k) acc += v[k];
                    break;
                }
                case Granularity::kInlined: {
                    float x = point_accum(pr, po, pi, worker);
                    for (int it = 0; it < pst.arithmetic_intensity; ++it) {
                        x = x * 1.000001f + 0.0625f;
                    }
                    for (int k = 0; k < k_pr; ++k) acc += x + 0.5f * static_cast<float>(k);
                    break;
                }
            }
        }
        return acc;
    }

    const Pipeline& p_;
    ExecutionConfig cfg_;
    std::vector<SchedulingDecision> decisions_;
    std::vector<int> comps_;
    std::vector<bool> fast_reads_;
    std::vector<bool> needs_tile_realize_;
    std::vector<std::vector<float>> root_buffers_;
    std::vector<std::vector<Scratch>> scratch_;
    std::unique_ptr<WorkerPool> pool_;
    int workers_ = 1;
    std::atomic<std::uint64_t> allocated_{0};
};

}  // namespace

ExecutionResult execute_schedule(const Pipeline& p, const PartialSchedule& schedule, int repeats,
                                 const ExecutionConfig& cfg) {
    if (repeats < 1) throw ValidationError("repeats must be >= 1");
    if (&p != &schedule.pipeline() && !(p == schedule.pipeline())) {
        throw ValidationError("schedule does not belong to this pipeline");
    }
    if (!schedule.terminal()) {
        throw ValidationError("execute_schedule needs a fully scheduled pipeline");
    }

    Interpreter interp(p, schedule, cfg);

    ExecutionResult result;
    result.repeats = repeats;
    double best_ns = 0.0;
    for (int rep = 0; rep < repeats; ++rep) {
        const auto t0 = std::chrono::steady_clock::now();
        interp.run_once();
        const auto t1 = std::chrono::steady_clock::now();
        const double ns =
            static_cast<double>(
                std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count());
        if (rep == 0 || ns < best_ns) best_ns = ns;
    }
    result.cost = Cost{std::max(best_ns, 1.0) * 1e-6};
    result.checksum = interp.checksum();
    return result;
}

}  // namespace nesttune
