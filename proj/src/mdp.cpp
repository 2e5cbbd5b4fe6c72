#include "nesttune/mdp.hpp"

#include <array>
#include <fstream>
#include <sstream>

namespace nesttune {

namespace {

constexpr std::array<int, 3> kVectorizeFactors = {1, 4, 8};
constexpr std::array<int, 3> kUnrollFactors = {1, 2, 4};

std::vector<int> pow2_divisors(int extent) {
    std::vector<int> out;
    for (int t = 1; t <= extent; t *= 2) {
        if (extent % t == 0) out.push_back(t);
    }
    return out;
}

int granularity_count_for(const Pipeline& p, int stage) {
    const std::size_t consumers = p.consumers(stage).size();
    if (consumers == 0) return 1;  // root only
    if (consumers == 1) return 3;  // root, at_consumer_tile, inlined
    return 2;                      // inlining needs exactly one consumer
}

std::uint64_t vec_unroll_pairs(int tile_inner) {
    std::uint64_t count = 0;
    for (int vec : kVectorizeFactors) {
        if (tile_inner % vec != 0) continue;
        for (int unroll : kUnrollFactors) {
            if (tile_inner % (vec * unroll) == 0) ++count;
        }
    }
    return count;
}

bool decision_legal(const Pipeline& p, int stage, const SchedulingDecision& d) {
    const Stage& st = p.stage(stage);
    if (d.tile_outer < 1 || d.tile_outer > st.extent_outer ||
        st.extent_outer % d.tile_outer != 0) {
        return false;
    }
    if (d.tile_inner < 1 || d.tile_inner > st.extent_inner ||
        st.extent_inner % d.tile_inner != 0) {
        return false;
    }
    if (static_cast<int>(d.granularity) >= granularity_count_for(p, stage)) return false;
    bool vec_ok = false;
    for (int vec : kVectorizeFactors) vec_ok |= (d.vectorize_factor == vec);
    if (!vec_ok || d.tile_inner % d.vectorize_factor != 0) return false;
    bool unroll_ok = false;
    for (int unroll : kUnrollFactors) unroll_ok |= (d.unroll_factor == unroll);
    if (!unroll_ok || d.tile_inner % (d.vectorize_factor * d.unroll_factor) != 0) return false;
    return true;
}

}  // namespace

const char* granularity_name(Granularity g) {
    switch (g) {
        case Granularity::kRoot: return "root";
        case Granularity::kAtConsumerTile: return "consumer";
        case Granularity::kInlined: return "inline";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// PartialSchedule
// ---------------------------------------------------------------------------

PartialSchedule PartialSchedule::with_decisions(const Pipeline& p,
                                                std::vector<SchedulingDecision> decisions) {
    if (decisions.size() > static_cast<std::size_t>(p.stage_count())) {
        throw ValidationError("more decisions than stages");
    }
    for (std::size_t k = 0; k < decisions.size(); ++k) {
        const int stage = p.schedule_order()[k];
        if (!decision_legal(p, stage, decisions[k])) {
            throw ValidationError("illegal decision for stage '" + p.stage(stage).id + "'");
        }
    }
    PartialSchedule s(p);
    s.decisions_ = std::move(decisions);
    return s;
}

int PartialSchedule::cursor_stage() const {
    if (terminal()) throw ValidationError("cursor_stage called on a terminal schedule");
    return pipeline_->schedule_order()[decisions_.size()];
}

const SchedulingDecision* PartialSchedule::decision_for(int stage) const {
    const int pos = pipeline_->schedule_pos(stage);
    if (pos < 0 || static_cast<std::size_t>(pos) >= decisions_.size()) return nullptr;
    return &decisions_[static_cast<std::size_t>(pos)];
}

PartialSchedule initial_state(const Pipeline& p) { return PartialSchedule(p); }

// ---------------------------------------------------------------------------
// ActionSpace
// ---------------------------------------------------------------------------

ActionSpace::ActionSpace(const Pipeline& p, int stage) {
    const Stage& st = p.stage(stage);
    outer_tiles_ = pow2_divisors(st.extent_outer);
    inner_tiles_ = pow2_divisors(st.extent_inner);
    granularity_count_ = granularity_count_for(p, stage);
    pair_counts_.reserve(inner_tiles_.size());
    per_outer_ = 0;
    for (int ti : inner_tiles_) {
        const std::uint64_t pairs = vec_unroll_pairs(ti);
        pair_counts_.push_back(pairs);
        per_outer_ += static_cast<std::uint64_t>(granularity_count_) * 2 * pairs;
    }
    total_ = outer_tiles_.size() * per_outer_;
}

std::uint64_t ActionSpace::block_for_inner(std::size_t inner_idx) const {
    return static_cast<std::uint64_t>(granularity_count_) * 2 * pair_counts_[inner_idx];
}

SchedulingDecision ActionSpace::at(std::uint64_t ordinal) const {
    if (ordinal >= total_) throw ValidationError("action ordinal out of range");
    SchedulingDecision d;
    d.tile_outer = outer_tiles_[static_cast<std::size_t>(ordinal / per_outer_)];
    std::uint64_t rem = ordinal % per_outer_;

    std::size_t j = 0;
    while (rem >= block_for_inner(j)) {
        rem -= block_for_inner(j);
        ++j;
    }
    d.tile_inner = inner_tiles_[j];
    const std::uint64_t pairs = pair_counts_[j];

    d.granularity = static_cast<Granularity>(rem / (2 * pairs));
    rem %= 2 * pairs;
    d.parallel_outer = (rem / pairs) != 0;
    rem %= pairs;

    for (int vec : kVectorizeFactors) {
        if (d.tile_inner % vec != 0) continue;
        for (int unroll : kUnrollFactors) {
            if (d.tile_inner % (vec * unroll) != 0) continue;
            if (rem == 0) {
                d.vectorize_factor = vec;
                d.unroll_factor = unroll;
                return d;
            }
            --rem;
        }
    }
    throw ValidationError("internal: action ordinal decode failed");
}

bool ActionSpace::legal(const SchedulingDecision& d) const {
    if (d.tile_outer < 1 || d.tile_inner < 1) return false;
    if (outer_tiles_.empty() || inner_tiles_.empty()) return false;
    if (outer_tiles_.back() % d.tile_outer != 0) return false;
    if (d.tile_outer > outer_tiles_.back()) return false;
    if (inner_tiles_.back() % d.tile_inner != 0) return false;
    if (d.tile_inner > inner_tiles_.back()) return false;
    if (static_cast<int>(d.granularity) >= granularity_count_) return false;
    bool vec_ok = false;
    for (int vec : kVectorizeFactors) vec_ok |= (d.vectorize_factor == vec);
    if (!vec_ok || d.tile_inner % d.vectorize_factor != 0) return false;
    bool unroll_ok = false;
    for (int unroll : kUnrollFactors) unroll_ok |= (d.unroll_factor == unroll);
    if (!unroll_ok || d.tile_inner % (d.vectorize_factor * d.unroll_factor) != 0) return false;
    return true;
}

// ---------------------------------------------------------------------------
// Actions
// ---------------------------------------------------------------------------

std::vector<Action> enumerate_actions(const PartialSchedule& s) {
    if (s.terminal()) throw ValidationError("enumerate_actions called on a terminal schedule");
    const int stage = s.cursor_stage();
    const ActionSpace space(s.pipeline(), stage);

    std::vector<Action> out;
    out.reserve(static_cast<std::size_t>(space.size()));
    for (int to : space.outer_tiles()) {
        for (int ti : space.inner_tiles()) {
            for (int g = 0; g < space.granularity_count(); ++g) {
                for (int par = 0; par < 2; ++par) {
                    for (int vec : kVectorizeFactors) {
                        if (ti % vec != 0) continue;
                        for (int unroll : kUnrollFactors) {
                            if (ti % (vec * unroll) != 0) continue;
                            Action a;
                            a.stage = stage;
                            a.decision = {to,  ti,  static_cast<Granularity>(g),
                                          par != 0, vec, unroll};
                            out.push_back(a);
                        }
                    }
                }
            }
        }
    }
    return out;
}

Action sample_action(const PartialSchedule& s, Rng& rng) {
    if (s.terminal()) throw ValidationError("sample_action called on a terminal schedule");
    const int stage = s.cursor_stage();
    const ActionSpace space(s.pipeline(), stage);
    return Action{stage, space.at(rng.below(space.size()))};
}

PartialSchedule apply_action(const PartialSchedule& s, const Action& a) {
    if (s.terminal()) throw ValidationError("apply_action called on a terminal schedule");
    const int stage = s.cursor_stage();
    if (a.stage != stage) {
        throw ValidationError("action targets stage '" + s.pipeline().stage(a.stage).id +
                              "' but the cursor is at '" + s.pipeline().stage(stage).id + "'");
    }
    if (!decision_legal(s.pipeline(), stage, a.decision)) {
        throw ValidationError("illegal action for stage '" + s.pipeline().stage(stage).id + "'");
    }
    PartialSchedule next = s;
    next.decisions_.push_back(a.decision);
    return next;
}

SchedulingDecision default_decision(const Stage& stage) {
    SchedulingDecision d;
    d.tile_outer = stage.extent_outer;
    d.tile_inner = stage.extent_inner;
    d.granularity = Granularity::kRoot;
    d.parallel_outer = false;
    d.vectorize_factor = 1;
    d.unroll_factor = 1;
    return d;
}

PartialSchedule default_completed(const PartialSchedule& s) {
    PartialSchedule out = s;
    while (!out.terminal()) {
        const int stage = out.cursor_stage();
        out = apply_action(out, Action{stage, default_decision(out.pipeline().stage(stage))});
    }
    return out;
}

PartialSchedule random_completed(const PartialSchedule& s, Rng& rng) {
    PartialSchedule out = s;
    while (!out.terminal()) out = apply_action(out, sample_action(out, rng));
    return out;
}

// ---------------------------------------------------------------------------
// Whole-space enumeration
// ---------------------------------------------------------------------------

std::uint64_t schedule_space_size(const Pipeline& p, std::uint64_t cap) {
    std::uint64_t product = 1;
    for (int stage : p.schedule_order()) {
        const std::uint64_t size = ActionSpace(p, stage).size();
        if (product > cap / size) return cap + 1;  // saturate, avoids overflow
        product *= size;
    }
    return product;
}

ScheduleEnumerator::ScheduleEnumerator(const Pipeline& p, std::uint64_t cap) : pipeline_(&p) {
    space_ = schedule_space_size(p, cap);
    if (space_ > cap) {
        throw ValidationError("schedule space of '" + p.name() + "' exceeds the cap of " +
                              std::to_string(cap));
    }
    for (int stage : p.schedule_order()) spaces_.emplace_back(p, stage);
    counter_.assign(spaces_.size(), 0);
}

std::optional<PartialSchedule> ScheduleEnumerator::next() {
    if (done_) return std::nullopt;
    std::vector<SchedulingDecision> decisions;
    decisions.reserve(spaces_.size());
    for (std::size_t k = 0; k < spaces_.size(); ++k) {
        decisions.push_back(spaces_[k].at(counter_[k]));
    }
    PartialSchedule out(*pipeline_);
    out = PartialSchedule::with_decisions(*pipeline_, std::move(decisions));

    // Advance the odometer; the last scheduled stage is the fastest digit.
    std::size_t k = spaces_.size();
    for (;;) {
        if (k == 0) {
            done_ = true;
            break;
        }
        --k;
        if (++counter_[k] < spaces_[k].size()) break;
        counter_[k] = 0;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Schedule serialization
// ---------------------------------------------------------------------------

std::string schedule_to_text(const PartialSchedule& s) {
    std::ostringstream out;
    const Pipeline& p = s.pipeline();
    for (std::size_t k = 0; k < s.decisions().size(); ++k) {
        const int stage = p.schedule_order()[k];
        const SchedulingDecision& d = s.decisions()[k];
        out << "decide " << p.stage(stage).id << " tile=" << d.tile_outer << "x" << d.tile_inner
            << " at=" << granularity_name(d.granularity) << " par=" << (d.parallel_outer ? 1 : 0)
            << " vec=" << d.vectorize_factor << " unroll=" << d.unroll_factor << "\n";
    }
    return out.str();
}

namespace {

std::string field_value(const std::string& token, const std::string& key, int line_no) {
    if (token.size() <= key.size() + 1 || token.compare(0, key.size(), key) != 0 ||
        token[key.size()] != '=') {
        throw ParseError(line_no, "expected '" + key + "=...', got '" + token + "'");
    }
    return token.substr(key.size() + 1);
}

int int_field(const std::string& token, const std::string& key, int line_no) {
    const std::string v = field_value(token, key, line_no);
    try {
        std::size_t used = 0;
        const int parsed = std::stoi(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return parsed;
    } catch (const std::exception&) {
        throw ParseError(line_no, "bad integer in '" + token + "'");
    }
}

}  // namespace

PartialSchedule parse_schedule(const Pipeline& p, const std::string& text) {
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    std::vector<SchedulingDecision> decisions;

    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ls(line);
        std::vector<std::string> tokens;
        std::string tok;
        while (ls >> tok) {
            if (tok[0] == '#') break;
            tokens.push_back(tok);
        }
        if (tokens.empty()) continue;
        if (tokens[0] != "decide" || tokens.size() != 7) {
            throw ParseError(line_no,
                             "usage: decide <stage_id> tile=<o>x<i> at=<root|consumer|inline> "
                             "par=<0|1> vec=<f> unroll=<f>");
        }
        if (decisions.size() >= static_cast<std::size_t>(p.stage_count())) {
            throw ParseError(line_no, "more decisions than pipeline stages");
        }
        const int expected_stage = p.schedule_order()[decisions.size()];
        const int stage = p.find_stage(tokens[1]);
        if (stage < 0) throw ParseError(line_no, "unknown stage '" + tokens[1] + "'");
        if (stage != expected_stage) {
            throw ParseError(line_no, "expected decision for stage '" +
                                          p.stage(expected_stage).id + "' at this position");
        }

        SchedulingDecision d;
        const std::string tile = field_value(tokens[2], "tile", line_no);
        const auto xpos = tile.find('x');
        if (xpos == std::string::npos) throw ParseError(line_no, "bad tile '" + tokens[2] + "'");
        try {
            d.tile_outer = std::stoi(tile.substr(0, xpos));
            d.tile_inner = std::stoi(tile.substr(xpos + 1));
        } catch (const std::exception&) {
            throw ParseError(line_no, "bad tile '" + tokens[2] + "'");
        }
        const std::string at = field_value(tokens[3], "at", line_no);
        if (at == "root") {
            d.granularity = Granularity::kRoot;
        } else if (at == "consumer") {
            d.granularity = Granularity::kAtConsumerTile;
        } else if (at == "inline") {
            d.granularity = Granularity::kInlined;
        } else {
            throw ParseError(line_no, "bad granularity '" + at + "'");
        }
        d.parallel_outer = int_field(tokens[4], "par", line_no) != 0;
        d.vectorize_factor = int_field(tokens[5], "vec", line_no);
        d.unroll_factor = int_field(tokens[6], "unroll", line_no);

        if (!decision_legal(p, stage, d)) {
            throw ParseError(line_no, "illegal decision for stage '" + tokens[1] + "'");
        }
        decisions.push_back(d);
    }
    return PartialSchedule::with_decisions(p, std::move(decisions));
}

PartialSchedule load_schedule_file(const Pipeline& p, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw RuntimeFailure("cannot open schedule file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_schedule(p, buf.str());
}

}  // namespace nesttune
