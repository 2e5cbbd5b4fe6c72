#include "nesttune/mcts.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

namespace nesttune {

void UcbVariant::validate() const {
    if (kind != Kind::kAdaptiveCp && c <= 0.0) {
        throw ValidationError("UCB variant parameter must be > 0");
    }
}

void Budget::validate() const {
    if (kind == Kind::kIterations && iterations == 0) {
        throw ValidationError("iteration budget must be > 0");
    }
    if (kind == Kind::kWallClockMs && wall_ms <= 0.0) {
        throw ValidationError("wall-clock budget must be > 0");
    }
}

void TreeConfig::validate() const {
    ucb.validate();
    budget.validate();
    if (reward_reference_ms && *reward_reference_ms <= 0.0) {
        throw ValidationError("reward reference must be > 0");
    }
}

double ucb_score(const SearchNode& child, double parent_visits, const UcbVariant& v) {
    if (child.visits == 0) throw ValidationError("ucb_score on an unvisited child");
    const double n_j = static_cast<double>(child.visits);
    const double log_n = std::log(parent_visits);
    switch (v.kind) {
        case UcbVariant::Kind::kInverseAvgMultiplicative: {
            const double avg_cost = child.cost_sum_ms / n_j;
            return (1.0 / avg_cost) * (1.0 + v.c * std::sqrt(log_n / n_j));
        }
        case UcbVariant::Kind::kAvgInverseAdditive: {
            const double avg_reward = child.reward_sum / n_j;
            return avg_reward + v.c * std::sqrt(2.0 * log_n / n_j);
        }
        case UcbVariant::Kind::kAdaptiveCp: {
            const double avg_reward = child.reward_sum / n_j;
            return avg_reward + avg_reward * std::sqrt(2.0 * log_n / n_j);
        }
        case UcbVariant::Kind::kBinaryReward: {
            const double win_rate = child.win_sum / n_j;
            return win_rate + v.c * std::sqrt(2.0 * log_n / n_j);
        }
    }
    throw ValidationError("unknown UCB variant");
}

Action pick_winner(const SearchNode& root) {
    const SearchNode* best = nullptr;
    const SchedulingDecision* best_decision = nullptr;
    for (const auto& [decision, child] : root.children) {
        if (child->visits == 0) continue;
        if (best == nullptr || child->best_cost_ms < best->best_cost_ms ||
            (child->best_cost_ms == best->best_cost_ms && child->visits > best->visits)) {
            best = child.get();
            best_decision = &decision;
        }
        // Equal best cost and equal visits: keep the earlier entry, which is
        // canonical order because the children map is ordered.
    }
    if (best == nullptr) throw ValidationError("pick_winner on a root with no visited children");
    return Action{root.state.cursor_stage(), *best_decision};
}

SearchTree::SearchTree(const Pipeline& p, TreeConfig cfg, CostEvaluator& evaluator)
    : pipeline_(&p), cfg_(cfg), evaluator_(&evaluator), rng_(hash_combine(cfg.seed, 0x7ee5)) {
    cfg_.validate();
    if (cfg_.reward_reference_ms) scale_.reference_ms = *cfg_.reward_reference_ms;
    spaces_.resize(static_cast<std::size_t>(p.stage_count()));
    root_ = std::make_unique<SearchNode>(initial_state(p));
    root_->action_count = root_->state.terminal() ? 0 : space_for(root_->state.cursor_stage()).size();
}

const ActionSpace& SearchTree::space_for(int stage) {
    auto& slot = spaces_[static_cast<std::size_t>(stage)];
    if (!slot) slot.emplace(*pipeline_, stage);
    return *slot;
}

namespace {

// Does `schedule` extend the decisions of `prefix`?
bool extends_prefix(const PartialSchedule& schedule, const PartialSchedule& prefix) {
    if (schedule.decisions().size() < prefix.decisions().size()) return false;
    for (std::size_t i = 0; i < prefix.decisions().size(); ++i) {
        if (schedule.decisions()[i] != prefix.decisions()[i]) return false;
    }
    return true;
}

}  // namespace

void SearchTree::reset_root(const PartialSchedule& state) {
    if (cfg_.reroot == RerootMode::kKeepSubtree && !root_->state.terminal() &&
        state.cursor() == root_->state.cursor() + 1) {
        const SchedulingDecision& last = state.decisions().back();
        auto it = root_->children.find(last);
        std::unique_ptr<SearchNode> next;
        if (it != root_->children.end() && it->second->state == state) {
            next = std::move(it->second);
        } else {
            next = std::make_unique<SearchNode>(state);
            next->action_count =
                state.terminal() ? 0 : space_for(state.cursor_stage()).size();
        }
        // A node's own creation simulation is recorded on the node but on no
        // child, so the subtree may not contain the old root's best. Carry it
        // over whenever it extends the adopted prefix.
        if (root_->best_schedule && root_->best_cost_ms < next->best_cost_ms &&
            extends_prefix(*root_->best_schedule, state)) {
            next->best_cost_ms = root_->best_cost_ms;
            next->best_schedule = std::move(root_->best_schedule);
        }
        root_ = std::move(next);
        return;
    }
    root_ = std::make_unique<SearchNode>(state);
    root_->action_count =
        root_->state.terminal() ? 0 : space_for(root_->state.cursor_stage()).size();
}

std::vector<SearchNode*> SearchTree::select() {
    std::vector<SearchNode*> path;
    SearchNode* node = root_.get();
    path.push_back(node);
    // Descend by tree-policy argmax, stopping wherever an untried action
    // remains (expand-before-descend) or the state is terminal.
    while (!node->state.terminal() && !node->has_untried()) {
        double best_score = -std::numeric_limits<double>::infinity();
        std::vector<SearchNode*> ties;
        for (const auto& [decision, child] : node->children) {
            const double score =
                ucb_score(*child, static_cast<double>(node->visits), cfg_.ucb);
            if (score > best_score) {
                best_score = score;
                ties.clear();
                ties.push_back(child.get());
            } else if (score == best_score) {
                ties.push_back(child.get());
            }
        }
        if (ties.empty()) break;  // terminal-free node with zero actions cannot happen
        node = ties.size() == 1 ? ties[0] : ties[rng_.below(ties.size())];
        path.push_back(node);
    }
    return path;
}

SchedulingDecision SearchTree::draw_untried(SearchNode& node) {
    const ActionSpace& space = space_for(node.state.cursor_stage());
    if (node.untried_pool) {
        auto& pool = *node.untried_pool;
        const std::size_t idx = static_cast<std::size_t>(rng_.below(pool.size()));
        const SchedulingDecision d = pool[idx];
        pool[idx] = pool.back();
        pool.pop_back();
        return d;
    }
    // Rejection sampling is uniform over the untried set and avoids
    // materializing the action list while most of it is untried.
    if (2 * node.children.size() < node.action_count) {
        for (;;) {
            const SchedulingDecision d = space.at(rng_.below(space.size()));
            if (!node.children.contains(d)) return d;
        }
    }
    auto& pool = node.untried_pool.emplace();
    pool.reserve(static_cast<std::size_t>(node.action_count - node.children.size()));
    for (std::uint64_t ord = 0; ord < space.size(); ++ord) {
        SchedulingDecision d = space.at(ord);
        if (!node.children.contains(d)) pool.push_back(d);
    }
    return draw_untried(node);
}

SearchNode& SearchTree::expand(SearchNode& node) {
    if (node.state.terminal() || !node.has_untried()) {
        throw ValidationError("expand on a fully expanded node");
    }
    const SchedulingDecision d = draw_untried(node);
    const int stage = node.state.cursor_stage();
    auto child = std::make_unique<SearchNode>(apply_action(node.state, Action{stage, d}));
    SearchNode* raw = child.get();
    raw->action_count = raw->state.terminal() ? 0 : space_for(raw->state.cursor_stage()).size();
    node.children.emplace(d, std::move(child));
    return *raw;
}

Cost SearchTree::evaluate_observed(const PartialSchedule& terminal) {
    const Cost c = evaluator_->evaluate(terminal);
    scale_.anchor_if_unset(c);
    return c;
}

std::pair<PartialSchedule, Cost> SearchTree::simulate(const PartialSchedule& start) {
    if (cfg_.simulation == SimulationPolicy::kUniformRandom) {
        PartialSchedule state = start;
        while (!state.terminal()) {
            const int stage = state.cursor_stage();
            const ActionSpace& space = space_for(stage);
            state = apply_action(state,
                                 Action{stage, space.at(rng_.below(space.size()))});
        }
        const Cost c = evaluate_observed(state);
        return {std::move(state), c};
    }

    // Pure greedy: at each step take the action whose default-completed
    // schedule scores best under the evaluator. Ties keep the first (the
    // canonical order).
    PartialSchedule state = start;
    Cost final_cost{0.0};
    bool have_cost = false;
    while (!state.terminal()) {
        const int stage = state.cursor_stage();
        const ActionSpace& space = space_for(stage);
        std::optional<SchedulingDecision> best;
        Cost best_cost{0.0};
        for (std::uint64_t ord = 0; ord < space.size(); ++ord) {
            const SchedulingDecision d = space.at(ord);
            const PartialSchedule candidate =
                default_completed(apply_action(state, Action{stage, d}));
            const Cost c = evaluate_observed(candidate);
            if (!best || c.ms < best_cost.ms) {
                best = d;
                best_cost = c;
            }
        }
        state = apply_action(state, Action{stage, *best});
        final_cost = best_cost;
        have_cost = true;
    }
    if (!have_cost) final_cost = evaluate_observed(state);
    return {std::move(state), final_cost};
}

void SearchTree::backpropagate(std::span<SearchNode* const> path, Cost cost,
                               const PartialSchedule& terminal) {
    scale_.anchor_if_unset(cost);
    const double reward = reward_from_cost(cost, scale_);
    // Leaf to root, so a node's win test sees its parent's statistics from
    // before this simulation.
    for (std::size_t idx = path.size(); idx-- > 0;) {
        SearchNode* node = path[idx];
        if (idx > 0) {
            node->win_sum += cost.ms < path[idx - 1]->best_cost_ms ? 1.0 : 0.0;
        }
        node->visits += 1;
        node->cost_sum_ms += cost.ms;
        node->reward_sum += reward;
        if (cost.ms < node->best_cost_ms) {
            node->best_cost_ms = cost.ms;
            node->best_schedule = terminal;
        }
    }
}

void SearchTree::run_iteration() {
    std::vector<SearchNode*> path = select();
    SearchNode* frontier = path.back();
    if (!frontier->state.terminal() && frontier->has_untried()) {
        path.push_back(&expand(*frontier));
    }
    auto [terminal, cost] = simulate(path.back()->state);
    backpropagate(path, cost, terminal);
}

TreeOutcome SearchTree::run_root_decision() {
    if (root_->state.terminal()) {
        throw ValidationError("run_root_decision on a terminal root");
    }
    const auto t0 = std::chrono::steady_clock::now();
    std::uint64_t iterations = 0;
    for (;;) {
        run_iteration();
        ++iterations;

        if (cfg_.budget.kind == Budget::Kind::kIterations) {
            if (iterations >= cfg_.budget.iterations) break;
        } else {
            const double elapsed_ms =
                std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                    .count();
            if (elapsed_ms >= cfg_.budget.wall_ms) break;
        }
    }

    // The reported best is the tree-global one. With fresh roots it always
    // sits in the winner's subtree; a kept subtree may additionally remember
    // a better schedule from its own creation simulation.
    const Action winner = pick_winner(*root_);
    TreeOutcome outcome{*root_->best_schedule, Cost{root_->best_cost_ms}, winner, iterations};
    return outcome;
}

}  // namespace nesttune
