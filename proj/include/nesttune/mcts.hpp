#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nesttune/cost.hpp"
#include "nesttune/mdp.hpp"
#include "nesttune/rng.hpp"

namespace nesttune {

// Tree-policy score variants. Scores are maximized during selection.
//
//   kInverseAvgMultiplicative: (1 / avg_cost) * (1 + c * sqrt(ln n / n_j))
//   kAvgInverseAdditive:       avg_reward + c * sqrt(2 ln n / n_j)
//   kAdaptiveCp:               avg_reward + avg_reward * sqrt(2 ln n / n_j)
//   kBinaryReward:             win_rate   + c * sqrt(2 ln n / n_j)
//
// Rewards are cost normalized through the tree's RewardScale so the additive
// variants stay in the [0,1] regime; the multiplicative family works on raw
// average cost.
struct UcbVariant {
    enum class Kind {
        kInverseAvgMultiplicative,
        kAvgInverseAdditive,
        kAdaptiveCp,
        kBinaryReward,
    };

    Kind kind = Kind::kInverseAvgMultiplicative;
    double c = 1.0;

    static UcbVariant inverse_avg_multiplicative(double c_mult) {
        return {Kind::kInverseAvgMultiplicative, c_mult};
    }
    static UcbVariant avg_inverse_additive(double c_p) { return {Kind::kAvgInverseAdditive, c_p}; }
    static UcbVariant adaptive_cp() { return {Kind::kAdaptiveCp, 0.0}; }
    static UcbVariant binary_reward(double c_p) { return {Kind::kBinaryReward, c_p}; }

    void validate() const;
};

enum class SimulationPolicy { kUniformRandom, kPureGreedy };
enum class RerootMode { kFreshTree, kKeepSubtree };

// Per-root-decision computation budget: an iteration count or a wall-clock
// timeout, never both.
struct Budget {
    enum class Kind { kIterations, kWallClockMs };

    Kind kind = Kind::kIterations;
    std::uint64_t iterations = 0;
    double wall_ms = 0.0;

    static Budget by_iterations(std::uint64_t n) { return {Kind::kIterations, n, 0.0}; }
    static Budget by_wall_clock_ms(double ms) { return {Kind::kWallClockMs, 0, ms}; }

    void validate() const;
};

struct TreeConfig {
    UcbVariant ucb;
    SimulationPolicy simulation = SimulationPolicy::kUniformRandom;
    Budget budget = Budget::by_iterations(100);
    std::uint64_t seed = 0;
    RerootMode reroot = RerootMode::kFreshTree;
    // Fixed reward anchor; when absent the first cost the search sees
    // becomes the reference.
    std::optional<double> reward_reference_ms;

    void validate() const;
};

struct SearchNode {
    explicit SearchNode(PartialSchedule s) : state(std::move(s)) {}

    PartialSchedule state;
    std::uint64_t visits = 0;
    double cost_sum_ms = 0.0;
    double reward_sum = 0.0;
    double win_sum = 0.0;
    double best_cost_ms = std::numeric_limits<double>::infinity();
    std::optional<PartialSchedule> best_schedule;
    std::map<SchedulingDecision, std::unique_ptr<SearchNode>> children;

    // Total legal actions at this state; children.size() of them are tried.
    std::uint64_t action_count = 0;
    // Lazily materialized complement of children, used once expansion has
    // consumed enough of the space that rejection sampling gets wasteful.
    std::optional<std::vector<SchedulingDecision>> untried_pool;

    bool has_untried() const { return children.size() < action_count; }
    double avg_cost_ms() const { return cost_sum_ms / static_cast<double>(visits); }
};

struct TreeOutcome {
    PartialSchedule best_schedule;  // terminal
    Cost best_cost;
    Action winner_action;
    std::uint64_t iterations_run = 0;
};

// Tree-policy score of a visited child. parent_visits is `n` in the UCB
// formulas; it only enters through ln(n).
double ucb_score(const SearchNode& child, double parent_visits, const UcbVariant& v);

// Root child with the minimum best cost (not minimum average). Ties break
// toward more visits, then canonical action order.
Action pick_winner(const SearchNode& root);

// One Monte Carlo search tree over the scheduling MDP. Single-writer: all
// mutation happens on the thread running its iterations.
class SearchTree {
  public:
    SearchTree(const Pipeline& p, TreeConfig cfg, CostEvaluator& evaluator);

    // Moves the root to `state`: fresh node, or the matching child subtree
    // when the config says to keep statistics.
    void reset_root(const PartialSchedule& state);

    // select -> expand -> simulate -> backpropagate until the budget is
    // spent, then picks the winning root action.
    TreeOutcome run_root_decision();

    // One select/expand/simulate/backpropagate pass.
    void run_iteration();

    const SearchNode& root() const { return *root_; }
    const TreeConfig& config() const { return cfg_; }
    RewardScale& reward_scale() { return scale_; }

    // Search primitives, exposed so tests can drive single steps.
    std::vector<SearchNode*> select();
    SearchNode& expand(SearchNode& node);
    std::pair<PartialSchedule, Cost> simulate(const PartialSchedule& start);
    void backpropagate(std::span<SearchNode* const> path, Cost cost,
                       const PartialSchedule& terminal);

  private:
    const ActionSpace& space_for(int stage);
    SchedulingDecision draw_untried(SearchNode& node);
    Cost evaluate_observed(const PartialSchedule& terminal);

    const Pipeline* pipeline_;
    TreeConfig cfg_;
    CostEvaluator* evaluator_;
    Rng rng_;
    RewardScale scale_;
    std::vector<std::optional<ActionSpace>> spaces_;  // by stage index
    std::unique_ptr<SearchNode> root_;
};

}  // namespace nesttune
