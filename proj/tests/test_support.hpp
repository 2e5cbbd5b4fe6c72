#pragma once

#include <functional>
#include <string>

#include "nesttune/cost.hpp"
#include "nesttune/mdp.hpp"

namespace nesttune::testing {

// Evaluator with a caller-supplied cost function; keeps tests independent of
// the analytical model when they need hand-picked landscapes.
class ScriptedEvaluator : public CostEvaluator {
  public:
    explicit ScriptedEvaluator(std::function<double(const PartialSchedule&)> fn)
        : fn_(std::move(fn)) {}

    bool is_measurement() const override { return false; }

  protected:
    Cost do_evaluate(const PartialSchedule& s) override { return Cost{fn_(s)}; }

  private:
    std::function<double(const PartialSchedule&)> fn_;
};

inline std::string fixture_path(const std::string& name) {
    return std::string(FIXTURE_DIR) + "/" + name;
}

}  // namespace nesttune::testing
