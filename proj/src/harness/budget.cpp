#include "fewshot/harness/budget.hpp"

#include <algorithm>

#include "fewshot/error.hpp"

namespace fewshot::harness {

BudgetClock::BudgetClock(double limit_seconds) : start_(clock::now()), limit_(limit_seconds) {
  if (!(limit_seconds > 0.0)) throw ConfigError("budget must be > 0 seconds");
}

double BudgetClock::elapsed() const { return std::chrono::duration<double>(clock::now() - start_).count(); }

double BudgetClock::mark(std::string label) {
  double t = elapsed();
  if (!checkpoints_.empty()) t = std::max(t, checkpoints_.back().second);
  checkpoints_.emplace_back(std::move(label), t);
  return t;
}

}  // namespace fewshot::harness
