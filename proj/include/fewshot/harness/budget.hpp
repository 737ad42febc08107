#pragma once

#include <chrono>
#include <string>
#include <utility>
#include <vector>

namespace fewshot::harness {

class BudgetClock {
 public:
  using clock = std::chrono::steady_clock;

  explicit BudgetClock(double limit_seconds);

  double elapsed() const;
  double limit() const { return limit_; }
  bool exhausted() const { return elapsed() >= limit_; }
  // Records a named reading; readings never decrease.
  double mark(std::string label);
  const std::vector<std::pair<std::string, double>>& checkpoints() const { return checkpoints_; }

 private:
  clock::time_point start_;
  double limit_;
  std::vector<std::pair<std::string, double>> checkpoints_;
};

}  // namespace fewshot::harness
