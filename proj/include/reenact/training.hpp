#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace reenact {

struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Named scalar losses of one training step.
struct LossReport {
  std::vector<std::pair<std::string, double>> terms;

  void add(std::string name, double value) { terms.emplace_back(std::move(name), value); }
  double get(const std::string& name) const;
  std::string str() const;
  bool operator==(const LossReport&) const = default;
};

// Throws TrainingError naming the first non-finite term.
void check_finite(const LossReport& r, const std::string& stage);

}  // namespace reenact
