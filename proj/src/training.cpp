#include "reenact/training.hpp"

#include <cmath>
#include <cstdio>

namespace reenact {

double LossReport::get(const std::string& name) const {
  for (const auto& [n, v] : terms)
    if (n == name) return v;
  throw std::out_of_range("no loss term named " + name);
}

std::string LossReport::str() const {
  std::string out;
  char buf[96];
  for (const auto& [n, v] : terms) {
    std::snprintf(buf, sizeof buf, "%s%s=%.6g", out.empty() ? "" : " ", n.c_str(), v);
    out += buf;
  }
  return out;
}

void check_finite(const LossReport& r, const std::string& stage) {
  for (const auto& [n, v] : r.terms)
    if (!std::isfinite(v)) throw TrainingError(stage + ": non-finite loss " + n + " (" + r.str() + ")");
}

}  // namespace reenact
