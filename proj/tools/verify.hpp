#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "scoreis/evaluation.hpp"

namespace scoreis::cli {

/// Collects named checks; `pass` is the conjunction.
class CheckList {
 public:
  void add(const std::string& name, double value, double tolerance, bool pass);
  void add_le(const std::string& name, double value, double tolerance) { add(name, value, tolerance, value <= tolerance); }
  bool pass() const { return pass_; }
  nlohmann::json to_json() const;

 private:
  nlohmann::json checks_ = nlohmann::json::array();
  bool pass_ = true;
};

CheckList verify_gradcheck(double tolerance, std::uint64_t seed);
CheckList verify_schedule(int steps, double eps_d);
CheckList verify_score_oracle(int steps, double eps_d, double tolerance, const QuadratureOptions& options);

struct GapSetup {
  std::string base_case = "8gaussians";  // or "gaussian-exp"
  std::string weight_spec = "norm_sq";
  double weight_floor = 1e-4;
  int probes = 20;
  std::uint64_t seed = 0;
  double epsilon = 1e-3;
  int steps = 1000;
  double eps_d = 0.008;
  std::vector<int> t_values;
};

struct GapOutcome {
  GapReport report;
  CheckList checks;
};

/// gaussian-exp: max gap <= 1e-8 everywhere. Otherwise the mean gap at the
/// smallest t must be below the mean gap at the largest t.
GapOutcome verify_gap(const GapSetup& setup, const QuadratureOptions& options);

}  // namespace scoreis::cli
