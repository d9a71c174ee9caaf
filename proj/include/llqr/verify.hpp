#pragma once

#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace llqr {

enum class Mutation { None, FlipRiccatiMixedSign };

struct CriterionResult {
  std::string name;
  std::string tags;  // space-separated; the filter matches name or tags
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
  double limit_seconds = 0.0;
};

struct VerifyReport {
  std::vector<CriterionResult> results;
  bool all_passed() const;
  nlohmann::json to_json() const;
};

std::vector<std::string> verify_criteria();

// Runs every criterion whose name contains `filter` (all when empty). Each
// criterion is self-contained, pins its own tolerances, and also fails if it
// exceeds its runtime budget. `mutation` injects a deliberate fault so the
// suite can demonstrate its own sensitivity.
VerifyReport run_verify(const std::string& filter = "", Mutation mutation = Mutation::None,
                        bool verbose = false);

}  // namespace llqr
