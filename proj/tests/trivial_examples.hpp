#pragma once

#include <string>
#include <vector>

namespace nlm::testing {

struct Check {
  std::string module;
  std::string name;
  bool ok = false;
  std::string detail;
};

/// Every hand-checkable example of the metrics, objectives and data modules,
/// evaluated exactly as stated (closed forms, identities and invariants).
std::vector<Check> trivial_examples();

}  // namespace nlm::testing
