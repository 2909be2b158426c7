#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace icgmvs {

struct SelftestCase {
  std::string name;
  bool passed = false;
  std::string detail;
};

// Runs the contract examples of every module as assertions. `scratch_dir` is
// used for file round trips.
std::vector<SelftestCase> run_selftest(const std::string& scratch_dir);

}  // namespace icgmvs
