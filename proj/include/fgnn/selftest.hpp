#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fgnn {

struct SelfTestResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Compact invariant suite: gradient check of a small model, attention
/// normalization, mask-readout exactness, BCS nesting and the metric
/// definitions. Runs in well under a second.
std::vector<SelfTestResult> run_selftest(std::uint64_t seed = 7);

}  // namespace fgnn
