#pragma once

#include <cstdint>
#include <vector>

namespace moedr {

// Binary classification metrics; the positive class is depression (1).
// Ratios with a zero denominator are reported as 0 with the flag set.
struct Metrics {
  std::int64_t tp = 0, fp = 0, tn = 0, fn = 0;
  double accuracy = 0, precision = 0, recall = 0, f1 = 0, specificity = 0;
  bool undefined_flag = false;
};

Metrics evaluate_metrics(const std::vector<int>& preds, const std::vector<int>& labels);

}  // namespace moedr
