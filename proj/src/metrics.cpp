#include "moedr/metrics.hpp"

#include <stdexcept>

namespace moedr {

Metrics evaluate_metrics(const std::vector<int>& preds, const std::vector<int>& labels) {
  if (preds.empty()) throw std::invalid_argument("evaluate_metrics: empty input");
  if (preds.size() != labels.size()) {
    throw std::invalid_argument("evaluate_metrics: preds and labels differ in length");
  }
  Metrics m;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const bool p = preds[i] != 0, l = labels[i] != 0;
    if (p && l) ++m.tp;
    else if (p && !l) ++m.fp;
    else if (!p && !l) ++m.tn;
    else ++m.fn;
  }
  auto ratio = [&m](std::int64_t num, std::int64_t den) {
    if (den == 0) {
      m.undefined_flag = true;
      return 0.0;
    }
    return static_cast<double>(num) / static_cast<double>(den);
  };
  m.accuracy = static_cast<double>(m.tp + m.tn) / static_cast<double>(preds.size());
  m.precision = ratio(m.tp, m.tp + m.fp);
  m.recall = ratio(m.tp, m.tp + m.fn);
  m.specificity = ratio(m.tn, m.tn + m.fp);
  const double pr = m.precision + m.recall;
  m.f1 = pr > 0 ? 2.0 * m.precision * m.recall / pr : 0.0;
  return m;
}

}  // namespace moedr
