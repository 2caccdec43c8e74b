#pragma once

#include <string>
#include <vector>

#include "moedr/config.hpp"
#include "moedr/metrics.hpp"

namespace moedr {

struct FoldEntry {
  int run = 0;
  int fold = 0;
  Metrics metrics;
};

// Per-(run, fold) metrics plus the config echo. Aggregates are recomputed
// from the entries; a report missing entries is marked partial and carries
// no aggregate block.
struct RunReport {
  ModelConfig config;
  std::vector<FoldEntry> entries;  // ordered by (run, fold)
  bool partial = false;
  double wall_clock_seconds = 0.0;

  bool complete() const {
    return !partial && static_cast<std::int64_t>(entries.size()) == config.runs * config.folds;
  }
};

struct MetricAggregate {
  double mean_pct = 0.0;  // percentage points
  double std_pct = 0.0;   // population std, percentage points
};

// name is one of accuracy|precision|recall|f1|specificity.
MetricAggregate aggregate_metric(const RunReport& report, const std::string& name);

// Key-value report file (`key = value` per line). Entry metrics keep full
// precision; aggregates are rendered as percentages with two decimals.
std::string report_to_string(const RunReport& report);
// Same serialization minus the wall-clock line; two equal-seed runs must
// produce identical canonical strings.
std::string report_canonical_string(const RunReport& report);

void emit_report(const RunReport& report, const std::string& path);
RunReport parse_report(const std::string& path);

// Table-style rendering: Precision, Recall, F1-score, Accuracy, Specificity;
// mean row over std row.
std::string render_table(const RunReport& report);

struct SweepRow {
  std::int64_t n_experts = 0;
  double mean_accuracy_pct = 0.0;
  double std_accuracy_pct = 0.0;
};

std::string render_sweep_table(const std::vector<SweepRow>& rows);

}  // namespace moedr
