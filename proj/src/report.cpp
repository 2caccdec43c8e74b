#include "moedr/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace moedr {

namespace {

const char* kMetricNames[] = {"precision", "recall", "f1", "accuracy", "specificity"};

double metric_value(const Metrics& m, const std::string& name) {
  if (name == "accuracy") return m.accuracy;
  if (name == "precision") return m.precision;
  if (name == "recall") return m.recall;
  if (name == "f1") return m.f1;
  if (name == "specificity") return m.specificity;
  throw std::invalid_argument("unknown metric: " + name);
}

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), format, v);
  return buf;
}

std::string full(double v) { return fmt("%.17g", v); }
std::string pct2(double v) { return fmt("%.2f", v); }

}  // namespace

MetricAggregate aggregate_metric(const RunReport& report, const std::string& name) {
  if (report.entries.empty()) throw std::invalid_argument("aggregate over an empty report");
  double mean = 0;
  for (const auto& e : report.entries) mean += metric_value(e.metrics, name);
  mean /= static_cast<double>(report.entries.size());
  double var = 0;
  for (const auto& e : report.entries) {
    const double d = metric_value(e.metrics, name) - mean;
    var += d * d;
  }
  var /= static_cast<double>(report.entries.size());
  return {mean * 100.0, std::sqrt(var) * 100.0};
}

namespace {

std::string serialize(const RunReport& report, bool with_wall_clock) {
  std::ostringstream os;
  os << "format = \"moedr-report/1\"\n";
  os << "partial = " << (report.partial ? "true" : "false") << "\n";
  if (with_wall_clock) os << "wall_clock_seconds = " << fmt("%.3f", report.wall_clock_seconds) << "\n";
  std::istringstream cfg(serialize_config(report.config));
  std::string line;
  while (std::getline(cfg, line)) os << "config." << line << "\n";
  for (const auto& e : report.entries) {
    const std::string base = "entry.r" + std::to_string(e.run) + ".f" + std::to_string(e.fold) + ".";
    os << base << "tp = " << e.metrics.tp << "\n";
    os << base << "fp = " << e.metrics.fp << "\n";
    os << base << "tn = " << e.metrics.tn << "\n";
    os << base << "fn = " << e.metrics.fn << "\n";
    for (const char* name : kMetricNames) {
      os << base << name << " = " << full(metric_value(e.metrics, name)) << "\n";
    }
    os << base << "undefined = " << (e.metrics.undefined_flag ? "true" : "false") << "\n";
  }
  if (report.complete()) {
    for (const char* name : kMetricNames) {
      const auto agg = aggregate_metric(report, name);
      os << "aggregate." << name << ".mean = " << pct2(agg.mean_pct) << "\n";
      os << "aggregate." << name << ".std = " << pct2(agg.std_pct) << "\n";
    }
  }
  return os.str();
}

}  // namespace

std::string report_to_string(const RunReport& report) { return serialize(report, true); }
std::string report_canonical_string(const RunReport& report) { return serialize(report, false); }

void emit_report(const RunReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write report: " + path);
  out << report_to_string(report);
  if (!out) throw std::runtime_error("short write to " + path);
}

RunReport parse_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open report: " + path);
  std::map<std::string, std::string> kv;
  std::ostringstream config_text;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected key = value");
    }
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    while (!key.empty() && key.back() == ' ') key.pop_back();
    while (!value.empty() && value.front() == ' ') value.erase(value.begin());
    if (key.rfind("config.", 0) == 0) {
      config_text << key.substr(7) << " = " << value << "\n";
    } else {
      kv[key] = value;
    }
  }
  if (kv.count("format") == 0 || kv["format"] != "\"moedr-report/1\"") {
    throw std::runtime_error(path + ": not a moedr report file");
  }

  RunReport report;
  report.config = parse_config_text(config_text.str(), path + " (config echo)");
  report.partial = kv.count("partial") && kv["partial"] == "true";
  if (kv.count("wall_clock_seconds")) report.wall_clock_seconds = std::stod(kv["wall_clock_seconds"]);

  std::map<std::pair<int, int>, FoldEntry> entries;
  for (const auto& [key, value] : kv) {
    if (key.rfind("entry.r", 0) != 0) continue;
    // entry.r<run>.f<fold>.<field>
    int run = 0, fold = 0;
    char field[32] = {0};
    if (std::sscanf(key.c_str(), "entry.r%d.f%d.%31s", &run, &fold, field) != 3) {
      throw std::runtime_error(path + ": malformed entry key " + key);
    }
    auto& e = entries[{run, fold}];
    e.run = run;
    e.fold = fold;
    const std::string f = field;
    if (f == "tp") e.metrics.tp = std::stoll(value);
    else if (f == "fp") e.metrics.fp = std::stoll(value);
    else if (f == "tn") e.metrics.tn = std::stoll(value);
    else if (f == "fn") e.metrics.fn = std::stoll(value);
    else if (f == "accuracy") e.metrics.accuracy = std::stod(value);
    else if (f == "precision") e.metrics.precision = std::stod(value);
    else if (f == "recall") e.metrics.recall = std::stod(value);
    else if (f == "f1") e.metrics.f1 = std::stod(value);
    else if (f == "specificity") e.metrics.specificity = std::stod(value);
    else if (f == "undefined") e.metrics.undefined_flag = value == "true";
    else throw std::runtime_error(path + ": unknown entry field " + f);
  }
  for (auto& [rf, e] : entries) report.entries.push_back(e);
  return report;
}

std::string render_table(const RunReport& report) {
  std::ostringstream os;
  const std::string arch = to_string(report.config.head);
  os << "Architecture";
  os << std::string(arch.size() > 12 ? 2 : 14 - arch.size(), ' ');
  os << "Precision  Recall     F1-score   Accuracy   Specificity\n";
  if (!report.complete()) {
    os << arch << "  (partial report: " << report.entries.size() << " of "
       << report.config.runs * report.config.folds << " fold entries; no aggregate)\n";
    return os.str();
  }
  auto cell = [](const std::string& s) {
    std::string c = s;
    if (c.size() < 11) c += std::string(11 - c.size(), ' ');
    return c;
  };
  std::string mean_row = arch + std::string(arch.size() < 14 ? 14 - arch.size() : 2, ' ');
  std::string std_row(mean_row.size(), ' ');
  for (const char* name : {"precision", "recall", "f1", "accuracy", "specificity"}) {
    const auto agg = aggregate_metric(report, name);
    mean_row += cell(pct2(agg.mean_pct));
    std_row += cell("+-" + pct2(agg.std_pct));
  }
  os << mean_row << "\n" << std_row << "\n";
  return os.str();
}

std::string render_sweep_table(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << "experts  accuracy\n";
  for (const auto& r : rows) {
    std::string n = std::to_string(r.n_experts);
    os << n << std::string(9 - n.size(), ' ') << pct2(r.mean_accuracy_pct) << " +- "
       << pct2(r.std_accuracy_pct) << "\n";
  }
  return os.str();
}

}  // namespace moedr
