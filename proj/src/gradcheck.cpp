#include "moedr/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace moedr {

std::string GradCheckReport::summary() const {
  std::ostringstream os;
  for (const auto& e : entries) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3e", e.max_rel_err);
    os << e.param << ": max rel err " << buf << " (" << e.coords_checked << " coords)\n";
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3e", max_rel_err);
  os << "overall max rel err " << buf << " at " << worst_param << "\n";
  return os.str();
}

GradCheckReport gradcheck(const std::vector<Parameter>& params,
                          const std::function<Tensor()>& loss_fn,
                          RngStream& rng,
                          std::int64_t coords_per_param) {
  coords_per_param = std::max<std::int64_t>(coords_per_param, 50);

  for (const auto& p : params) const_cast<Parameter&>(p).value.zero_grad();
  Tensor loss = loss_fn();
  loss.backward();
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) analytic.push_back(p.grad());

  GradCheckReport report;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = const_cast<Parameter&>(params[pi]);
    const std::int64_t n = p.size();

    std::vector<std::int64_t> coords;
    if (n <= coords_per_param) {
      coords.resize(static_cast<std::size_t>(n));
      for (std::int64_t i = 0; i < n; ++i) coords[static_cast<std::size_t>(i)] = i;
    } else {
      for (std::int64_t i = 0; i < coords_per_param; ++i) {
        coords.push_back(static_cast<std::int64_t>(rng.uniform_int(static_cast<std::uint64_t>(n))));
      }
      std::sort(coords.begin(), coords.end());
      coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
    }

    GradCheckEntry entry;
    entry.param = p.name();
    entry.coords_checked = static_cast<std::int64_t>(coords.size());
    for (std::int64_t c : coords) {
      auto cu = static_cast<std::size_t>(c);
      const double theta = p.data()[cu];
      const double h = 1e-5 * (1.0 + std::abs(theta));
      p.data()[cu] = theta + h;
      const double up = loss_fn().item();
      p.data()[cu] = theta - h;
      const double down = loss_fn().item();
      p.data()[cu] = theta;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[pi][cu];
      const double rel = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      if (rel > entry.max_rel_err) {
        entry.max_rel_err = rel;
        entry.worst_coord = c;
      }
    }
    if (entry.max_rel_err > report.max_rel_err) {
      report.max_rel_err = entry.max_rel_err;
      report.worst_param = entry.param;
    }
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace moedr
