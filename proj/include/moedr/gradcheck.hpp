#pragma once

#include <functional>
#include <string>
#include <vector>

#include "moedr/rng.hpp"
#include "moedr/tensor.hpp"

namespace moedr {

struct GradCheckEntry {
  std::string param;
  double max_rel_err = 0.0;
  std::int64_t worst_coord = -1;
  std::int64_t coords_checked = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_err = 0.0;
  std::string worst_param;

  bool passed(double tolerance) const { return max_rel_err < tolerance; }
  std::string summary() const;
};

// Central-difference check of reverse-mode gradients. `loss_fn` must rebuild
// the forward graph from the current parameter values and be deterministic
// (gating noise off, fixed RNG). Checks a random subsample of at least 50
// coordinates per parameter (all of them for small tensors); the relative
// error is |analytic - numeric| / max(1e-8, |analytic| + |numeric|) with
// step h = 1e-5 * (1 + |theta|).
GradCheckReport gradcheck(const std::vector<Parameter>& params,
                          const std::function<Tensor()>& loss_fn,
                          RngStream& rng,
                          std::int64_t coords_per_param = 50);

}  // namespace moedr
