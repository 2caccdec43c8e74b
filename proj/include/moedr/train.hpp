#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "moedr/container.hpp"
#include "moedr/model.hpp"
#include "moedr/ops.hpp"
#include "moedr/report.hpp"

namespace moedr {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(std::vector<Parameter> params, AdamConfig cfg = {});

  void zero_grad();
  void step();
  std::int64_t steps() const { return t_; }

 private:
  std::vector<Parameter> params_;
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::int64_t t_ = 0;
};

// Mean cross-entropy plus alpha * (L_imp + L_load) when the auxiliary pair
// is present (sparse-MoE head); plain cross-entropy otherwise.
Tensor total_loss(const std::vector<Tensor>& logits, const std::vector<int>& labels,
                  const std::optional<std::pair<Tensor, Tensor>>& aux, double alpha);

// Subject-disjoint, label-stratified folds. Shuffling is keyed by run_seed,
// folds partition the index range, and per-fold class counts differ by at
// most one within each class.
std::vector<std::pair<std::vector<int>, std::vector<int>>> kfold_split(
    const std::vector<Label>& labels, std::int64_t folds, std::uint64_t run_seed);

struct StepLoss {
  int run = 0, fold = 0;
  std::int64_t epoch = 0, step = 0;
  double total = 0, ce = 0, imp = 0, load = 0;
};

struct TrainedFold {
  int run = 0, fold = 0;
  Metrics metrics;
  TensorContainer weights;
};

struct TrainOptions {
  int workers = 1;
  bool collect_step_log = false;
  bool collect_weights = true;
};

struct ExperimentResult {
  RunReport report;
  std::vector<TrainedFold> folds;   // ordered by (run, fold)
  std::vector<StepLoss> step_log;   // when collected, ordered by (run, fold, step)
};

// Trains one fold: model init, epoch shuffles, and gating noise all come
// from streams derived from (run_seed, fold), so folds can run on any
// worker with identical results.
TrainedFold train_fold(const ModelConfig& cfg, const Dataset& data,
                       const std::vector<int>& train_idx, const std::vector<int>& test_idx,
                       int run, int fold, const TrainOptions& opts,
                       std::vector<StepLoss>* step_log);

// The full protocol: `runs` repetitions of k-fold cross-validation with
// per-run reshuffled splits (run seed = base seed + run index). Folds may
// train on parallel workers; the report is identical for any worker count.
ExperimentResult run_experiment(const ModelConfig& cfg, const Dataset& data,
                                const TrainOptions& opts = {});

}  // namespace moedr
