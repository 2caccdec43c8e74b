#include "moedr/train.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "moedr/moe.hpp"

namespace moedr {

Adam::Adam(std::vector<Parameter> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  for (const auto& p : params_) {
    m_.emplace_back(static_cast<std::size_t>(p.size()), 0.0);
    v_.emplace_back(static_cast<std::size_t>(p.size()), 0.0);
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t pi = 0; pi < params_.size(); ++pi) {
    auto& theta = params_[pi].data();
    const auto& grad = params_[pi].grad();
    auto& m = m_[pi];
    auto& v = v_[pi];
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double g = grad[i];
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      theta[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

Tensor total_loss(const std::vector<Tensor>& logits, const std::vector<int>& labels,
                  const std::optional<std::pair<Tensor, Tensor>>& aux, double alpha) {
  Tensor ce = cross_entropy_mean(logits, labels);
  if (!aux) return ce;
  return add(ce, scale(add(aux->first, aux->second), alpha));
}

std::vector<std::pair<std::vector<int>, std::vector<int>>> kfold_split(
    const std::vector<Label>& labels, std::int64_t folds, std::uint64_t run_seed) {
  const auto n = static_cast<std::int64_t>(labels.size());
  if (folds < 2) throw std::invalid_argument("kfold_split: folds must be >= 2");
  if (n < folds) {
    throw std::invalid_argument("kfold_split: fewer subjects (" + std::to_string(n) +
                                ") than folds (" + std::to_string(folds) + ")");
  }
  RngStream rng(run_seed, 1);
  std::vector<std::vector<int>> test(static_cast<std::size_t>(folds));
  for (int cls = 0; cls < 2; ++cls) {
    std::vector<int> members;
    for (std::int64_t i = 0; i < n; ++i) {
      if (static_cast<int>(labels[static_cast<std::size_t>(i)]) == cls) members.push_back(static_cast<int>(i));
    }
    rng.shuffle(members);
    for (std::size_t j = 0; j < members.size(); ++j) {
      test[j % static_cast<std::size_t>(folds)].push_back(members[j]);
    }
  }
  std::vector<std::pair<std::vector<int>, std::vector<int>>> out;
  for (std::int64_t f = 0; f < folds; ++f) {
    auto& te = test[static_cast<std::size_t>(f)];
    std::sort(te.begin(), te.end());
    std::vector<int> tr;
    std::vector<bool> in_test(static_cast<std::size_t>(n), false);
    for (int i : te) in_test[static_cast<std::size_t>(i)] = true;
    for (std::int64_t i = 0; i < n; ++i) {
      if (!in_test[static_cast<std::size_t>(i)]) tr.push_back(static_cast<int>(i));
    }
    out.emplace_back(std::move(tr), te);
  }
  return out;
}

TrainedFold train_fold(const ModelConfig& cfg, const Dataset& data,
                       const std::vector<int>& train_idx, const std::vector<int>& test_idx,
                       int run, int fold, const TrainOptions& opts,
                       std::vector<StepLoss>* step_log) {
  const std::uint64_t run_seed = cfg.seed + static_cast<std::uint64_t>(run);
  RngStream run_root = RngStream::root(run_seed);
  RngStream init_rng = run_root.split(100 + static_cast<std::uint64_t>(fold));
  RngStream shuffle_rng = run_root.split(200 + static_cast<std::uint64_t>(fold));
  RngStream noise_rng = run_root.split(300 + static_cast<std::uint64_t>(fold));

  bool has0 = false, has1 = false;
  for (int i : train_idx) {
    (data[static_cast<std::size_t>(i)].label == Label::control ? has0 : has1) = true;
  }
  if (!has0 || !has1) {
    throw std::runtime_error("run " + std::to_string(run) + " fold " + std::to_string(fold) +
                             ": a class is empty in the training fold");
  }

  Model model(cfg, init_rng);
  Adam adam(model.parameters(), {cfg.lr});
  const bool sparse = cfg.head == HeadKind::sparse_moe;

  std::vector<int> order(train_idx);
  for (std::int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    std::int64_t step = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      adam.zero_grad();

      std::vector<Tensor> logits;
      std::vector<int> labels;
      std::vector<Tensor> gates;
      std::vector<SparseMoE::GateOut> gate_outs;
      for (std::size_t b = start; b < end; ++b) {
        const auto& sample = data[static_cast<std::size_t>(order[b])];
        HeadForward out = model.forward(sample.features, Mode::train, &noise_rng);
        logits.push_back(out.logits);
        labels.push_back(static_cast<int>(sample.label));
        if (out.gate) {
          gates.push_back(out.gate->gate);
          gate_outs.push_back(std::move(*out.gate));
        }
      }

      std::optional<std::pair<Tensor, Tensor>> aux;
      if (sparse) {
        aux.emplace(importance_loss(gates), load_loss(*model.head().sparse(), gate_outs));
      }
      Tensor ce = cross_entropy_mean(logits, labels);
      Tensor loss = aux ? add(ce, scale(add(aux->first, aux->second), cfg.alpha)) : ce;

      const double loss_v = loss.item();
      if (!std::isfinite(loss_v)) {
        throw std::runtime_error("run " + std::to_string(run) + " fold " + std::to_string(fold) +
                                 " epoch " + std::to_string(epoch) + " step " + std::to_string(step) +
                                 ": non-finite loss " + std::to_string(loss_v));
      }
      loss.backward();
      adam.step();

      if (step_log) {
        StepLoss sl;
        sl.run = run;
        sl.fold = fold;
        sl.epoch = epoch;
        sl.step = step;
        sl.total = loss_v;
        sl.ce = ce.item();
        sl.imp = aux ? aux->first.item() : 0.0;
        sl.load = aux ? aux->second.item() : 0.0;
        step_log->push_back(sl);
      }
      ++step;
    }
  }

  TrainedFold result;
  result.run = run;
  result.fold = fold;
  std::vector<int> preds, labels;
  for (int i : test_idx) {
    const auto& sample = data[static_cast<std::size_t>(i)];
    preds.push_back(model.predict(sample.features));
    labels.push_back(static_cast<int>(sample.label));
  }
  result.metrics = evaluate_metrics(preds, labels);
  if (opts.collect_weights) model.export_weights(result.weights);
  return result;
}

ExperimentResult run_experiment(const ModelConfig& cfg, const Dataset& data,
                                const TrainOptions& opts) {
  validate_config(cfg);
  const auto t0 = std::chrono::steady_clock::now();

  std::vector<Label> labels;
  labels.reserve(data.size());
  for (const auto& s : data) labels.push_back(s.label);

  // Splits depend only on (seed, run), never on workers.
  std::vector<std::vector<std::pair<std::vector<int>, std::vector<int>>>> splits;
  for (std::int64_t r = 0; r < cfg.runs; ++r) {
    splits.push_back(kfold_split(labels, cfg.folds, cfg.seed + static_cast<std::uint64_t>(r)));
  }

  const std::int64_t jobs = cfg.runs * cfg.folds;
  std::vector<TrainedFold> results(static_cast<std::size_t>(jobs));
  std::vector<std::vector<StepLoss>> logs(static_cast<std::size_t>(jobs));

  std::atomic<std::int64_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mu;
  auto worker = [&]() {
    for (;;) {
      const std::int64_t j = next.fetch_add(1);
      if (j >= jobs) return;
      const int r = static_cast<int>(j / cfg.folds);
      const int f = static_cast<int>(j % cfg.folds);
      try {
        const auto& [tr, te] = splits[static_cast<std::size_t>(r)][static_cast<std::size_t>(f)];
        results[static_cast<std::size_t>(j)] =
            train_fold(cfg, data, tr, te, r, f, opts,
                       opts.collect_step_log ? &logs[static_cast<std::size_t>(j)] : nullptr);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!first_error) first_error = std::current_exception();
        next.store(jobs);
        return;
      }
    }
  };

  const int n_workers = std::max(1, std::min<int>(opts.workers, static_cast<int>(jobs)));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < n_workers; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  ExperimentResult out;
  out.report.config = cfg;
  for (auto& r : results) {
    out.report.entries.push_back({r.run, r.fold, r.metrics});
    out.folds.push_back(std::move(r));
  }
  for (auto& l : logs) {
    out.step_log.insert(out.step_log.end(), l.begin(), l.end());
  }
  out.report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

}  // namespace moedr
