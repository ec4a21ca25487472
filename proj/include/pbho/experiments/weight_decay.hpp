// Copyright 2026 The pbho Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Overfitting a tiny validation set with one decay hyperparameter per
// weight. Each seed draws 50 training and 50 validation examples from a
// pool, runs Adam on the weights between RMSProp steps on the decays, and
// records the full trace.

#ifndef PBHO_EXPERIMENTS_WEIGHT_DECAY_HPP_
#define PBHO_EXPERIMENTS_WEIGHT_DECAY_HPP_

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "pbho/errors.hpp"
#include "pbho/experiments/stats.hpp"
#include "pbho/hyperopt/hyperopt.hpp"
#include "pbho/models/generators.hpp"
#include "pbho/models/loaders.hpp"
#include "pbho/models/model.hpp"

namespace pbho {

enum class WdDataset { kMnist, kMixture };

struct WeightDecayConfig {
  WdDataset dataset = WdDataset::kMnist;
  std::string mnist_dir = "data/mnist";
  GaussianMixtureSpec mixture;
  std::uint64_t mixture_seed = 0;  // fixes the cluster means
  std::size_t mixture_pool = 1000;
  std::size_t mixture_test = 2000;

  ModelKind model = ModelKind::kLinearSoftmax;
  std::size_t hidden = 32;  // mlp only
  Activation activation = Activation::kRelu;

  ObjectiveKind objective = ObjectiveKind::kEq5;
  double zeta = 1.41e-3;
  std::size_t n_train = 50, n_val = 50;
  std::size_t inner_steps = 1000;
  std::size_t outer_steps = 100;
  double adam_lr = 1e-4;
  double outer_lr = 1e-2;
  double lambda0 = 0.0;  // initial log decay, every parameter
  double init_sd = 0.01;
  // MNIST inputs are mapped to (x - input_shift) / input_scale before use;
  // the defaults are the usual pixel mean and standard deviation. Mixture
  // data is already centred and is left alone.
  double input_shift = 0.1307, input_scale = 0.3081;
  bool standardize = true;
  std::size_t workers = 0;  // seeds in parallel; 0 = all cores

  void validate() const {
    if (model != ModelKind::kLinearSoftmax && model != ModelKind::kMlp)
      throw ConfigError("weight_decay.model", "must be linear-softmax or mlp");
    if (n_train == 0 || n_val == 0) throw ConfigError("weight_decay.n_train", "must be positive");
    if (inner_steps == 0 || outer_steps == 0)
      throw ConfigError("weight_decay.inner_steps", "step counts must be positive");
    if (!(adam_lr > 0.0)) throw ConfigError("weight_decay.adam_lr", "must be positive");
    if (!(outer_lr > 0.0)) throw ConfigError("weight_decay.outer_lr", "must be positive");
    if (!(zeta >= 0.0)) throw ConfigError("weight_decay.zeta", "must be non-negative");
    if (!std::isfinite(lambda0)) throw ConfigError("weight_decay.lambda0", "must be finite");
    if (!(input_scale > 0.0)) throw ConfigError("weight_decay.input_scale", "must be positive");
  }
};

// Pool the per-seed splits are drawn from, plus the fixed test set.
struct WeightDecayData {
  Dataset pool;
  Dataset test;

  static WeightDecayData load(const WeightDecayConfig& cfg) {
    WeightDecayData d;
    if (cfg.dataset == WdDataset::kMnist) {
      MnistSplit m = load_mnist_dir(cfg.mnist_dir);
      d = {std::move(m.train), std::move(m.test)};
    } else {
      GaussianMixture g(cfg.mixture, cfg.mixture_seed);
      d = {g.sample(cfg.mixture_pool, "pool"), g.sample(cfg.mixture_test, "test")};
    }
    if (cfg.dataset == WdDataset::kMnist && cfg.standardize) {
      for (Dataset* s : {&d.pool, &d.test})
        for (double& x : s->X.data) x = (x - cfg.input_shift) / cfg.input_scale;
    }
    return d;
  }
};

struct WeightDecayRun {
  std::uint64_t seed = 0;
  ObjectiveKind objective = ObjectiveKind::kEq5;
  double zeta = 0.0;
  std::vector<HistoryRow> records;  // one per outer step
  std::vector<double> lambda;       // final decays (log scale)
};

inline Problem weight_decay_problem(const WeightDecayConfig& cfg, const WeightDecayData& data,
                                    std::uint64_t seed) {
  cfg.validate();
  if (cfg.n_train + cfg.n_val > data.pool.size())
    throw ConfigError("weight_decay.n_train", "train + val exceeds the pool size");
  Rng rng = make_rng(seed, "wd/split");
  std::vector<std::size_t> idx(data.pool.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::shuffle(idx.begin(), idx.end(), rng);
  const std::vector<std::size_t> tr(idx.begin(), idx.begin() + cfg.n_train);
  const std::vector<std::size_t> va(idx.begin() + cfg.n_train,
                                    idx.begin() + cfg.n_train + cfg.n_val);
  const int classes = data.pool.num_classes;
  ModelDims dims{data.pool.dim(), classes, cfg.hidden, cfg.activation};
  Model model(cfg.model, dims);
  LossSpec spec;
  spec.base = BaseLoss::kSoftmaxCrossEntropy;
  spec.decay = DecayMode::kPerParameter;
  InnerConfig inner;
  inner.kind = InnerKind::kAdam;
  inner.adam.lr = cfg.adam_lr;
  InitDistribution init;
  init.sd = cfg.init_sd;
  return make_problem(model, spec, data.pool.subset(tr), data.pool.subset(va), data.test, init,
                      std::vector<double>(model.num_params(), cfg.lambda0), inner);
}

inline HyperOptConfig weight_decay_hyperopt(const WeightDecayConfig& cfg) {
  HyperOptConfig h;
  h.objective = cfg.objective;
  h.zeta = cfg.zeta;
  h.T = cfg.inner_steps;
  h.K = 0;
  h.C = 1;
  h.outer = OuterOptimizerKind::kRmsProp;
  h.outer_lr = cfg.outer_lr;
  h.outer_steps = cfg.outer_steps;
  h.reinit_inner = false;
  h.val_hypergrad = ValHypergrad::kT1T2;
  return h;
}

inline WeightDecayRun run_weight_decay_seed(const WeightDecayConfig& cfg,
                                            const WeightDecayData& data, std::uint64_t seed) {
  const Problem p = weight_decay_problem(cfg, data, seed);
  HyperOptResult r = HyperOptimizer(p, weight_decay_hyperopt(cfg), seed).run(false);
  WeightDecayRun out;
  out.seed = seed;
  out.objective = cfg.objective;
  out.zeta = cfg.objective == ObjectiveKind::kEq1 ? 0.0 : cfg.zeta;
  out.records = std::move(r.history);
  out.lambda = std::move(r.lambda);
  return out;
}

// One run per seed, in seed order regardless of scheduling.
inline std::vector<WeightDecayRun> run_weight_decay_experiment(
    const WeightDecayConfig& cfg, const std::vector<std::uint64_t>& seeds) {
  const WeightDecayData data = WeightDecayData::load(cfg);
  return parallel_map<WeightDecayRun>(seeds.size(), cfg.workers, [&](std::size_t i) {
    return run_weight_decay_seed(cfg, data, seeds[i]);
  });
}

// Among records attaining the maximum validation accuracy, the one with the
// smallest weight norm; ties go to the earliest step.
inline const HistoryRow& min_weight_norm_baseline(const WeightDecayRun& run) {
  if (run.records.empty()) throw DomainError("min_weight_norm_baseline: empty run");
  double best_acc = -1.0;
  for (const auto& r : run.records) best_acc = std::max(best_acc, r.val_acc);
  const HistoryRow* pick = nullptr;
  for (const auto& r : run.records)
    if (r.val_acc == best_acc && (!pick || r.weight_norm < pick->weight_norm)) pick = &r;
  return *pick;
}

// Mean of (test loss - validation loss) over the last `last` outer steps.
inline double generalization_error_estimate(const WeightDecayRun& run, std::size_t last = 5) {
  if (run.records.empty()) throw DomainError("generalization_error_estimate: empty run");
  const std::size_t k = std::min(last, run.records.size());
  double acc = 0.0;
  for (std::size_t i = run.records.size() - k; i < run.records.size(); ++i)
    acc += run.records[i].test_loss - run.records[i].val_loss;
  return acc / static_cast<double>(k);
}

struct RegularizerCorrelation {
  std::vector<double> regularizer;   // final sqrt(Y) per run
  std::vector<double> gen_error;     // per run
  Correlation stats;
};

inline RegularizerCorrelation regularizer_generalization_correlation(
    const std::vector<WeightDecayRun>& runs) {
  if (runs.size() < 3) throw DomainError("correlation needs at least three runs");
  RegularizerCorrelation out;
  for (const auto& r : runs) {
    if (r.records.empty()) throw DomainError("correlation: empty run");
    out.regularizer.push_back(r.records.back().sqrt_Y);
    out.gen_error.push_back(generalization_error_estimate(r));
  }
  out.stats = correlate(out.regularizer, out.gen_error);
  return out;
}

inline double final_test_accuracy(const WeightDecayRun& run) {
  if (run.records.empty()) throw DomainError("final_test_accuracy: empty run");
  return run.records.back().test_acc;
}

}  // namespace pbho

#endif  // PBHO_EXPERIMENTS_WEIGHT_DECAY_HPP_
