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

// Outer (hyperparameter) optimization. The plain objective minimizes the
// validation risk of the final inner iterate; the regularized objective adds
// zeta * sqrt(sum_t |grad R_T(theta_t) - grad R_V(theta_t)|^2). Hypergradients
// backpropagate through at most K stored inner steps (or through the current
// window of size W), recomputed on a fresh tape from the stored ring buffer.

#ifndef PBHO_HYPEROPT_HYPEROPT_HPP_
#define PBHO_HYPEROPT_HYPEROPT_HPP_

#include <cmath>
#include <deque>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "pbho/diffcore/tape.hpp"
#include "pbho/errors.hpp"
#include "pbho/models/dataset.hpp"
#include "pbho/models/model.hpp"
#include "pbho/rng.hpp"
#include "pbho/samplers/samplers.hpp"

namespace pbho {

enum class ObjectiveKind { kEq1, kEq5 };
enum class OuterOptimizerKind { kGradientDescent, kRmsProp };
enum class InnerKind { kSgd, kSgld, kAdam };
// How the first-term hypergradient is formed: truncated reverse mode through
// the stored steps, or the one-step T1-T2 approximation.
enum class ValHypergrad { kTruncated, kT1T2 };
// Which risk the first term evaluates at theta_T. kTraining is the
// same-distribution variant.
enum class FirstTerm { kValidation, kTraining };

inline const char* to_string(ObjectiveKind k) { return k == ObjectiveKind::kEq1 ? "eq1" : "eq5"; }

struct HyperOptConfig {
  ObjectiveKind objective = ObjectiveKind::kEq5;
  double zeta = 0.0;
  std::size_t T = 100;
  std::size_t K = 0;
  std::optional<std::size_t> W;  // windowed truncation; overrides K when set
  std::size_t C = 1;
  OuterOptimizerKind outer = OuterOptimizerKind::kRmsProp;
  double outer_lr = 1e-2;
  double rms_alpha = 0.99;
  double rms_eps = 1e-8;
  std::size_t outer_steps = 100;
  bool reinit_inner = true;
  double eps_Y = 1e-12;
  ValHypergrad val_hypergrad = ValHypergrad::kTruncated;
  FirstTerm first_term = FirstTerm::kValidation;
  // Clipping inside the incoherence summand only; the inner sampler is
  // unaffected.
  std::optional<double> clip_train;
  std::optional<double> clip_val;
  // Every chain draws from stream index 0 (testing aid).
  bool shared_chain_seeds = false;
  // Keep every per-step summand of every outer step in the history.
  bool record_summands = false;

  double effective_zeta() const { return objective == ObjectiveKind::kEq1 ? 0.0 : zeta; }

  void validate() const {
    if (!(zeta >= 0.0) || !std::isfinite(zeta)) throw ConfigError("hyperopt.zeta", "must be >= 0");
    if (T == 0) throw ConfigError("hyperopt.T", "need at least one inner step");
    if (K > T) throw ConfigError("hyperopt.K", "truncation depth exceeds T");
    if (W && (*W == 0 || *W > T)) throw ConfigError("hyperopt.W", "window must be in [1, T]");
    if (C == 0) throw ConfigError("hyperopt.C", "need at least one chain");
    if (!(outer_lr > 0.0)) throw ConfigError("hyperopt.outer_lr", "must be positive");
    if (!(rms_alpha >= 0.0 && rms_alpha < 1.0)) throw ConfigError("hyperopt.rms_alpha", "must be in [0, 1)");
    if (!(rms_eps > 0.0)) throw ConfigError("hyperopt.rms_eps", "must be positive");
    if (!(eps_Y > 0.0)) throw ConfigError("hyperopt.eps_Y", "must be positive");
    if (clip_train && !(*clip_train > 0.0)) throw ConfigError("hyperopt.clip_train", "must be positive");
    if (clip_val && !(*clip_val > 0.0)) throw ConfigError("hyperopt.clip_val", "must be positive");
  }
};

struct InnerConfig {
  InnerKind kind = InnerKind::kSgd;
  StepSchedule schedule = StepSchedule::constant(0.1);
  std::optional<double> tau;  // SGLD temperature; default |S_T|
  AdamConfig adam;
  std::size_t batch_T = 0;  // 0 = full batch
  std::size_t batch_V = 0;
};

// Empirical risk on a tape, as a function of theta, lambda and a batch.
using RiskFn = std::function<ad::Var(ad::Tape&, const ad::Var& theta, const ad::Var& lambda,
                                     const Dataset& S)>;

struct Metrics {
  double loss = 0.0;
  double acc = std::nan("");
};

struct Problem {
  RiskFn risk_T;
  RiskFn risk_V;
  Dataset train;
  Dataset val;
  std::optional<Dataset> test;
  std::function<std::vector<double>(Rng&)> init;  // theta_0 ~ P_0
  std::vector<double> lambda0;
  InnerConfig inner;
  // Reporting loss/accuracy of theta on a dataset. Defaults to risk_V.
  std::function<Metrics(const std::vector<double>& theta, const std::vector<double>& lambda,
                        const Dataset& S)>
      metrics;

  Metrics evaluate(const std::vector<double>& theta, const std::vector<double>& lambda,
                   const Dataset& S) const {
    if (metrics) return metrics(theta, lambda, S);
    ad::Tape t;
    ad::Var th = t.constant(ad::Tensor::vector(theta));
    ad::Var lam = t.constant(ad::Tensor::vector(lambda));
    return {risk_V(t, th, lam, S).item(), std::nan("")};
  }
};

// Problem built from a Model: training risk includes the decay penalty,
// validation risk does not; metrics report the base loss (and accuracy for
// classifiers).
inline Problem make_problem(const Model& model, const LossSpec& spec, Dataset train, Dataset val,
                            std::optional<Dataset> test, const InitDistribution& init,
                            std::vector<double> lambda0, InnerConfig inner) {
  spec.validate();
  Problem p;
  p.risk_T = [model, spec](ad::Tape& t, const ad::Var& th, const ad::Var& lam, const Dataset& S) {
    return risk_on_tape(t, model, th, S, lam, spec, /*include_decay=*/true);
  };
  p.risk_V = [model, spec](ad::Tape& t, const ad::Var& th, const ad::Var& lam, const Dataset& S) {
    return risk_on_tape(t, model, th, S, lam, spec, /*include_decay=*/false);
  };
  p.train = std::move(train);
  p.val = std::move(val);
  p.test = std::move(test);
  p.init = [model, init](Rng& rng) { return sample_init(model, init, rng).values(); };
  p.lambda0 = std::move(lambda0);
  p.inner = std::move(inner);
  p.metrics = [model, spec](const std::vector<double>& th, const std::vector<double>&,
                            const Dataset& S) {
    ParamVector theta(th, model.segments());
    Metrics m;
    m.loss = risk_eval(model, theta, S, nullptr, spec, /*include_decay=*/false);
    if (S.is_classification()) m.acc = accuracy(model, theta, S);
    return m;
  };
  return p;
}

// ---------------------------------------------------------------------------
// Building blocks.

namespace hyperopt_detail {

// |g| on the tape as exp(log(|g|^2) / 2).
inline ad::Var norm_on_tape(const ad::Var& g) {
  return ad::exp(ad::scale(ad::log(ad::sq_norm(g)), 0.5));
}

inline ad::Var clip_on_tape(const ad::Var& g, std::optional<double> gamma) {
  if (!gamma) return g;
  double n2 = 0.0;
  for (double v : g.value().data) n2 += v * v;
  if (std::sqrt(n2) <= *gamma * (1.0 + 1e-12)) return g;
  ad::Var inv = ad::exp(ad::scale(ad::log(ad::sq_norm(g)), -0.5));
  return ad::mul(ad::expand(ad::scale(inv, *gamma), g.shape()), g);
}

inline const Dataset& pick(const Dataset& S, const std::vector<std::size_t>& idx, Dataset& store) {
  if (idx.empty()) return S;
  store = S.subset(idx);
  return store;
}

inline void check_finite(const std::vector<double>& v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x)) throw NonFiniteError(std::string("non-finite ") + what);
}

}  // namespace hyperopt_detail

// grad_theta R_T - grad_theta R_V at theta on the tape, with optional clipping.
inline ad::Var gradient_difference(ad::Tape& t, const Problem& p, const ad::Var& theta,
                                   const ad::Var& lambda, const Dataset& BT, const Dataset& BV,
                                   std::optional<double> clip_train = std::nullopt,
                                   std::optional<double> clip_val = std::nullopt) {
  ad::Var gT = t.grad_graph(p.risk_T(t, theta, lambda, BT), {theta})[0];
  ad::Var gV = t.grad_graph(p.risk_V(t, theta, lambda, BV), {theta})[0];
  return ad::sub(hyperopt_detail::clip_on_tape(gT, clip_train),
                 hyperopt_detail::clip_on_tape(gV, clip_val));
}

struct Summand {
  double d2 = 0.0;
  std::vector<double> hypergrad;  // d(d2)/d(lambda), direct partials only
};

// One-sample incoherence summand d^2 = |grad R_T - grad R_V|^2 at theta and
// its direct lambda-gradient (theta held constant).
inline Summand incoherence_summand(const Problem& p, const std::vector<double>& theta,
                                   const Dataset& BT, const Dataset& BV,
                                   const std::vector<double>& lambda,
                                   std::optional<double> clip_train = std::nullopt,
                                   std::optional<double> clip_val = std::nullopt) {
  ad::Tape t;
  ad::Var th = t.input(ad::Tensor::vector(theta));
  ad::Var lam = t.input(ad::Tensor::vector(lambda));
  ad::Var d2 = ad::sq_norm(gradient_difference(t, p, th, lam, BT, BV, clip_train, clip_val));
  Summand s;
  s.d2 = d2.item();
  s.hypergrad = t.grad(d2, {lam})[0].data;
  hyperopt_detail::check_finite(s.hypergrad, "incoherence hypergradient");
  return s;
}

// One-step-unrolled first-term hypergradient:
//   dR_V/dlambda (direct) - eta_last * (d^2 R_T / dlambda dtheta)^T grad_theta R_V,
// with grad_theta R_V taken at theta_T and the mixed partial at the iterate the
// last step started from (theta_prev), so that for a single plain gradient
// step the result is the exact unrolled hypergradient.
inline std::vector<double> t1t2_val_hypergrad(const Problem& p, const std::vector<double>& theta_T,
                                              const std::vector<double>& theta_prev,
                                              const Dataset& SV, const Dataset& BT,
                                              const std::vector<double>& lambda, double eta_last,
                                              FirstTerm first = FirstTerm::kValidation) {
  if (!(eta_last > 0.0)) throw DomainError("t1t2: eta_last must be positive");
  if (theta_prev.size() != theta_T.size()) throw ShapeError("t1t2: theta length mismatch");
  const RiskFn& rv = first == FirstTerm::kValidation ? p.risk_V : p.risk_T;
  ad::Tape t;
  ad::Var th = t.input(ad::Tensor::vector(theta_T));
  ad::Var lam = t.input(ad::Tensor::vector(lambda));
  ad::Var rV = rv(t, th, lam, SV);
  std::vector<ad::Tensor> gv = t.grad(rV, {th, lam});
  const std::vector<double> direct = gv[1].data;
  ad::Var prev = t.input(ad::Tensor::vector(theta_prev));
  ad::Var gT = t.grad_graph(p.risk_T(t, prev, lam, BT), {prev})[0];
  ad::Var inner = ad::dot(gT, t.constant(gv[0]));
  std::vector<double> mixed = t.grad(inner, {lam})[0].data;
  std::vector<double> out(lambda.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = direct[i] - eta_last * mixed[i];
  hyperopt_detail::check_finite(out, "T1-T2 hypergradient");
  return out;
}

// One stored inner step: theta_s, its batches, the injected noise, the step
// size and the lambda in force.
struct StepRecord {
  std::vector<double> theta;
  std::vector<std::size_t> batch_T, batch_V;
  std::vector<double> noise;
  double eta = 0.0;
  std::vector<double> lambda;
};

// Ring buffer of the last `capacity` inner steps, with a high-water counter of
// stored parameter vectors (the memory bound is asserted on it).
class TrajectoryWindow {
 public:
  explicit TrajectoryWindow(std::size_t capacity = 0) : capacity_(capacity) {}
  void clear() { steps_.clear(); first_ = 0; }
  void push(StepRecord r) {
    if (capacity_ == 0) {
      ++first_;
      return;
    }
    if (steps_.size() == capacity_) {
      steps_.pop_front();
      ++first_;
    }
    steps_.push_back(std::move(r));
    high_water_ = std::max(high_water_, steps_.size());
  }
  // Record of global step s.
  const StepRecord& at(std::size_t s) const {
    if (s < first_ || s - first_ >= steps_.size())
      throw Error("truncated hypergradient needs step " + std::to_string(s) +
                  ", outside the stored window");
    return steps_[s - first_];
  }
  StepRecord& back() { return steps_.back(); }
  std::size_t end() const { return first_ + steps_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::size_t high_water() const { return high_water_; }

 private:
  std::size_t capacity_;
  std::deque<StepRecord> steps_;
  std::size_t first_ = 0;
  std::size_t high_water_ = 0;
};

// Truncated reverse mode: rebuilds theta_t on a tape by unrolling the stored
// steps [t - depth, t) from a constant theta_{t-depth}, with every step's
// lambda tied to `lam` (offset by its stored difference from lambda_ref).
class Unroller {
 public:
  Unroller(const Problem& p, const TrajectoryWindow& w) : p_(p), w_(w) {}

  ad::Var lambda_at(ad::Tape& t, const ad::Var& lam, const std::vector<double>& ref,
                    const std::vector<double>& used) const {
    if (used == ref) return lam;
    std::vector<double> off(ref.size());
    for (std::size_t i = 0; i < off.size(); ++i) off[i] = used[i] - ref[i];
    return ad::add(lam, t.constant(ad::Tensor::vector(off)));
  }

  // Returns theta_t. `theta_t_value` is used when depth == 0.
  ad::Var unroll(ad::Tape& t, const ad::Var& lam, const std::vector<double>& lambda_ref,
                 std::size_t target, std::size_t depth,
                 const std::vector<double>& theta_t_value) const {
    if (depth == 0) return t.input(ad::Tensor::vector(theta_t_value));
    const std::size_t s0 = target - depth;
    ad::Var th = t.input(ad::Tensor::vector(w_.at(s0).theta));
    for (std::size_t s = s0; s < target; ++s) {
      const StepRecord& r = w_.at(s);
      Dataset store;
      const Dataset& BT = hyperopt_detail::pick(p_.train, r.batch_T, store);
      ad::Var ls = lambda_at(t, lam, lambda_ref, r.lambda);
      ad::Var g = t.grad_graph(p_.risk_T(t, th, ls, BT), {th})[0];
      th = ad::sub(th, ad::scale(g, r.eta));
      if (!r.noise.empty()) th = ad::add(th, t.constant(ad::Tensor::vector(r.noise)));
    }
    return th;
  }

 private:
  const Problem& p_;
  const TrajectoryWindow& w_;
};

// Gradient w.r.t. lambda of the summand at step t (d^2, or |d| when
// norm_form), backpropagating through `depth` stored steps. depth = 0 keeps
// theta_t constant (direct partials only).
inline std::vector<double> truncated_hypergrad(const Problem& p, const TrajectoryWindow& w,
                                               const StepRecord& cur, std::size_t t,
                                               std::size_t depth, const std::vector<double>& lambda,
                                               bool norm_form = false,
                                               std::optional<double> clip_train = std::nullopt,
                                               std::optional<double> clip_val = std::nullopt) {
  if (depth > t) throw Error("truncation depth exceeds the step index");
  ad::Tape tape;
  ad::Var lam = tape.input(ad::Tensor::vector(lambda));
  Unroller u(p, w);
  ad::Var th = u.unroll(tape, lam, lambda, t, depth, cur.theta);
  Dataset sT, sV;
  const Dataset& BT = hyperopt_detail::pick(p.train, cur.batch_T, sT);
  const Dataset& BV = hyperopt_detail::pick(p.val, cur.batch_V, sV);
  ad::Var ls = u.lambda_at(tape, lam, lambda, cur.lambda);
  ad::Var diff = gradient_difference(tape, p, th, ls, BT, BV, clip_train, clip_val);
  ad::Var out = norm_form ? hyperopt_detail::norm_on_tape(diff) : ad::sq_norm(diff);
  std::vector<double> g = tape.grad(out, {lam})[0].data;
  hyperopt_detail::check_finite(g, "truncated hypergradient");
  return g;
}

class OuterOptimizer {
 public:
  explicit OuterOptimizer(const HyperOptConfig& c) : cfg_(c) {}
  void step(std::vector<double>& lambda, const std::vector<double>& g) {
    hyperopt_detail::check_finite(g, "hypergradient");
    if (cfg_.outer == OuterOptimizerKind::kGradientDescent) {
      for (std::size_t i = 0; i < g.size(); ++i) lambda[i] -= cfg_.outer_lr * g[i];
      return;
    }
    if (v_.empty()) v_.assign(g.size(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) {
      v_[i] = cfg_.rms_alpha * v_[i] + (1.0 - cfg_.rms_alpha) * g[i] * g[i];
      lambda[i] -= cfg_.outer_lr * g[i] / (std::sqrt(v_[i]) + cfg_.rms_eps);
    }
  }

 private:
  HyperOptConfig cfg_;
  std::vector<double> v_;
};

// Per-step summands d^2_t and their total. The regularizer is sqrt(Y).
struct RegularizerTrace {
  std::vector<double> summands;
  double Y = 0.0;
  double value() const { return std::sqrt(Y); }
  void add(double d2) {
    if (!(d2 >= 0.0)) throw NonFiniteError("incoherence summand is negative or NaN");
    summands.push_back(d2);
    Y += d2;
  }
};

struct HistoryRow {
  std::size_t outer_step = 0;
  std::uint64_t seed = 0;
  ObjectiveKind objective = ObjectiveKind::kEq5;
  double zeta = 0.0;
  std::size_t K = 0;
  std::size_t C = 1;
  double val_loss = 0.0, val_acc = std::nan("");
  double test_loss = std::nan(""), test_acc = std::nan("");
  double Y = 0.0, sqrt_Y = 0.0;
  double gen_error_estimate = std::nan("");  // test_loss - val_loss
  // Not exported in the CSV schema.
  double weight_norm = 0.0;
  double first_term = 0.0;  // risk at theta_T under lambda in force
  double objective_value = 0.0;  // first_term + zeta * sqrt_Y
  std::size_t y_floor_hits = 0;
  std::vector<double> hypergrad;
  std::vector<double> summands;
};

struct HyperOptResult {
  std::vector<double> lambda;
  std::vector<HistoryRow> history;
  std::vector<std::vector<double>> final_thetas;  // per chain
  std::size_t max_stored_states = 0;
};

inline const char* kHistoryHeader =
    "outer_step,seed,objective_kind,zeta,K,C,val_loss,val_acc,test_loss,test_acc,Y,sqrt_Y,"
    "gen_error_estimate";

inline void write_history_csv(std::ostream& os, const std::vector<HistoryRow>& rows) {
  os << kHistoryHeader << '\n';
  auto num = [&](double v) -> std::ostream& {
    if (std::isnan(v)) return os << "nan";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return os << buf;
  };
  for (const HistoryRow& r : rows) {
    os << r.outer_step << ',' << r.seed << ',' << to_string(r.objective) << ',';
    num(r.zeta) << ',' << r.K << ',' << r.C << ',';
    num(r.val_loss) << ',';
    num(r.val_acc) << ',';
    num(r.test_loss) << ',';
    num(r.test_acc) << ',';
    num(r.Y) << ',';
    num(r.sqrt_Y) << ',';
    num(r.gen_error_estimate) << '\n';
  }
}

// ---------------------------------------------------------------------------
// The engine shared by Algorithms 1, 3 and 4.

class HyperOptimizer {
 public:
  HyperOptimizer(const Problem& p, const HyperOptConfig& cfg, std::uint64_t seed)
      : p_(p), cfg_(cfg), seed_(seed), opt_(cfg) {
    cfg_.validate();
    p_.inner.schedule.validate(cfg_.T);
    if (p_.lambda0.empty()) throw ConfigError("problem.lambda0", "hyperparameters are empty");
    if (p_.inner.kind == InnerKind::kAdam && (cfg_.K > 0 || cfg_.W))
      throw ConfigError("hyperopt.K", "truncated unrolling (K >= 1 or W) needs an SGD/SGLD inner loop");
    if (p_.inner.batch_T > p_.train.size() || p_.inner.batch_V > p_.val.size())
      throw ConfigError("inner.batch", "batch larger than the dataset");
    lambda_ = p_.lambda0;
    const std::size_t cap = cfg_.W ? *cfg_.W : cfg_.K;
    for (std::size_t c = 0; c < cfg_.C; ++c) {
      const std::uint64_t i = cfg_.shared_chain_seeds ? 0 : c;
      Chain ch;
      ch.init_rng = make_rng(seed, "hyperopt/init", i);
      ch.bt_rng = make_rng(seed, "hyperopt/batch_T", i);
      ch.bv_rng = make_rng(seed, "hyperopt/batch_V", i);
      ch.window = TrajectoryWindow(cap);
      ch.state.rng = make_rng(seed, "hyperopt/noise", i);
      chains_.push_back(std::move(ch));
    }
  }

  const std::vector<double>& lambda() const { return lambda_; }
  void set_lambda(std::vector<double> l) { lambda_ = std::move(l); }

  // Runs the whole outer loop.
  HyperOptResult run(bool online = false) {
    HyperOptResult res;
    for (std::size_t o = 0; o < cfg_.outer_steps; ++o) {
      HistoryRow row = online ? outer_step_online() : outer_step_offline();
      row.outer_step = o;
      res.history.push_back(std::move(row));
    }
    res.lambda = lambda_;
    for (const Chain& ch : chains_) {
      res.final_thetas.push_back(ch.state.theta);
      res.max_stored_states = std::max(res.max_stored_states, ch.window.high_water());
    }
    return res;
  }

  // The outer gradient of one offline step (chains advanced, lambda not
  // updated). Exposed for finite-difference checks.
  std::vector<double> outer_gradient(HistoryRow* row = nullptr) {
    begin_outer_step();
    const double zeta = cfg_.effective_zeta();
    const std::size_t n = lambda_.size();
    std::vector<double> G(n, 0.0);
    std::vector<double> per_step(cfg_.T, 0.0);
    std::size_t floor_hits = 0;
    const double invC = 1.0 / static_cast<double>(cfg_.C);
    for (Chain& ch : chains_) {
      RegularizerTrace tr;
      std::vector<double> X(n, 0.0);
      for (std::size_t t = 0; t < cfg_.T; ++t) {
        Summand s = inner_step(ch, t, zeta != 0.0, false);
        tr.add(s.d2);
        per_step[t] += s.d2 * invC;
        if (zeta != 0.0)
          for (std::size_t i = 0; i < n; ++i) X[i] += 0.5 * zeta * s.hypergrad[i];
      }
      std::vector<double> gv = first_term_hypergrad(ch);
      const double denom = std::sqrt(tr.Y + cfg_.eps_Y);
      if (tr.Y < cfg_.eps_Y) ++floor_hits;
      for (std::size_t i = 0; i < n; ++i) G[i] += invC * (gv[i] + X[i] / denom);
    }
    if (row) fill_row(*row, per_step, floor_hits, G);
    return G;
  }

  HistoryRow outer_step_offline() {
    HistoryRow row;
    std::vector<double> G = outer_gradient(&row);
    opt_.step(lambda_, G);
    return row;
  }

  // Algorithm 4: lambda moves after every inner step by the chain mean of
  // zeta * d|grad R_T - grad R_V|/dlambda; the first-term hypergradient is
  // applied once at the end.
  HistoryRow outer_step_online() {
    begin_outer_step();
    const double zeta = cfg_.effective_zeta();
    const std::size_t n = lambda_.size();
    const double invC = 1.0 / static_cast<double>(cfg_.C);
    std::vector<double> per_step;
    std::size_t floor_hits = 0;
    for (std::size_t t = 0; t < cfg_.T; ++t) {
      std::vector<double> g(n, 0.0);
      double d2_mean = 0.0;
      bool any = false;
      for (Chain& ch : chains_) {
        Summand s = inner_step(ch, t, zeta != 0.0, true);
        d2_mean += invC * s.d2;
        if (zeta == 0.0) continue;
        if (std::sqrt(s.d2) < cfg_.eps_Y) {
          ++floor_hits;
          continue;
        }
        any = true;
        for (std::size_t i = 0; i < n; ++i) g[i] += invC * zeta * s.hypergrad[i];
      }
      per_step.push_back(d2_mean);
      if (any) opt_.step(lambda_, g);
    }
    std::vector<double> G(n, 0.0);
    for (Chain& ch : chains_) {
      std::vector<double> gv = first_term_hypergrad(ch);
      for (std::size_t i = 0; i < n; ++i) G[i] += invC * gv[i];
    }
    HistoryRow row;
    fill_row(row, per_step, floor_hits, G);
    opt_.step(lambda_, G);
    return row;
  }

 private:
  struct Chain {
    Rng init_rng, bt_rng, bv_rng;
    TrajectoryWindow window;
    ChainState state;  // owns the noise stream
    AdamState adam;
    std::optional<MinibatchSampler> samp_T, samp_V;
    std::vector<std::size_t> last_batch_T;
    std::vector<double> prev_theta;  // theta_{T-1}
    bool started = false;
    double Y = 0.0;
    double first_term = 0.0;
  };

  void begin_outer_step() {
    for (Chain& ch : chains_) {
      if (!ch.started || cfg_.reinit_inner) {
        ch.state.theta = p_.init(ch.init_rng);
        ch.adam = AdamState{};
        ch.started = true;
      }
      ch.state.t = 0;
      ch.Y = 0.0;
      ch.window.clear();
    }
  }

  // Summand depth for step t (K or window).
  std::size_t summand_depth(std::size_t t) const {
    if (cfg_.W) return t % *cfg_.W;
    return std::min(cfg_.K, t);
  }
  std::size_t final_depth() const {
    if (cfg_.W) return cfg_.T - *cfg_.W * ((cfg_.T - 1) / *cfg_.W);
    return std::min(cfg_.K, cfg_.T);
  }

  std::vector<std::size_t> draw(std::optional<MinibatchSampler>& s, std::size_t batch,
                                std::size_t n, Rng& rng) {
    if (batch == 0 || batch == n) return {};
    if (!s) s.emplace(n, batch, false, rng);
    return s->next();
  }

  // Evaluates the summand at theta_t (and its hypergradient when asked), then
  // advances the chain by one inner step.
  Summand inner_step(Chain& ch, std::size_t t, bool want_grad, bool online) {
    StepRecord rec;
    rec.theta = ch.state.theta;
    rec.batch_T = draw(ch.samp_T, p_.inner.batch_T, p_.train.size(), ch.bt_rng);
    rec.batch_V = draw(ch.samp_V, p_.inner.batch_V, p_.val.size(), ch.bv_rng);
    rec.eta = p_.inner.schedule.at(t);
    rec.lambda = lambda_;
    Dataset sT, sV;
    const Dataset& BT = hyperopt_detail::pick(p_.train, rec.batch_T, sT);
    const Dataset& BV = hyperopt_detail::pick(p_.val, rec.batch_V, sV);

    // Summand at theta_t; also yields the training gradient for the step.
    ad::Tape tape;
    ad::Var th = tape.input(ad::Tensor::vector(rec.theta));
    ad::Var lam = tape.input(ad::Tensor::vector(lambda_));
    ad::Var gT = tape.grad_graph(p_.risk_T(tape, th, lam, BT), {th})[0];
    ad::Var gV = tape.grad_graph(p_.risk_V(tape, th, lam, BV), {th})[0];
    std::vector<double> grad = gT.value().data;
    ad::Var diff = ad::sub(hyperopt_detail::clip_on_tape(gT, cfg_.clip_train),
                           hyperopt_detail::clip_on_tape(gV, cfg_.clip_val));
    ad::Var d2 = ad::sq_norm(diff);
    Summand s;
    s.d2 = d2.item();
    if (want_grad) {
      const std::size_t depth = summand_depth(t);
      const bool norm_form = online;
      if (norm_form && std::sqrt(s.d2) < cfg_.eps_Y) {
        // skipped by the caller
      } else if (depth == 0) {
        ad::Var out = norm_form ? hyperopt_detail::norm_on_tape(diff) : d2;
        s.hypergrad = tape.grad(out, {lam})[0].data;
      } else {
        s.hypergrad = truncated_hypergrad(p_, ch.window, rec, t, depth, lambda_, norm_form,
                                          cfg_.clip_train, cfg_.clip_val);
      }
      if (!s.hypergrad.empty()) hyperopt_detail::check_finite(s.hypergrad, "summand hypergradient");
    }
    tape.clear();

    // Inner update.
    switch (p_.inner.kind) {
      case InnerKind::kSgd:
        sgd_step(ch.state, grad, rec.eta);
        break;
      case InnerKind::kSgld:
        rec.noise = sgld_step(ch.state, grad, rec.eta, static_cast<double>(p_.train.size()),
                              p_.inner.tau);
        break;
      case InnerKind::kAdam:
        adam_step(ch.state.theta, ch.adam, grad, p_.inner.adam);
        ++ch.state.t;
        break;
    }
    ch.last_batch_T = rec.batch_T;
    ch.prev_theta = rec.theta;
    ch.window.push(std::move(rec));
    ch.Y += s.d2;
    return s;
  }

  // Hypergradient of the first term R(theta_T) for one chain; records the
  // term's value on the chain.
  std::vector<double> first_term_hypergrad(Chain& ch) {
    const bool train_first = cfg_.first_term == FirstTerm::kTraining;
    const Dataset& S = train_first ? p_.train : p_.val;
    const RiskFn& risk = train_first ? p_.risk_T : p_.risk_V;
    std::vector<double> g;
    double value = 0.0;
    if (cfg_.val_hypergrad == ValHypergrad::kT1T2) {
      Dataset sT;
      const Dataset& BT = hyperopt_detail::pick(p_.train, ch.last_batch_T, sT);
      const double eta_last = p_.inner.kind == InnerKind::kAdam ? p_.inner.adam.lr
                                                                : p_.inner.schedule.at(cfg_.T - 1);
      g = t1t2_val_hypergrad(p_, ch.state.theta, ch.prev_theta, S, BT, lambda_, eta_last,
                             cfg_.first_term);
      ad::Tape t;
      value = risk(t, t.constant(ad::Tensor::vector(ch.state.theta)),
                   t.constant(ad::Tensor::vector(lambda_)), S)
                  .item();
    } else {
      ad::Tape tape;
      ad::Var lam = tape.input(ad::Tensor::vector(lambda_));
      Unroller u(p_, ch.window);
      ad::Var th = u.unroll(tape, lam, lambda_, cfg_.T, final_depth(), ch.state.theta);
      ad::Var r = risk(tape, th, lam, S);
      value = r.item();
      g = tape.grad(r, {lam})[0].data;
      hyperopt_detail::check_finite(g, "first-term hypergradient");
    }
    ch.first_term = value;
    return g;
  }

  // Y is the chain mean of Y_c and sqrt_Y the chain mean of sqrt(Y_c), so
  // that objective_value = first_term + zeta * sqrt_Y is exactly the quantity
  // whose gradient the offline update follows.
  void fill_row(HistoryRow& row, const std::vector<double>& per_step, std::size_t floor_hits,
                const std::vector<double>& G) {
    const double invC = 1.0 / static_cast<double>(cfg_.C);
    row.seed = seed_;
    row.objective = cfg_.objective;
    row.zeta = cfg_.effective_zeta();
    row.K = cfg_.W ? *cfg_.W : cfg_.K;
    row.C = cfg_.C;
    row.y_floor_hits = floor_hits;
    row.hypergrad = G;
    if (cfg_.record_summands) row.summands = per_step;
    row.val_loss = row.val_acc = row.test_loss = row.test_acc = 0.0;
    row.Y = row.sqrt_Y = row.first_term = 0.0;
    bool acc = true, tacc = true;
    for (const Chain& ch : chains_) {
      row.Y += invC * ch.Y;
      row.sqrt_Y += invC * std::sqrt(ch.Y);
      row.first_term += invC * ch.first_term;
      Metrics v = p_.evaluate(ch.state.theta, lambda_, p_.val);
      row.val_loss += invC * v.loss;
      acc = acc && !std::isnan(v.acc);
      row.val_acc += invC * v.acc;
      if (p_.test) {
        Metrics te = p_.evaluate(ch.state.theta, lambda_, *p_.test);
        row.test_loss += invC * te.loss;
        tacc = tacc && !std::isnan(te.acc);
        row.test_acc += invC * te.acc;
      }
      double n2 = 0.0;
      for (double v2 : ch.state.theta) n2 += v2 * v2;
      row.weight_norm += invC * std::sqrt(n2);
    }
    if (!acc) row.val_acc = std::nan("");
    if (!p_.test) row.test_loss = std::nan("");
    if (!p_.test || !tacc) row.test_acc = std::nan("");
    row.gen_error_estimate = row.test_loss - row.val_loss;
    row.objective_value = row.first_term + row.zeta * row.sqrt_Y;
  }

  const Problem& p_;
  HyperOptConfig cfg_;
  std::uint64_t seed_;
  OuterOptimizer opt_;
  std::vector<double> lambda_;
  std::vector<Chain> chains_;
};

// Algorithm 1: one chain, accumulators X and Y, offline update.
inline HyperOptResult optimize_eq5_alg1(const Problem& p, const HyperOptConfig& cfg,
                                        std::uint64_t seed) {
  if (cfg.C != 1) throw ConfigError("hyperopt.C", "Algorithm 1 runs a single chain");
  return HyperOptimizer(p, cfg, seed).run(false);
}

// Algorithm 3: C chains, chain-mean of the first-term hypergradient and of
// X_c / sqrt(Y_c + eps_Y).
inline HyperOptResult optimize_eq5_alg3(const Problem& p, const HyperOptConfig& cfg,
                                        std::uint64_t seed) {
  return HyperOptimizer(p, cfg, seed).run(false);
}

// Algorithm 4: lambda moves after every inner step.
inline HyperOptResult optimize_eq5_alg4_online(const Problem& p, const HyperOptConfig& cfg,
                                               std::uint64_t seed) {
  return HyperOptimizer(p, cfg, seed).run(true);
}

// The unregularized objective through the same machinery (X is never formed).
inline HyperOptResult optimize_eq1(const Problem& p, HyperOptConfig cfg, std::uint64_t seed) {
  cfg.objective = ObjectiveKind::kEq1;
  return HyperOptimizer(p, cfg, seed).run(false);
}

}  // namespace pbho

#endif  // PBHO_HYPEROPT_HYPEROPT_HPP_
