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

// PAC-Bayes machinery for differentially private, data-dependent priors:
// Gaussian KL, chain-rule KL bounds between two Langevin chains, the beta
// function of approximate max-information, bound assembly, and the limiting
// forms of the gradient-incoherence regularizer.

#ifndef PBHO_BOUNDS_BOUNDS_HPP_
#define PBHO_BOUNDS_BOUNDS_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pbho/errors.hpp"
#include "pbho/hyperopt/hyperopt.hpp"

namespace pbho {

// Diagonal Gaussian; `var` holds the diagonal of the covariance.
struct GaussianParams {
  std::vector<double> mean;
  std::vector<double> var;

  static GaussianParams isotropic(std::vector<double> mean, double v) {
    GaussianParams g;
    g.var.assign(mean.size(), v);
    g.mean = std::move(mean);
    return g;
  }
};

// KL(q || p) for diagonal Gaussians.
inline double gaussian_kl(const GaussianParams& q, const GaussianParams& p) {
  const std::size_t m = q.mean.size();
  if (q.var.size() != m || p.mean.size() != m || p.var.size() != m)
    throw ShapeError("gaussian_kl: dimension mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double v0 = q.var[i], v1 = p.var[i];
    if (!(v0 > 0.0) || !(v1 > 0.0) || !std::isfinite(v0) || !std::isfinite(v1))
      throw DomainError("gaussian_kl: variances must be positive and finite");
    const double d = p.mean[i] - q.mean[i];
    acc += v0 / v1 + d * d / v1 - 1.0 + std::log(v1 / v0);
  }
  return 0.5 * acc;
}

// ---------------------------------------------------------------------------
// Chain-rule KL between a training chain Q and a validation chain P that
// share P_0. Step t of Q is N(theta - etaT_t grad R_T, 2 etaT_t / n_T) and of
// P is N(theta - etaV_t clip(grad R_V), 2 etaV_t / n_V).

// m [x - ln x - 1] with x = n_V etaT / (n_T etaV).
inline double step_size_mismatch_constant(std::size_t m, double n_T, double n_V, double eta_T,
                                          double eta_V) {
  if (!(n_T > 0.0 && n_V > 0.0 && eta_T > 0.0 && eta_V > 0.0))
    throw DomainError("step_size_mismatch_constant: sizes and steps must be positive");
  const double x = (n_V * eta_T) / (n_T * eta_V);
  return static_cast<double>(m) * (x - std::log(x) - 1.0);
}

// Gradients at points drawn from nu_t, one row per sample. Empty weights
// mean a plain average (the one-sample default has a single row).
struct ChainStepSamples {
  std::vector<std::vector<double>> grad_T;
  std::vector<std::vector<double>> grad_V;
  std::vector<double> weights;
};

struct ChainKlInputs {
  std::vector<ChainStepSamples> steps;
  std::vector<double> eta_T, eta_V;
  double n_T = 1.0, n_V = 1.0;
  std::optional<double> gamma;  // clips the validation gradient
};

struct ChainKlBound {
  double total = 0.0;
  double drift = 0.0;     // sum of the gradient-mismatch terms
  double constant = 0.0;  // sum of the step-size mismatch terms (B)
  std::vector<double> per_step;
};

inline ChainKlBound chain_rule_kl_bound(const ChainKlInputs& in) {
  const std::size_t T = in.steps.size();
  if (in.eta_T.size() != T || in.eta_V.size() != T)
    throw ShapeError("chain_rule_kl_bound: schedule length does not match the trajectory");
  ChainKlBound out;
  out.per_step.reserve(T);
  for (std::size_t t = 0; t < T; ++t) {
    const ChainStepSamples& s = in.steps[t];
    const std::size_t k = s.grad_T.size();
    if (k == 0 || s.grad_V.size() != k || (!s.weights.empty() && s.weights.size() != k))
      throw ShapeError("chain_rule_kl_bound: malformed samples at a step");
    const double eT = in.eta_T[t], eV = in.eta_V[t];
    const std::size_t m = s.grad_T[0].size();
    double num = 0.0, den = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const auto& gT = s.grad_T[j];
      const auto& gV = s.grad_V[j];
      if (gT.size() != m || gV.size() != m)
        throw ShapeError("chain_rule_kl_bound: gradient dimension mismatch");
      double scale = 1.0;
      if (in.gamma) {
        double n2 = 0.0;
        for (double v : gV) n2 += v * v;
        const double nrm = std::sqrt(n2);
        if (nrm > *in.gamma) scale = *in.gamma / nrm;
      }
      double d2 = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        const double d = eT * gT[i] - eV * scale * gV[i];
        d2 += d * d;
      }
      const double w = s.weights.empty() ? 1.0 : s.weights[j];
      num += w * d2;
      den += w;
    }
    if (!(den > 0.0)) throw DomainError("chain_rule_kl_bound: weights must sum to a positive value");
    const double drift = in.n_V / (4.0 * eV) * (num / den);
    const double c = step_size_mismatch_constant(m, in.n_T, in.n_V, eT, eV);
    out.per_step.push_back(drift + c);
    out.drift += drift;
    out.constant += c;
  }
  out.total = out.drift + out.constant;
  return out;
}

// Equal-step form driven by the incoherence sum Y = sum_t ||d_t||^2 that the
// optimizer accumulates: B + (n_V eta / 4) Y.
inline double fisher_kl_estimate(double Y, double n_V, double eta, double B = 0.0) {
  if (!(Y >= 0.0)) throw DomainError("fisher_kl_estimate: Y must be non-negative");
  return B + n_V * eta / 4.0 * Y;
}

// ---------------------------------------------------------------------------
// beta(eps, delta, s) = exp(-s eps^2) + c_beta s sqrt(delta / eps).

inline void check_privacy_domain(double eps, double delta, double s) {
  if (!(eps > 0.0 && eps <= 0.5)) throw DomainError("epsilon must lie in (0, 1/2]");
  if (!(delta > 0.0 && delta < eps)) throw DomainError("delta must lie in (0, epsilon)");
  if (!(s >= 1.0)) throw DomainError("sample size must be >= 1");
}

inline double log_add_exp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

inline double log_beta(double eps, double delta, double s, double c_beta = 1.0) {
  check_privacy_domain(eps, delta, s);
  if (!(c_beta >= 0.0)) throw DomainError("c_beta must be non-negative");
  const double first = -s * eps * eps;
  const double second = c_beta > 0.0 ? std::log(c_beta * s) + 0.5 * std::log(delta / eps)
                                     : -std::numeric_limits<double>::infinity();
  return log_add_exp(first, second);
}

inline double compute_beta(double eps, double delta, double s, double c_beta = 1.0) {
  return std::exp(log_beta(eps, delta, s, c_beta));
}

// ---------------------------------------------------------------------------
// Bound assembly.

enum class BoundForm { kSimplified, kGeneral };

inline const char* to_string(BoundForm f) {
  return f == BoundForm::kSimplified ? "simplified" : "general";
}

struct BoundConfig {
  double Delta = 0.05;
  double c1 = 1.0, c2 = 1.0;
  double c_beta = 1.0;  // modeling choice: the O(.) constant in beta
  std::optional<double> kappa;  // Wasserstein slack of the training chain
  double gamma_lip = 1.0;
  std::optional<std::pair<double, double>> range;  // loss range [a, b]; [0, 1] if unset
  bool privacy_certified = true;  // whether the sampler's (eps, delta) certificate holds

  void validate() const {
    if (!(Delta > 0.0 && Delta < 1.0)) throw DomainError("bound: Delta must lie in (0, 1)");
    if (!(c1 >= 0.0 && c2 >= 0.0 && c_beta >= 0.0))
      throw DomainError("bound: constants must be non-negative");
    if (kappa && !(*kappa >= 0.0)) throw DomainError("bound: kappa must be non-negative");
    if (!(gamma_lip >= 0.0)) throw DomainError("bound: gamma_lip must be non-negative");
    if (range && !(range->second > range->first))
      throw DomainError("bound: loss range must satisfy a < b");
  }
  double lo() const { return range ? range->first : 0.0; }
  double hi() const { return range ? range->second : 1.0; }
};

// final_value = emp_risk + wasserstein_term + root_term, where
//   root_term = scale * sqrt(root_arg),
//   simplified: root_arg = (kl + log_term) / (2n - 1) + privacy_term,
//               log_term = ln(5n / Delta);
//   general:    root_arg = (kl + log_term) / (2n - 1),
//               log_term = ln((4n exp(n privacy_term) + beta exp(2n)) / Delta).
// For the training-side report emp_risk is informational and excluded.
struct BoundReport {
  std::string kind = "pac_bayes";
  BoundForm form = BoundForm::kSimplified;
  double n = 1.0;
  double eps = 0.0, delta = 0.0;
  double emp_risk = 0.0;
  double kl = 0.0;
  double kl_term = 0.0;  // kl / (2n - 1)
  double privacy_term = 0.0;
  double log_term = 0.0;
  double scale = 1.0;  // b - a
  double root_arg = 0.0;
  double root_term = 0.0;
  double wasserstein_term = 0.0;  // 2 gamma kappa
  double beta = 0.0, log_beta = 0.0;
  double log_beta_limit = 0.0;  // beta must stay below exp(log_beta_limit)
  bool beta_feasible = false;
  bool privacy_certificate_valid = true;
  bool emitted = true;
  double final_value = 0.0;
  double max_loss = 1.0;
  bool vacuous = false;
  double actionable = 0.0;  // lambda-dependent part: emp_risk + scale sqrt(kl_term)
  BoundConfig constants;
  std::string warning;
};

inline void to_json(nlohmann::json& j, const BoundReport& r) {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); };
  j = nlohmann::json{
      {"kind", r.kind},
      {"form", to_string(r.form)},
      {"n", r.n},
      {"certificate", {{"epsilon", r.eps}, {"delta", r.delta}}},
      {"terms",
       {{"empirical_risk", num(r.emp_risk)},
        {"kl", num(r.kl)},
        {"kl_term", num(r.kl_term)},
        {"privacy_term", num(r.privacy_term)},
        {"log_term", num(r.log_term)},
        {"scale", r.scale},
        {"root_arg", num(r.root_arg)},
        {"root_term", num(r.root_term)},
        {"wasserstein_term", num(r.wasserstein_term)},
        {"actionable", num(r.actionable)}}},
      {"beta", {{"value", num(r.beta)}, {"log", num(r.log_beta)}, {"log_limit", num(r.log_beta_limit)}}},
      {"constants",
       {{"Delta", r.constants.Delta},
        {"c1", r.constants.c1},
        {"c2", r.constants.c2},
        {"c_beta", r.constants.c_beta},
        {"kappa", r.constants.kappa ? nlohmann::json(*r.constants.kappa) : nlohmann::json()},
        {"gamma_lip", r.constants.gamma_lip},
        {"loss_range", {r.constants.lo(), r.constants.hi()}}}},
      {"flags",
       {{"beta_feasible", r.beta_feasible},
        {"privacy_certificate_valid", r.privacy_certificate_valid},
        {"emitted", r.emitted},
        {"vacuous", r.vacuous}}},
      {"final_value", num(r.final_value)},
      {"max_loss", r.max_loss},
      {"warning", r.warning},
  };
}

namespace bounds_detail {

inline void append_warning(std::string& w, const std::string& msg) {
  if (!w.empty()) w += "; ";
  w += msg;
}

// Fills everything except emp_risk / wasserstein_term / final_value.
inline BoundReport assemble_root(double kl, double n, double eps, double delta,
                                 const BoundConfig& cfg, BoundForm form) {
  cfg.validate();
  check_privacy_domain(eps, delta, n);
  if (!(kl >= 0.0) || !std::isfinite(kl)) throw DomainError("bound: KL estimate must be finite and >= 0");
  BoundReport r;
  r.form = form;
  r.n = n;
  r.eps = eps;
  r.delta = delta;
  r.kl = kl;
  r.constants = cfg;
  r.scale = cfg.hi() - cfg.lo();
  r.max_loss = cfg.hi();
  const double denom = 2.0 * n - 1.0;
  r.kl_term = kl / denom;
  r.privacy_term = cfg.c1 * eps * eps + cfg.c2 * std::sqrt(delta / eps);
  r.log_beta = log_beta(eps, delta, n, cfg.c_beta);
  r.beta = std::exp(r.log_beta);
  if (form == BoundForm::kSimplified) {
    r.log_beta_limit = std::min(0.0, std::log(n) + n * (r.privacy_term - 2.0));
    r.log_term = std::log(5.0 * n / cfg.Delta);
    r.root_arg = (kl + r.log_term) / denom + r.privacy_term;
  } else {
    r.log_beta_limit = 0.0;
    r.log_term = log_add_exp(std::log(4.0 * n) + n * r.privacy_term, r.log_beta + 2.0 * n) -
                 std::log(cfg.Delta);
    r.root_arg = (kl + r.log_term) / denom;
  }
  r.root_term = r.scale * std::sqrt(r.root_arg);
  r.beta_feasible = r.log_beta < r.log_beta_limit;
  r.privacy_certificate_valid = cfg.privacy_certified;
  if (!r.beta_feasible)
    append_warning(r.warning, std::string("beta condition violated for the ") + to_string(form) +
                                  " form");
  if (!r.privacy_certificate_valid)
    append_warning(r.warning, "sampler is not certified (eps, delta)-DP; bound does not apply");
  return r;
}

inline void finish(BoundReport& r, double base) {
  // Either form's beta precondition failing means the bound is not emitted;
  // the parts are still reported.
  r.emitted = r.beta_feasible;
  r.final_value = r.emitted ? base + r.root_term : std::nan("");
  r.vacuous = r.emitted && r.final_value > r.max_loss;
}

}  // namespace bounds_detail

// Bound on E_Q[R(theta; D)] given E_Q[R_hat(theta; S)] = emp_risk over a set
// of size n, with prior samples certified (eps, delta)-DP.
inline BoundReport pac_bayes_bound(double emp_risk, double kl, double n, double eps, double delta,
                                   const BoundConfig& cfg,
                                   BoundForm form = BoundForm::kSimplified) {
  BoundReport r = bounds_detail::assemble_root(kl, n, eps, delta, cfg, form);
  r.kind = "pac_bayes";
  r.emp_risk = emp_risk;
  r.actionable = emp_risk + r.scale * std::sqrt(r.kl_term);
  bounds_detail::finish(r, emp_risk);
  return r;
}

// Upper bound on (1/n_T) KL(p(theta | S_T) || p(theta | D_T)):
//   2 gamma kappa + the square-root term of the bound above,
// with the same KL (or Fisher-sum) estimate. emp_risk is the mean of the
// supplied training-risk trace and is reported only.
inline BoundReport training_side_bound(const std::vector<double>& emp_train_risk_trace, double kl,
                                       double n_T, double eps, double delta,
                                       const BoundConfig& cfg,
                                       BoundForm form = BoundForm::kSimplified) {
  if (!cfg.kappa) throw DomainError("training_side_bound: kappa is required");
  BoundReport r = bounds_detail::assemble_root(kl, n_T, eps, delta, cfg, form);
  r.kind = "training_side";
  double s = 0.0;
  for (double v : emp_train_risk_trace) s += v;
  r.emp_risk = emp_train_risk_trace.empty()
                   ? std::nan("")
                   : s / static_cast<double>(emp_train_risk_trace.size());
  r.wasserstein_term = 2.0 * cfg.gamma_lip * *cfg.kappa;
  r.actionable = r.scale * std::sqrt(r.kl_term);
  bounds_detail::finish(r, r.wasserstein_term);
  return r;
}

// ---------------------------------------------------------------------------
// Limiting regularizers.

// ||clip_1(g_T) - clip_1(g_V)||^2; uses 2 - 2 u.v when both norms are >= 1.
inline double cosine_regularizer_summand(const std::vector<double>& gT,
                                         const std::vector<double>& gV) {
  if (gT.size() != gV.size()) throw ShapeError("cosine_regularizer_summand: size mismatch");
  double nT = 0.0, nV = 0.0;
  for (double v : gT) nT += v * v;
  for (double v : gV) nV += v * v;
  nT = std::sqrt(nT);
  nV = std::sqrt(nV);
  const double sT = nT > 1.0 ? 1.0 / nT : 1.0;
  const double sV = nV > 1.0 ? 1.0 / nV : 1.0;
  if (nT >= 1.0 && nV >= 1.0) {
    double dot = 0.0;
    for (std::size_t i = 0; i < gT.size(); ++i) dot += (sT * gT[i]) * (sV * gV[i]);
    return 2.0 - 2.0 * dot;
  }
  double d2 = 0.0;
  for (std::size_t i = 0; i < gT.size(); ++i) {
    const double d = sT * gT[i] - sV * gV[i];
    d2 += d * d;
  }
  return d2;
}

struct HessianTraceEstimate {
  double raw = 0.0;           // E ||grad log p||^2 = s^2 E ||grad R_hat||^2
  double per_example = 0.0;   // raw / s; equals tr(Hessian of R_hat) for quadratics
  double mean_sq_grad = 0.0;  // E ||grad R_hat||^2
  double scaled = 0.0;        // sqrt(eta / 4 * steps * mean_sq_grad)
  std::size_t samples = 0;
};

using GradFn = std::function<std::vector<double>(const std::vector<double>&)>;

// Monte-Carlo estimate over posterior samples of p ~ exp(-s R_hat).
inline HessianTraceEstimate hessian_trace_regularizer(
    const std::vector<std::vector<double>>& samples, const GradFn& grad, double s,
    double eta = 1.0, std::size_t steps = 1) {
  if (samples.empty()) throw DomainError("hessian_trace_regularizer: need at least one sample");
  if (!(s > 0.0)) throw DomainError("hessian_trace_regularizer: s must be positive");
  long double acc = 0.0L;
  for (const auto& th : samples) {
    const std::vector<double> g = grad(th);
    double n2 = 0.0;
    for (double v : g) n2 += v * v;
    acc += n2;
  }
  HessianTraceEstimate e;
  e.samples = samples.size();
  e.mean_sq_grad = static_cast<double>(acc / static_cast<long double>(samples.size()));
  e.raw = s * s * e.mean_sq_grad;
  e.per_example = s * e.mean_sq_grad;
  e.scaled = std::sqrt(eta / 4.0 * static_cast<double>(steps) * e.mean_sq_grad);
  return e;
}

// ---------------------------------------------------------------------------
// When training and validation data share a distribution the objective's
// first term becomes the expected training risk; everything else (the
// incoherence regularizer, the chains, the outer loop) is unchanged.

struct SameDistributionObjective {
  const Problem* problem = nullptr;
  HyperOptConfig config;

  HyperOptResult run(std::uint64_t seed, bool online = false) const {
    return HyperOptimizer(*problem, config, seed).run(online);
  }
  // first term + zeta sqrt(Y), recomputed from a history row.
  double value(const HistoryRow& row) const {
    return row.first_term + config.effective_zeta() * row.sqrt_Y;
  }
};

inline SameDistributionObjective same_distribution_objective(const Problem& p,
                                                             HyperOptConfig cfg) {
  cfg.first_term = FirstTerm::kTraining;
  return {&p, cfg};
}

}  // namespace pbho

#endif  // PBHO_BOUNDS_BOUNDS_HPP_
