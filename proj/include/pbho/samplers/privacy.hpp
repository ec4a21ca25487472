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

// (epsilon, delta)-DP SGLD with one-epoch minibatching, the step-size
// certificate that makes it private, and budget accounting.

#ifndef PBHO_SAMPLERS_PRIVACY_HPP_
#define PBHO_SAMPLERS_PRIVACY_HPP_

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "pbho/errors.hpp"
#include "pbho/models/dataset.hpp"
#include "pbho/models/model.hpp"
#include "pbho/samplers/samplers.hpp"

namespace pbho {

struct PrivacyBudget {
  double eps = 0.5;
  double delta = 0.01;
  int chains = 1;
  std::size_t h = 1;  // minibatch size
  std::size_t s = 1;  // dataset size

  void validate() const {
    if (!(eps > 0.0 && eps <= 0.5)) throw DomainError("privacy: epsilon must lie in (0, 1/2]");
    if (!(delta > 0.0 && delta < eps)) throw DomainError("privacy: delta must lie in (0, epsilon)");
    if (chains < 1) throw DomainError("privacy: chain count must be >= 1");
    if (h < 1 || h > s) throw DomainError("privacy: minibatch size must lie in [1, s]");
  }
};

// Largest step size certified (epsilon, delta)-DP for one chain:
//   eta <= h^2 eps^2 / (s gamma^2 ln(1.25 / delta)).
inline double max_dp_step_size(const PrivacyBudget& b, double gamma) {
  b.validate();
  if (!(gamma > 0.0)) throw DomainError("privacy: gamma must be positive");
  const double h = static_cast<double>(b.h), s = static_cast<double>(b.s);
  return h * h * b.eps * b.eps / (s * gamma * gamma * std::log(1.25 / b.delta));
}

struct PrivacyCost {
  double eps = 0.0;
  double delta = 0.0;
};

// Steps on disjoint minibatches compose in parallel: the max over steps.
inline PrivacyCost compose_parallel(const std::vector<PrivacyCost>& steps) {
  PrivacyCost out;
  for (const auto& c : steps) {
    out.eps = std::max(out.eps, c.eps);
    out.delta = std::max(out.delta, c.delta);
  }
  return out;
}

// Total budget of C independent chains, each (eps, delta)-DP.
inline PrivacyCost account_privacy(const PrivacyBudget& b, int C) {
  if (C < 1) throw DomainError("privacy: chain count must be >= 1");
  return {C * b.eps, C * b.delta};
}

// Points on the (eps, delta) frontier at which a given step size is exactly
// certified: eps(delta) = sqrt(eta s gamma^2 ln(1.25/delta)) / h. Only points
// with eps <= 1/2 and delta < eps are returned.
inline std::vector<PrivacyCost> privacy_frontier(double eta, std::size_t h, std::size_t s,
                                                 double gamma, const std::vector<double>& deltas) {
  if (!(eta > 0.0) || !(gamma > 0.0) || h < 1 || h > s)
    throw DomainError("privacy frontier: need eta, gamma > 0 and 1 <= h <= s");
  std::vector<PrivacyCost> out;
  for (double d : deltas) {
    if (!(d > 0.0 && d < 1.25)) continue;
    double e = std::sqrt(eta * static_cast<double>(s) * gamma * gamma * std::log(1.25 / d)) /
               static_cast<double>(h);
    if (e <= 0.5 && d < e) out.push_back({e, d});
  }
  return out;
}

struct DpSgldOptions {
  // Allow more than one pass over the data. Voids the certificate.
  bool unsafe_multi_epoch = false;
  // Test hook: scale the injected noise (1 = the algorithm as specified).
  double noise_scale = 1.0;
  bool keep_trajectory = true;
};

struct DpSgldResult {
  std::vector<double> theta;
  std::vector<std::vector<double>> trajectory;  // theta_0 .. theta_T
  std::vector<std::vector<std::size_t>> batches;
  std::vector<std::vector<double>> noise;
  double max_certified_eta = 0.0;
  bool certificate_valid = true;
};

// theta_{t+1} = theta_t - (eta_t / h) clip_gamma(grad R(theta_t; S_J)) + z_t,
// z_t ~ N(0, 2 eta_t / s I), J_t disjoint minibatches of size h.
inline DpSgldResult dp_sgld_run(const Model& model, const Dataset& S, const LossSpec& loss,
                                const HyperVector* lambda, std::size_t T,
                                const StepSchedule& schedule, const InitDistribution& init,
                                const PrivacyBudget& budget, double gamma, std::uint64_t seed,
                                const DpSgldOptions& opt = {}) {
  if (budget.s != S.size())
    throw DomainError("privacy budget dataset size " + std::to_string(budget.s) +
                      " does not match |S| = " + std::to_string(S.size()));
  const double eta_max = max_dp_step_size(budget, gamma);
  DpSgldResult res;
  res.max_certified_eta = eta_max;
  if (T > 0) schedule.validate(T);
  for (std::size_t t = 0; t < T; ++t) {
    if (schedule.at(t) > eta_max)
      throw PrivacyViolation("step " + std::to_string(t) + ": eta = " +
                             std::to_string(schedule.at(t)) +
                             " exceeds the certified maximum " + std::to_string(eta_max));
  }
  if (T * budget.h > S.size()) {
    if (!opt.unsafe_multi_epoch)
      throw PrivacyViolation("T * h = " + std::to_string(T * budget.h) + " exceeds |S| = " +
                             std::to_string(S.size()) +
                             " (more than one epoch); pass the unsafe multi-epoch override to "
                             "run anyway without a certificate");
    res.certificate_valid = false;
  }
  Rng init_rng = make_rng(seed, "dp_sgld/init");
  ChainState st(sample_init(model, init, init_rng).values(), make_rng(seed, "dp_sgld/noise"));
  MinibatchSampler batches(S.size(), budget.h, false, make_rng(seed, "dp_sgld/batches"));
  if (opt.keep_trajectory) res.trajectory.push_back(st.theta);
  const double s = static_cast<double>(S.size()), h = static_cast<double>(budget.h);
  for (std::size_t t = 0; t < T; ++t) {
    const double eta = schedule.at(t);
    std::vector<std::size_t> J = batches.next();
    Dataset SJ = S.subset(J);
    std::vector<double> g =
        clip(grad_risk(model, ParamVector(st.theta), SJ, lambda, loss, true), gamma);
    for (double& v : g) v /= h;
    const double sd = opt.noise_scale * std::sqrt(2.0 * eta / s);
    std::vector<double> z(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
      z[i] = sd * st.normal(st.rng);
      st.theta[i] += -eta * g[i] + z[i];
    }
    detail::check_theta(st.theta);
    ++st.t;
    res.batches.push_back(std::move(J));
    if (opt.keep_trajectory) {
      res.trajectory.push_back(st.theta);
      res.noise.push_back(std::move(z));
    }
  }
  res.theta = st.theta;
  return res;
}

}  // namespace pbho

#endif  // PBHO_SAMPLERS_PRIVACY_HPP_
