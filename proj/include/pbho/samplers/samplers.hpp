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

// Inner-loop samplers: SGD, (SG)LD with a Gibbs temperature, Adam, and
// gradient clipping.

#ifndef PBHO_SAMPLERS_SAMPLERS_HPP_
#define PBHO_SAMPLERS_SAMPLERS_HPP_

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "pbho/errors.hpp"
#include "pbho/models/param_vector.hpp"
#include "pbho/rng.hpp"

namespace pbho {

// g / max(1, |g| / gamma). Norms within a relative 1e-12 of gamma count as
// inside the ball, which makes clip exactly idempotent under rounding.
inline std::vector<double> clip(const std::vector<double>& g, double gamma) {
  if (!(gamma > 0.0)) throw DomainError("clip: gamma must be positive");
  double n2 = 0.0;
  for (double v : g) n2 += v * v;
  const double nrm = std::sqrt(n2);
  if (nrm <= gamma * (1.0 + 1e-12)) return g;
  const double scale = nrm / gamma;
  std::vector<double> out(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) out[i] = g[i] / scale;
  return out;
}

struct ClipConfig {
  std::optional<double> gamma;  // nullopt = off
  std::vector<double> apply(const std::vector<double>& g) const {
    return gamma ? clip(g, *gamma) : g;
  }
};

struct StepSchedule {
  std::vector<double> etas;  // one entry (constant) or one per step

  static StepSchedule constant(double eta) { return {{eta}}; }
  double at(std::size_t t) const { return etas.size() == 1 ? etas[0] : etas.at(t); }
  void validate(std::size_t T) const {
    if (etas.empty()) throw DomainError("step schedule is empty");
    if (etas.size() != 1 && etas.size() != T)
      throw DomainError("per-step schedule has " + std::to_string(etas.size()) +
                        " entries for " + std::to_string(T) + " steps");
    for (double e : etas)
      if (!(e > 0.0) || !std::isfinite(e)) throw DomainError("step sizes must be positive");
  }
};

// One trajectory: current theta, step index, its own RNG stream, and the
// regularizer accumulators X (length n) and Y.
struct ChainState {
  std::vector<double> theta;
  std::size_t t = 0;
  Rng rng;
  Normal normal;
  std::vector<double> X;
  double Y = 0.0;

  ChainState() = default;
  ChainState(std::vector<double> theta0, Rng r, std::size_t n_hyper = 0)
      : theta(std::move(theta0)), rng(std::move(r)), X(n_hyper, 0.0) {}
};

namespace detail {
inline void check_grad(const std::vector<double>& g, std::size_t m) {
  if (g.size() != m) throw ShapeError("gradient length does not match theta");
  for (double v : g)
    if (!std::isfinite(v)) throw NonFiniteError("non-finite gradient in sampler step");
}
inline void check_theta(const std::vector<double>& th) {
  for (double v : th)
    if (!std::isfinite(v)) throw NonFiniteError("sampler iterate diverged (non-finite theta)");
}
}  // namespace detail

// theta <- theta - eta * grad.
inline void sgd_step(ChainState& s, const std::vector<double>& grad, double eta) {
  detail::check_grad(grad, s.theta.size());
  for (std::size_t i = 0; i < grad.size(); ++i) s.theta[i] -= eta * grad[i];
  detail::check_theta(s.theta);
  ++s.t;
}

// theta <- theta - eta * grad + z, z ~ N(0, 2 eta / tau I); tau defaults to
// the sample size s. Returns the injected noise.
inline std::vector<double> sgld_step(ChainState& st, const std::vector<double>& grad, double eta,
                                     double s, std::optional<double> tau = std::nullopt) {
  detail::check_grad(grad, st.theta.size());
  const double temp = tau.value_or(s);
  if (!(eta >= 0.0) || !(s > 0.0) || !(temp > 0.0))
    throw DomainError("sgld_step: need eta >= 0 and s, tau > 0");
  const double sd = std::sqrt(2.0 * eta / temp);
  std::vector<double> z(grad.size());
  for (std::size_t i = 0; i < grad.size(); ++i) {
    z[i] = sd * st.normal(st.rng);
    st.theta[i] = (st.theta[i] - eta * grad[i]) + z[i];
  }
  detail::check_theta(st.theta);
  ++st.t;
  return z;
}

struct AdamState {
  std::vector<double> m, v;
  std::size_t t = 0;
};

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

inline void adam_step(std::vector<double>& theta, AdamState& st, const std::vector<double>& grad,
                      const AdamConfig& cfg) {
  detail::check_grad(grad, theta.size());
  if (st.m.empty()) {
    st.m.assign(theta.size(), 0.0);
    st.v.assign(theta.size(), 0.0);
  }
  ++st.t;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.t));
  for (std::size_t i = 0; i < theta.size(); ++i) {
    st.m[i] = cfg.beta1 * st.m[i] + (1.0 - cfg.beta1) * grad[i];
    st.v[i] = cfg.beta2 * st.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    theta[i] -= cfg.lr * (st.m[i] / c1) / (std::sqrt(st.v[i] / c2) + cfg.eps);
  }
  detail::check_theta(theta);
}

}  // namespace pbho

#endif  // PBHO_SAMPLERS_SAMPLERS_HPP_
