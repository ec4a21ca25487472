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

// Freedman's paradox: greedy forward selection on a linear model scored by
// plain validation error, by the incoherence-regularized objective, or by AIC.
//
// Everything here works from second moments. With G = X^T X / n and
// c = X^T y / n, the mean squared error of theta is
//   theta^T G theta - 2 c^T theta + mean(y^2),
// its gradient is 2 (G theta - c), and the OLS fit solves G theta = c.

#ifndef PBHO_EXPERIMENTS_FREEDMAN_HPP_
#define PBHO_EXPERIMENTS_FREEDMAN_HPP_

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pbho/errors.hpp"
#include "pbho/experiments/stats.hpp"
#include "pbho/models/dataset.hpp"
#include "pbho/models/generators.hpp"
#include "pbho/rng.hpp"

namespace pbho {

using Features = std::vector<std::size_t>;

namespace freedman_detail {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Eigen::Map<const RowMajor> design(const Dataset& S) {
  return {S.X.data.data(), static_cast<Eigen::Index>(S.size()),
          static_cast<Eigen::Index>(S.dim())};
}

inline Eigen::VectorXd select(const Eigen::VectorXd& v, const Features& f) {
  Eigen::VectorXd out(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) out[i] = v[f[i]];
  return out;
}

inline Eigen::MatrixXd select(const Eigen::MatrixXd& m, const Features& f) {
  Eigen::MatrixXd out(f.size(), f.size());
  for (std::size_t i = 0; i < f.size(); ++i)
    for (std::size_t j = 0; j < f.size(); ++j) out(i, j) = m(f[i], f[j]);
  return out;
}

}  // namespace freedman_detail

// Second moments of a regression data set.
struct GramCache {
  Eigen::MatrixXd G;  // X^T X / n
  Eigen::VectorXd c;  // X^T y / n
  double yy = 0.0;    // mean y^2
  double y_var = 0.0; // mean (y - mean y)^2
  std::size_t n = 0;

  static GramCache of(const Dataset& S) {
    if (S.is_classification()) throw DatasetError("forward selection needs a regression data set");
    auto X = freedman_detail::design(S);
    Eigen::Map<const Eigen::VectorXd> y(S.y.data(), static_cast<Eigen::Index>(S.size()));
    GramCache g;
    g.n = S.size();
    const double inv = 1.0 / static_cast<double>(g.n);
    g.G = (X.transpose() * X) * inv;
    g.c = (X.transpose() * y) * inv;
    g.yy = y.squaredNorm() * inv;
    const double mean = y.mean();
    g.y_var = g.yy - mean * mean;
    return g;
  }

  double mse(const Features& f, const Eigen::VectorXd& theta) const {
    if (f.empty()) return yy;
    const Eigen::MatrixXd Gs = freedman_detail::select(G, f);
    const Eigen::VectorXd cs = freedman_detail::select(c, f);
    return theta.dot(Gs * theta) - 2.0 * cs.dot(theta) + yy;
  }
};

// Solves G theta = c by LDL^T; a vanishing pivot means the selected columns
// are (numerically) linearly dependent.
inline Eigen::VectorXd solve_normal_equations(const Eigen::MatrixXd& G, const Eigen::VectorXd& c) {
  if (G.rows() == 0) return Eigen::VectorXd(0);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(G);
  const Eigen::VectorXd D = ldlt.vectorD();
  const double top = D.cwiseAbs().maxCoeff();
  if (ldlt.info() != Eigen::Success || !(D.minCoeff() > 1e-12 * top))
    throw DomainError("ols: selected design matrix is rank deficient");
  return ldlt.solve(c);
}

inline Eigen::VectorXd ols_from_gram(const GramCache& g, const Features& f) {
  return solve_normal_equations(freedman_detail::select(g.G, f), freedman_detail::select(g.c, f));
}

// Least squares on the selected columns of S.
inline std::vector<double> ols_fit(const Dataset& S, const Features& features) {
  if (features.empty()) return {};
  for (std::size_t j : features)
    if (j >= S.dim()) throw ShapeError("ols: feature index out of range");
  const Dataset sub = S.columns(features);
  const GramCache g = GramCache::of(sub);
  const Eigen::VectorXd th = solve_normal_equations(g.G, g.c);
  return {th.data(), th.data() + th.size()};
}

// Mean squared error of a linear predictor on the selected columns.
inline double linear_mse(const Dataset& S, const Features& f, const std::vector<double>& theta) {
  if (theta.size() != f.size()) throw ShapeError("linear_mse: coefficient count mismatch");
  const std::size_t d = S.dim();
  double acc = 0.0;
  for (std::size_t i = 0; i < S.size(); ++i) {
    double pred = 0.0;
    for (std::size_t k = 0; k < f.size(); ++k) pred += S.X.data[i * d + f[k]] * theta[k];
    const double r = S.y[i] - pred;
    acc += r * r;
  }
  return acc / static_cast<double>(S.size());
}

// ---------------------------------------------------------------------------
// Regularized objective by Langevin chains on the selected-feature model.

struct LdConfig {
  std::size_t chains = 50;
  double eta = 0.1;
  std::size_t steps = 50;
  double init_sd = 1.0;  // theta_0 ~ N(0, init_sd^2 I)
  // Temperatures tried; 0 stands for |S_T|.
  std::vector<double> tau_grid = {0.1, 1.0, 10.0, 100.0, 0.0};

  void validate() const {
    if (chains == 0 || steps == 0) throw ConfigError("ld", "chains and steps must be positive");
    if (!(eta > 0.0)) throw ConfigError("ld.eta", "must be positive");
    if (!(init_sd >= 0.0)) throw ConfigError("ld.init_sd", "must be non-negative");
    if (tau_grid.empty()) throw ConfigError("ld.tau_grid", "must not be empty");
    for (double t : tau_grid)
      if (!(t >= 0.0)) throw ConfigError("ld.tau_grid", "temperatures must be positive (0 = |S_T|)");
  }
};

// Standard normals shared by every candidate model (common random numbers),
// so greedy comparisons are not decided by chain noise. Slice t holds
// dims x chains draws; slice 0 seeds the initial state.
class LdNoise {
 public:
  LdNoise(const LdConfig& ld, std::size_t dims, Rng& rng) : dims_(dims) {
    Normal normal;
    slices_.resize(ld.steps + 1);
    for (auto& s : slices_) {
      s.resize(static_cast<Eigen::Index>(dims), static_cast<Eigen::Index>(ld.chains));
      for (Eigen::Index c = 0; c < s.cols(); ++c)
        for (Eigen::Index k = 0; k < s.rows(); ++k) s(k, c) = normal(rng);
    }
  }
  auto top(std::size_t t, std::size_t p) const {
    return slices_[t].topRows(static_cast<Eigen::Index>(p));
  }
  std::size_t dims() const { return dims_; }
  std::size_t steps() const { return slices_.size() - 1; }
  std::size_t chains() const { return static_cast<std::size_t>(slices_[0].cols()); }

 private:
  std::size_t dims_;
  std::vector<Eigen::MatrixXd> slices_;
};

struct Eq5Estimate {
  double value = 0.0;     // val_risk + zeta sqrt(Y) at the best temperature
  double val_risk = 0.0;  // chain mean of R_V(theta_T)
  double Y = 0.0;         // sum_t chain-mean ||grad R_T - grad R_V||^2
  double tau = 0.0;
};

inline Eq5Estimate eq5_from_gram(const GramCache& T, const GramCache& V, const Features& f,
                                 double zeta, const LdConfig& ld, const LdNoise& noise) {
  Eq5Estimate best;
  if (f.empty()) {
    best.value = best.val_risk = V.yy;
    best.tau = ld.tau_grid.front() > 0.0 ? ld.tau_grid.front() : static_cast<double>(T.n);
    return best;
  }
  const std::size_t p = f.size();
  if (p > noise.dims() || noise.steps() != ld.steps || noise.chains() != ld.chains)
    throw ShapeError("eq5 estimate: noise bank does not match the configuration");
  const Eigen::MatrixXd GT = 2.0 * freedman_detail::select(T.G, f);
  const Eigen::VectorXd cT = 2.0 * freedman_detail::select(T.c, f);
  const Eigen::MatrixXd GV = freedman_detail::select(V.G, f);
  const Eigen::VectorXd cV = freedman_detail::select(V.c, f);
  const Eigen::MatrixXd D = GT - 2.0 * GV;
  const Eigen::VectorXd dc = cT - 2.0 * cV;
  const double invC = 1.0 / static_cast<double>(ld.chains);
  best.value = std::numeric_limits<double>::infinity();
  Eigen::MatrixXd th, g, dg;
  for (double tau_cfg : ld.tau_grid) {
    const double tau = tau_cfg > 0.0 ? tau_cfg : static_cast<double>(T.n);
    const double sd = std::sqrt(2.0 * ld.eta / tau);
    th = ld.init_sd * noise.top(0, p);
    double Y = 0.0;
    for (std::size_t t = 0; t < ld.steps; ++t) {
      g.noalias() = GT * th;
      g.colwise() -= cT;
      dg.noalias() = D * th;
      dg.colwise() -= dc;
      Y += dg.colwise().squaredNorm().sum() * invC;
      th -= ld.eta * g;
      th += sd * noise.top(t + 1, p);
    }
    // R_V(theta) = theta^T GV theta - 2 cV^T theta + mean y_V^2, per chain.
    const double rv =
        ((GV * th).cwiseProduct(th).colwise().sum() - 2.0 * (cV.transpose() * th)).sum() * invC +
        V.yy;
    if (!std::isfinite(rv) || !std::isfinite(Y))
      throw NonFiniteError("eq5 estimate: Langevin chain diverged (tau = " + std::to_string(tau) +
                           ")");
    const double value = rv + zeta * std::sqrt(Y);
    if (value < best.value) best = {value, rv, Y, tau};
  }
  return best;
}

// Convenience form that draws its own noise.
inline Eq5Estimate eq5_objective_estimate(const Dataset& ST, const Dataset& SV, const Features& f,
                                          double zeta, const LdConfig& ld, Rng& rng) {
  ld.validate();
  LdNoise noise(ld, std::max<std::size_t>(f.size(), 1), rng);
  return eq5_from_gram(GramCache::of(ST), GramCache::of(SV), f, zeta, ld, noise);
}

// ---------------------------------------------------------------------------
// Greedy forward selection.

enum class SelectionObjective { kEq1, kEq5, kAic };

inline const char* to_string(SelectionObjective o) {
  switch (o) {
    case SelectionObjective::kEq1: return "eq1";
    case SelectionObjective::kEq5: return "eq5";
    case SelectionObjective::kAic: return "aic";
  }
  return "?";
}

struct SelectionConfig {
  SelectionObjective objective = SelectionObjective::kEq1;
  std::size_t max_p = 10;
  double zeta = 0.0;  // eq5 only
  LdConfig ld;
};

struct SelectionPathEntry {
  Features features;  // in the order they were added
  std::size_t p = 0;
  double objective = 0.0;
  double val_r2 = 0.0;
  double val_mse = 0.0;
  double train_mse = 0.0;
  double test_mse = std::nan("");
  double aic = 0.0;  // 2p + n_V * MSE_V
};

struct SelectionPath {
  SelectionObjective objective = SelectionObjective::kEq1;
  std::vector<SelectionPathEntry> entries;
  std::size_t argmin = 0;

  const SelectionPathEntry& best() const { return entries.at(argmin); }
};

// Held-out data and second moments shared by the three objectives.
struct SelectionData {
  GramCache train, val;
  const Dataset* test = nullptr;
  std::size_t d = 0;

  SelectionData(const Dataset& ST, const Dataset& SV, const Dataset* test_set)
      : train(GramCache::of(ST)), val(GramCache::of(SV)), test(test_set), d(ST.dim()) {
    if (SV.dim() != d || (test && test->dim() != d))
      throw ShapeError("forward selection: data sets disagree on the feature count");
  }
};

inline SelectionPath forward_select(const SelectionData& data, const SelectionConfig& cfg,
                                    std::uint64_t seed) {
  if (cfg.max_p > data.d) throw ConfigError("selection.max_p", "exceeds the feature count");
  const bool eq5 = cfg.objective == SelectionObjective::kEq5;
  std::optional<LdNoise> noise;
  if (eq5) {
    cfg.ld.validate();
    Rng rng = make_rng(seed, "select/ld-noise");
    noise.emplace(cfg.ld, std::max<std::size_t>(cfg.max_p, 1), rng);
  }
  const double nV = static_cast<double>(data.val.n);

  auto entry_for = [&](const Features& f, double objective) {
    SelectionPathEntry e;
    e.features = f;
    e.p = f.size();
    const Eigen::VectorXd th = ols_from_gram(data.train, f);
    e.train_mse = data.train.mse(f, th);
    e.val_mse = data.val.mse(f, th);
    e.val_r2 = 1.0 - e.val_mse / data.val.y_var;
    e.aic = 2.0 * static_cast<double>(e.p) + nV * e.val_mse;
    if (data.test) e.test_mse = linear_mse(*data.test, f, {th.data(), th.data() + th.size()});
    switch (cfg.objective) {
      case SelectionObjective::kEq1: e.objective = e.val_mse; break;
      case SelectionObjective::kAic: e.objective = e.aic; break;
      case SelectionObjective::kEq5: e.objective = objective; break;
    }
    return e;
  };
  // The quantity minimized when choosing the next feature. AIC ranks
  // candidates by training fit, so its path is the classical greedy
  // least-squares path, and AIC then picks a point on it.
  auto score = [&](const Features& f) {
    switch (cfg.objective) {
      case SelectionObjective::kEq1: return data.val.mse(f, ols_from_gram(data.train, f));
      case SelectionObjective::kAic: return data.train.mse(f, ols_from_gram(data.train, f));
      case SelectionObjective::kEq5:
        return eq5_from_gram(data.train, data.val, f, cfg.zeta, cfg.ld, *noise).value;
    }
    return 0.0;
  };

  SelectionPath path;
  path.objective = cfg.objective;
  Features S;
  path.entries.push_back(entry_for(S, eq5 ? score(S) : 0.0));
  std::vector<bool> used(data.d, false);
  for (std::size_t step = 0; step < cfg.max_p; ++step) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t pick = data.d;
    Features cand = S;
    cand.push_back(0);
    for (std::size_t j = 0; j < data.d; ++j) {
      if (used[j]) continue;
      cand.back() = j;
      double v;
      try {
        v = score(cand);
      } catch (const DomainError&) {
        continue;  // collinear with the current set
      }
      if (v < best) {
        best = v;
        pick = j;
      }
    }
    if (pick == data.d) throw DomainError("forward selection: no admissible feature to add");
    used[pick] = true;
    S.push_back(pick);
    path.entries.push_back(entry_for(S, eq5 ? best : 0.0));
  }
  for (std::size_t i = 1; i < path.entries.size(); ++i)
    if (path.entries[i].objective < path.entries[path.argmin].objective) path.argmin = i;
  return path;
}

inline SelectionPath forward_select(const Dataset& ST, const Dataset& SV, const Dataset* test,
                                    const SelectionConfig& cfg, std::uint64_t seed) {
  return forward_select(SelectionData(ST, SV, test), cfg, seed);
}

// ---------------------------------------------------------------------------
// One seeded replicate of the experiment.

// Two readings of the Freedman trade-off weight: zeta = eta / 4, or
// zeta^2 = eta / 4. With eta = 0.1 they give 0.025 and 0.158.
enum class ZetaReading { kEtaOverFour, kSqrtEtaOverFour };

struct FreedmanConfig {
  FreedmanVersion version = FreedmanVersion::kNull;
  std::size_t n = 500;  // split evenly into train and validation
  std::size_t d = 500;
  std::size_t n_test = 10000;
  std::size_t max_p = 10;
  // Multiplies sqrt(sum_t E||d_t||^2). An explicit value wins over the
  // reading, which is evaluated at ld.eta.
  ZetaReading zeta_reading = ZetaReading::kEtaOverFour;
  std::optional<double> zeta;
  LdConfig ld;
  std::vector<SelectionObjective> objectives = {SelectionObjective::kEq1,
                                                SelectionObjective::kEq5,
                                                SelectionObjective::kAic};

  double effective_zeta() const {
    if (zeta) return *zeta;
    return zeta_reading == ZetaReading::kEtaOverFour ? ld.eta / 4.0 : std::sqrt(ld.eta / 4.0);
  }
};

struct FreedmanResult {
  std::uint64_t seed = 0;
  std::vector<SelectionPath> paths;  // in config order
  // Spearman correlation of each path's objective with test MSE.
  std::vector<double> test_spearman;

  const SelectionPath* path(SelectionObjective o) const {
    for (const auto& p : paths)
      if (p.objective == o) return &p;
    return nullptr;
  }
  double spearman_for(SelectionObjective o) const {
    for (std::size_t i = 0; i < paths.size(); ++i)
      if (paths[i].objective == o) return test_spearman[i];
    return std::nan("");
  }
};

inline FreedmanResult run_freedman(const FreedmanConfig& cfg, std::uint64_t seed) {
  const Splits s = generate_freedman(cfg.version, cfg.n, cfg.d, seed, cfg.n_test);
  const SelectionData data(s.train, s.val, &s.test);
  FreedmanResult out;
  out.seed = seed;
  for (SelectionObjective o : cfg.objectives) {
    SelectionConfig sc;
    sc.objective = o;
    sc.max_p = cfg.max_p;
    sc.zeta = cfg.effective_zeta();
    sc.ld = cfg.ld;
    out.paths.push_back(forward_select(data, sc, seed));
    std::vector<double> obj, test;
    for (const auto& e : out.paths.back().entries) {
      obj.push_back(e.objective);
      test.push_back(e.test_mse);
    }
    out.test_spearman.push_back(spearman(obj, test));
  }
  return out;
}

}  // namespace pbho

#endif  // PBHO_EXPERIMENTS_FREEDMAN_HPP_
