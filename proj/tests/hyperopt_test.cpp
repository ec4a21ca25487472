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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "oracles/ridge.hpp"
#include "pbho/hyperopt/hyperopt.hpp"
#include "pbho/models/generators.hpp"

namespace pbho {
namespace {

using testing::make_ridge_toy;
using testing::ridge_oracle;
using testing::ridge_problem;

// R(theta) = theta . c for a fixed vector c; gradient c everywhere.
RiskFn linear_risk(std::vector<double> c) {
  return [c](ad::Tape& t, const ad::Var& th, const ad::Var&, const Dataset&) {
    return ad::dot(th, t.constant(ad::Tensor::vector(c)));
  };
}

Problem tiny_linear_problem(std::vector<double> cT, std::vector<double> cV) {
  Problem p;
  p.risk_T = linear_risk(cT);
  p.risk_V = linear_risk(cV);
  p.train = Dataset(ad::Tensor({1, 1}, {0.0}), {0.0});
  p.val = p.train;
  p.lambda0 = {0.0};
  p.init = [](Rng&) { return std::vector<double>{0.0, 0.0}; };
  return p;
}

TEST(IncoherenceSummand, Trivial) {
  Problem same = tiny_linear_problem({1, 0}, {1, 0});
  EXPECT_EQ(incoherence_summand(same, {0.3, 0.1}, same.train, same.val, {0.0}).d2, 0.0);
  Problem orth = tiny_linear_problem({1, 0}, {0, 1});
  EXPECT_DOUBLE_EQ(incoherence_summand(orth, {0.3, 0.1}, orth.train, orth.val, {0.0}).d2, 2.0);
}

TEST(IncoherenceSummand, MatchesTwoGradientSubtraction) {
  Dataset ST = generate_freedman(FreedmanVersion::kNull, 40, 3, 5, 10).train;
  Dataset SV = generate_freedman(FreedmanVersion::kNull, 40, 3, 6, 10).val;
  Model m3(ModelKind::kLinearRegression, {3, 0, 0, Activation::kTanh});
  LossSpec spec;
  spec.decay = DecayMode::kPerParameter;
  Problem p = make_problem(m3, spec, ST, SV, std::nullopt, InitDistribution{}, {0.1, -0.2, 0.3},
                           InnerConfig{});
  ParamVector theta({0.4, -1.0, 0.25});
  HyperVector lambda({0.1, -0.2, 0.3});
  auto gT = grad_risk(m3, theta, ST, &lambda, spec, true);
  auto gV = grad_risk(m3, theta, SV, &lambda, spec, false);
  double want = 0;
  for (int i = 0; i < 3; ++i) want += (gT[i] - gV[i]) * (gT[i] - gV[i]);
  Summand s = incoherence_summand(p, theta.values(), ST, SV, lambda.values());
  EXPECT_NEAR(s.d2, want, 1e-12 * want);
  // Direct partial: d/dlambda_i of (..+ e^l_i th_i - ..)^2 = 2 diff_i e^l_i th_i.
  for (int i = 0; i < 3; ++i)
    EXPECT_NEAR(s.hypergrad[i], 2 * (gT[i] - gV[i]) * std::exp(lambda[i]) * theta[i], 1e-12);
}

HyperOptConfig ridge_config(std::size_t T, double zeta) {
  HyperOptConfig c;
  c.T = T;
  c.K = T;
  c.zeta = zeta;
  c.outer = OuterOptimizerKind::kGradientDescent;
  c.outer_lr = 0.1;
  c.outer_steps = 1;
  return c;
}

TEST(Alg1, RidgeHypergradMatchesExactUnrollAndFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto toy = make_ridge_toy(seed, 1 + seed % 5);
    const double lam = -1.0 + 0.02 * static_cast<double>(seed);
    const double zeta = 0.3;
    Problem p = ridge_problem(toy, lam);
    HyperOptimizer opt(p, ridge_config(toy.T, zeta), seed);
    HistoryRow row;
    const double g = opt.outer_gradient(&row)[0];
    auto o = ridge_oracle(toy, lam, zeta);
    EXPECT_NEAR(g, o.grad, 1e-8 * std::max(1.0, std::abs(o.grad))) << seed;
    EXPECT_NEAR(row.objective_value, o.value, 1e-10) << seed;
    const double h = 1e-5;
    const double fd =
        (ridge_oracle(toy, lam + h, zeta).value - ridge_oracle(toy, lam - h, zeta).value) / (2 * h);
    EXPECT_NEAR(g, fd, 1e-3 * std::max(std::abs(fd), 1e-6)) << seed;
  }
}

TEST(Alg1, AccumulatorIdentity) {
  // X / sqrt(Y) = zeta * d sqrt(sum d^2) / d lambda; isolate it by subtracting
  // the zeta = 0 gradient.
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto toy = make_ridge_toy(seed, 4);
    Problem p = ridge_problem(toy, 0.2);
    const double zeta = 0.7;
    const double g5 = HyperOptimizer(p, ridge_config(4, zeta), 1).outer_gradient()[0];
    const double g1 = HyperOptimizer(p, ridge_config(4, 0.0), 1).outer_gradient()[0];
    const double want = zeta * ridge_oracle(toy, 0.2, zeta).dsqrtY;
    EXPECT_NEAR(g5 - g1, want, 1e-6 * std::abs(want)) << seed;
  }
}

TEST(Alg1, ZetaZeroIsBitIdenticalToEq1) {
  auto toy = make_ridge_toy(3, 5);
  Problem p = ridge_problem(toy, 0.0);
  p.inner.kind = InnerKind::kSgld;
  p.init = [](Rng& r) { return std::vector<double>{Normal()(r)}; };
  HyperOptConfig c = ridge_config(5, 0.0);
  c.outer_steps = 20;
  c.outer = OuterOptimizerKind::kRmsProp;
  auto a = optimize_eq5_alg1(p, c, 9);
  auto b = optimize_eq1(p, c, 9);
  ASSERT_EQ(a.history.size(), b.history.size());
  EXPECT_TRUE(a.lambda == b.lambda);
  for (std::size_t i = 0; i < a.history.size(); ++i)
    EXPECT_TRUE(a.history[i].hypergrad == b.history[i].hypergrad);
}

TEST(Alg1, IdenticalSetsGiveZeroRegularizer) {
  auto toy = make_ridge_toy(4, 3);
  toy.val = toy.train;
  Problem p = ridge_problem(toy, 0.0);
  // Identical losses: validation also carries the decay term.
  p.risk_V = p.risk_T;
  HyperOptConfig c = ridge_config(3, 0.5);
  c.outer_steps = 10;
  auto a = optimize_eq5_alg1(p, c, 1);
  auto b = optimize_eq1(p, c, 1);
  for (const auto& r : a.history) {
    EXPECT_EQ(r.Y, 0.0);
    EXPECT_EQ(r.y_floor_hits, 1u);
  }
  EXPECT_TRUE(a.lambda == b.lambda);
}

TEST(Alg3, SingleChainMatchesAlg1) {
  auto toy = make_ridge_toy(5, 4);
  Problem p = ridge_problem(toy, 0.0);
  p.inner.kind = InnerKind::kSgld;
  p.init = [](Rng& r) { return std::vector<double>{Normal()(r)}; };
  HyperOptConfig c = ridge_config(4, 0.2);
  c.outer_steps = 10;
  auto a = optimize_eq5_alg1(p, c, 3);
  auto b = optimize_eq5_alg3(p, c, 3);
  EXPECT_TRUE(a.lambda == b.lambda);
}

TEST(Alg3, IdenticalChainsEqualOneChain) {
  auto toy = make_ridge_toy(6, 4);
  Problem p = ridge_problem(toy, 0.0);
  p.inner.kind = InnerKind::kSgld;
  p.init = [](Rng& r) { return std::vector<double>{Normal()(r)}; };
  HyperOptConfig c = ridge_config(4, 0.2);
  c.outer_steps = 5;
  c.shared_chain_seeds = true;
  auto one = optimize_eq5_alg3(p, c, 3);
  c.C = 4;
  auto four = optimize_eq5_alg3(p, c, 3);
  EXPECT_NEAR(one.lambda[0], four.lambda[0], 1e-13);
}

TEST(Alg3, MoreChainsReduceOuterGradientVariance) {
  auto toy = make_ridge_toy(7, 4);
  Problem p = ridge_problem(toy, 0.0);
  p.inner.kind = InnerKind::kSgld;
  p.inner.tau = 20.0;
  p.init = [](Rng& r) { return std::vector<double>{Normal()(r)}; };
  auto var_over_seeds = [&](std::size_t C) {
    HyperOptConfig c = ridge_config(4, 0.2);
    c.C = C;
    std::vector<double> g;
    for (std::uint64_t s = 0; s < 30; ++s) g.push_back(HyperOptimizer(p, c, s).outer_gradient()[0]);
    double m = 0, v = 0;
    for (double x : g) m += x / g.size();
    for (double x : g) v += (x - m) * (x - m) / (g.size() - 1);
    return v;
  };
  EXPECT_LT(var_over_seeds(8), var_over_seeds(1));
}

TEST(Alg4, IdenticalSetsDegenerateToFirstTermUpdates) {
  auto toy = make_ridge_toy(8, 3);
  toy.val = toy.train;
  Problem p = ridge_problem(toy, 0.0);
  p.risk_V = p.risk_T;
  HyperOptConfig c = ridge_config(3, 0.5);
  c.outer_steps = 6;
  auto on = optimize_eq5_alg4_online(p, c, 2);
  auto eq1 = optimize_eq1(p, c, 2);
  EXPECT_TRUE(on.lambda == eq1.lambda);
}

TEST(Alg4, SingleInnerStepMatchesOffline) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto toy = make_ridge_toy(seed, 1);
    Problem p = ridge_problem(toy, 0.3);
    HyperOptConfig c = ridge_config(1, 0.4);
    c.outer_steps = 1;
    auto on = optimize_eq5_alg4_online(p, c, seed);
    auto off = optimize_eq5_alg3(p, c, seed);
    // Offline divides by sqrt(Y + eps_Y) instead of sqrt(Y).
    EXPECT_NEAR(on.lambda[0], off.lambda[0], 1e-9) << seed;
  }
}

TEST(Alg4, ZetaZeroEqualsOffline) {
  auto toy = make_ridge_toy(9, 3);
  Problem p = ridge_problem(toy, 0.0);
  HyperOptConfig c = ridge_config(3, 0.0);
  c.outer_steps = 5;
  EXPECT_TRUE(optimize_eq5_alg4_online(p, c, 1).lambda == optimize_eq5_alg3(p, c, 1).lambda);
}

TEST(T1T2, ZeroWhenValidationIsFlat) {
  Problem p = tiny_linear_problem({1, 0}, {0, 0});
  auto g = t1t2_val_hypergrad(p, {0.5, 0.5}, {0.4, 0.4}, p.val, p.train, {0.0}, 0.1);
  EXPECT_EQ(g, std::vector<double>({0.0}));
}

TEST(T1T2, EqualsExactOneStepUnroll) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto toy = make_ridge_toy(seed, 1);
    Problem p = ridge_problem(toy, 0.1);
    HyperOptConfig c = ridge_config(1, 0.0);
    c.val_hypergrad = ValHypergrad::kT1T2;
    const double g = HyperOptimizer(p, c, 0).outer_gradient()[0];
    EXPECT_NEAR(g, ridge_oracle(toy, 0.1, 0.0).grad, 1e-12) << seed;
  }
}

TEST(T1T2, DirectTermVanishesWhenValidationExcludesDecay) {
  auto toy = make_ridge_toy(1, 1);
  Problem p = ridge_problem(toy, 0.1);
  // theta_prev with zero mixed partial (theta_prev = 0) isolates the direct term.
  auto g = t1t2_val_hypergrad(p, {0.7}, {0.0}, p.val, p.train, {0.1}, 0.1);
  EXPECT_EQ(g[0], 0.0);
}

TEST(Truncation, KZeroIsDirectDecayPartial) {
  auto toy = make_ridge_toy(2, 3);
  Problem p = ridge_problem(toy, 0.4);
  TrajectoryWindow w(0);
  StepRecord cur;
  cur.theta = {0.8};
  cur.lambda = {0.4};
  auto g = truncated_hypergrad(p, w, cur, 2, 0, {0.4});
  Summand s = incoherence_summand(p, {0.8}, p.train, p.val, {0.4});
  EXPECT_EQ(g, s.hypergrad);
}

TEST(Truncation, FullDepthOnTwoStepsEqualsExactUnroll) {
  // With zeta = 0 only the first term remains; with K = T its hypergradient
  // is the full unroll.
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto toy = make_ridge_toy(seed, 2);
    Problem p = ridge_problem(toy, -0.3);
    const double g = HyperOptimizer(p, ridge_config(2, 0.0), 0).outer_gradient()[0];
    EXPECT_NEAR(g, ridge_oracle(toy, -0.3, 0.0).grad, 1e-12);
  }
}

TEST(Truncation, WindowOfLengthTEqualsFullDepth) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto toy = make_ridge_toy(seed, 5);
    Problem p = ridge_problem(toy, 0.0);
    HyperOptConfig k = ridge_config(5, 0.3);
    HyperOptConfig w = k;
    w.K = 0;
    w.W = 5;
    EXPECT_NEAR(HyperOptimizer(p, k, 0).outer_gradient()[0],
                HyperOptimizer(p, w, 0).outer_gradient()[0], 1e-13);
  }
}

TEST(Truncation, ShallowerKDiffersButStaysFinite) {
  auto toy = make_ridge_toy(12, 5);
  Problem p = ridge_problem(toy, 0.0);
  for (std::size_t K : {0u, 1u, 5u}) {
    HyperOptConfig c = ridge_config(5, 0.3);
    c.K = K;
    const double g = HyperOptimizer(p, c, 0).outer_gradient()[0];
    EXPECT_TRUE(std::isfinite(g)) << K;
  }
}

TEST(Truncation, StoredWindowIsBoundedByK) {
  auto toy = make_ridge_toy(13, 5);
  Problem p = ridge_problem(toy, 0.0);
  for (std::size_t K : {0u, 1u, 3u, 5u}) {
    HyperOptConfig c = ridge_config(5, 0.3);
    c.K = K;
    c.outer_steps = 2;
    auto r = optimize_eq5_alg1(p, c, 0);
    EXPECT_LE(r.max_stored_states, std::max<std::size_t>(K, 1)) << K;
  }
  TrajectoryWindow w(2);
  for (int i = 0; i < 4; ++i) w.push(StepRecord{});
  EXPECT_THROW(w.at(1), Error);
  EXPECT_NO_THROW(w.at(2));
}

TEST(Truncation, FullDepthIsADescentDirection) {
  int agree = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto toy = make_ridge_toy(seed + 500, 5);
    const double lam = 0.5;
    Problem p = ridge_problem(toy, lam);
    const double g = HyperOptimizer(p, ridge_config(5, 0.3), 0).outer_gradient()[0];
    const double h = 1e-5;
    const double fd =
        (ridge_oracle(toy, lam + h, 0.3).value - ridge_oracle(toy, lam - h, 0.3).value) / (2 * h);
    agree += g * fd > 0;
  }
  EXPECT_GE(agree, 95);
}

TEST(RegularizerTrace, ValueIsRootOfTotal) {
  RegularizerTrace tr;
  for (double d : {0.5, 0.25, 2.0}) tr.add(d);
  EXPECT_NEAR(tr.value(), std::sqrt(2.75), 1e-12);
  EXPECT_THROW(tr.add(-1.0), NonFiniteError);
}

TEST(Config, ValidationErrorsNameTheField) {
  HyperOptConfig c;
  c.K = c.T + 1;
  try {
    c.validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "hyperopt.K");
  }
  auto toy = make_ridge_toy(1, 3);
  Problem p = ridge_problem(toy, 0.0);
  p.inner.kind = InnerKind::kAdam;
  EXPECT_THROW(HyperOptimizer(p, ridge_config(3, 0.1), 0), ConfigError);
}

TEST(History, CsvSchema) {
  auto toy = make_ridge_toy(1, 2);
  Problem p = ridge_problem(toy, 0.0);
  p.test = toy.val;
  HyperOptConfig c = ridge_config(2, 0.1);
  c.outer_steps = 3;
  auto r = optimize_eq5_alg1(p, c, 42);
  std::ostringstream os;
  write_history_csv(os, r.history);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line,
            "outer_step,seed,objective_kind,zeta,K,C,val_loss,val_acc,test_loss,test_acc,Y,"
            "sqrt_Y,gen_error_estimate");
  int rows = 0;
  while (std::getline(is, line)) {
    ++rows;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 12);
    EXPECT_EQ(line.substr(0, 5), std::to_string(rows - 1) + ",42,");
  }
  EXPECT_EQ(rows, 3);
  for (const auto& h : r.history) {
    EXPECT_NEAR(h.sqrt_Y, std::sqrt(h.Y), 1e-12);
    EXPECT_NEAR(h.gen_error_estimate, h.test_loss - h.val_loss, 1e-15);
  }
}

}  // namespace
}  // namespace pbho
