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

#include <cmath>
#include <set>

#include "oracles/stats.hpp"
#include "pbho/samplers/privacy.hpp"
#include "pbho/samplers/samplers.hpp"

namespace pbho {
namespace {

double norm(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

TEST(Clip, Examples) {
  auto a = clip({3, 4}, 1.0);
  EXPECT_NEAR(a[0], 0.6, 1e-15);
  EXPECT_NEAR(a[1], 0.8, 1e-15);
  EXPECT_EQ(clip({0.3, 0.4}, 1.0), std::vector<double>({0.3, 0.4}));
  EXPECT_EQ(clip({3, 4}, 10.0), std::vector<double>({3, 4}));
  EXPECT_THROW(clip({1}, 0.0), DomainError);
}

TEST(Clip, IdempotentBoundedAndParallel) {
  Rng rng(4);
  Normal z;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> g(5);
    for (double& v : g) v = 3.0 * z(rng);
    const double gamma = 0.1 + std::abs(z(rng));
    auto c = clip(g, gamma);
    EXPECT_EQ(clip(c, gamma), c);
    EXPECT_LE(norm(c), gamma * (1 + 1e-12));
    // Parallel: c = a g with a > 0.
    double a = c[0] / g[0];
    EXPECT_GT(a, 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(c[i], a * g[i], 1e-12);
  }
}

TEST(SgdStep, Examples) {
  ChainState s({2.0}, Rng(0));
  sgd_step(s, {6.0}, 0.0);
  EXPECT_EQ(s.theta[0], 2.0);
  sgd_step(s, {6.0}, 0.1);
  EXPECT_NEAR(s.theta[0], 1.4, 1e-15);
  EXPECT_EQ(s.t, 2u);
  EXPECT_THROW(sgd_step(s, {NAN}, 0.1), NonFiniteError);
}

TEST(SgdStep, QuadraticContractsMonotonically) {
  const double a = 3.0, eta = 0.5;  // eta < 2/a
  ChainState s({1.7}, Rng(0));
  double prev = std::abs(s.theta[0]);
  for (int k = 0; k < 30; ++k) {
    sgd_step(s, {a * s.theta[0]}, eta);
    EXPECT_LE(std::abs(s.theta[0]), prev);
    EXPECT_NEAR(std::abs(s.theta[0]), prev * std::abs(1 - eta * a), 1e-12);
    prev = std::abs(s.theta[0]);
  }
}

TEST(SgldStep, ZeroStepIsIdentity) {
  ChainState s({0.3, -0.2}, Rng(5));
  sgld_step(s, {1.0, 2.0}, 0.0, 100);
  EXPECT_EQ(s.theta, std::vector<double>({0.3, -0.2}));
}

TEST(SgldStep, NoiseVariance) {
  ChainState s(std::vector<double>(1000, 0.0), make_rng(1, "sgld"));
  std::vector<double> zs;
  for (int k = 0; k < 100; ++k) {
    auto z = sgld_step(s, std::vector<double>(1000, 0.0), 0.1, 100);
    zs.insert(zs.end(), z.begin(), z.end());
  }
  double var = 0;
  for (double z : zs) var += z * z;
  var /= zs.size();
  EXPECT_NEAR(var, 0.002, 0.002 * 0.05);
  EXPECT_LT(std::abs(testing::chi2_variance_z(zs, 0.002)), 2.576);
  // Temperature override: variance 2 eta / tau.
  std::vector<double> zt;
  for (int k = 0; k < 100; ++k) {
    auto z = sgld_step(s, std::vector<double>(1000, 0.0), 0.1, 100, 10.0);
    zt.insert(zt.end(), z.begin(), z.end());
  }
  EXPECT_LT(std::abs(testing::chi2_variance_z(zt, 0.02)), 2.576);
}

TEST(SgldStep, SameSeedSameTrajectory) {
  ChainState a({1.0}, make_rng(3, "c")), b({1.0}, make_rng(3, "c"));
  for (int k = 0; k < 50; ++k) {
    sgld_step(a, {a.theta[0]}, 0.05, 10);
    sgld_step(b, {b.theta[0]}, 0.05, 10);
  }
  EXPECT_EQ(a.theta, b.theta);
}

TEST(SgldStep, StationaryVarianceMatchesGibbsPosterior) {
  // R = a theta^2 / 2; Gibbs posterior exp(-tau R) has variance 1 / (tau a).
  const double a = 2.0, tau = 50.0, eta = 1e-3;
  ChainState s({0.0}, make_rng(8, "ld"));
  double sum2 = 0;
  std::size_t count = 0;
  for (int k = 0; k < 600000; ++k) {
    sgld_step(s, {a * s.theta[0]}, eta, tau);
    if (k >= 20000) {
      sum2 += s.theta[0] * s.theta[0];
      ++count;
    }
  }
  // Discretization shifts the stationary variance by a factor 1/(1 - eta a / 2).
  EXPECT_NEAR(sum2 / count, 1.0 / (tau * a), 0.05 / (tau * a));
}

TEST(Adam, FirstStepMovesByLearningRate) {
  std::vector<double> th{1.0, -1.0};
  AdamState st;
  adam_step(th, st, {0.5, -2.0}, {});
  EXPECT_NEAR(th[0], 1.0 - 1e-4, 1e-10);
  EXPECT_NEAR(th[1], -1.0 + 1e-4, 1e-10);
}

TEST(Privacy, MaxStepSizeExample) {
  PrivacyBudget b{0.5, 0.01, 1, 10, 100};
  const double eta = max_dp_step_size(b, 1.0);
  EXPECT_NEAR(eta, 0.05178, 1e-5);
  EXPECT_NEAR(eta, testing::gaussian_mechanism_eta_max(10, 0.5, 100, 1, 0.01), 1e-12);
  EXPECT_NEAR(max_dp_step_size(b, 2.0), eta / 4, 1e-15);
  PrivacyBudget b2 = b;
  b2.h = 20;
  EXPECT_NEAR(max_dp_step_size(b2, 1.0), 4 * eta, 1e-15);
  EXPECT_THROW(max_dp_step_size(b, 0.0), DomainError);
  PrivacyBudget bad = b;
  bad.delta = 0.6;
  EXPECT_THROW(max_dp_step_size(bad, 1.0), DomainError);
  bad = b;
  bad.eps = 0.7;
  EXPECT_THROW(max_dp_step_size(bad, 1.0), DomainError);
}

TEST(Privacy, Accounting) {
  PrivacyBudget b{0.1, 0.01, 1, 1, 10};
  auto c1 = account_privacy(b, 1);
  EXPECT_EQ(c1.eps, 0.1);
  EXPECT_EQ(c1.delta, 0.01);
  auto c3 = account_privacy(b, 3);
  EXPECT_NEAR(c3.eps, 0.3, 1e-15);
  EXPECT_NEAR(c3.delta, 0.03, 1e-15);
  auto p = compose_parallel({{0.1, 0.01}, {0.2, 0.005}});
  EXPECT_EQ(p.eps, 0.2);
  EXPECT_EQ(p.delta, 0.01);
}

TEST(Privacy, FrontierPointsAreTight) {
  const double eta = 0.01;
  auto pts = privacy_frontier(eta, 10, 100, 1.0, {1e-6, 1e-4, 1e-3, 1e-2, 0.1});
  ASSERT_FALSE(pts.empty());
  for (const auto& p : pts) {
    PrivacyBudget b{p.eps, p.delta, 1, 10, 100};
    EXPECT_NEAR(max_dp_step_size(b, 1.0), eta, 1e-12);
  }
}

struct DpFixture : ::testing::Test {
  Model model{ModelKind::kLinearRegression, {3}};
  Dataset S;
  LossSpec loss;
  void SetUp() override {
    Rng rng(2);
    Normal z;
    ad::Tensor X = ad::Tensor::zeros({100, 3});
    for (double& v : X.data) v = z(rng);
    std::vector<double> y(100);
    for (double& v : y) v = z(rng);
    S = Dataset(X, y);
  }
  PrivacyBudget budget() const { return {0.5, 0.01, 1, 10, 100}; }
};

TEST_F(DpFixture, RejectsStepAboveCertificate) {
  const double eta_max = max_dp_step_size(budget(), 1.0);
  EXPECT_THROW(dp_sgld_run(model, S, loss, nullptr, 5, StepSchedule::constant(eta_max * 1.001),
                           {}, budget(), 1.0, 1),
               PrivacyViolation);
  EXPECT_NO_THROW(dp_sgld_run(model, S, loss, nullptr, 5, StepSchedule::constant(eta_max), {},
                              budget(), 1.0, 1));
}

TEST_F(DpFixture, EnforcesOneEpoch) {
  const double eta = 0.01;
  EXPECT_THROW(dp_sgld_run(model, S, loss, nullptr, 11, StepSchedule::constant(eta), {},
                           budget(), 1.0, 1),
               PrivacyViolation);
  DpSgldOptions o;
  o.unsafe_multi_epoch = true;
  auto r = dp_sgld_run(model, S, loss, nullptr, 11, StepSchedule::constant(eta), {}, budget(),
                       1.0, 1, o);
  EXPECT_FALSE(r.certificate_valid);
}

TEST_F(DpFixture, ZeroStepsReturnsInitDraw) {
  InitDistribution init{InitDistribution::Kind::kGaussian, 0.5, 0.0};
  auto r = dp_sgld_run(model, S, loss, nullptr, 0, StepSchedule::constant(0.01), init, budget(),
                       1.0, 9);
  Rng rng = make_rng(9, "dp_sgld/init");
  EXPECT_EQ(r.theta, sample_init(model, init, rng).values());
}

TEST_F(DpFixture, MinibatchesArePairwiseDisjoint) {
  auto r = dp_sgld_run(model, S, loss, nullptr, 10, StepSchedule::constant(0.01), {}, budget(),
                       1.0, 4);
  std::set<std::size_t> seen;
  for (const auto& b : r.batches)
    for (auto i : b) EXPECT_TRUE(seen.insert(i).second);
  EXPECT_EQ(seen.size(), 100u);
}

TEST_F(DpFixture, InjectedNoiseHasVarianceTwoEtaOverS) {
  // Large model so one run gives many noise draws.
  Model big(ModelKind::kLinearRegression, {2000});
  Rng rng(3);
  Normal z;
  ad::Tensor X = ad::Tensor::zeros({100, 2000});
  for (double& v : X.data) v = z(rng);
  Dataset Sb(X, std::vector<double>(100, 0.0));
  const double eta = 0.05;
  auto r = dp_sgld_run(big, Sb, loss, nullptr, 10, StepSchedule::constant(eta), {}, budget(), 1.0,
                       5);
  std::vector<double> all;
  for (const auto& zt : r.noise) all.insert(all.end(), zt.begin(), zt.end());
  EXPECT_LT(std::abs(testing::chi2_variance_z(all, 2 * eta / 100)), 2.576);
}

TEST_F(DpFixture, ApproachesMinibatchSgdWithoutNoise) {
  DpSgldOptions o;
  o.noise_scale = 0.0;
  // gamma = 50 never binds here; eta sits at the certificate for that gamma.
  const double gamma = 50.0, h = 10;
  const double eta = max_dp_step_size(budget(), gamma);
  auto r = dp_sgld_run(model, S, loss, nullptr, 10, StepSchedule::constant(eta), {}, budget(),
                       gamma, 6, o);
  // Plain minibatch SGD with the same batches, step eta / h.
  std::vector<double> th = r.trajectory[0];
  for (const auto& J : r.batches) {
    auto g = grad_risk(model, ParamVector(th), S.subset(J), nullptr, loss, true);
    ASSERT_LT(norm(g), gamma);
    for (std::size_t i = 0; i < th.size(); ++i) th[i] -= eta / h * g[i];
  }
  for (std::size_t i = 0; i < th.size(); ++i) EXPECT_NEAR(r.theta[i], th[i], 1e-14);
}

}  // namespace
}  // namespace pbho
