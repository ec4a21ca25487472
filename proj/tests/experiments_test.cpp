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

#include <Eigen/QR>
#include <cmath>
#include <stdexcept>

#include "pbho/experiments/freedman.hpp"
#include "pbho/experiments/stats.hpp"
#include "pbho/experiments/weight_decay.hpp"

namespace pbho {
namespace {

Dataset random_regression(std::size_t n, std::size_t d, std::uint64_t seed) {
  Rng rng = make_rng(seed, "regression");
  Normal normal;
  ad::Tensor X = ad::Tensor::zeros({n, d});
  for (double& x : X.data) x = normal(rng);
  std::vector<double> y(n);
  for (double& v : y) v = normal(rng);
  return Dataset(std::move(X), std::move(y));
}

TEST(Ols, FeatureEqualToTarget) {
  Dataset S = random_regression(20, 3, 1);
  for (std::size_t i = 0; i < S.size(); ++i) S.X.data[i * 3 + 1] = S.y[i];
  auto th = ols_fit(S, {1});
  ASSERT_EQ(th.size(), 1u);
  EXPECT_NEAR(th[0], 1.0, 1e-12);
  EXPECT_NEAR(linear_mse(S, {1}, th), 0.0, 1e-20);
}

TEST(Ols, EmptyFeatureSet) {
  Dataset S = random_regression(15, 2, 2);
  EXPECT_TRUE(ols_fit(S, {}).empty());
  double yy = 0.0;
  for (double v : S.y) yy += v * v;
  EXPECT_NEAR(linear_mse(S, {}, {}), yy / 15.0, 1e-15);
}

TEST(Ols, MatchesQrSolveAndSatisfiesNormalEquations) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Dataset S = random_regression(10, 5, seed);
    const Features f = {4, 0, 2};
    auto th = ols_fit(S, f);
    Eigen::MatrixXd A(10, 3);
    Eigen::VectorXd y(10);
    for (int i = 0; i < 10; ++i) {
      for (int k = 0; k < 3; ++k) A(i, k) = S.X.data[i * 5 + f[k]];
      y[i] = S.y[i];
    }
    Eigen::VectorXd want = A.householderQr().solve(y);
    Eigen::VectorXd got = Eigen::Map<Eigen::VectorXd>(th.data(), 3);
    EXPECT_LT((got - want).cwiseAbs().maxCoeff(), 1e-10) << seed;
    EXPECT_LT((A.transpose() * (A * got - y)).cwiseAbs().maxCoeff(), 1e-8) << seed;
  }
}

TEST(Ols, RankDeficiencyThrows) {
  Dataset S = random_regression(10, 3, 4);
  for (std::size_t i = 0; i < 10; ++i) S.X.data[i * 3 + 2] = 2.0 * S.X.data[i * 3];
  EXPECT_THROW(ols_fit(S, {0, 2}), DomainError);
  EXPECT_THROW(ols_fit(S, {0, 0}), DomainError);
}

TEST(Eq5Estimate, IdenticalSetsHaveNoRegularizer) {
  Dataset S = random_regression(40, 4, 5);
  LdConfig ld;
  Rng rng = make_rng(5, "noise");
  auto e = eq5_objective_estimate(S, S, {0, 1, 3}, 1.0, ld, rng);
  EXPECT_LT(e.Y, 1e-3);
  EXPECT_NEAR(e.value, e.val_risk + std::sqrt(e.Y), 1e-12);
}

TEST(Eq5Estimate, CollapsedChainsApproachValidationErrorAtOls) {
  Dataset ST = random_regression(60, 3, 6), SV = random_regression(60, 3, 7);
  LdConfig ld;
  ld.steps = 3000;
  ld.chains = 5;
  ld.tau_grid = {1e12};
  Rng rng = make_rng(6, "noise");
  const Features f = {0, 2};
  auto e = eq5_objective_estimate(ST, SV, f, 0.0, ld, rng);
  EXPECT_NEAR(e.value, linear_mse(SV, f, ols_fit(ST, f)), 1e-6);
}

TEST(Eq5Estimate, EmptyModelOnNullDataIsNearOne) {
  double acc = 0.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    Splits d = generate_freedman(FreedmanVersion::kNull, 500, 5, s, 10);
    Rng rng = make_rng(s, "noise");
    acc += eq5_objective_estimate(d.train, d.val, {}, 0.158, LdConfig{}, rng).value;
  }
  EXPECT_NEAR(acc / 20.0, 1.0, 0.03);
}

TEST(Eq5Estimate, DivergenceIsReported) {
  Dataset S = random_regression(30, 2, 8);
  for (double& x : S.X.data) x *= 100.0;
  LdConfig ld;
  Rng rng = make_rng(8, "noise");
  EXPECT_THROW(eq5_objective_estimate(S, random_regression(30, 2, 9), {0}, 0.1, ld, rng),
               NonFiniteError);
}

class SelectionPaths : public ::testing::TestWithParam<SelectionObjective> {};

TEST_P(SelectionPaths, NestedStrictlyGrowingAndReproducible) {
  Splits d = generate_freedman(FreedmanVersion::kSignal, 200, 30, 3, 500);
  SelectionConfig cfg;
  cfg.objective = GetParam();
  cfg.max_p = 6;
  cfg.zeta = 0.158;
  cfg.ld.chains = 10;
  auto a = forward_select(d.train, d.val, &d.test, cfg, 3);
  auto b = forward_select(d.train, d.val, &d.test, cfg, 3);
  ASSERT_EQ(a.entries.size(), 7u);
  for (std::size_t i = 0; i < a.entries.size(); ++i) {
    const auto& e = a.entries[i];
    EXPECT_EQ(e.p, i);
    EXPECT_EQ(e.features.size(), i);
    if (i > 0) {
      EXPECT_TRUE(std::equal(a.entries[i - 1].features.begin(), a.entries[i - 1].features.end(),
                             e.features.begin()));
    }
    EXPECT_EQ(e.objective, b.entries[i].objective);
    EXPECT_EQ(e.features, b.entries[i].features);
    EXPECT_NEAR(e.aic, 2.0 * i + 100.0 * e.val_mse, 1e-9);
    EXPECT_TRUE(std::isfinite(e.test_mse));
  }
  EXPECT_EQ(a.argmin, b.argmin);
}

INSTANTIATE_TEST_SUITE_P(AllObjectives, SelectionPaths,
                         ::testing::Values(SelectionObjective::kEq1, SelectionObjective::kEq5,
                                           SelectionObjective::kAic));

TEST(ForwardSelect, AicPenalizesSmallImprovements) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    Splits d = generate_freedman(FreedmanVersion::kNull, 200, 40, s, 100);
    SelectionConfig cfg;
    cfg.objective = SelectionObjective::kAic;
    cfg.max_p = 8;
    auto path = forward_select(d.train, d.val, &d.test, cfg, s);
    for (std::size_t i = 1; i < path.entries.size(); ++i) {
      const double gain = 100.0 * (path.entries[i - 1].val_mse - path.entries[i].val_mse);
      if (gain < 2.0) EXPECT_GT(path.entries[i].aic, path.entries[i - 1].aic);
    }
  }
}

TEST(ForwardSelect, Eq1ValidationR2TracksValidationError) {
  Splits d = generate_freedman(FreedmanVersion::kNull, 300, 60, 4, 100);
  SelectionConfig cfg;
  cfg.max_p = 10;
  auto path = forward_select(d.train, d.val, &d.test, cfg, 4);
  for (std::size_t i = 1; i < path.entries.size(); ++i)
    if (path.entries[i].val_mse < path.entries[i - 1].val_mse)
      EXPECT_GE(path.entries[i].val_r2, path.entries[i - 1].val_r2);
}

TEST(ForwardSelect, MaxPBeyondFeatureCountIsRejected) {
  Splits d = generate_freedman(FreedmanVersion::kNull, 20, 3, 0, 10);
  SelectionConfig cfg;
  cfg.max_p = 4;
  EXPECT_THROW(forward_select(d.train, d.val, &d.test, cfg, 0), ConfigError);
}

TEST(Freedman, ZetaReadings) {
  FreedmanConfig cfg;
  EXPECT_DOUBLE_EQ(cfg.effective_zeta(), 0.025);
  cfg.zeta_reading = ZetaReading::kSqrtEtaOverFour;
  EXPECT_NEAR(cfg.effective_zeta(), 0.15811388300841897, 1e-16);
  cfg.ld.eta = 0.4;
  EXPECT_NEAR(cfg.effective_zeta(), std::sqrt(0.1), 1e-16);
  cfg.zeta = 0.5;
  EXPECT_EQ(cfg.effective_zeta(), 0.5);
}

TEST(Freedman, SignalSeedRecoversTruePredictors) {
  FreedmanConfig cfg;
  cfg.version = FreedmanVersion::kSignal;
  auto r = run_freedman(cfg, 1);
  Features best = r.path(SelectionObjective::kEq5)->best().features;
  std::sort(best.begin(), best.end());
  ASSERT_GE(best.size(), 2u);
  EXPECT_EQ(best[0], 0u);
  EXPECT_EQ(best[1], 1u);
  EXPECT_LT(best.size(), r.path(SelectionObjective::kEq1)->best().p);
}

TEST(Freedman, NullSeedShowsParadox) {
  FreedmanConfig cfg;
  cfg.objectives = {SelectionObjective::kEq1};
  auto r = run_freedman(cfg, 0);
  const auto& e = r.paths[0].entries;
  EXPECT_LT(e[10].objective, e[0].objective);
  EXPECT_GT(e[10].test_mse, e[0].test_mse);
  EXPECT_LT(r.test_spearman[0], 0.0);
}

TEST(Stats, PearsonAndSpearman) {
  Rng rng = make_rng(1, "stats");
  Normal normal;
  std::vector<double> x, y;
  for (int i = 0; i < 200; ++i) {
    x.push_back(normal(rng));
    y.push_back(2.0 * x.back() + 0.01 * normal(rng));
  }
  EXPECT_GT(pearson(x, y), 0.999);
  EXPECT_NEAR(spearman({1, 2, 3, 4}, {10, 20, 30, 40}), 1.0, 1e-15);
  EXPECT_NEAR(spearman({1, 2, 3, 4}, {4, 3, 2, 1}), -1.0, 1e-15);
  // Ties: ranks (1.5, 1.5, 3) vs (1, 2, 3); by hand r = 0.8660254.
  EXPECT_NEAR(spearman({5, 5, 7}, {1, 2, 3}), std::sqrt(3.0) / 2.0, 1e-12);
  auto c = correlate({1, 1, 1}, {1, 2, 3});
  EXPECT_TRUE(c.degenerate);
  EXPECT_TRUE(std::isnan(c.pearson));
}

TEST(Stats, ParallelMapKeepsOrderAndPropagatesErrors) {
  auto v = parallel_map<int>(20, 4, [](std::size_t i) { return static_cast<int>(i * i); });
  for (int i = 0; i < 20; ++i) EXPECT_EQ(v[i], i * i);
  EXPECT_THROW(parallel_map<int>(10, 3,
                                 [](std::size_t i) -> int {
                                   if (i == 7) throw DomainError("boom");
                                   return 0;
                                 }),
               DomainError);
}

WeightDecayRun fake_run(std::vector<std::tuple<double, double, double, double>> rows) {
  WeightDecayRun r;
  std::size_t k = 0;
  for (auto [acc, norm, test, val] : rows) {
    HistoryRow h;
    h.outer_step = k++;
    h.val_acc = acc;
    h.weight_norm = norm;
    h.test_loss = test;
    h.val_loss = val;
    r.records.push_back(h);
  }
  return r;
}

TEST(MinWeightNorm, Selection) {
  auto one = fake_run({{0.5, 3.0, 0, 0}});
  EXPECT_EQ(min_weight_norm_baseline(one).outer_step, 0u);
  auto two = fake_run({{0.9, 3.0, 0, 0}, {0.9, 2.0, 0, 0}, {0.8, 1.0, 0, 0}});
  EXPECT_EQ(min_weight_norm_baseline(two).outer_step, 1u);
  auto tie = fake_run({{0.9, 2.0, 0, 0}, {0.9, 2.0, 0, 0}});
  EXPECT_EQ(min_weight_norm_baseline(tie).outer_step, 0u);
  EXPECT_THROW(min_weight_norm_baseline(WeightDecayRun{}), DomainError);
}

TEST(GeneralizationError, LastFiveSteps) {
  std::vector<std::tuple<double, double, double, double>> rows;
  for (int i = 0; i < 8; ++i) rows.emplace_back(0.0, 0.0, 1.0 + i, 0.5);
  // Steps 3..7: test 4..8, mean 6; minus 0.5.
  EXPECT_NEAR(generalization_error_estimate(fake_run(rows)), 5.5, 1e-15);
  EXPECT_THROW(regularizer_generalization_correlation({fake_run(rows), fake_run(rows)}),
               DomainError);
  auto deg = regularizer_generalization_correlation({fake_run(rows), fake_run(rows), fake_run(rows)});
  EXPECT_TRUE(deg.stats.degenerate);
}

WeightDecayConfig tiny_mixture() {
  WeightDecayConfig c;
  c.dataset = WdDataset::kMixture;
  c.standardize = false;
  c.mixture.dim = 6;
  c.mixture.classes = 3;
  c.mixture.mean_scale = 1.0;
  c.mixture_pool = 80;
  c.mixture_test = 60;
  c.n_train = 20;
  c.n_val = 20;
  c.inner_steps = 15;
  c.outer_steps = 4;
  c.adam_lr = 1e-2;
  c.workers = 1;
  return c;
}

TEST(WeightDecay, ZeroZetaMatchesUnregularizedBitForBit) {
  WeightDecayConfig a = tiny_mixture();
  a.objective = ObjectiveKind::kEq5;
  a.zeta = 0.0;
  WeightDecayConfig b = tiny_mixture();
  b.objective = ObjectiveKind::kEq1;
  auto ra = run_weight_decay_experiment(a, {3, 4});
  auto rb = run_weight_decay_experiment(b, {3, 4});
  for (int s = 0; s < 2; ++s) {
    EXPECT_EQ(ra[s].lambda, rb[s].lambda);
    ASSERT_EQ(ra[s].records.size(), 4u);
    for (std::size_t i = 0; i < 4; ++i) {
      EXPECT_EQ(ra[s].records[i].val_loss, rb[s].records[i].val_loss);
      EXPECT_EQ(ra[s].records[i].test_acc, rb[s].records[i].test_acc);
    }
  }
}

TEST(WeightDecay, RecordsAreOrderedWithValidAccuracies) {
  WeightDecayConfig c = tiny_mixture();
  c.model = ModelKind::kMlp;
  c.hidden = 8;
  c.zeta = 0.05;
  auto runs = run_weight_decay_experiment(c, {1});
  ASSERT_EQ(runs.size(), 1u);
  const auto& r = runs[0];
  EXPECT_EQ(r.seed, 1u);
  for (std::size_t i = 0; i < r.records.size(); ++i) {
    EXPECT_EQ(r.records[i].outer_step, i);
    EXPECT_GE(r.records[i].val_acc, 0.0);
    EXPECT_LE(r.records[i].val_acc, 1.0);
    EXPECT_GE(r.records[i].test_acc, 0.0);
    EXPECT_LE(r.records[i].test_acc, 1.0);
    EXPECT_GT(r.records[i].sqrt_Y, 0.0);
  }
}

TEST(WeightDecay, MissingMnistNamesTheFile) {
  WeightDecayConfig c;
  c.mnist_dir = "/nonexistent/mnist";
  try {
    run_weight_decay_experiment(c, {0});
    FAIL() << "expected a dataset error";
  } catch (const DatasetError& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/mnist/train-images-idx3-ubyte"),
              std::string::npos);
  }
}

}  // namespace
}  // namespace pbho
