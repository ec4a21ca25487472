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

// Synthetic data: the Freedman feature-selection designs and a Gaussian
// class mixture used as a desk-scale classification substitute.

#ifndef PBHO_MODELS_GENERATORS_HPP_
#define PBHO_MODELS_GENERATORS_HPP_

#include <cmath>
#include <string>
#include <vector>

#include "pbho/errors.hpp"
#include "pbho/models/dataset.hpp"
#include "pbho/rng.hpp"

namespace pbho {

enum class FreedmanVersion { kNull, kSignal };

struct Splits {
  Dataset train;
  Dataset val;
  Dataset test;
};

namespace detail {

// n rows of the Freedman design drawn from `rng`.
inline Dataset freedman_rows(FreedmanVersion v, std::size_t n, std::size_t d, Rng& rng) {
  Normal normal;
  ad::Tensor X = ad::Tensor::zeros({n, d});
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) X.data[i * d + j] = normal(rng);
    if (v == FreedmanVersion::kNull) {
      y[i] = normal(rng);
    } else {
      // y = (x1 + x2 + e) / sqrt(6), e ~ N(0, 2) (variance 2), so that
      // Var(y) = (1 + 1 + 2) / 6 = 2/3.
      y[i] = (X.data[i * d] + X.data[i * d + 1] + std::sqrt(2.0) * normal(rng)) / std::sqrt(6.0);
    }
  }
  return Dataset(std::move(X), std::move(y));
}

}  // namespace detail

// n_total examples split into equal train/validation halves, plus an
// independent test set of `n_test` examples from the same generator.
inline Splits generate_freedman(FreedmanVersion version, std::size_t n_total, std::size_t d,
                                std::uint64_t seed, std::size_t n_test = 10000) {
  if (n_total == 0 || n_total % 2 != 0) throw DomainError("freedman: n-total must be even and > 0");
  if (version == FreedmanVersion::kSignal && d < 2)
    throw DomainError("freedman: the signal version needs d >= 2");
  if (d == 0 || n_test == 0) throw DomainError("freedman: d and n_test must be positive");
  Rng rng = make_rng(seed, "freedman/sample");
  Dataset all = detail::freedman_rows(version, n_total, d, rng);
  std::vector<std::size_t> a(n_total / 2), b(n_total / 2);
  for (std::size_t i = 0; i < n_total / 2; ++i) {
    a[i] = i;
    b[i] = n_total / 2 + i;
  }
  Rng test_rng = make_rng(seed, "freedman/test");
  return {all.subset(a), all.subset(b), detail::freedman_rows(version, n_test, d, test_rng)};
}

// Isotropic Gaussian clusters with random unit-scale means.
struct GaussianMixtureSpec {
  std::size_t dim = 20;
  int classes = 10;
  double mean_scale = 1.0;  // cluster means ~ N(0, mean_scale^2 I)
  double noise_sd = 1.0;
};

class GaussianMixture {
 public:
  GaussianMixture(GaussianMixtureSpec spec, std::uint64_t seed) : spec_(spec), seed_(seed) {
    if (spec.dim == 0 || spec.classes < 2 || spec.noise_sd <= 0)
      throw DomainError("gaussian mixture: need dim > 0, classes >= 2, noise_sd > 0");
    Rng rng = make_rng(seed, "mixture/means");
    Normal normal;
    means_.resize(spec.classes * spec.dim);
    for (double& m : means_) m = spec.mean_scale * normal(rng);
  }

  Dataset sample(std::size_t n, const std::string& stream) const {
    Rng rng = make_rng(seed_, "mixture/" + stream);
    Normal normal;
    ad::Tensor X = ad::Tensor::zeros({n, spec_.dim});
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = static_cast<int>(i % spec_.classes);
      for (std::size_t j = 0; j < spec_.dim; ++j)
        X.data[i * spec_.dim + j] = means_[y[i] * spec_.dim + j] + spec_.noise_sd * normal(rng);
    }
    return Dataset(std::move(X), std::move(y), spec_.classes);
  }

 private:
  GaussianMixtureSpec spec_;
  std::uint64_t seed_;
  std::vector<double> means_;
};

}  // namespace pbho

#endif  // PBHO_MODELS_GENERATORS_HPP_
