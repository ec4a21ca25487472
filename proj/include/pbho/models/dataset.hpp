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

#ifndef PBHO_MODELS_DATASET_HPP_
#define PBHO_MODELS_DATASET_HPP_

#include <algorithm>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "pbho/diffcore/tensor.hpp"
#include "pbho/errors.hpp"
#include "pbho/rng.hpp"

namespace pbho {

// Inputs (rows = examples) and labels. Regression targets live in `y`;
// classification labels in `labels` (and mirrored into `y` as doubles).
struct Dataset {
  ad::Tensor X;
  std::vector<double> y;
  std::shared_ptr<const std::vector<int>> labels;
  int num_classes = 0;

  Dataset() = default;
  Dataset(ad::Tensor inputs, std::vector<double> targets) : X(std::move(inputs)), y(std::move(targets)) {
    validate();
  }
  Dataset(ad::Tensor inputs, std::vector<int> cls, int classes)
      : X(std::move(inputs)), num_classes(classes) {
    y.assign(cls.begin(), cls.end());
    labels = std::make_shared<const std::vector<int>>(std::move(cls));
    validate();
  }

  std::size_t size() const { return y.size(); }
  std::size_t dim() const { return X.shape.size() == 2 ? X.shape[1] : 0; }
  bool is_classification() const { return labels != nullptr; }

  void validate() const {
    if (X.rank() != 2) throw ShapeError("dataset inputs must be a matrix");
    if (X.shape[0] != y.size())
      throw ShapeError("dataset has " + std::to_string(X.shape[0]) + " rows but " +
                       std::to_string(y.size()) + " labels");
    if (y.empty()) throw ShapeError("dataset must contain at least one example");
    if (labels) {
      for (int l : *labels)
        if (l < 0 || l >= num_classes) throw ShapeError("class label out of range");
    }
  }

  Dataset subset(const std::vector<std::size_t>& idx) const {
    const std::size_t d = dim();
    ad::Tensor Xs = ad::Tensor::zeros({idx.size(), d});
    for (std::size_t r = 0; r < idx.size(); ++r) {
      if (idx[r] >= size()) throw ShapeError("subset index out of range");
      std::copy_n(X.data.begin() + idx[r] * d, d, Xs.data.begin() + r * d);
    }
    if (labels) {
      std::vector<int> l(idx.size());
      for (std::size_t r = 0; r < idx.size(); ++r) l[r] = (*labels)[idx[r]];
      return Dataset(std::move(Xs), std::move(l), num_classes);
    }
    std::vector<double> ys(idx.size());
    for (std::size_t r = 0; r < idx.size(); ++r) ys[r] = y[idx[r]];
    return Dataset(std::move(Xs), std::move(ys));
  }

  Dataset columns(const std::vector<std::size_t>& cols) const {
    const std::size_t n = size(), d = dim();
    ad::Tensor Xc = ad::Tensor::zeros({n, cols.size()});
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t j = 0; j < cols.size(); ++j) {
        if (cols[j] >= d) throw ShapeError("column index out of range");
        Xc.data[r * cols.size() + j] = X.data[r * d + cols[j]];
      }
    Dataset out = *this;
    out.X = std::move(Xc);
    return out;
  }
};

inline Dataset concat(const Dataset& a, const Dataset& b) {
  if (a.dim() != b.dim() || a.is_classification() != b.is_classification())
    throw ShapeError("concat: incompatible datasets");
  ad::Tensor X = ad::Tensor::zeros({a.size() + b.size(), a.dim()});
  std::copy(a.X.data.begin(), a.X.data.end(), X.data.begin());
  std::copy(b.X.data.begin(), b.X.data.end(), X.data.begin() + a.X.size());
  if (a.is_classification()) {
    std::vector<int> l(*a.labels);
    l.insert(l.end(), b.labels->begin(), b.labels->end());
    return Dataset(std::move(X), std::move(l), std::max(a.num_classes, b.num_classes));
  }
  std::vector<double> y(a.y);
  y.insert(y.end(), b.y.begin(), b.y.end());
  return Dataset(std::move(X), std::move(y));
}

// Seeded minibatch index sampler. Without replacement, indices are drawn from
// a shuffled permutation and never repeat until the epoch is exhausted.
class MinibatchSampler {
 public:
  MinibatchSampler(std::size_t n, std::size_t batch, bool with_replacement, Rng rng)
      : n_(n), batch_(batch), replace_(with_replacement), rng_(std::move(rng)) {
    if (batch == 0 || batch > n) throw DomainError("batch size must be in [1, n]");
    reshuffle();
  }

  std::vector<std::size_t> next() {
    std::vector<std::size_t> out(batch_);
    if (replace_) {
      for (auto& i : out) i = std::uniform_int_distribution<std::size_t>(0, n_ - 1)(rng_);
      return out;
    }
    if (pos_ + batch_ > n_) {
      ++epochs_;
      reshuffle();
    }
    std::copy_n(perm_.begin() + pos_, batch_, out.begin());
    pos_ += batch_;
    return out;
  }
  // Completed passes over the data (without-replacement mode only).
  std::size_t epochs() const { return epochs_; }
  std::size_t remaining() const { return n_ - pos_; }

 private:
  void reshuffle() {
    perm_.resize(n_);
    std::iota(perm_.begin(), perm_.end(), std::size_t{0});
    std::shuffle(perm_.begin(), perm_.end(), rng_);
    pos_ = 0;
  }
  std::size_t n_, batch_;
  bool replace_;
  Rng rng_;
  std::vector<std::size_t> perm_;
  std::size_t pos_ = 0, epochs_ = 0;
};

}  // namespace pbho

#endif  // PBHO_MODELS_DATASET_HPP_
