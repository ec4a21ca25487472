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

// Parametric models, losses, empirical risk, and the per-parameter weight
// decay penalty 1/2 * sum_i exp(lambda_i) * theta_i^2.

#ifndef PBHO_MODELS_MODEL_HPP_
#define PBHO_MODELS_MODEL_HPP_

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pbho/diffcore/tape.hpp"
#include "pbho/errors.hpp"
#include "pbho/models/dataset.hpp"
#include "pbho/models/param_vector.hpp"
#include "pbho/rng.hpp"

namespace pbho {

enum class ModelKind { kLinearRegression, kLinearSoftmax, kMlp };
enum class Activation { kTanh, kRelu };
enum class BaseLoss { kSquaredError, kSoftmaxCrossEntropy };
enum class DecayMode { kNone, kPerParameter };

struct LossSpec {
  BaseLoss base = BaseLoss::kSquaredError;
  DecayMode decay = DecayMode::kNone;
  // Loss range [a, b] used only when reporting bounded-loss bounds.
  std::optional<std::pair<double, double>> range;
  // Gibbs temperature; 0 means "use |S|".
  double tau = 0.0;

  void validate() const {
    if (range && !(range->first < range->second)) throw DomainError("loss range needs a < b");
    if (tau < 0.0) throw DomainError("Gibbs temperature must be positive");
  }
  double temperature(std::size_t n) const { return tau > 0.0 ? tau : static_cast<double>(n); }
};

struct InitDistribution {
  enum class Kind { kGaussian, kPointMass };
  Kind kind = Kind::kGaussian;
  double sd = 0.01;    // Gaussian standard deviation
  double value = 0.0;  // point-mass location (every coordinate)
};

struct ModelDims {
  std::size_t input = 0;
  int classes = 0;          // softmax / mlp only
  std::size_t hidden = 32;  // mlp only
  Activation activation = Activation::kTanh;
};

class Model {
 public:
  Model(ModelKind kind, ModelDims dims) : kind_(kind), dims_(dims) {
    if (dims.input == 0) throw DomainError("model input dimension must be positive");
    switch (kind) {
      case ModelKind::kLinearRegression:
        // No intercept: Freedman inputs and targets are zero-mean.
        segs_.add("weights", {dims.input});
        break;
      case ModelKind::kLinearSoftmax:
        if (dims.classes < 2) throw DomainError("softmax models need >= 2 classes");
        segs_.add("weights", {dims.input, std::size_t(dims.classes)});
        segs_.add("bias", {std::size_t(dims.classes)});
        break;
      case ModelKind::kMlp:
        if (dims.classes < 2 || dims.hidden == 0)
          throw DomainError("mlp needs >= 2 classes and a positive hidden width");
        segs_.add("w1", {dims.input, dims.hidden});
        segs_.add("b1", {dims.hidden});
        segs_.add("w2", {dims.hidden, std::size_t(dims.classes)});
        segs_.add("b2", {std::size_t(dims.classes)});
        break;
    }
  }

  ModelKind kind() const { return kind_; }
  const ModelDims& dims() const { return dims_; }
  std::size_t num_params() const { return segs_.total(); }
  const SegmentMap& segments() const { return segs_; }
  BaseLoss natural_loss() const {
    return kind_ == ModelKind::kLinearRegression ? BaseLoss::kSquaredError
                                                 : BaseLoss::kSoftmaxCrossEntropy;
  }

  // Predictions [n] (regression) or logits [n, C].
  ad::Var output(ad::Tape& t, const ad::Var& theta, const ad::Var& X) const {
    using namespace ad;
    const std::size_t n = X.shape()[0];
    if (X.shape()[1] != dims_.input)
      throw ShapeError("model expects " + std::to_string(dims_.input) + " input features, got " +
                       std::to_string(X.shape()[1]));
    auto seg = [&](const char* name) {
      const Segment& s = segs_.at(name);
      return slice(theta, s.offset, s.shape);
    };
    auto affine = [&](const Var& in, const char* w, const char* b) {
      const std::size_t c = segs_.at(b).size();
      Var ones = t.constant(Tensor::filled({n, 1}, 1.0));
      return add(matmul(in, seg(w)), matmul(ones, reshape(seg(b), {1, c})));
    };
    switch (kind_) {
      case ModelKind::kLinearRegression:
        return matvec(X, theta);
      case ModelKind::kLinearSoftmax:
        return affine(X, "weights", "bias");
      case ModelKind::kMlp: {
        Var h = affine(X, "w1", "b1");
        h = dims_.activation == Activation::kTanh ? tanh(h) : relu(h);
        return affine(h, "w2", "b2");
      }
    }
    throw Error("unreachable");
  }

  // Mean base loss over S.
  ad::Var base_risk(ad::Tape& t, const ad::Var& theta, const Dataset& S, BaseLoss loss) const {
    using namespace ad;
    if (theta.shape() != Shape{num_params()})
      throw ShapeError("theta has shape " + shape_str(theta.shape()) + ", model needs [" +
                       std::to_string(num_params()) + "]");
    Var out = output(t, theta, t.constant(S.X));
    if (loss == BaseLoss::kSquaredError) {
      if (kind_ != ModelKind::kLinearRegression)
        throw DomainError("squared error is only defined for regression outputs");
      Var r = sub(t.constant(Tensor::vector(S.y)), out);
      return mean(mul(r, r));
    }
    if (!S.is_classification()) throw DomainError("cross-entropy needs class labels");
    return softmax_cross_entropy(out, S.labels);
  }

 private:
  ModelKind kind_;
  ModelDims dims_;
  SegmentMap segs_;
};

inline ParamVector sample_init(const Model& model, const InitDistribution& init, Rng& rng) {
  std::vector<double> v(model.num_params(), init.value);
  if (init.kind == InitDistribution::Kind::kGaussian) {
    if (init.sd < 0) throw DomainError("init sd must be >= 0");
    Normal normal;
    for (double& x : v) x = init.sd * normal(rng);
  }
  return ParamVector(std::move(v), model.segments());
}

inline std::pair<Model, ParamVector> make_model(ModelKind kind, ModelDims dims,
                                                const InitDistribution& init, std::uint64_t seed) {
  Model m(kind, dims);
  Rng rng = make_rng(seed, "model/init");
  ParamVector theta = sample_init(m, init, rng);
  return {std::move(m), std::move(theta)};
}

// 1/2 * sum exp(lambda) * theta^2.
inline ad::Var decay_penalty(const ad::Var& theta, const ad::Var& lambda) {
  if (theta.shape() != lambda.shape())
    throw ShapeError("per-parameter decay needs lambda of length m");
  return ad::scale(ad::dot(ad::exp(lambda), ad::mul(theta, theta)), 0.5);
}

// Empirical risk on a tape. `lambda` may be default-constructed when the loss
// has no decay term or include_decay is false.
inline ad::Var risk_on_tape(ad::Tape& t, const Model& model, const ad::Var& theta,
                            const Dataset& S, const ad::Var& lambda, const LossSpec& spec,
                            bool include_decay) {
  ad::Var r = model.base_risk(t, theta, S, spec.base);
  if (include_decay && spec.decay == DecayMode::kPerParameter) {
    if (!lambda.valid()) throw DomainError("per-parameter decay requires lambda");
    r = ad::add(r, decay_penalty(theta, lambda));
  }
  return r;
}

inline double risk_eval(const Model& model, const ParamVector& theta, const Dataset& S,
                        const HyperVector* lambda, const LossSpec& spec, bool include_decay) {
  ad::Tape t;
  ad::Var th = t.constant(theta.tensor());
  ad::Var lam = lambda ? t.constant(lambda->tensor()) : ad::Var{};
  return risk_on_tape(t, model, th, S, lam, spec, include_decay).item();
}

// Loss of a single example (x, y) = row `i` of S.
inline double loss_eval(const Model& model, const ParamVector& theta, const Dataset& S,
                        std::size_t i, const HyperVector* lambda, const LossSpec& spec,
                        bool include_decay) {
  return risk_eval(model, theta, S.subset({i}), lambda, spec, include_decay);
}

inline std::vector<double> grad_risk(const Model& model, const ParamVector& theta,
                                     const Dataset& S, const HyperVector* lambda,
                                     const LossSpec& spec, bool include_decay) {
  ad::Tape t;
  ad::Var th = t.input(theta.tensor());
  ad::Var lam = lambda ? t.constant(lambda->tensor()) : ad::Var{};
  ad::Var r = risk_on_tape(t, model, th, S, lam, spec, include_decay);
  std::vector<double> g = t.grad(r, {th})[0].data;
  for (double v : g)
    if (!std::isfinite(v)) throw NonFiniteError("non-finite risk gradient");
  return g;
}

// Top-1 accuracy; ties go to the lowest class index.
inline double accuracy(const Model& model, const ParamVector& theta, const Dataset& S) {
  if (!S.is_classification()) throw DomainError("accuracy needs class labels");
  ad::Tape t;
  ad::Tensor logits = model.output(t, t.constant(theta.tensor()), t.constant(S.X)).value();
  const std::size_t n = S.size(), c = logits.shape[1];
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j)
      if (logits.data[i * c + j] > logits.data[i * c + best]) best = j;
    hits += static_cast<int>(best) == (*S.labels)[i];
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

}  // namespace pbho

#endif  // PBHO_MODELS_MODEL_HPP_
