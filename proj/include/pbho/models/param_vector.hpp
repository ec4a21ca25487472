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

#ifndef PBHO_MODELS_PARAM_VECTOR_HPP_
#define PBHO_MODELS_PARAM_VECTOR_HPP_

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "pbho/diffcore/tensor.hpp"
#include "pbho/errors.hpp"

namespace pbho {

struct Segment {
  std::string name;
  std::size_t offset = 0;
  ad::Shape shape;
  std::size_t size() const { return ad::numel(shape); }
};

// Named contiguous slices that partition [0, m).
class SegmentMap {
 public:
  SegmentMap() = default;
  explicit SegmentMap(std::vector<Segment> segs) : segs_(std::move(segs)) { validate(); }

  // Appends a segment directly after the last one.
  SegmentMap& add(std::string name, ad::Shape shape) {
    Segment s{std::move(name), total(), std::move(shape)};
    segs_.push_back(std::move(s));
    return *this;
  }
  std::size_t total() const { return segs_.empty() ? 0 : segs_.back().offset + segs_.back().size(); }
  const std::vector<Segment>& segments() const { return segs_; }
  const Segment& at(const std::string& name) const {
    for (const auto& s : segs_)
      if (s.name == name) return s;
    throw ShapeError("no segment named '" + name + "'");
  }

 private:
  void validate() const {
    std::size_t next = 0;
    for (const auto& s : segs_) {
      if (s.offset != next) throw ShapeError("segments must tile [0, m) contiguously");
      next += s.size();
    }
  }
  std::vector<Segment> segs_;
};

// Flat real vector with a segment map; houses theta (parameters) and lambda
// (hyperparameters).
class FlatVector {
 public:
  FlatVector() = default;
  FlatVector(std::vector<double> values, SegmentMap map)
      : values_(std::move(values)), map_(std::move(map)) {
    if (map_.segments().empty()) map_.add("all", {values_.size()});
    if (values_.empty()) throw ShapeError("parameter vectors must be non-empty");
    if (map_.total() != values_.size())
      throw ShapeError("segment map covers " + std::to_string(map_.total()) + " of " +
                       std::to_string(values_.size()) + " entries");
    check_finite();
  }
  explicit FlatVector(std::vector<double> values) : FlatVector(std::move(values), SegmentMap{}) {}

  std::size_t size() const { return values_.size(); }
  const std::vector<double>& values() const { return values_; }
  std::vector<double>& mutable_values() { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }
  const SegmentMap& segments() const { return map_; }
  ad::Tensor tensor() const { return ad::Tensor::vector(values_); }
  void assign(const std::vector<double>& v) {
    if (v.size() != values_.size()) throw ShapeError("assign: length mismatch");
    values_ = v;
    check_finite();
  }
  void check_finite() const {
    for (double v : values_)
      if (!std::isfinite(v)) throw NonFiniteError("non-finite entry in parameter vector");
  }

 private:
  std::vector<double> values_;
  SegmentMap map_;
};

using ParamVector = FlatVector;
using HyperVector = FlatVector;

}  // namespace pbho

#endif  // PBHO_MODELS_PARAM_VECTOR_HPP_
