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

#ifndef PBHO_DIFFCORE_DIFFCORE_HPP_
#define PBHO_DIFFCORE_DIFFCORE_HPP_

#include <vector>

#include "pbho/diffcore/tape.hpp"
#include "pbho/diffcore/tensor.hpp"

namespace pbho::ad {

// Records `expr(tape, vars)` on `tape`, where `vars` are fresh inputs holding
// `inputs`. Convenience for one-shot evaluations.
template <typename Expr>
Var forward(Tape& tape, Expr&& expr, const std::vector<Tensor>& inputs,
            bool requires_grad = true) {
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (const Tensor& t : inputs) vars.push_back(tape.input(t, requires_grad));
  return expr(tape, vars);
}

// Value and gradient of a scalar function of one array.
template <typename F>
std::pair<double, Tensor> value_and_grad(F&& f, const Tensor& x) {
  Tape tape;
  Var v = tape.input(x);
  Var out = f(tape, v);
  double val = out.item();
  return {val, tape.grad(out, {v})[0]};
}

}  // namespace pbho::ad

#endif  // PBHO_DIFFCORE_DIFFCORE_HPP_
