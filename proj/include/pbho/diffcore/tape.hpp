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

// Reverse-mode differentiation over dense double arrays.
//
// A Tape is an append-only arena of operation records. Every backward rule is
// written in terms of the same differentiable operations, so with
// create_graph the returned gradients are ordinary nodes that can be
// differentiated again (Hessian-vector products, gradients of squared
// gradient norms, unrolled inner loops).

#ifndef PBHO_DIFFCORE_TAPE_HPP_
#define PBHO_DIFFCORE_TAPE_HPP_

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pbho/diffcore/tensor.hpp"
#include "pbho/errors.hpp"

namespace pbho::ad {

enum class Op : std::uint8_t {
  kInput,
  kConst,
  // Public primitives.
  kAdd,
  kSub,
  kScale,
  kMul,
  kExp,
  kLog,
  kTanh,
  kRelu,
  kMatVec,
  kMatMul,
  kSum,
  kMean,
  kSqNorm,
  kDot,
  kSoftmaxCE,
  // Shape glue used by backward rules and model plumbing.
  kReshape,
  kTranspose,
  kExpand,
  kSlice,
  kPad,
  kSoftmaxRows,
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::kInput: return "input";
    case Op::kConst: return "const";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kScale: return "scale";
    case Op::kMul: return "mul";
    case Op::kExp: return "exp";
    case Op::kLog: return "log";
    case Op::kTanh: return "tanh";
    case Op::kRelu: return "relu";
    case Op::kMatVec: return "matvec";
    case Op::kMatMul: return "matmul";
    case Op::kSum: return "sum";
    case Op::kMean: return "mean";
    case Op::kSqNorm: return "sq_norm";
    case Op::kDot: return "dot";
    case Op::kSoftmaxCE: return "softmax_cross_entropy";
    case Op::kReshape: return "reshape";
    case Op::kTranspose: return "transpose";
    case Op::kExpand: return "expand";
    case Op::kSlice: return "slice";
    case Op::kPad: return "pad";
    case Op::kSoftmaxRows: return "softmax_rows";
  }
  return "?";
}

using Labels = std::shared_ptr<const std::vector<int>>;

struct Record {
  Op op = Op::kConst;
  int in0 = -1;
  int in1 = -1;
  Tensor value;
  bool requires_grad = false;
  // Op arguments.
  double scalar = 0.0;     // kScale factor
  std::size_t off = 0;     // kSlice / kPad offset
  Shape target;            // kReshape / kExpand / kPad / kSlice output shape
  Labels labels;           // kSoftmaxCE
};

class Tape;

// Handle to a node on a tape. Cheap to copy; invalidated by Tape::clear().
struct Var {
  Tape* tape = nullptr;
  int id = -1;
  std::uint64_t gen = 0;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape; }
  double item() const { return value().item(); }
  bool requires_grad() const;
};

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

inline void require(bool ok, Op op, const std::string& msg) {
  if (!ok) throw ShapeError(std::string(op_name(op)) + ": " + msg);
}

inline Tensor unary_map(const Tensor& a, double (*f)(double)) {
  Tensor r = a;
  for (double& v : r.data) v = f(v);
  return r;
}

// Forward evaluation of one record from its input values. Shared by recording
// and replay so that replay is bit-exact by construction.
inline Tensor evaluate(const Record& rec, const Tensor* a, const Tensor* b) {
  const Op op = rec.op;
  switch (op) {
    case Op::kInput:
    case Op::kConst:
      return rec.value;
    case Op::kAdd:
    case Op::kSub:
    case Op::kMul: {
      require(a->shape == b->shape, op,
              "shape mismatch " + shape_str(a->shape) + " vs " + shape_str(b->shape));
      Tensor r = *a;
      if (op == Op::kAdd)
        for (std::size_t i = 0; i < r.size(); ++i) r.data[i] += b->data[i];
      else if (op == Op::kSub)
        for (std::size_t i = 0; i < r.size(); ++i) r.data[i] -= b->data[i];
      else
        for (std::size_t i = 0; i < r.size(); ++i) r.data[i] *= b->data[i];
      return r;
    }
    case Op::kScale: {
      Tensor r = *a;
      for (double& v : r.data) v *= rec.scalar;
      return r;
    }
    case Op::kExp: return unary_map(*a, [](double x) { return std::exp(x); });
    case Op::kLog: {
      for (double v : a->data)
        if (!(v > 0.0)) throw DomainError("log: non-positive input " + std::to_string(v));
      return unary_map(*a, [](double x) { return std::log(x); });
    }
    case Op::kTanh: return unary_map(*a, [](double x) { return std::tanh(x); });
    case Op::kRelu: return unary_map(*a, [](double x) { return x > 0.0 ? x : 0.0; });
    case Op::kMatVec: {
      require(a->rank() == 2 && b->rank() == 1 && a->shape[1] == b->shape[0], op,
              "expected [r,c]x[c], got " + shape_str(a->shape) + "x" + shape_str(b->shape));
      Tensor r = Tensor::zeros({a->shape[0]});
      Eigen::Map<Eigen::VectorXd>(r.data.data(), r.size()).noalias() =
          MapC(a->data.data(), a->shape[0], a->shape[1]) *
          Eigen::Map<const Eigen::VectorXd>(b->data.data(), b->size());
      return r;
    }
    case Op::kMatMul: {
      require(a->rank() == 2 && b->rank() == 2 && a->shape[1] == b->shape[0], op,
              "expected [r,k]x[k,c], got " + shape_str(a->shape) + "x" + shape_str(b->shape));
      Tensor r = Tensor::zeros({a->shape[0], b->shape[1]});
      Map(r.data.data(), a->shape[0], b->shape[1]).noalias() =
          MapC(a->data.data(), a->shape[0], a->shape[1]) *
          MapC(b->data.data(), b->shape[0], b->shape[1]);
      return r;
    }
    case Op::kSum:
    case Op::kMean: {
      double s = 0.0;
      for (double v : a->data) s += v;
      if (op == Op::kMean) s /= static_cast<double>(a->size());
      return Tensor::scalar(s);
    }
    case Op::kSqNorm: {
      double s = 0.0;
      for (double v : a->data) s += v * v;
      return Tensor::scalar(s);
    }
    case Op::kDot: {
      require(a->shape == b->shape, op,
              "shape mismatch " + shape_str(a->shape) + " vs " + shape_str(b->shape));
      double s = 0.0;
      for (std::size_t i = 0; i < a->size(); ++i) s += a->data[i] * b->data[i];
      return Tensor::scalar(s);
    }
    case Op::kSoftmaxCE: {
      const auto& y = *rec.labels;
      require(a->rank() == 2 && y.size() == a->shape[0], op,
              "logits " + shape_str(a->shape) + " vs " + std::to_string(y.size()) + " labels");
      const std::size_t n = a->shape[0], c = a->shape[1];
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double* z = &a->data[i * c];
        if (y[i] < 0 || static_cast<std::size_t>(y[i]) >= c)
          throw ShapeError("softmax_cross_entropy: label out of range");
        double mx = *std::max_element(z, z + c);
        double se = 0.0;
        for (std::size_t j = 0; j < c; ++j) se += std::exp(z[j] - mx);
        total += mx + std::log(se) - z[y[i]];
      }
      return Tensor::scalar(total / static_cast<double>(n));
    }
    case Op::kReshape: {
      require(numel(rec.target) == a->size(), op,
              shape_str(a->shape) + " -> " + shape_str(rec.target));
      return Tensor(rec.target, a->data);
    }
    case Op::kTranspose: {
      require(a->rank() == 2, op, "expected a matrix");
      const std::size_t r = a->shape[0], c = a->shape[1];
      Tensor t = Tensor::zeros({c, r});
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) t.data[j * r + i] = a->data[i * c + j];
      return t;
    }
    case Op::kExpand: {
      require(a->size() == 1, op, "only scalars can be expanded");
      return Tensor::filled(rec.target, a->data[0]);
    }
    case Op::kSlice: {
      const std::size_t len = numel(rec.target);
      require(rec.off + len <= a->size(), op, "slice out of range");
      return Tensor(rec.target, std::vector<double>(a->data.begin() + rec.off,
                                                    a->data.begin() + rec.off + len));
    }
    case Op::kPad: {
      require(rec.off + a->size() <= numel(rec.target), op, "pad out of range");
      Tensor r = Tensor::zeros(rec.target);
      std::copy(a->data.begin(), a->data.end(), r.data.begin() + rec.off);
      return r;
    }
    case Op::kSoftmaxRows: {
      require(a->rank() == 2, op, "expected a matrix");
      const std::size_t n = a->shape[0], c = a->shape[1];
      Tensor r = *a;
      for (std::size_t i = 0; i < n; ++i) {
        double* z = &r.data[i * c];
        double mx = *std::max_element(z, z + c);
        double se = 0.0;
        for (std::size_t j = 0; j < c; ++j) se += (z[j] = std::exp(z[j] - mx));
        for (std::size_t j = 0; j < c; ++j) z[j] /= se;
      }
      return r;
    }
  }
  throw TapeError("unknown op");
}

}  // namespace detail

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var input(Tensor v, bool requires_grad = true) {
    Record r;
    r.op = Op::kInput;
    check_finite(v, Op::kInput);
    r.value = std::move(v);
    r.requires_grad = requires_grad;
    return push(std::move(r));
  }
  Var constant(Tensor v) {
    Record r;
    r.op = Op::kConst;
    check_finite(v, Op::kConst);
    r.value = std::move(v);
    return push(std::move(r));
  }
  Var scalar(double v) { return constant(Tensor::scalar(v)); }

  std::size_t size() const { return records_.size(); }
  std::uint64_t generation() const { return gen_; }
  const Record& record(const Var& v) const { return records_[checked(v)]; }

  // Drops every record and invalidates outstanding Vars.
  void clear() {
    records_.clear();
    ++gen_;
  }

  // Recomputes every record from its recorded inputs, in tape order.
  std::vector<Tensor> replay() const {
    std::vector<Tensor> out;
    out.reserve(records_.size());
    for (const Record& r : records_) {
      const Tensor* a = r.in0 >= 0 ? &out[r.in0] : nullptr;
      const Tensor* b = r.in1 >= 0 ? &out[r.in1] : nullptr;
      out.push_back(detail::evaluate(r, a, b));
    }
    return out;
  }

  // d out / d wrt as plain arrays. The tape is restored to its pre-call size.
  std::vector<Tensor> grad(const Var& out, std::span<const Var> wrt) {
    const std::size_t mark = records_.size();
    bool saved = grad_mode_;
    grad_mode_ = false;
    std::vector<Tensor> res;
    try {
      std::vector<Var> g = backward(out, wrt);
      res.reserve(g.size());
      for (const Var& v : g) res.push_back(records_[v.id].value);
    } catch (...) {
      grad_mode_ = saved;
      records_.resize(mark);
      throw;
    }
    grad_mode_ = saved;
    records_.resize(mark);
    return res;
  }
  std::vector<Tensor> grad(const Var& out, std::initializer_list<Var> wrt) {
    return grad(out, std::span<const Var>(wrt.begin(), wrt.size()));
  }

  // Same as grad, but the gradients stay on the tape as differentiable nodes.
  std::vector<Var> grad_graph(const Var& out, std::span<const Var> wrt) {
    bool saved = grad_mode_;
    grad_mode_ = true;
    try {
      auto r = backward(out, wrt);
      grad_mode_ = saved;
      return r;
    } catch (...) {
      grad_mode_ = saved;
      throw;
    }
  }
  std::vector<Var> grad_graph(const Var& out, std::initializer_list<Var> wrt) {
    return grad_graph(out, std::span<const Var>(wrt.begin(), wrt.size()));
  }

  // Internal: appends a computed record. Used by the op functions below.
  Var emit(Record r) {
    const Tensor* a = r.in0 >= 0 ? &records_[r.in0].value : nullptr;
    const Tensor* b = r.in1 >= 0 ? &records_[r.in1].value : nullptr;
    r.value = detail::evaluate(r, a, b);
    check_finite(r.value, r.op);
    r.requires_grad = grad_mode_ && ((r.in0 >= 0 && records_[r.in0].requires_grad) ||
                                     (r.in1 >= 0 && records_[r.in1].requires_grad));
    return push(std::move(r));
  }

  int checked(const Var& v) const {
    if (v.tape != this || v.gen != gen_ || v.id < 0 ||
        static_cast<std::size_t>(v.id) >= records_.size()) {
      throw TapeError("value does not belong to this tape (or the tape was cleared)");
    }
    return v.id;
  }

 private:
  static void check_finite(const Tensor& t, Op op) {
    if (!t.all_finite())
      throw NonFiniteError(std::string("non-finite value produced by ") + op_name(op));
  }

  Var push(Record r) {
    records_.push_back(std::move(r));
    return Var{this, static_cast<int>(records_.size() - 1), gen_};
  }

  std::vector<Var> backward(const Var& out, std::span<const Var> wrt);

  std::vector<Record> records_;
  std::uint64_t gen_ = 0;
  bool grad_mode_ = true;

  friend struct Var;
};

inline const Tensor& Var::value() const { return tape->record(*this).value; }
inline bool Var::requires_grad() const { return tape->record(*this).requires_grad; }

// ---------------------------------------------------------------------------
// Operations.

namespace detail {

inline Tape* same_tape(const Var& a, const Var& b) {
  if (a.tape != b.tape) throw TapeError("operands live on different tapes");
  a.tape->checked(a);
  b.tape->checked(b);
  return a.tape;
}

inline Var unary(Op op, const Var& a) {
  a.tape->checked(a);
  Record r;
  r.op = op;
  r.in0 = a.id;
  return a.tape->emit(std::move(r));
}

inline Var binary(Op op, const Var& a, const Var& b) {
  Tape* t = same_tape(a, b);
  Record r;
  r.op = op;
  r.in0 = a.id;
  r.in1 = b.id;
  return t->emit(std::move(r));
}

}  // namespace detail

inline Var add(const Var& a, const Var& b) { return detail::binary(Op::kAdd, a, b); }
inline Var sub(const Var& a, const Var& b) { return detail::binary(Op::kSub, a, b); }
inline Var mul(const Var& a, const Var& b) { return detail::binary(Op::kMul, a, b); }
inline Var scale(const Var& a, double c) {
  a.tape->checked(a);
  Record r;
  r.op = Op::kScale;
  r.in0 = a.id;
  r.scalar = c;
  return a.tape->emit(std::move(r));
}
inline Var exp(const Var& a) { return detail::unary(Op::kExp, a); }
inline Var log(const Var& a) { return detail::unary(Op::kLog, a); }
inline Var tanh(const Var& a) { return detail::unary(Op::kTanh, a); }
inline Var relu(const Var& a) { return detail::unary(Op::kRelu, a); }
inline Var matvec(const Var& A, const Var& x) { return detail::binary(Op::kMatVec, A, x); }
inline Var matmul(const Var& A, const Var& B) { return detail::binary(Op::kMatMul, A, B); }
inline Var sum(const Var& a) { return detail::unary(Op::kSum, a); }
inline Var mean(const Var& a) { return detail::unary(Op::kMean, a); }
inline Var sq_norm(const Var& a) { return detail::unary(Op::kSqNorm, a); }
inline Var dot(const Var& a, const Var& b) { return detail::binary(Op::kDot, a, b); }

// Mean over rows of -log softmax(logits)[label].
inline Var softmax_cross_entropy(const Var& logits, Labels labels) {
  logits.tape->checked(logits);
  Record r;
  r.op = Op::kSoftmaxCE;
  r.in0 = logits.id;
  r.labels = std::move(labels);
  return logits.tape->emit(std::move(r));
}
inline Var softmax_cross_entropy(const Var& logits, const std::vector<int>& labels) {
  return softmax_cross_entropy(logits, std::make_shared<const std::vector<int>>(labels));
}

inline Var reshape(const Var& a, Shape s) {
  a.tape->checked(a);
  Record r;
  r.op = Op::kReshape;
  r.in0 = a.id;
  r.target = std::move(s);
  return a.tape->emit(std::move(r));
}
inline Var transpose(const Var& a) { return detail::unary(Op::kTranspose, a); }
inline Var expand(const Var& a, Shape s) {
  a.tape->checked(a);
  Record r;
  r.op = Op::kExpand;
  r.in0 = a.id;
  r.target = std::move(s);
  return a.tape->emit(std::move(r));
}
// Contiguous block of `a`'s flat data, reinterpreted with shape `s`.
inline Var slice(const Var& a, std::size_t offset, Shape s) {
  a.tape->checked(a);
  Record r;
  r.op = Op::kSlice;
  r.in0 = a.id;
  r.off = offset;
  r.target = std::move(s);
  return a.tape->emit(std::move(r));
}
// Zero array of shape `s` with `a`'s flat data written at `offset`.
inline Var pad(const Var& a, std::size_t offset, Shape s) {
  a.tape->checked(a);
  Record r;
  r.op = Op::kPad;
  r.in0 = a.id;
  r.off = offset;
  r.target = std::move(s);
  return a.tape->emit(std::move(r));
}
inline Var softmax_rows(const Var& a) { return detail::unary(Op::kSoftmaxRows, a); }

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator*(double c, const Var& a) { return scale(a, c); }
inline Var operator-(const Var& a) { return scale(a, -1.0); }

// ---------------------------------------------------------------------------
// Backward pass.

namespace detail {

inline Var ones_like(Tape& t, const Shape& s) { return t.constant(Tensor::filled(s, 1.0)); }

// Vector-Jacobian products for one record. `g` is the adjoint of the record's
// output; `self` is the record's output node.
template <typename Emit>
void vjp(Tape& t, const Record& rec, const Var& self, const Var& g, bool need0, bool need1,
         Emit&& emit) {
  const std::uint64_t gen = t.generation();
  Var a{&t, rec.in0, gen};
  Var b{&t, rec.in1, gen};
  switch (rec.op) {
    case Op::kInput:
    case Op::kConst:
      return;
    case Op::kAdd:
      if (need0) emit(0, g);
      if (need1) emit(1, g);
      return;
    case Op::kSub:
      if (need0) emit(0, g);
      if (need1) emit(1, scale(g, -1.0));
      return;
    case Op::kScale:
      emit(0, scale(g, rec.scalar));
      return;
    case Op::kMul:
      if (need0) emit(0, mul(g, b));
      if (need1) emit(1, mul(g, a));
      return;
    case Op::kExp:
      emit(0, mul(g, self));
      return;
    case Op::kLog:
      // d log a = 1/a, written as exp(-log a) to stay within the primitive set.
      emit(0, mul(g, exp(scale(self, -1.0))));
      return;
    case Op::kTanh:
      emit(0, mul(g, sub(ones_like(t, self.shape()), mul(self, self))));
      return;
    case Op::kRelu: {
      Tensor mask = a.value();
      for (double& v : mask.data) v = v > 0.0 ? 1.0 : 0.0;
      emit(0, mul(g, t.constant(std::move(mask))));
      return;
    }
    case Op::kMatVec: {
      const std::size_t r = a.shape()[0], c = a.shape()[1];
      if (need0) emit(0, matmul(reshape(g, {r, 1}), reshape(b, {1, c})));
      if (need1) emit(1, matvec(transpose(a), g));
      return;
    }
    case Op::kMatMul:
      if (need0) emit(0, matmul(g, transpose(b)));
      if (need1) emit(1, matmul(transpose(a), g));
      return;
    case Op::kSum:
      emit(0, expand(g, a.shape()));
      return;
    case Op::kMean:
      emit(0, scale(expand(g, a.shape()), 1.0 / static_cast<double>(a.value().size())));
      return;
    case Op::kSqNorm:
      emit(0, mul(expand(g, a.shape()), scale(a, 2.0)));
      return;
    case Op::kDot:
      if (need0) emit(0, mul(expand(g, b.shape()), b));
      if (need1) emit(1, mul(expand(g, a.shape()), a));
      return;
    case Op::kSoftmaxCE: {
      const Shape s = a.shape();  // copy: emitting below may reallocate
      Tensor onehot = Tensor::zeros(s);
      for (std::size_t i = 0; i < s[0]; ++i) onehot.data[i * s[1] + (*rec.labels)[i]] = 1.0;
      Var d = scale(sub(softmax_rows(a), t.constant(std::move(onehot))),
                    1.0 / static_cast<double>(s[0]));
      emit(0, mul(expand(g, s), d));
      return;
    }
    case Op::kReshape:
      emit(0, reshape(g, a.shape()));
      return;
    case Op::kTranspose:
      emit(0, transpose(g));
      return;
    case Op::kExpand:
      emit(0, reshape(sum(g), a.shape()));
      return;
    case Op::kSlice:
      emit(0, pad(g, rec.off, a.shape()));
      return;
    case Op::kPad:
      emit(0, slice(g, rec.off, a.shape()));
      return;
    case Op::kSoftmaxRows: {
      // J^T g = P * (g - rowsum(P * g)), composed from primitives so that it
      // can itself be differentiated.
      const std::size_t n = self.shape()[0], c = self.shape()[1];
      Var pg = mul(self, g);
      Var rs = matvec(pg, ones_like(t, {c}));
      Var bc = matmul(reshape(rs, {n, 1}), ones_like(t, {1, c}));
      emit(0, mul(self, sub(g, bc)));
      return;
    }
  }
}

}  // namespace detail

inline std::vector<Var> Tape::backward(const Var& out, std::span<const Var> wrt) {
  const int out_id = checked(out);
  if (records_[out_id].value.size() != 1 || records_[out_id].value.rank() != 0)
    throw TapeError("grad: output must be a scalar, got " +
                    shape_str(records_[out_id].value.shape));
  if (wrt.empty()) return {};
  int lo = out_id + 1;
  std::vector<char> is_wrt(records_.size(), 0);
  for (const Var& w : wrt) {
    int id = checked(w);
    if (!records_[id].requires_grad)
      throw TapeError("grad: wrt node does not require grad");
    is_wrt[id] = 1;
    lo = std::min(lo, id);
  }
  // needed[i]: node i lies on a path from some wrt node.
  const int hi = out_id;
  std::vector<char> needed(hi + 1, 0);
  for (int i = std::max(lo, 0); i <= hi; ++i) {
    const Record& r = records_[i];
    if (is_wrt[i]) {
      needed[i] = 1;
      continue;
    }
    if (!r.requires_grad) continue;
    needed[i] = (r.in0 >= lo && needed[r.in0]) || (r.in1 >= lo && needed[r.in1]);
  }
  std::vector<int> adj(hi + 1, -1);
  if (lo <= hi && needed[hi]) adj[hi] = scalar(1.0).id;
  for (int i = hi; i >= lo; --i) {
    if (adj[i] < 0 || !needed[i]) continue;
    // Copy: emitting records may reallocate records_.
    const Record rec = records_[i];
    if (rec.op == Op::kInput || rec.op == Op::kConst) continue;
    const Var self{this, i, gen_};
    const Var g{this, adj[i], gen_};
    const bool n0 = rec.in0 >= lo && needed[rec.in0];
    const bool n1 = rec.in1 >= lo && needed[rec.in1];
    if (!n0 && !n1) continue;
    detail::vjp(*this, rec, self, g, n0, n1, [&](int which, const Var& c) {
      int target = which == 0 ? rec.in0 : rec.in1;
      if (adj[target] < 0) {
        adj[target] = c.id;
      } else {
        adj[target] = add(Var{this, adj[target], gen_}, c).id;
      }
    });
  }
  std::vector<Var> res;
  res.reserve(wrt.size());
  for (const Var& w : wrt) {
    if (w.id <= hi && adj[w.id] >= 0) {
      res.push_back(Var{this, adj[w.id], gen_});
    } else {
      res.push_back(constant(Tensor::zeros(records_[w.id].value.shape)));
    }
  }
  return res;
}

// Hessian-vector product of a scalar function at theta, by double-backward.
template <typename F>
Tensor hvp(F&& f, const Tensor& theta, const Tensor& v) {
  if (v.size() != theta.size())
    throw ShapeError("hvp: v has length " + std::to_string(v.size()) + ", expected " +
                     std::to_string(theta.size()));
  Tape tape;
  Var th = tape.input(theta);
  Var out = f(tape, th);
  Var g = tape.grad_graph(out, {th})[0];
  Var s = dot(g, tape.constant(Tensor(g.shape(), v.data)));
  return tape.grad(s, {th})[0];
}

}  // namespace pbho::ad

#endif  // PBHO_DIFFCORE_TAPE_HPP_
