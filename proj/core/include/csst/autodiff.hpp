#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "csst/params.hpp"
#include "csst/tensor.hpp"

namespace csst::ad {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  std::size_t id() const noexcept { return id_; }
  Tape& tape() const { return *tape_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

enum class Op {
  Constant,
  Param,
  MatMul,
  MatMulNT,
  Add,
  AddRow,
  Sub,
  Mul,
  Scale,
  Relu,
  Sigmoid,
  LogSigmoid,
  Exp,
  Log,
  Concat,
  GatherRows,
  SliceRows,
  SegmentSum,
  Sum,
  RowLogSoftmax,
  RowNormalize,
};

const char* op_name(Op op);

/// Write access to the gradient buffers of a node's inputs during backprop.
class GradSink {
 public:
  // True when input k participates in a gradient computation.
  bool wants(std::size_t k) const;
  // Gradient accumulator for input k, zero-initialized on first access.
  Tensor& at(std::size_t k);

 private:
  friend class Tape;
  GradSink(const Tape& tape, std::vector<Tensor>& grads, std::span<const std::size_t> inputs)
      : tape_(tape), grads_(grads), inputs_(inputs) {}

  const Tape& tape_;
  std::vector<Tensor>& grads_;
  std::span<const std::size_t> inputs_;
};

/// Reverse-mode computation record.
///
/// Nodes are appended in evaluation order, so recording order is a valid
/// topological order and backprop is a single reverse sweep. Every recorded
/// value is checked for NaN/Inf.
class Tape {
 public:
  using Backward = std::function<void(const Tensor& grad_out, GradSink& sink)>;

  explicit Tape(bool debug = false) : debug_(debug) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // Leaf bound to params[name]; repeated requests return the same node.
  Var param(const ParamStore& params, const std::string& name);

  Var record(Op op, Tensor value, std::vector<std::size_t> inputs, Backward backward);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  Op op(std::size_t id) const { return nodes_[id].op; }
  std::span<const std::size_t> inputs(std::size_t id) const { return nodes_[id].inputs; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Exact gradients of the scalar `loss` with respect to every tensor in
  /// `params`. Parameters not reachable from the loss get zero gradients and
  /// are listed in `disconnected` when provided; in debug mode they are also
  /// reported on stderr.
  GradStore grad(Var loss, const ParamStore& params, std::vector<std::string>* disconnected = nullptr) const;

 private:
  struct Node {
    Op op;
    Tensor value;
    std::vector<std::size_t> inputs;
    Backward backward;
    bool requires_grad = false;
    std::string param_name;
  };

  std::vector<Node> nodes_;
  std::unordered_map<std::string, std::size_t> param_nodes_;
  bool debug_ = false;
};

// Primitive operations. All operands must live on the same tape.

Var matmul(Var a, Var b);     // (m x k)(k x n)
Var matmul_nt(Var a, Var b);  // (m x k)(n x k)^T
Var add(Var a, Var b);
Var add_row(Var x, Var row);  // row is 1 x n, broadcast over rows of x
Var sub(Var a, Var b);
Var mul(Var a, Var b);  // elementwise
Var scale(Var x, double factor);
Var relu(Var x);
Var sigmoid(Var x);
Var log_sigmoid(Var x);
Var exp(Var x);
Var log(Var x);
Var concat_cols(std::span<const Var> parts);
Var gather_rows(Var x, std::vector<std::size_t> index);
// Rows [begin, end) of x.
Var slice_rows(Var x, std::size_t begin, std::size_t end);
// out.row(segment[i]) += x.row(i); rows accumulate in increasing i.
Var segment_sum(Var x, std::vector<std::size_t> segment, std::size_t n_segments);
Var sum(Var x);  // 1 x 1
Var mean(Var x);
Var row_log_softmax(Var x);
// Each row divided by max(||row||, eps).
Var row_normalize(Var x, double eps = 1e-12);

Tensor row_softmax(const Tensor& x);

}  // namespace csst::ad
