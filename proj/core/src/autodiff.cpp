#include "csst/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <iostream>

#include "csst/error.hpp"

namespace csst::ad {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMatrix>;
using CMapMat = Eigen::Map<const RowMatrix>;

CMapMat view(const Tensor& t) { return CMapMat(t.data().data(), t.rows(), t.cols()); }
MapMat view(Tensor& t) { return MapMat(t.data().data(), t.rows(), t.cols()); }

void same_tape(Var a, Var b) {
  if (&a.tape() != &b.tape()) throw NumericError("operands recorded on different tapes");
}

void require_shape(bool ok, const char* op, const Tensor& a, const Tensor& b) {
  if (!ok) {
    throw NumericError(std::string(op) + ": incompatible shapes " + shape_string(a.shape()) + " and " +
                       shape_string(b.shape()));
  }
}

template <class F>
Tensor map_values(const Tensor& x, F f) {
  Tensor out(x.shape());
  const auto src = x.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = f(src[i]);
  return out;
}

// log(sigmoid(z)) without overflow.
double stable_log_sigmoid(double z) { return z >= 0.0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z)); }

double stable_sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::Constant: return "constant";
    case Op::Param: return "param";
    case Op::MatMul: return "matmul";
    case Op::MatMulNT: return "matmul_nt";
    case Op::Add: return "add";
    case Op::AddRow: return "add_row";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Scale: return "scale";
    case Op::Relu: return "relu";
    case Op::Sigmoid: return "sigmoid";
    case Op::LogSigmoid: return "log_sigmoid";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Concat: return "concat";
    case Op::GatherRows: return "gather_rows";
    case Op::SliceRows: return "slice_rows";
    case Op::SegmentSum: return "segment_sum";
    case Op::Sum: return "sum";
    case Op::RowLogSoftmax: return "row_log_softmax";
    case Op::RowNormalize: return "row_normalize";
  }
  return "?";
}

const Tensor& Var::value() const { return tape_->value(id_); }

bool GradSink::wants(std::size_t k) const { return tape_.requires_grad(inputs_[k]); }

Tensor& GradSink::at(std::size_t k) {
  auto& g = grads_[inputs_[k]];
  if (g.empty()) g = Tensor(tape_.value(inputs_[k]).shape(), 0.0);
  return g;
}

Var Tape::constant(Tensor value) {
  value.require_finite("constant");
  nodes_.push_back(Node{Op::Constant, std::move(value), {}, nullptr, false, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(const ParamStore& params, const std::string& name) {
  if (auto it = param_nodes_.find(name); it != param_nodes_.end()) return Var(this, it->second);
  const Tensor& v = params.at(name);
  v.require_finite("parameter " + name);
  nodes_.push_back(Node{Op::Param, v, {}, nullptr, true, name});
  param_nodes_.emplace(name, nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Op op, Tensor value, std::vector<std::size_t> inputs, Backward backward) {
  value.require_finite(op_name(op));
  bool rg = false;
  for (auto i : inputs) rg = rg || nodes_[i].requires_grad;
  nodes_.push_back(Node{op, std::move(value), std::move(inputs), rg ? std::move(backward) : nullptr, rg, {}});
  return Var(this, nodes_.size() - 1);
}

GradStore Tape::grad(Var loss, const ParamStore& params, std::vector<std::string>* disconnected) const {
  if (&loss.tape() != this) throw NumericError("loss recorded on a different tape");
  if (loss.value().size() != 1) throw NumericError("grad requires a scalar loss, got " + shape_string(loss.value().shape()));

  std::vector<Tensor> grads(nodes_.size());
  grads[loss.id()] = Tensor(loss.value().shape(), 1.0);
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    const Node& node = nodes_[id];
    if (!node.requires_grad || !node.backward || grads[id].empty()) continue;
    GradSink sink(*this, grads, node.inputs);
    node.backward(grads[id], sink);
  }

  GradStore out;
  for (const auto& [name, tensor] : params) {
    auto it = param_nodes_.find(name);
    if (it != param_nodes_.end() && it->second <= loss.id() && !grads[it->second].empty()) {
      grads[it->second].require_finite("gradient of " + name);
      out.set(name, std::move(grads[it->second]));
    } else {
      out.set(name, Tensor(tensor.shape(), 0.0));
      if (disconnected) disconnected->push_back(name);
      if (debug_) std::cerr << "[autodiff] parameter '" << name << "' is disconnected from the loss\n";
    }
  }
  return out;
}

Var matmul(Var a, Var b) {
  same_tape(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require_shape(A.cols() == B.rows(), "matmul", A, B);
  Tensor out = Tensor::matrix(A.rows(), B.cols());
  view(out).noalias() = view(A) * view(B);
  const auto ia = a.id(), ib = b.id();
  Tape& t = a.tape();
  return t.record(Op::MatMul, std::move(out), {ia, ib}, [&t, ia, ib](const Tensor& g, GradSink& sink) {
    const auto G = view(g);
    if (sink.wants(0)) view(sink.at(0)).noalias() += G * view(t.value(ib)).transpose();
    if (sink.wants(1)) view(sink.at(1)).noalias() += view(t.value(ia)).transpose() * G;
  });
}

Var matmul_nt(Var a, Var b) {
  same_tape(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require_shape(A.cols() == B.cols(), "matmul_nt", A, B);
  Tensor out = Tensor::matrix(A.rows(), B.rows());
  view(out).noalias() = view(A) * view(B).transpose();
  const auto ia = a.id(), ib = b.id();
  Tape& t = a.tape();
  return t.record(Op::MatMulNT, std::move(out), {ia, ib}, [&t, ia, ib](const Tensor& g, GradSink& sink) {
    const auto G = view(g);
    if (sink.wants(0)) view(sink.at(0)).noalias() += G * view(t.value(ib));
    if (sink.wants(1)) view(sink.at(1)).noalias() += G.transpose() * view(t.value(ia));
  });
}

Var add(Var a, Var b) {
  same_tape(a, b);
  require_shape(a.value().same_shape(b.value()), "add", a.value(), b.value());
  Tensor out = a.value();
  auto o = out.data();
  const auto bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bv[i];
  return a.tape().record(Op::Add, std::move(out), {a.id(), b.id()}, [](const Tensor& g, GradSink& sink) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (!sink.wants(k)) continue;
      auto d = sink.at(k).data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
    }
  });
}

Var add_row(Var x, Var row) {
  same_tape(x, row);
  const Tensor& X = x.value();
  const Tensor& R = row.value();
  require_shape(R.rows() == 1 && R.cols() == X.cols(), "add_row", X, R);
  Tensor out = X;
  const std::size_t n = X.rows(), c = X.cols();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) out(i, j) += R[j];
  return x.tape().record(Op::AddRow, std::move(out), {x.id(), row.id()}, [n, c](const Tensor& g, GradSink& sink) {
    if (sink.wants(0)) {
      auto d = sink.at(0).data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
    }
    if (sink.wants(1)) {
      auto& d = sink.at(1);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) d[j] += g(i, j);
    }
  });
}

Var sub(Var a, Var b) {
  same_tape(a, b);
  require_shape(a.value().same_shape(b.value()), "sub", a.value(), b.value());
  Tensor out = a.value();
  auto o = out.data();
  const auto bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bv[i];
  return a.tape().record(Op::Sub, std::move(out), {a.id(), b.id()}, [](const Tensor& g, GradSink& sink) {
    if (sink.wants(0)) {
      auto d = sink.at(0).data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
    }
    if (sink.wants(1)) {
      auto d = sink.at(1).data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  same_tape(a, b);
  require_shape(a.value().same_shape(b.value()), "mul", a.value(), b.value());
  Tensor out = a.value();
  auto o = out.data();
  const auto bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
  const auto ia = a.id(), ib = b.id();
  Tape& t = a.tape();
  return t.record(Op::Mul, std::move(out), {ia, ib}, [&t, ia, ib](const Tensor& g, GradSink& sink) {
    if (sink.wants(0)) {
      auto d = sink.at(0).data();
      const auto bv = t.value(ib).data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * bv[i];
    }
    if (sink.wants(1)) {
      auto d = sink.at(1).data();
      const auto av = t.value(ia).data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * av[i];
    }
  });
}

Var scale(Var x, double factor) {
  Tensor out = map_values(x.value(), [factor](double v) { return v * factor; });
  return x.tape().record(Op::Scale, std::move(out), {x.id()}, [factor](const Tensor& g, GradSink& sink) {
    auto d = sink.at(0).data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += factor * g[i];
  });
}

Var relu(Var x) {
  Tensor out = map_values(x.value(), [](double v) { return v > 0.0 ? v : 0.0; });
  const auto ix = x.id();
  Tape& t = x.tape();
  return t.record(Op::Relu, std::move(out), {ix}, [&t, ix](const Tensor& g, GradSink& sink) {
    auto d = sink.at(0).data();
    const auto xv = t.value(ix).data();
    for (std::size_t i = 0; i < d.size(); ++i)
      if (xv[i] > 0.0) d[i] += g[i];
  });
}

Var sigmoid(Var x) {
  Tensor out = map_values(x.value(), stable_sigmoid);
  Tape& t = x.tape();
  const auto self = t.size();
  return t.record(Op::Sigmoid, std::move(out), {x.id()}, [&t, self](const Tensor& g, GradSink& sink) {
    auto d = sink.at(0).data();
    const auto y = t.value(self).data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

Var log_sigmoid(Var x) {
  Tensor out = map_values(x.value(), stable_log_sigmoid);
  const auto ix = x.id();
  Tape& t = x.tape();
  return t.record(Op::LogSigmoid, std::move(out), {ix}, [&t, ix](const Tensor& g, GradSink& sink) {
    auto d = sink.at(0).data();
    const auto xv = t.value(ix).data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * stable_sigmoid(-xv[i]);
  });
}

Var exp(Var x) {
  Tensor out = map_values(x.value(), [](double v) { return std::exp(v); });
  Tape& t = x.tape();
  const auto self = t.size();
  return t.record(Op::Exp, std::move(out), {x.id()}, [&t, self](const Tensor& g, GradSink& sink) {
    auto d = sink.at(0).data();
    const auto y = t.value(self).data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * y[i];
  });
}

Var log(Var x) {
  Tensor out = map_values(x.value(), [](double v) { return std::log(v); });
  const auto ix = x.id();
  Tape& t = x.tape();
  return t.record(Op::Log, std::move(out), {ix}, [&t, ix](const Tensor& g, GradSink& sink) {
    auto d = sink.at(0).data();
    const auto xv = t.value(ix).data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] / xv[i];
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw NumericError("concat_cols of zero tensors");
  const std::size_t n = parts.front().rows();
  std::vector<std::size_t> offsets, widths, ids;
  std::size_t total = 0;
  for (const Var& p : parts) {
    same_tape(parts.front(), p);
    require_shape(p.rows() == n, "concat_cols", parts.front().value(), p.value());
    offsets.push_back(total);
    widths.push_back(p.cols());
    ids.push_back(p.id());
    total += p.cols();
  }
  Tensor out = Tensor::matrix(n, total);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& src = parts[k].value();
    for (std::size_t i = 0; i < n; ++i)
      std::copy_n(&src(i, 0), widths[k], &out(i, offsets[k]));
  }
  return parts.front().tape().record(Op::Concat, std::move(out), ids,
                                     [n, offsets, widths](const Tensor& g, GradSink& sink) {
                                       for (std::size_t k = 0; k < offsets.size(); ++k) {
                                         if (!sink.wants(k)) continue;
                                         Tensor& d = sink.at(k);
                                         for (std::size_t i = 0; i < n; ++i)
                                           for (std::size_t j = 0; j < widths[k]; ++j) d(i, j) += g(i, offsets[k] + j);
                                       }
                                     });
}

Var slice_rows(Var x, std::size_t begin, std::size_t end) {
  const Tensor& X = x.value();
  if (begin >= end || end > X.rows()) throw NumericError("slice_rows range out of bounds");
  const std::size_t c = X.cols();
  Tensor out = Tensor::matrix(end - begin, c);
  std::copy_n(&X(begin, 0), (end - begin) * c, &out(0, 0));
  return x.tape().record(Op::SliceRows, std::move(out), {x.id()}, [begin, end, c](const Tensor& g, GradSink& sink) {
    Tensor& d = sink.at(0);
    for (std::size_t i = 0; i < end - begin; ++i)
      for (std::size_t j = 0; j < c; ++j) d(begin + i, j) += g(i, j);
  });
}

Var gather_rows(Var x, std::vector<std::size_t> index) {
  const Tensor& X = x.value();
  const std::size_t c = X.cols();
  if (index.empty()) throw NumericError("gather_rows with empty index");
  Tensor out = Tensor::matrix(index.size(), c);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= X.rows()) throw NumericError("gather_rows index out of range");
    std::copy_n(&X(index[i], 0), c, &out(i, 0));
  }
  return x.tape().record(Op::GatherRows, std::move(out), {x.id()},
                         [index = std::move(index), c](const Tensor& g, GradSink& sink) {
                           Tensor& d = sink.at(0);
                           for (std::size_t i = 0; i < index.size(); ++i)
                             for (std::size_t j = 0; j < c; ++j) d(index[i], j) += g(i, j);
                         });
}

Var segment_sum(Var x, std::vector<std::size_t> segment, std::size_t n_segments) {
  const Tensor& X = x.value();
  if (segment.size() != X.rows()) throw NumericError("segment_sum: one segment id per row required");
  if (n_segments == 0) throw NumericError("segment_sum: n_segments must be positive");
  const std::size_t c = X.cols();
  Tensor out = Tensor::matrix(n_segments, c);
  for (std::size_t i = 0; i < segment.size(); ++i) {
    if (segment[i] >= n_segments) throw NumericError("segment_sum: segment id out of range");
    for (std::size_t j = 0; j < c; ++j) out(segment[i], j) += X(i, j);
  }
  return x.tape().record(Op::SegmentSum, std::move(out), {x.id()},
                         [segment = std::move(segment), c](const Tensor& g, GradSink& sink) {
                           Tensor& d = sink.at(0);
                           for (std::size_t i = 0; i < segment.size(); ++i)
                             for (std::size_t j = 0; j < c; ++j) d(i, j) += g(segment[i], j);
                         });
}

Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return x.tape().record(Op::Sum, Tensor::scalar(s), {x.id()}, [](const Tensor& g, GradSink& sink) {
    const double gv = g[0];
    for (double& d : sink.at(0).data()) d += gv;
  });
}

Var mean(Var x) { return scale(sum(x), 1.0 / static_cast<double>(x.value().size())); }

Var row_log_softmax(Var x) {
  const Tensor& X = x.value();
  const std::size_t n = X.rows(), c = X.cols();
  Tensor out = Tensor::matrix(n, c);
  for (std::size_t i = 0; i < n; ++i) {
    double m = X(i, 0);
    for (std::size_t j = 1; j < c; ++j) m = std::max(m, X(i, j));
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += std::exp(X(i, j) - m);
    const double lse = m + std::log(s);
    for (std::size_t j = 0; j < c; ++j) out(i, j) = X(i, j) - lse;
  }
  Tape& t = x.tape();
  const auto self = t.size();
  return t.record(Op::RowLogSoftmax, std::move(out), {x.id()}, [&t, self, n, c](const Tensor& g, GradSink& sink) {
    const Tensor& y = t.value(self);
    Tensor& d = sink.at(0);
    for (std::size_t i = 0; i < n; ++i) {
      double gs = 0.0;
      for (std::size_t j = 0; j < c; ++j) gs += g(i, j);
      for (std::size_t j = 0; j < c; ++j) d(i, j) += g(i, j) - std::exp(y(i, j)) * gs;
    }
  });
}

Var row_normalize(Var x, double eps) {
  const Tensor& X = x.value();
  const std::size_t n = X.rows(), c = X.cols();
  Tensor out = Tensor::matrix(n, c);
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += X(i, j) * X(i, j);
    norms[i] = std::sqrt(s);
    const double denom = std::max(norms[i], eps);
    for (std::size_t j = 0; j < c; ++j) out(i, j) = X(i, j) / denom;
  }
  Tape& t = x.tape();
  const auto self = t.size();
  return t.record(Op::RowNormalize, std::move(out), {x.id()},
                  [&t, self, n, c, eps, norms = std::move(norms)](const Tensor& g, GradSink& sink) {
                    const Tensor& y = t.value(self);
                    Tensor& d = sink.at(0);
                    for (std::size_t i = 0; i < n; ++i) {
                      if (norms[i] < eps) {
                        for (std::size_t j = 0; j < c; ++j) d(i, j) += g(i, j) / eps;
                        continue;
                      }
                      double dot = 0.0;
                      for (std::size_t j = 0; j < c; ++j) dot += g(i, j) * y(i, j);
                      for (std::size_t j = 0; j < c; ++j) d(i, j) += (g(i, j) - y(i, j) * dot) / norms[i];
                    }
                  });
}

Tensor row_softmax(const Tensor& x) {
  const std::size_t n = x.rows(), c = x.cols();
  Tensor out = Tensor::matrix(n, c);
  for (std::size_t i = 0; i < n; ++i) {
    double m = x(i, 0);
    for (std::size_t j = 1; j < c; ++j) m = std::max(m, x(i, j));
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      out(i, j) = std::exp(x(i, j) - m);
      s += out(i, j);
    }
    for (std::size_t j = 0; j < c; ++j) out(i, j) /= s;
  }
  return out;
}

}  // namespace csst::ad
