#include "kgf/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "kgf/errors.hpp"

namespace kgf {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMajor>;
using Map = Eigen::Map<RowMajor>;

MapC as_matrix(const Tensor& t) {
  return {t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}
Map as_matrix(Tensor& t) {
  return {t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}

[[noreturn]] void shape_error(const char* op, Shape a, Shape b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " + to_string(a) + " and " +
                       to_string(b));
}

Tape& same_tape(const char* op, Var a, Var b) {
  if (!a.valid() || a.tape() != b.tape()) {
    throw ContractError(std::string(op) + ": operands belong to different tapes");
  }
  return *a.tape();
}

enum class Broadcast { kNone, kRow, kScalar };

Broadcast classify(const char* op, Shape a, Shape b) {
  if (a == b) return Broadcast::kNone;
  if (b.rows == 1 && b.cols == 1) return Broadcast::kScalar;
  if (b.rows == 1 && b.cols == a.cols) return Broadcast::kRow;
  shape_error(op, a, b);
}

// Index of b's element paired with a's flat index i.
inline std::size_t broadcast_index(Broadcast kind, std::size_t i, std::size_t cols) {
  switch (kind) {
    case Broadcast::kNone:
      return i;
    case Broadcast::kRow:
      return i % cols;
    case Broadcast::kScalar:
      return 0;
  }
  return 0;
}

template <typename Fn>
Var unary(Var a, Tensor out, Fn local_derivative) {
  Tape& tape = *a.tape();
  const std::size_t ia = a.id();
  return tape.push(std::move(out), [ia, local_derivative](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_ref(self);
    const Tensor& x = t.value(ia);
    const Tensor& y = t.value(self);
    Tensor& ga = t.grad_ref(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * local_derivative(x[i], y[i]);
  });
}

}  // namespace

Parameter::Parameter(std::string name_, Tensor value_)
    : name(std::move(name_)), value(std::move(value_)), grad(value.rows(), value.cols()) {}

const Tensor& Var::value() const { return tape_->value(id_); }

Var Tape::push(Tensor value, Adjoint adjoint) {
  Node node;
  node.value = std::move(value);
  if (record_) node.adjoint = std::move(adjoint);
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

Var Tape::constant(Tensor value) { return push(std::move(value), {}); }

Var Tape::param(Parameter& p) {
  Var v = push(p.value, {});
  nodes_[v.id()].param = &p;
  return v;
}

Tensor& Tape::grad_ref(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    n.grad = Tensor(n.value.rows(), n.value.cols());
    n.has_grad = true;
  }
  return n.grad;
}

void Tape::compute_gradients(Var loss) {
  if (!record_) throw ContractError("backward: tape was created without recording");
  if (loss.tape() != this) throw ContractError("backward: loss belongs to another tape");
  if (loss.shape() != Shape{1, 1}) {
    throw ContractError("backward: loss must be 1x1, got " + to_string(loss.shape()));
  }
  for (Node& n : nodes_) {
    n.has_grad = false;
    n.grad = Tensor();
  }
  grad_ref(loss.id())[0] = 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.has_grad && n.adjoint) n.adjoint(*this, i);
  }
}

void Tape::accumulate_parameter_grads() const {
  for (const Node& n : nodes_) {
    if (n.param != nullptr && n.has_grad) n.param->grad.add_inplace(n.grad);
  }
}

void Tape::backward(Var loss) {
  compute_gradients(loss);
  accumulate_parameter_grads();
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_[v.id()];
  if (n.has_grad) return n.grad;
  return {n.value.rows(), n.value.cols()};
}

// ---------------------------------------------------------------------------

Var matmul(Var a, Var b) {
  Tape& tape = same_tape("matmul", a, b);
  if (a.cols() != b.rows()) shape_error("matmul", a.shape(), b.shape());
  Tensor out(a.rows(), b.cols());
  as_matrix(out).noalias() = as_matrix(a.value()) * as_matrix(b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return tape.push(std::move(out), [ia, ib](Tape& t, std::size_t self) {
    const auto g = as_matrix(t.grad_ref(self));
    {
      auto ga = as_matrix(t.grad_ref(ia));
      ga.noalias() += g * as_matrix(t.value(ib)).transpose();
    }
    auto gb = as_matrix(t.grad_ref(ib));
    gb.noalias() += as_matrix(t.value(ia)).transpose() * g;
  });
}

Var transpose(Var a) {
  Tensor out(a.cols(), a.rows());
  as_matrix(out) = as_matrix(a.value()).transpose();
  const std::size_t ia = a.id();
  return a.tape()->push(std::move(out), [ia](Tape& t, std::size_t self) {
    as_matrix(t.grad_ref(ia)) += as_matrix(t.grad_ref(self)).transpose();
  });
}

Var add(Var a, Var b) {
  Tape& tape = same_tape("add", a, b);
  const Broadcast kind = classify("add", a.shape(), b.shape());
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  Tensor out = x;
  const std::size_t cols = x.cols();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += y[broadcast_index(kind, i, cols)];
  const std::size_t ia = a.id(), ib = b.id();
  return tape.push(std::move(out), [ia, ib, kind, cols](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_ref(self);
    t.grad_ref(ia).add_inplace(g);
    Tensor& gb = t.grad_ref(ib);
    for (std::size_t i = 0; i < g.size(); ++i) gb[broadcast_index(kind, i, cols)] += g[i];
  });
}

Var sub(Var a, Var b) { return add(a, scale(b, -1.0)); }

Var mul(Var a, Var b) {
  Tape& tape = same_tape("mul", a, b);
  const Broadcast kind = classify("mul", a.shape(), b.shape());
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  Tensor out = x;
  const std::size_t cols = x.cols();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= y[broadcast_index(kind, i, cols)];
  const std::size_t ia = a.id(), ib = b.id();
  return tape.push(std::move(out), [ia, ib, kind, cols](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_ref(self);
    const Tensor& xv = t.value(ia);
    const Tensor& yv = t.value(ib);
    {
      Tensor& ga = t.grad_ref(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * yv[broadcast_index(kind, i, cols)];
    }
    Tensor& gb = t.grad_ref(ib);
    for (std::size_t i = 0; i < g.size(); ++i) gb[broadcast_index(kind, i, cols)] += g[i] * xv[i];
  });
}

Var div_rows(Var a, Var d) {
  Tape& tape = same_tape("div_rows", a, d);
  if (d.cols() != 1 || d.rows() != a.rows()) shape_error("div_rows", a.shape(), d.shape());
  const Tensor& x = a.value();
  const Tensor& dv = d.value();
  Tensor out = x;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (double& v : out.row(r)) v /= dv[r];
  }
  const std::size_t ia = a.id(), id = d.id();
  return tape.push(std::move(out), [ia, id](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_ref(self);
    const Tensor& y = t.value(self);
    const Tensor& dv = t.value(id);
    {
      Tensor& ga = t.grad_ref(ia);
      for (std::size_t r = 0; r < g.rows(); ++r) {
        for (std::size_t c = 0; c < g.cols(); ++c) ga(r, c) += g(r, c) / dv[r];
      }
    }
    Tensor& gd = t.grad_ref(id);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      double acc = 0.0;
      for (std::size_t c = 0; c < g.cols(); ++c) acc += g(r, c) * y(r, c);
      gd[r] -= acc / dv[r];
    }
  });
}

Var concat_columns(Var a, Var b) {
  Tape& tape = same_tape("concat_columns", a, b);
  if (a.rows() != b.rows()) shape_error("concat_columns", a.shape(), b.shape());
  const std::size_t n = a.rows(), ca = a.cols(), cb = b.cols();
  Tensor out(n, ca + cb);
  for (std::size_t r = 0; r < n; ++r) {
    std::copy_n(a.value().row(r).begin(), ca, out.row(r).begin());
    std::copy_n(b.value().row(r).begin(), cb, out.row(r).begin() + static_cast<std::ptrdiff_t>(ca));
  }
  const std::size_t ia = a.id(), ib = b.id();
  return tape.push(std::move(out), [ia, ib, n, ca, cb](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_ref(self);
    {
      Tensor& ga = t.grad_ref(ia);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < ca; ++c) ga(r, c) += g(r, c);
    }
    Tensor& gb = t.grad_ref(ib);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < cb; ++c) gb(r, c) += g(r, ca + c);
  });
}

Var relu(Var a) {
  Tensor out = a.value();
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return unary(a, std::move(out), [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(Var a) {
  Tensor out = a.value();
  for (double& v : out.values()) v = 1.0 / (1.0 + std::exp(-v));
  return unary(a, std::move(out), [](double, double y) { return y * (1.0 - y); });
}

Var log(Var a) {
  Tensor out = a.value();
  for (double& v : out.values()) v = std::log(v);
  return unary(a, std::move(out), [](double x, double) { return 1.0 / x; });
}

Var exp(Var a) {
  Tensor out = a.value();
  for (double& v : out.values()) v = std::exp(v);
  return unary(a, std::move(out), [](double, double y) { return y; });
}

Var clamp(Var a, double lo, double hi) {
  Tensor out = a.value();
  for (double& v : out.values()) v = std::clamp(v, lo, hi);
  return unary(a, std::move(out),
               [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  const std::size_t ia = a.id();
  return a.tape()->push(Tensor::scalar(s), [ia](Tape& t, std::size_t self) {
    const double g = t.grad_ref(self)[0];
    for (double& v : t.grad_ref(ia).values()) v += g;
  });
}

Var sum_rows(Var a) {
  const Tensor& x = a.value();
  Tensor out(1, x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) out[c] += x(r, c);
  const std::size_t ia = a.id();
  return a.tape()->push(std::move(out), [ia](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_ref(self);
    Tensor& ga = t.grad_ref(ia);
    for (std::size_t r = 0; r < ga.rows(); ++r)
      for (std::size_t c = 0; c < ga.cols(); ++c) ga(r, c) += g[c];
  });
}

Var mean_rows(Var a) {
  if (a.rows() == 0) throw DimensionError("mean_rows: empty input " + to_string(a.shape()));
  return scale(sum_rows(a), 1.0 / static_cast<double>(a.rows()));
}

Var sum_cols(Var a) {
  const Tensor& x = a.value();
  Tensor out(x.rows(), 1);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double s = 0.0;
    for (double v : x.row(r)) s += v;
    out[r] = s;
  }
  const std::size_t ia = a.id();
  return a.tape()->push(std::move(out), [ia](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_ref(self);
    Tensor& ga = t.grad_ref(ia);
    for (std::size_t r = 0; r < ga.rows(); ++r)
      for (double& v : ga.row(r)) v += g[r];
  });
}

Var layer_norm(Var a, Var gain, Var bias, double eps) {
  Tape& tape = same_tape("layer_norm", a, gain);
  same_tape("layer_norm", a, bias);
  const std::size_t n = a.rows(), m = a.cols();
  if (gain.shape() != Shape{1, m}) shape_error("layer_norm", a.shape(), gain.shape());
  if (bias.shape() != Shape{1, m}) shape_error("layer_norm", a.shape(), bias.shape());
  const Tensor& x = a.value();
  const Tensor& gv = gain.value();
  const Tensor& bv = bias.value();
  // xhat and 1/sigma are kept for the adjoint.
  auto xhat = std::make_shared<Tensor>(n, m);
  auto inv_std = std::make_shared<std::vector<double>>(n);
  Tensor out(n, m);
  for (std::size_t r = 0; r < n; ++r) {
    double mean = 0.0;
    for (double v : x.row(r)) mean += v;
    mean /= static_cast<double>(m);
    double var = 0.0;
    for (double v : x.row(r)) var += (v - mean) * (v - mean);
    var /= static_cast<double>(m);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t c = 0; c < m; ++c) {
      const double h = (x(r, c) - mean) * is;
      (*xhat)(r, c) = h;
      out(r, c) = h * gv[c] + bv[c];
    }
  }
  const std::size_t ia = a.id(), ig = gain.id(), ib = bias.id();
  return tape.push(std::move(out), [ia, ig, ib, xhat, inv_std, n, m](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_ref(self);
    const Tensor& gv = t.value(ig);
    {
      Tensor& gg = t.grad_ref(ig);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < m; ++c) gg[c] += g(r, c) * (*xhat)(r, c);
    }
    {
      Tensor& gb = t.grad_ref(ib);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < m; ++c) gb[c] += g(r, c);
    }
    Tensor& ga = t.grad_ref(ia);
    const double inv_m = 1.0 / static_cast<double>(m);
    for (std::size_t r = 0; r < n; ++r) {
      double mean_dh = 0.0, mean_dh_h = 0.0;
      for (std::size_t c = 0; c < m; ++c) {
        const double dh = g(r, c) * gv[c];
        mean_dh += dh;
        mean_dh_h += dh * (*xhat)(r, c);
      }
      mean_dh *= inv_m;
      mean_dh_h *= inv_m;
      for (std::size_t c = 0; c < m; ++c) {
        const double dh = g(r, c) * gv[c];
        ga(r, c) += (*inv_std)[r] * (dh - mean_dh - (*xhat)(r, c) * mean_dh_h);
      }
    }
  });
}

Var row_l2_normalize(Var a, double eps) {
  const Tensor& x = a.value();
  const std::size_t n = x.rows();
  auto inv_norm = std::make_shared<std::vector<double>>(n);
  Tensor out = x;
  for (std::size_t r = 0; r < n; ++r) {
    double s = 0.0;
    for (double v : x.row(r)) s += v * v;
    const double in = 1.0 / std::sqrt(s + eps);
    (*inv_norm)[r] = in;
    for (double& v : out.row(r)) v *= in;
  }
  const std::size_t ia = a.id();
  return a.tape()->push(std::move(out), [ia, inv_norm](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_ref(self);
    const Tensor& y = t.value(self);
    Tensor& ga = t.grad_ref(ia);
    // d(x/s) = (g - y <g, y>) / s   with s = sqrt(|x|^2 + eps)
    for (std::size_t r = 0; r < g.rows(); ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < g.cols(); ++c) dot += g(r, c) * y(r, c);
      for (std::size_t c = 0; c < g.cols(); ++c) {
        ga(r, c) += (g(r, c) - y(r, c) * dot) * (*inv_norm)[r];
      }
    }
  });
}

Var gather_rows(Var a, std::vector<std::size_t> index) {
  const Tensor& x = a.value();
  Tensor out(index.size(), x.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= x.rows()) {
      throw DimensionError("gather_rows: index " + std::to_string(index[i]) + " out of range for " +
                           to_string(x.shape()));
    }
    std::copy_n(x.row(index[i]).begin(), x.cols(), out.row(i).begin());
  }
  const std::size_t ia = a.id();
  return a.tape()->push(std::move(out), [ia, index = std::move(index)](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_ref(self);
    Tensor& ga = t.grad_ref(ia);
    for (std::size_t i = 0; i < index.size(); ++i) {
      auto dst = ga.row(index[i]);
      auto src = g.row(i);
      for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
    }
  });
}

Var scatter_add_rows(std::size_t target_rows, std::vector<std::size_t> index, Var a) {
  const Tensor& x = a.value();
  if (index.size() != x.rows()) {
    throw DimensionError("scatter_add_rows: " + std::to_string(index.size()) + " indices for input " +
                         to_string(x.shape()));
  }
  Tensor out(target_rows, x.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= target_rows) {
      throw DimensionError("scatter_add_rows: index " + std::to_string(index[i]) +
                           " out of range for " + std::to_string(target_rows) + " rows");
    }
    auto dst = out.row(index[i]);
    auto src = x.row(i);
    for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
  }
  const std::size_t ia = a.id();
  return a.tape()->push(std::move(out), [ia, index = std::move(index)](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_ref(self);
    Tensor& ga = t.grad_ref(ia);
    for (std::size_t i = 0; i < index.size(); ++i) {
      auto dst = ga.row(i);
      auto src = g.row(index[i]);
      for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
    }
  });
}

Var scale(Var a, double c) {
  Tensor out = a.value();
  for (double& v : out.values()) v *= c;
  const std::size_t ia = a.id();
  return a.tape()->push(std::move(out), [ia, c](Tape& t, std::size_t self) {
    t.grad_ref(ia).add_inplace(t.grad_ref(self), c);
  });
}

Var add_scalar(Var a, double c) {
  Tensor out = a.value();
  for (double& v : out.values()) v += c;
  const std::size_t ia = a.id();
  return a.tape()->push(std::move(out), [ia](Tape& t, std::size_t self) {
    t.grad_ref(ia).add_inplace(t.grad_ref(self));
  });
}

Var reshape(Var a, std::size_t rows, std::size_t cols) {
  if (rows * cols != a.value().size()) {
    shape_error("reshape", a.shape(), Shape{rows, cols});
  }
  const Tensor& x = a.value();
  Tensor out(rows, cols, std::vector<double>(x.values().begin(), x.values().end()));
  const std::size_t ia = a.id();
  return a.tape()->push(std::move(out), [ia](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_ref(self);
    Tensor& ga = t.grad_ref(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Var relational_aggregate(Var z, Var rel_vectors, std::shared_ptr<const EdgeArrays> edges) {
  Tape& tape = same_tape("relational_aggregate", z, rel_vectors);
  if (z.cols() != rel_vectors.cols()) {
    shape_error("relational_aggregate", z.shape(), rel_vectors.shape());
  }
  const Tensor& zv = z.value();
  const Tensor& rv = rel_vectors.value();
  const std::size_t n = zv.rows(), d = zv.cols(), nr = rv.rows();
  const EdgeArrays& e = *edges;
  Tensor out(n, d);
  for (std::size_t k = 0; k < e.size(); ++k) {
    const auto s = static_cast<std::size_t>(e.src[k]);
    const auto r = static_cast<std::size_t>(e.rel[k]);
    const auto t = static_cast<std::size_t>(e.dst[k]);
    if (s >= n || t >= n || r >= nr) {
      throw DimensionError("relational_aggregate: edge " + std::to_string(k) +
                           " out of range for z " + to_string(zv.shape()) + " and relations " +
                           to_string(rv.shape()));
    }
    const double* zs = zv.data() + s * d;
    const double* rr = rv.data() + r * d;
    double* o = out.data() + t * d;
    for (std::size_t c = 0; c < d; ++c) o[c] += zs[c] * rr[c];
  }
  const std::size_t iz = z.id(), ir = rel_vectors.id();
  return tape.push(std::move(out), [iz, ir, edges = std::move(edges), d](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_ref(self);
    const Tensor& zv = t.value(iz);
    const Tensor& rv = t.value(ir);
    Tensor& gz = t.grad_ref(iz);
    Tensor& gr = t.grad_ref(ir);
    const EdgeArrays& e = *edges;
    for (std::size_t k = 0; k < e.size(); ++k) {
      const auto s = static_cast<std::size_t>(e.src[k]);
      const auto r = static_cast<std::size_t>(e.rel[k]);
      const auto tt = static_cast<std::size_t>(e.dst[k]);
      const double* gt = g.data() + tt * d;
      const double* zs = zv.data() + s * d;
      const double* rr = rv.data() + r * d;
      double* gzs = gz.data() + s * d;
      double* grr = gr.data() + r * d;
      for (std::size_t c = 0; c < d; ++c) {
        gzs[c] += gt[c] * rr[c];
        grr[c] += gt[c] * zs[c];
      }
    }
  });
}

// ---------------------------------------------------------------------------

GradCheckReport grad_check(const std::function<double(bool)>& closure,
                           std::span<Parameter* const> params, const GradCheckOptions& options) {
  const double first = closure(false);
  const double second = closure(false);
  if (first != second) {
    throw DeterminismError("grad_check: closure returned " + std::to_string(first) + " then " +
                           std::to_string(second));
  }
  for (Parameter* p : params) p->zero_grad();
  closure(true);
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (Parameter* p : params) analytic.push_back(p->grad);

  GradCheckReport report;
  report.tolerance = options.tolerance;
  report.passed = true;
  const double h = options.step;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter& p = *params[pi];
    GradCheckEntry entry;
    entry.name = p.name;
    entry.count = p.value.size();
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double saved = p.value[i];
      p.value[i] = saved + h;
      const double plus = closure(false);
      p.value[i] = saved - h;
      const double minus = closure(false);
      p.value[i] = saved;
      const double numeric = (plus - minus) / (2.0 * h);
      const double a = analytic[pi][i];
      const double err = std::abs(a - numeric);
      const double denom = std::max({std::abs(a), std::abs(numeric), options.floor});
      entry.max_abs_error = std::max(entry.max_abs_error, err);
      entry.max_rel_error = std::max(entry.max_rel_error, err / denom);
    }
    entry.passed = entry.max_rel_error <= options.tolerance;
    report.passed = report.passed && entry.passed;
    report.worst_rel_error = std::max(report.worst_rel_error, entry.max_rel_error);
    report.entries.push_back(std::move(entry));
  }
  for (Parameter* p : params) p->zero_grad();
  return report;
}

}  // namespace kgf
