#include "mind/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace mind {

std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << " x ";
    os << s[i];
  }
  os << "]";
  return os.str();
}

Variable::Variable(Shape s, std::vector<double> v)
    : shape(std::move(s)), value(std::move(v)), grad(value.size(), 0.0) {
  if (numel(shape) != value.size())
    throw ShapeError("variable data length " + std::to_string(value.size()) +
                     " does not match shape " + shape_str(shape));
}

Variable Variable::zeros(Shape s) {
  std::size_t n = numel(s);
  return Variable(std::move(s), std::vector<double>(n, 0.0));
}

void Variable::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

// ---- Tensor accessors ------------------------------------------------------

namespace {

const Graph::Node& node_of(const Tensor& t) {
  return t.graph()->node(t.id());
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2)
    throw RankError(std::string(op) + " requires a rank-2 tensor, got shape " +
                    shape_str(t.shape()));
}

void require_same_graph(const Tensor& a, const Tensor& b) {
  if (a.graph() != b.graph())
    throw Error("operands belong to different graphs");
}

}  // namespace

const Shape& Tensor::shape() const { return node_of(*this).shape; }
std::size_t Tensor::size() const { return node_of(*this).value.size(); }

std::size_t Tensor::rows() const {
  require_rank2(*this, "rows()");
  return shape()[0];
}

std::size_t Tensor::cols() const {
  require_rank2(*this, "cols()");
  return shape()[1];
}

const std::vector<double>& Tensor::value() const { return node_of(*this).value; }
const std::vector<double>& Tensor::grad() const { return node_of(*this).grad; }

double Tensor::scalar() const {
  if (size() != 1)
    throw RankError("scalar() on tensor of shape " + shape_str(shape()));
  return value()[0];
}

// ---- Graph -----------------------------------------------------------------

Tensor Graph::emplace(Shape shape, std::vector<double> value, bool needs_grad) {
  if (numel(shape) != value.size())
    throw ShapeError("node data length " + std::to_string(value.size()) +
                     " does not match shape " + shape_str(shape));
  Node n;
  n.shape = std::move(shape);
  n.grad.assign(value.size(), 0.0);
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  nodes_.push_back(std::move(n));
  return Tensor(this, nodes_.size() - 1);
}

Tensor Graph::constant(Shape shape, std::vector<double> value) {
  return emplace(std::move(shape), std::move(value), false);
}

Tensor Graph::full(Shape shape, double fill) {
  std::size_t n = numel(shape);
  return constant(std::move(shape), std::vector<double>(n, fill));
}

Tensor Graph::scalar(double v) { return constant({1}, {v}); }

Tensor Graph::leaf(Variable& v) {
  auto it = leased_.find(&v);
  if (it != leased_.end()) return Tensor(this, it->second);
  Tensor t = emplace(v.shape, v.value, true);
  node(t.id()).var = &v;
  leased_.emplace(&v, t.id());
  return t;
}

void Graph::backward(const Tensor& loss) {
  if (loss.graph() != this) throw Error("loss tensor belongs to another graph");
  if (backward_done_) throw Error("backward() already run on this graph");
  backward_done_ = true;
  Node& l = nodes_[loss.id()];
  if (l.value.size() != 1)
    throw RankError("backward() requires a scalar loss, got shape " +
                    shape_str(l.shape));
  l.grad[0] = 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.needs_grad && n.backward) n.backward();
  }
  for (auto& [var, id] : leased_) {
    Node& n = nodes_[id];
    std::vector<double>& g = n.var->grad;
    for (std::size_t k = 0; k < g.size(); ++k) g[k] += n.grad[k];
  }
}

// ---- op helpers ------------------------------------------------------------

namespace {

struct Wired {
  Graph* g;
  Graph::Node* out;
  Graph::Node* a;
  Graph::Node* b;
  Tensor t;
};

Wired wire(const Tensor& a, Shape shape, std::vector<double> value) {
  Graph* g = a.graph();
  bool ng = g->node(a.id()).needs_grad;
  Tensor t = g->emplace(std::move(shape), std::move(value), ng);
  return {g, &g->node(t.id()), &g->node(a.id()), nullptr, t};
}

Wired wire2(const Tensor& a, const Tensor& b, Shape shape,
            std::vector<double> value) {
  require_same_graph(a, b);
  Graph* g = a.graph();
  bool ng = g->node(a.id()).needs_grad || g->node(b.id()).needs_grad;
  Tensor t = g->emplace(std::move(shape), std::move(value), ng);
  return {g, &g->node(t.id()), &g->node(a.id()), &g->node(b.id()), t};
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

// C[n x m] += A[n x k] * B[k x m]; ikj order keeps inner loops contiguous.
void matmul_acc(const double* A, const double* B, double* C, std::size_t n,
                std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* a_row = A + i * k;
    double* c_row = C + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      double a = a_row[p];
      const double* b_row = B + p * m;
      for (std::size_t j = 0; j < m; ++j) c_row[j] += a * b_row[j];
    }
  }
}

// C[n x m] += A[n x k] * B^T with B[m x k]; dot products of contiguous rows.
void matmul_bt_acc(const double* A, const double* B, double* C, std::size_t n,
                   std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* a_row = A + i * k;
    double* c_row = C + i * m;
    for (std::size_t j = 0; j < m; ++j) {
      const double* b_row = B + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a_row[p] * b_row[p];
      c_row[j] += acc;
    }
  }
}

constexpr double kInvSqrt2 = std::numbers::sqrt2 / 2.0;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;  // 1/sqrt(2*pi)

double norm_cdf(double x) { return 0.5 * std::erfc(-x * kInvSqrt2); }
double norm_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

double softplus_stable(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double sigmoid_stable(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

// ---- elementwise binary ----------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  const auto& av = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  Wired w = wire2(a, b, a.shape(), std::move(out));
  if (w.out->needs_grad)
    w.out->backward = [w] {
      const auto& g = w.out->grad;
      if (w.a->needs_grad)
        for (std::size_t i = 0; i < g.size(); ++i) w.a->grad[i] += g[i];
      if (w.b->needs_grad)
        for (std::size_t i = 0; i < g.size(); ++i) w.b->grad[i] += g[i];
    };
  return w.t;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  const auto& av = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  Wired w = wire2(a, b, a.shape(), std::move(out));
  if (w.out->needs_grad)
    w.out->backward = [w] {
      const auto& g = w.out->grad;
      if (w.a->needs_grad)
        for (std::size_t i = 0; i < g.size(); ++i) w.a->grad[i] += g[i];
      if (w.b->needs_grad)
        for (std::size_t i = 0; i < g.size(); ++i) w.b->grad[i] -= g[i];
    };
  return w.t;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  const auto& av = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  Wired w = wire2(a, b, a.shape(), std::move(out));
  if (w.out->needs_grad)
    w.out->backward = [w] {
      const auto& g = w.out->grad;
      if (w.a->needs_grad)
        for (std::size_t i = 0; i < g.size(); ++i)
          w.a->grad[i] += g[i] * w.b->value[i];
      if (w.b->needs_grad)
        for (std::size_t i = 0; i < g.size(); ++i)
          w.b->grad[i] += g[i] * w.a->value[i];
    };
  return w.t;
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "div");
  std::vector<double> out(a.size());
  const auto& av = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] / bv[i];
  Wired w = wire2(a, b, a.shape(), std::move(out));
  if (w.out->needs_grad)
    w.out->backward = [w] {
      const auto& g = w.out->grad;
      if (w.a->needs_grad)
        for (std::size_t i = 0; i < g.size(); ++i)
          w.a->grad[i] += g[i] / w.b->value[i];
      if (w.b->needs_grad)
        for (std::size_t i = 0; i < g.size(); ++i) {
          double bb = w.b->value[i];
          w.b->grad[i] -= g[i] * w.a->value[i] / (bb * bb);
        }
    };
  return w.t;
}

Tensor scalar_mul(const Tensor& a, double c) {
  std::vector<double> out(a.size());
  const auto& av = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * c;
  Wired w = wire(a, a.shape(), std::move(out));
  if (w.out->needs_grad)
    w.out->backward = [w, c] {
      const auto& g = w.out->grad;
      for (std::size_t i = 0; i < g.size(); ++i) w.a->grad[i] += g[i] * c;
    };
  return w.t;
}

Tensor scalar_add(const Tensor& a, double c) {
  std::vector<double> out(a.size());
  const auto& av = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + c;
  Wired w = wire(a, a.shape(), std::move(out));
  if (w.out->needs_grad)
    w.out->backward = [w] {
      const auto& g = w.out->grad;
      for (std::size_t i = 0; i < g.size(); ++i) w.a->grad[i] += g[i];
    };
  return w.t;
}

Tensor add_row_bias(const Tensor& x, const Tensor& bias) {
  require_rank2(x, "add_row_bias");
  if (bias.rank() != 1 || bias.size() != x.cols())
    throw ShapeError("add_row_bias: bias shape " + shape_str(bias.shape()) +
                     " does not match input " + shape_str(x.shape()));
  std::size_t n = x.rows(), d = x.cols();
  std::vector<double> out(n * d);
  const auto& xv = x.value();
  const auto& bv = bias.value();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = xv[i * d + j] + bv[j];
  Wired w = wire2(x, bias, x.shape(), std::move(out));
  if (w.out->needs_grad)
    w.out->backward = [w, n, d] {
      const auto& g = w.out->grad;
      if (w.a->needs_grad)
        for (std::size_t i = 0; i < n * d; ++i) w.a->grad[i] += g[i];
      if (w.b->needs_grad)
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < d; ++j) w.b->grad[j] += g[i * d + j];
    };
  return w.t;
}

// ---- linear algebra --------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  if (a.cols() != b.rows())
    throw ShapeError("matmul: inner dimensions disagree, " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  std::vector<double> out(n * m, 0.0);
  matmul_acc(a.value().data(), b.value().data(), out.data(), n, k, m);
  Wired w = wire2(a, b, {n, m}, std::move(out));
  if (w.out->needs_grad)
    w.out->backward = [w, n, k, m] {
      const double* g = w.out->grad.data();
      // dL/dA = g . B^T, dL/dB = A^T . g
      if (w.a->needs_grad)
        matmul_bt_acc(g, w.b->value.data(), w.a->grad.data(), n, m, k);
      if (w.b->needs_grad) {
        const double* A = w.a->value.data();
        double* dB = w.b->grad.data();
        for (std::size_t i = 0; i < n; ++i) {
          const double* g_row = g + i * m;
          for (std::size_t p = 0; p < k; ++p) {
            double av = A[i * k + p];
            double* db_row = dB + p * m;
            for (std::size_t j = 0; j < m; ++j) db_row[j] += av * g_row[j];
          }
        }
      }
    };
  return w.t;
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  std::size_t n = a.rows(), m = a.cols();
  std::vector<double> out(n * m);
  const auto& av = a.value();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[j * n + i] = av[i * m + j];
  Wired w = wire(a, {m, n}, std::move(out));
  if (w.out->needs_grad)
    w.out->backward = [w, n, m] {
      const auto& g = w.out->grad;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j)
          w.a->grad[i * m + j] += g[j * n + i];
    };
  return w.t;
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  Graph* g = parts[0].graph();
  std::size_t n = parts[0].rows();
  std::size_t total = 0;
  bool ng = false;
  for (const Tensor& p : parts) {
    require_same_graph(parts[0], p);
    require_rank2(p, "concat_cols");
    if (p.rows() != n)
      throw ShapeError("concat_cols: row counts disagree, " +
                       shape_str(parts[0].shape()) + " vs " +
                       shape_str(p.shape()));
    total += p.cols();
    ng = ng || g->node(p.id()).needs_grad;
  }
  std::vector<double> out(n * total);
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    std::size_t d = p.cols();
    const auto& pv = p.value();
    for (std::size_t i = 0; i < n; ++i)
      std::copy(pv.begin() + i * d, pv.begin() + (i + 1) * d,
                out.begin() + i * total + offset);
    offset += d;
  }
  Tensor t = g->emplace({n, total}, std::move(out), ng);
  if (ng) {
    Graph::Node* on = &g->node(t.id());
    std::vector<Graph::Node*> ins;
    std::vector<std::size_t> widths;
    for (const Tensor& p : parts) {
      ins.push_back(&g->node(p.id()));
      widths.push_back(p.cols());
    }
    on->backward = [on, ins, widths, n, total] {
      const auto& gr = on->grad;
      std::size_t off = 0;
      for (std::size_t k = 0; k < ins.size(); ++k) {
        std::size_t d = widths[k];
        if (ins[k]->needs_grad)
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j)
              ins[k]->grad[i * d + j] += gr[i * total + off + j];
        off += d;
      }
    };
  }
  return t;
}

Tensor concat_cols(std::initializer_list<Tensor> parts) {
  std::vector<Tensor> v(parts);
  return concat_cols(std::span<const Tensor>(v));
}

Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& index) {
  require_rank2(x, "gather_rows");
  std::size_t n = x.rows(), d = x.cols();
  for (std::size_t r : index)
    if (r >= n)
      throw ShapeError("gather_rows: index " + std::to_string(r) +
                       " out of range for " + shape_str(x.shape()));
  std::vector<double> out(index.size() * d);
  const auto& xv = x.value();
  for (std::size_t i = 0; i < index.size(); ++i)
    std::copy(xv.begin() + index[i] * d, xv.begin() + (index[i] + 1) * d,
              out.begin() + i * d);
  Wired w = wire(x, {index.size(), d}, std::move(out));
  if (w.out->needs_grad)
    w.out->backward = [w, index, d] {
      const auto& g = w.out->grad;
      for (std::size_t i = 0; i < index.size(); ++i)
        for (std::size_t j = 0; j < d; ++j)
          w.a->grad[index[i] * d + j] += g[i * d + j];
    };
  return w.t;
}

// ---- reductions ------------------------------------------------------------

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.value()) s += v;
  Wired w = wire(a, {1}, {s});
  if (w.out->needs_grad)
    w.out->backward = [w] {
      double g = w.out->grad[0];
      for (auto& x : w.a->grad) x += g;
    };
  return w.t;
}

Tensor mean(const Tensor& a) {
  double s = 0.0;
  for (double v : a.value()) s += v;
  double inv = 1.0 / static_cast<double>(a.size());
  Wired w = wire(a, {1}, {s * inv});
  if (w.out->needs_grad)
    w.out->backward = [w, inv] {
      double g = w.out->grad[0] * inv;
      for (auto& x : w.a->grad) x += g;
    };
  return w.t;
}

Tensor col_sum(const Tensor& a) {
  require_rank2(a, "col_sum");
  std::size_t n = a.rows(), d = a.cols();
  std::vector<double> out(d, 0.0);
  const auto& av = a.value();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[j] += av[i * d + j];
  Wired w = wire(a, {1, d}, std::move(out));
  if (w.out->needs_grad)
    w.out->backward = [w, n, d] {
      const auto& g = w.out->grad;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) w.a->grad[i * d + j] += g[j];
    };
  return w.t;
}

Tensor sum_sq(const Tensor& a) {
  double s = 0.0;
  for (double v : a.value()) s += v * v;
  Wired w = wire(a, {1}, {s});
  if (w.out->needs_grad)
    w.out->backward = [w] {
      double g = 2.0 * w.out->grad[0];
      for (std::size_t i = 0; i < w.a->value.size(); ++i)
        w.a->grad[i] += g * w.a->value[i];
    };
  return w.t;
}

Tensor trace(const Tensor& a) {
  require_rank2(a, "trace");
  if (a.rows() != a.cols())
    throw ShapeError("trace: matrix is not square, " + shape_str(a.shape()));
  std::size_t n = a.rows();
  double s = 0.0;
  const auto& av = a.value();
  for (std::size_t i = 0; i < n; ++i) s += av[i * n + i];
  Wired w = wire(a, {1}, {s});
  if (w.out->needs_grad)
    w.out->backward = [w, n] {
      double g = w.out->grad[0];
      for (std::size_t i = 0; i < n; ++i) w.a->grad[i * n + i] += g;
    };
  return w.t;
}

Tensor diag_part(const Tensor& a) {
  require_rank2(a, "diag_part");
  if (a.rows() != a.cols())
    throw ShapeError("diag_part: matrix is not square, " +
                     shape_str(a.shape()));
  std::size_t n = a.rows();
  std::vector<double> out(n);
  const auto& av = a.value();
  for (std::size_t i = 0; i < n; ++i) out[i] = av[i * n + i];
  Wired w = wire(a, {n}, std::move(out));
  if (w.out->needs_grad)
    w.out->backward = [w, n] {
      const auto& g = w.out->grad;
      for (std::size_t i = 0; i < n; ++i) w.a->grad[i * n + i] += g[i];
    };
  return w.t;
}

// ---- elementwise nonlinearities ---------------------------------------------

Tensor gelu(const Tensor& a) {
  std::vector<double> out(a.size());
  const auto& av = a.value();
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = av[i] * norm_cdf(av[i]);
  Wired w = wire(a, a.shape(), std::move(out));
  if (w.out->needs_grad)
    w.out->backward = [w] {
      const auto& g = w.out->grad;
      for (std::size_t i = 0; i < g.size(); ++i) {
        double x = w.a->value[i];
        w.a->grad[i] += g[i] * (norm_cdf(x) + x * norm_pdf(x));
      }
    };
  return w.t;
}

Tensor softplus(const Tensor& a) {
  std::vector<double> out(a.size());
  const auto& av = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = softplus_stable(av[i]);
  Wired w = wire(a, a.shape(), std::move(out));
  if (w.out->needs_grad)
    w.out->backward = [w] {
      const auto& g = w.out->grad;
      for (std::size_t i = 0; i < g.size(); ++i)
        w.a->grad[i] += g[i] * sigmoid_stable(w.a->value[i]);
    };
  return w.t;
}

Tensor sqrt_elem(const Tensor& a) {
  std::vector<double> out(a.size());
  const auto& av = a.value();
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = std::sqrt(std::max(av[i], 0.0));
  Wired w = wire(a, a.shape(), std::move(out));
  if (w.out->needs_grad)
    w.out->backward = [w] {
      const auto& g = w.out->grad;
      for (std::size_t i = 0; i < g.size(); ++i) {
        double y = w.out->value[i];
        // subgradient 0 at the origin keeps degenerate columns inert
        if (y > 0.0) w.a->grad[i] += g[i] * 0.5 / y;
      }
    };
  return w.t;
}

Tensor log_elem(const Tensor& a) {
  std::vector<double> out(a.size());
  const auto& av = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(av[i]);
  Wired w = wire(a, a.shape(), std::move(out));
  if (w.out->needs_grad)
    w.out->backward = [w] {
      const auto& g = w.out->grad;
      for (std::size_t i = 0; i < g.size(); ++i)
        w.a->grad[i] += g[i] / w.a->value[i];
    };
  return w.t;
}

Tensor softmax_rows(const Tensor& a) {
  require_rank2(a, "softmax_rows");
  std::size_t n = a.rows(), d = a.cols();
  std::vector<double> out(n * d);
  const auto& av = a.value();
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = av.data() + i * d;
    double mx = *std::max_element(row, row + d);
    double z = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      out[i * d + j] = std::exp(row[j] - mx);
      z += out[i * d + j];
    }
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] /= z;
  }
  Wired w = wire(a, a.shape(), std::move(out));
  if (w.out->needs_grad)
    w.out->backward = [w, n, d] {
      const auto& g = w.out->grad;
      const auto& s = w.out->value;
      for (std::size_t i = 0; i < n; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < d; ++j) dot += g[i * d + j] * s[i * d + j];
        for (std::size_t j = 0; j < d; ++j)
          w.a->grad[i * d + j] += s[i * d + j] * (g[i * d + j] - dot);
      }
    };
  return w.t;
}

Tensor log_softmax_rows(const Tensor& a) {
  require_rank2(a, "log_softmax_rows");
  std::size_t n = a.rows(), d = a.cols();
  std::vector<double> out(n * d);
  const auto& av = a.value();
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = av.data() + i * d;
    double mx = *std::max_element(row, row + d);
    double z = 0.0;
    for (std::size_t j = 0; j < d; ++j) z += std::exp(row[j] - mx);
    double lz = mx + std::log(z);
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = row[j] - lz;
  }
  Wired w = wire(a, a.shape(), std::move(out));
  if (w.out->needs_grad)
    w.out->backward = [w, n, d] {
      const auto& g = w.out->grad;
      const auto& ls = w.out->value;
      for (std::size_t i = 0; i < n; ++i) {
        double gsum = 0.0;
        for (std::size_t j = 0; j < d; ++j) gsum += g[i * d + j];
        for (std::size_t j = 0; j < d; ++j)
          w.a->grad[i * d + j] +=
              g[i * d + j] - std::exp(ls[i * d + j]) * gsum;
      }
    };
  return w.t;
}

Tensor grad_reverse(const Tensor& a, double scale) {
  if (!(scale > 0.0))
    throw ConfigError("grad_reverse: scale must be positive, got " +
                      std::to_string(scale));
  Wired w = wire(a, a.shape(), a.value());
  if (w.out->needs_grad)
    w.out->backward = [w, scale] {
      const auto& g = w.out->grad;
      for (std::size_t i = 0; i < g.size(); ++i)
        w.a->grad[i] -= scale * g[i];
    };
  return w.t;
}

Tensor batch_standardize(const Tensor& a) {
  require_rank2(a, "batch_standardize");
  std::size_t n = a.rows(), d = a.cols();
  if (n < 2)
    throw BatchSizeError("batch_standardize requires n >= 2, got n = " +
                         std::to_string(n));
  std::vector<double> mu(d, 0.0);
  const auto& av = a.value();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) mu[j] += av[i * d + j];
  for (std::size_t j = 0; j < d; ++j) mu[j] /= static_cast<double>(n);
  std::vector<double> out(n * d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = av[i * d + j] - mu[j];
  Wired w = wire(a, a.shape(), std::move(out));
  if (w.out->needs_grad)
    w.out->backward = [w, n, d] {
      const auto& g = w.out->grad;
      std::vector<double> gmu(d, 0.0);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) gmu[j] += g[i * d + j];
      for (std::size_t j = 0; j < d; ++j) gmu[j] /= static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j)
          w.a->grad[i * d + j] += g[i * d + j] - gmu[j];
    };
  return w.t;
}

}  // namespace mind
