#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "mind/errors.hpp"

namespace mind {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& s);
std::string shape_str(const Shape& s);

// Persistent leaf storage. Parameters live here between steps; a graph
// leases them per forward pass and deposits gradients back on backward().
struct Variable {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;

  Variable() = default;
  Variable(Shape s, std::vector<double> v);
  static Variable zeros(Shape s);

  std::size_t size() const { return value.size(); }
  void zero_grad();
};

class Graph;

// Lightweight handle: a node id within one computation graph.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Graph* g, std::size_t id) : graph_(g), id_(id) {}

  Graph* graph() const { return graph_; }
  std::size_t id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;
  std::size_t rows() const;  // rank-2 only
  std::size_t cols() const;  // rank-2 only
  const std::vector<double>& value() const;
  const std::vector<double>& grad() const;
  double scalar() const;  // single-element tensors

 private:
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

// Define-by-run computation graph. Nodes are appended in topological order;
// backward() walks them in reverse exactly once, accumulating additively
// across fan-out, then deposits gradients into leased Variables.
class Graph {
 public:
  struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;   // zero until backward()
    bool needs_grad = false;    // any Variable upstream
    Variable* var = nullptr;    // set for leased leaves
    std::function<void()> backward;
  };

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Detached data: never accumulates gradient.
  Tensor constant(Shape shape, std::vector<double> value);
  Tensor full(Shape shape, double fill);
  Tensor scalar(double v);

  // Trainable leaf. Leasing the same Variable twice returns the same node,
  // so shared parameters accumulate fan-out gradients correctly.
  Tensor leaf(Variable& v);

  // Reverse pass from a scalar loss. Single-shot per graph.
  void backward(const Tensor& loss);

  std::size_t node_count() const { return nodes_.size(); }
  Node& node(std::size_t id) { return nodes_[id]; }
  const Node& node(std::size_t id) const { return nodes_[id]; }

  // Used by op implementations.
  Tensor emplace(Shape shape, std::vector<double> value, bool needs_grad);

 private:
  std::deque<Node> nodes_;  // deque: stable addresses for backward captures
  std::unordered_map<const Variable*, std::size_t> leased_;
  bool backward_done_ = false;
};

// ---- differentiable primitives -------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor div(const Tensor& a, const Tensor& b);  // elementwise
Tensor scalar_mul(const Tensor& a, double c);
Tensor scalar_add(const Tensor& a, double c);

// x[n x d] + bias[d], broadcast across rows.
Tensor add_row_bias(const Tensor& x, const Tensor& bias);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Concatenate along the feature axis: [n x d1] ++ [n x d2] ... -> [n x sum].
Tensor concat_cols(std::span<const Tensor> parts);
Tensor concat_cols(std::initializer_list<Tensor> parts);

// y[r, :] = x[index[r], :]; backward scatter-adds.
Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& index);

Tensor sum(const Tensor& a);      // scalar
Tensor mean(const Tensor& a);     // scalar
Tensor col_sum(const Tensor& a);  // [n x d] -> [1 x d]
Tensor sum_sq(const Tensor& a);   // squared L2 norm of all entries, scalar
Tensor trace(const Tensor& a);    // square matrices
Tensor diag_part(const Tensor& a);  // [d x d] -> [d]

Tensor gelu(const Tensor& a);      // exact erf form
Tensor softplus(const Tensor& a);  // stable: max(x,0) + log1p(exp(-|x|))
Tensor sqrt_elem(const Tensor& a);
Tensor log_elem(const Tensor& a);
Tensor softmax_rows(const Tensor& a);
Tensor log_softmax_rows(const Tensor& a);

// Identity forward; backward multiplies the incoming gradient by -scale.
Tensor grad_reverse(const Tensor& a, double scale = 1.0);

// Column mean-centering over the batch dimension. Requires n >= 2.
Tensor batch_standardize(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

}  // namespace mind
