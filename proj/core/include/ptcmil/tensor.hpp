#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

namespace ptcmil {

class Graph;

namespace detail {

struct TensorData {
  std::vector<int> shape;      // {rows, cols}; scalars are {1, 1}
  std::vector<double> value;   // dense row-major
  std::vector<double> grad;    // empty until first accumulation
  bool requires_grad = false;
  std::string name;            // nonempty for registered leaf parameters
};

Graph* active_graph();

}  // namespace detail

// Dense rank-2 tensor handle. Copies share storage; vectors are 1xD rows and
// scalars 1x1. Values are immutable by convention once a tensor has entered a
// graph; gradient buffers are the only mutable state during backward.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(int rows, int cols);
  static Tensor full(int rows, int cols, double v);
  static Tensor from_values(int rows, int cols, std::vector<double> vals);
  static Tensor row(std::vector<double> vals);
  static Tensor scalar(double v);
  static Tensor identity(int n);
  // Trainable leaf with a registry name.
  static Tensor leaf(std::string name, int rows, int cols, std::vector<double> vals);

  bool defined() const { return data_ != nullptr; }
  int rows() const { return data_->shape[0]; }
  int cols() const { return data_->shape[1]; }
  std::size_t numel() const { return data_->value.size(); }
  const std::vector<int>& shape() const { return data_->shape; }
  std::string shape_str() const;

  double at(int i, int j) const { return data_->value[static_cast<std::size_t>(i) * cols() + j]; }
  double& at(int i, int j) { return data_->value[static_cast<std::size_t>(i) * cols() + j]; }
  double item() const;  // requires numel() == 1

  const std::vector<double>& values() const { return data_->value; }
  std::vector<double>& values() { return data_->value; }

  bool requires_grad() const { return data_->requires_grad; }
  Tensor& set_requires_grad(bool b) {
    data_->requires_grad = b;
    return *this;
  }
  const std::string& name() const { return data_->name; }

  // Gradient buffer, allocated to zeros on first touch.
  std::vector<double>& grad();
  bool has_grad() const { return !data_->grad.empty(); }
  Tensor grad_tensor() const;  // copy of the gradient with this tensor's shape
  void zero_grad();

  // Value copy detached from any graph.
  Tensor detach() const;

  bool same_storage(const Tensor& other) const { return data_ == other.data_; }
  const detail::TensorData* id() const { return data_.get(); }

 private:
  std::shared_ptr<detail::TensorData> data_;
  explicit Tensor(std::shared_ptr<detail::TensorData> d) : data_(std::move(d)) {}
  friend class Graph;
};

// Reverse-mode tape. Nodes are recorded in construction order while a
// GraphScope is active; backward replays them once, in reverse.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  std::size_t node_count() const { return nodes_.size(); }
  const std::vector<Tensor>& leaves() const { return leaves_; }
  bool has_leaf(const Tensor& t) const;

  // Seeds d(loss)=1 and sweeps the tape in reverse construction order,
  // accumulating additively into every requires_grad leaf reached. Returns
  // the gradients of named leaves; unnamed leaves are still populated via
  // Tensor::grad(). Leaves not on the path from the loss keep zero gradients.
  std::map<std::string, Tensor> backward(const Tensor& loss);

  void record(const char* op, std::vector<Tensor> inputs, Tensor output,
              std::function<void(const std::vector<Tensor>&, const Tensor&)> vjp);

 private:
  struct Node {
    const char* op;
    std::vector<Tensor> inputs;
    Tensor output;
    std::function<void(const std::vector<Tensor>&, const Tensor&)> vjp;
  };
  std::vector<Node> nodes_;
  std::vector<Tensor> leaves_;
  std::unordered_set<const void*> produced_;
  std::unordered_set<const void*> leaf_ids_;
};

// Activates a graph for recording on this thread for the scope's lifetime.
class GraphScope {
 public:
  explicit GraphScope(Graph& g);
  ~GraphScope();
  GraphScope(const GraphScope&) = delete;
  GraphScope& operator=(const GraphScope&) = delete;

 private:
  Graph* prev_;
};

// ---- primitive kernel set -------------------------------------------------
// Every primitive computes its forward value eagerly and, when a graph is
// active and any input requires grad, records a node with the exact
// vector-Jacobian product. Shape violations throw ShapeError naming the
// primitive and both shapes.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);      // elementwise
Tensor scale(const Tensor& a, double s);
Tensor affine(const Tensor& a, double m, double c);  // m*x + c elementwise
Tensor add_row(const Tensor& a, const Tensor& bias_row);  // bias_row is 1 x cols

Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor gelu(const Tensor& a);      // exact erf form
Tensor softplus(const Tensor& a);  // log(1 + e^x), overflow-safe

Tensor row_softmax(const Tensor& a);  // max-subtracted, rows sum to 1
Tensor sum_all(const Tensor& a);      // 1x1
Tensor mean_all(const Tensor& a);     // 1x1
Tensor column_mean(const Tensor& a);  // mean over rows -> 1 x cols

Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor gather_rows(const Tensor& a, const std::vector<int>& indices);
Tensor slice_cols(const Tensor& a, int start, int len);

// Per-row normalization with learnable scale/shift (gamma, beta are 1 x cols).
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

// sqrt(sum x^2). The VJP guards the nondifferentiable point at zero by
// emitting a zero subgradient there.
Tensor frobenius_norm(const Tensor& a);

// Softmax cross-entropy from a 1xK logit row; grad is softmax - onehot.
Tensor cross_entropy_logits(const Tensor& logits, int target);

}  // namespace ptcmil
