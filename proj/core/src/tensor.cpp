#include "ptcmil/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "ptcmil/error.hpp"

namespace ptcmil {

namespace {

thread_local Graph* g_active_graph = nullptr;

bool wants_grad(std::initializer_list<const Tensor*> ins) {
  if (g_active_graph == nullptr) {
    return false;
  }
  for (const Tensor* t : ins) {
    if (t->defined() && t->requires_grad()) {
      return true;
    }
  }
  return false;
}

std::shared_ptr<detail::TensorData> make_data(int rows, int cols, std::vector<double> vals) {
  if (rows < 1 || cols < 1) {
    throw ValueError("Tensor: extents must be positive, got " + std::to_string(rows) + " x " +
                     std::to_string(cols));
  }
  auto d = std::make_shared<detail::TensorData>();
  d->shape = {rows, cols};
  if (vals.empty()) {
    d->value.assign(static_cast<std::size_t>(rows) * cols, 0.0);
  } else {
    if (vals.size() != static_cast<std::size_t>(rows) * cols) {
      throw ValueError("Tensor: " + std::to_string(vals.size()) + " values for shape [" +
                       std::to_string(rows) + " x " + std::to_string(cols) + "]");
    }
    d->value = std::move(vals);
  }
  return d;
}

}  // namespace

namespace detail {
Graph* active_graph() { return g_active_graph; }
}  // namespace detail

// ---- Tensor ---------------------------------------------------------------

Tensor Tensor::zeros(int rows, int cols) { return Tensor(make_data(rows, cols, {})); }

Tensor Tensor::full(int rows, int cols, double v) {
  auto d = make_data(rows, cols, {});
  std::fill(d->value.begin(), d->value.end(), v);
  return Tensor(std::move(d));
}

Tensor Tensor::from_values(int rows, int cols, std::vector<double> vals) {
  return Tensor(make_data(rows, cols, std::move(vals)));
}

Tensor Tensor::row(std::vector<double> vals) {
  const int n = static_cast<int>(vals.size());
  return Tensor(make_data(1, n, std::move(vals)));
}

Tensor Tensor::scalar(double v) { return Tensor(make_data(1, 1, {v})); }

Tensor Tensor::identity(int n) {
  auto d = make_data(n, n, {});
  for (int i = 0; i < n; ++i) {
    d->value[static_cast<std::size_t>(i) * n + i] = 1.0;
  }
  return Tensor(std::move(d));
}

Tensor Tensor::leaf(std::string name, int rows, int cols, std::vector<double> vals) {
  auto d = make_data(rows, cols, std::move(vals));
  d->requires_grad = true;
  d->name = std::move(name);
  return Tensor(std::move(d));
}

std::string Tensor::shape_str() const {
  return "[" + std::to_string(rows()) + " x " + std::to_string(cols()) + "]";
}

double Tensor::item() const {
  if (numel() != 1) {
    throw ValueError("Tensor::item: tensor has shape " + shape_str());
  }
  return data_->value[0];
}

std::vector<double>& Tensor::grad() {
  if (data_->grad.empty()) {
    data_->grad.assign(data_->value.size(), 0.0);
  }
  return data_->grad;
}

Tensor Tensor::grad_tensor() const {
  auto d = make_data(rows(), cols(), {});
  if (!data_->grad.empty()) {
    d->value = data_->grad;
  }
  return Tensor(std::move(d));
}

void Tensor::zero_grad() { data_->grad.assign(data_->value.size(), 0.0); }

Tensor Tensor::detach() const {
  auto d = make_data(rows(), cols(), {});
  d->value = data_->value;
  return Tensor(std::move(d));
}

// ---- Graph ----------------------------------------------------------------

bool Graph::has_leaf(const Tensor& t) const {
  for (const Tensor& l : leaves_) {
    if (l.same_storage(t)) {
      return true;
    }
  }
  return false;
}

void Graph::record(const char* op, std::vector<Tensor> inputs, Tensor output,
                   std::function<void(const std::vector<Tensor>&, const Tensor&)> vjp) {
  for (const Tensor& in : inputs) {
    if (in.defined() && in.requires_grad() && !produced_.count(in.id()) && !leaf_ids_.count(in.id())) {
      leaf_ids_.insert(in.id());
      leaves_.push_back(in);
    }
  }
  produced_.insert(output.id());
  nodes_.push_back(Node{op, std::move(inputs), std::move(output), std::move(vjp)});
}

std::map<std::string, Tensor> Graph::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ValueError("backward: loss must be a defined scalar tensor");
  }
  for (Tensor& l : leaves_) {
    l.grad();  // allocate zeros so off-path leaves report zero gradients
  }
  Tensor seed = loss;
  seed.grad()[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    it->vjp(it->inputs, it->output);
  }
  std::map<std::string, Tensor> grads;
  for (const Tensor& l : leaves_) {
    if (!l.name().empty()) {
      grads.emplace(l.name(), l.grad_tensor());
    }
  }
  return grads;
}

GraphScope::GraphScope(Graph& g) : prev_(g_active_graph) { g_active_graph = &g; }

GraphScope::~GraphScope() { g_active_graph = prev_; }

// ---- op helpers -----------------------------------------------------------

namespace {

[[noreturn]] void shape_fail(const char* op, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

Tensor finish(const char* op, std::vector<Tensor> inputs, Tensor out,
              std::function<void(const std::vector<Tensor>&, const Tensor&)> vjp) {
  out.set_requires_grad(true);
  g_active_graph->record(op, std::move(inputs), out, std::move(vjp));
  return out;
}

// Elementwise unary: df(x, y) is the local derivative given input and output.
template <class F, class DF>
Tensor unary_op(const char* op, const Tensor& a, F f, DF df) {
  std::vector<double> vals(a.numel());
  const auto& x = a.values();
  for (std::size_t i = 0; i < vals.size(); ++i) {
    vals[i] = f(x[i]);
  }
  Tensor out = Tensor::from_values(a.rows(), a.cols(), std::move(vals));
  if (!wants_grad({&a})) {
    return out;
  }
  return finish(op, {a}, out, [df](const std::vector<Tensor>& ins, const Tensor& y) {
    Tensor in = ins[0];
    Tensor yc = y;
    auto& gx = in.grad();
    const auto& gy = yc.grad();
    const auto& xv = in.values();
    const auto& yv = yc.values();
    for (std::size_t i = 0; i < gx.size(); ++i) {
      gx[i] += gy[i] * df(xv[i], yv[i]);
    }
  });
}

}  // namespace

// ---- primitives -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    shape_fail("matmul", a, b);
  }
  const int m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> vals(static_cast<std::size_t>(m) * n, 0.0);
  const auto& av = a.values();
  const auto& bv = b.values();
  for (int i = 0; i < m; ++i) {
    for (int p = 0; p < k; ++p) {
      const double aip = av[static_cast<std::size_t>(i) * k + p];
      const std::size_t brow = static_cast<std::size_t>(p) * n;
      std::size_t orow = static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) {
        vals[orow + j] += aip * bv[brow + j];
      }
    }
  }
  Tensor out = Tensor::from_values(m, n, std::move(vals));
  if (!wants_grad({&a, &b})) {
    return out;
  }
  return finish("matmul", {a, b}, out, [](const std::vector<Tensor>& ins, const Tensor& y) {
    Tensor ta = ins[0], tb = ins[1];
    Tensor yc = y;
    const auto& gy = yc.grad();
    const int m = ta.rows(), k = ta.cols(), n = tb.cols();
    if (ta.requires_grad()) {
      auto& ga = ta.grad();
      const auto& bv = tb.values();
      for (int i = 0; i < m; ++i) {
        for (int p = 0; p < k; ++p) {
          double acc = 0.0;
          const std::size_t grow = static_cast<std::size_t>(i) * n;
          const std::size_t brow = static_cast<std::size_t>(p) * n;
          for (int j = 0; j < n; ++j) {
            acc += gy[grow + j] * bv[brow + j];
          }
          ga[static_cast<std::size_t>(i) * k + p] += acc;
        }
      }
    }
    if (tb.requires_grad()) {
      auto& gb = tb.grad();
      const auto& av = ta.values();
      for (int p = 0; p < k; ++p) {
        for (int i = 0; i < m; ++i) {
          const double aip = av[static_cast<std::size_t>(i) * k + p];
          if (aip == 0.0) {
            continue;
          }
          const std::size_t grow = static_cast<std::size_t>(i) * n;
          const std::size_t brow = static_cast<std::size_t>(p) * n;
          for (int j = 0; j < n; ++j) {
            gb[brow + j] += aip * gy[grow + j];
          }
        }
      }
    }
  });
}

Tensor transpose(const Tensor& a) {
  const int m = a.rows(), n = a.cols();
  std::vector<double> vals(a.numel());
  const auto& av = a.values();
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      vals[static_cast<std::size_t>(j) * m + i] = av[static_cast<std::size_t>(i) * n + j];
    }
  }
  Tensor out = Tensor::from_values(n, m, std::move(vals));
  if (!wants_grad({&a})) {
    return out;
  }
  return finish("transpose", {a}, out, [](const std::vector<Tensor>& ins, const Tensor& y) {
    Tensor in = ins[0];
    Tensor yc = y;
    auto& gx = in.grad();
    const auto& gy = yc.grad();
    const int m = in.rows(), n = in.cols();
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < n; ++j) {
        gx[static_cast<std::size_t>(i) * n + j] += gy[static_cast<std::size_t>(j) * m + i];
      }
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    shape_fail("add", a, b);
  }
  std::vector<double> vals(a.numel());
  for (std::size_t i = 0; i < vals.size(); ++i) {
    vals[i] = a.values()[i] + b.values()[i];
  }
  Tensor out = Tensor::from_values(a.rows(), a.cols(), std::move(vals));
  if (!wants_grad({&a, &b})) {
    return out;
  }
  return finish("add", {a, b}, out, [](const std::vector<Tensor>& ins, const Tensor& y) {
    Tensor yc = y;
    const auto& gy = yc.grad();
    for (int which = 0; which < 2; ++which) {
      Tensor in = ins[which];
      if (!in.requires_grad()) {
        continue;
      }
      auto& g = in.grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        g[i] += gy[i];
      }
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    shape_fail("sub", a, b);
  }
  std::vector<double> vals(a.numel());
  for (std::size_t i = 0; i < vals.size(); ++i) {
    vals[i] = a.values()[i] - b.values()[i];
  }
  Tensor out = Tensor::from_values(a.rows(), a.cols(), std::move(vals));
  if (!wants_grad({&a, &b})) {
    return out;
  }
  return finish("sub", {a, b}, out, [](const std::vector<Tensor>& ins, const Tensor& y) {
    Tensor yc = y;
    const auto& gy = yc.grad();
    Tensor lhs = ins[0], rhs = ins[1];
    if (lhs.requires_grad()) {
      auto& g = lhs.grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        g[i] += gy[i];
      }
    }
    if (rhs.requires_grad()) {
      auto& g = rhs.grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        g[i] -= gy[i];
      }
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    shape_fail("mul", a, b);
  }
  std::vector<double> vals(a.numel());
  for (std::size_t i = 0; i < vals.size(); ++i) {
    vals[i] = a.values()[i] * b.values()[i];
  }
  Tensor out = Tensor::from_values(a.rows(), a.cols(), std::move(vals));
  if (!wants_grad({&a, &b})) {
    return out;
  }
  return finish("mul", {a, b}, out, [](const std::vector<Tensor>& ins, const Tensor& y) {
    Tensor yc = y;
    const auto& gy = yc.grad();
    Tensor lhs = ins[0], rhs = ins[1];
    if (lhs.requires_grad()) {
      auto& g = lhs.grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        g[i] += gy[i] * rhs.values()[i];
      }
    }
    if (rhs.requires_grad()) {
      auto& g = rhs.grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        g[i] += gy[i] * lhs.values()[i];
      }
    }
  });
}

Tensor scale(const Tensor& a, double s) {
  return unary_op(
      "scale", a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Tensor affine(const Tensor& a, double m, double c) {
  return unary_op(
      "affine", a, [m, c](double x) { return m * x + c; }, [m](double, double) { return m; });
}

Tensor add_row(const Tensor& a, const Tensor& bias_row) {
  if (bias_row.rows() != 1 || bias_row.cols() != a.cols()) {
    shape_fail("add_row", a, bias_row);
  }
  const int m = a.rows(), n = a.cols();
  std::vector<double> vals(a.numel());
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      vals[static_cast<std::size_t>(i) * n + j] =
          a.values()[static_cast<std::size_t>(i) * n + j] + bias_row.values()[j];
    }
  }
  Tensor out = Tensor::from_values(m, n, std::move(vals));
  if (!wants_grad({&a, &bias_row})) {
    return out;
  }
  return finish("add_row", {a, bias_row}, out, [](const std::vector<Tensor>& ins, const Tensor& y) {
    Tensor yc = y;
    const auto& gy = yc.grad();
    Tensor base = ins[0], bias = ins[1];
    const int m = base.rows(), n = base.cols();
    if (base.requires_grad()) {
      auto& g = base.grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        g[i] += gy[i];
      }
    }
    if (bias.requires_grad()) {
      auto& g = bias.grad();
      for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
          g[j] += gy[static_cast<std::size_t>(i) * n + j];
        }
      }
    }
  });
}

Tensor exp(const Tensor& a) {
  return unary_op(
      "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary_op(
      "log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor sigmoid(const Tensor& a) {
  return unary_op(
      "sigmoid", a,
      [](double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& a) {
  return unary_op(
      "tanh", a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
}  // namespace

Tensor gelu(const Tensor& a) {
  return unary_op(
      "gelu", a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); },
      [](double x, double) {
        const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
        return cdf + x * pdf;
      });
}

Tensor softplus(const Tensor& a) {
  return unary_op(
      "softplus", a,
      [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); },
      [](double x, double) {
        return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
      });
}

Tensor row_softmax(const Tensor& a) {
  const int m = a.rows(), n = a.cols();
  std::vector<double> vals(a.numel());
  const auto& av = a.values();
  for (int i = 0; i < m; ++i) {
    const std::size_t off = static_cast<std::size_t>(i) * n;
    double mx = av[off];
    for (int j = 1; j < n; ++j) {
      mx = std::max(mx, av[off + j]);
    }
    double denom = 0.0;
    for (int j = 0; j < n; ++j) {
      vals[off + j] = std::exp(av[off + j] - mx);
      denom += vals[off + j];
    }
    for (int j = 0; j < n; ++j) {
      vals[off + j] /= denom;
    }
  }
  Tensor out = Tensor::from_values(m, n, std::move(vals));
  if (!wants_grad({&a})) {
    return out;
  }
  return finish("row_softmax", {a}, out, [](const std::vector<Tensor>& ins, const Tensor& y) {
    Tensor in = ins[0];
    Tensor yc = y;
    auto& gx = in.grad();
    const auto& gy = yc.grad();
    const auto& yv = yc.values();
    const int m = in.rows(), n = in.cols();
    for (int i = 0; i < m; ++i) {
      const std::size_t off = static_cast<std::size_t>(i) * n;
      double dot = 0.0;
      for (int j = 0; j < n; ++j) {
        dot += gy[off + j] * yv[off + j];
      }
      for (int j = 0; j < n; ++j) {
        gx[off + j] += yv[off + j] * (gy[off + j] - dot);
      }
    }
  });
}

Tensor sum_all(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) {
    s += v;
  }
  Tensor out = Tensor::scalar(s);
  if (!wants_grad({&a})) {
    return out;
  }
  return finish("sum_all", {a}, out, [](const std::vector<Tensor>& ins, const Tensor& y) {
    Tensor in = ins[0];
    Tensor yc = y;
    const double g = yc.grad()[0];
    auto& gx = in.grad();
    for (std::size_t i = 0; i < gx.size(); ++i) {
      gx[i] += g;
    }
  });
}

Tensor mean_all(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) {
    s += v;
  }
  const double inv = 1.0 / static_cast<double>(a.numel());
  Tensor out = Tensor::scalar(s * inv);
  if (!wants_grad({&a})) {
    return out;
  }
  return finish("mean_all", {a}, out, [inv](const std::vector<Tensor>& ins, const Tensor& y) {
    Tensor in = ins[0];
    Tensor yc = y;
    const double g = yc.grad()[0] * inv;
    auto& gx = in.grad();
    for (std::size_t i = 0; i < gx.size(); ++i) {
      gx[i] += g;
    }
  });
}

Tensor column_mean(const Tensor& a) {
  const int m = a.rows(), n = a.cols();
  std::vector<double> vals(n, 0.0);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      vals[j] += a.values()[static_cast<std::size_t>(i) * n + j];
    }
  }
  const double inv = 1.0 / static_cast<double>(m);
  for (double& v : vals) {
    v *= inv;
  }
  Tensor out = Tensor::from_values(1, n, std::move(vals));
  if (!wants_grad({&a})) {
    return out;
  }
  return finish("column_mean", {a}, out, [inv](const std::vector<Tensor>& ins, const Tensor& y) {
    Tensor in = ins[0];
    Tensor yc = y;
    const auto& gy = yc.grad();
    auto& gx = in.grad();
    const int m = in.rows(), n = in.cols();
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < n; ++j) {
        gx[static_cast<std::size_t>(i) * n + j] += gy[j] * inv;
      }
    }
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) {
    throw ValueError("concat_rows: no parts");
  }
  const int n = parts[0].cols();
  int m = 0;
  for (const Tensor& p : parts) {
    if (p.cols() != n) {
      shape_fail("concat_rows", parts[0], p);
    }
    m += p.rows();
  }
  std::vector<double> vals;
  vals.reserve(static_cast<std::size_t>(m) * n);
  for (const Tensor& p : parts) {
    vals.insert(vals.end(), p.values().begin(), p.values().end());
  }
  Tensor out = Tensor::from_values(m, n, std::move(vals));
  bool rec = false;
  for (const Tensor& p : parts) {
    if (wants_grad({&p})) {
      rec = true;
      break;
    }
  }
  if (!rec) {
    return out;
  }
  return finish("concat_rows", parts, out, [](const std::vector<Tensor>& ins, const Tensor& y) {
    Tensor yc = y;
    const auto& gy = yc.grad();
    std::size_t off = 0;
    for (const Tensor& part : ins) {
      Tensor p = part;
      const std::size_t sz = p.numel();
      if (p.requires_grad()) {
        auto& g = p.grad();
        for (std::size_t i = 0; i < sz; ++i) {
          g[i] += gy[off + i];
        }
      }
      off += sz;
    }
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) {
    throw ValueError("concat_cols: no parts");
  }
  const int m = parts[0].rows();
  int n = 0;
  for (const Tensor& p : parts) {
    if (p.rows() != m) {
      shape_fail("concat_cols", parts[0], p);
    }
    n += p.cols();
  }
  std::vector<double> vals(static_cast<std::size_t>(m) * n);
  int coff = 0;
  for (const Tensor& p : parts) {
    const int pc = p.cols();
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < pc; ++j) {
        vals[static_cast<std::size_t>(i) * n + coff + j] =
            p.values()[static_cast<std::size_t>(i) * pc + j];
      }
    }
    coff += pc;
  }
  Tensor out = Tensor::from_values(m, n, std::move(vals));
  bool rec = false;
  for (const Tensor& p : parts) {
    if (wants_grad({&p})) {
      rec = true;
      break;
    }
  }
  if (!rec) {
    return out;
  }
  return finish("concat_cols", parts, out, [](const std::vector<Tensor>& ins, const Tensor& y) {
    Tensor yc = y;
    const auto& gy = yc.grad();
    const int n = yc.cols();
    int coff = 0;
    for (const Tensor& part : ins) {
      Tensor p = part;
      const int m = p.rows(), pc = p.cols();
      if (p.requires_grad()) {
        auto& g = p.grad();
        for (int i = 0; i < m; ++i) {
          for (int j = 0; j < pc; ++j) {
            g[static_cast<std::size_t>(i) * pc + j] += gy[static_cast<std::size_t>(i) * n + coff + j];
          }
        }
      }
      coff += pc;
    }
  });
}

Tensor gather_rows(const Tensor& a, const std::vector<int>& indices) {
  if (indices.empty()) {
    throw ValueError("gather_rows: empty index list");
  }
  const int n = a.cols();
  for (int idx : indices) {
    if (idx < 0 || idx >= a.rows()) {
      throw ValueError("gather_rows: index " + std::to_string(idx) + " out of range for " +
                       a.shape_str());
    }
  }
  std::vector<double> vals;
  vals.reserve(indices.size() * n);
  for (int idx : indices) {
    const std::size_t off = static_cast<std::size_t>(idx) * n;
    vals.insert(vals.end(), a.values().begin() + off, a.values().begin() + off + n);
  }
  Tensor out = Tensor::from_values(static_cast<int>(indices.size()), n, std::move(vals));
  if (!wants_grad({&a})) {
    return out;
  }
  return finish("gather_rows", {a}, out,
                [indices](const std::vector<Tensor>& ins, const Tensor& y) {
                  Tensor in = ins[0];
                  Tensor yc = y;
                  auto& gx = in.grad();
                  const auto& gy = yc.grad();
                  const int n = in.cols();
                  for (std::size_t r = 0; r < indices.size(); ++r) {
                    const std::size_t src = r * n;
                    const std::size_t dst = static_cast<std::size_t>(indices[r]) * n;
                    for (int j = 0; j < n; ++j) {
                      gx[dst + j] += gy[src + j];
                    }
                  }
                });
}

Tensor slice_cols(const Tensor& a, int start, int len) {
  if (start < 0 || len < 1 || start + len > a.cols()) {
    throw ValueError("slice_cols: range [" + std::to_string(start) + ", " +
                     std::to_string(start + len) + ") out of bounds for " + a.shape_str());
  }
  const int m = a.rows(), n = a.cols();
  std::vector<double> vals(static_cast<std::size_t>(m) * len);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < len; ++j) {
      vals[static_cast<std::size_t>(i) * len + j] = a.values()[static_cast<std::size_t>(i) * n + start + j];
    }
  }
  Tensor out = Tensor::from_values(m, len, std::move(vals));
  if (!wants_grad({&a})) {
    return out;
  }
  return finish("slice_cols", {a}, out,
                [start, len](const std::vector<Tensor>& ins, const Tensor& y) {
                  Tensor in = ins[0];
                  Tensor yc = y;
                  auto& gx = in.grad();
                  const auto& gy = yc.grad();
                  const int m = in.rows(), n = in.cols();
                  for (int i = 0; i < m; ++i) {
                    for (int j = 0; j < len; ++j) {
                      gx[static_cast<std::size_t>(i) * n + start + j] +=
                          gy[static_cast<std::size_t>(i) * len + j];
                    }
                  }
                });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const int m = x.rows(), n = x.cols();
  if (gamma.rows() != 1 || gamma.cols() != n) {
    shape_fail("layer_norm", x, gamma);
  }
  if (beta.rows() != 1 || beta.cols() != n) {
    shape_fail("layer_norm", x, beta);
  }
  std::vector<double> vals(x.numel());
  std::vector<double> xhat(x.numel());
  std::vector<double> inv_sigma(m);
  const auto& xv = x.values();
  for (int i = 0; i < m; ++i) {
    const std::size_t off = static_cast<std::size_t>(i) * n;
    double mean = 0.0;
    for (int j = 0; j < n; ++j) {
      mean += xv[off + j];
    }
    mean /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) {
      const double d = xv[off + j] - mean;
      var += d * d;
    }
    var /= n;
    const double is = 1.0 / std::sqrt(var + eps);
    inv_sigma[i] = is;
    for (int j = 0; j < n; ++j) {
      xhat[off + j] = (xv[off + j] - mean) * is;
      vals[off + j] = gamma.values()[j] * xhat[off + j] + beta.values()[j];
    }
  }
  Tensor out = Tensor::from_values(m, n, std::move(vals));
  if (!wants_grad({&x, &gamma, &beta})) {
    return out;
  }
  return finish(
      "layer_norm", {x, gamma, beta}, out,
      [xhat = std::move(xhat), inv_sigma = std::move(inv_sigma)](const std::vector<Tensor>& ins,
                                                                const Tensor& y) {
        Tensor in = ins[0], g_t = ins[1], b_t = ins[2];
        Tensor yc = y;
        const auto& gy = yc.grad();
        const int m = in.rows(), n = in.cols();
        if (g_t.requires_grad()) {
          auto& gg = g_t.grad();
          for (int i = 0; i < m; ++i) {
            const std::size_t off = static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) {
              gg[j] += gy[off + j] * xhat[off + j];
            }
          }
        }
        if (b_t.requires_grad()) {
          auto& gb = b_t.grad();
          for (int i = 0; i < m; ++i) {
            const std::size_t off = static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) {
              gb[j] += gy[off + j];
            }
          }
        }
        if (in.requires_grad()) {
          auto& gx = in.grad();
          const auto& gv = g_t.values();
          for (int i = 0; i < m; ++i) {
            const std::size_t off = static_cast<std::size_t>(i) * n;
            double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
            for (int j = 0; j < n; ++j) {
              const double dxh = gy[off + j] * gv[j];
              mean_dxhat += dxh;
              mean_dxhat_xhat += dxh * xhat[off + j];
            }
            mean_dxhat /= n;
            mean_dxhat_xhat /= n;
            for (int j = 0; j < n; ++j) {
              const double dxh = gy[off + j] * gv[j];
              gx[off + j] += inv_sigma[i] * (dxh - mean_dxhat - xhat[off + j] * mean_dxhat_xhat);
            }
          }
        }
      });
}

Tensor frobenius_norm(const Tensor& a) {
  double ss = 0.0;
  for (double v : a.values()) {
    ss += v * v;
  }
  const double norm = std::sqrt(ss);
  Tensor out = Tensor::scalar(norm);
  if (!wants_grad({&a})) {
    return out;
  }
  return finish("frobenius_norm", {a}, out, [](const std::vector<Tensor>& ins, const Tensor& y) {
    Tensor in = ins[0];
    Tensor yc = y;
    const double norm = yc.values()[0];
    if (norm == 0.0) {
      return;  // zero is a valid subgradient of ||.|| at the origin
    }
    const double g = yc.grad()[0] / norm;
    auto& gx = in.grad();
    const auto& xv = in.values();
    for (std::size_t i = 0; i < gx.size(); ++i) {
      gx[i] += g * xv[i];
    }
  });
}

Tensor cross_entropy_logits(const Tensor& logits, int target) {
  if (logits.rows() != 1) {
    throw ShapeError("cross_entropy_logits: logits must be a 1 x K row, got " + logits.shape_str());
  }
  const int k = logits.cols();
  if (target < 0 || target >= k) {
    throw ValueError("cross_entropy_logits: target " + std::to_string(target) + " out of range for " +
                     std::to_string(k) + " classes");
  }
  const auto& lv = logits.values();
  double mx = lv[0];
  for (int j = 1; j < k; ++j) {
    mx = std::max(mx, lv[j]);
  }
  double denom = 0.0;
  for (int j = 0; j < k; ++j) {
    denom += std::exp(lv[j] - mx);
  }
  const double lse = mx + std::log(denom);
  Tensor out = Tensor::scalar(lse - lv[target]);
  if (!wants_grad({&logits})) {
    return out;
  }
  return finish("cross_entropy_logits", {logits}, out,
                [target](const std::vector<Tensor>& ins, const Tensor& y) {
                  Tensor in = ins[0];
                  Tensor yc = y;
                  const double g = yc.grad()[0];
                  const auto& lv = in.values();
                  const int k = in.cols();
                  double mx = lv[0];
                  for (int j = 1; j < k; ++j) {
                    mx = std::max(mx, lv[j]);
                  }
                  double denom = 0.0;
                  for (int j = 0; j < k; ++j) {
                    denom += std::exp(lv[j] - mx);
                  }
                  auto& gx = in.grad();
                  for (int j = 0; j < k; ++j) {
                    const double p = std::exp(lv[j] - mx) / denom;
                    gx[j] += g * (p - (j == target ? 1.0 : 0.0));
                  }
                });
}

}  // namespace ptcmil
