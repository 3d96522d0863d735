#include "ptcmil/prompt.hpp"

#include <cmath>
#include <cstddef>

#include "ptcmil/error.hpp"
#include "ptcmil/nn.hpp"

namespace ptcmil {

namespace {

constexpr double kResidualFloor = 1e-12;
constexpr int kRedrawBudget = 64;

double dot(const std::vector<double>& rows, int dim, int a, int b) {
  double s = 0.0;
  for (int k = 0; k < dim; ++k) s += rows[static_cast<std::size_t>(a) * dim + k] * rows[static_cast<std::size_t>(b) * dim + k];
  return s;
}

void draw_row(std::vector<double>& rows, int dim, int row, double bound, Rng& rng) {
  for (int k = 0; k < dim; ++k) rows[static_cast<std::size_t>(row) * dim + k] = rng.uniform(-bound, bound);
}

// Subtract projections of row i onto all orthonormal rows < i, in place.
void project_out(std::vector<double>& rows, int dim, int i) {
  for (int j = 0; j < i; ++j) {
    const double c = dot(rows, dim, j, i);
    for (int k = 0; k < dim; ++k) {
      rows[static_cast<std::size_t>(i) * dim + k] -= c * rows[static_cast<std::size_t>(j) * dim + k];
    }
  }
}

}  // namespace

std::vector<double> orthonormal_rows(int clusters, int dim, Rng& rng) {
  if (clusters < 1 || dim < 1) throw ValueError("orthonormal_rows: clusters and dim must be positive");
  if (clusters > dim) {
    throw ValueError("orthonormal_rows: cannot orthonormalize " + std::to_string(clusters) +
                     " rows in dimension " + std::to_string(dim));
  }
  const double bound = std::sqrt(6.0 / (clusters + dim));
  std::vector<double> rows(static_cast<std::size_t>(clusters) * dim);
  for (int i = 0; i < clusters; ++i) {
    int attempts = 0;
    for (;;) {
      if (attempts++ > kRedrawBudget) {
        throw NumericError("orthonormal_rows: row " + std::to_string(i) + " kept collapsing during Gram-Schmidt");
      }
      draw_row(rows, dim, i, bound, rng);
      project_out(rows, dim, i);
      // Second sweep tightens orthogonality lost to cancellation.
      project_out(rows, dim, i);
      const double norm = std::sqrt(dot(rows, dim, i, i));
      if (norm < kResidualFloor) continue;
      for (int k = 0; k < dim; ++k) rows[static_cast<std::size_t>(i) * dim + k] /= norm;
      break;
    }
  }
  return rows;
}

PromptBank PromptBank::create(int clusters, int dim, double theta, Rng& rng, ParamRegistry* reg) {
  if (theta < 0.0 || theta > 1.0) throw ValueError("PromptBank: theta must lie in [0, 1]");
  PromptBank bank;
  bank.theta = theta;
  bank.cluster_count = clusters;
  bank.dim = dim;
  bank.ema = orthonormal_rows(clusters, dim, rng);
  if (reg != nullptr) {
    bank.prompts = reg->add("prompts", clusters, dim, bank.ema);
  } else {
    bank.prompts = Tensor::leaf("prompts", clusters, dim, bank.ema);
  }
  return bank;
}

Tensor PromptBank::ema_tensor() const {
  return Tensor::from_values(cluster_count, dim, ema);
}

Tensor assign(const Tensor& tokens, const Tensor& prompts) {
  if (tokens.cols() != prompts.cols()) {
    throw ShapeError("assign: token dim " + tokens.shape_str() + " does not match prompt dim " + prompts.shape_str());
  }
  return row_softmax(matmul(tokens, transpose(prompts)));
}

ClusterPartition partition(const Tensor& assignment) {
  const int n = assignment.rows();
  const int c = assignment.cols();
  ClusterPartition part;
  part.cluster_count = c;
  part.labels.resize(n);
  part.groups.assign(c, {});
  part.empty.assign(c, true);
  for (int i = 0; i < n; ++i) {
    int best = 0;
    double best_val = assignment.at(i, 0);
    for (int j = 1; j < c; ++j) {
      const double v = assignment.at(i, j);
      if (v > best_val) {
        best = j;
        best_val = v;
      }
    }
    part.labels[i] = best;
    part.groups[best].push_back(i);
    part.empty[best] = false;
  }
  return part;
}

Tensor ema_update(PromptBank& bank, const Tensor& current) {
  if (bank.theta < 0.0 || bank.theta > 1.0) throw ValueError("ema_update: theta must lie in [0, 1]");
  if (current.rows() != bank.cluster_count || current.cols() != bank.dim) {
    throw ShapeError("ema_update: expected [" + std::to_string(bank.cluster_count) + " x " +
                     std::to_string(bank.dim) + "], got " + current.shape_str());
  }
  Tensor blended = add(scale(bank.ema_tensor(), bank.theta), scale(current, 1.0 - bank.theta));
  const std::vector<double>& vals = blended.values();
  bank.ema.assign(vals.begin(), vals.end());
  ++bank.steps;
  return blended;
}

Tensor reg_loss(const Tensor& prompts) {
  const int d = prompts.cols();
  Tensor gram = matmul(transpose(prompts), prompts);
  return frobenius_norm(sub(gram, Tensor::identity(d)));
}

double max_abs_row_gram_residual(const Tensor& prompts) {
  const int c = prompts.rows();
  const int d = prompts.cols();
  double worst = 0.0;
  for (int i = 0; i < c; ++i) {
    for (int j = 0; j < c; ++j) {
      double s = 0.0;
      for (int k = 0; k < d; ++k) s += prompts.at(i, k) * prompts.at(j, k);
      const double target = (i == j) ? 1.0 : 0.0;
      worst = std::max(worst, std::abs(s - target));
    }
  }
  return worst;
}

}  // namespace ptcmil
