#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ptcmil/params.hpp"
#include "ptcmil/rng.hpp"
#include "ptcmil/tensor.hpp"

namespace ptcmil {

// Learnable prompt tokens acting as cluster proxies, plus their EMA shadow.
// The shadow is a statistic, never touched by the optimizer; it feeds the
// orthogonality regularizer and is the prompt state used at inference.
struct PromptBank {
  Tensor prompts;            // C x D, trainable
  std::vector<double> ema;   // C x D shadow values
  double theta = 0.9;
  int cluster_count = 0;
  int dim = 0;
  std::int64_t steps = 0;

  // Orthonormal rows via Xavier-uniform draw + Gram-Schmidt; ema starts equal
  // to the prompts. Registers the prompt matrix as "prompts" when reg != null.
  static PromptBank create(int clusters, int dim, double theta, Rng& rng, ParamRegistry* reg);

  Tensor ema_tensor() const;  // constant snapshot of the shadow
};

// Xavier-uniform rows orthonormalized by Gram-Schmidt (two sweeps). Rows whose
// residual collapses below 1e-12 are redrawn, with a bounded retry budget.
// Requires clusters <= dim.
std::vector<double> orthonormal_rows(int clusters, int dim, Rng& rng);

// Row-stochastic patch-to-cluster probabilities: softmax over the inner
// products of each token row with every prompt row.
Tensor assign(const Tensor& tokens, const Tensor& prompts);

struct ClusterPartition {
  std::vector<int> labels;              // per patch, argmax cluster (ties -> lowest index)
  std::vector<std::vector<int>> groups; // per cluster, member patch indices in original order
  std::vector<bool> empty;
  int cluster_count = 0;
};

ClusterPartition partition(const Tensor& assignment);

// theta * detach(shadow) + (1 - theta) * current. Commits the blended values
// into the bank and returns the graph-connected blend, so gradients reach the
// prompts only through the (1 - theta) term.
Tensor ema_update(PromptBank& bank, const Tensor& current);

// || P^T P - I ||_F  (the anti-collapse soft constraint).
Tensor reg_loss(const Tensor& prompts);

// max |P P^T - I| over entries; the collapse-prevention measure that is
// actually attainable for C < D.
double max_abs_row_gram_residual(const Tensor& prompts);

}  // namespace ptcmil
