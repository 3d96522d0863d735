#pragma once

#include <string>
#include <vector>

#include "ptcmil/nn.hpp"
#include "ptcmil/prompt.hpp"
#include "ptcmil/tensor.hpp"

namespace ptcmil {

// Learnable per-token salience used to merge refined cluster members into a
// single prototype.
struct ScoreHead {
  Linear proj;  // dim -> 1

  static ScoreHead create(const std::string& prefix, int dim, Rng& rng, ParamRegistry& reg);

  // tokens: N x dim -> scores: N x 1
  Tensor operator()(const Tensor& tokens) const;
};

struct RefinedCluster {
  int cluster = 0;
  bool empty = false;
  Tensor prompt;                   // 1 x dim, locally refined prompt token
  Tensor members;                  // Nc x dim, refined member tokens; undefined when empty
  std::vector<int> member_indices; // original patch indices, ascending
};

// Runs each cluster's [refined prompt row; member tokens] block through the
// shared local encoder. Empty clusters refine the prompt row alone.
std::vector<RefinedCluster> local_refine(const ClusterPartition& part,
                                         const Tensor& refined_prompts,
                                         const Tensor& refined_tokens,
                                         const EncoderLayer& local_layer);

// Softmax(scores)-weighted combination of member rows: 1 x dim.
Tensor merge(const Tensor& members, const Tensor& scores);

}  // namespace ptcmil
