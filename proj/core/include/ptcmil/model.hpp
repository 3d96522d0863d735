#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ptcmil/data.hpp"
#include "ptcmil/heads.hpp"
#include "ptcmil/nn.hpp"
#include "ptcmil/params.hpp"
#include "ptcmil/prompt.hpp"
#include "ptcmil/prototype.hpp"
#include "ptcmil/tensor.hpp"

namespace ptcmil {

struct ModelConfig {
  Task task = Task::kClassification;
  int input_dim = 16;
  int embed_dim = 32;
  int clusters = 5;
  int heads = 4;
  int classes = 2;
  int bins = 4;
  PoolingMode pooling = PoolingMode::kPrototypesAndCls;
  bool clustering = true;
  bool merging = true;
  double alpha = 0.1;
  double theta = 0.9;

  void validate() const;  // throws ConfigError
  int head_outputs() const { return task == Task::kClassification ? classes : bins; }
  // Human-readable variant tag for reports, e.g.
  // "clustering=w/ merging=w/o pooling=cls".
  std::string ablation_label() const;
};

// The full aggregator: embed -> [cls; prompts; tokens] through the global
// encoder, prompt-token assignment, per-cluster local refinement, score-merged
// prototypes, pooled linear head. Parameter registration order is fixed and is
// the checkpoint layout: embed, cls, prompts, global, local, score, head.
// Ablation flags drop the corresponding registrations entirely.
class Model {
 public:
  Model(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  ParamRegistry& params() { return params_; }
  const ParamRegistry& params() const { return params_; }
  PromptBank& prompt_bank();
  const PromptBank& prompt_bank() const;

  struct Forward {
    Tensor logits;          // 1 x K
    Tensor cls_refined;     // 1 x d
    Tensor prompts_refined; // C x d; undefined when clustering is off
    Tensor assignment;      // N x C; undefined when clustering is off
    Tensor prototypes;      // C x d; undefined when clustering is off
    ClusterPartition partition;
    std::vector<bool> empty_clusters;
  };

  // Builds the graph-connected forward pass. Training mode reads the
  // trainable prompt rows; eval mode substitutes the EMA shadow as the prompt
  // input block, so inference reflects the smoothed prompts.
  Forward forward(const Tensor& features, bool training) const;

  // Cross-entropy for classification, discrete-time NLL for survival.
  Tensor task_loss(const Tensor& logits, const BagLabel& label) const;

  struct Evaluation {
    std::vector<double> logits;
    std::vector<double> probabilities;  // classification only
    double positive_probability = 0.0;  // binary classification only
    HazardVector hazards;               // survival only
    double risk = 0.0;                  // survival only
    std::vector<int> cluster_labels;    // per patch; empty when clustering is off
    std::vector<double> assignment;     // row-major N x C; empty when clustering is off
    std::vector<bool> empty_clusters;
  };

  // Detached, value-level inference on one bag. Never touches the EMA.
  Evaluation evaluate(const Tensor& features) const;

  // Scalar used for ranking metrics: positive-class probability or risk.
  double ranking_score(const Evaluation& ev) const;

 private:
  ModelConfig config_;
  ParamRegistry params_;
  Linear embed_;
  Tensor cls_;
  PromptBank bank_;
  EncoderLayer global_;
  EncoderLayer local_;
  ScoreHead score_;
  Linear head_;
};

}  // namespace ptcmil
