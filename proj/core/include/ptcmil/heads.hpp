#pragma once

#include <string>
#include <vector>

#include "ptcmil/nn.hpp"
#include "ptcmil/tensor.hpp"

namespace ptcmil {

enum class PoolingMode { kPrototypes, kClsToken, kPrototypesAndCls };

std::string pooling_mode_name(PoolingMode mode);
PoolingMode parse_pooling_mode(const std::string& name);

// Mean-pools the mode's token set (cls row, prototype rows, or both stacked)
// and applies the linear head. For kClsToken the pooled vector is the cls row
// itself. prototypes may be undefined only in kClsToken mode.
Tensor pool_and_predict(const Tensor& cls_token, const Tensor& prototypes, PoolingMode mode, const Linear& head);

// Cross-entropy on the 1 x K logit row plus alpha * reg_value. Pass an
// undefined reg_value to drop the penalty term entirely.
Tensor classification_loss(const Tensor& logits, int label, const Tensor& reg_value, double alpha);

struct SurvivalLabel {
  int time_bin = 0;
  int censored = 0;  // 1 = event not observed
};

// Forward-only view of a hazard-logit row: per-bin hazards h_u = sigmoid(x_u)
// and the running survival S_r = prod_{u<=r} (1 - h_u), with S_{-1} = 1.
struct HazardVector {
  std::vector<double> hazard;
  std::vector<double> survival;
};

HazardVector hazards_and_survival(const std::vector<double>& logits);

// Discrete-time NLL on plain values:
//   -c * log S(Y) - (1-c) * log S(Y-1) - (1-c) * log h(Y)
double survival_loss(const HazardVector& hv, const SurvivalLabel& label);

// Same NLL assembled on the tape from softplus terms, finite for any finite
// logits: c * sum_{u<=Y} sp(x_u) + (1-c) * [sum_{u<Y} sp(x_u) + sp(-x_Y)].
Tensor survival_nll(const Tensor& hazard_logits, const SurvivalLabel& label);

// Expected-event-count risk score: sum of per-bin hazards.
double risk_score(const HazardVector& hv);

// Rank-based ROC AUC with midrank handling of score ties. Throws ValueError
// when only one class is present.
double auc(const std::vector<double>& scores, const std::vector<int>& labels);

// Concordance over comparable pairs (t_i < t_j with event observed at i);
// risk ties count 0.5. Throws ValueError when no pair is comparable.
double c_index(const std::vector<double>& risks, const std::vector<int>& time_bins,
               const std::vector<int>& censored);

}  // namespace ptcmil
