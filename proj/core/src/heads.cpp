#include "ptcmil/heads.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>

#include "ptcmil/error.hpp"

namespace ptcmil {

std::string pooling_mode_name(PoolingMode mode) {
  switch (mode) {
    case PoolingMode::kPrototypes: return "pro";
    case PoolingMode::kClsToken: return "cls";
    case PoolingMode::kPrototypesAndCls: return "pro+cls";
  }
  throw ValueError("pooling_mode_name: unknown mode");
}

PoolingMode parse_pooling_mode(const std::string& name) {
  if (name == "pro") return PoolingMode::kPrototypes;
  if (name == "cls") return PoolingMode::kClsToken;
  if (name == "pro+cls") return PoolingMode::kPrototypesAndCls;
  throw ValueError("unknown pooling mode '" + name + "' (expected pro, cls, or pro+cls)");
}

Tensor pool_and_predict(const Tensor& cls_token, const Tensor& prototypes, PoolingMode mode, const Linear& head) {
  if (cls_token.rows() != 1) throw ShapeError("pool_and_predict: cls token must be one row, got " + cls_token.shape_str());
  Tensor pooled;
  switch (mode) {
    case PoolingMode::kClsToken:
      pooled = cls_token;
      break;
    case PoolingMode::kPrototypes:
      if (!prototypes.defined()) throw ValueError("pool_and_predict: prototype pooling requires prototypes");
      pooled = column_mean(prototypes);
      break;
    case PoolingMode::kPrototypesAndCls:
      if (!prototypes.defined()) throw ValueError("pool_and_predict: pro+cls pooling requires prototypes");
      pooled = column_mean(concat_rows({cls_token, prototypes}));
      break;
  }
  return head(pooled);
}

Tensor classification_loss(const Tensor& logits, int label, const Tensor& reg_value, double alpha) {
  if (alpha < 0.0) throw ValueError("classification_loss: alpha must be non-negative");
  Tensor ce = cross_entropy_logits(logits, label);
  if (!reg_value.defined()) return ce;
  return add(ce, scale(reg_value, alpha));
}

HazardVector hazards_and_survival(const std::vector<double>& logits) {
  HazardVector hv;
  hv.hazard.resize(logits.size());
  hv.survival.resize(logits.size());
  double running = 1.0;
  for (std::size_t u = 0; u < logits.size(); ++u) {
    const double x = logits[u];
    const double h = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    hv.hazard[u] = h;
    running *= 1.0 - h;
    hv.survival[u] = running;
  }
  return hv;
}

namespace {

void check_survival_label(const SurvivalLabel& label, int bins) {
  if (label.censored != 0 && label.censored != 1) {
    throw ValueError("survival label censor flag must be 0 or 1, got " + std::to_string(label.censored));
  }
  if (label.time_bin < 0 || label.time_bin >= bins) {
    throw ValueError("survival label bin " + std::to_string(label.time_bin) + " outside [0, " +
                     std::to_string(bins) + ")");
  }
}

}  // namespace

double survival_loss(const HazardVector& hv, const SurvivalLabel& label) {
  check_survival_label(label, static_cast<int>(hv.hazard.size()));
  const int y = label.time_bin;
  auto surv_at = [&](int r) { return r < 0 ? 1.0 : hv.survival[static_cast<std::size_t>(r)]; };
  if (label.censored == 1) return -std::log(surv_at(y));
  return -std::log(surv_at(y - 1)) - std::log(hv.hazard[static_cast<std::size_t>(y)]);
}

Tensor survival_nll(const Tensor& hazard_logits, const SurvivalLabel& label) {
  if (hazard_logits.rows() != 1) {
    throw ShapeError("survival_nll: expected a 1 x R logit row, got " + hazard_logits.shape_str());
  }
  check_survival_label(label, hazard_logits.cols());
  const int y = label.time_bin;
  Tensor col = transpose(hazard_logits);  // R x 1
  // -log(1 - sigmoid(x)) = softplus(x); -log sigmoid(x) = softplus(-x).
  const int surv_upto = label.censored == 1 ? y : y - 1;
  Tensor total;
  if (surv_upto >= 0) {
    std::vector<int> idx(static_cast<std::size_t>(surv_upto) + 1);
    std::iota(idx.begin(), idx.end(), 0);
    total = sum_all(softplus(gather_rows(col, idx)));
  }
  if (label.censored == 0) {
    Tensor hazard_term = softplus(affine(gather_rows(col, {y}), -1.0, 0.0));
    total = total.defined() ? add(total, sum_all(hazard_term)) : sum_all(hazard_term);
  }
  return total;
}

double risk_score(const HazardVector& hv) {
  double s = 0.0;
  for (double h : hv.hazard) s += h;
  return s;
}

double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw ValueError("auc: scores and labels differ in length");
  const std::size_t n = scores.size();
  std::size_t positives = 0;
  for (int l : labels) {
    if (l != 0 && l != 1) throw ValueError("auc: labels must be 0 or 1");
    positives += static_cast<std::size_t>(l);
  }
  if (positives == 0 || positives == n) throw ValueError("auc: both classes must be present");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Midranks: tied scores share the average of the rank positions they span.
  std::vector<double> rank(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double mid = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
    i = j + 1;
  }
  double pos_rank_sum = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (labels[k] == 1) pos_rank_sum += rank[k];
  }
  const double p = static_cast<double>(positives);
  const double u = pos_rank_sum - p * (p + 1.0) / 2.0;
  return u / (p * static_cast<double>(n - positives));
}

double c_index(const std::vector<double>& risks, const std::vector<int>& time_bins,
               const std::vector<int>& censored) {
  if (risks.size() != time_bins.size() || risks.size() != censored.size()) {
    throw ValueError("c_index: input lengths differ");
  }
  double concordant = 0.0;
  std::size_t comparable = 0;
  for (std::size_t a = 0; a < risks.size(); ++a) {
    if (censored[a] != 0) continue;
    for (std::size_t b = 0; b < risks.size(); ++b) {
      if (a == b || time_bins[a] >= time_bins[b]) continue;
      ++comparable;
      if (risks[a] > risks[b]) concordant += 1.0;
      else if (risks[a] == risks[b]) concordant += 0.5;
    }
  }
  if (comparable == 0) throw ValueError("c_index: no comparable pairs");
  return concordant / static_cast<double>(comparable);
}

}  // namespace ptcmil
