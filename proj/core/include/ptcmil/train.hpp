#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "ptcmil/bytes.hpp"
#include "ptcmil/data.hpp"
#include "ptcmil/model.hpp"
#include "ptcmil/params.hpp"

namespace ptcmil {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-5;
};

// Adam with decoupled weight decay (p -= lr*wd*p before the Adam delta).
// Moment buffers are keyed by parameter name; frozen parameters are skipped
// entirely. A non-finite gradient aborts the step with NumericError naming
// the parameter.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {});

  const AdamConfig& config() const { return cfg_; }
  std::int64_t step_count() const { return t_; }

  void step(ParamRegistry& params, double lr);

  void serialize(ByteWriter& w) const;
  static Adam deserialize(ByteReader& r);

 private:
  struct Moments {
    std::vector<double> m;
    std::vector<double> v;
  };

  AdamConfig cfg_;
  std::int64_t t_ = 0;
  std::map<std::string, Moments> state_;  // ordered for deterministic serialization
};

// base * 0.5 * (1 + cos(pi * step / total)). Requires total >= 1 and
// 0 <= step <= total.
double cosine_lr(std::int64_t step, std::int64_t total, double base);

struct StepResult {
  double total_loss = 0.0;
  double task_loss = 0.0;
  double reg_loss = 0.0;
};

// One bag: forward (training mode), EMA commit, loss = task + alpha * reg on
// the blended prompts, zero_grads, backward, optimizer step.
StepResult train_step(Model& model, const BagRecord& bag, Adam& opt, double lr);

// Validation-ranking metric: ROC AUC for binary classification, concordance
// index for survival.
double validation_metric(Model& model, const std::vector<BagRecord>& bags);

struct EvalReport {
  std::string metric_name;  // "auc" | "cindex"
  double metric = 0.0;
  double mean_task_loss = 0.0;
  int bag_count = 0;
};

EvalReport evaluate_bags(Model& model, const std::vector<BagRecord>& bags);

struct FitOptions {
  int epochs = 30;
  double base_lr = 2e-4;
  std::uint64_t seed = 42;
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double task_loss = 0.0;
  double reg_loss = 0.0;
  double val_metric = 0.0;
  double lr = 0.0;
};

struct FitResult {
  std::vector<EpochStats> history;
  std::vector<std::uint8_t> best_checkpoint;  // model + optimizer snapshot
  int best_epoch = -1;                        // -1: no epoch ran
  double best_metric = 0.0;
  std::string metric_name;
};

// Epoch loop with a fresh seeded shuffle per epoch and a cosine schedule over
// all steps. Tracks the best validation epoch (strict improvement, so ties
// keep the earlier epoch) and snapshots its checkpoint. With zero epochs the
// initial state comes back unchanged with an empty history. An empty val set
// records NaN metrics and keeps the final epoch's checkpoint.
FitResult fit(Model& model, Adam& opt, const std::vector<BagRecord>& train_bags,
              const std::vector<BagRecord>& val_bags, const FitOptions& opts);

void write_history_csv(const std::string& path, const FitResult& result);

struct AdaptOptions {
  int epochs = 10;
  double lr = 1e-3;
  bool adapt_prompts = false;
  std::uint64_t seed = 7;
};

struct AdaptResult {
  FitResult fit;
  std::vector<std::string> adapted;  // parameter names that were trainable
  double before_metric = 0.0;
  double after_metric = 0.0;
};

// Few-shot adaptation: trains only the head (plus the score head when present,
// plus prompts when requested) on the support bags; everything else is frozen
// and verified bitwise unchanged afterwards. Optimizer state starts fresh.
AdaptResult few_shot_adapt(Model& model, const std::vector<BagRecord>& support,
                           const std::vector<BagRecord>& val_bags, const AdaptOptions& opts);

// Same architecture and weights with a freshly initialized head sized for
// `classes`; used when the target task's class count differs.
std::unique_ptr<Model> with_new_head(const Model& src, int classes, std::uint64_t seed);

}  // namespace ptcmil
