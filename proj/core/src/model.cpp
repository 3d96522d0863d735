#include "ptcmil/model.hpp"

#include <cmath>
#include <numeric>

#include "ptcmil/error.hpp"

namespace ptcmil {

void ModelConfig::validate() const {
  std::vector<std::string> problems;
  if (input_dim < 1) problems.push_back("input_dim must be positive");
  if (embed_dim < 1) problems.push_back("embed_dim must be positive");
  if (heads < 1) problems.push_back("heads must be positive");
  else if (embed_dim >= 1 && embed_dim % heads != 0) {
    problems.push_back("heads (" + std::to_string(heads) + ") must divide embed_dim (" + std::to_string(embed_dim) + ")");
  }
  if (clustering) {
    if (clusters < 1) problems.push_back("clusters must be positive");
    else if (clusters > embed_dim) {
      problems.push_back("clusters (" + std::to_string(clusters) + ") cannot exceed embed_dim (" +
                         std::to_string(embed_dim) + "); orthonormal prompt rows need clusters <= embed_dim");
    }
  }
  if (task == Task::kClassification && classes < 2) problems.push_back("classes must be at least 2");
  if (task == Task::kSurvival && bins < 2) problems.push_back("bins must be at least 2");
  if (alpha < 0.0) problems.push_back("alpha must be non-negative");
  if (theta < 0.0 || theta > 1.0) problems.push_back("theta must lie in [0, 1]");
  if (!problems.empty()) {
    std::string msg = "invalid model config:";
    for (const std::string& p : problems) msg += "\n  " + p;
    throw ConfigError(msg);
  }
}

std::string ModelConfig::ablation_label() const {
  std::string label = "clustering=";
  label += clustering ? "w/" : "w/o";
  label += " merging=";
  label += (clustering && merging) ? "w/" : "w/o";
  label += " pooling=";
  label += clustering ? pooling_mode_name(pooling) : pooling_mode_name(PoolingMode::kClsToken);
  return label;
}

Model::Model(const ModelConfig& cfg, std::uint64_t seed) : config_(cfg) {
  config_.validate();
  Rng rng(Rng::derive_seed(seed, 0x6d6f64656cull));
  embed_ = Linear::create("embed", config_.input_dim, config_.embed_dim, rng, params_);
  {
    const double bound = std::sqrt(6.0 / (1 + config_.embed_dim));
    std::vector<double> vals(static_cast<std::size_t>(config_.embed_dim));
    for (double& v : vals) v = rng.uniform(-bound, bound);
    cls_ = params_.add("cls", 1, config_.embed_dim, vals);
  }
  if (config_.clustering) {
    bank_ = PromptBank::create(config_.clusters, config_.embed_dim, config_.theta, rng, &params_);
  }
  global_ = EncoderLayer::create("global", config_.embed_dim, config_.heads, rng, params_);
  if (config_.clustering) {
    local_ = EncoderLayer::create("local", config_.embed_dim, config_.heads, rng, params_);
    if (config_.merging) score_ = ScoreHead::create("score", config_.embed_dim, rng, params_);
  }
  // Zero head: initial logits are uniform, so early gradients reflect only the
  // pooled features rather than a random readout direction.
  head_ = Linear::create_zero("head", config_.embed_dim, config_.head_outputs(), params_);
}

PromptBank& Model::prompt_bank() {
  if (!config_.clustering) throw ValueError("model has clustering disabled; no prompt bank");
  return bank_;
}

const PromptBank& Model::prompt_bank() const {
  if (!config_.clustering) throw ValueError("model has clustering disabled; no prompt bank");
  return bank_;
}

Model::Forward Model::forward(const Tensor& features, bool training) const {
  if (features.cols() != config_.input_dim) {
    throw ShapeError("forward: features " + features.shape_str() + " do not match input_dim " +
                     std::to_string(config_.input_dim));
  }
  const int n = features.rows();
  Forward fw;
  Tensor embedded = embed_(features);
  if (!config_.clustering) {
    Tensor refined = global_(concat_rows({cls_, embedded}));
    fw.cls_refined = gather_rows(refined, {0});
    fw.logits = head_(fw.cls_refined);
    return fw;
  }
  const int c = config_.clusters;
  Tensor prompt_block = training ? bank_.prompts : bank_.ema_tensor();
  Tensor refined = global_(concat_rows({cls_, prompt_block, embedded}));
  fw.cls_refined = gather_rows(refined, {0});
  std::vector<int> prompt_rows(static_cast<std::size_t>(c));
  std::iota(prompt_rows.begin(), prompt_rows.end(), 1);
  std::vector<int> token_rows(static_cast<std::size_t>(n));
  std::iota(token_rows.begin(), token_rows.end(), 1 + c);
  fw.prompts_refined = gather_rows(refined, prompt_rows);
  Tensor tokens = gather_rows(refined, token_rows);
  fw.assignment = assign(tokens, fw.prompts_refined);
  fw.partition = partition(fw.assignment);
  std::vector<RefinedCluster> clusters = local_refine(fw.partition, fw.prompts_refined, tokens, local_);
  std::vector<Tensor> proto_rows;
  proto_rows.reserve(clusters.size());
  fw.empty_clusters.reserve(clusters.size());
  for (const RefinedCluster& rc : clusters) {
    fw.empty_clusters.push_back(rc.empty);
    if (rc.empty || !config_.merging) {
      proto_rows.push_back(rc.prompt);
    } else {
      proto_rows.push_back(merge(rc.members, score_(rc.members)));
    }
  }
  fw.prototypes = concat_rows(proto_rows);
  fw.logits = pool_and_predict(fw.cls_refined, fw.prototypes, config_.pooling, head_);
  return fw;
}

Tensor Model::task_loss(const Tensor& logits, const BagLabel& label) const {
  if (config_.task == Task::kClassification) {
    const int* cls = std::get_if<int>(&label);
    if (cls == nullptr) throw ValueError("classification model given a survival label");
    if (*cls < 0 || *cls >= config_.classes) {
      throw ValueError("class label " + std::to_string(*cls) + " outside [0, " + std::to_string(config_.classes) + ")");
    }
    return cross_entropy_logits(logits, *cls);
  }
  const SurvivalLabel* surv = std::get_if<SurvivalLabel>(&label);
  if (surv == nullptr) throw ValueError("survival model given a class label");
  return survival_nll(logits, *surv);
}

Model::Evaluation Model::evaluate(const Tensor& features) const {
  Forward fw = forward(features, false);
  Evaluation ev;
  ev.logits = fw.logits.values();
  if (config_.task == Task::kClassification) {
    double peak = ev.logits[0];
    for (double v : ev.logits) peak = std::max(peak, v);
    double z = 0.0;
    ev.probabilities.resize(ev.logits.size());
    for (std::size_t k = 0; k < ev.logits.size(); ++k) {
      ev.probabilities[k] = std::exp(ev.logits[k] - peak);
      z += ev.probabilities[k];
    }
    for (double& p : ev.probabilities) p /= z;
    if (config_.classes == 2) ev.positive_probability = ev.probabilities[1];
  } else {
    ev.hazards = hazards_and_survival(ev.logits);
    ev.risk = risk_score(ev.hazards);
  }
  if (config_.clustering) {
    ev.cluster_labels = fw.partition.labels;
    ev.assignment = fw.assignment.values();
    ev.empty_clusters = fw.empty_clusters;
  }
  return ev;
}

double Model::ranking_score(const Evaluation& ev) const {
  if (config_.task == Task::kSurvival) return ev.risk;
  if (config_.classes != 2) throw ValueError("ranking_score needs a binary classifier or a survival model");
  return ev.positive_probability;
}

}  // namespace ptcmil
