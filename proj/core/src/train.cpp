#include "ptcmil/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "ptcmil/checkpoint.hpp"
#include "ptcmil/error.hpp"

namespace ptcmil {

Adam::Adam(AdamConfig cfg) : cfg_(cfg) {
  if (!(cfg_.beta1 >= 0.0 && cfg_.beta1 < 1.0) || !(cfg_.beta2 >= 0.0 && cfg_.beta2 < 1.0)) {
    throw ValueError("Adam betas must lie in [0, 1)");
  }
  if (!(cfg_.eps > 0.0)) throw ValueError("Adam eps must be positive");
  if (cfg_.weight_decay < 0.0) throw ValueError("Adam weight_decay must be non-negative");
}

void Adam::step(ParamRegistry& params, double lr) {
  if (!std::isfinite(lr) || lr < 0.0) throw ValueError("Adam step: invalid learning rate");
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (const ParamEntry& entry : params.entries()) {
    if (entry.frozen) continue;
    Tensor param = entry.tensor;
    const std::vector<double>& grad = param.grad();
    for (double g : grad) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient for parameter '" + entry.name + "'");
    }
    Moments& mo = state_[entry.name];
    if (mo.m.empty()) {
      mo.m.assign(grad.size(), 0.0);
      mo.v.assign(grad.size(), 0.0);
    }
    std::vector<double>& vals = param.values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      vals[i] -= lr * cfg_.weight_decay * vals[i];
      mo.m[i] = cfg_.beta1 * mo.m[i] + (1.0 - cfg_.beta1) * grad[i];
      mo.v[i] = cfg_.beta2 * mo.v[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
      const double mhat = mo.m[i] / bc1;
      const double vhat = mo.v[i] / bc2;
      vals[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

void Adam::serialize(ByteWriter& w) const {
  w.f64(cfg_.beta1);
  w.f64(cfg_.beta2);
  w.f64(cfg_.eps);
  w.f64(cfg_.weight_decay);
  w.u64(static_cast<std::uint64_t>(t_));
  w.u64(state_.size());
  for (const auto& [name, mo] : state_) {
    w.str(name);
    w.u64(mo.m.size());
    for (double v : mo.m) w.f64(v);
    for (double v : mo.v) w.f64(v);
  }
}

Adam Adam::deserialize(ByteReader& r) {
  AdamConfig cfg;
  cfg.beta1 = r.f64();
  cfg.beta2 = r.f64();
  cfg.eps = r.f64();
  cfg.weight_decay = r.f64();
  Adam opt(cfg);
  opt.t_ = static_cast<std::int64_t>(r.u64());
  const std::uint64_t entries = r.u64();
  for (std::uint64_t i = 0; i < entries; ++i) {
    const std::string name = r.str();
    const std::uint64_t n = r.u64();
    Moments mo;
    mo.m.resize(n);
    mo.v.resize(n);
    for (double& v : mo.m) v = r.f64();
    for (double& v : mo.v) v = r.f64();
    opt.state_[name] = std::move(mo);
  }
  return opt;
}

double cosine_lr(std::int64_t step, std::int64_t total, double base) {
  if (total < 1) throw ValueError("cosine_lr: total steps must be at least 1");
  if (step < 0 || step > total) {
    throw ValueError("cosine_lr: step " + std::to_string(step) + " outside [0, " + std::to_string(total) + "]");
  }
  constexpr double kPi = 3.14159265358979323846;
  return base * 0.5 * (1.0 + std::cos(kPi * static_cast<double>(step) / static_cast<double>(total)));
}

StepResult train_step(Model& model, const BagRecord& bag, Adam& opt, double lr) {
  Graph graph;
  GraphScope scope(graph);
  Model::Forward fw = model.forward(bag.features_tensor(), true);
  Tensor task = model.task_loss(fw.logits, bag.label);
  StepResult result;
  result.task_loss = task.item();
  Tensor total = task;
  if (model.config().clustering) {
    Tensor blended = ema_update(model.prompt_bank(), fw.prompts_refined);
    Tensor reg = reg_loss(blended);
    result.reg_loss = reg.item();
    total = add(task, scale(reg, model.config().alpha));
  }
  result.total_loss = total.item();
  if (!std::isfinite(result.total_loss)) throw NumericError("non-finite training loss on bag " + bag.id);
  model.params().zero_grads();
  graph.backward(total);
  opt.step(model.params(), lr);
  return result;
}

namespace {

double value_task_loss(const Model& model, const Model::Evaluation& ev, const BagLabel& label) {
  if (model.config().task == Task::kClassification) {
    const int y = std::get<int>(label);
    double peak = ev.logits[0];
    for (double v : ev.logits) peak = std::max(peak, v);
    double z = 0.0;
    for (double v : ev.logits) z += std::exp(v - peak);
    return peak + std::log(z) - ev.logits[static_cast<std::size_t>(y)];
  }
  return survival_loss(ev.hazards, std::get<SurvivalLabel>(label));
}

}  // namespace

double validation_metric(Model& model, const std::vector<BagRecord>& bags) {
  if (model.config().task == Task::kClassification) {
    std::vector<double> scores;
    std::vector<int> labels;
    scores.reserve(bags.size());
    labels.reserve(bags.size());
    for (const BagRecord& bag : bags) {
      Model::Evaluation ev = model.evaluate(bag.features_tensor());
      scores.push_back(model.ranking_score(ev));
      labels.push_back(bag.class_label());
    }
    return auc(scores, labels);
  }
  std::vector<double> risks;
  std::vector<int> bins;
  std::vector<int> censored;
  for (const BagRecord& bag : bags) {
    Model::Evaluation ev = model.evaluate(bag.features_tensor());
    const SurvivalLabel s = bag.survival_label();
    risks.push_back(ev.risk);
    bins.push_back(s.time_bin);
    censored.push_back(s.censored);
  }
  return c_index(risks, bins, censored);
}

EvalReport evaluate_bags(Model& model, const std::vector<BagRecord>& bags) {
  if (bags.empty()) throw DataError("evaluate_bags: no bags");
  EvalReport report;
  report.metric_name = model.config().task == Task::kClassification ? "auc" : "cindex";
  report.bag_count = static_cast<int>(bags.size());
  double loss_sum = 0.0;
  for (const BagRecord& bag : bags) {
    Model::Evaluation ev = model.evaluate(bag.features_tensor());
    loss_sum += value_task_loss(model, ev, bag.label);
  }
  report.mean_task_loss = loss_sum / static_cast<double>(bags.size());
  report.metric = validation_metric(model, bags);
  return report;
}

FitResult fit(Model& model, Adam& opt, const std::vector<BagRecord>& train_bags,
              const std::vector<BagRecord>& val_bags, const FitOptions& opts) {
  if (opts.epochs < 0) throw ValueError("fit: epochs must be non-negative");
  if (opts.epochs > 0 && train_bags.empty()) throw DataError("fit: no training bags");
  FitResult result;
  result.metric_name = model.config().task == Task::kClassification ? "auc" : "cindex";
  result.best_metric = -std::numeric_limits<double>::infinity();
  if (opts.epochs == 0) {
    result.best_checkpoint = serialize_checkpoint(model, &opt);
    result.best_metric = std::numeric_limits<double>::quiet_NaN();
    return result;
  }
  const std::int64_t total_steps = static_cast<std::int64_t>(opts.epochs) * static_cast<std::int64_t>(train_bags.size());
  std::int64_t global_step = 0;
  std::vector<std::size_t> order(train_bags.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    Rng epoch_rng(Rng::derive_seed(opts.seed, 0x65706f00ull + static_cast<std::uint64_t>(epoch)));
    epoch_rng.shuffle(order);
    double total_sum = 0.0;
    double task_sum = 0.0;
    double reg_sum = 0.0;
    double lr = 0.0;
    for (std::size_t idx : order) {
      lr = cosine_lr(global_step, total_steps, opts.base_lr);
      const StepResult sr = train_step(model, train_bags[idx], opt, lr);
      total_sum += sr.total_loss;
      task_sum += sr.task_loss;
      reg_sum += sr.reg_loss;
      ++global_step;
    }
    EpochStats stats;
    stats.epoch = epoch;
    const double steps = static_cast<double>(train_bags.size());
    stats.train_loss = total_sum / steps;
    stats.task_loss = task_sum / steps;
    stats.reg_loss = reg_sum / steps;
    stats.lr = lr;
    stats.val_metric = val_bags.empty() ? std::numeric_limits<double>::quiet_NaN() : validation_metric(model, val_bags);
    result.history.push_back(stats);
    const bool improved = val_bags.empty() ? true : stats.val_metric > result.best_metric;
    if (improved) {
      result.best_metric = stats.val_metric;
      result.best_epoch = epoch;
      result.best_checkpoint = serialize_checkpoint(model, &opt);
    }
  }
  return result;
}

void write_history_csv(const std::string& path, const FitResult& result) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out << "epoch,train_loss,task_loss,reg_loss,val_metric,lr\n";
  out.precision(17);
  for (const EpochStats& row : result.history) {
    out << row.epoch << ',' << row.train_loss << ',' << row.task_loss << ',' << row.reg_loss << ','
        << row.val_metric << ',' << row.lr << '\n';
  }
  if (!out) throw DataError("failed writing " + path);
}

AdaptResult few_shot_adapt(Model& model, const std::vector<BagRecord>& support,
                           const std::vector<BagRecord>& val_bags, const AdaptOptions& opts) {
  if (opts.epochs < 1) throw ValueError("few_shot_adapt: epochs must be positive");
  ParamRegistry& reg = model.params();
  std::vector<std::string> plan = {"head.weight", "head.bias"};
  if (reg.has("score.weight")) {
    plan.push_back("score.weight");
    plan.push_back("score.bias");
  }
  if (opts.adapt_prompts && reg.has("prompts")) plan.push_back("prompts");
  std::map<std::string, std::vector<double>> frozen_snapshot;
  for (const ParamEntry& entry : reg.entries()) {
    const bool in_plan = std::find(plan.begin(), plan.end(), entry.name) != plan.end();
    reg.set_frozen(entry.name, !in_plan);
    if (!in_plan) frozen_snapshot[entry.name] = entry.tensor.values();
  }
  AdaptResult result;
  result.adapted = plan;
  result.before_metric = val_bags.empty() ? std::numeric_limits<double>::quiet_NaN() : validation_metric(model, val_bags);
  AdamConfig adam_cfg;
  adam_cfg.weight_decay = 0.0;  // tiny support sets; decay would dominate
  Adam opt(adam_cfg);
  FitOptions fit_opts;
  fit_opts.epochs = opts.epochs;
  fit_opts.base_lr = opts.lr;
  fit_opts.seed = opts.seed;
  result.fit = fit(model, opt, support, val_bags, fit_opts);
  for (const auto& [name, before] : frozen_snapshot) {
    const std::vector<double>& after = reg.at(name).tensor.values();
    if (before != after) throw Error("frozen parameter '" + name + "' changed during adaptation");
  }
  for (const ParamEntry& entry : reg.entries()) reg.set_frozen(entry.name, false);
  result.after_metric = val_bags.empty() ? std::numeric_limits<double>::quiet_NaN() : validation_metric(model, val_bags);
  return result;
}

std::unique_ptr<Model> with_new_head(const Model& src, int classes, std::uint64_t seed) {
  ModelConfig cfg = src.config();
  cfg.classes = classes;
  auto out = std::make_unique<Model>(cfg, seed);
  for (const ParamEntry& entry : src.params().entries()) {
    if (entry.name.rfind("head.", 0) == 0 && classes != src.config().classes) continue;
    Tensor dst = out->params().at(entry.name).tensor;
    dst.values() = entry.tensor.values();
  }
  if (cfg.clustering) {
    out->prompt_bank().ema = src.prompt_bank().ema;
    out->prompt_bank().steps = src.prompt_bank().steps;
  }
  return out;
}

}  // namespace ptcmil
