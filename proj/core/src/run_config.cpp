#include "ptcmil/run_config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "ptcmil/error.hpp"

namespace ptcmil {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

// Parse helpers append to `errors` instead of throwing, so one pass reports
// every bad value at once.
class FieldParser {
 public:
  FieldParser(std::map<std::string, std::string> kv, std::vector<std::string>& errors)
      : kv_(std::move(kv)), errors_(errors) {}

  bool has(const std::string& key) const { return kv_.count(key) != 0; }

  void take_int(const std::string& key, int& out) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return;
    consumed_.insert(it->first);
    try {
      std::size_t pos = 0;
      const long long v = std::stoll(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("trailing");
      out = static_cast<int>(v);
      if (static_cast<long long>(out) != v) throw std::out_of_range("range");
    } catch (const std::exception&) {
      errors_.push_back(key + ": expected an integer, got '" + it->second + "'");
    }
  }

  void take_u64(const std::string& key, std::uint64_t& out) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return;
    consumed_.insert(it->first);
    try {
      std::size_t pos = 0;
      const unsigned long long v = std::stoull(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("trailing");
      out = static_cast<std::uint64_t>(v);
    } catch (const std::exception&) {
      errors_.push_back(key + ": expected an unsigned integer, got '" + it->second + "'");
    }
  }

  void take_double(const std::string& key, double& out) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return;
    consumed_.insert(it->first);
    try {
      std::size_t pos = 0;
      const double v = std::stod(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("trailing");
      out = v;
    } catch (const std::exception&) {
      errors_.push_back(key + ": expected a number, got '" + it->second + "'");
    }
  }

  void take_bool(const std::string& key, bool& out) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return;
    consumed_.insert(it->first);
    const std::string& v = it->second;
    if (v == "true" || v == "1" || v == "on") out = true;
    else if (v == "false" || v == "0" || v == "off") out = false;
    else errors_.push_back(key + ": expected a boolean (true/false/on/off/1/0), got '" + v + "'");
  }

  void take_string(const std::string& key, std::string& out) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return;
    consumed_.insert(it->first);
    out = it->second;
  }

  void report_unknown() {
    for (const auto& [key, value] : kv_) {
      if (consumed_.count(key) == 0) errors_.push_back("unknown key '" + key + "'");
    }
  }

 private:
  std::map<std::string, std::string> kv_;
  std::set<std::string> consumed_;
  std::vector<std::string>& errors_;
};

}  // namespace

const std::vector<std::string>& RunConfig::known_keys() {
  static const std::vector<std::string> keys = {
      "task", "seed",
      "input_dim", "embed_dim", "clusters", "heads", "classes", "bins",
      "pooling", "clustering", "merging", "alpha", "theta",
      "epochs", "lr", "weight_decay",
      "train_bags", "val_bags", "test_bags", "n_min", "n_max",
      "witness_rate", "separation", "component_scale", "witness_spread",
      "censor_rate", "risk_scale", "direction_seed",
      "shots_per_class", "adapt_epochs", "adapt_lr", "adapt_prompts",
      "gradcheck_instances",
  };
  return keys;
}

std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  std::vector<std::string> errors;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      errors.push_back("line " + std::to_string(line_no) + ": expected 'key = value', got '" + line + "'");
      continue;
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      errors.push_back("line " + std::to_string(line_no) + ": empty key");
      continue;
    }
    if (!kv.emplace(key, value).second) {
      errors.push_back("line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
  }
  if (!errors.empty()) {
    std::string msg = "config syntax errors:";
    for (const std::string& e : errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  return kv;
}

RunConfig make_run_config(std::map<std::string, std::string> kv,
                          const std::vector<std::pair<std::string, std::string>>& overrides) {
  for (const auto& [key, value] : overrides) kv[key] = value;
  if (kv.count("seed") == 0) {
    if (const char* env = std::getenv("PTCMIL_SEED")) kv["seed"] = env;
  }
  std::vector<std::string> errors;
  FieldParser p(std::move(kv), errors);

  std::vector<std::string> missing;
  if (!p.has("task")) missing.push_back("task");
  if (!missing.empty()) {
    std::string msg = "missing required keys:";
    for (const std::string& m : missing) msg += " " + m;
    errors.push_back(msg);
  }

  RunConfig cfg;
  std::string task_str = "classification";
  std::string pooling_str = "pro+cls";
  p.take_string("task", task_str);
  p.take_u64("seed", cfg.seed);
  p.take_int("input_dim", cfg.input_dim);
  p.take_int("embed_dim", cfg.embed_dim);
  p.take_int("clusters", cfg.clusters);
  p.take_int("heads", cfg.heads);
  p.take_int("classes", cfg.classes);
  p.take_int("bins", cfg.bins);
  p.take_string("pooling", pooling_str);
  p.take_bool("clustering", cfg.clustering);
  p.take_bool("merging", cfg.merging);
  p.take_double("alpha", cfg.alpha);
  p.take_double("theta", cfg.theta);
  p.take_int("epochs", cfg.epochs);
  p.take_double("lr", cfg.lr);
  p.take_double("weight_decay", cfg.weight_decay);
  p.take_int("train_bags", cfg.train_bags);
  p.take_int("val_bags", cfg.val_bags);
  p.take_int("test_bags", cfg.test_bags);
  p.take_int("n_min", cfg.n_min);
  p.take_int("n_max", cfg.n_max);
  p.take_double("witness_rate", cfg.witness_rate);
  p.take_double("separation", cfg.separation);
  p.take_double("component_scale", cfg.component_scale);
  p.take_double("witness_spread", cfg.witness_spread);
  p.take_double("censor_rate", cfg.censor_rate);
  p.take_double("risk_scale", cfg.risk_scale);
  p.take_u64("direction_seed", cfg.direction_seed);
  p.take_int("shots_per_class", cfg.shots_per_class);
  p.take_int("adapt_epochs", cfg.adapt_epochs);
  p.take_double("adapt_lr", cfg.adapt_lr);
  p.take_bool("adapt_prompts", cfg.adapt_prompts);
  p.take_int("gradcheck_instances", cfg.gradcheck_instances);
  p.report_unknown();

  try {
    cfg.task = parse_task(task_str);
  } catch (const ValueError& e) {
    errors.push_back(std::string("task: ") + e.what());
  }
  try {
    cfg.pooling = parse_pooling_mode(pooling_str);
  } catch (const ValueError& e) {
    errors.push_back(std::string("pooling: ") + e.what());
  }

  if (cfg.epochs < 0) errors.push_back("epochs: must be non-negative");
  if (!(cfg.lr > 0.0)) errors.push_back("lr: must be positive");
  if (cfg.weight_decay < 0.0) errors.push_back("weight_decay: must be non-negative");
  if (cfg.train_bags < 1) errors.push_back("train_bags: must be positive");
  if (cfg.val_bags < 1) errors.push_back("val_bags: must be positive");
  if (cfg.test_bags < 1) errors.push_back("test_bags: must be positive");
  if (cfg.n_min < 1) errors.push_back("n_min: must be at least 1");
  if (cfg.n_max < cfg.n_min) errors.push_back("n_max: must be >= n_min");
  if (!(cfg.witness_rate > 0.0) || cfg.witness_rate > 1.0) errors.push_back("witness_rate: must lie in (0, 1]");
  if (!(cfg.separation > 0.0)) errors.push_back("separation: must be positive");
  if (!(cfg.component_scale > 0.0)) errors.push_back("component_scale: must be positive");
  if (!(cfg.witness_spread > 0.0)) errors.push_back("witness_spread: must be positive");
  if (cfg.censor_rate < 0.0 || cfg.censor_rate >= 1.0) errors.push_back("censor_rate: must lie in [0, 1)");
  if (!(cfg.risk_scale > 0.0)) errors.push_back("risk_scale: must be positive");
  if (cfg.shots_per_class < 1) errors.push_back("shots_per_class: must be positive");
  if (cfg.adapt_epochs < 1) errors.push_back("adapt_epochs: must be positive");
  if (!(cfg.adapt_lr > 0.0)) errors.push_back("adapt_lr: must be positive");
  if (cfg.gradcheck_instances < 1) errors.push_back("gradcheck_instances: must be positive");

  if (errors.empty()) {
    try {
      cfg.model_config().validate();
    } catch (const ConfigError& e) {
      errors.push_back(e.what());
    }
  }
  if (!errors.empty()) {
    std::string msg = "invalid run config:";
    for (const std::string& e : errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path,
                          const std::vector<std::pair<std::string, std::string>>& overrides) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return make_run_config(parse_key_values(text.str()), overrides);
}

ModelConfig RunConfig::model_config() const {
  ModelConfig m;
  m.task = task;
  m.input_dim = input_dim;
  m.embed_dim = embed_dim;
  m.clusters = clusters;
  m.heads = heads;
  m.classes = classes;
  m.bins = bins;
  m.pooling = pooling;
  m.clustering = clustering;
  m.merging = merging;
  m.alpha = alpha;
  m.theta = theta;
  return m;
}

FitOptions RunConfig::fit_options() const {
  FitOptions f;
  f.epochs = epochs;
  f.base_lr = lr;
  f.seed = seed;
  return f;
}

AdaptOptions RunConfig::adapt_options() const {
  AdaptOptions a;
  a.epochs = adapt_epochs;
  a.lr = adapt_lr;
  a.adapt_prompts = adapt_prompts;
  a.seed = Rng::derive_seed(seed, 0x61646170ull);
  return a;
}

SyntheticClassConfig RunConfig::class_config(int bag_total, int split_index) const {
  if (bag_total < 2 || bag_total % 2 != 0) {
    throw ConfigError("split sizes must be positive and even for balanced classes, got " + std::to_string(bag_total));
  }
  SyntheticClassConfig c;
  c.bags_per_class = bag_total / 2;
  c.n_min = n_min;
  c.n_max = n_max;
  c.feature_dim = input_dim;
  c.witness_rate = witness_rate;
  c.component_scale = component_scale;
  c.separation = separation;
  c.witness_spread = witness_spread;
  c.seed = Rng::derive_seed(seed, 0x73706c6974ull + static_cast<std::uint64_t>(split_index));
  c.direction_seed = direction_seed;
  return c;
}

SyntheticSurvConfig RunConfig::surv_config(int patient_total, int split_index) const {
  SyntheticSurvConfig c;
  c.patients = patient_total;
  c.n_min = n_min;
  c.n_max = n_max;
  c.feature_dim = input_dim;
  c.censor_rate = censor_rate;
  c.bins = bins;
  c.risk_scale = risk_scale;
  c.seed = Rng::derive_seed(seed, 0x73706c6974ull + static_cast<std::uint64_t>(split_index));
  c.direction_seed = direction_seed;
  return c;
}

}  // namespace ptcmil
