#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ptcmil/data.hpp"
#include "ptcmil/model.hpp"
#include "ptcmil/train.hpp"

namespace ptcmil {

// Flat key=value run configuration shared by every CLI subcommand. The key
// set is closed: unknown keys, bad values, and missing required keys are all
// collected and reported together in one ConfigError. `seed` falls back to
// the PTCMIL_SEED environment variable, then to 42.
struct RunConfig {
  Task task = Task::kClassification;
  std::uint64_t seed = 42;

  // model
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

  // optimization
  int epochs = 30;
  double lr = 2e-4;
  double weight_decay = 1e-5;

  // synthetic data
  int train_bags = 200;
  int val_bags = 50;
  int test_bags = 100;
  int n_min = 30;
  int n_max = 80;
  double witness_rate = 0.05;
  double separation = 3.0;
  double component_scale = 1.0;
  double witness_spread = 0.25;
  double censor_rate = 0.3;
  double risk_scale = 1.5;
  std::uint64_t direction_seed = 1;

  // few-shot adaptation
  int shots_per_class = 10;
  int adapt_epochs = 10;
  double adapt_lr = 1e-3;
  bool adapt_prompts = false;

  // gradcheck
  int gradcheck_instances = 12;

  ModelConfig model_config() const;
  FitOptions fit_options() const;
  AdaptOptions adapt_options() const;
  // Split generators share the run seed through distinct derived streams, so
  // train/val/test are disjoint by construction.
  SyntheticClassConfig class_config(int bag_total, int split_index) const;
  SyntheticSurvConfig surv_config(int patient_total, int split_index) const;

  static const std::vector<std::string>& known_keys();
};

// Parses "key = value" lines; '#' starts a comment. Duplicate keys and
// malformed lines are syntax errors.
std::map<std::string, std::string> parse_key_values(const std::string& text);

// Typed construction from a key/value map; collects every problem before
// throwing. Overrides (from CLI flags) are applied after the file map and
// win; they may also introduce keys the file omits.
RunConfig make_run_config(std::map<std::string, std::string> kv,
                          const std::vector<std::pair<std::string, std::string>>& overrides = {});

RunConfig load_run_config(const std::string& path,
                          const std::vector<std::pair<std::string, std::string>>& overrides = {});

}  // namespace ptcmil
