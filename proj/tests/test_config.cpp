#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <doctest.h>

#include "ptcmil/error.hpp"
#include "ptcmil/run_config.hpp"

using namespace ptcmil;

TEST_CASE("key=value parsing trims, skips comments, keeps values verbatim") {
  const auto kv = parse_key_values(
      "# full-line comment\n"
      "task = classification\n"
      "\n"
      "  lr=2e-4   # inline comment\n"
      "pooling = pro+cls\n");
  REQUIRE(kv.size() == 3);
  CHECK(kv.at("task") == "classification");
  CHECK(kv.at("lr") == "2e-4");
  CHECK(kv.at("pooling") == "pro+cls");
}

TEST_CASE("syntax errors are collected with line numbers") {
  try {
    parse_key_values("task = classification\nbogus line\ntask = survival\n= empty\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("config syntax errors") != std::string::npos);
    CHECK(msg.find("line 2") != std::string::npos);
    CHECK(msg.find("duplicate key 'task'") != std::string::npos);
    CHECK(msg.find("line 4") != std::string::npos);
  }
}

TEST_CASE("minimal config takes the documented defaults") {
  const RunConfig cfg = make_run_config({{"task", "classification"}});
  CHECK(cfg.task == Task::kClassification);
  CHECK(cfg.seed == 42);
  CHECK(cfg.embed_dim == 32);
  CHECK(cfg.clusters == 5);
  CHECK(cfg.epochs == 30);
  CHECK(cfg.lr == 2e-4);
  CHECK(cfg.weight_decay == 1e-5);
  CHECK(cfg.alpha == 0.1);
  CHECK(cfg.theta == 0.9);
  CHECK(cfg.pooling == PoolingMode::kPrototypesAndCls);
  CHECK(cfg.clustering);
  CHECK(cfg.merging);
  CHECK(cfg.train_bags == 200);
  CHECK(cfg.shots_per_class == 10);
}

TEST_CASE("every documented key is accepted") {
  std::map<std::string, std::string> kv;
  for (const std::string& key : RunConfig::known_keys()) kv[key] = "";
  kv["task"] = "survival";
  kv["seed"] = "7";
  kv["input_dim"] = "8";
  kv["embed_dim"] = "16";
  kv["clusters"] = "3";
  kv["heads"] = "2";
  kv["classes"] = "2";
  kv["bins"] = "5";
  kv["pooling"] = "pro";
  kv["clustering"] = "on";
  kv["merging"] = "off";
  kv["alpha"] = "0.2";
  kv["theta"] = "0.8";
  kv["epochs"] = "4";
  kv["lr"] = "1e-3";
  kv["weight_decay"] = "0";
  kv["train_bags"] = "20";
  kv["val_bags"] = "10";
  kv["test_bags"] = "10";
  kv["n_min"] = "5";
  kv["n_max"] = "9";
  kv["witness_rate"] = "0.2";
  kv["separation"] = "2.5";
  kv["component_scale"] = "1.5";
  kv["witness_spread"] = "0.5";
  kv["censor_rate"] = "0.25";
  kv["risk_scale"] = "2";
  kv["direction_seed"] = "11";
  kv["shots_per_class"] = "4";
  kv["adapt_epochs"] = "3";
  kv["adapt_lr"] = "5e-3";
  kv["adapt_prompts"] = "true";
  kv["gradcheck_instances"] = "6";
  const RunConfig cfg = make_run_config(kv);
  CHECK(cfg.task == Task::kSurvival);
  CHECK(cfg.bins == 5);
  CHECK(cfg.pooling == PoolingMode::kPrototypes);
  CHECK_FALSE(cfg.merging);
  CHECK(cfg.adapt_prompts);
  CHECK(cfg.gradcheck_instances == 6);
  CHECK(cfg.direction_seed == 11);
  CHECK(cfg.witness_spread == 0.5);
}

TEST_CASE("all problems surface in one error") {
  try {
    make_run_config({{"task", "classification"},
                     {"lr", "0"},
                     {"witness_rate", "1.5"},
                     {"patients", "300"},
                     {"epochs", "abc"}});
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("invalid run config") != std::string::npos);
    CHECK(msg.find("lr: must be positive") != std::string::npos);
    CHECK(msg.find("witness_rate") != std::string::npos);
    CHECK(msg.find("unknown key 'patients'") != std::string::npos);
    CHECK(msg.find("epochs: expected an integer") != std::string::npos);
  }
}

TEST_CASE("task is required") {
  CHECK_THROWS_WITH_AS(make_run_config({{"lr", "1e-4"}}), doctest::Contains("missing required keys: task"),
                       ConfigError);
}

TEST_CASE("bad enum values name the key") {
  CHECK_THROWS_WITH_AS(make_run_config({{"task", "regression"}}), doctest::Contains("task"), ConfigError);
  CHECK_THROWS_WITH_AS(make_run_config({{"task", "classification"}, {"pooling", "max"}}),
                       doctest::Contains("pooling"), ConfigError);
  CHECK_THROWS_WITH_AS(make_run_config({{"task", "classification"}, {"clustering", "maybe"}}),
                       doctest::Contains("boolean"), ConfigError);
}

TEST_CASE("model-level constraints run after field parsing") {
  CHECK_THROWS_WITH_AS(make_run_config({{"task", "classification"}, {"heads", "3"}}),
                       doctest::Contains("heads"), ConfigError);
  CHECK_THROWS_WITH_AS(make_run_config({{"task", "classification"}, {"clusters", "40"}}),
                       doctest::Contains("clusters"), ConfigError);
}

TEST_CASE("seed falls back to the environment only when absent") {
  setenv("PTCMIL_SEED", "777", 1);
  CHECK(make_run_config({{"task", "classification"}}).seed == 777);
  CHECK(make_run_config({{"task", "classification"}, {"seed", "5"}}).seed == 5);
  setenv("PTCMIL_SEED", "not-a-number", 1);
  CHECK_THROWS_WITH_AS(make_run_config({{"task", "classification"}}), doctest::Contains("seed"), ConfigError);
  unsetenv("PTCMIL_SEED");
  CHECK(make_run_config({{"task", "classification"}}).seed == 42);
}

TEST_CASE("overrides beat the file map and may add keys") {
  const RunConfig cfg = make_run_config({{"task", "classification"}, {"lr", "1e-3"}},
                                        {{"lr", "5e-4"}, {"epochs", "3"}});
  CHECK(cfg.lr == 5e-4);
  CHECK(cfg.epochs == 3);
  const RunConfig cfg2 = make_run_config({}, {{"task", "survival"}});
  CHECK(cfg2.task == Task::kSurvival);
}

TEST_CASE("config files load from disk") {
  const std::string path = "/tmp/ptcmil_test_config.cfg";
  {
    std::ofstream out(path);
    out << "task = classification\nepochs = 2\nlr = 1e-3\n";
  }
  const RunConfig cfg = load_run_config(path, {{"epochs", "5"}});
  CHECK(cfg.epochs == 5);
  CHECK(cfg.lr == 1e-3);
  std::remove(path.c_str());
  CHECK_THROWS_AS(load_run_config("/tmp/ptcmil_no_such_config.cfg"), ConfigError);
}

TEST_CASE("converters map the run config onto module options") {
  RunConfig cfg = make_run_config({{"task", "survival"}, {"seed", "9"}, {"bins", "6"}});
  const ModelConfig m = cfg.model_config();
  CHECK(m.task == Task::kSurvival);
  CHECK(m.bins == 6);
  const FitOptions f = cfg.fit_options();
  CHECK(f.epochs == cfg.epochs);
  CHECK(f.base_lr == cfg.lr);
  CHECK(f.seed == 9);
  const AdaptOptions a = cfg.adapt_options();
  CHECK(a.epochs == cfg.adapt_epochs);
  CHECK(a.lr == cfg.adapt_lr);

  const SyntheticClassConfig c0 = cfg.class_config(20, 0);
  const SyntheticClassConfig c1 = cfg.class_config(20, 1);
  CHECK(c0.bags_per_class == 10);
  CHECK(c0.feature_dim == cfg.input_dim);
  CHECK(c0.seed != c1.seed);  // distinct splits draw from distinct streams
  CHECK(c0.direction_seed == c1.direction_seed);
  CHECK_THROWS_AS(cfg.class_config(21, 0), ConfigError);

  const SyntheticSurvConfig s = cfg.surv_config(30, 2);
  CHECK(s.patients == 30);
  CHECK(s.bins == 6);
  CHECK(s.seed != c0.seed);
}

TEST_CASE("known_keys covers the closed key set") {
  const std::vector<std::string>& keys = RunConfig::known_keys();
  CHECK(keys.size() == 33);
  for (const std::string& k : {"task", "seed", "pooling", "adapt_prompts", "gradcheck_instances"}) {
    CHECK(std::find(keys.begin(), keys.end(), k) != keys.end());
  }
  CHECK(std::find(keys.begin(), keys.end(), "patients") == keys.end());
}
