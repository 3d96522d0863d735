// ptcmil command line: synthetic data generation, training, evaluation,
// few-shot adaptation, cluster export, and gradient checking.
//
// Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "ptcmil/checkpoint.hpp"
#include "ptcmil/data.hpp"
#include "ptcmil/error.hpp"
#include "ptcmil/gradcheck.hpp"
#include "ptcmil/model.hpp"
#include "ptcmil/run_config.hpp"
#include "ptcmil/train.hpp"

namespace fs = std::filesystem;
using namespace ptcmil;

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> sets;
  std::string seed;
  std::string task;
};

std::vector<std::pair<std::string, std::string>> collect_overrides(const CommonArgs& args) {
  std::vector<std::pair<std::string, std::string>> overrides;
  for (const std::string& kv : args.sets) {
    const std::size_t eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("--set expects key=value, got '" + kv + "'");
    }
    overrides.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!args.task.empty()) overrides.emplace_back("task", args.task);
  if (!args.seed.empty()) overrides.emplace_back("seed", args.seed);
  return overrides;
}

RunConfig load_config(const CommonArgs& args) {
  const auto overrides = collect_overrides(args);
  if (args.config_path.empty()) return make_run_config({}, overrides);
  return load_run_config(args.config_path, overrides);
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory " + dir + ": " + ec.message());
}

void check_task_match(const std::vector<BagRecord>& bags, Task task, const std::string& path) {
  if (!bags.empty() && bags.front().is_survival() != (task == Task::kSurvival)) {
    throw DataError(path + " holds " + task_name(bags.front().is_survival() ? Task::kSurvival : Task::kClassification) +
                    " bags but the model task is " + task_name(task));
  }
}

int run_gen_data(const CommonArgs& args, const std::string& out_dir) {
  const RunConfig cfg = load_config(args);
  ensure_dir(out_dir);
  const std::vector<std::pair<std::string, int>> splits = {
      {"train", cfg.train_bags}, {"val", cfg.val_bags}, {"test", cfg.test_bags}};
  for (std::size_t i = 0; i < splits.size(); ++i) {
    std::vector<BagRecord> bags;
    if (cfg.task == Task::kClassification) {
      bags = gen_classification_bags(cfg.class_config(splits[i].second, static_cast<int>(i)));
    } else {
      bags = gen_survival_bags(cfg.surv_config(splits[i].second, static_cast<int>(i)));
    }
    const std::string base = out_dir + "/" + splits[i].first;
    write_bags(base + ".ptcb", bags, cfg.task);
    write_split_manifest(base + ".split", bags);
    std::cout << splits[i].first << "_bags: " << bags.size() << "\n";
  }
  std::cout << "task: " << task_name(cfg.task) << "\n";
  std::cout << "out: " << out_dir << "\n";
  return 0;
}

int run_train(const CommonArgs& args, const std::string& data_dir, const std::string& out_dir) {
  const RunConfig cfg = load_config(args);
  const std::vector<BagRecord> train_bags = read_bags(data_dir + "/train.ptcb");
  const std::vector<BagRecord> val_bags = read_bags(data_dir + "/val.ptcb");
  check_task_match(train_bags, cfg.task, data_dir + "/train.ptcb");
  check_task_match(val_bags, cfg.task, data_dir + "/val.ptcb");
  ensure_dir(out_dir);
  Model model(cfg.model_config(), cfg.seed);
  AdamConfig adam_cfg;
  adam_cfg.weight_decay = cfg.weight_decay;
  Adam opt(adam_cfg);
  const FitResult result = fit(model, opt, train_bags, val_bags, cfg.fit_options());
  write_file_bytes(out_dir + "/model.ptck", result.best_checkpoint);
  write_history_csv(out_dir + "/history.csv", result);
  std::cout << "task: " << task_name(cfg.task) << "\n";
  std::cout << "variant: " << model.config().ablation_label() << "\n";
  std::cout << "params: " << model.params().scalar_count() << "\n";
  std::cout << "epochs: " << result.history.size() << "\n";
  std::cout << "best_epoch: " << result.best_epoch << "\n";
  std::cout << "best_val_" << result.metric_name << ": " << result.best_metric << "\n";
  std::cout << "checkpoint: " << out_dir << "/model.ptck" << "\n";
  return 0;
}

int run_eval(const std::string& checkpoint_path, const std::string& data_path, const std::string& out_dir) {
  LoadedCheckpoint loaded = read_checkpoint(checkpoint_path);
  const std::vector<BagRecord> bags = read_bags(data_path);
  check_task_match(bags, loaded.model->config().task, data_path);
  const EvalReport report = evaluate_bags(*loaded.model, bags);
  std::ostringstream lines;
  lines << "task: " << task_name(loaded.model->config().task) << "\n";
  lines << "variant: " << loaded.model->config().ablation_label() << "\n";
  lines << "bags: " << report.bag_count << "\n";
  lines << report.metric_name << ": " << report.metric << "\n";
  lines << "mean_task_loss: " << report.mean_task_loss << "\n";
  std::cout << lines.str();
  if (!out_dir.empty()) {
    ensure_dir(out_dir);
    std::ofstream out(out_dir + "/eval.txt");
    if (!out) throw DataError("cannot write " + out_dir + "/eval.txt");
    out << lines.str();
  }
  return 0;
}

int run_adapt(const CommonArgs& args, const std::string& checkpoint_path, const std::string& data_path,
              const std::string& out_dir) {
  LoadedCheckpoint loaded = read_checkpoint(checkpoint_path);
  Model& model = *loaded.model;
  CommonArgs args_with_task = args;
  args_with_task.task = task_name(model.config().task);  // checkpoint is authoritative
  const RunConfig cfg = load_config(args_with_task);
  if (model.config().task != Task::kClassification) {
    throw ConfigError("adapt supports classification checkpoints only");
  }
  std::vector<BagRecord> pool = read_bags(data_path);
  check_task_match(pool, model.config().task, data_path);
  const std::vector<BagRecord> support = select_balanced(pool, cfg.shots_per_class, cfg.seed);
  std::vector<BagRecord> val_bags;
  for (const BagRecord& bag : pool) {
    bool in_support = false;
    for (const BagRecord& s : support) {
      if (s.id == bag.id) {
        in_support = true;
        break;
      }
    }
    if (!in_support) val_bags.push_back(bag);
  }
  ensure_dir(out_dir);
  const AdaptResult result = few_shot_adapt(model, support, val_bags, cfg.adapt_options());
  write_checkpoint(out_dir + "/adapted.ptck", model, nullptr);
  std::cout << "support_bags: " << support.size() << "\n";
  std::cout << "val_bags: " << val_bags.size() << "\n";
  std::cout << "adapted:";
  for (const std::string& name : result.adapted) std::cout << ' ' << name;
  std::cout << "\n";
  std::cout << "before_" << result.fit.metric_name << ": " << result.before_metric << "\n";
  std::cout << "after_" << result.fit.metric_name << ": " << result.after_metric << "\n";
  std::cout << "checkpoint: " << out_dir << "/adapted.ptck" << "\n";
  return 0;
}

int run_export_clusters(const std::string& checkpoint_path, const std::string& data_path,
                        const std::string& out_path) {
  LoadedCheckpoint loaded = read_checkpoint(checkpoint_path);
  Model& model = *loaded.model;
  if (!model.config().clustering) {
    throw ConfigError("checkpoint has clustering disabled; nothing to export");
  }
  const std::vector<BagRecord> bags = read_bags(data_path);
  check_task_match(bags, model.config().task, data_path);
  std::ofstream out(out_path);
  if (!out) throw DataError("cannot write " + out_path);
  out << "bag_id,patch_index,cluster,max_probability\n";
  out.precision(17);
  const int c = model.config().clusters;
  for (const BagRecord& bag : bags) {
    const Model::Evaluation ev = model.evaluate(bag.features_tensor());
    for (int i = 0; i < bag.instance_count; ++i) {
      const int cluster = ev.cluster_labels[static_cast<std::size_t>(i)];
      const double p = ev.assignment[static_cast<std::size_t>(i) * c + cluster];
      out << bag.id << ',' << i << ',' << cluster << ',' << p << "\n";
    }
  }
  if (!out) throw DataError("failed writing " + out_path);
  std::cout << "bags: " << bags.size() << "\n";
  std::cout << "out: " << out_path << "\n";
  return 0;
}

int run_gradcheck(const CommonArgs& args, const std::string& inject_fault) {
  const RunConfig cfg = load_config(args);
  Model model(cfg.model_config(), cfg.seed);
  Rng rng(Rng::derive_seed(cfg.seed, 0x67636b00ull));
  const int n = cfg.gradcheck_instances;
  std::vector<double> feats(static_cast<std::size_t>(n) * cfg.input_dim);
  for (double& v : feats) v = rng.normal();
  const Tensor features = Tensor::from_values(n, cfg.input_dim, feats);
  BagLabel label;
  if (cfg.task == Task::kClassification) {
    label = rng.uniform_int(0, cfg.classes - 1);
  } else {
    SurvivalLabel s;
    s.time_bin = rng.uniform_int(0, cfg.bins - 1);
    s.censored = rng.uniform_int(0, 1);
    label = s;
  }
  // Pure loss closure: the EMA blend is rebuilt from the stored shadow each
  // call and never committed, so repeated evaluations agree.
  auto build_loss = [&]() {
    Model::Forward fw = model.forward(features, true);
    Tensor loss = model.task_loss(fw.logits, label);
    if (model.config().clustering) {
      const PromptBank& bank = model.prompt_bank();
      Tensor blended = add(scale(bank.ema_tensor(), bank.theta), scale(fw.prompts_refined, 1.0 - bank.theta));
      loss = add(loss, scale(reg_loss(blended), model.config().alpha));
    }
    return loss;
  };
  const GradCheckReport report =
      finite_diff_check_detail(build_loss, model.params().tensors(), 1e-5, inject_fault.empty() ? 1.0 : 2.0,
                               inject_fault);
  std::cout << "task: " << task_name(cfg.task) << "\n";
  std::cout << "instances: " << n << "\n";
  std::cout << "scalars_checked: " << report.scalars_checked << "\n";
  std::cout << "max_rel_error: " << report.max_rel_error << "\n";
  std::cout << "worst_param: " << report.worst_param << "[" << report.worst_index << "]\n";
  if (report.max_rel_error >= 1e-4) {
    throw NumericError("gradient check failed: max relative error " + std::to_string(report.max_rel_error));
  }
  std::cout << "result: ok\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"prompt-token clustering aggregator for multiple-instance learning"};
  app.require_subcommand(1);

  CommonArgs gen_args;
  std::string gen_out;
  CLI::App* gen = app.add_subcommand("gen-data", "generate synthetic bag datasets");
  gen->add_option("--task", gen_args.task, "classification or survival");
  gen->add_option("--config", gen_args.config_path, "run config file");
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--set", gen_args.sets, "override config key=value");
  gen->add_option("--seed", gen_args.seed, "override seed");

  CommonArgs train_args;
  std::string train_data;
  std::string train_out;
  CLI::App* train = app.add_subcommand("train", "train a model");
  train->add_option("--config", train_args.config_path, "run config file");
  train->add_option("--data", train_data, "directory with train.ptcb and val.ptcb")->required();
  train->add_option("--out", train_out, "output directory")->required();
  train->add_option("--set", train_args.sets, "override config key=value");
  train->add_option("--seed", train_args.seed, "override seed");
  train->add_option("--task", train_args.task, "classification or survival");

  std::string eval_ckpt;
  std::string eval_data;
  std::string eval_out;
  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on a bag file");
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint path")->required();
  eval->add_option("--data", eval_data, "bag file")->required();
  eval->add_option("--out", eval_out, "optional output directory");

  CommonArgs adapt_args;
  std::string adapt_ckpt;
  std::string adapt_data;
  std::string adapt_out;
  CLI::App* adapt = app.add_subcommand("adapt", "few-shot adapt a checkpoint to a target pool");
  adapt->add_option("--checkpoint", adapt_ckpt, "checkpoint path")->required();
  adapt->add_option("--data", adapt_data, "target bag pool")->required();
  adapt->add_option("--out", adapt_out, "output directory")->required();
  adapt->add_option("--config", adapt_args.config_path, "run config file");
  adapt->add_option("--set", adapt_args.sets, "override config key=value");
  adapt->add_option("--seed", adapt_args.seed, "override seed");

  std::string export_ckpt;
  std::string export_data;
  std::string export_out;
  CLI::App* exp = app.add_subcommand("export-clusters", "write per-patch cluster assignments");
  exp->add_option("--checkpoint", export_ckpt, "checkpoint path")->required();
  exp->add_option("--data", export_data, "bag file")->required();
  exp->add_option("--out", export_out, "output csv path")->required();

  CommonArgs gc_args;
  std::string gc_fault;
  CLI::App* gc = app.add_subcommand("gradcheck", "finite-difference check of the full training loss");
  gc->add_option("--config", gc_args.config_path, "run config file");
  gc->add_option("--set", gc_args.sets, "override config key=value");
  gc->add_option("--seed", gc_args.seed, "override seed");
  gc->add_option("--task", gc_args.task, "classification or survival");
  gc->add_option("--inject-fault", gc_fault, "scale one parameter's gradient by 2 (test hook)");

  try {
    app.parse(argc, argv);
    if (gen->parsed()) return run_gen_data(gen_args, gen_out);
    if (train->parsed()) return run_train(train_args, train_data, train_out);
    if (eval->parsed()) return run_eval(eval_ckpt, eval_data, eval_out);
    if (adapt->parsed()) return run_adapt(adapt_args, adapt_ckpt, adapt_data, adapt_out);
    if (exp->parsed()) return run_export_clusters(export_ckpt, export_data, export_out);
    if (gc->parsed()) return run_gradcheck(gc_args, gc_fault);
    return 2;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ValueError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
