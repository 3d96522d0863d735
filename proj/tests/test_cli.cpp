#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <doctest.h>

#include "ptcmil/bytes.hpp"

namespace fs = std::filesystem;

namespace {

const std::string kCli = PTCMIL_CLI_PATH;

// Small model and dataset so every invocation stays under a second.
const std::string kTinyModel =
    " --set input_dim=8 --set embed_dim=16 --set clusters=3 --set heads=2";
const std::string kTinyData =
    " --set train_bags=8 --set val_bags=4 --set test_bags=4 --set n_min=5 --set n_max=8";

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::path("/tmp") / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str(const std::string& sub = "") const {
    return sub.empty() ? path.string() : (path / sub).string();
  }
};

int run_cli(const std::string& args, const std::string& log_path) {
  const std::string cmd = kCli + " " + args + " >" + log_path + " 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

bool contains(const std::string& haystack, const std::string& needle) {
  return haystack.find(needle) != std::string::npos;
}

}  // namespace

TEST_CASE("usage and parse failures") {
  TempDir dir("ptcmil_cli_usage");
  const std::string log = dir.str("log.txt");
  CHECK(run_cli("--help", log) == 0);
  CHECK(contains(slurp(log), "gen-data"));
  CHECK(run_cli("", log) == 2);             // a subcommand is required
  CHECK(run_cli("frobnicate", log) == 2);   // unknown subcommand
  CHECK(run_cli("gen-data --bogus x --out " + dir.str("d"), log) == 2);
  CHECK(run_cli("train --out " + dir.str("d"), log) == 2);  // --data is required
}

TEST_CASE("config problems exit 2 with a diagnostic") {
  TempDir dir("ptcmil_cli_config");
  const std::string log = dir.str("log.txt");
  CHECK(run_cli("gen-data --task classification --set lr=0 --out " + dir.str("d"), log) == 2);
  CHECK(contains(slurp(log), "lr"));
  CHECK(run_cli("gen-data --task classification --set patients=300 --out " + dir.str("d"), log) == 2);
  CHECK(contains(slurp(log), "unknown key 'patients'"));
  CHECK(run_cli("gen-data --task classification --set nonsense --out " + dir.str("d"), log) == 2);
  CHECK(run_cli("gen-data --config " + dir.str("missing.cfg") + " --task classification --out " +
                    dir.str("d"),
                log) == 2);
  CHECK(run_cli("gen-data --out " + dir.str("d"), log) == 2);  // task never specified
  CHECK(contains(slurp(log), "task"));
}

TEST_CASE("missing data files exit 3") {
  TempDir dir("ptcmil_cli_data_errors");
  const std::string log = dir.str("log.txt");
  CHECK(run_cli("train --task classification --data " + dir.str("nowhere") + " --out " + dir.str("out"),
                log) == 3);
  CHECK(run_cli("eval --checkpoint " + dir.str("missing.ptck") + " --data " + dir.str("missing.ptcb"),
                log) == 3);
}

TEST_CASE("gradcheck passes clean and flags an injected fault") {
  TempDir dir("ptcmil_cli_gradcheck");
  const std::string log = dir.str("log.txt");
  const std::string base = "gradcheck --task classification --seed 5" + kTinyModel +
                           " --set gradcheck_instances=5";
  CHECK(run_cli(base, log) == 0);
  const std::string out = slurp(log);
  CHECK(contains(out, "result: ok"));
  CHECK(contains(out, "max_rel_error"));
  CHECK(run_cli(base + " --inject-fault head.weight", log) == 4);
  CHECK(contains(slurp(log), "gradient check failed"));
}

TEST_CASE("gen-data is seed-deterministic") {
  TempDir a("ptcmil_cli_gen_a");
  TempDir b("ptcmil_cli_gen_b");
  TempDir c("ptcmil_cli_gen_c");
  const std::string log = a.str("log.txt");
  const std::string flags = "gen-data --task classification --seed 11" + kTinyModel + kTinyData;
  CHECK(run_cli(flags + " --out " + a.str("d"), log) == 0);
  CHECK(run_cli(flags + " --out " + b.str("d"), log) == 0);
  CHECK(run_cli("gen-data --task classification --seed 12" + kTinyModel + kTinyData + " --out " + c.str("d"),
                log) == 0);
  using ptcmil::read_file_bytes;
  CHECK(read_file_bytes(a.str("d/train.ptcb")) == read_file_bytes(b.str("d/train.ptcb")));
  CHECK(read_file_bytes(a.str("d/val.ptcb")) == read_file_bytes(b.str("d/val.ptcb")));
  CHECK(read_file_bytes(a.str("d/train.ptcb")) != read_file_bytes(c.str("d/train.ptcb")));
  // train and val draw from distinct streams
  CHECK(read_file_bytes(a.str("d/train.ptcb")) != read_file_bytes(a.str("d/val.ptcb")));
}

TEST_CASE("gen, train, eval, export, adapt chain") {
  TempDir dir("ptcmil_cli_chain");
  const std::string log = dir.str("log.txt");
  const std::string common = kTinyModel + kTinyData + " --seed 3";

  REQUIRE(run_cli("gen-data --task classification" + common + " --out " + dir.str("data"), log) == 0);
  CHECK(contains(slurp(log), "train_bags: 8"));
  CHECK(fs::exists(dir.str("data/train.ptcb")));
  CHECK(fs::exists(dir.str("data/test.ptcb")));
  CHECK(fs::exists(dir.str("data/train.split")));

  REQUIRE(run_cli("train --task classification" + common + " --set epochs=2 --data " + dir.str("data") +
                      " --out " + dir.str("run"),
                  log) == 0);
  const std::string train_out = slurp(log);
  CHECK(contains(train_out, "variant: clustering=w/ merging=w/ pooling=pro+cls"));
  CHECK(contains(train_out, "best_val_auc:"));
  CHECK(fs::exists(dir.str("run/model.ptck")));
  const std::string history = slurp(dir.str("run/history.csv"));
  CHECK(contains(history, "epoch,train_loss,task_loss,reg_loss,val_metric,lr"));

  REQUIRE(run_cli("eval --checkpoint " + dir.str("run/model.ptck") + " --data " + dir.str("data/test.ptcb") +
                      " --out " + dir.str("run"),
                  log) == 0);
  CHECK(contains(slurp(log), "auc:"));
  CHECK(contains(slurp(dir.str("run/eval.txt")), "bags: 4"));

  REQUIRE(run_cli("export-clusters --checkpoint " + dir.str("run/model.ptck") + " --data " +
                      dir.str("data/test.ptcb") + " --out " + dir.str("run/clusters.csv"),
                  log) == 0);
  const std::string csv = slurp(dir.str("run/clusters.csv"));
  CHECK(contains(csv, "bag_id,patch_index,cluster,max_probability"));
  CHECK(csv.size() > 100);

  REQUIRE(run_cli("adapt --checkpoint " + dir.str("run/model.ptck") + " --data " + dir.str("data/test.ptcb") +
                      " --out " + dir.str("adapted") +
                      " --set shots_per_class=1 --set adapt_epochs=2 --seed 3",
                  log) == 0);
  const std::string adapt_out = slurp(log);
  CHECK(contains(adapt_out, "support_bags: 2"));
  CHECK(contains(adapt_out, "adapted: head.weight head.bias score.weight score.bias"));
  CHECK(contains(adapt_out, "after_auc:"));
  CHECK(fs::exists(dir.str("adapted/adapted.ptck")));

  // adapted checkpoints evaluate like any other
  CHECK(run_cli("eval --checkpoint " + dir.str("adapted/adapted.ptck") + " --data " +
                    dir.str("data/test.ptcb"),
                log) == 0);
}

TEST_CASE("task mismatches between data and model exit 3") {
  TempDir dir("ptcmil_cli_mismatch");
  const std::string log = dir.str("log.txt");
  REQUIRE(run_cli("gen-data --task classification" + kTinyModel + kTinyData + " --seed 4 --out " +
                      dir.str("data"),
                  log) == 0);
  CHECK(run_cli("train --task survival" + kTinyModel + kTinyData + " --set epochs=1 --data " + dir.str("data") +
                    " --out " + dir.str("run"),
                log) == 3);
  CHECK(contains(slurp(log), "classification bags"));
}

TEST_CASE("clustering-off checkpoints refuse cluster export") {
  TempDir dir("ptcmil_cli_no_clusters");
  const std::string log = dir.str("log.txt");
  const std::string common = kTinyModel + kTinyData + " --set clustering=false --seed 6";
  REQUIRE(run_cli("gen-data --task classification" + common + " --out " + dir.str("data"), log) == 0);
  REQUIRE(run_cli("train --task classification" + common + " --set epochs=1 --data " + dir.str("data") +
                      " --out " + dir.str("run"),
                  log) == 0);
  CHECK(contains(slurp(log), "variant: clustering=w/o merging=w/o pooling=cls"));
  CHECK(run_cli("export-clusters --checkpoint " + dir.str("run/model.ptck") + " --data " +
                    dir.str("data/test.ptcb") + " --out " + dir.str("run/clusters.csv"),
                log) == 2);
  CHECK(contains(slurp(log), "clustering disabled"));
}
