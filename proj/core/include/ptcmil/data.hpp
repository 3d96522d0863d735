#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "ptcmil/heads.hpp"
#include "ptcmil/tensor.hpp"

namespace ptcmil {

enum class Task { kClassification, kSurvival };

std::string task_name(Task task);
Task parse_task(const std::string& name);

using BagLabel = std::variant<int, SurvivalLabel>;

struct BagRecord {
  std::string id;
  int instance_count = 0;
  int feature_dim = 0;
  std::vector<double> features;  // row-major, instance_count x feature_dim
  BagLabel label = 0;
  std::string config_hash;
  std::uint64_t seed = 0;

  bool is_survival() const { return std::holds_alternative<SurvivalLabel>(label); }
  int class_label() const;
  SurvivalLabel survival_label() const;
  Tensor features_tensor() const;
  std::vector<double> mean_features() const;
};

// Witness-detection task: background instances are N(0, scale^2 I); positive
// bags carry ceil(witness_rate * N) instances from the witness component, a
// concentrated cluster at separation * scale along a unit direction drawn
// from direction_seed with st. dev. witness_spread * scale per coordinate.
struct SyntheticClassConfig {
  int bags_per_class = 100;
  int n_min = 30;
  int n_max = 80;
  int feature_dim = 16;
  double witness_rate = 0.05;
  double component_scale = 1.0;
  double separation = 3.0;
  double witness_spread = 0.25;
  std::uint64_t seed = 1;
  std::uint64_t direction_seed = 1;

  void validate() const;
  std::string hash() const;
};

std::vector<BagRecord> gen_classification_bags(const SyntheticClassConfig& cfg);

// Survival task: each patient has a latent shift along a unit risk direction;
// event time is exponential with rate exp(risk_scale * risk), risk being the
// mean projection of the patient's instances onto the direction. Bin
// cut-points are quantiles of the uncensored times only.
struct SyntheticSurvConfig {
  int patients = 300;
  int n_min = 30;
  int n_max = 80;
  int feature_dim = 16;
  double censor_rate = 0.3;
  int bins = 4;
  double risk_scale = 1.5;
  std::vector<double> risk_direction;  // empty -> drawn from direction_seed
  std::uint64_t seed = 1;
  std::uint64_t direction_seed = 1;

  void validate() const;
  std::string hash() const;
};

std::vector<BagRecord> gen_survival_bags(const SyntheticSurvConfig& cfg);

// Interior quantile cut-points: cuts[k-1] = sorted(times)[floor(k*M/bins)],
// k = 1..bins-1. Requires at least `bins` samples.
std::vector<double> quantile_cuts(std::vector<double> times, int bins);

// Index of the half-open interval [cut_{r}, cut_{r+1}) containing t, with
// cut_0 = -inf and cut_bins = +inf.
int bin_of(double t, const std::vector<double>& cuts);

// Bag container format. Round trips are byte-exact; truncated or corrupt
// files raise DataError naming the bag index and byte offset.
void write_bags(const std::string& path, const std::vector<BagRecord>& bags, Task task);
void write_bags(const std::string& path, const std::vector<BagRecord>& bags);
std::vector<BagRecord> read_bags(const std::string& path);

std::vector<std::uint8_t> serialize_bags(const std::vector<BagRecord>& bags, Task task);
std::vector<BagRecord> deserialize_bags(const std::vector<std::uint8_t>& bytes);

void write_split_manifest(const std::string& path, const std::vector<BagRecord>& bags);
std::vector<std::string> read_split_manifest(const std::string& path);

// Deterministically picks `per_class` bags of each binary class.
std::vector<BagRecord> select_balanced(const std::vector<BagRecord>& bags, int per_class, std::uint64_t seed);

}  // namespace ptcmil
