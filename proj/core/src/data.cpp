#include "ptcmil/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <sstream>

#include "ptcmil/bytes.hpp"
#include "ptcmil/error.hpp"
#include "ptcmil/rng.hpp"

namespace ptcmil {

namespace {

constexpr char kBagMagic[4] = {'P', 'T', 'C', 'B'};
constexpr std::uint32_t kBagVersion = 1;

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  std::ostringstream out;
  out << std::hex << h;
  return out.str();
}

std::vector<double> unit_direction(int dim, std::uint64_t direction_seed) {
  Rng rng(Rng::derive_seed(direction_seed, 0x64697265ull));  // namespaced stream for directions
  std::vector<double> u(static_cast<std::size_t>(dim));
  double norm2 = 0.0;
  do {
    norm2 = 0.0;
    for (double& v : u) {
      v = rng.normal();
      norm2 += v * v;
    }
  } while (norm2 < 1e-24);
  const double inv = 1.0 / std::sqrt(norm2);
  for (double& v : u) v *= inv;
  return u;
}

void check_instance_range(int n_min, int n_max) {
  if (n_min < 1) throw ValueError("n_min must be at least 1, got " + std::to_string(n_min));
  if (n_max < n_min) {
    throw ValueError("n_max (" + std::to_string(n_max) + ") must be >= n_min (" + std::to_string(n_min) + ")");
  }
}

}  // namespace

std::string task_name(Task task) {
  return task == Task::kClassification ? "classification" : "survival";
}

Task parse_task(const std::string& name) {
  if (name == "classification") return Task::kClassification;
  if (name == "survival") return Task::kSurvival;
  throw ValueError("unknown task '" + name + "' (expected classification or survival)");
}

int BagRecord::class_label() const {
  if (const int* l = std::get_if<int>(&label)) return *l;
  throw ValueError("bag " + id + " carries a survival label, not a class label");
}

SurvivalLabel BagRecord::survival_label() const {
  if (const SurvivalLabel* l = std::get_if<SurvivalLabel>(&label)) return *l;
  throw ValueError("bag " + id + " carries a class label, not a survival label");
}

Tensor BagRecord::features_tensor() const {
  if (instance_count < 1) throw DataError("bag " + id + " has no instances");
  return Tensor::from_values(instance_count, feature_dim, features);
}

std::vector<double> BagRecord::mean_features() const {
  std::vector<double> mean(static_cast<std::size_t>(feature_dim), 0.0);
  for (int i = 0; i < instance_count; ++i) {
    for (int k = 0; k < feature_dim; ++k) {
      mean[static_cast<std::size_t>(k)] += features[static_cast<std::size_t>(i) * feature_dim + k];
    }
  }
  for (double& v : mean) v /= instance_count;
  return mean;
}

void SyntheticClassConfig::validate() const {
  if (bags_per_class < 1) throw ValueError("bags_per_class must be positive");
  check_instance_range(n_min, n_max);
  if (feature_dim < 1) throw ValueError("feature_dim must be positive");
  if (!(witness_rate > 0.0) || witness_rate > 1.0) {
    throw ValueError("witness_rate must lie in (0, 1], got " + std::to_string(witness_rate));
  }
  if (!(component_scale > 0.0)) throw ValueError("component_scale must be positive");
  if (!(separation > 0.0)) throw ValueError("separation must be positive");
  if (!(witness_spread > 0.0)) throw ValueError("witness_spread must be positive");
}

std::string SyntheticClassConfig::hash() const {
  std::ostringstream s;
  s << "cls|" << bags_per_class << '|' << n_min << '|' << n_max << '|' << feature_dim << '|' << witness_rate
    << '|' << component_scale << '|' << separation << '|' << witness_spread << '|' << seed << '|' << direction_seed;
  return fnv1a_hex(s.str());
}

std::vector<BagRecord> gen_classification_bags(const SyntheticClassConfig& cfg) {
  cfg.validate();
  const std::vector<double> dir = unit_direction(cfg.feature_dim, cfg.direction_seed);
  const std::string hash = cfg.hash();
  std::vector<BagRecord> bags;
  bags.reserve(static_cast<std::size_t>(cfg.bags_per_class) * 2);
  for (int idx = 0; idx < cfg.bags_per_class * 2; ++idx) {
    const int label = idx % 2;  // alternate so any prefix is near-balanced
    const std::uint64_t bag_seed = Rng::derive_seed(cfg.seed, static_cast<std::uint64_t>(idx));
    Rng rng(bag_seed);
    BagRecord bag;
    bag.id = "cls-" + std::to_string(cfg.seed) + "-" + std::to_string(idx);
    bag.feature_dim = cfg.feature_dim;
    bag.instance_count = rng.uniform_int(cfg.n_min, cfg.n_max);
    bag.label = label;
    bag.config_hash = hash;
    bag.seed = bag_seed;
    const int witnesses = label == 1 ? static_cast<int>(std::ceil(cfg.witness_rate * bag.instance_count)) : 0;
    bag.features.resize(static_cast<std::size_t>(bag.instance_count) * cfg.feature_dim);
    for (int i = 0; i < bag.instance_count; ++i) {
      const bool witness = i < witnesses;
      for (int k = 0; k < cfg.feature_dim; ++k) {
        double v;
        if (witness) {
          v = cfg.component_scale * (cfg.separation * dir[static_cast<std::size_t>(k)] + cfg.witness_spread * rng.normal());
        } else {
          v = cfg.component_scale * rng.normal();
        }
        bag.features[static_cast<std::size_t>(i) * cfg.feature_dim + k] = v;
      }
    }
    bags.push_back(std::move(bag));
  }
  return bags;
}

void SyntheticSurvConfig::validate() const {
  if (patients < 1) throw ValueError("patients must be positive");
  check_instance_range(n_min, n_max);
  if (feature_dim < 1) throw ValueError("feature_dim must be positive");
  if (censor_rate < 0.0 || censor_rate >= 1.0) {
    throw ValueError("censor_rate must lie in [0, 1), got " + std::to_string(censor_rate));
  }
  if (bins < 2) throw ValueError("bins must be at least 2");
  if (!(risk_scale > 0.0)) throw ValueError("risk_scale must be positive");
  if (!risk_direction.empty() && static_cast<int>(risk_direction.size()) != feature_dim) {
    throw ValueError("risk_direction length " + std::to_string(risk_direction.size()) + " does not match feature_dim " +
                     std::to_string(feature_dim));
  }
}

std::string SyntheticSurvConfig::hash() const {
  std::ostringstream s;
  s << "surv|" << patients << '|' << n_min << '|' << n_max << '|' << feature_dim << '|' << censor_rate << '|'
    << bins << '|' << risk_scale << '|' << seed << '|' << direction_seed << '|' << risk_direction.size();
  for (double v : risk_direction) s << '|' << v;
  return fnv1a_hex(s.str());
}

std::vector<double> quantile_cuts(std::vector<double> times, int bins) {
  if (bins < 2) throw ValueError("quantile_cuts: bins must be at least 2");
  if (static_cast<int>(times.size()) < bins) {
    throw DataError("quantile_cuts: need at least " + std::to_string(bins) + " samples, got " +
                    std::to_string(times.size()));
  }
  std::sort(times.begin(), times.end());
  std::vector<double> cuts(static_cast<std::size_t>(bins) - 1);
  const std::size_t m = times.size();
  for (int k = 1; k < bins; ++k) {
    cuts[static_cast<std::size_t>(k) - 1] = times[static_cast<std::size_t>(k) * m / static_cast<std::size_t>(bins)];
  }
  return cuts;
}

int bin_of(double t, const std::vector<double>& cuts) {
  int r = 0;
  for (double c : cuts) {
    if (t >= c) ++r;
  }
  return r;
}

std::vector<BagRecord> gen_survival_bags(const SyntheticSurvConfig& cfg) {
  cfg.validate();
  const std::vector<double> dir =
      cfg.risk_direction.empty() ? unit_direction(cfg.feature_dim, cfg.direction_seed) : cfg.risk_direction;
  const std::string hash = cfg.hash();
  std::vector<BagRecord> bags(static_cast<std::size_t>(cfg.patients));
  std::vector<double> event_times(static_cast<std::size_t>(cfg.patients));
  std::vector<int> censor_flags(static_cast<std::size_t>(cfg.patients));
  for (int p = 0; p < cfg.patients; ++p) {
    const std::uint64_t bag_seed = Rng::derive_seed(cfg.seed, static_cast<std::uint64_t>(p));
    Rng rng(bag_seed);
    BagRecord& bag = bags[static_cast<std::size_t>(p)];
    bag.id = "surv-" + std::to_string(cfg.seed) + "-" + std::to_string(p);
    bag.feature_dim = cfg.feature_dim;
    bag.instance_count = rng.uniform_int(cfg.n_min, cfg.n_max);
    bag.config_hash = hash;
    bag.seed = bag_seed;
    const double base_shift = rng.normal();
    bag.features.resize(static_cast<std::size_t>(bag.instance_count) * cfg.feature_dim);
    double risk = 0.0;
    for (int i = 0; i < bag.instance_count; ++i) {
      double proj = 0.0;
      for (int k = 0; k < cfg.feature_dim; ++k) {
        const double v = base_shift * dir[static_cast<std::size_t>(k)] + rng.normal();
        bag.features[static_cast<std::size_t>(i) * cfg.feature_dim + k] = v;
        proj += v * dir[static_cast<std::size_t>(k)];
      }
      risk += proj;
    }
    risk /= bag.instance_count;
    const double rate = std::exp(cfg.risk_scale * risk);
    // Inverse-CDF exponential draw; higher risk -> shorter expected time.
    double u = rng.uniform();
    while (u <= 0.0) u = rng.uniform();
    event_times[static_cast<std::size_t>(p)] = -std::log(u) / rate;
    censor_flags[static_cast<std::size_t>(p)] = rng.uniform() < cfg.censor_rate ? 1 : 0;
  }
  std::vector<double> uncensored;
  uncensored.reserve(event_times.size());
  for (int p = 0; p < cfg.patients; ++p) {
    if (censor_flags[static_cast<std::size_t>(p)] == 0) uncensored.push_back(event_times[static_cast<std::size_t>(p)]);
  }
  if (static_cast<int>(uncensored.size()) < cfg.bins) {
    throw DataError("survival generation left only " + std::to_string(uncensored.size()) +
                    " uncensored patients; need at least " + std::to_string(cfg.bins) + " for cut-points");
  }
  const std::vector<double> cuts = quantile_cuts(uncensored, cfg.bins);
  for (int p = 0; p < cfg.patients; ++p) {
    SurvivalLabel label;
    label.time_bin = bin_of(event_times[static_cast<std::size_t>(p)], cuts);
    label.censored = censor_flags[static_cast<std::size_t>(p)];
    bags[static_cast<std::size_t>(p)].label = label;
  }
  return bags;
}

std::vector<std::uint8_t> serialize_bags(const std::vector<BagRecord>& bags, Task task) {
  ByteWriter w;
  w.raw(kBagMagic, 4);
  w.u32(kBagVersion);
  w.u8(task == Task::kClassification ? 0 : 1);
  w.u64(bags.size());
  for (const BagRecord& bag : bags) {
    if ((task == Task::kSurvival) != bag.is_survival()) {
      throw DataError("bag " + bag.id + " label kind does not match file task " + task_name(task));
    }
    if (static_cast<std::size_t>(bag.instance_count) * bag.feature_dim != bag.features.size()) {
      throw DataError("bag " + bag.id + " feature buffer does not match instance_count x feature_dim");
    }
    w.str(bag.id);
    w.u32(static_cast<std::uint32_t>(bag.instance_count));
    w.u32(static_cast<std::uint32_t>(bag.feature_dim));
    if (bag.is_survival()) {
      const SurvivalLabel s = bag.survival_label();
      w.u32(static_cast<std::uint32_t>(s.time_bin));
      w.u8(static_cast<std::uint8_t>(s.censored));
    } else {
      w.u32(static_cast<std::uint32_t>(bag.class_label()));
    }
    for (double v : bag.features) w.f64(v);
    w.str(bag.config_hash);
    w.u64(bag.seed);
  }
  return w.take();
}

std::vector<BagRecord> deserialize_bags(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes);
  std::size_t bag_index = 0;
  bool in_header = true;
  try {
    char magic[4];
    for (char& c : magic) c = static_cast<char>(r.u8());
    if (std::memcmp(magic, kBagMagic, 4) != 0) throw DataError("bad magic; not a bag file");
    const std::uint32_t version = r.u32();
    if (version != kBagVersion) {
      throw DataError("unsupported bag file version " + std::to_string(version));
    }
    const std::uint8_t task_tag = r.u8();
    if (task_tag > 1) throw DataError("unknown task tag " + std::to_string(task_tag));
    const Task task = task_tag == 0 ? Task::kClassification : Task::kSurvival;
    const std::uint64_t count = r.u64();
    in_header = false;
    std::vector<BagRecord> bags;
    bags.reserve(count);
    for (bag_index = 0; bag_index < count; ++bag_index) {
      BagRecord bag;
      bag.id = r.str();
      bag.instance_count = static_cast<int>(r.u32());
      bag.feature_dim = static_cast<int>(r.u32());
      if (bag.instance_count < 1 || bag.feature_dim < 1) {
        throw DataError("non-positive shape at byte offset " + std::to_string(r.offset()));
      }
      if (task == Task::kSurvival) {
        SurvivalLabel s;
        s.time_bin = static_cast<int>(r.u32());
        s.censored = static_cast<int>(r.u8());
        bag.label = s;
      } else {
        bag.label = static_cast<int>(r.u32());
      }
      const std::size_t n = static_cast<std::size_t>(bag.instance_count) * bag.feature_dim;
      bag.features.resize(n);
      for (std::size_t i = 0; i < n; ++i) bag.features[i] = r.f64();
      bag.config_hash = r.str();
      bag.seed = r.u64();
      bags.push_back(std::move(bag));
    }
    if (!r.at_end()) {
      throw DataError(std::to_string(r.remaining()) + " trailing bytes after last bag");
    }
    return bags;
  } catch (const DataError& e) {
    if (in_header) throw DataError(std::string("bag file header: ") + e.what());
    throw DataError("bag " + std::to_string(bag_index) + ": " + e.what());
  }
}

void write_bags(const std::string& path, const std::vector<BagRecord>& bags, Task task) {
  write_file_bytes(path, serialize_bags(bags, task));
}

void write_bags(const std::string& path, const std::vector<BagRecord>& bags) {
  const Task task = bags.empty() ? Task::kClassification : (bags.front().is_survival() ? Task::kSurvival : Task::kClassification);
  write_bags(path, bags, task);
}

std::vector<BagRecord> read_bags(const std::string& path) {
  return deserialize_bags(read_file_bytes(path));
}

void write_split_manifest(const std::string& path, const std::vector<BagRecord>& bags) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path + " for writing");
  for (const BagRecord& bag : bags) out << bag.id << '\n';
  if (!out) throw DataError("failed writing " + path);
}

std::vector<std::string> read_split_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) ids.push_back(line);
  }
  return ids;
}

std::vector<BagRecord> select_balanced(const std::vector<BagRecord>& bags, int per_class, std::uint64_t seed) {
  if (per_class < 1) throw ValueError("select_balanced: per_class must be positive");
  std::vector<std::size_t> zeros;
  std::vector<std::size_t> ones;
  for (std::size_t i = 0; i < bags.size(); ++i) {
    const int l = bags[i].class_label();
    if (l == 0) zeros.push_back(i);
    else if (l == 1) ones.push_back(i);
    else throw ValueError("select_balanced: labels must be binary, saw " + std::to_string(l));
  }
  if (static_cast<int>(zeros.size()) < per_class || static_cast<int>(ones.size()) < per_class) {
    throw DataError("select_balanced: need " + std::to_string(per_class) + " bags per class, have " +
                    std::to_string(zeros.size()) + " negatives and " + std::to_string(ones.size()) + " positives");
  }
  Rng rng(Rng::derive_seed(seed, 0x62616c61ull));
  rng.shuffle(zeros);
  rng.shuffle(ones);
  std::vector<BagRecord> out;
  out.reserve(static_cast<std::size_t>(per_class) * 2);
  for (int i = 0; i < per_class; ++i) {
    out.push_back(bags[zeros[static_cast<std::size_t>(i)]]);
    out.push_back(bags[ones[static_cast<std::size_t>(i)]]);
  }
  return out;
}

}  // namespace ptcmil
