#include "ptcmil/checkpoint.hpp"

#include <cstring>

#include "ptcmil/bytes.hpp"
#include "ptcmil/error.hpp"

namespace ptcmil {

namespace {

constexpr char kCkptMagic[4] = {'P', 'T', 'C', 'K'};
constexpr std::uint32_t kCkptVersion = 1;

void write_config(ByteWriter& w, const ModelConfig& cfg) {
  w.u8(cfg.task == Task::kClassification ? 0 : 1);
  w.u32(static_cast<std::uint32_t>(cfg.input_dim));
  w.u32(static_cast<std::uint32_t>(cfg.embed_dim));
  w.u32(static_cast<std::uint32_t>(cfg.clusters));
  w.u32(static_cast<std::uint32_t>(cfg.heads));
  w.u32(static_cast<std::uint32_t>(cfg.classes));
  w.u32(static_cast<std::uint32_t>(cfg.bins));
  w.u8(static_cast<std::uint8_t>(cfg.pooling == PoolingMode::kPrototypes      ? 0
                                 : cfg.pooling == PoolingMode::kClsToken      ? 1
                                                                              : 2));
  w.u8(cfg.clustering ? 1 : 0);
  w.u8(cfg.merging ? 1 : 0);
  w.f64(cfg.alpha);
  w.f64(cfg.theta);
}

ModelConfig read_config(ByteReader& r) {
  ModelConfig cfg;
  cfg.task = r.u8() == 0 ? Task::kClassification : Task::kSurvival;
  cfg.input_dim = static_cast<int>(r.u32());
  cfg.embed_dim = static_cast<int>(r.u32());
  cfg.clusters = static_cast<int>(r.u32());
  cfg.heads = static_cast<int>(r.u32());
  cfg.classes = static_cast<int>(r.u32());
  cfg.bins = static_cast<int>(r.u32());
  const std::uint8_t pooling = r.u8();
  if (pooling > 2) throw DataError("unknown pooling tag " + std::to_string(pooling));
  cfg.pooling = pooling == 0 ? PoolingMode::kPrototypes : pooling == 1 ? PoolingMode::kClsToken : PoolingMode::kPrototypesAndCls;
  cfg.clustering = r.u8() != 0;
  cfg.merging = r.u8() != 0;
  cfg.alpha = r.f64();
  cfg.theta = r.f64();
  return cfg;
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Model& model, const Adam* optimizer) {
  ByteWriter w;
  w.raw(kCkptMagic, 4);
  w.u32(kCkptVersion);
  write_config(w, model.config());
  const ParamRegistry& reg = model.params();
  w.u64(reg.size());
  for (const ParamEntry& entry : reg.entries()) {
    w.str(entry.name);
    w.u32(static_cast<std::uint32_t>(entry.tensor.rows()));
    w.u32(static_cast<std::uint32_t>(entry.tensor.cols()));
    for (double v : entry.tensor.values()) w.f64(v);
  }
  if (model.config().clustering) {
    const PromptBank& bank = model.prompt_bank();
    w.u64(static_cast<std::uint64_t>(bank.steps));
    for (double v : bank.ema) w.f64(v);
  }
  if (optimizer != nullptr) {
    w.u8(1);
    optimizer->serialize(w);
  } else {
    w.u8(0);
  }
  return w.take();
}

LoadedCheckpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes);
  char magic[4];
  for (char& c : magic) c = static_cast<char>(r.u8());
  if (std::memcmp(magic, kCkptMagic, 4) != 0) throw DataError("bad magic; not a checkpoint file");
  const std::uint32_t version = r.u32();
  if (version != kCkptVersion) throw DataError("unsupported checkpoint version " + std::to_string(version));
  const ModelConfig cfg = read_config(r);
  LoadedCheckpoint out;
  out.model = std::make_unique<Model>(cfg, 0);
  ParamRegistry& reg = out.model->params();
  const std::uint64_t count = r.u64();
  if (count != reg.size()) {
    throw DataError("checkpoint has " + std::to_string(count) + " parameters; this config expects " +
                    std::to_string(reg.size()));
  }
  for (std::size_t i = 0; i < count; ++i) {
    const std::string name = r.str();
    const int rows = static_cast<int>(r.u32());
    const int cols = static_cast<int>(r.u32());
    if (!reg.has(name)) throw DataError("checkpoint parameter '" + name + "' not in this model");
    Tensor param = reg.at(name).tensor;
    if (param.rows() != rows || param.cols() != cols) {
      throw DataError("parameter '" + name + "' has shape [" + std::to_string(rows) + " x " + std::to_string(cols) +
                      "] in the checkpoint but " + param.shape_str() + " in this model");
    }
    std::vector<double>& vals = param.values();
    for (double& v : vals) v = r.f64();
  }
  if (cfg.clustering) {
    PromptBank& bank = out.model->prompt_bank();
    bank.steps = static_cast<std::int64_t>(r.u64());
    for (double& v : bank.ema) v = r.f64();
  }
  const std::uint8_t has_opt = r.u8();
  if (has_opt == 1) {
    out.optimizer = std::make_unique<Adam>(Adam::deserialize(r));
  } else if (has_opt != 0) {
    throw DataError("corrupt optimizer flag " + std::to_string(has_opt));
  }
  if (!r.at_end()) throw DataError(std::to_string(r.remaining()) + " trailing bytes after checkpoint");
  return out;
}

void write_checkpoint(const std::string& path, const Model& model, const Adam* optimizer) {
  write_file_bytes(path, serialize_checkpoint(model, optimizer));
}

LoadedCheckpoint read_checkpoint(const std::string& path) {
  return deserialize_checkpoint(read_file_bytes(path));
}

}  // namespace ptcmil
