#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "ptcmil/model.hpp"
#include "ptcmil/train.hpp"

namespace ptcmil {

// Checkpoint layout: magic "PTCK", version, model config, parameters in
// registry order (name, shape, raw doubles), the prompt EMA shadow, then an
// optional optimizer block. Serialization is deterministic, so round trips
// are byte-exact. Truncation or mismatched shapes raise DataError naming the
// parameter and byte offset.
std::vector<std::uint8_t> serialize_checkpoint(const Model& model, const Adam* optimizer);

struct LoadedCheckpoint {
  std::unique_ptr<Model> model;
  std::unique_ptr<Adam> optimizer;  // null when the checkpoint has no optimizer block
};

LoadedCheckpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

void write_checkpoint(const std::string& path, const Model& model, const Adam* optimizer);
LoadedCheckpoint read_checkpoint(const std::string& path);

}  // namespace ptcmil
