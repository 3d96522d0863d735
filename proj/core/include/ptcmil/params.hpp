#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "ptcmil/tensor.hpp"

namespace ptcmil {

struct ParamEntry {
  std::string name;
  Tensor tensor;
  bool frozen = false;
};

// Flat registry of every trainable array, in registration order. The order is
// part of the checkpoint contract, so registration must be deterministic.
class ParamRegistry {
 public:
  Tensor add(const std::string& name, int rows, int cols, std::vector<double> vals);

  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;
  const std::vector<ParamEntry>& entries() const { return entries_; }
  std::vector<ParamEntry>& entries() { return entries_; }

  bool has(const std::string& name) const { return index_.count(name) != 0; }
  ParamEntry& at(const std::string& name);
  const ParamEntry& at(const std::string& name) const;

  void set_frozen(const std::string& name, bool frozen) { at(name).frozen = frozen; }
  void freeze_all();
  std::vector<std::string> names() const;
  std::vector<Tensor> tensors() const;          // all
  std::vector<Tensor> trainable_tensors() const;  // unfrozen only

  void zero_grads();

 private:
  std::vector<ParamEntry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace ptcmil
