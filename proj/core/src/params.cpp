#include "ptcmil/params.hpp"

#include "ptcmil/error.hpp"

namespace ptcmil {

Tensor ParamRegistry::add(const std::string& name, int rows, int cols, std::vector<double> vals) {
  if (index_.count(name)) {
    throw ValueError("ParamRegistry: duplicate parameter '" + name + "'");
  }
  Tensor t = Tensor::leaf(name, rows, cols, std::move(vals));
  index_.emplace(name, entries_.size());
  entries_.push_back(ParamEntry{name, t, false});
  return t;
}

std::size_t ParamRegistry::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) {
    n += e.tensor.numel();
  }
  return n;
}

ParamEntry& ParamRegistry::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) {
    throw ValueError("ParamRegistry: unknown parameter '" + name + "'");
  }
  return entries_[it->second];
}

const ParamEntry& ParamRegistry::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) {
    throw ValueError("ParamRegistry: unknown parameter '" + name + "'");
  }
  return entries_[it->second];
}

void ParamRegistry::freeze_all() {
  for (auto& e : entries_) {
    e.frozen = true;
  }
}

std::vector<std::string> ParamRegistry::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) {
    out.push_back(e.name);
  }
  return out;
}

std::vector<Tensor> ParamRegistry::tensors() const {
  std::vector<Tensor> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) {
    out.push_back(e.tensor);
  }
  return out;
}

std::vector<Tensor> ParamRegistry::trainable_tensors() const {
  std::vector<Tensor> out;
  for (const auto& e : entries_) {
    if (!e.frozen) {
      out.push_back(e.tensor);
    }
  }
  return out;
}

void ParamRegistry::zero_grads() {
  for (auto& e : entries_) {
    e.tensor.zero_grad();
  }
}

}  // namespace ptcmil
