#include "csst/params.hpp"

#include "csst/error.hpp"

namespace csst {

void ParamStore::set(const std::string& name, Tensor value) { tensors_.insert_or_assign(name, std::move(value)); }

bool ParamStore::contains(std::string_view name) const { return tensors_.find(name) != tensors_.end(); }

const Tensor& ParamStore::at(std::string_view name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw ConfigError("unknown parameter '" + std::string(name) + "'");
  return it->second;
}

Tensor& ParamStore::at(std::string_view name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw ConfigError("unknown parameter '" + std::string(name) + "'");
  return it->second;
}

void ParamStore::erase(std::string_view name) {
  auto it = tensors_.find(name);
  if (it != tensors_.end()) tensors_.erase(it);
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(tensors_.size());
  for (const auto& [name, _] : tensors_) out.push_back(name);
  return out;
}

std::size_t ParamStore::scalar_count() const noexcept {
  std::size_t n = 0;
  for (const auto& [_, t] : tensors_) n += t.size();
  return n;
}

ParamStore ParamStore::with_prefix(std::string_view prefix) const {
  ParamStore out;
  for (const auto& [name, t] : tensors_) {
    if (std::string_view(name).starts_with(prefix)) out.tensors_.emplace(name, t);
  }
  return out;
}

ParamStore ParamStore::without_prefix(std::string_view prefix) const {
  ParamStore out;
  for (const auto& [name, t] : tensors_) {
    if (!std::string_view(name).starts_with(prefix)) out.tensors_.emplace(name, t);
  }
  return out;
}

void ParamStore::merge(const ParamStore& other) {
  for (const auto& [name, t] : other.tensors_) tensors_.insert_or_assign(name, t);
}

ParamStore ParamStore::zeros_like() const {
  ParamStore out;
  for (const auto& [name, t] : tensors_) out.tensors_.emplace(name, Tensor(t.shape(), 0.0));
  return out;
}

}  // namespace csst
