#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "csst/tensor.hpp"

namespace csst {

/// Named trainable tensors, ordered by name so iteration is deterministic.
///
/// Names use '/' separated prefixes ("f_a/layer0/W") that identify the
/// parameter group; optimizers and checkpoints key off those prefixes.
class ParamStore {
 public:
  using Map = std::map<std::string, Tensor, std::less<>>;

  void set(const std::string& name, Tensor value);
  bool contains(std::string_view name) const;
  const Tensor& at(std::string_view name) const;
  Tensor& at(std::string_view name);
  void erase(std::string_view name);

  std::vector<std::string> names() const;
  std::size_t size() const noexcept { return tensors_.size(); }
  bool empty() const noexcept { return tensors_.empty(); }
  std::size_t scalar_count() const noexcept;

  // Subset whose names start with `prefix`.
  ParamStore with_prefix(std::string_view prefix) const;
  // Subset whose names do not start with `prefix`.
  ParamStore without_prefix(std::string_view prefix) const;
  // Copies every tensor from `other`, overwriting same-named entries.
  void merge(const ParamStore& other);

  // Same names and shapes, all zeros.
  ParamStore zeros_like() const;

  Map::const_iterator begin() const { return tensors_.begin(); }
  Map::const_iterator end() const { return tensors_.end(); }
  Map::iterator begin() { return tensors_.begin(); }
  Map::iterator end() { return tensors_.end(); }

  friend bool operator==(const ParamStore& a, const ParamStore& b) = default;

 private:
  Map tensors_;
};

// Gradients share the parameter layout.
using GradStore = ParamStore;

}  // namespace csst
