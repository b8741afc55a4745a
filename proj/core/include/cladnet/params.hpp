#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "cladnet/tensor.hpp"

namespace cladnet {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Named parameter tensors in stable insertion order. All model state lives
// here; tapes lease parameters by name for each forward pass.
class ParameterStore {
 public:
  Tensor& create(const std::string& name, Shape shape);
  Tensor& create(const std::string& name, Tensor init);

  bool contains(const std::string& name) const;
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;

  const std::vector<std::string>& names() const { return order_; }
  std::vector<std::string> names_with_prefix(const std::string& prefix) const;
  std::size_t size() const { return order_.size(); }

  // Deep copy of every parameter whose name starts with one of the prefixes
  // (empty list = everything). Copies keep their original names.
  ParameterStore clone(const std::vector<std::string>& prefixes = {}) const;

  // Overwrites parameters present in `other`, creating missing ones.
  void assign_from(const ParameterStore& other);

  // Versioned binary checkpoint; round-trips bit-exactly.
  void save(const std::filesystem::path& path) const;
  static ParameterStore load(const std::filesystem::path& path);

  std::uint64_t checksum() const;  // FNV-1a over names, shapes and raw values

 private:
  std::vector<std::string> order_;
  std::unordered_map<std::string, Tensor> values_;
};

// Uniform(-limit, limit) fill with limit = sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng);

}  // namespace cladnet
