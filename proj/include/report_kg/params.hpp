#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "report_kg/tensor.hpp"

namespace rkg {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Ordered collection of named trainable tensors. Copies share storage;
// use clone() for an independent replica.
class ParamSet {
 public:
  void add(std::string name, Tensor tensor);
  bool contains(std::string_view name) const;
  const Tensor& get(std::string_view name) const;

  std::size_t size() const { return entries_.size(); }
  std::size_t element_count() const;
  const std::vector<NamedTensor>& entries() const { return entries_; }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  void zero_grad();
  ParamSet clone() const;
  // Overwrites values tensor-by-tensor; names and shapes must match.
  void copy_values_from(const ParamSet& other);

 private:
  std::vector<NamedTensor> entries_;
};

// One flat gradient vector per parameter tensor, in ParamSet order.
using GradBuffer = std::vector<std::vector<double>>;

GradBuffer zeros_like(const ParamSet& params);
// into[k] += grad of params[k] (zero when the tensor saw no backward pass).
void accumulate_grads(GradBuffer& into, const ParamSet& params);
void scale_grads(GradBuffer& grads, double factor);

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamMoments {
  std::vector<double> m;
  std::vector<double> v;
};

// Single bias-corrected Adam update of one tensor. step is 1-based.
void adam_step(std::span<double> param, std::span<const double> grad, AdamMoments& moments,
               std::int64_t step, const AdamConfig& config);

class Adam {
 public:
  explicit Adam(AdamConfig config) : config_(config) {}

  void step(ParamSet& params, const GradBuffer& grads);

  std::int64_t steps_taken() const { return step_; }
  const std::vector<AdamMoments>& moments() const { return moments_; }
  AdamConfig& config() { return config_; }

 private:
  AdamConfig config_;
  std::int64_t step_ = 0;
  std::vector<AdamMoments> moments_;
};

// Named tensors plus string metadata. Text layout, version 1:
//
//   report-kg-checkpoint 1
//   meta <key>\t<value>          (zero or more)
//   tensor <name> <rank> <dims...>
//   <values separated by spaces, shortest round-trip decimal>
//   end
//
// Reloading reproduces every value bit-for-bit.
struct Checkpoint {
  std::map<std::string, std::string> meta;
  ParamSet params;
};

std::string serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint parse_checkpoint(std::string_view text);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace rkg
