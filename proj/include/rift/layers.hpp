#pragma once

#include <random>
#include <span>
#include <string>
#include <vector>

#include "rift/autograd.hpp"

namespace rift {

struct NamedParam {
  std::string name;
  Var var;
};

// Ordered, named view of a network's learnable tensors. Handles share nodes
// with the owning layers, so optimizer writes are visible to forward passes.
class ParamSet {
 public:
  void add(std::string name, const Var& var);
  void append(const ParamSet& other);

  std::span<const NamedParam> items() const { return items_; }
  std::size_t size() const { return items_.size(); }
  std::size_t total_elements() const;
  const Var& get(const std::string& name) const;

  void zero_grad() const;
  void set_requires_grad(bool on) const;

 private:
  std::vector<NamedParam> items_;
};

Tensor random_normal(const Shape& shape, double stddev, std::mt19937_64& rng);

struct Conv2d {
  Var weight;  // [Cout, Cin, k, k]
  Var bias;    // [Cout], may be undefined
  int stride = 1;
  int pad = 0;

  Conv2d() = default;
  Conv2d(int in_channels, int out_channels, int kernel, int stride, int pad, std::mt19937_64& rng,
         bool with_bias = true);
  Var operator()(const Var& x) const;
  void register_params(ParamSet& params, const std::string& prefix) const;
};

struct ConvTranspose2d {
  Var weight;  // [Cin, Cout, k, k]
  Var bias;
  int stride = 2;
  int pad = 1;

  ConvTranspose2d() = default;
  ConvTranspose2d(int in_channels, int out_channels, int kernel, int stride, int pad, std::mt19937_64& rng);
  Var operator()(const Var& x) const;
  void register_params(ParamSet& params, const std::string& prefix) const;
};

struct Linear {
  Var weight;  // [Dout, Din]
  Var bias;    // [Dout], zero-initialized

  Linear() = default;
  Linear(int in_features, int out_features, std::mt19937_64& rng, double weight_std = -1.0);
  Var operator()(const Var& x) const;
  void register_params(ParamSet& params, const std::string& prefix) const;
};

}  // namespace rift
