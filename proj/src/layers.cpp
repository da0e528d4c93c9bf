#include "rift/layers.hpp"

#include <cmath>

#include "rift/error.hpp"
#include "rift/ops.hpp"

namespace rift {

void ParamSet::add(std::string name, const Var& var) {
  for (const auto& p : items_) {
    if (p.name == name) throw ValidationError("ParamSet: duplicate parameter name " + name);
  }
  items_.push_back({std::move(name), var});
}

void ParamSet::append(const ParamSet& other) {
  for (const auto& p : other.items_) add(p.name, p.var);
}

std::size_t ParamSet::total_elements() const {
  std::size_t n = 0;
  for (const auto& p : items_) n += p.var.value().numel();
  return n;
}

const Var& ParamSet::get(const std::string& name) const {
  for (const auto& p : items_)
    if (p.name == name) return p.var;
  throw ValidationError("ParamSet: no parameter named " + name);
}

void ParamSet::zero_grad() const {
  for (const auto& p : items_) {
    Var v = p.var;
    v.zero_grad();
  }
}

void ParamSet::set_requires_grad(bool on) const {
  for (const auto& p : items_) {
    Var v = p.var;
    v.set_requires_grad(on);
  }
}

Tensor random_normal(const Shape& shape, double stddev, std::mt19937_64& rng) {
  Tensor t(shape);
  std::normal_distribution<double> dist(0.0, stddev);
  for (double& v : t.values()) v = dist(rng);
  return t;
}

Conv2d::Conv2d(int in_channels, int out_channels, int kernel, int stride_, int pad_, std::mt19937_64& rng,
               bool with_bias)
    : stride(stride_), pad(pad_) {
  const double fan_in = static_cast<double>(in_channels) * kernel * kernel;
  weight = Var::parameter(random_normal({out_channels, in_channels, kernel, kernel}, std::sqrt(2.0 / fan_in), rng));
  if (with_bias) bias = Var::parameter(Tensor({out_channels}, 0.0));
}

Var Conv2d::operator()(const Var& x) const { return ops::conv2d(x, weight, bias, stride, pad); }

void Conv2d::register_params(ParamSet& params, const std::string& prefix) const {
  params.add(prefix + ".weight", weight);
  if (bias.defined()) params.add(prefix + ".bias", bias);
}

ConvTranspose2d::ConvTranspose2d(int in_channels, int out_channels, int kernel, int stride_, int pad_,
                                 std::mt19937_64& rng)
    : stride(stride_), pad(pad_) {
  // Each output pixel receives roughly in_channels * (kernel/stride)^2 taps.
  const double taps = static_cast<double>(in_channels) * kernel * kernel / (stride_ * stride_);
  weight = Var::parameter(random_normal({in_channels, out_channels, kernel, kernel}, std::sqrt(2.0 / taps), rng));
  bias = Var::parameter(Tensor({out_channels}, 0.0));
}

Var ConvTranspose2d::operator()(const Var& x) const { return ops::conv_transpose2d(x, weight, bias, stride, pad); }

void ConvTranspose2d::register_params(ParamSet& params, const std::string& prefix) const {
  params.add(prefix + ".weight", weight);
  params.add(prefix + ".bias", bias);
}

Linear::Linear(int in_features, int out_features, std::mt19937_64& rng, double weight_std) {
  const double stddev = weight_std >= 0.0 ? weight_std : std::sqrt(1.0 / in_features);
  weight = Var::parameter(random_normal({out_features, in_features}, stddev, rng));
  bias = Var::parameter(Tensor({out_features}, 0.0));
}

Var Linear::operator()(const Var& x) const { return ops::linear(x, weight, bias); }

void Linear::register_params(ParamSet& params, const std::string& prefix) const {
  params.add(prefix + ".weight", weight);
  params.add(prefix + ".bias", bias);
}

}  // namespace rift
