#pragma once

#include <random>
#include <span>
#include <vector>

#include "rift/autograd.hpp"
#include "rift/layers.hpp"
#include "rift/mask.hpp"

namespace rift {

inline constexpr double kRinEpsilon = 1e-5;

// Per-channel moments over (N, H, W) of an NCHW feature map.
struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> stddev;  // sqrt(max(E[f^2] - mean^2, 0) + eps)
};

ChannelStats channel_stats(const Tensor& features, double eps = kRinEpsilon);

// (f - mean_c) / std_c using the statistics of the current batch.
Var channel_normalize(const Var& features, double eps = kRinEpsilon);

// Per-sample, per-region, per-channel affine parameters: gamma, beta [N,R,C].
struct RegionModulation {
  Var gamma;
  Var beta;
};

// out = sum_i normalized * cm[i] * (1 + gamma_i) + beta_i * cm[i].
// beta is masked by its region, so a pixel only sees its own region's
// parameters. `cm` holds one mask per sample at the feature resolution.
Var region_modulate(const Var& normalized, std::span<const OneHotMask> cm, const RegionModulation& mod);

// Region-wise normalization: channel_normalize followed by region_modulate.
Var rin_forward(const Var& features, std::span<const OneHotMask> cm, const RegionModulation& mod);

// Applies a shared D -> 2C affine map to every style row: st [N,R,D] gives
// gamma = first C outputs, beta = last C outputs.
RegionModulation modulation_from_style(const Var& style, const Linear& map);

class RinBlock {
 public:
  RinBlock() = default;
  RinBlock(int channels, int style_dim, std::mt19937_64& rng);

  int channels() const { return channels_; }
  RegionModulation modulation(const Var& style) const { return modulation_from_style(style, map_); }
  Var operator()(const Var& features, std::span<const OneHotMask> cm, const Var& style) const;
  void register_params(ParamSet& params, const std::string& prefix) const;

  Linear& map() { return map_; }

 private:
  int channels_ = 0;
  Linear map_;
};

// Residual block with RIN -> ReLU -> conv twice on the main path. When the
// channel count changes, the skip path is RIN -> ReLU -> 1x1 conv; otherwise
// it is the identity. Convolutions have no bias.
class RinResBlock {
 public:
  RinResBlock() = default;
  RinResBlock(int in_channels, int out_channels, int style_dim, std::mt19937_64& rng);

  int in_channels() const { return in_channels_; }
  int out_channels() const { return out_channels_; }
  bool has_learned_skip() const { return in_channels_ != out_channels_; }

  Var operator()(const Var& features, std::span<const OneHotMask> cm, const Var& style) const;
  void register_params(ParamSet& params, const std::string& prefix) const;

  RinBlock& norm0() { return norm0_; }
  RinBlock& norm1() { return norm1_; }
  RinBlock& norm_skip() { return norm_skip_; }
  Conv2d& conv0() { return conv0_; }
  Conv2d& conv1() { return conv1_; }
  Conv2d& conv_skip() { return conv_skip_; }

 private:
  int in_channels_ = 0;
  int out_channels_ = 0;
  RinBlock norm0_, norm1_, norm_skip_;
  Conv2d conv0_, conv1_, conv_skip_;
};

}  // namespace rift
