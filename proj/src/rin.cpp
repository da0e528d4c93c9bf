#include "rift/rin.hpp"

#include <algorithm>
#include <cmath>

#include "rift/error.hpp"
#include "rift/ops.hpp"

namespace rift {
namespace {

// Region id per pixel for each sample; validates mask geometry against the features.
std::vector<std::vector<int>> pixel_regions(std::span<const OneHotMask> cm, int N, int H, int W, int R) {
  if (static_cast<int>(cm.size()) != N) {
    throw ValidationError("rin: expected " + std::to_string(N) + " masks, got " + std::to_string(cm.size()));
  }
  std::vector<std::vector<int>> out(N);
  for (int n = 0; n < N; ++n) {
    const OneHotMask& m = cm[n];
    if (m.height() != H || m.width() != W) {
      throw ValidationError("rin: mask " + std::to_string(m.height()) + "x" + std::to_string(m.width()) +
                            " does not match features " + std::to_string(H) + "x" + std::to_string(W));
    }
    if (m.num_regions() != R) {
      throw ValidationError("rin: mask has " + std::to_string(m.num_regions()) + " regions, modulation has " +
                            std::to_string(R));
    }
    const RegionMask labels = argmax_channels(m);
    out[n].assign(labels.labels().begin(), labels.labels().end());
  }
  return out;
}

}  // namespace

ChannelStats channel_stats(const Tensor& f, double eps) {
  auto [N, C, H, W] = nchw(f, "channel_stats");
  const double count = static_cast<double>(N) * H * W;
  if (count < 1) throw ValidationError("channel_stats: empty feature map");
  ChannelStats stats{std::vector<double>(C, 0.0), std::vector<double>(C, 0.0)};
  for (int c = 0; c < C; ++c) {
    double s = 0.0, s2 = 0.0;
    for (int n = 0; n < N; ++n) {
      const double* p = f.data() + (static_cast<std::size_t>(n) * C + c) * H * W;
      for (int i = 0; i < H * W; ++i) {
        s += p[i];
        s2 += p[i] * p[i];
      }
    }
    const double m = s / count;
    stats.mean[c] = m;
    stats.stddev[c] = std::sqrt(std::max(s2 / count - m * m, 0.0) + eps);
  }
  return stats;
}

Var channel_normalize(const Var& features, double eps) {
  auto [N, C, H, W] = nchw(features.value(), "channel_normalize");
  const ChannelStats stats = channel_stats(features.value(), eps);
  const int hw = H * W;
  Tensor out(features.shape());
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const std::size_t off = (static_cast<std::size_t>(n) * C + c) * hw;
      for (int i = 0; i < hw; ++i) out[off + i] = (features.value()[off + i] - stats.mean[c]) / stats.stddev[c];
    }
  NodePtr nf = features.node();
  return make_result(std::move(out), {features}, [=](const Tensor& g) {
    const double count = static_cast<double>(N) * hw;
    Tensor& gf = nf->grad_buffer();
    for (int c = 0; c < C; ++c) {
      const double mu = stats.mean[c], sd = stats.stddev[c];
      double gsum = 0.0, gdot = 0.0;
      for (int n = 0; n < N; ++n) {
        const std::size_t off = (static_cast<std::size_t>(n) * C + c) * hw;
        for (int i = 0; i < hw; ++i) {
          gsum += g[off + i];
          gdot += g[off + i] * (nf->value[off + i] - mu);
        }
      }
      // The variance term has zero derivative where it was clamped at 0.
      const bool clamped = sd * sd - eps <= 0.0;
      const double gmean = gsum / count, gcov = clamped ? 0.0 : gdot / count;
      for (int n = 0; n < N; ++n) {
        const std::size_t off = (static_cast<std::size_t>(n) * C + c) * hw;
        for (int i = 0; i < hw; ++i) {
          gf[off + i] += (g[off + i] - gmean) / sd - (nf->value[off + i] - mu) * gcov / (sd * sd * sd);
        }
      }
    }
  });
}

Var region_modulate(const Var& normalized, std::span<const OneHotMask> cm, const RegionModulation& mod) {
  auto [N, C, H, W] = nchw(normalized.value(), "region_modulate");
  const Shape& gs = mod.gamma.shape();
  if (gs.size() != 3 || gs[0] != N || gs[2] != C || mod.beta.shape() != gs) {
    throw ValidationError("region_modulate: modulation shape " + shape_string(gs) + " / " +
                          shape_string(mod.beta.shape()) + " incompatible with features " +
                          shape_string(normalized.shape()));
  }
  const int R = gs[1];
  const auto regions = pixel_regions(cm, N, H, W, R);
  const int hw = H * W;
  const Tensor& x = normalized.value();
  const Tensor& gamma = mod.gamma.value();
  const Tensor& beta = mod.beta.value();
  Tensor out(normalized.shape());
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const std::size_t off = (static_cast<std::size_t>(n) * C + c) * hw;
      for (int p = 0; p < hw; ++p) {
        const std::size_t m = (static_cast<std::size_t>(n) * R + regions[n][p]) * C + c;
        out[off + p] = x[off + p] * (1.0 + gamma[m]) + beta[m];
      }
    }
  NodePtr nx = normalized.node(), ng = mod.gamma.node(), nb = mod.beta.node();
  return make_result(std::move(out), {normalized, mod.gamma, mod.beta}, [=](const Tensor& g) {
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c) {
        const std::size_t off = (static_cast<std::size_t>(n) * C + c) * hw;
        for (int p = 0; p < hw; ++p) {
          const std::size_t m = (static_cast<std::size_t>(n) * R + regions[n][p]) * C + c;
          const double go = g[off + p];
          if (nx->requires_grad) nx->grad_buffer()[off + p] += go * (1.0 + ng->value[m]);
          if (ng->requires_grad) ng->grad_buffer()[m] += go * nx->value[off + p];
          if (nb->requires_grad) nb->grad_buffer()[m] += go;
        }
      }
  });
}

Var rin_forward(const Var& features, std::span<const OneHotMask> cm, const RegionModulation& mod) {
  return region_modulate(channel_normalize(features), cm, mod);
}

RegionModulation modulation_from_style(const Var& style, const Linear& map) {
  if (style.value().rank() != 3) throw ValidationError("modulation_from_style: style must be [N,R,D]");
  const int two_c = map.weight.dim(0);
  if (style.dim(2) != map.weight.dim(1)) {
    throw ValidationError("modulation_from_style: style width " + std::to_string(style.dim(2)) +
                          " does not match map input width " + std::to_string(map.weight.dim(1)));
  }
  const Var params = map(style);
  const int C = two_c / 2;
  return {ops::slice_last(params, 0, C), ops::slice_last(params, C, C)};
}

RinBlock::RinBlock(int channels, int style_dim, std::mt19937_64& rng)
    : channels_(channels), map_(style_dim, 2 * channels, rng, 0.5 / std::sqrt(static_cast<double>(style_dim))) {}

Var RinBlock::operator()(const Var& features, std::span<const OneHotMask> cm, const Var& style) const {
  return rin_forward(features, cm, modulation(style));
}

void RinBlock::register_params(ParamSet& params, const std::string& prefix) const {
  map_.register_params(params, prefix + ".map");
}

RinResBlock::RinResBlock(int in_channels, int out_channels, int style_dim, std::mt19937_64& rng)
    : in_channels_(in_channels), out_channels_(out_channels) {
  const int middle = std::min(in_channels, out_channels);
  norm0_ = RinBlock(in_channels, style_dim, rng);
  conv0_ = Conv2d(in_channels, middle, 3, 1, 1, rng, /*with_bias=*/false);
  norm1_ = RinBlock(middle, style_dim, rng);
  conv1_ = Conv2d(middle, out_channels, 3, 1, 1, rng, /*with_bias=*/false);
  if (has_learned_skip()) {
    norm_skip_ = RinBlock(in_channels, style_dim, rng);
    conv_skip_ = Conv2d(in_channels, out_channels, 1, 1, 0, rng, /*with_bias=*/false);
  }
}

Var RinResBlock::operator()(const Var& features, std::span<const OneHotMask> cm, const Var& style) const {
  if (features.value().rank() != 4 || features.dim(1) != in_channels_) {
    throw ValidationError("RinResBlock: expected " + std::to_string(in_channels_) + " input channels, got " +
                          shape_string(features.shape()));
  }
  Var main = conv0_(ops::relu(norm0_(features, cm, style)));
  main = conv1_(ops::relu(norm1_(main, cm, style)));
  Var skip = has_learned_skip() ? conv_skip_(ops::relu(norm_skip_(features, cm, style))) : features;
  return ops::add(skip, main);
}

void RinResBlock::register_params(ParamSet& params, const std::string& prefix) const {
  norm0_.register_params(params, prefix + ".norm0");
  conv0_.register_params(params, prefix + ".conv0");
  norm1_.register_params(params, prefix + ".norm1");
  conv1_.register_params(params, prefix + ".conv1");
  if (has_learned_skip()) {
    norm_skip_.register_params(params, prefix + ".norm_skip");
    conv_skip_.register_params(params, prefix + ".conv_skip");
  }
}

}  // namespace rift
