#include "rift/losses.hpp"

#include "rift/error.hpp"
#include "rift/ops.hpp"

namespace rift {
namespace {

void require_image_shape(const Var& a, const Var& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ValidationError(std::string(what) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                          shape_string(b.shape()));
  }
}

}  // namespace

void LossWeights::validate() const {
  if (!(lambda_r >= 0.0) || !(lambda_fm >= 0.0) || !(lambda_rm >= 0.0)) {
    throw ValidationError("loss weights must be nonnegative");
  }
}

nlohmann::json weights_to_json(const LossWeights& w) {
  return {{"lambda_r", w.lambda_r}, {"lambda_fm", w.lambda_fm}, {"lambda_rm", w.lambda_rm}};
}

LossWeights weights_from_json(const nlohmann::json& j) {
  LossWeights w;
  w.lambda_r = j.at("lambda_r").get<double>();
  w.lambda_fm = j.at("lambda_fm").get<double>();
  w.lambda_rm = j.at("lambda_rm").get<double>();
  w.validate();
  return w;
}

GeneratorFn as_generator_fn(const Generator& g) {
  return [&g](const Var& x, const MaskBatch& cm, const Var& s, const MaskBatch& sm) {
    return g.generate(x, cm, s, sm);
  };
}

LogitFn as_logit_fn(const Discriminator& d) {
  return [&d](const Var& img, std::span<const int> domains) { return d(img, domains).logits; };
}

FeatureFn as_feature_fn(const Discriminator& d) {
  return [&d](const Var& img) { return d.pooled_features(img); };
}

Var translate_full(const Generator& g, const Var& x, const MaskBatch& cm, const Var& s, const MaskBatch& sm) {
  const Var style_target = g.encode_style(s, sm);
  return g.decode(g.content_encode(x), cm, style_target);
}

Var mixed_style(const Generator& g, const Var& x, const MaskBatch& cm, const Var& s, const MaskBatch& sm,
                const std::vector<std::vector<bool>>& rows) {
  return replace_style_rows(g.encode_style(x, cm), g.encode_style(s, sm), rows);
}

Var translate_rows(const Generator& g, const Var& x, const MaskBatch& cm, const Var& s, const MaskBatch& sm,
                   const std::vector<std::vector<bool>>& rows) {
  return g.decode(g.content_encode(x), cm, mixed_style(g, x, cm, s, sm, rows));
}

std::vector<std::vector<bool>> single_row_sets(std::span<const int> region, int num_regions) {
  std::vector<std::vector<bool>> rows;
  for (int i : region) {
    if (i < 0 || i >= num_regions) {
      throw ValidationError("region index " + std::to_string(i) + " outside 0.." + std::to_string(num_regions - 1));
    }
    std::vector<bool> r(num_regions, false);
    r[i] = true;
    rows.push_back(std::move(r));
  }
  return rows;
}

Var translate_region(const Generator& g, const Var& x, const MaskBatch& cm, const Var& s, const MaskBatch& sm,
                     int region) {
  const std::vector<int> per_sample(static_cast<std::size_t>(x.dim(0)), region);
  return translate_rows(g, x, cm, s, sm, single_row_sets(per_sample, g.arch().num_regions));
}

Var region_matching_loss(const Var& x, const Var& x_hat, const Var& r_hat, const MaskBatch& cm,
                         std::span<const int> region) {
  require_image_shape(x, x_hat, "region_matching_loss");
  require_image_shape(x, r_hat, "region_matching_loss");
  auto [N, C, H, W] = nchw(x.value(), "region_matching_loss");
  if (static_cast<int>(cm.size()) != N || static_cast<int>(region.size()) != N) {
    throw ValidationError("region_matching_loss: one mask and one region index per sample required");
  }
  Tensor inside(x.shape(), 0.0), outside(x.shape(), 0.0);
  for (int n = 0; n < N; ++n) {
    const RegionMask& m = cm[n];
    if (m.height() != H || m.width() != W) throw ValidationError("region_matching_loss: mask size mismatch");
    if (region[n] < 0 || region[n] >= m.num_regions()) {
      throw ValidationError("region_matching_loss: region index " + std::to_string(region[n]) + " out of range");
    }
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < H; ++y)
        for (int xx = 0; xx < W; ++xx) {
          const bool in = m.label(y, xx) == region[n];
          inside.at(n, c, y, xx) = in ? 1.0 : 0.0;
          outside.at(n, c, y, xx) = in ? 0.0 : 1.0;
        }
  }
  return ops::add(ops::weighted_abs_diff(r_hat, x_hat, inside), ops::weighted_abs_diff(r_hat, x, outside));
}

Var gan_loss_d(const LogitFn& d, const Var& x, std::span<const int> c_x, const Var& x_hat, std::span<const int> c_y) {
  const Var real = ops::mean_softplus(d(x, c_x), -1.0);
  const Var fake = ops::mean_softplus(d(x_hat.detach(), c_y), +1.0);
  return ops::add(real, fake);
}

Var gan_loss_g(const LogitFn& d, const Var& x_hat, std::span<const int> c_y) {
  return ops::mean_softplus(d(x_hat, c_y), -1.0);
}

Var reconstruction_loss(const GeneratorFn& g, const Var& x, const MaskBatch& cm) {
  const Var recon = g(x, cm, x, cm);
  require_image_shape(x, recon, "reconstruction_loss");
  return ops::mean_abs_diff(x, recon);
}

Tensor style_feature_target(const FeatureFn& features, std::span<const Var> styles) {
  if (styles.empty()) throw ValidationError("feature_matching_loss: at least one style image (K >= 1) required");
  NoGradGuard no_grad;
  Tensor target;
  for (const Var& y : styles) {
    const Tensor f = features(y).value();
    if (target.empty()) {
      target = Tensor(f.shape(), 0.0);
    } else if (!target.same_shape(f)) {
      throw ValidationError("feature_matching_loss: style feature shapes differ");
    }
    for (std::size_t i = 0; i < f.numel(); ++i) target[i] += f[i];
  }
  for (double& v : target.values()) v /= static_cast<double>(styles.size());
  return target;
}

Var feature_matching_to_target(const Var& fx, const Tensor& target) {
  if (!fx.value().same_shape(target)) throw ValidationError("feature_matching_loss: feature shape mismatch");
  return ops::mean_abs_diff(fx, Var::constant(target));
}

Var feature_matching_loss(const FeatureFn& features, const Var& x_hat, std::span<const Var> styles) {
  const Tensor target = style_feature_target(features, styles);
  return feature_matching_to_target(features(x_hat), target);
}

Var total_generator_objective(const LossTerms& t, const LossWeights& w) {
  w.validate();
  if (!t.gan.defined()) throw ValidationError("total_generator_objective: GAN term is required");
  Var total = t.gan;
  const std::pair<const Var*, double> weighted[] = {
      {&t.reconstruction, w.lambda_r}, {&t.feature_matching, w.lambda_fm}, {&t.region_matching, w.lambda_rm}};
  for (const auto& [term, weight] : weighted) {
    if (term->defined() && weight != 0.0) total = ops::add(total, ops::scale(*term, weight));
  }
  return total;
}

}  // namespace rift
