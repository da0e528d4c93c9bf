#pragma once

#include <functional>
#include <span>
#include <vector>

#include "rift/networks.hpp"

namespace rift {

struct LossWeights {
  double lambda_r = 0.1;
  double lambda_fm = 1.0;
  double lambda_rm = 1.0;

  void validate() const;
  bool operator==(const LossWeights&) const = default;
};

nlohmann::json weights_to_json(const LossWeights& w);
LossWeights weights_from_json(const nlohmann::json& j);

// Callable views so the losses can be driven by real networks or by mocks.
using GeneratorFn = std::function<Var(const Var& x, const MaskBatch& cm, const Var& s, const MaskBatch& sm)>;
using LogitFn = std::function<Var(const Var& img, std::span<const int> domains)>;
using FeatureFn = std::function<Var(const Var& img)>;

GeneratorFn as_generator_fn(const Generator& g);
LogitFn as_logit_fn(const Discriminator& d);
FeatureFn as_feature_fn(const Discriminator& d);

// Full translation: every region takes the style image's code.
Var translate_full(const Generator& g, const Var& x, const MaskBatch& cm, const Var& s, const MaskBatch& sm);

// Style of the content image with the rows flagged in `rows[n]` taken from
// the style image.
Var mixed_style(const Generator& g, const Var& x, const MaskBatch& cm, const Var& s, const MaskBatch& sm,
                const std::vector<std::vector<bool>>& rows);

// Partial translation with an arbitrary per-sample row set.
Var translate_rows(const Generator& g, const Var& x, const MaskBatch& cm, const Var& s, const MaskBatch& sm,
                   const std::vector<std::vector<bool>>& rows);

// Translates only region `region` (same index for every sample).
Var translate_region(const Generator& g, const Var& x, const MaskBatch& cm, const Var& s, const MaskBatch& sm,
                     int region);

// Row set selecting region[n] for sample n.
std::vector<std::vector<bool>> single_row_sets(std::span<const int> region, int num_regions);

// Region matching: mean over all elements of
// |r_hat - x_hat| * cm[i] + |r_hat - x| * (1 - cm[i]), with i = region[n].
Var region_matching_loss(const Var& x, const Var& x_hat, const Var& r_hat, const MaskBatch& cm,
                         std::span<const int> region);

// Discriminator side of the conditional GAN loss. x_hat is detached.
Var gan_loss_d(const LogitFn& d, const Var& x, std::span<const int> c_x, const Var& x_hat, std::span<const int> c_y);
// Non-saturating generator side: E[-log D^{c_y}(x_hat)].
Var gan_loss_g(const LogitFn& d, const Var& x_hat, std::span<const int> c_y);

// mean |x - G(x, cm, x, cm)|
Var reconstruction_loss(const GeneratorFn& g, const Var& x, const MaskBatch& cm);

// mean |D_f(x_hat) - (1/K) sum_k D_f(y_k)|; the style features are constants.
Var feature_matching_loss(const FeatureFn& features, const Var& x_hat, std::span<const Var> styles);
// The two halves of feature_matching_loss, for callers that already hold D_f(x_hat).
Tensor style_feature_target(const FeatureFn& features, std::span<const Var> styles);
Var feature_matching_to_target(const Var& fx, const Tensor& target);

struct LossTerms {
  Var gan;
  Var reconstruction;
  Var feature_matching;
  Var region_matching;  // may be undefined when lambda_rm == 0
};

// L_GAN + lambda_R L_R + lambda_FM L_FM + lambda_RM L_RM. Undefined terms
// count as zero.
Var total_generator_objective(const LossTerms& terms, const LossWeights& weights);

}  // namespace rift
