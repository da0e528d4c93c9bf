#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "rift/dataio.hpp"
#include "rift/layers.hpp"
#include "rift/networks.hpp"

namespace rift {

// image batch -> one feature row per image, plus per-layer activations for
// the perceptual distance. Implementations must be deterministic.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::string name() const = 0;
  virtual int version() const = 0;
  virtual int feature_dim() const = 0;
  // images [N,3,H,W] -> [N, feature_dim]
  virtual Eigen::MatrixXd features(const Tensor& images) const = 0;
  // images [N,3,H,W] -> activations [N,C_l,H_l,W_l] per layer
  virtual std::vector<Tensor> layer_stack(const Tensor& images) const = 0;
};

struct GaussianSummary {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;

  // Rows are samples; unbiased (M-1) covariance. Needs M >= 2.
  static GaussianSummary estimate(const Eigen::MatrixXd& samples);
  int dim() const { return static_cast<int>(mean.size()); }
  // Symmetric and eigenvalues >= -tol.
  void validate(double tol = 1e-9) const;
};

// ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2}), clamped at 0.
double frechet_distance(const GaussianSummary& a, const GaussianSummary& b);

// Fraction of predictions equal to their targets.
double accuracy(const std::vector<int>& predicted, const std::vector<int>& targets);

// Mean over layers of the mean |a_l - b_l| after scaling every feature
// vector (one spatial position, all channels) to unit L2 norm.
double perceptual_distance(const FeatureExtractor& extractor, const Tensor& a, const Tensor& b);

struct ClassifierTrainConfig {
  int iterations = 400;
  int batch_size = 16;
  double lr = 1e-3;
  std::uint64_t seed = 1;

  nlohmann::json to_json() const;
};

// Small conv net: two stride-2 4x4 convs with leaky ReLU, global mean pool
// (the feature vector), linear head over the domains.
class DomainClassifier : public FeatureExtractor {
 public:
  static constexpr int kVersion = 1;

  DomainClassifier() = default;
  DomainClassifier(int num_domains, std::uint64_t seed);

  std::string name() const override { return "rift-domain-classifier"; }
  int version() const override { return kVersion; }
  int feature_dim() const override { return 32; }
  Eigen::MatrixXd features(const Tensor& images) const override;
  std::vector<Tensor> layer_stack(const Tensor& images) const override;

  int num_domains() const { return num_domains_; }
  Var logits(const Var& images) const;
  std::vector<int> predict(const Tensor& images) const;
  void train(const std::vector<Sample>& data, const ClassifierTrainConfig& config);

  const ParamSet& params() const { return params_; }
  Checkpoint to_checkpoint() const;
  static DomainClassifier from_checkpoint(const Checkpoint& ckpt);

 private:
  std::vector<Var> activations(const Var& images) const;

  int num_domains_ = 0;
  Conv2d conv0_, conv1_;
  Linear head_;
  ParamSet params_;
};

// Produces translated images; lets evaluation run against mocks.
class Translator {
 public:
  virtual ~Translator() = default;
  virtual Tensor translate(const Tensor& x, const MaskBatch& cm, const Tensor& s, const MaskBatch& sm) const = 0;
  virtual Tensor translate_region(const Tensor& x, const MaskBatch& cm, const Tensor& s, const MaskBatch& sm,
                                  int region) const = 0;
};

class GeneratorTranslator : public Translator {
 public:
  explicit GeneratorTranslator(const Generator& g) : g_(g) {}
  Tensor translate(const Tensor& x, const MaskBatch& cm, const Tensor& s, const MaskBatch& sm) const override;
  Tensor translate_region(const Tensor& x, const MaskBatch& cm, const Tensor& s, const MaskBatch& sm,
                          int region) const override;

 private:
  const Generator& g_;
};

// Returns the content image unchanged.
class IdentityTranslator : public Translator {
 public:
  Tensor translate(const Tensor& x, const MaskBatch&, const Tensor&, const MaskBatch&) const override { return x; }
  Tensor translate_region(const Tensor& x, const MaskBatch&, const Tensor&, const MaskBatch&, int) const override {
    return x;
  }
};

struct EvalConfig {
  int num_style_refs = 10;
  std::uint64_t seed = 1;

  nlohmann::json to_json() const;
};

struct RegionChange {
  double inside = 0.0;   // mean |r_hat - x| over pixels of the translated region
  double outside = 0.0;  // same, over all other pixels
  double ratio() const;  // inside / outside; +inf when outside == 0
};

struct EvalReport {
  double accuracy = 0.0;
  double fid_avg = 0.0;
  std::vector<std::pair<std::string, double>> fid_pairs;  // "src->dst"
  double perceptual_avg = 0.0;
  double leakage = 0.0;  // mean outside change over all single-region translations
  std::vector<std::pair<std::string, RegionChange>> region_change;
  int num_test_images = 0;
  int num_translations = 0;
  std::string config_hash;

  nlohmann::json to_json(const FeatureExtractor& extractor, const EvalConfig& config) const;
};

struct EvalInputs {
  const Translator* translator = nullptr;
  const DomainClassifier* classifier = nullptr;  // accuracy and features
  const std::vector<Sample>* test = nullptr;      // content images and style references
  const std::vector<Sample>* reference = nullptr; // real images for the per-domain feature statistics
  std::vector<std::string> domains;
  std::vector<std::string> region_names;
  nlohmann::json model_config;  // hashed into config_hash
};

// Each test image is translated into every other domain with num_style_refs
// style references drawn from that domain's test images. Single-region
// translations with the first reference, one per region present in the
// content mask, feed the leakage and per-region change scores.
EvalReport evaluate_model(const EvalInputs& inputs, const EvalConfig& config);

// 64-bit FNV-1a, hex encoded.
std::string fnv1a_hex(const std::string& text);

}  // namespace rift
