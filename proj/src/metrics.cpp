#include "rift/metrics.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <random>

#include "rift/error.hpp"
#include "rift/losses.hpp"
#include "rift/ops.hpp"
#include "rift/optim.hpp"

namespace rift {
namespace {

Eigen::MatrixXd symmetric_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  if (es.info() != Eigen::Success) throw NumericalError("frechet_distance: eigendecomposition failed");
  const Eigen::VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

Tensor stack_images(const std::vector<const Sample*>& picks) {
  std::vector<Tensor> parts;
  for (const Sample* s : picks) parts.push_back(s->image);
  return concat_batch(parts);
}

Tensor repeat_image(const Tensor& image, int times) {
  std::vector<Tensor> parts(static_cast<std::size_t>(times), image);
  return concat_batch(parts);
}

}  // namespace

GaussianSummary GaussianSummary::estimate(const Eigen::MatrixXd& samples) {
  if (samples.rows() < 2) throw ValidationError("GaussianSummary: at least two samples required");
  GaussianSummary g;
  g.mean = samples.colwise().mean().transpose();
  const Eigen::MatrixXd centered = samples.rowwise() - g.mean.transpose();
  g.cov = (centered.transpose() * centered) / static_cast<double>(samples.rows() - 1);
  return g;
}

void GaussianSummary::validate(double tol) const {
  if (cov.rows() != mean.size() || cov.cols() != mean.size()) {
    throw ValidationError("GaussianSummary: covariance is not " + std::to_string(mean.size()) + " square");
  }
  const double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > tol * scale) {
    throw ValidationError("GaussianSummary: covariance is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < -tol * scale) {
    throw ValidationError("GaussianSummary: covariance has a negative eigenvalue");
  }
}

double frechet_distance(const GaussianSummary& a, const GaussianSummary& b) {
  if (a.dim() != b.dim()) {
    throw ValidationError("frechet_distance: dimension mismatch " + std::to_string(a.dim()) + " vs " +
                          std::to_string(b.dim()));
  }
  if (a.cov.rows() != a.dim() || b.cov.rows() != b.dim()) {
    throw ValidationError("frechet_distance: covariance size does not match the mean");
  }
  // Tr (S_a S_b)^{1/2} = Tr (R S_b R)^{1/2} with R = S_a^{1/2}; the inner
  // product is symmetric so a second symmetric solve suffices.
  const Eigen::MatrixXd root_a = symmetric_sqrt(a.cov);
  Eigen::MatrixXd inner = root_a * b.cov * root_a;
  inner = 0.5 * (inner + inner.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(inner, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw NumericalError("frechet_distance: eigendecomposition failed");
  const double tr_root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double d = (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() - 2.0 * tr_root;
  if (!std::isfinite(d)) throw NumericalError("frechet_distance: non-finite result");
  return std::max(d, 0.0);
}

double accuracy(const std::vector<int>& predicted, const std::vector<int>& targets) {
  if (predicted.size() != targets.size()) throw ValidationError("accuracy: prediction/target count mismatch");
  if (targets.empty()) throw ValidationError("accuracy: no predictions");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) hits += predicted[i] == targets[i];
  return static_cast<double>(hits) / static_cast<double>(targets.size());
}

double perceptual_distance(const FeatureExtractor& extractor, const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw ValidationError("perceptual_distance: shape mismatch " + shape_string(a.shape()) + " vs " +
                          shape_string(b.shape()));
  }
  const std::vector<Tensor> fa = extractor.layer_stack(a);
  const std::vector<Tensor> fb = extractor.layer_stack(b);
  if (fa.empty() || fa.size() != fb.size()) throw ValidationError("perceptual_distance: empty layer stack");
  double total = 0.0;
  for (std::size_t l = 0; l < fa.size(); ++l) {
    auto [N, C, H, W] = nchw(fa[l], "perceptual_distance");
    double sum = 0.0;
    for (int n = 0; n < N; ++n)
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          double na = 0.0, nb = 0.0;
          for (int c = 0; c < C; ++c) {
            na += fa[l].at(n, c, y, x) * fa[l].at(n, c, y, x);
            nb += fb[l].at(n, c, y, x) * fb[l].at(n, c, y, x);
          }
          na = std::sqrt(na) + 1e-10;
          nb = std::sqrt(nb) + 1e-10;
          for (int c = 0; c < C; ++c) sum += std::abs(fa[l].at(n, c, y, x) / na - fb[l].at(n, c, y, x) / nb);
        }
    total += sum / static_cast<double>(fa[l].numel());
  }
  return total / static_cast<double>(fa.size());
}

nlohmann::json ClassifierTrainConfig::to_json() const {
  return {{"iterations", iterations}, {"batch_size", batch_size}, {"lr", lr}, {"seed", seed}};
}

DomainClassifier::DomainClassifier(int num_domains, std::uint64_t seed) : num_domains_(num_domains) {
  if (num_domains < 2) throw ValidationError("DomainClassifier: at least two domains required");
  std::mt19937_64 rng(seed);
  conv0_ = Conv2d(3, 16, 4, 2, 1, rng);
  conv1_ = Conv2d(16, 32, 4, 2, 1, rng);
  head_ = Linear(32, num_domains, rng);
  conv0_.register_params(params_, "conv0");
  conv1_.register_params(params_, "conv1");
  head_.register_params(params_, "head");
}

std::vector<Var> DomainClassifier::activations(const Var& images) const {
  const Var a0 = ops::leaky_relu(conv0_(images), 0.2);
  const Var a1 = ops::leaky_relu(conv1_(a0), 0.2);
  return {a0, a1};
}

Var DomainClassifier::logits(const Var& images) const {
  return head_(ops::spatial_mean(activations(images).back()));
}

Eigen::MatrixXd DomainClassifier::features(const Tensor& images) const {
  NoGradGuard no_grad;
  const Tensor f = ops::spatial_mean(activations(Var::constant(images)).back()).value();
  Eigen::MatrixXd out(f.dim(0), f.dim(1));
  for (int n = 0; n < f.dim(0); ++n)
    for (int c = 0; c < f.dim(1); ++c) out(n, c) = f[static_cast<std::size_t>(n) * f.dim(1) + c];
  return out;
}

std::vector<Tensor> DomainClassifier::layer_stack(const Tensor& images) const {
  NoGradGuard no_grad;
  std::vector<Tensor> out;
  for (const Var& a : activations(Var::constant(images))) out.push_back(a.value());
  return out;
}

std::vector<int> DomainClassifier::predict(const Tensor& images) const {
  NoGradGuard no_grad;
  const Tensor l = logits(Var::constant(images)).value();
  std::vector<int> out;
  for (int n = 0; n < l.dim(0); ++n) {
    const double* row = l.data() + static_cast<std::size_t>(n) * num_domains_;
    out.push_back(static_cast<int>(std::max_element(row, row + num_domains_) - row));
  }
  return out;
}

void DomainClassifier::train(const std::vector<Sample>& data, const ClassifierTrainConfig& config) {
  if (data.empty()) throw ValidationError("DomainClassifier: empty training set");
  for (const Sample& s : data) {
    if (s.domain < 0 || s.domain >= num_domains_) {
      throw ValidationError("DomainClassifier: sample " + s.stem + " has domain outside the classifier alphabet");
    }
  }
  std::mt19937_64 rng(config.seed);
  Adam adam(params_, AdamConfig{.lr = config.lr});
  std::uniform_int_distribution<std::size_t> any(0, data.size() - 1);
  params_.set_requires_grad(true);
  for (int it = 0; it < config.iterations; ++it) {
    std::vector<const Sample*> picks;
    std::vector<int> labels;
    for (int n = 0; n < config.batch_size; ++n) {
      picks.push_back(&data[any(rng)]);
      labels.push_back(picks.back()->domain);
    }
    params_.zero_grad();
    const Var loss = ops::softmax_cross_entropy(logits(Var::constant(stack_images(picks))), labels);
    if (!std::isfinite(loss.value()[0])) throw NumericalError("DomainClassifier: non-finite training loss");
    backward(loss);
    adam.step();
  }
  params_.zero_grad();
}

Checkpoint DomainClassifier::to_checkpoint() const {
  Checkpoint c;
  c.manifest = {{"kind", "domain_classifier"}, {"name", name()}, {"version", version()}, {"num_domains", num_domains_}};
  export_params(params_, "classifier/", c.arrays);
  return c;
}

DomainClassifier DomainClassifier::from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.manifest.value("kind", "") != "domain_classifier" || ckpt.manifest.value("version", 0) != kVersion) {
    throw ValidationError("checkpoint does not hold a domain classifier of version " + std::to_string(kVersion));
  }
  DomainClassifier c(ckpt.manifest.at("num_domains").get<int>(), 0);
  import_params(c.params_, "classifier/", ckpt);
  return c;
}

Tensor GeneratorTranslator::translate(const Tensor& x, const MaskBatch& cm, const Tensor& s,
                                      const MaskBatch& sm) const {
  NoGradGuard no_grad;
  return g_.generate(Var::constant(x), cm, Var::constant(s), sm).value();
}

Tensor GeneratorTranslator::translate_region(const Tensor& x, const MaskBatch& cm, const Tensor& s,
                                             const MaskBatch& sm, int region) const {
  NoGradGuard no_grad;
  return rift::translate_region(g_, Var::constant(x), cm, Var::constant(s), sm, region).value();
}

nlohmann::json EvalConfig::to_json() const { return {{"num_style_refs", num_style_refs}, {"seed", seed}}; }

double RegionChange::ratio() const {
  return outside > 0.0 ? inside / outside : std::numeric_limits<double>::infinity();
}

nlohmann::json EvalReport::to_json(const FeatureExtractor& extractor, const EvalConfig& config) const {
  auto finite_or_null = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  nlohmann::json pairs = nlohmann::json::object();
  for (const auto& [k, v] : fid_pairs) pairs[k] = v;
  nlohmann::json regions = nlohmann::json::object();
  for (const auto& [k, v] : region_change) {
    regions[k] = {{"inside", v.inside}, {"outside", v.outside}, {"ratio", finite_or_null(v.ratio())}};
  }
  return {{"accuracy", accuracy},
          {"fid_avg", fid_avg},
          {"fid_pairs", pairs},
          {"perceptual_avg", perceptual_avg},
          {"leakage", leakage},
          {"region_change", regions},
          {"num_test_images", num_test_images},
          {"num_translations", num_translations},
          {"num_style_refs", config.num_style_refs},
          {"eval_seed", config.seed},
          {"feature_extractor", {{"name", extractor.name()}, {"version", extractor.version()}}},
          {"metric_scale", "relative-only"},
          {"config_hash", config_hash}};
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

EvalReport evaluate_model(const EvalInputs& in, const EvalConfig& config) {
  if (!in.translator || !in.classifier || !in.test || !in.reference) {
    throw ValidationError("evaluate_model: translator, classifier, test and reference sets are required");
  }
  if (config.num_style_refs < 1) throw ValidationError("evaluate_model: num_style_refs must be at least 1");
  const int num_domains = static_cast<int>(in.domains.size());
  if (num_domains < 2) throw ValidationError("evaluate_model: at least two domains required");
  if (in.classifier->num_domains() != num_domains) {
    throw ValidationError("evaluate_model: classifier has " + std::to_string(in.classifier->num_domains()) +
                          " domains, dataset has " + std::to_string(num_domains));
  }
  const std::vector<Sample>& test = *in.test;
  if (test.empty()) throw ValidationError("evaluate_model: empty test set");

  std::vector<std::vector<const Sample*>> test_by_domain(num_domains), ref_by_domain(num_domains);
  for (const Sample& s : test) {
    if (s.domain < 0 || s.domain >= num_domains) throw ValidationError("evaluate_model: bad domain on " + s.stem);
    test_by_domain[s.domain].push_back(&s);
  }
  for (const Sample& s : *in.reference) {
    if (s.domain < 0 || s.domain >= num_domains) throw ValidationError("evaluate_model: bad domain on " + s.stem);
    ref_by_domain[s.domain].push_back(&s);
  }
  for (int d = 0; d < num_domains; ++d) {
    if (test_by_domain[d].empty()) throw ValidationError("evaluate_model: no test images for " + in.domains[d]);
    if (ref_by_domain[d].size() < 2) {
      throw ValidationError("evaluate_model: need at least two reference images for " + in.domains[d]);
    }
  }

  std::mt19937_64 rng(config.seed);
  const int R = test.front().mask.num_regions();
  std::vector<int> predicted, targets;
  std::map<std::pair<int, int>, std::vector<Eigen::MatrixXd>> pair_features;
  double perceptual_sum = 0.0;
  int translations = 0;
  std::vector<double> in_sum(R, 0.0), out_sum(R, 0.0);
  std::vector<long> in_count(R, 0), out_count(R, 0);

  for (const Sample& x : test) {
    for (int c_y = 0; c_y < num_domains; ++c_y) {
      if (c_y == x.domain) continue;
      const auto& pool = test_by_domain[c_y];
      std::vector<std::size_t> order(pool.size());
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng);
      std::vector<const Sample*> refs;
      for (int k = 0; k < config.num_style_refs; ++k) refs.push_back(pool[order[k % order.size()]]);

      const int K = config.num_style_refs;
      const Tensor xs = repeat_image(x.image, K);
      const MaskBatch cms(static_cast<std::size_t>(K), x.mask);
      MaskBatch sms;
      for (const Sample* s : refs) sms.push_back(s->mask);
      const Tensor styles = stack_images(refs);
      const Tensor out = in.translator->translate(xs, cms, styles, sms);
      if (out.shape() != xs.shape()) throw ValidationError("evaluate_model: translator changed the image shape");

      const std::vector<int> p = in.classifier->predict(out);
      predicted.insert(predicted.end(), p.begin(), p.end());
      targets.insert(targets.end(), p.size(), c_y);
      pair_features[{x.domain, c_y}].push_back(in.classifier->features(out));
      for (int k = 0; k < K; ++k) {
        perceptual_sum += perceptual_distance(*in.classifier, take_sample(out, k), take_sample(styles, k));
      }
      translations += K;

      const MaskBatch sm0{refs.front()->mask};
      const Tensor& s0 = refs.front()->image;
      const std::vector<int> counts = x.mask.region_counts();
      const int HW = x.mask.height() * x.mask.width();
      for (int r = 0; r < R; ++r) {
        if (counts[r] == 0 || counts[r] == HW) continue;
        const Tensor rh = in.translator->translate_region(x.image, {x.mask}, s0, sm0, r);
        if (rh.shape() != x.image.shape()) throw ValidationError("evaluate_model: translator changed the shape");
        const int C = rh.dim(1);
        for (int c = 0; c < C; ++c)
          for (int yy = 0; yy < x.mask.height(); ++yy)
            for (int xx = 0; xx < x.mask.width(); ++xx) {
              const double change = std::abs(rh.at(0, c, yy, xx) - x.image.at(0, c, yy, xx));
              if (x.mask.label(yy, xx) == r) {
                in_sum[r] += change;
                ++in_count[r];
              } else {
                out_sum[r] += change;
                ++out_count[r];
              }
            }
      }
    }
  }

  EvalReport report;
  report.num_test_images = static_cast<int>(test.size());
  report.num_translations = translations;
  report.accuracy = accuracy(predicted, targets);
  report.perceptual_avg = perceptual_sum / static_cast<double>(translations);

  std::vector<GaussianSummary> real(num_domains);
  for (int d = 0; d < num_domains; ++d) {
    std::vector<const Sample*> refs = ref_by_domain[d];
    real[d] = GaussianSummary::estimate(in.classifier->features(stack_images(refs)));
  }
  double fid_sum = 0.0;
  for (const auto& [key, blocks] : pair_features) {
    Eigen::Index rows = 0;
    for (const auto& b : blocks) rows += b.rows();
    Eigen::MatrixXd all(rows, blocks.front().cols());
    Eigen::Index at = 0;
    for (const auto& b : blocks) {
      all.middleRows(at, b.rows()) = b;
      at += b.rows();
    }
    const double fid = frechet_distance(GaussianSummary::estimate(all), real[key.second]);
    report.fid_pairs.emplace_back(in.domains[key.first] + "->" + in.domains[key.second], fid);
    fid_sum += fid;
  }
  report.fid_avg = fid_sum / static_cast<double>(report.fid_pairs.size());

  double leak_sum = 0.0;
  long leak_count = 0;
  for (int r = 0; r < R; ++r) {
    if (in_count[r] == 0) continue;
    RegionChange rc;
    rc.inside = in_sum[r] / static_cast<double>(in_count[r]);
    rc.outside = out_count[r] ? out_sum[r] / static_cast<double>(out_count[r]) : 0.0;
    const std::string name = r < static_cast<int>(in.region_names.size()) ? in.region_names[r] : std::to_string(r);
    report.region_change.emplace_back(name, rc);
    leak_sum += out_sum[r];
    leak_count += out_count[r];
  }
  report.leakage = leak_count ? leak_sum / static_cast<double>(leak_count) : 0.0;

  const nlohmann::json hashed = {{"model", in.model_config},
                                 {"eval", config.to_json()},
                                 {"domains", in.domains},
                                 {"regions", in.region_names},
                                 {"extractor", {{"name", in.classifier->name()}, {"version", in.classifier->version()}}},
                                 {"test", test.size()},
                                 {"reference", in.reference->size()}};
  report.config_hash = fnv1a_hex(hashed.dump());
  return report;
}

}  // namespace rift
