#include "doctest.h"
#include "support.hpp"

#include "rift/dataio.hpp"
#include "rift/error.hpp"
#include "rift/metrics.hpp"

using namespace rift;
using namespace rift_test;

namespace {

GaussianSummary summary(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov) {
  GaussianSummary g;
  g.mean = mean;
  g.cov = cov;
  return g;
}

// Layers are the image itself and its elementwise square.
class PixelExtractor : public FeatureExtractor {
 public:
  std::string name() const override { return "pixels"; }
  int version() const override { return 1; }
  int feature_dim() const override { return 3; }
  Eigen::MatrixXd features(const Tensor& images) const override {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(images.dim(0), 3);
    const int hw = images.dim(2) * images.dim(3);
    for (int n = 0; n < images.dim(0); ++n)
      for (int c = 0; c < 3; ++c)
        for (int i = 0; i < hw; ++i) out(n, c) += images[(static_cast<std::size_t>(n) * 3 + c) * hw + i] / hw;
    return out;
  }
  std::vector<Tensor> layer_stack(const Tensor& images) const override {
    Tensor sq = images;
    for (std::size_t i = 0; i < sq.numel(); ++i) sq[i] *= sq[i];
    return {images, sq};
  }
};

long double perceptual_oracle(const std::vector<Tensor>& la, const std::vector<Tensor>& lb) {
  long double total = 0.0L;
  for (std::size_t l = 0; l < la.size(); ++l) {
    const Tensor& a = la[l];
    const Tensor& b = lb[l];
    const int N = a.dim(0), C = a.dim(1), HW = a.dim(2) * a.dim(3);
    long double sum = 0.0L;
    for (int n = 0; n < N; ++n) {
      for (int i = 0; i < HW; ++i) {
        Eigen::VectorXd va(C), vb(C);
        for (int c = 0; c < C; ++c) {
          va[c] = a[(static_cast<std::size_t>(n) * C + c) * HW + i];
          vb[c] = b[(static_cast<std::size_t>(n) * C + c) * HW + i];
        }
        sum += ((va / (va.norm() + 1e-10)) - (vb / (vb.norm() + 1e-10))).cwiseAbs().sum();
      }
    }
    total += sum / a.numel();
  }
  return total / la.size();
}

// Shifts every pixel of the translated region by +0.5 and leaves the rest.
class RegionShiftTranslator : public Translator {
 public:
  Tensor translate(const Tensor& x, const MaskBatch&, const Tensor&, const MaskBatch&) const override { return x; }
  Tensor translate_region(const Tensor& x, const MaskBatch& cm, const Tensor&, const MaskBatch&,
                          int region) const override {
    Tensor out = x;
    for (int c = 0; c < x.dim(1); ++c)
      for (int y = 0; y < x.dim(2); ++y)
        for (int xx = 0; xx < x.dim(3); ++xx)
          if (cm[0].label(y, xx) == region) out.at(0, c, y, xx) += 0.5;
    return out;
  }
};

// Adds 0.1 everywhere on region translation.
class GlobalShiftTranslator : public IdentityTranslator {
 public:
  Tensor translate_region(const Tensor& x, const MaskBatch&, const Tensor&, const MaskBatch&, int) const override {
    Tensor out = x;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] += 0.1;
    return out;
  }
};

struct EvalFixture {
  DatasetManifest manifest;
  std::vector<Sample> train, test;
  DomainClassifier classifier;

  EvalFixture() {
    SyntheticSpec spec;
    spec.image_size = 16;
    spec.per_domain = 12;
    spec.test_fraction = 0.25;
    manifest = generate_synthetic(spec, scratch_dir("metrics", "data"));
    train = load_dataset(manifest, Split::kTrain);
    test = load_dataset(manifest, Split::kTest);
    classifier = DomainClassifier(2, 1);
    ClassifierTrainConfig cfg;
    cfg.iterations = 150;
    classifier.train(train, cfg);
  }

  EvalInputs inputs(const Translator& t) const {
    return EvalInputs{&t, &classifier, &test, &train, manifest.domains, manifest.region_names, {{"model", "mock"}}};
  }
};

const EvalFixture& fixture() {
  static const EvalFixture f;
  return f;
}

}  // namespace

TEST_CASE("frechet distance closed forms") {
  std::mt19937_64 rng(1);
  const Eigen::MatrixXd s = random_psd(5, 5, rng);
  const Eigen::VectorXd m = Eigen::VectorXd::Random(5);
  CHECK(frechet_distance(summary(m, s), summary(m, s)) < 1e-9);

  const Eigen::VectorXd shift = Eigen::VectorXd::Random(5);
  CHECK(frechet_distance(summary(m, s), summary(m + shift, s)) ==
        doctest::Approx(shift.squaredNorm()).epsilon(1e-9));

  Eigen::VectorXd da(4), db(4);
  da << 1.0, 4.0, 0.25, 0.0;
  db << 9.0, 1.0, 0.25, 2.0;
  double expect = 0.0;
  for (int i = 0; i < 4; ++i) expect += std::pow(std::sqrt(da[i]) - std::sqrt(db[i]), 2);
  const Eigen::VectorXd z = Eigen::VectorXd::Zero(4);
  CHECK(frechet_distance(summary(z, da.asDiagonal()), summary(z, db.asDiagonal())) ==
        doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("frechet distance matches the general eigen-solver oracle and is symmetric") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 25; ++trial) {
    const int d = 2 + static_cast<int>(rng() % 7);
    const int rank_a = 1 + static_cast<int>(rng() % d), rank_b = 1 + static_cast<int>(rng() % d);
    const Eigen::MatrixXd sa = random_psd(d, rank_a, rng), sb = random_psd(d, rank_b, rng);
    const Eigen::VectorXd ma = Eigen::VectorXd::Random(d), mb = Eigen::VectorXd::Random(d);
    const double got = frechet_distance(summary(ma, sa), summary(mb, sb));
    const double want = static_cast<double>(frechet_oracle(ma, sa, mb, sb));
    CHECK(got >= 0.0);
    CHECK(std::abs(got - want) <= 1e-6 * std::max(1.0, std::abs(want)));
    CHECK(std::abs(got - frechet_distance(summary(mb, sb), summary(ma, sa))) <= 1e-6 * std::max(1.0, got));
  }
}

TEST_CASE("frechet distance rejects mismatched dimensions") {
  const GaussianSummary a = summary(Eigen::VectorXd::Zero(3), Eigen::MatrixXd::Identity(3, 3));
  const GaussianSummary b = summary(Eigen::VectorXd::Zero(4), Eigen::MatrixXd::Identity(4, 4));
  CHECK_THROWS_AS(frechet_distance(a, b), ValidationError);
  const GaussianSummary c = summary(Eigen::VectorXd::Zero(3), Eigen::MatrixXd::Identity(4, 4));
  CHECK_THROWS_AS(frechet_distance(a, c), ValidationError);
}

TEST_CASE("gaussian estimate matches a two-pass oracle") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(2.0, 3.0);
  const int M = 37, D = 6;
  Eigen::MatrixXd x(M, D);
  for (int i = 0; i < M; ++i)
    for (int j = 0; j < D; ++j) x(i, j) = g(rng);
  const GaussianSummary s = GaussianSummary::estimate(x);
  std::vector<long double> mean(D, 0.0L);
  for (int j = 0; j < D; ++j) {
    for (int i = 0; i < M; ++i) mean[j] += x(i, j);
    mean[j] /= M;
    CHECK(std::abs(s.mean[j] - static_cast<double>(mean[j])) < 1e-6);
  }
  for (int a = 0; a < D; ++a)
    for (int b = 0; b < D; ++b) {
      long double c = 0.0L;
      for (int i = 0; i < M; ++i) c += (x(i, a) - mean[a]) * (x(i, b) - mean[b]);
      c /= (M - 1);
      CHECK(std::abs(s.cov(a, b) - static_cast<double>(c)) < 1e-6);
    }
  CHECK_NOTHROW(s.validate());
  CHECK_THROWS_AS(GaussianSummary::estimate(x.topRows(1)), ValidationError);

  GaussianSummary bad = s;
  bad.cov(0, 1) += 1.0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = s;
  bad.cov = -Eigen::MatrixXd::Identity(D, D);
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("accuracy on trivial cases") {
  CHECK(accuracy({0, 1, 1, 0}, {0, 1, 1, 0}) == 1.0);
  CHECK(accuracy({1, 0}, {0, 1}) == 0.0);
  CHECK(accuracy({0, 1, 0, 0}, {0, 1, 1, 1}) == 0.5);
  CHECK_THROWS_AS(accuracy({0}, {0, 1}), ValidationError);
  CHECK_THROWS_AS(accuracy({}, {}), ValidationError);
}

TEST_CASE("perceptual distance against a loop oracle") {
  std::mt19937_64 rng(4);
  const PixelExtractor ex;
  const Tensor a = random_tensor({2, 3, 5, 4}, rng), b = random_tensor({2, 3, 5, 4}, rng);
  CHECK(perceptual_distance(ex, a, a) == 0.0);
  const double d = perceptual_distance(ex, a, b);
  CHECK(d > 0.0);
  CHECK(d == doctest::Approx(static_cast<double>(perceptual_oracle(ex.layer_stack(a), ex.layer_stack(b)))).epsilon(1e-12));
  CHECK(d == perceptual_distance(ex, b, a));
  // Per-position normalization makes the distance scale invariant.
  Tensor a2 = a;
  for (std::size_t i = 0; i < a2.numel(); ++i) a2[i] *= 3.0;
  CHECK(perceptual_distance(ex, a2, b) == doctest::Approx(d).epsilon(1e-9));
  CHECK_THROWS_AS(perceptual_distance(ex, a, random_tensor({1, 3, 5, 4}, rng)), ValidationError);
}

TEST_CASE("classifier checkpoint round trip") {
  const EvalFixture& f = fixture();
  const DomainClassifier back = DomainClassifier::from_checkpoint(f.classifier.to_checkpoint());
  const Tensor x = f.test[0].image;
  CHECK((back.features(x) - f.classifier.features(x)).cwiseAbs().maxCoeff() == 0.0);
  CHECK(back.layer_stack(x).size() == 2);
  CHECK(f.classifier.features(x).cols() == f.classifier.feature_dim());
  Checkpoint wrong = f.classifier.to_checkpoint();
  wrong.manifest["version"] = 2;
  CHECK_THROWS_AS(DomainClassifier::from_checkpoint(wrong), ValidationError);
}

TEST_CASE("evaluation of the identity translator") {
  const EvalFixture& f = fixture();
  const IdentityTranslator identity;
  EvalConfig cfg;
  cfg.num_style_refs = 3;
  const EvalReport r = evaluate_model(f.inputs(identity), cfg);
  CHECK(r.num_test_images == static_cast<int>(f.test.size()));
  CHECK(r.num_translations == static_cast<int>(f.test.size()) * 3);
  CHECK(r.leakage == 0.0);
  CHECK(r.fid_pairs.size() == 2);
  CHECK(r.fid_pairs[0].first == "warm->cool");
  CHECK(r.fid_pairs[1].first == "cool->warm");
  // Untranslated images keep their source domain.
  CHECK(r.accuracy <= 0.2);
  REQUIRE(r.region_change.size() == 3);
  for (const auto& [name, rc] : r.region_change) {
    CHECK(rc.inside == 0.0);
    CHECK(rc.outside == 0.0);
  }

  const nlohmann::json j = r.to_json(f.classifier, cfg);
  for (const char* k : {"accuracy", "fid_avg", "fid_pairs", "perceptual_avg", "leakage", "region_change",
                        "num_test_images", "num_translations", "num_style_refs", "eval_seed", "feature_extractor",
                        "metric_scale", "config_hash"}) {
    CHECK(j.contains(k));
  }
  CHECK(j.at("metric_scale") == "relative-only");
  CHECK(j.at("region_change").at("hair").at("ratio").is_null());

  CHECK(evaluate_model(f.inputs(identity), cfg).to_json(f.classifier, cfg) == j);
  EvalConfig other = cfg;
  other.num_style_refs = 4;
  CHECK(evaluate_model(f.inputs(identity), other).config_hash != r.config_hash);
}

TEST_CASE("region change scores follow the translator") {
  const EvalFixture& f = fixture();
  EvalConfig cfg;
  cfg.num_style_refs = 1;
  const EvalReport local = evaluate_model(f.inputs(RegionShiftTranslator{}), cfg);
  CHECK(local.leakage == 0.0);
  for (const auto& [name, rc] : local.region_change) {
    CHECK(rc.inside == doctest::Approx(0.5));
    CHECK(rc.outside == 0.0);
    CHECK(std::isinf(rc.ratio()));
  }
  const EvalReport global = evaluate_model(f.inputs(GlobalShiftTranslator{}), cfg);
  CHECK(global.leakage == doctest::Approx(0.1));
  for (const auto& [name, rc] : global.region_change) CHECK(rc.ratio() == doctest::Approx(1.0));
}

TEST_CASE("evaluation input errors") {
  const EvalFixture& f = fixture();
  const IdentityTranslator identity;
  EvalConfig cfg;
  cfg.num_style_refs = 0;
  CHECK_THROWS_AS(evaluate_model(f.inputs(identity), cfg), ValidationError);
  EvalInputs in = f.inputs(identity);
  in.domains = {"warm", "cool", "grey"};
  CHECK_THROWS_AS(evaluate_model(in, EvalConfig{}), ValidationError);
  in = f.inputs(identity);
  in.translator = nullptr;
  CHECK_THROWS_AS(evaluate_model(in, EvalConfig{}), ValidationError);
  const std::vector<Sample> warm_only(f.test.begin(), f.test.begin() + 3);
  in = f.inputs(identity);
  in.test = &warm_only;
  CHECK_THROWS_AS(evaluate_model(in, EvalConfig{}), ValidationError);
}

TEST_CASE("fnv1a reference values") {
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
  CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
  CHECK(fnv1a_hex("foobar") == "85944171f73967e8");
}
