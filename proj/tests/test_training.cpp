#include "doctest.h"
#include "support.hpp"

#include <filesystem>
#include <fstream>
#include <limits>

#include "rift/error.hpp"
#include "rift/training.hpp"

using namespace rift;
using namespace rift_test;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) { return scratch_dir("training", name); }

const DatasetManifest& tiny_dataset() {
  static const DatasetManifest m = [] {
    SyntheticSpec spec;
    spec.image_size = 16;
    spec.per_domain = 6;
    spec.test_fraction = 0.34;
    return generate_synthetic(spec, scratch("data"));
  }();
  return m;
}

TrainConfig tiny_config() {
  TrainConfig c;
  c.batch_size = 2;
  c.image_size = 16;
  c.base_channels = 8;
  c.style_dim = 4;
  c.max_iterations = 10;
  c.checkpoint_every = 0;
  c.seed = 3;
  return c;
}

bool same_arrays(const Checkpoint& a, const Checkpoint& b, const std::string& prefix = "") {
  std::size_t compared = 0;
  for (const auto& t : a.arrays) {
    if (t.name.rfind(prefix, 0) != 0) continue;
    if (!b.has_array(t.name)) return false;
    const Tensor& u = b.array(t.name);
    if (!u.same_shape(t.value)) return false;
    for (std::size_t i = 0; i < u.numel(); ++i)
      if (u[i] != t.value[i]) return false;
    ++compared;
  }
  return compared > 0;
}

}  // namespace

TEST_CASE("presets and config validation") {
  const TrainConfig paper = TrainConfig::paper();
  CHECK(paper.batch_size == 4);
  CHECK(paper.image_size == 128);
  CHECK(paper.max_iterations == 100000);
  const TrainConfig desk = TrainConfig::desk();
  CHECK(desk.batch_size == 4);
  CHECK(desk.image_size == 32);
  CHECK(desk.max_iterations == 2000);
  CHECK(desk.lr_g == 1e-4);
  CHECK(desk.weights == LossWeights{0.1, 1.0, 1.0});

  TrainConfig c = tiny_config();
  c.weights.lambda_rm = 0.5;
  const TrainConfig back = TrainConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());

  for (auto mutate : std::vector<std::function<void(TrainConfig&)>>{
           [](TrainConfig& t) { t.batch_size = 0; }, [](TrainConfig& t) { t.image_size = 20; },
           [](TrainConfig& t) { t.lr_d = 0.0; }, [](TrainConfig& t) { t.k_styles = 0; },
           [](TrainConfig& t) { t.weights.lambda_fm = -1.0; }, [](TrainConfig& t) { t.log_every = 0; }}) {
    TrainConfig bad = tiny_config();
    mutate(bad);
    CHECK_THROWS_AS(bad.validate(), ValidationError);
  }
}

TEST_CASE("batch sampling respects the domain and region rules") {
  const std::vector<Sample> data = load_dataset(tiny_dataset(), Split::kTrain);
  TrainConfig c = tiny_config();
  c.batch_size = 8;
  c.k_styles = 2;
  Trainer t(c, 3, 2);
  for (int trial = 0; trial < 20; ++trial) {
    const TrainBatch b = t.sample_batch(data);
    REQUIRE(b.styles.size() == 2);
    CHECK(b.x.shape() == Shape{8, 3, 16, 16});
    for (int n = 0; n < 8; ++n) {
      CHECK(b.c_y[n] != b.c_x[n]);
      CHECK(b.cm[n].region_counts()[b.rm_region[n]] > 0);
    }
  }
}

TEST_CASE("a step updates both networks and leaves D without generator gradients") {
  const std::vector<Sample> data = load_dataset(tiny_dataset(), Split::kTrain);
  Trainer t(tiny_config(), 3, 2);
  const Checkpoint before = t.checkpoint();
  const StepLosses l = t.step(t.sample_batch(data));
  CHECK(l.iteration == 1);
  CHECK(t.iteration() == 1);
  const Checkpoint after = t.checkpoint();
  CHECK_FALSE(same_arrays(before, after, "generator/"));
  CHECK_FALSE(same_arrays(before, after, "discriminator/"));
  for (const auto& p : t.discriminator().params().items()) CHECK_FALSE(p.var.has_grad());
  for (const auto& p : t.generator().params().items()) CHECK(p.var.has_grad());
  CHECK(after.manifest.at("adam_g_steps") == 1);
  CHECK(after.manifest.at("adam_d_steps") == 1);
}

TEST_CASE("zero weights reduce the step to plain conditional GAN alternation") {
  const std::vector<Sample> data = load_dataset(tiny_dataset(), Split::kTrain);
  TrainConfig c = tiny_config();
  c.weights = LossWeights{0.0, 0.0, 0.0};
  Trainer t(c, 3, 2);
  const StepLosses l = t.step(t.sample_batch(data));
  CHECK(l.reconstruction == 0.0);
  CHECK(l.feature_matching == 0.0);
  CHECK(l.region_matching == 0.0);
  CHECK(l.total == l.gan);
}

TEST_CASE("same seed and data give bit-identical parameters after 10 steps") {
  const std::vector<Sample> data = load_dataset(tiny_dataset(), Split::kTrain);
  Trainer a(tiny_config(), 3, 2), b(tiny_config(), 3, 2);
  for (int i = 0; i < 10; ++i) {
    a.step(a.sample_batch(data));
    b.step(b.sample_batch(data));
  }
  CHECK(same_arrays(a.checkpoint(), b.checkpoint()));
  TrainConfig other = tiny_config();
  other.seed = 4;
  Trainer c(other, 3, 2);
  CHECK_FALSE(same_arrays(a.checkpoint(), c.checkpoint(), "generator/"));
}

TEST_CASE("50 logged steps on the synthetic set stay finite") {
  const fs::path out = scratch("smoke");
  TrainConfig c = tiny_config();
  c.max_iterations = 50;
  fit(c, tiny_dataset(), FitOptions{out, std::nullopt, nullptr});
  std::ifstream log(out / "train_log.jsonl");
  std::string line;
  int lines = 0;
  while (std::getline(log, line)) {
    const auto j = nlohmann::json::parse(line);
    for (const char* k : {"loss_d", "loss_gan", "loss_r", "loss_fm", "loss_rm", "loss_g_total", "wall_seconds"}) {
      REQUIRE(j.contains(k));
      CHECK(std::isfinite(j.at(k).get<double>()));
    }
    CHECK(j.at("iter") == lines + 1);
    ++lines;
  }
  CHECK(lines == 50);
}

TEST_CASE("fit writes a loadable checkpoint that reproduces the generator") {
  const fs::path out = scratch("fit10");
  const Checkpoint ckpt = fit(tiny_config(), tiny_dataset(), FitOptions{out, std::nullopt, nullptr});
  CHECK(ckpt.manifest.at("iteration") == 10);
  CHECK(ckpt.manifest.at("train_config") == tiny_config().to_json());
  CHECK(ckpt.manifest.at("dataset").at("domains") == tiny_dataset().domains);
  const Checkpoint loaded = load_checkpoint(out / "final.ckpt");
  CHECK(loaded.manifest == ckpt.manifest);
  const Generator g1 = generator_from_checkpoint(ckpt), g2 = generator_from_checkpoint(loaded);
  const std::vector<Sample> test = load_dataset(tiny_dataset(), Split::kTest);
  const Var x = Var::constant(test[0].image);
  const MaskBatch cm{test[0].mask};
  CHECK(max_abs_diff(g1.generate(x, cm, x, cm).value(), g2.generate(x, cm, x, cm).value()) == 0.0);
}

TEST_CASE("resumed run equals the uninterrupted run bit-exactly") {
  TrainConfig c = tiny_config();
  c.max_iterations = 12;
  c.checkpoint_every = 5;
  const fs::path straight = scratch("straight");
  const Checkpoint full = fit(c, tiny_dataset(), FitOptions{straight, std::nullopt, nullptr});
  REQUIRE(fs::exists(straight / "ckpt_000005.ckpt"));

  const fs::path resumed_dir = scratch("resumed");
  const Checkpoint mid = load_checkpoint(straight / "ckpt_000005.ckpt");
  CHECK(mid.manifest.at("iteration") == 5);
  const Checkpoint resumed = fit(c, tiny_dataset(), FitOptions{resumed_dir, mid, nullptr});
  CHECK(resumed.manifest.at("iteration") == 12);
  CHECK(same_arrays(full, resumed));
  CHECK(full.manifest.at("rng_state") == resumed.manifest.at("rng_state"));
}

TEST_CASE("dataset mismatches are rejected before training starts") {
  TrainConfig c = tiny_config();
  c.image_size = 32;
  const fs::path out = scratch("mismatch");
  CHECK_THROWS_AS(fit(c, tiny_dataset(), FitOptions{out, std::nullopt, nullptr}), ValidationError);
  CHECK_FALSE(fs::exists(out / "train_log.jsonl"));

  const Checkpoint ok = fit(tiny_config(), tiny_dataset(), FitOptions{scratch("for_resume"), std::nullopt, nullptr});
  Checkpoint renamed = ok;
  renamed.manifest["dataset"]["domains"] = {"old", "young"};
  CHECK_THROWS_AS(fit(tiny_config(), tiny_dataset(), FitOptions{out, renamed, nullptr}), ValidationError);
}

TEST_CASE("non-finite losses abort with a diagnostic snapshot") {
  const std::vector<Sample> data = load_dataset(tiny_dataset(), Split::kTrain);
  Trainer t(tiny_config(), 3, 2);
  Var w = t.generator().params().items().front().var;
  w.mutable_value()[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(t.step(t.sample_batch(data)), NumericalError);

  TrainConfig c = tiny_config();
  c.lr_g = 1e300;
  c.lr_d = 1e300;
  const fs::path out = scratch("blowup");
  CHECK_THROWS_AS(fit(c, tiny_dataset(), FitOptions{out, std::nullopt, nullptr}), NumericalError);
  REQUIRE(fs::exists(out / "failure_snapshot.ckpt"));
  CHECK(load_checkpoint(out / "failure_snapshot.ckpt").manifest.at("failure") == "non-finite loss");
}
