#include "rift/training.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "rift/error.hpp"
#include "rift/ops.hpp"

namespace rift {
namespace {

std::uint64_t derive_seed(std::uint64_t seed, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

Var stack_images(const std::vector<const Sample*>& picks) {
  std::vector<Tensor> parts;
  parts.reserve(picks.size());
  for (const Sample* s : picks) parts.push_back(s->image);
  return Var::constant(concat_batch(parts));
}

template <class T>
T pick(const std::vector<T>& v, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> dist(0, v.size() - 1);
  return v[dist(rng)];
}

std::string ckpt_name(long iteration) {
  std::ostringstream os;
  os << "ckpt_" << std::setw(6) << std::setfill('0') << iteration << ".ckpt";
  return os.str();
}

}  // namespace

TrainConfig TrainConfig::desk() { return TrainConfig{}; }

TrainConfig TrainConfig::paper() {
  TrainConfig c;
  c.image_size = 128;
  c.max_iterations = 100000;
  c.checkpoint_every = 10000;
  c.log_every = 100;
  return c;
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ValidationError("batch_size must be at least 1");
  if (image_size < 16 || image_size % 8 != 0) throw ValidationError("image_size must be a multiple of 8, at least 16");
  if (max_iterations < 0) throw ValidationError("max_iterations must be nonnegative");
  if (!(lr_g > 0.0) || !(lr_d > 0.0)) throw ValidationError("learning rates must be positive");
  if (k_styles < 1) throw ValidationError("k_styles must be at least 1");
  if (checkpoint_every < 0) throw ValidationError("checkpoint_every must be nonnegative");
  if (log_every < 1) throw ValidationError("log_every must be at least 1");
  if (base_channels < 4 || base_channels % 4 != 0) throw ValidationError("base_channels must be a multiple of 4");
  if (style_dim < 1) throw ValidationError("style_dim must be positive");
  weights.validate();
}

nlohmann::json TrainConfig::to_json() const {
  return {{"batch_size", batch_size},
          {"image_size", image_size},
          {"max_iterations", max_iterations},
          {"lr_g", lr_g},
          {"lr_d", lr_d},
          {"seed", seed},
          {"weights", weights_to_json(weights)},
          {"k_styles", k_styles},
          {"checkpoint_every", checkpoint_every},
          {"log_every", log_every},
          {"base_channels", base_channels},
          {"style_dim", style_dim},
          {"dataset", dataset}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.batch_size = j.at("batch_size").get<int>();
  c.image_size = j.at("image_size").get<int>();
  c.max_iterations = j.at("max_iterations").get<long>();
  c.lr_g = j.at("lr_g").get<double>();
  c.lr_d = j.at("lr_d").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.weights = weights_from_json(j.at("weights"));
  c.k_styles = j.at("k_styles").get<int>();
  c.checkpoint_every = j.at("checkpoint_every").get<long>();
  c.log_every = j.at("log_every").get<long>();
  c.base_channels = j.at("base_channels").get<int>();
  c.style_dim = j.at("style_dim").get<int>();
  c.dataset = j.value("dataset", std::string());
  c.validate();
  return c;
}

nlohmann::json StepLosses::to_json() const {
  return {{"iter", iteration},
          {"loss_d", d},
          {"loss_gan", gan},
          {"loss_r", reconstruction},
          {"loss_fm", feature_matching},
          {"loss_rm", region_matching},
          {"loss_g_total", total}};
}

Trainer::Trainer(const TrainConfig& config, int num_regions, int num_domains) : config_(config) {
  config_.validate();
  arch_.image_size = config.image_size;
  arch_.base_channels = config.base_channels;
  arch_.style_dim = config.style_dim;
  arch_.num_regions = num_regions;
  arch_.num_domains = num_domains;
  arch_.validate();
  generator_ = Generator(arch_, derive_seed(config.seed, 1));
  discriminator_ = Discriminator(arch_, derive_seed(config.seed, 2));
  rng_.seed(derive_seed(config.seed, 3));
  adam_g_ = Adam(generator_.params(), AdamConfig{.lr = config.lr_g});
  adam_d_ = Adam(discriminator_.params(), AdamConfig{.lr = config.lr_d});
}

Trainer Trainer::from_checkpoint(const Checkpoint& ckpt) {
  const auto& m = ckpt.manifest;
  if (!m.contains("train_config") || !m.contains("rng_state")) {
    throw ValidationError("checkpoint does not hold a training state");
  }
  const ArchConfig arch = arch_from_json(m.at("arch"));
  Trainer t(TrainConfig::from_json(m.at("train_config")), arch.num_regions, arch.num_domains);
  require_arch(ckpt, t.arch_);
  import_params(t.generator_.params(), "generator/", ckpt);
  import_params(t.discriminator_.params(), "discriminator/", ckpt);
  t.adam_g_.import_state("adam_g/", ckpt, m.at("adam_g_steps").get<long>());
  t.adam_d_.import_state("adam_d/", ckpt, m.at("adam_d_steps").get<long>());
  std::istringstream is(m.at("rng_state").get<std::string>());
  is >> t.rng_;
  if (!is) throw ValidationError("checkpoint rng_state is corrupt");
  t.iteration_ = m.at("iteration").get<long>();
  return t;
}

TrainBatch Trainer::sample_batch(const std::vector<Sample>& data) {
  std::vector<std::vector<const Sample*>> by_domain(arch_.num_domains);
  for (const Sample& s : data) {
    if (s.domain < 0 || s.domain >= arch_.num_domains) {
      throw ValidationError("sample " + s.stem + " has domain " + std::to_string(s.domain) + " but the model has " +
                            std::to_string(arch_.num_domains));
    }
    if (s.mask.num_regions() != arch_.num_regions) {
      throw ValidationError("sample " + s.stem + " mask has " + std::to_string(s.mask.num_regions()) +
                            " regions, model expects " + std::to_string(arch_.num_regions));
    }
    by_domain[s.domain].push_back(&s);
  }
  for (int d = 0; d < arch_.num_domains; ++d) {
    if (by_domain[d].empty()) throw ValidationError("domain " + std::to_string(d) + " has no training samples");
  }

  TrainBatch b;
  std::vector<const Sample*> content, style0;
  std::vector<std::vector<const Sample*>> extra(config_.k_styles);
  for (int n = 0; n < config_.batch_size; ++n) {
    std::uniform_int_distribution<std::size_t> any(0, data.size() - 1);
    const Sample* x = &data[any(rng_)];
    std::uniform_int_distribution<int> other(0, arch_.num_domains - 2);
    int c_y = other(rng_);
    if (c_y >= x->domain) ++c_y;
    for (int k = 0; k < config_.k_styles; ++k) extra[k].push_back(pick(by_domain[c_y], rng_));
    const std::vector<int> present = x->mask.present_regions();
    content.push_back(x);
    b.cm.push_back(x->mask);
    b.c_x.push_back(x->domain);
    b.c_y.push_back(c_y);
    b.sm.push_back(extra[0].back()->mask);
    b.rm_region.push_back(pick(present, rng_));
  }
  b.x = stack_images(content);
  for (const auto& ks : extra) b.styles.push_back(stack_images(ks));
  return b;
}

StepLosses Trainer::step(const TrainBatch& b) {
  const LossWeights& w = config_.weights;
  StepLosses out;
  out.iteration = iteration_ + 1;
  auto fail = [&](const char* which) {
    throw NumericalError(std::string("non-finite ") + which + " loss at iteration " +
                         std::to_string(out.iteration) + ": " + out.to_json().dump());
  };

  const ParamSet& gp = generator_.params();
  const ParamSet& dp = discriminator_.params();
  gp.set_requires_grad(true);
  gp.zero_grad();

  const Var& s = b.styles.at(0);
  const Var z = generator_.content_encode(b.x);
  const Var style_x = generator_.encode_style(b.x, b.cm);
  const Var style_t = generator_.encode_style(s, b.sm);
  const Var x_hat = generator_.decode(z, b.cm, style_t);

  dp.set_requires_grad(true);
  dp.zero_grad();
  const Var loss_d = gan_loss_d(as_logit_fn(discriminator_), b.x, b.c_x, x_hat, b.c_y);
  out.d = loss_d.value()[0];
  if (!std::isfinite(out.d)) fail("discriminator");
  backward(loss_d);
  adam_d_.step();

  dp.set_requires_grad(false);
  dp.zero_grad();
  LossTerms terms;
  const DiscriminatorOutput d_fake = discriminator_(x_hat, b.c_y);
  terms.gan = ops::mean_softplus(d_fake.logits, -1.0);
  if (w.lambda_r != 0.0) {
    terms.reconstruction = ops::mean_abs_diff(b.x, generator_.decode(z, b.cm, style_x));
  }
  if (w.lambda_fm != 0.0) {
    const Tensor target = style_feature_target(as_feature_fn(discriminator_), b.styles);
    terms.feature_matching = feature_matching_to_target(ops::spatial_mean(d_fake.features), target);
  }
  if (w.lambda_rm != 0.0) {
    const auto rows = single_row_sets(b.rm_region, arch_.num_regions);
    const Var r_hat = generator_.decode(z, b.cm, replace_style_rows(style_x, style_t, rows));
    terms.region_matching = region_matching_loss(b.x, x_hat, r_hat, b.cm, b.rm_region);
  }
  const Var total = total_generator_objective(terms, w);
  auto scalar = [](const Var& v) { return v.defined() ? v.value()[0] : 0.0; };
  out.gan = scalar(terms.gan);
  out.reconstruction = scalar(terms.reconstruction);
  out.feature_matching = scalar(terms.feature_matching);
  out.region_matching = scalar(terms.region_matching);
  out.total = scalar(total);
  if (!std::isfinite(out.total)) {
    dp.set_requires_grad(true);
    fail("generator");
  }
  backward(total);
  adam_g_.step();
  dp.set_requires_grad(true);
  ++iteration_;
  return out;
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint c;
  std::ostringstream rng_state;
  rng_state << rng_;
  c.manifest = {{"kind", "train_state"},
                {"arch", arch_to_json(arch_)},
                {"train_config", config_.to_json()},
                {"seed", config_.seed},
                {"iteration", iteration_},
                {"loss_weights", weights_to_json(config_.weights)},
                {"rng_state", rng_state.str()},
                {"adam_g_steps", adam_g_.steps()},
                {"adam_d_steps", adam_d_.steps()}};
  export_params(generator_.params(), "generator/", c.arrays);
  export_params(discriminator_.params(), "discriminator/", c.arrays);
  adam_g_.export_state("adam_g/", c.arrays);
  adam_d_.export_state("adam_d/", c.arrays);
  return c;
}

Checkpoint fit(const TrainConfig& config, const DatasetManifest& manifest, const FitOptions& options) {
  config.validate();
  manifest.validate();
  if (manifest.domains.size() < 2) throw ValidationError("training needs at least two domains");

  const std::vector<Sample> data = load_dataset(manifest, Split::kTrain);
  if (data.empty()) throw ValidationError("training split is empty");
  for (const Sample& s : data) {
    if (s.image.dim(2) != config.image_size || s.image.dim(3) != config.image_size) {
      throw ValidationError("sample " + s.stem + " is " + std::to_string(s.image.dim(3)) + "x" +
                            std::to_string(s.image.dim(2)) + " but image_size is " +
                            std::to_string(config.image_size));
    }
  }

  const nlohmann::json dataset_info = {{"domains", manifest.domains}, {"region_names", manifest.region_names}};
  std::optional<Trainer> trainer;
  if (options.resume) {
    const auto& m = options.resume->manifest;
    if (m.contains("dataset") && m.at("dataset") != dataset_info) {
      throw ValidationError("checkpoint was trained on domains/regions " + m.at("dataset").dump() +
                            " but the dataset has " + dataset_info.dump());
    }
    trainer.emplace(Trainer::from_checkpoint(*options.resume));
    if (trainer->arch().num_regions != manifest.num_regions ||
        trainer->arch().num_domains != static_cast<int>(manifest.domains.size())) {
      throw ValidationError("checkpoint architecture does not match the dataset's regions or domains");
    }
    if (trainer->config().image_size != config.image_size) {
      throw ValidationError("checkpoint image_size differs from the requested config");
    }
  } else {
    trainer.emplace(config, manifest.num_regions, static_cast<int>(manifest.domains.size()));
  }

  std::filesystem::create_directories(options.out_dir);
  std::ofstream log(options.out_dir / "train_log.jsonl", options.resume ? std::ios::app : std::ios::trunc);
  if (!log) throw ValidationError("cannot open " + (options.out_dir / "train_log.jsonl").string());

  auto snapshot = [&]() {
    Checkpoint c = trainer->checkpoint();
    c.manifest["dataset"] = dataset_info;
    return c;
  };

  const auto start = std::chrono::steady_clock::now();
  while (trainer->iteration() < config.max_iterations) {
    const TrainBatch batch = trainer->sample_batch(data);
    StepLosses losses;
    try {
      losses = trainer->step(batch);
    } catch (const NumericalError&) {
      Checkpoint c = snapshot();
      c.manifest["failure"] = "non-finite loss";
      save_checkpoint(options.out_dir / "failure_snapshot.ckpt", c);
      throw;
    }
    const long it = trainer->iteration();
    if (it % config.log_every == 0 || it == config.max_iterations) {
      nlohmann::json line = losses.to_json();
      line["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      log << line.dump() << '\n' << std::flush;
      if (options.progress) *options.progress << line.dump() << '\n';
    }
    if (config.checkpoint_every > 0 && it % config.checkpoint_every == 0 && it != config.max_iterations) {
      save_checkpoint(options.out_dir / ckpt_name(it), snapshot());
    }
  }
  Checkpoint final_ckpt = snapshot();
  save_checkpoint(options.out_dir / "final.ckpt", final_ckpt);
  return final_ckpt;
}

}  // namespace rift
