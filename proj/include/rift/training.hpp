#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "rift/dataio.hpp"
#include "rift/losses.hpp"
#include "rift/networks.hpp"
#include "rift/optim.hpp"

namespace rift {

struct TrainConfig {
  int batch_size = 4;
  int image_size = 32;
  long max_iterations = 2000;
  double lr_g = 1e-4;
  double lr_d = 1e-4;
  std::uint64_t seed = 7;
  LossWeights weights;
  int k_styles = 1;  // style images averaged by the feature matching target
  long checkpoint_every = 500;  // 0 writes only the final checkpoint
  long log_every = 1;
  int base_channels = 64;
  int style_dim = 64;
  std::string dataset;  // manifest path or dataset directory

  // batch 4, 32x32, 2000 iterations
  static TrainConfig desk();
  // batch 4, 128x128, 100000 iterations
  static TrainConfig paper();

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct TrainBatch {
  Var x;  // content images [N,3,S,S]
  MaskBatch cm;
  std::vector<int> c_x;
  std::vector<Var> styles;  // K tensors [N,3,S,S]; styles[0] drives the generator
  MaskBatch sm;             // masks of styles[0]
  std::vector<int> c_y;
  std::vector<int> rm_region;  // region translated for the region matching term
};

struct StepLosses {
  long iteration = 0;
  double d = 0.0;
  double gan = 0.0;
  double reconstruction = 0.0;
  double feature_matching = 0.0;
  double region_matching = 0.0;
  double total = 0.0;

  nlohmann::json to_json() const;
};

// Training state: both networks, their optimizers, the data-order RNG and
// the iteration counter. Fully determined by (config, data, seed).
class Trainer {
 public:
  Trainer(const TrainConfig& config, int num_regions, int num_domains);
  static Trainer from_checkpoint(const Checkpoint& ckpt);

  const TrainConfig& config() const { return config_; }
  const ArchConfig& arch() const { return arch_; }
  long iteration() const { return iteration_; }
  const Generator& generator() const { return generator_; }
  const Discriminator& discriminator() const { return discriminator_; }

  // Seeded draw: content uniformly from the split, target domain uniformly
  // among the other domains, styles uniformly within the target domain, and
  // the region-matching region uniformly among regions present in cm.
  TrainBatch sample_batch(const std::vector<Sample>& data);

  // One discriminator update on the D side of the GAN loss, then one
  // generator update on the full weighted objective.
  StepLosses step(const TrainBatch& batch);

  Checkpoint checkpoint() const;

 private:
  TrainConfig config_;
  ArchConfig arch_;
  Generator generator_;
  Discriminator discriminator_;
  Adam adam_g_;
  Adam adam_d_;
  std::mt19937_64 rng_;
  long iteration_ = 0;
};

struct FitOptions {
  std::filesystem::path out_dir;             // checkpoints and train_log.jsonl
  std::optional<Checkpoint> resume;          // continue from this state
  std::ostream* progress = nullptr;          // optional human-readable progress
};

// Runs until config.max_iterations. Returns the final checkpoint, which is
// also written to out_dir/final.ckpt.
Checkpoint fit(const TrainConfig& config, const DatasetManifest& manifest, const FitOptions& options);

}  // namespace rift
