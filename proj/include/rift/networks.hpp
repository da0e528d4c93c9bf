#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "rift/layers.hpp"
#include "rift/mask.hpp"
#include "rift/rin.hpp"

namespace rift {

using MaskBatch = std::vector<RegionMask>;

struct ArchConfig {
  int image_size = 32;
  int image_channels = 3;
  int base_channels = 64;  // widest feature map (content code and decoder entry)
  int style_dim = 64;      // D, width of one style row
  int num_regions = 3;
  int num_domains = 2;

  void validate() const;
  bool operator==(const ArchConfig&) const = default;
};

nlohmann::json arch_to_json(const ArchConfig& arch);
ArchConfig arch_from_json(const nlohmann::json& j);

// Nearest-neighbour resample of every mask, then one-hot.
std::vector<OneHotMask> onehot_at(const MaskBatch& masks, int height, int width);

// Row i = masked mean of feat over region i; an empty region yields a zero
// row. feat [N,C,H,W], masks at H x W -> style [N,R,C].
Var region_average_pool(const Var& feat, std::span<const OneHotMask> masks);

// out[n] = base[n] with rows where replace[n][r] is true taken from donor[n].
Var replace_style_rows(const Var& base, const Var& donor, const std::vector<std::vector<bool>>& replace);

class ContentEncoder {
 public:
  ContentEncoder() = default;
  ContentEncoder(const ArchConfig& arch, std::mt19937_64& rng);
  // x [N,3,S,S] -> [N,base,S/8,S/8]
  Var operator()(const Var& x) const;
  void register_params(ParamSet& params, const std::string& prefix) const;

 private:
  std::vector<Conv2d> down_;
};

class StyleEncoder {
 public:
  StyleEncoder() = default;
  StyleEncoder(const ArchConfig& arch, std::mt19937_64& rng);
  // Bottleneck features back at input resolution [N,D,S,S].
  Var features(const Var& s) const;
  // [N,R,D]
  Var operator()(const Var& s, const MaskBatch& sm) const;
  void register_params(ParamSet& params, const std::string& prefix) const;

 private:
  int num_regions_ = 0;
  std::vector<Conv2d> down_;
  std::vector<ConvTranspose2d> up_;
};

class Decoder {
 public:
  Decoder() = default;
  Decoder(const ArchConfig& arch, std::mt19937_64& rng);
  // Content code [N,base,S/8,S/8] + content masks at S x S + style [N,R,D]
  // -> image [N,3,S,S] in [-1,1].
  Var operator()(const Var& z, const MaskBatch& cm, const Var& style) const;
  void register_params(ParamSet& params, const std::string& prefix) const;

  std::span<const RinResBlock> blocks() const { return blocks_; }

 private:
  int num_regions_ = 0;
  int style_dim_ = 0;
  std::vector<RinResBlock> blocks_;
  std::vector<bool> upsample_before_;
  Conv2d to_rgb_;
};

class Generator {
 public:
  Generator() = default;
  Generator(const ArchConfig& arch, std::uint64_t seed);

  const ArchConfig& arch() const { return arch_; }
  Var content_encode(const Var& x) const;
  Var encode_style(const Var& s, const MaskBatch& sm) const;
  Var decode(const Var& z, const MaskBatch& cm, const Var& style) const;
  Var generate(const Var& x, const MaskBatch& cm, const Var& s, const MaskBatch& sm) const;

  const ParamSet& params() const { return params_; }

 private:
  ArchConfig arch_;
  ContentEncoder content_;
  StyleEncoder style_;
  Decoder decoder_;
  ParamSet params_;
};

struct DiscriminatorOutput {
  Var logits;    // [N,1,S/8,S/8], head of the requested class per sample
  Var features;  // [N,base,S/8,S/8], shared trunk activations (D_f)
};

// Patch discriminator: shared trunk, one 1x1 logit head per domain.
class Discriminator {
 public:
  Discriminator() = default;
  Discriminator(const ArchConfig& arch, std::uint64_t seed);

  const ArchConfig& arch() const { return arch_; }
  DiscriminatorOutput operator()(const Var& img, std::span<const int> domains) const;
  Var trunk(const Var& img) const;
  // Spatially pooled trunk activations [N,base]; the feature extractor used
  // by the feature matching loss.
  Var pooled_features(const Var& img) const;

  const ParamSet& params() const { return params_; }

 private:
  ArchConfig arch_;
  std::vector<Conv2d> trunk_;
  Conv2d heads_;
  ParamSet params_;
};

// Binary container: magic, format version, JSON manifest, named float64 arrays.
struct Checkpoint {
  static constexpr std::uint32_t kFormatVersion = 1;
  nlohmann::json manifest;
  std::vector<NamedTensor> arrays;

  const Tensor& array(const std::string& name) const;
  bool has_array(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Appends every parameter of `params` under `prefix`.
void export_params(const ParamSet& params, const std::string& prefix, std::vector<NamedTensor>& out);
// Copies arrays into the parameters; throws on missing names or shape changes.
void import_params(const ParamSet& params, const std::string& prefix, const Checkpoint& ckpt);

// Builds a generator from a checkpoint whose manifest carries "arch".
Generator generator_from_checkpoint(const Checkpoint& ckpt);
// Throws ValidationError unless the manifest's architecture equals `arch`.
void require_arch(const Checkpoint& ckpt, const ArchConfig& arch);

}  // namespace rift
