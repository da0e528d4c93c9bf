#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "rift/mask.hpp"
#include "rift/tensor.hpp"

namespace rift {

struct SampleRef {
  std::string stem;
  std::string domain;
};

enum class Split { kTrain, kTest };

// Dataset description. All paths are relative to `root`, the directory that
// holds the manifest file.
struct DatasetManifest {
  static constexpr int kVersion = 1;

  std::filesystem::path root;
  int num_regions = 0;
  std::vector<std::string> region_names;
  RegionRemap label_remap;  // raw mask value -> region id
  std::vector<std::string> domains;
  std::string image_dir = "images";
  std::string mask_dir = "masks";
  std::vector<SampleRef> train;
  std::vector<SampleRef> test;
  // Raw attribute names in merge order for per-attribute mask sources
  // (later names win). Empty when masks are already single label maps.
  std::vector<std::string> merge_priority;

  static DatasetManifest load(const std::filesystem::path& manifest_path);
  void save(const std::filesystem::path& manifest_path) const;
  nlohmann::json to_json() const;

  // Checks the remap table and domain names, and that every stem has both files.
  void validate() const;

  int domain_index(const std::string& name) const;
  // -1 when absent.
  int region_index(const std::string& name) const;
  const std::vector<SampleRef>& split(Split s) const { return s == Split::kTrain ? train : test; }
  std::filesystem::path image_path(const std::string& stem) const;
  std::filesystem::path mask_path(const std::string& stem) const;
};

inline constexpr const char* kManifestFileName = "manifest.json";

// Resolves a dataset argument that may name the manifest file or its directory.
std::filesystem::path manifest_path_for(const std::filesystem::path& dataset);

struct Sample {
  std::string stem;
  Tensor image;  // [1,3,H,W] in [-1,1]
  RegionMask mask;
  int domain = 0;
};

// Loads one split, remaps and validates every mask. Samples come back in a
// permutation of the manifest order determined by `seed`; seed 0 keeps the
// manifest order.
std::vector<Sample> load_dataset(const DatasetManifest& manifest, Split split, std::uint64_t seed = 0);

// Single-sample loaders used by the CLI.
Tensor load_image_file(const std::filesystem::path& path);
RegionMask load_mask_file(const std::filesystem::path& path, const RegionRemap& remap);

// Builds a raw label map from files `<dir>/<stem>_<name>.png` in the order
// given by `priority` (later layers overwrite earlier ones). Missing files
// mean the attribute is absent. `label_names[k]` is the raw id k.
RegionMask merge_attribute_mask_files(const std::filesystem::path& dir, const std::string& stem,
                                      const std::vector<std::string>& priority,
                                      const std::vector<std::string>& label_names);

// Procedural two-domain dataset: background, an elliptical "face" and a
// crescent of "hair" on top. "warm" samples are red-biased with
// high-frequency texture and a thin crescent; "cool" samples are
// blue-biased, smooth, and have a thick crescent.
struct SyntheticSpec {
  int image_size = 32;
  int per_domain = 100;
  std::uint64_t seed = 7;
  double test_fraction = 0.2;

  void validate() const;
  nlohmann::json to_json() const;
};

struct SyntheticSample {
  Tensor image;  // [1,3,S,S], already quantized to 8-bit levels
  RegionMask mask;
};

// Pure function of (spec, domain, index).
SyntheticSample synthesize_sample(const SyntheticSpec& spec, int domain, int index);

// Writes images/, masks/ and manifest.json under `out_dir`; returns the manifest.
DatasetManifest generate_synthetic(const SyntheticSpec& spec, const std::filesystem::path& out_dir);

}  // namespace rift
