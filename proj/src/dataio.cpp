#include "rift/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>

#include "rift/error.hpp"
#include "rift/image_io.hpp"

namespace rift {
namespace {

using nlohmann::json;

std::vector<SampleRef> refs_from_json(const json& arr, const char* split) {
  std::vector<SampleRef> out;
  if (!arr.is_array()) throw ValidationError(std::string("manifest: '") + split + "' must be a list");
  for (const auto& e : arr) out.push_back({e.at("stem").get<std::string>(), e.at("domain").get<std::string>()});
  return out;
}

json refs_to_json(const std::vector<SampleRef>& refs) {
  json arr = json::array();
  for (const auto& r : refs) arr.push_back({{"stem", r.stem}, {"domain", r.domain}});
  return arr;
}

struct Rgb {
  double r, g, b;
};

// Mean colours per domain and region (background, face, hair).
constexpr Rgb kPalette[2][3] = {
    {{0.55, 0.15, -0.35}, {0.85, 0.35, 0.00}, {0.55, -0.45, -0.65}},   // warm
    {{-0.35, 0.00, 0.55}, {0.05, 0.30, 0.85}, {-0.65, -0.35, 0.60}},  // cool
};

}  // namespace

std::filesystem::path manifest_path_for(const std::filesystem::path& dataset) {
  if (std::filesystem::is_directory(dataset)) return dataset / kManifestFileName;
  return dataset;
}

DatasetManifest DatasetManifest::load(const std::filesystem::path& manifest_path) {
  std::ifstream is(manifest_path);
  if (!is) throw ValidationError("manifest: cannot open " + manifest_path.string());
  DatasetManifest m;
  try {
    const json j = json::parse(is);
    const int version = j.value("version", kVersion);
    if (version != kVersion) throw ValidationError("manifest: unsupported version " + std::to_string(version));
    m.root = manifest_path.has_parent_path() ? manifest_path.parent_path() : std::filesystem::path(".");
    m.num_regions = j.at("num_regions").get<int>();
    m.region_names = j.at("region_names").get<std::vector<std::string>>();
    m.label_remap.mapping = j.at("label_remap").get<std::vector<int>>();
    m.label_remap.num_target_regions = m.num_regions;
    m.domains = j.at("domains").get<std::vector<std::string>>();
    m.image_dir = j.value("image_dir", std::string("images"));
    m.mask_dir = j.value("mask_dir", std::string("masks"));
    m.train = refs_from_json(j.at("train"), "train");
    m.test = refs_from_json(j.at("test"), "test");
    m.merge_priority = j.value("merge_priority", std::vector<std::string>{});
  } catch (const json::exception& e) {
    throw ValidationError("manifest " + manifest_path.string() + ": " + e.what());
  }
  m.validate();
  return m;
}

json DatasetManifest::to_json() const {
  return {{"version", kVersion},
          {"num_regions", num_regions},
          {"region_names", region_names},
          {"label_remap", label_remap.mapping},
          {"domains", domains},
          {"image_dir", image_dir},
          {"mask_dir", mask_dir},
          {"merge_priority", merge_priority},
          {"train", refs_to_json(train)},
          {"test", refs_to_json(test)}};
}

void DatasetManifest::save(const std::filesystem::path& manifest_path) const {
  if (manifest_path.has_parent_path()) std::filesystem::create_directories(manifest_path.parent_path());
  std::ofstream os(manifest_path);
  if (!os) throw std::runtime_error("manifest: cannot write " + manifest_path.string());
  os << to_json().dump(2) << '\n';
}

void DatasetManifest::validate() const {
  if (num_regions <= 0) throw ValidationError("manifest: num_regions must be positive");
  if (static_cast<int>(region_names.size()) != num_regions) {
    throw ValidationError("manifest: " + std::to_string(region_names.size()) + " region names for " +
                          std::to_string(num_regions) + " regions");
  }
  if (label_remap.num_target_regions != num_regions) throw ValidationError("manifest: remap target count mismatch");
  label_remap.validate();
  if (domains.empty()) throw ValidationError("manifest: empty domain list");
  if (std::set<std::string>(domains.begin(), domains.end()).size() != domains.size()) {
    throw ValidationError("manifest: duplicate domain names");
  }
  for (const auto* split : {&train, &test}) {
    for (const SampleRef& r : *split) {
      domain_index(r.domain);
      if (!std::filesystem::exists(image_path(r.stem))) {
        throw ValidationError("manifest: sample '" + r.stem + "' has no image file " + image_path(r.stem).string());
      }
      if (!std::filesystem::exists(mask_path(r.stem))) {
        throw ValidationError("manifest: sample '" + r.stem + "' has no mask file " + mask_path(r.stem).string());
      }
    }
  }
}

int DatasetManifest::domain_index(const std::string& name) const {
  const auto it = std::find(domains.begin(), domains.end(), name);
  if (it == domains.end()) throw ValidationError("manifest: unknown domain '" + name + "'");
  return static_cast<int>(it - domains.begin());
}

int DatasetManifest::region_index(const std::string& name) const {
  const auto it = std::find(region_names.begin(), region_names.end(), name);
  return it == region_names.end() ? -1 : static_cast<int>(it - region_names.begin());
}

std::filesystem::path DatasetManifest::image_path(const std::string& stem) const {
  return root / image_dir / (stem + ".png");
}

std::filesystem::path DatasetManifest::mask_path(const std::string& stem) const {
  return root / mask_dir / (stem + ".png");
}

Tensor load_image_file(const std::filesystem::path& path) {
  const Image8 img = read_png(path);
  if (img.channels != 3) throw ValidationError("image " + path.string() + " is not RGB");
  return image_to_tensor(img);
}

RegionMask load_mask_file(const std::filesystem::path& path, const RegionRemap& remap) {
  try {
    const RegionMask raw = mask_from_image(read_png(path), static_cast<int>(remap.mapping.size()));
    return remap_regions(raw, remap);
  } catch (const ValidationError& e) {
    throw ValidationError("mask " + path.string() + ": " + e.what());
  }
}

std::vector<Sample> load_dataset(const DatasetManifest& manifest, Split split, std::uint64_t seed) {
  const auto& refs = manifest.split(split);
  std::vector<Sample> out;
  out.reserve(refs.size());
  for (const SampleRef& r : refs) {
    Sample s;
    s.stem = r.stem;
    try {
      s.domain = manifest.domain_index(r.domain);
      s.image = load_image_file(manifest.image_path(r.stem));
      s.mask = load_mask_file(manifest.mask_path(r.stem), manifest.label_remap);
    } catch (const ValidationError& e) {
      throw ValidationError("sample '" + r.stem + "': " + e.what());
    }
    if (s.mask.height() != s.image.dim(2) || s.mask.width() != s.image.dim(3)) {
      throw ValidationError("sample '" + r.stem + "': mask and image sizes differ");
    }
    out.push_back(std::move(s));
  }
  if (seed != 0) {
    std::mt19937_64 rng(seed);
    std::shuffle(out.begin(), out.end(), rng);
  }
  return out;
}

RegionMask merge_attribute_mask_files(const std::filesystem::path& dir, const std::string& stem,
                                      const std::vector<std::string>& priority,
                                      const std::vector<std::string>& label_names) {
  std::vector<AttributeLayer> layers;
  int height = -1, width = -1;
  for (const std::string& name : priority) {
    const auto it = std::find(label_names.begin(), label_names.end(), name);
    if (it == label_names.end()) throw ValidationError("merge: unknown attribute '" + name + "'");
    const auto path = dir / (stem + "_" + name + ".png");
    if (!std::filesystem::exists(path)) continue;
    const Image8 img = read_png(path);
    if (img.channels != 1) throw ValidationError("merge: attribute mask " + path.string() + " is not single-channel");
    if (height < 0) {
      height = img.height;
      width = img.width;
    } else if (img.height != height || img.width != width) {
      throw ValidationError("merge: attribute mask " + path.string() + " has a different size");
    }
    layers.push_back({static_cast<int>(it - label_names.begin()), img.pixels});
  }
  if (layers.empty()) throw ValidationError("merge: no attribute masks found for '" + stem + "'");
  return merge_attribute_masks(height, width, static_cast<int>(label_names.size()), 0, layers);
}

void SyntheticSpec::validate() const {
  if (image_size <= 0 || image_size % 8 != 0) throw ValidationError("synthetic: image_size must be a multiple of 8");
  if (per_domain < 2) throw ValidationError("synthetic: per_domain must be at least 2");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ValidationError("synthetic: test_fraction must be in (0,1)");
}

nlohmann::json SyntheticSpec::to_json() const {
  return {{"image_size", image_size}, {"per_domain", per_domain}, {"seed", seed}, {"test_fraction", test_fraction}};
}

SyntheticSample synthesize_sample(const SyntheticSpec& spec, int domain, int index) {
  if (domain < 0 || domain > 1) throw ValidationError("synthetic: domain must be 0 (warm) or 1 (cool)");
  std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                    static_cast<std::uint32_t>(domain), static_cast<std::uint32_t>(index)};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const bool warm = domain == 0;

  const double cx = 0.5 + 0.06 * u(rng), cy = 0.58 + 0.05 * u(rng);
  const double rx = 0.25 + 0.03 * u(rng), ry = 0.30 + 0.03 * u(rng);
  const double thickness = warm ? 0.085 + 0.02 * u(rng) : 0.16 + 0.02 * u(rng);
  Rgb colour[3];
  for (int r = 0; r < 3; ++r) {
    colour[r] = {kPalette[domain][r].r + 0.08 * u(rng), kPalette[domain][r].g + 0.08 * u(rng),
                 kPalette[domain][r].b + 0.08 * u(rng)};
  }
  const double phase = std::numbers::pi * u(rng);
  const double tilt = 0.5 * u(rng);
  std::normal_distribution<double> noise(0.0, warm ? 0.05 : 0.015);

  const int S = spec.image_size;
  std::vector<int> labels(static_cast<std::size_t>(S) * S);
  Tensor img({1, 3, S, S});
  for (int y = 0; y < S; ++y) {
    for (int x = 0; x < S; ++x) {
      const double px = (x + 0.5) / S, py = (y + 0.5) / S;
      const double fx = (px - cx) / rx, fy = (py - cy) / ry;
      const bool face = fx * fx + fy * fy <= 1.0;
      const double hx = (px - cx) / (rx + thickness), hy = (py - cy + 0.5 * thickness) / (ry + thickness);
      const bool hair = !face && hx * hx + hy * hy <= 1.0 && py < cy + 0.05;
      const int region = face ? 1 : (hair ? 2 : 0);
      labels[static_cast<std::size_t>(y) * S + x] = region;

      double texture;
      if (warm) {
        // Fine stripes plus noise.
        texture = 0.12 * std::sin(2.0 * std::numbers::pi * (S / 4.0) * (px + tilt * py) + phase);
      } else {
        texture = 0.10 * (py - 0.5) + 0.05 * (px - 0.5);
      }
      const Rgb& c = colour[region];
      const double base[3] = {c.r, c.g, c.b};
      for (int ch = 0; ch < 3; ++ch) {
        const double v = std::clamp(base[ch] + texture + noise(rng), -1.0, 1.0);
        // Quantize so the in-memory sample equals what a PNG round trip gives.
        img.at(0, ch, y, x) = std::lround((v + 1.0) * 127.5) / 127.5 - 1.0;
      }
    }
  }
  return {std::move(img), RegionMask(S, S, 3, std::move(labels))};
}

DatasetManifest generate_synthetic(const SyntheticSpec& spec, const std::filesystem::path& out_dir) {
  spec.validate();
  DatasetManifest m;
  m.root = out_dir;
  m.num_regions = 3;
  m.region_names = {"background", "face", "hair"};
  m.label_remap = RegionRemap::identity(3);
  m.domains = {"warm", "cool"};
  const int test_count = std::max(1, static_cast<int>(std::lround(spec.per_domain * spec.test_fraction)));
  for (int d = 0; d < 2; ++d) {
    for (int i = 0; i < spec.per_domain; ++i) {
      char stem[64];
      std::snprintf(stem, sizeof(stem), "%s_%04d", m.domains[d].c_str(), i);
      const SyntheticSample s = synthesize_sample(spec, d, i);
      write_png(m.image_path(stem), tensor_to_image(s.image));
      write_png(m.mask_path(stem), mask_to_image(s.mask));
      (i < spec.per_domain - test_count ? m.train : m.test).push_back({stem, m.domains[d]});
    }
  }
  m.save(out_dir / kManifestFileName);
  std::ofstream(out_dir / "synthetic.json") << spec.to_json().dump(2) << '\n';
  return m;
}

}  // namespace rift
