#include "rift/networks.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "rift/error.hpp"
#include "rift/ops.hpp"

namespace rift {
namespace {

constexpr char kMagic[8] = {'R', 'I', 'F', 'T', 'C', 'K', 'P', 'T'};
constexpr double kInstanceNormEps = 1e-5;
constexpr double kLeakySlope = 0.2;

void check_image(const Var& x, const ArchConfig& arch, const char* what) {
  auto [N, C, H, W] = nchw(x.value(), what);
  if (N < 1 || C != arch.image_channels || H != arch.image_size || W != arch.image_size) {
    throw ValidationError(std::string(what) + ": expected [N," + std::to_string(arch.image_channels) + "," +
                          std::to_string(arch.image_size) + "," + std::to_string(arch.image_size) + "], got " +
                          shape_string(x.shape()));
  }
}

void check_masks(const MaskBatch& masks, int N, const ArchConfig& arch, const char* what) {
  if (static_cast<int>(masks.size()) != N) {
    throw ValidationError(std::string(what) + ": " + std::to_string(masks.size()) + " masks for " +
                          std::to_string(N) + " images");
  }
  for (const RegionMask& m : masks) {
    if (m.height() != arch.image_size || m.width() != arch.image_size) {
      throw ValidationError(std::string(what) + ": mask size " + std::to_string(m.height()) + "x" +
                            std::to_string(m.width()) + " does not match image size " +
                            std::to_string(arch.image_size));
    }
    if (m.num_regions() != arch.num_regions) {
      throw ValidationError(std::string(what) + ": mask declares " + std::to_string(m.num_regions()) +
                            " regions, model expects " + std::to_string(arch.num_regions));
    }
  }
}

template <class T>
void write_pod(std::ostream& os, T v) {
  static_assert(std::endian::native == std::endian::little, "checkpoint format is little-endian");
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw ValidationError("checkpoint: truncated file");
  return v;
}

}  // namespace

void ArchConfig::validate() const {
  if (image_size <= 0 || image_size % 8 != 0) {
    throw ValidationError("arch: image_size must be a positive multiple of 8, got " + std::to_string(image_size));
  }
  // At 8x8 the content code is 1x1 and instance norm maps it to zero.
  if (image_size < 16) throw ValidationError("arch: image_size must be at least 16, got " + std::to_string(image_size));
  if (image_channels <= 0) throw ValidationError("arch: image_channels must be positive");
  if (base_channels < 4 || base_channels % 4 != 0) {
    throw ValidationError("arch: base_channels must be a multiple of 4 and at least 4");
  }
  if (style_dim <= 0) throw ValidationError("arch: style_dim must be positive");
  if (num_regions <= 0) throw ValidationError("arch: num_regions must be positive");
  if (num_domains <= 0) throw ValidationError("arch: num_domains must be positive");
}

nlohmann::json arch_to_json(const ArchConfig& a) {
  return {{"image_size", a.image_size},       {"image_channels", a.image_channels},
          {"base_channels", a.base_channels}, {"style_dim", a.style_dim},
          {"num_regions", a.num_regions},     {"num_domains", a.num_domains}};
}

ArchConfig arch_from_json(const nlohmann::json& j) {
  try {
    ArchConfig a;
    a.image_size = j.at("image_size").get<int>();
    a.image_channels = j.at("image_channels").get<int>();
    a.base_channels = j.at("base_channels").get<int>();
    a.style_dim = j.at("style_dim").get<int>();
    a.num_regions = j.at("num_regions").get<int>();
    a.num_domains = j.at("num_domains").get<int>();
    a.validate();
    return a;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("arch: malformed config: ") + e.what());
  }
}

std::vector<OneHotMask> onehot_at(const MaskBatch& masks, int height, int width) {
  std::vector<OneHotMask> out;
  out.reserve(masks.size());
  for (const RegionMask& m : masks) out.push_back(to_onehot(downsample_mask(m, height, width)));
  return out;
}

Var region_average_pool(const Var& feat, std::span<const OneHotMask> masks) {
  auto [N, C, H, W] = nchw(feat.value(), "region_average_pool");
  if (static_cast<int>(masks.size()) != N) throw ValidationError("region_average_pool: one mask per sample required");
  const int R = masks.front().num_regions();
  const int hw = H * W;
  std::vector<std::vector<int>> label(N);
  std::vector<std::vector<double>> inv_count(N);
  for (int n = 0; n < N; ++n) {
    if (masks[n].height() != H || masks[n].width() != W || masks[n].num_regions() != R) {
      throw ValidationError("region_average_pool: mask " + std::to_string(masks[n].height()) + "x" +
                            std::to_string(masks[n].width()) + " not aligned with features " +
                            shape_string(feat.shape()));
    }
    const RegionMask m = argmax_channels(masks[n]);
    label[n].assign(m.labels().begin(), m.labels().end());
    const auto counts = m.region_counts();
    inv_count[n].resize(R);
    for (int r = 0; r < R; ++r) inv_count[n][r] = 1.0 / std::max(counts[r], 1);
  }
  Tensor out({N, R, C});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const double* f = feat.value().data() + (static_cast<std::size_t>(n) * C + c) * hw;
      std::vector<double> sums(R, 0.0);
      for (int p = 0; p < hw; ++p) sums[label[n][p]] += f[p];
      for (int r = 0; r < R; ++r) out[(static_cast<std::size_t>(n) * R + r) * C + c] = sums[r] * inv_count[n][r];
    }
  NodePtr nf = feat.node();
  return make_result(std::move(out), {feat}, [=](const Tensor& g) {
    Tensor& gf = nf->grad_buffer();
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c) {
        double* d = gf.data() + (static_cast<std::size_t>(n) * C + c) * hw;
        for (int p = 0; p < hw; ++p) {
          const int r = label[n][p];
          d[p] += g[(static_cast<std::size_t>(n) * R + r) * C + c] * inv_count[n][r];
        }
      }
  });
}

Var replace_style_rows(const Var& base, const Var& donor, const std::vector<std::vector<bool>>& replace) {
  if (base.value().rank() != 3 || base.shape() != donor.shape()) {
    throw ValidationError("replace_style_rows: style tensors must share an [N,R,D] shape, got " +
                          shape_string(base.shape()) + " and " + shape_string(donor.shape()));
  }
  const int N = base.dim(0), R = base.dim(1), D = base.dim(2);
  if (static_cast<int>(replace.size()) != N) throw ValidationError("replace_style_rows: one row set per sample");
  for (const auto& rows : replace) {
    if (static_cast<int>(rows.size()) != R) throw ValidationError("replace_style_rows: row set size mismatch");
  }
  Tensor out = base.value();
  for (int n = 0; n < N; ++n)
    for (int r = 0; r < R; ++r) {
      if (!replace[n][r]) continue;
      const std::size_t off = (static_cast<std::size_t>(n) * R + r) * D;
      std::copy_n(donor.value().data() + off, D, out.data() + off);
    }
  NodePtr nb = base.node(), nd = donor.node();
  return make_result(std::move(out), {base, donor}, [=](const Tensor& g) {
    for (int n = 0; n < N; ++n)
      for (int r = 0; r < R; ++r) {
        const std::size_t off = (static_cast<std::size_t>(n) * R + r) * D;
        const NodePtr& target = replace[n][r] ? nd : nb;
        if (!target->requires_grad) continue;
        Tensor& gt = target->grad_buffer();
        for (int d = 0; d < D; ++d) gt[off + d] += g[off + d];
      }
  });
}

ContentEncoder::ContentEncoder(const ArchConfig& arch, std::mt19937_64& rng) {
  const int b = arch.base_channels;
  const int widths[4] = {arch.image_channels, b / 4, b / 2, b};
  for (int i = 0; i < 3; ++i) down_.emplace_back(widths[i], widths[i + 1], 4, 2, 1, rng, /*with_bias=*/false);
}

Var ContentEncoder::operator()(const Var& x) const {
  Var h = x;
  for (const Conv2d& conv : down_) h = ops::relu(ops::instance_norm(conv(h), kInstanceNormEps));
  return h;
}

void ContentEncoder::register_params(ParamSet& params, const std::string& prefix) const {
  for (std::size_t i = 0; i < down_.size(); ++i) down_[i].register_params(params, prefix + ".down" + std::to_string(i));
}

StyleEncoder::StyleEncoder(const ArchConfig& arch, std::mt19937_64& rng) : num_regions_(arch.num_regions) {
  const int b = arch.base_channels;
  const int down_widths[4] = {arch.image_channels, b / 4, b / 2, b};
  for (int i = 0; i < 3; ++i) down_.emplace_back(down_widths[i], down_widths[i + 1], 4, 2, 1, rng);
  const int up_widths[4] = {b, b / 2, b / 4, arch.style_dim};
  for (int i = 0; i < 3; ++i) up_.emplace_back(up_widths[i], up_widths[i + 1], 4, 2, 1, rng);
}

Var StyleEncoder::features(const Var& s) const {
  Var h = s;
  for (const Conv2d& conv : down_) h = ops::relu(conv(h));
  for (std::size_t i = 0; i < up_.size(); ++i) {
    h = up_[i](h);
    if (i + 1 < up_.size()) h = ops::relu(h);
  }
  return h;
}

Var StyleEncoder::operator()(const Var& s, const MaskBatch& sm) const {
  const Var feat = features(s);
  return region_average_pool(feat, onehot_at(sm, feat.dim(2), feat.dim(3)));
}

void StyleEncoder::register_params(ParamSet& params, const std::string& prefix) const {
  for (std::size_t i = 0; i < down_.size(); ++i) down_[i].register_params(params, prefix + ".down" + std::to_string(i));
  for (std::size_t i = 0; i < up_.size(); ++i) up_[i].register_params(params, prefix + ".up" + std::to_string(i));
}

Decoder::Decoder(const ArchConfig& arch, std::mt19937_64& rng)
    : num_regions_(arch.num_regions), style_dim_(arch.style_dim) {
  const int b = arch.base_channels;
  // Two blocks at the content-code resolution, then one after each upsampling.
  const int widths[6] = {b, b, b, b / 2, b / 4, b / 4};
  const bool upsample[5] = {false, false, true, true, true};
  for (int i = 0; i < 5; ++i) {
    blocks_.emplace_back(widths[i], widths[i + 1], arch.style_dim, rng);
    upsample_before_.push_back(upsample[i]);
  }
  to_rgb_ = Conv2d(b / 4, arch.image_channels, 1, 1, 0, rng);
}

Var Decoder::operator()(const Var& z, const MaskBatch& cm, const Var& style) const {
  auto [N, C, H, W] = nchw(z.value(), "decode content code");
  if (style.value().rank() != 3 || style.dim(0) != N || style.dim(1) != num_regions_ || style.dim(2) != style_dim_) {
    throw ValidationError("decode: style tensor " + shape_string(style.shape()) + " does not match [" +
                          std::to_string(N) + "," + std::to_string(num_regions_) + "," +
                          std::to_string(style_dim_) + "]");
  }
  if (static_cast<int>(cm.size()) != N) throw ValidationError("decode: one content mask per sample required");
  for (const RegionMask& m : cm) {
    if (m.num_regions() != num_regions_) {
      throw ValidationError("decode: content mask has " + std::to_string(m.num_regions()) +
                            " regions, style tensor has " + std::to_string(num_regions_));
    }
    if (m.height() != 8 * H || m.width() != 8 * W) {
      throw ValidationError("decode: content mask " + std::to_string(m.height()) + "x" + std::to_string(m.width()) +
                            " is not 8x the content code " + std::to_string(H) + "x" + std::to_string(W));
    }
  }
  Var h = z;
  std::vector<OneHotMask> masks;
  int mask_h = -1;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    if (upsample_before_[i]) h = ops::upsample_nearest2x(h);
    // The content mask is resampled to the feature size at every block entry.
    if (h.dim(2) != mask_h) {
      masks = onehot_at(cm, h.dim(2), h.dim(3));
      mask_h = h.dim(2);
    }
    h = blocks_[i](h, masks, style);
  }
  return ops::tanh(to_rgb_(h));
}

void Decoder::register_params(ParamSet& params, const std::string& prefix) const {
  for (std::size_t i = 0; i < blocks_.size(); ++i) blocks_[i].register_params(params, prefix + ".block" + std::to_string(i));
  to_rgb_.register_params(params, prefix + ".to_rgb");
}

Generator::Generator(const ArchConfig& arch, std::uint64_t seed) : arch_(arch) {
  arch.validate();
  std::mt19937_64 rng(seed);
  content_ = ContentEncoder(arch, rng);
  style_ = StyleEncoder(arch, rng);
  decoder_ = Decoder(arch, rng);
  content_.register_params(params_, "content");
  style_.register_params(params_, "style");
  decoder_.register_params(params_, "decoder");
}

Var Generator::content_encode(const Var& x) const {
  check_image(x, arch_, "content_encode");
  return content_(x);
}

Var Generator::encode_style(const Var& s, const MaskBatch& sm) const {
  check_image(s, arch_, "encode_style");
  check_masks(sm, s.dim(0), arch_, "encode_style");
  return style_(s, sm);
}

Var Generator::decode(const Var& z, const MaskBatch& cm, const Var& style) const { return decoder_(z, cm, style); }

Var Generator::generate(const Var& x, const MaskBatch& cm, const Var& s, const MaskBatch& sm) const {
  check_masks(cm, x.dim(0), arch_, "generate");
  return decode(content_encode(x), cm, encode_style(s, sm));
}

Discriminator::Discriminator(const ArchConfig& arch, std::uint64_t seed) : arch_(arch) {
  arch.validate();
  std::mt19937_64 rng(seed);
  const int b = arch.base_channels;
  const int widths[5] = {arch.image_channels, b / 4, b / 2, b, b};
  for (int i = 0; i < 4; ++i) trunk_.emplace_back(widths[i], widths[i + 1], 3, 1, 1, rng);
  heads_ = Conv2d(b, arch.num_domains, 1, 1, 0, rng);
  for (std::size_t i = 0; i < trunk_.size(); ++i) trunk_[i].register_params(params_, "trunk" + std::to_string(i));
  heads_.register_params(params_, "heads");
}

Var Discriminator::trunk(const Var& img) const {
  check_image(img, arch_, "discriminate");
  Var h = img;
  for (std::size_t i = 0; i < trunk_.size(); ++i) {
    h = ops::leaky_relu(trunk_[i](h), kLeakySlope);
    if (i + 1 < trunk_.size()) h = ops::avg_pool2x(h);
  }
  return h;
}

DiscriminatorOutput Discriminator::operator()(const Var& img, std::span<const int> domains) const {
  for (int d : domains) {
    if (d < 0 || d >= arch_.num_domains) {
      throw ValidationError("discriminate: domain " + std::to_string(d) + " outside 0.." +
                            std::to_string(arch_.num_domains - 1));
    }
  }
  Var feat = trunk(img);
  return {ops::select_channel(heads_(feat), domains), feat};
}

Var Discriminator::pooled_features(const Var& img) const { return ops::spatial_mean(trunk(img)); }

const Tensor& Checkpoint::array(const std::string& name) const {
  for (const auto& a : arrays)
    if (a.name == name) return a.value;
  throw ValidationError("checkpoint: missing array " + name);
}

bool Checkpoint::has_array(const std::string& name) const {
  for (const auto& a : arrays)
    if (a.name == name) return true;
  return false;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("checkpoint: cannot write " + tmp.string());
    os.write(kMagic, sizeof(kMagic));
    write_pod<std::uint32_t>(os, Checkpoint::kFormatVersion);
    const std::string manifest = ckpt.manifest.dump(2);
    write_pod<std::uint64_t>(os, manifest.size());
    os.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));
    write_pod<std::uint64_t>(os, ckpt.arrays.size());
    for (const auto& a : ckpt.arrays) {
      write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(a.name.size()));
      os.write(a.name.data(), static_cast<std::streamsize>(a.name.size()));
      write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(a.value.rank()));
      for (int d : a.value.shape()) write_pod<std::int32_t>(os, d);
      os.write(reinterpret_cast<const char*>(a.value.data()),
               static_cast<std::streamsize>(a.value.numel() * sizeof(double)));
    }
    if (!os) throw std::runtime_error("checkpoint: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("checkpoint: cannot open " + path.string());
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw ValidationError("checkpoint: " + path.string() + " is not a checkpoint file");
  }
  const auto version = read_pod<std::uint32_t>(is);
  if (version != Checkpoint::kFormatVersion) {
    throw ValidationError("checkpoint: unsupported format version " + std::to_string(version));
  }
  Checkpoint ckpt;
  std::string manifest(read_pod<std::uint64_t>(is), '\0');
  is.read(manifest.data(), static_cast<std::streamsize>(manifest.size()));
  if (!is) throw ValidationError("checkpoint: truncated manifest");
  try {
    ckpt.manifest = nlohmann::json::parse(manifest);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("checkpoint: bad manifest: ") + e.what());
  }
  const auto count = read_pod<std::uint64_t>(is);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name(read_pod<std::uint32_t>(is), '\0');
    is.read(name.data(), static_cast<std::streamsize>(name.size()));
    const auto rank = read_pod<std::uint32_t>(is);
    if (rank > 8) throw ValidationError("checkpoint: implausible rank for " + name);
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(read_pod<std::int32_t>(is));
    Tensor t(shape);
    is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.numel() * sizeof(double)));
    if (!is) throw ValidationError("checkpoint: truncated array " + name);
    ckpt.arrays.push_back({std::move(name), std::move(t)});
  }
  return ckpt;
}

void export_params(const ParamSet& params, const std::string& prefix, std::vector<NamedTensor>& out) {
  for (const auto& p : params.items()) out.push_back({prefix + p.name, p.var.value()});
}

void import_params(const ParamSet& params, const std::string& prefix, const Checkpoint& ckpt) {
  for (const auto& p : params.items()) {
    const Tensor& src = ckpt.array(prefix + p.name);
    if (src.shape() != p.var.shape()) {
      throw ValidationError("checkpoint: array " + prefix + p.name + " has shape " + shape_string(src.shape()) +
                            ", expected " + shape_string(p.var.shape()));
    }
    Var v = p.var;
    v.mutable_value() = src;
  }
}

void require_arch(const Checkpoint& ckpt, const ArchConfig& arch) {
  if (!ckpt.manifest.contains("arch")) throw ValidationError("checkpoint: manifest lacks an architecture config");
  const ArchConfig stored = arch_from_json(ckpt.manifest.at("arch"));
  if (!(stored == arch)) {
    throw ValidationError("checkpoint: architecture mismatch, checkpoint has " + arch_to_json(stored).dump() +
                          ", expected " + arch_to_json(arch).dump());
  }
}

Generator generator_from_checkpoint(const Checkpoint& ckpt) {
  if (!ckpt.manifest.contains("arch")) throw ValidationError("checkpoint: manifest lacks an architecture config");
  Generator g(arch_from_json(ckpt.manifest.at("arch")), 0);
  import_params(g.params(), "generator/", ckpt);
  return g;
}

}  // namespace rift
