#include "rift/mask.hpp"

#include <algorithm>
#include <sstream>

#include "rift/error.hpp"

namespace rift {

RegionMask::RegionMask(int height, int width, int num_regions, std::vector<int> labels)
    : height_(height), width_(width), num_regions_(num_regions), labels_(std::move(labels)) {
  if (height <= 0 || width <= 0) throw ValidationError("RegionMask: non-positive size");
  if (num_regions <= 0) throw ValidationError("RegionMask: num_regions must be positive");
  if (labels_.size() != static_cast<std::size_t>(height) * width) {
    throw ValidationError("RegionMask: expected " + std::to_string(height * width) + " labels, got " +
                          std::to_string(labels_.size()));
  }
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] < 0 || labels_[i] >= num_regions) {
      std::ostringstream os;
      os << "RegionMask: label " << labels_[i] << " at pixel (y=" << i / width << ", x=" << i % width
         << ") outside 0.." << num_regions - 1;
      throw ValidationError(os.str());
    }
  }
}

RegionMask RegionMask::constant(int height, int width, int num_regions, int label) {
  return RegionMask(height, width, num_regions,
                    std::vector<int>(static_cast<std::size_t>(std::max(height, 0)) * std::max(width, 0), label));
}

std::vector<int> RegionMask::region_counts() const {
  std::vector<int> counts(num_regions_, 0);
  for (int l : labels_) ++counts[l];
  return counts;
}

std::vector<int> RegionMask::present_regions() const {
  std::vector<int> out;
  const auto counts = region_counts();
  for (int i = 0; i < num_regions_; ++i)
    if (counts[i] > 0) out.push_back(i);
  return out;
}

OneHotMask::OneHotMask(int num_regions, int height, int width, std::vector<std::uint8_t> channels)
    : num_regions_(num_regions), height_(height), width_(width), channels_(std::move(channels)) {
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  if (num_regions <= 0 || height <= 0 || width <= 0 || channels_.size() != plane * num_regions) {
    throw ValidationError("OneHotMask: inconsistent dimensions");
  }
  for (std::size_t p = 0; p < plane; ++p) {
    int sum = 0;
    for (int r = 0; r < num_regions; ++r) {
      const std::uint8_t v = channels_[r * plane + p];
      if (v > 1) throw ValidationError("OneHotMask: non-binary value at pixel " + std::to_string(p));
      sum += v;
    }
    if (sum != 1) {
      throw ValidationError("OneHotMask: channels sum to " + std::to_string(sum) + " at pixel (y=" +
                            std::to_string(p / width) + ", x=" + std::to_string(p % width) + ")");
    }
  }
}

std::span<const std::uint8_t> OneHotMask::channel(int region) const {
  const std::size_t plane = static_cast<std::size_t>(height_) * width_;
  return std::span<const std::uint8_t>(channels_).subspan(region * plane, plane);
}

Tensor OneHotMask::as_tensor() const {
  Tensor t({num_regions_, height_, width_});
  for (std::size_t i = 0; i < channels_.size(); ++i) t[i] = channels_[i];
  return t;
}

OneHotMask to_onehot(const RegionMask& mask) {
  const std::size_t plane = static_cast<std::size_t>(mask.height()) * mask.width();
  std::vector<std::uint8_t> channels(plane * mask.num_regions(), 0);
  const auto labels = mask.labels();
  for (std::size_t p = 0; p < plane; ++p) channels[labels[p] * plane + p] = 1;
  return OneHotMask(mask.num_regions(), mask.height(), mask.width(), std::move(channels));
}

RegionMask argmax_channels(const OneHotMask& onehot) {
  const int H = onehot.height(), W = onehot.width();
  std::vector<int> labels(static_cast<std::size_t>(H) * W, 0);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      int best = 0;
      for (int r = 1; r < onehot.num_regions(); ++r)
        if (onehot.at(r, y, x) > onehot.at(best, y, x)) best = r;
      labels[static_cast<std::size_t>(y) * W + x] = best;
    }
  return RegionMask(H, W, onehot.num_regions(), std::move(labels));
}

RegionMask downsample_mask(const RegionMask& mask, int target_h, int target_w) {
  if (target_h <= 0 || target_w <= 0) {
    throw ValidationError("downsample_mask: non-positive target size " + std::to_string(target_h) + "x" +
                          std::to_string(target_w));
  }
  if (target_h > mask.height() || target_w > mask.width()) {
    throw ValidationError("downsample_mask: target " + std::to_string(target_h) + "x" + std::to_string(target_w) +
                          " exceeds source " + std::to_string(mask.height()) + "x" +
                          std::to_string(mask.width()));
  }
  if (target_h == mask.height() && target_w == mask.width()) return mask;
  std::vector<int> labels(static_cast<std::size_t>(target_h) * target_w);
  for (int y = 0; y < target_h; ++y) {
    const int sy = static_cast<int>((2LL * y + 1) * mask.height() / (2LL * target_h));
    for (int x = 0; x < target_w; ++x) {
      const int sx = static_cast<int>((2LL * x + 1) * mask.width() / (2LL * target_w));
      labels[static_cast<std::size_t>(y) * target_w + x] = mask.label(sy, sx);
    }
  }
  return RegionMask(target_h, target_w, mask.num_regions(), std::move(labels));
}

void RegionRemap::validate() const {
  if (num_target_regions <= 0) throw ValidationError("RegionRemap: num_target_regions must be positive");
  std::vector<bool> hit(num_target_regions, false);
  for (int t : mapping) {
    if (t < -1 || t >= num_target_regions) {
      throw ValidationError("RegionRemap: target label " + std::to_string(t) + " outside 0.." +
                            std::to_string(num_target_regions - 1));
    }
    if (t >= 0) hit[t] = true;
  }
  for (int t = 0; t < num_target_regions; ++t) {
    if (!hit[t]) throw ValidationError("RegionRemap: target labels not contiguous, missing " + std::to_string(t));
  }
}

RegionRemap RegionRemap::identity(int num_regions) {
  RegionRemap r;
  r.num_target_regions = num_regions;
  for (int i = 0; i < num_regions; ++i) r.mapping.push_back(i);
  return r;
}

RegionMask remap_regions(const RegionMask& mask, const RegionRemap& remap) {
  remap.validate();
  std::vector<int> uncovered;
  for (int l = 0; l < mask.num_regions(); ++l) {
    if (l >= static_cast<int>(remap.mapping.size()) || remap.mapping[l] < 0) uncovered.push_back(l);
  }
  if (!uncovered.empty()) {
    std::ostringstream os;
    os << "remap_regions: mapping does not cover source labels {";
    for (std::size_t i = 0; i < uncovered.size(); ++i) os << (i ? ", " : "") << uncovered[i];
    os << "}";
    throw ValidationError(os.str());
  }
  std::vector<int> labels(mask.labels().begin(), mask.labels().end());
  for (int& l : labels) l = remap.mapping[l];
  return RegionMask(mask.height(), mask.width(), remap.num_target_regions, std::move(labels));
}

const std::vector<std::string>& celebamask_label_names() {
  static const std::vector<std::string> names = {
      "background", "skin", "nose",  "eye_g", "l_eye", "r_eye",  "l_brow", "r_brow", "l_ear", "r_ear",
      "mouth",      "u_lip", "l_lip", "hair",  "hat",   "ear_r", "neck_l", "neck",   "cloth"};
  return names;
}

RegionRemap celebamask_face_hair_remap() {
  // background, hat, neck, necklace and cloth -> 0; hair -> 2; the rest of
  // the head -> 1.
  RegionRemap r;
  r.num_target_regions = 3;
  r.mapping = {0, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 2, 0, 1, 0, 0, 0};
  return r;
}

RegionMask merge_attribute_masks(int height, int width, int num_regions, int background,
                                 std::span<const AttributeLayer> priority) {
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  std::vector<int> labels(plane, background);
  for (const AttributeLayer& layer : priority) {
    if (layer.binary.size() != plane) {
      throw ValidationError("merge_attribute_masks: layer for label " + std::to_string(layer.label) +
                            " has wrong size");
    }
    for (std::size_t p = 0; p < plane; ++p)
      if (layer.binary[p]) labels[p] = layer.label;
  }
  return RegionMask(height, width, num_regions, std::move(labels));
}

}  // namespace rift
