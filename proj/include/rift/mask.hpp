#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rift/tensor.hpp"

namespace rift {

// H x W integer label map; every pixel holds exactly one region id in [0, R).
// R comes from the dataset manifest, so some declared regions may be absent.
class RegionMask {
 public:
  RegionMask() = default;
  // Throws ValidationError naming the first pixel whose label is out of range.
  RegionMask(int height, int width, int num_regions, std::vector<int> labels);

  static RegionMask constant(int height, int width, int num_regions, int label);

  int height() const { return height_; }
  int width() const { return width_; }
  int num_regions() const { return num_regions_; }
  int label(int y, int x) const { return labels_[static_cast<std::size_t>(y) * width_ + x]; }
  std::span<const int> labels() const { return labels_; }

  // Pixel count of every region id.
  std::vector<int> region_counts() const;
  // Region ids with at least one pixel, ascending.
  std::vector<int> present_regions() const;

  bool operator==(const RegionMask&) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  int num_regions_ = 0;
  std::vector<int> labels_;
};

// R x H x W binary expansion of a RegionMask. Channels are disjoint and
// cover every pixel.
class OneHotMask {
 public:
  OneHotMask() = default;
  // Validates the partition invariant.
  OneHotMask(int num_regions, int height, int width, std::vector<std::uint8_t> channels);

  int num_regions() const { return num_regions_; }
  int height() const { return height_; }
  int width() const { return width_; }
  std::uint8_t at(int region, int y, int x) const {
    return channels_[(static_cast<std::size_t>(region) * height_ + y) * width_ + x];
  }
  std::span<const std::uint8_t> channel(int region) const;
  // Values as an [R,H,W] float tensor.
  Tensor as_tensor() const;

 private:
  int num_regions_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> channels_;
};

OneHotMask to_onehot(const RegionMask& mask);
// Inverse of to_onehot on valid one-hot masks.
RegionMask argmax_channels(const OneHotMask& onehot);

// Nearest-neighbour resampling to a smaller (or equal) grid. Target pixel
// (y, x) samples source row floor((2y+1)*H / (2*target_h)), i.e. the source
// pixel under the target pixel's centre. Labels are never interpolated.
RegionMask downsample_mask(const RegionMask& mask, int target_h, int target_w);

// Table from source label to target label. `mapping[s]` is the new id of
// source label s, or -1 when unmapped.
struct RegionRemap {
  std::vector<int> mapping;
  int num_target_regions = 0;

  // Checks that the image of the table is exactly 0..num_target_regions-1.
  void validate() const;
  static RegionRemap identity(int num_regions);
};

// Throws ValidationError listing every source label the table does not cover.
RegionMask remap_regions(const RegionMask& mask, const RegionRemap& remap);

// Region grouping for 19-class CelebAMask-HQ style label maps into
// {0: background, 1: face, 2: hair}, the coarse layout used for age
// translation.
RegionRemap celebamask_face_hair_remap();
const std::vector<std::string>& celebamask_label_names();

// Builds one label map from per-attribute binary masks. Later entries in
// `priority` overwrite earlier ones; uncovered pixels get `background`.
struct AttributeLayer {
  int label = 0;
  std::vector<std::uint8_t> binary;  // H*W, nonzero = inside
};
RegionMask merge_attribute_masks(int height, int width, int num_regions, int background,
                                 std::span<const AttributeLayer> priority);

}  // namespace rift
