#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "rift/mask.hpp"
#include "rift/tensor.hpp"

namespace rift {

// 8-bit interleaved (HWC) raster.
struct Image8 {
  int width = 0;
  int height = 0;
  int channels = 0;  // 1 (gray / indexed label) or 3 (RGB)
  std::vector<std::uint8_t> pixels;
};

using TextChunks = std::vector<std::pair<std::string, std::string>>;

Image8 read_png(const std::filesystem::path& path);
// Deterministic encoder settings; `text` becomes tEXt chunks.
void write_png(const std::filesystem::path& path, const Image8& image, const TextChunks& text = {});
TextChunks read_png_text(const std::filesystem::path& path);

// [1,C,H,W] with v/127.5 - 1, so values land in [-1, 1].
Tensor image_to_tensor(const Image8& image);
// Clamps to [-1, 1] and rounds to the nearest 8-bit level.
Image8 tensor_to_image(const Tensor& sample);

Image8 mask_to_image(const RegionMask& mask);
// Raw label map; num_labels bounds the legal values.
RegionMask mask_from_image(const Image8& image, int num_labels);

}  // namespace rift
