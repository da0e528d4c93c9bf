#include "rift/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include <png.h>

#include "rift/error.hpp"

namespace rift {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_error_handler(png_structp, png_const_charp msg) { throw ValidationError(std::string("png: ") + msg); }
void png_warning_handler(png_structp, png_const_charp) {}

struct ReadResult {
  Image8 image;
  TextChunks text;
};

ReadResult read_png_impl(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw ValidationError("cannot open image " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_handler, png_warning_handler);
  png_infop info = png_create_info_struct(png);
  ReadResult result;
  try {
    png_init_io(png, file.get());
    png_read_info(png, info);
    const png_byte color = png_get_color_type(png, info);
    const png_byte depth = png_get_bit_depth(png, info);
    if (depth == 16) png_set_strip_16(png);
    // Palette images keep their indices: an indexed mask stores region ids.
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color == PNG_COLOR_TYPE_PALETTE && depth < 8) png_set_packing(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);
    Image8& img = result.image;
    img.width = static_cast<int>(png_get_image_width(png, info));
    img.height = static_cast<int>(png_get_image_height(png, info));
    img.channels = png_get_channels(png, info);
    if (img.channels != 1 && img.channels != 3) throw ValidationError("unsupported channel count in " + path.string());
    const std::size_t stride = png_get_rowbytes(png, info);
    img.pixels.resize(stride * img.height);
    std::vector<png_bytep> rows(img.height);
    for (int y = 0; y < img.height; ++y) rows[y] = img.pixels.data() + y * stride;
    png_read_image(png, rows.data());
    png_read_end(png, info);
    png_textp text = nullptr;
    int count = 0;
    png_get_text(png, info, &text, &count);
    for (int i = 0; i < count; ++i) result.text.emplace_back(text[i].key, text[i].text ? text[i].text : "");
  } catch (const ValidationError& e) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ValidationError(path.string() + ": " + e.what());
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return result;
}

}  // namespace

Image8 read_png(const std::filesystem::path& path) { return read_png_impl(path).image; }

TextChunks read_png_text(const std::filesystem::path& path) { return read_png_impl(path).text; }

void write_png(const std::filesystem::path& path, const Image8& image, const TextChunks& text) {
  if (image.channels != 1 && image.channels != 3) throw ValidationError("write_png: unsupported channel count");
  if (image.pixels.size() != static_cast<std::size_t>(image.width) * image.height * image.channels) {
    throw ValidationError("write_png: pixel buffer size mismatch");
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw std::runtime_error("cannot write image " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_handler, png_warning_handler);
  png_infop info = png_create_info_struct(png);
  try {
    png_init_io(png, file.get());
    png_set_IHDR(png, info, image.width, image.height, 8,
                 image.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_set_compression_level(png, 6);
    std::vector<png_text> chunks(text.size());
    for (std::size_t i = 0; i < text.size(); ++i) {
      chunks[i].compression = PNG_TEXT_COMPRESSION_NONE;
      chunks[i].key = const_cast<char*>(text[i].first.c_str());
      chunks[i].text = const_cast<char*>(text[i].second.c_str());
      chunks[i].text_length = text[i].second.size();
    }
    if (!chunks.empty()) png_set_text(png, info, chunks.data(), static_cast<int>(chunks.size()));
    png_write_info(png, info);
    const std::size_t stride = static_cast<std::size_t>(image.width) * image.channels;
    for (int y = 0; y < image.height; ++y) {
      png_write_row(png, const_cast<png_bytep>(image.pixels.data() + y * stride));
    }
    png_write_end(png, nullptr);
  } catch (...) {
    png_destroy_write_struct(&png, &info);
    throw;
  }
  png_destroy_write_struct(&png, &info);
}

Tensor image_to_tensor(const Image8& image) {
  const int C = image.channels, H = image.height, W = image.width;
  Tensor t({1, C, H, W});
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < C; ++c) {
        t.at(0, c, y, x) = image.pixels[(static_cast<std::size_t>(y) * W + x) * C + c] / 127.5 - 1.0;
      }
  return t;
}

Image8 tensor_to_image(const Tensor& sample) {
  auto [N, C, H, W] = nchw(sample, "tensor_to_image");
  if (N != 1 || (C != 1 && C != 3)) throw ValidationError("tensor_to_image: expected [1,1|3,H,W]");
  Image8 img{W, H, C, std::vector<std::uint8_t>(static_cast<std::size_t>(W) * H * C)};
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < C; ++c) {
        const double v = std::clamp(sample.at(0, c, y, x), -1.0, 1.0);
        img.pixels[(static_cast<std::size_t>(y) * W + x) * C + c] =
            static_cast<std::uint8_t>(std::lround((v + 1.0) * 127.5));
      }
  return img;
}

Image8 mask_to_image(const RegionMask& mask) {
  if (mask.num_regions() > 256) throw ValidationError("mask_to_image: more than 256 regions");
  Image8 img{mask.width(), mask.height(), 1, {}};
  img.pixels.reserve(mask.labels().size());
  for (int l : mask.labels()) img.pixels.push_back(static_cast<std::uint8_t>(l));
  return img;
}

RegionMask mask_from_image(const Image8& image, int num_labels) {
  if (image.channels != 1) throw ValidationError("mask image must be single-channel");
  std::vector<int> labels(image.pixels.begin(), image.pixels.end());
  return RegionMask(image.height, image.width, num_labels, std::move(labels));
}

}  // namespace rift
