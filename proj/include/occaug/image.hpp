// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace occaug {

// 8-bit image stored planar (C x H x W), the layout the masking kernels
// operate on one channel plane at a time.
class Image {
 public:
  Image() = default;
  Image(int width, int height, int channels = 3, std::uint8_t fill = 0);

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  bool empty() const { return data_.empty(); }
  std::size_t plane_size() const { return static_cast<std::size_t>(width_) * height_; }

  std::span<std::uint8_t> plane(int c) { return {data_.data() + c * plane_size(), plane_size()}; }
  std::span<const std::uint8_t> plane(int c) const {
    return {data_.data() + c * plane_size(), plane_size()};
  }

  std::uint8_t& at(int c, int y, int x) { return data_[c * plane_size() + y * width_ + x]; }
  std::uint8_t at(int c, int y, int x) const { return data_[c * plane_size() + y * width_ + x]; }

  std::span<std::uint8_t> bytes() { return data_; }
  std::span<const std::uint8_t> bytes() const { return data_; }

  bool same_shape(const Image& other) const {
    return width_ == other.width_ && height_ == other.height_ && channels_ == other.channels_;
  }

  bool operator==(const Image&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<std::uint8_t> data_;
};

// Binary PPM (P6, 3 channels) and PGM (P5, 1 channel), maxval 255.
std::string encode_pnm(const Image& image);
Image decode_pnm(std::string_view bytes);
Image read_image(const std::filesystem::path& path);
void write_image(const Image& image, const std::filesystem::path& path);

Image resize_nearest(const Image& image, int width, int height);

}  // namespace occaug
