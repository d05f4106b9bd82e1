// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace occaug {

using ImageId = std::int64_t;

// H x W boolean array, one byte per pixel (0 or 1), with a cached popcount.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int width, int height, bool value = false);
  // bits must hold width*height entries; nonzero entries become 1.
  BinaryMask(int width, int height, std::vector<std::uint8_t> bits);

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return bits_.size(); }
  std::size_t popcount() const { return popcount_; }
  bool empty_set() const { return popcount_ == 0; }

  bool get(int x, int y) const { return bits_[static_cast<std::size_t>(y) * width_ + x] != 0; }
  void set(int x, int y, bool value);
  // Sets [x0, x1) x [y0, y1), clipped to the mask.
  void fill_rect(int x0, int y0, int x1, int y1, bool value = true);

  std::span<const std::uint8_t> bits() const { return bits_; }

  BinaryMask& operator|=(const BinaryMask& other);
  // Clears every pixel that is set in other.
  BinaryMask& subtract(const BinaryMask& other);
  std::size_t intersection_count(const BinaryMask& other) const;

  bool operator==(const BinaryMask& other) const {
    return width_ == other.width_ && height_ == other.height_ && bits_ == other.bits_;
  }

 private:
  void require_same_shape(const BinaryMask& other, const char* op) const;

  int width_ = 0;
  int height_ = 0;
  std::size_t popcount_ = 0;
  std::vector<std::uint8_t> bits_;
};

// COCO run-length encoding: column-major runs that alternate between
// background and foreground, starting with a (possibly empty) background run.
struct Rle {
  int width = 0;
  int height = 0;
  std::vector<std::uint32_t> counts;

  bool operator==(const Rle&) const = default;
};

Rle encode_rle(const BinaryMask& mask);
// Throws ParseError when the counts do not sum to width*height.
BinaryMask decode_rle(const Rle& rle);
std::size_t rle_area(const Rle& rle);

// COCO's compact ASCII form of the counts (as written by pycocotools).
std::string rle_counts_to_string(std::span<const std::uint32_t> counts);
std::vector<std::uint32_t> rle_counts_from_string(std::string_view s);

// Text record "<image_id> <width> <height> <rle-string>" used to cache masks
// between pipeline stages.
struct MaskRecord {
  ImageId image_id = 0;
  BinaryMask mask;
};

std::string format_mask_record(ImageId image_id, const BinaryMask& mask);
MaskRecord parse_mask_record(std::string_view line);

}  // namespace occaug
