// SPDX-License-Identifier: Apache-2.0
#include "occaug/mask.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

#include "occaug/error.hpp"
#include "occaug/kernels.hpp"

namespace occaug {

BinaryMask::BinaryMask(int width, int height, bool value)
    : width_(width), height_(height) {
  if (width <= 0 || height <= 0)
    throw ValidationError("mask dimensions must be positive, got " + std::to_string(width) + "x" +
                          std::to_string(height));
  bits_.assign(static_cast<std::size_t>(width) * height, value ? 1 : 0);
  popcount_ = value ? bits_.size() : 0;
}

BinaryMask::BinaryMask(int width, int height, std::vector<std::uint8_t> bits)
    : width_(width), height_(height), bits_(std::move(bits)) {
  if (width <= 0 || height <= 0)
    throw ValidationError("mask dimensions must be positive");
  if (bits_.size() != static_cast<std::size_t>(width) * height)
    throw ValidationError("mask bit count " + std::to_string(bits_.size()) + " does not match " +
                          std::to_string(width) + "x" + std::to_string(height));
  for (auto& b : bits_) b = b ? 1 : 0;
  popcount_ = kernels::count_u8(bits_);
}

void BinaryMask::set(int x, int y, bool value) {
  auto& b = bits_[static_cast<std::size_t>(y) * width_ + x];
  if ((b != 0) == value) return;
  b = value ? 1 : 0;
  popcount_ = value ? popcount_ + 1 : popcount_ - 1;
}

void BinaryMask::fill_rect(int x0, int y0, int x1, int y1, bool value) {
  x0 = std::clamp(x0, 0, width_);
  x1 = std::clamp(x1, 0, width_);
  y0 = std::clamp(y0, 0, height_);
  y1 = std::clamp(y1, 0, height_);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) set(x, y, value);
}

void BinaryMask::require_same_shape(const BinaryMask& other, const char* op) const {
  if (width_ != other.width_ || height_ != other.height_)
    throw ValidationError(std::string("mask ") + op + " on mismatched shapes " +
                          std::to_string(width_) + "x" + std::to_string(height_) + " vs " +
                          std::to_string(other.width_) + "x" + std::to_string(other.height_));
}

BinaryMask& BinaryMask::operator|=(const BinaryMask& other) {
  require_same_shape(other, "union");
  kernels::or_u8(bits_, other.bits_);
  popcount_ = kernels::count_u8(bits_);
  return *this;
}

BinaryMask& BinaryMask::subtract(const BinaryMask& other) {
  require_same_shape(other, "difference");
  kernels::andnot_u8(bits_, other.bits_);
  popcount_ = kernels::count_u8(bits_);
  return *this;
}

std::size_t BinaryMask::intersection_count(const BinaryMask& other) const {
  require_same_shape(other, "intersection");
  return kernels::and_count_u8(bits_, other.bits_);
}

Rle encode_rle(const BinaryMask& mask) {
  Rle rle{mask.width(), mask.height(), {}};
  std::uint8_t current = 0;
  std::uint32_t run = 0;
  for (int x = 0; x < mask.width(); ++x)
    for (int y = 0; y < mask.height(); ++y) {
      const std::uint8_t v = mask.get(x, y) ? 1 : 0;
      if (v != current) {
        rle.counts.push_back(run);
        run = 0;
        current = v;
      }
      ++run;
    }
  rle.counts.push_back(run);
  return rle;
}

std::size_t rle_area(const Rle& rle) {
  std::size_t area = 0;
  for (std::size_t i = 1; i < rle.counts.size(); i += 2) area += rle.counts[i];
  return area;
}

BinaryMask decode_rle(const Rle& rle) {
  if (rle.width <= 0 || rle.height <= 0) throw ParseError("RLE has non-positive size");
  std::size_t total = 0;
  for (auto c : rle.counts) total += c;
  const std::size_t expected = static_cast<std::size_t>(rle.width) * rle.height;
  if (total != expected)
    throw ParseError("RLE counts sum to " + std::to_string(total) + ", expected " +
                     std::to_string(expected));
  std::vector<std::uint8_t> bits(expected, 0);
  std::size_t pos = 0;
  for (std::size_t i = 0; i < rle.counts.size(); ++i) {
    if (i % 2 == 1) {
      for (std::size_t k = pos; k < pos + rle.counts[i]; ++k) {
        // column-major index k -> (x, y)
        const std::size_t x = k / rle.height;
        const std::size_t y = k % rle.height;
        bits[y * rle.width + x] = 1;
      }
    }
    pos += rle.counts[i];
  }
  return BinaryMask(rle.width, rle.height, std::move(bits));
}

std::string rle_counts_to_string(std::span<const std::uint32_t> counts) {
  std::string s;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    long long x = counts[i];
    if (i > 2) x -= static_cast<long long>(counts[i - 2]);
    bool more = true;
    while (more) {
      long long c = x & 0x1f;
      x >>= 5;
      more = (c & 0x10) ? x != -1 : x != 0;
      if (more) c |= 0x20;
      s.push_back(static_cast<char>(c + 48));
    }
  }
  return s;
}

std::vector<std::uint32_t> rle_counts_from_string(std::string_view s) {
  std::vector<std::uint32_t> counts;
  std::size_t p = 0;
  while (p < s.size()) {
    long long x = 0;
    int k = 0;
    bool more = true;
    while (more) {
      if (p >= s.size()) throw ParseError("truncated RLE string");
      const long long c = static_cast<long long>(s[p]) - 48;
      if (c < 0 || c > 63) throw ParseError("invalid character in RLE string at offset " +
                                            std::to_string(p));
      x |= (c & 0x1f) << (5 * k);
      more = (c & 0x20) != 0;
      ++p;
      ++k;
      if (!more && (c & 0x10)) x |= -1LL << (5 * k);
    }
    const std::size_t m = counts.size();
    if (m > 2) x += counts[m - 2];
    if (x < 0 || x > UINT32_MAX) throw ParseError("RLE count out of range");
    counts.push_back(static_cast<std::uint32_t>(x));
  }
  return counts;
}

std::string format_mask_record(ImageId image_id, const BinaryMask& mask) {
  const Rle rle = encode_rle(mask);
  return std::to_string(image_id) + " " + std::to_string(mask.width()) + " " +
         std::to_string(mask.height()) + " " + rle_counts_to_string(rle.counts);
}

MaskRecord parse_mask_record(std::string_view line) {
  std::istringstream in{std::string(line)};
  MaskRecord rec;
  Rle rle;
  std::string counts;
  if (!(in >> rec.image_id >> rle.width >> rle.height >> counts))
    throw ParseError("malformed mask record '" + std::string(line) + "'");
  rle.counts = rle_counts_from_string(counts);
  rec.mask = decode_rle(rle);
  return rec;
}

}  // namespace occaug
