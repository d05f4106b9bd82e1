// SPDX-License-Identifier: Apache-2.0
#include "occaug/image.hpp"

#include <cctype>
#include <fstream>
#include <iterator>
#include <sstream>

#include "occaug/error.hpp"

namespace occaug {

Image::Image(int width, int height, int channels, std::uint8_t fill)
    : width_(width), height_(height), channels_(channels) {
  if (width <= 0 || height <= 0 || channels <= 0)
    throw ValidationError("image dimensions must be positive, got " + std::to_string(width) + "x" +
                          std::to_string(height) + "x" + std::to_string(channels));
  data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
}

std::string encode_pnm(const Image& image) {
  if (image.channels() != 1 && image.channels() != 3)
    throw ValidationError("PNM encoding supports 1 or 3 channels, got " +
                          std::to_string(image.channels()));
  std::string out = (image.channels() == 3 ? "P6\n" : "P5\n") + std::to_string(image.width()) +
                    " " + std::to_string(image.height()) + "\n255\n";
  const std::size_t header = out.size();
  out.resize(header + image.bytes().size());
  auto* dst = reinterpret_cast<std::uint8_t*>(out.data() + header);
  const int channels = image.channels();
  for (int y = 0; y < image.height(); ++y)
    for (int x = 0; x < image.width(); ++x)
      for (int c = 0; c < channels; ++c) *dst++ = image.at(c, y, x);
  return out;
}

namespace {

// Reads the next whitespace-separated header token, skipping '#' comments.
std::string next_token(std::string_view bytes, std::size_t& pos) {
  while (pos < bytes.size()) {
    if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
      ++pos;
    } else if (bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else {
      break;
    }
  }
  const std::size_t start = pos;
  while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
  return std::string(bytes.substr(start, pos - start));
}

int parse_positive(const std::string& token, const char* what) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(token, &used);
    if (used == token.size() && v > 0) return v;
  } catch (const std::exception&) {
  }
  throw ParseError(std::string("invalid PNM ") + what + " '" + token + "'");
}

}  // namespace

Image decode_pnm(std::string_view bytes) {
  std::size_t pos = 0;
  const std::string magic = next_token(bytes, pos);
  int channels = 0;
  if (magic == "P6") {
    channels = 3;
  } else if (magic == "P5") {
    channels = 1;
  } else {
    throw ParseError("unsupported image format (expected binary P5/P6 PNM)");
  }
  const int width = parse_positive(next_token(bytes, pos), "width");
  const int height = parse_positive(next_token(bytes, pos), "height");
  const int maxval = parse_positive(next_token(bytes, pos), "maxval");
  if (maxval != 255) throw ParseError("only maxval 255 PNM images are supported");
  ++pos;  // single whitespace byte after maxval
  const std::size_t expected = static_cast<std::size_t>(width) * height * channels;
  if (bytes.size() < pos + expected)
    throw ParseError("truncated PNM payload: expected " + std::to_string(expected) + " bytes");
  Image image(width, height, channels);
  const auto* src = reinterpret_cast<const std::uint8_t*>(bytes.data() + pos);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < channels; ++c) image.at(c, y, x) = *src++;
  return image;
}

Image read_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_pnm(bytes);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void write_image(const Image& image, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  const std::string bytes = encode_pnm(image);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("cannot write image " + path.string());
}

Image resize_nearest(const Image& image, int width, int height) {
  if (image.width() == width && image.height() == height) return image;
  Image out(width, height, image.channels());
  for (int c = 0; c < image.channels(); ++c)
    for (int y = 0; y < height; ++y) {
      const int sy = static_cast<int>((static_cast<long long>(y) * image.height()) / height);
      for (int x = 0; x < width; ++x) {
        const int sx = static_cast<int>((static_cast<long long>(x) * image.width()) / width);
        out.at(c, y, x) = image.at(c, sy, sx);
      }
    }
  return out;
}

}  // namespace occaug
