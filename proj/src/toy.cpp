// SPDX-License-Identifier: Apache-2.0
#include "occaug/toy.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "occaug/annotation_store.hpp"
#include "occaug/config.hpp"
#include "occaug/error.hpp"
#include "occaug/rng.hpp"

namespace occaug {

namespace {

constexpr ImageId kTestIdBase = 100001;

struct Palette {
  int r, g, b;
};
constexpr Palette kPalettes[] = {{200, 70, 50}, {60, 170, 70}, {70, 90, 200}};

enum class Layout { Vertical, Horizontal, Diagonal };

struct PartShape {
  bool ellipse = false;
  int x0, y0, x1, y1;  // exclusive bounds
};

Geometry rect_geometry(const PartShape& p) {
  Polygon poly{{double(p.x0), double(p.y0)},
               {double(p.x1), double(p.y0)},
               {double(p.x1), double(p.y1)},
               {double(p.x0), double(p.y1)}};
  return PolygonGeometry{{poly}};
}

Polygon ellipse_polygon(const PartShape& p) {
  const double cx = 0.5 * (p.x0 + p.x1), cy = 0.5 * (p.y0 + p.y1);
  const double rx = 0.5 * (p.x1 - p.x0), ry = 0.5 * (p.y1 - p.y0);
  Polygon poly;
  constexpr int kVertices = 24;
  for (int i = 0; i < kVertices; ++i) {
    const double a = 6.283185307179586 * i / kVertices;
    poly.push_back({cx + rx * std::cos(a), cy + ry * std::sin(a)});
  }
  return poly;
}

std::uint8_t clamp_byte(int v) { return static_cast<std::uint8_t>(std::clamp(v, 0, 255)); }

}  // namespace

const std::vector<std::string>& toy_class_names() {
  static const std::vector<std::string> names{"tower", "train", "beads"};
  return names;
}

ToySample make_toy_sample(std::uint64_t seed, ImageId image_id, int class_index, int size) {
  if (size < 32) throw ValidationError("toy images must be at least 32 pixels wide");
  if (class_index < 0 || class_index >= 3) throw ValidationError("toy class index out of range");
  Rng rng(mix_seed({seed, static_cast<std::uint64_t>(image_id), 0x70Fu}));
  ToySample out;
  out.image_id = image_id;
  out.class_index = class_index;
  out.image = Image(size, size, 3);

  const int base = static_cast<int>(rng.between(60, 190));
  int tint[3];
  for (int& t : tint) t = static_cast<int>(rng.between(-15, 15));
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const int noise = static_cast<int>(rng.between(-24, 24));
      for (int c = 0; c < 3; ++c) out.image.at(c, y, x) = clamp_byte(base + tint[c] + noise);
    }

  const int n = static_cast<int>(rng.between(2, 4));
  const int lo = size * 9 / 16, hi = size * 13 / 16;
  const int ow = static_cast<int>(rng.between(lo, hi));
  const int oh = static_cast<int>(rng.between(lo, hi));
  const int ox = static_cast<int>(rng.between(2, size - ow - 2));
  const int oy = static_cast<int>(rng.between(2, size - oh - 2));
  const Layout layout = static_cast<Layout>(rng.below(3));

  std::vector<PartShape> shapes;
  for (int i = 0; i < n; ++i) {
    PartShape p;
    if (layout == Layout::Vertical) {
      p.y0 = oy + i * oh / n + 1;
      p.y1 = oy + (i + 1) * oh / n - 1;
      const int w = static_cast<int>(rng.between(ow / 2, ow));
      p.x0 = ox + static_cast<int>(rng.between(0, ow - w));
      p.x1 = p.x0 + w;
    } else if (layout == Layout::Horizontal) {
      p.x0 = ox + i * ow / n + 1;
      p.x1 = ox + (i + 1) * ow / n - 1;
      const int h = static_cast<int>(rng.between(oh / 2, oh));
      p.y0 = oy + static_cast<int>(rng.between(0, oh - h));
      p.y1 = p.y0 + h;
    } else {
      p.x0 = ox + i * ow / n + 1;
      p.x1 = ox + (i + 1) * ow / n - 1;
      p.y0 = oy + i * oh / n + 1;
      p.y1 = oy + (i + 1) * oh / n - 1;
      p.ellipse = true;
    }
    if (layout != Layout::Diagonal) p.ellipse = rng.below(4) == 0;
    shapes.push_back(p);
  }

  // Only colour identifies the class; layout and part shapes are drawn
  // independently of it.
  std::vector<BinaryMask> masks;
  for (const auto& p : shapes) {
    const Geometry geo = p.ellipse ? Geometry(PolygonGeometry{{ellipse_polygon(p)}}) : rect_geometry(p);
    masks.push_back(rasterize_geometry(geo, size, size).mask);
  }
  const Palette pal = kPalettes[class_index];
  for (std::size_t i = 0; i < masks.size(); ++i) {
    const int spread = 45;
    const int dr = static_cast<int>(rng.between(-spread, spread));
    const int dg = static_cast<int>(rng.between(-spread, spread));
    const int db = static_cast<int>(rng.between(-spread, spread));
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        if (!masks[i].get(x, y)) continue;
        const int noise = static_cast<int>(rng.between(-10, 10));
        out.image.at(0, y, x) = clamp_byte(pal.r + dr + noise);
        out.image.at(1, y, x) = clamp_byte(pal.g + dg + noise);
        out.image.at(2, y, x) = clamp_byte(pal.b + db + noise);
      }
  }
  out.parts = std::move(masks);
  return out;
}

ToyDataset make_toy(const std::filesystem::path& root, const ToyOptions& options) {
  if (options.train_count < 0 || options.test_count < 0)
    throw ValidationError("toy split sizes must be non-negative");
  using nlohmann::json;
  ToyDataset ds{root, root / "train.json", root / "test.json"};
  json categories = json::array();
  for (std::size_t i = 0; i < toy_class_names().size(); ++i)
    categories.push_back({{"id", i + 1}, {"name", toy_class_names()[i]}});

  std::int64_t next_part_id = 1;
  auto write_split = [&](ImageId first_id, int count, const std::filesystem::path& json_path) {
    json images = json::array();
    json annotations = json::array();
    for (int k = 0; k < count; ++k) {
      const ImageId id = first_id + k;
      const int cls = k % 3;
      const ToySample s = make_toy_sample(options.seed, id, cls, options.size);
      const std::string file = "images/" + std::to_string(id) + ".ppm";
      write_image(s.image, root / file);
      images.push_back({{"id", id},
                        {"file_name", file},
                        {"width", options.size},
                        {"height", options.size},
                        {"category_id", cls + 1}});
      for (const auto& part : s.parts) {
        const Rle rle = encode_rle(part);
        annotations.push_back(
            {{"id", next_part_id++},
             {"image_id", id},
             {"segmentation",
              {{"size", {options.size, options.size}},
               {"counts", rle_counts_to_string(rle.counts)}}}});
      }
    }
    const json doc{{"images", images}, {"annotations", annotations}, {"categories", categories}};
    write_text_file(json_path, doc.dump(1));
  };
  write_split(1, options.train_count, ds.train_annotations);
  write_split(kTestIdBase, options.test_count, ds.test_annotations);
  return ds;
}

}  // namespace occaug
