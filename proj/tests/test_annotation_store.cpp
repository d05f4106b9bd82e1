// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <fstream>
#include <random>

#include <json.hpp>

#include "occaug/annotation_store.hpp"
#include "occaug/error.hpp"
#include "test_support.hpp"

using namespace occaug;
using nlohmann::json;

namespace {

// Crossing-number test, written independently of the scanline rasterizer.
bool inside_even_odd(const Polygon& poly, double px, double py) {
  bool in = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const Point& a = poly[i];
    const Point& b = poly[j];
    if ((a.y > py) != (b.y > py)) {
      const double xc = a.x + (py - a.y) * (b.x - a.x) / (b.y - a.y);
      if (px < xc) in = !in;
    }
  }
  return in;
}

struct Brute {
  BinaryMask mask;
  std::int64_t clipped = 0;
};

// Tests every pixel centre on a grid wide enough to hold the polygons.
Brute brute_rasterize(const std::vector<Polygon>& polys, int w, int h, int margin) {
  Brute out{BinaryMask(w, h), 0};
  for (int y = -margin; y < h + margin; ++y)
    for (int x = -margin; x < w + margin; ++x) {
      bool hit = false;
      for (const auto& p : polys) hit = hit || inside_even_odd(p, x + 0.5, y + 0.5);
      if (!hit) continue;
      if (x >= 0 && y >= 0 && x < w && y < h)
        out.mask.set(x, y, true);
      else
        ++out.clipped;
    }
  return out;
}

Polygon random_polygon(std::mt19937_64& gen, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::uniform_int_distribution<int> nv(3, 9);
  Polygon p;
  const int n = nv(gen);
  for (int i = 0; i < n; ++i) p.push_back({d(gen), d(gen)});
  return p;
}

Polygon rect(double x0, double y0, double x1, double y1) {
  return {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}};
}

json rect_seg(double x0, double y0, double x1, double y1) {
  return json::array({json::array({x0, y0, x1, y0, x1, y1, x0, y1})});
}

std::filesystem::path write_json(const std::filesystem::path& dir, const std::string& name,
                                 const json& doc) {
  const auto p = dir / name;
  std::ofstream(p) << doc.dump();
  return p;
}

json base_doc() {
  json doc;
  doc["images"] = json::array({
      {{"id", 2}, {"file_name", "b.ppm"}, {"width", 10}, {"height", 8}, {"category_id", 7}},
      {{"id", 1}, {"file_name", "a.ppm"}, {"width", 10}, {"height", 8}, {"category_id", 3}},
      {{"id", 3}, {"file_name", "c.ppm"}, {"width", 10}, {"height", 8}, {"category_id", 3}},
  });
  doc["categories"] = json::array({{{"id", 7}, {"name", "dog"}}, {{"id", 3}, {"name", "cat"}}});
  doc["annotations"] = json::array({
      {{"id", 11}, {"image_id", 1}, {"segmentation", rect_seg(0, 0, 4, 4)}},
      {{"id", 10}, {"image_id", 1}, {"segmentation", rect_seg(5, 0, 9, 3)}},
      {{"id", 12}, {"image_id", 2}, {"segmentation", rect_seg(1, 1, 3, 7)}},
  });
  return doc;
}

}  // namespace

TEST_CASE("polygon rasterization equals the pixel-centre brute force") {
  std::mt19937_64 gen(11);
  for (int trial = 0; trial < 200; ++trial) {
    const int w = 8 + static_cast<int>(gen() % 30), h = 8 + static_cast<int>(gen() % 30);
    std::vector<Polygon> polys;
    const int count = 1 + static_cast<int>(gen() % 3);
    for (int i = 0; i < count; ++i) polys.push_back(random_polygon(gen, -6.3, 40.7));
    const RasterResult r = rasterize_geometry(PolygonGeometry{polys}, w, h);
    const Brute b = brute_rasterize(polys, w, h, 50);
    CAPTURE(trial);
    CHECK(r.mask == b.mask);
    CHECK(r.clipped_pixels == b.clipped);
  }
}

TEST_CASE("integer rectangle covers exactly its half-open pixel range") {
  const RasterResult r = rasterize_geometry(PolygonGeometry{{rect(2, 1, 5, 4)}}, 8, 6);
  CHECK(r.clipped_pixels == 0);
  CHECK(r.mask.popcount() == 9);
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 8; ++x) CHECK(r.mask.get(x, y) == (x >= 2 && x < 5 && y >= 1 && y < 4));
}

TEST_CASE("RLE geometry rasterizes to its decoded mask") {
  std::mt19937_64 gen(12);
  const BinaryMask m = testing::random_mask(gen, 7, 5, 0.3);
  const RasterResult r = rasterize_geometry(encode_rle(m), 7, 5);
  CHECK(r.mask == m);
  CHECK_THROWS_AS(rasterize_geometry(encode_rle(m), 5, 7), ValidationError);
}

TEST_CASE("rasterize_mask refuses parts that leave the image") {
  const PartAnnotation inside = make_part(1, PolygonGeometry{{rect(0, 0, 3, 3)}}, 4, 4);
  CHECK(inside.area == 9);
  CHECK(rasterize_mask(inside, 4, 4).popcount() == 9);
  const PartAnnotation outside{2, PolygonGeometry{{rect(2, 2, 6, 6)}}, 4};
  CHECK_THROWS_AS(rasterize_mask(outside, 4, 4), ValidationError);
}

TEST_CASE("validate_partset reports every contract violation") {
  PartSet ps{5, 6, 6, {}};
  SUBCASE("empty") { CHECK(validate_partset(ps).empty_partset); }
  SUBCASE("disjoint parts are ok") {
    ps.parts.push_back(make_part(1, PolygonGeometry{{rect(0, 0, 2, 2)}}, 6, 6));
    ps.parts.push_back(make_part(2, PolygonGeometry{{rect(3, 3, 6, 6)}}, 6, 6));
    CHECK(validate_partset(ps).ok());
  }
  SUBCASE("overlap, bounds, zero area and stale area") {
    ps.parts.push_back(make_part(1, PolygonGeometry{{rect(0, 0, 3, 3)}}, 6, 6));
    ps.parts.push_back(make_part(2, PolygonGeometry{{rect(2, 2, 4, 4)}}, 6, 6));
    ps.parts.push_back({3, PolygonGeometry{{rect(5, 5, 8, 8)}}, 1});
    ps.parts.push_back({4, PolygonGeometry{{rect(1.2, 1.2, 1.4, 1.4)}}, 0});
    ps.parts.push_back({6, PolygonGeometry{{rect(4, 0, 6, 1)}}, 99});
    const ValidationReport r = validate_partset(ps);
    CHECK_FALSE(r.ok());
    REQUIRE(r.overlaps.size() == 1);
    CHECK(r.overlaps[0].part_a == 1);
    CHECK(r.overlaps[0].part_b == 2);
    CHECK(r.overlaps[0].overlap_count == 1);
    REQUIRE(r.out_of_bounds.size() == 1);
    CHECK(r.out_of_bounds[0].part_id == 3);
    CHECK(r.out_of_bounds[0].clipped_pixels == 8);
    CHECK(r.zero_area == std::vector<std::int64_t>{4});
    REQUIRE(r.area_mismatches.size() == 1);
    CHECK(r.area_mismatches[0].part_id == 6);
    CHECK(r.area_mismatches[0].rasterized == 2);
    CHECK(r.describe().find("overlap") != std::string::npos);
  }
}

TEST_CASE("label table is bijective and round-trips through CSV") {
  const LabelTable t({"cat", "dog", "a,b"});
  CHECK(t.size() == 3);
  CHECK(t.find("dog") == 1);
  CHECK_FALSE(t.find("cow").has_value());
  CHECK_THROWS_AS(LabelTable({"x", "x"}), ValidationError);
  const auto dir = testing::temp_dir("labels");
  t.write_csv(dir / "labels.csv");
  CHECK(LabelTable::read_csv(dir / "labels.csv") == t);
}

TEST_CASE("loading a well-formed dataset") {
  const auto dir = testing::temp_dir("load_ok");
  const auto file = write_json(dir, "a.json", base_doc());
  const PartDataset ds = load_part_dataset(dir, file);
  // Image 3 has no parts and is skipped.
  REQUIRE(ds.size() == 2);
  CHECK(ds.report().skipped_no_parts == std::vector<ImageId>{3});
  CHECK(ds.report().images_total == 3);
  CHECK(ds.report().images_loaded == 2);
  // Labels follow ascending category id: 3 -> cat (0), 7 -> dog (1).
  CHECK(ds.labels().names() == std::vector<std::string>{"cat", "dog"});
  CHECK(ds[0].image.image_id == 1);
  CHECK(ds[0].image.class_label == 0);
  CHECK(ds[0].image.class_name == "cat");
  CHECK(ds[0].image.path == dir / "a.ppm");
  CHECK(ds[1].image.class_label == 1);
  // Parts ordered by id, stored as RLE with rasterized areas.
  REQUIRE(ds[0].parts.n() == 2);
  CHECK(ds[0].parts.parts[0].part_id == 10);
  CHECK(ds[0].parts.parts[0].area == 12);
  CHECK(ds[0].parts.parts[1].area == 16);
  CHECK(std::holds_alternative<Rle>(ds[0].parts.parts[0].geometry));
  CHECK(ds[0].parts.find(11) != nullptr);
  CHECK(ds[0].parts.find(99) == nullptr);

  const LabeledImages li = load_labeled_images(dir, file);
  CHECK(li.images.size() == 3);
  CHECK(li.labels == ds.labels());
}

TEST_CASE("RLE segmentation in both count encodings") {
  const auto dir = testing::temp_dir("load_rle");
  json doc = base_doc();
  BinaryMask m(10, 8);
  m.fill_rect(6, 4, 9, 8);
  const Rle rle = encode_rle(m);
  doc["annotations"].push_back(
      {{"id", 20}, {"image_id", 3}, {"segmentation", {{"size", {8, 10}}, {"counts", rle.counts}}}});
  doc["annotations"].push_back(
      {{"id", 21},
       {"image_id", 3},
       {"segmentation", {{"size", {8, 10}}, {"counts", rle_counts_to_string(encode_rle([] {
                                                                 BinaryMask b(10, 8);
                                                                 b.fill_rect(0, 0, 2, 2);
                                                                 return b;
                                                               }())
                                                                                 .counts)}}}});
  const PartDataset ds = load_part_dataset(dir, write_json(dir, "a.json", doc));
  REQUIRE(ds.size() == 3);
  CHECK(ds[2].parts.parts[0].area == 12);
  CHECK(ds[2].parts.parts[1].area == 4);
}

TEST_CASE("malformed JSON names the byte offset") {
  const auto dir = testing::temp_dir("load_bad");
  std::ofstream(dir / "bad.json") << "{\"images\": [1, 2,, 3]}";
  try {
    load_part_dataset(dir, dir / "bad.json");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("byte offset") != std::string::npos);
  }
  CHECK_THROWS_AS(load_part_dataset(dir, dir / "missing.json"), IoError);
}

TEST_CASE("annotations for unknown images are listed") {
  const auto dir = testing::temp_dir("load_unknown");
  json doc = base_doc();
  doc["annotations"].push_back({{"id", 30}, {"image_id", 77}, {"segmentation", rect_seg(0, 0, 1, 1)}});
  doc["annotations"].push_back({{"id", 31}, {"image_id", 55}, {"segmentation", rect_seg(0, 0, 1, 1)}});
  try {
    load_part_dataset(dir, write_json(dir, "a.json", doc));
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("55, 77") != std::string::npos);
  }
}

TEST_CASE("strict mode rejects overlaps; lenient mode resolves them to the lower id") {
  const auto dir = testing::temp_dir("load_overlap");
  json doc = base_doc();
  // Part 13 overlaps part 12 (image 2) in columns 2..3, rows 1..3.
  doc["annotations"].push_back({{"id", 13}, {"image_id", 2}, {"segmentation", rect_seg(2, 1, 4, 4)}});
  const auto file = write_json(dir, "a.json", doc);
  CHECK_THROWS_AS(load_part_dataset(dir, file), ValidationError);

  const PartDataset ds = load_part_dataset(dir, file, {OverlapPolicy::Lenient});
  const PartSet& ps = ds[1].parts;
  REQUIRE(ps.n() == 2);
  CHECK(ps.parts[0].part_id == 12);
  CHECK(ps.parts[0].area == 12);  // keeps all its pixels
  CHECK(ps.parts[1].area == 3);   // 6 minus the 3 contested ones
  CHECK(validate_partset(ps).ok());
  REQUIRE(ds.report().resolved_overlaps.size() == 1);
  CHECK(ds.report().resolved_overlaps[0].overlap_count == 3);
}

TEST_CASE("lenient mode clips out-of-bounds parts and drops empty ones") {
  const auto dir = testing::temp_dir("load_clip");
  json doc = base_doc();
  doc["annotations"].push_back({{"id", 14}, {"image_id", 2}, {"segmentation", rect_seg(8, 6, 12, 12)}});
  doc["annotations"].push_back({{"id", 15}, {"image_id", 2}, {"segmentation", rect_seg(20, 20, 22, 22)}});
  const auto file = write_json(dir, "a.json", doc);
  CHECK_THROWS_AS(load_part_dataset(dir, file), ValidationError);
  const PartDataset ds = load_part_dataset(dir, file, {OverlapPolicy::Lenient});
  const PartSet& ps = ds[1].parts;
  REQUIRE(ps.n() == 2);
  CHECK(ps.parts[1].part_id == 14);
  CHECK(ps.parts[1].area == 4);
  CHECK(ds.report().clipped_parts.size() == 2);
  CHECK(ds.report().dropped_zero_area == std::vector<std::int64_t>{15});
}
