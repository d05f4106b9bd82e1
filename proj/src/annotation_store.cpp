// SPDX-License-Identifier: Apache-2.0
#include "occaug/annotation_store.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include <json.hpp>

#include "occaug/error.hpp"

namespace occaug {

using nlohmann::json;

const PartAnnotation* PartSet::find(std::int64_t part_id) const {
  for (const auto& p : parts)
    if (p.part_id == part_id) return &p;
  return nullptr;
}

LabelTable::LabelTable(std::vector<std::string> names) : names_(std::move(names)) {
  std::vector<std::string> sorted = names_;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw ValidationError("label table has duplicate class names");
}

std::optional<int> LabelTable::find(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return static_cast<int>(i);
  return std::nullopt;
}

void LabelTable::write_csv(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  out << "class_label,class_name\n";
  for (std::size_t i = 0; i < names_.size(); ++i) out << i << ',' << names_[i] << '\n';
  if (!out) throw IoError("cannot write label table " + path.string());
}

LabelTable LabelTable::read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open label table " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "class_label,class_name")
    throw ParseError(path.string() + ": unexpected label table header '" + line + "'");
  std::vector<std::string> names;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw ParseError(path.string() + ": malformed row '" + line + "'");
    if (std::stoi(line.substr(0, comma)) != static_cast<int>(names.size()))
      throw ParseError(path.string() + ": labels must be dense and ascending");
    names.push_back(line.substr(comma + 1));
  }
  return LabelTable(std::move(names));
}

namespace {

// Even-odd fill of one polygon into a local grid covering [gx0, gx0+gw) x [gy0, gy0+gh).
void fill_polygon(const Polygon& poly, int gx0, int gy0, int gw, int gh,
                  std::vector<std::uint8_t>& grid) {
  if (poly.size() < 3) return;
  std::vector<double> crossings;
  for (int row = 0; row < gh; ++row) {
    const double yc = gy0 + row + 0.5;
    crossings.clear();
    for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
      const Point& a = poly[i];
      const Point& b = poly[j];
      if ((a.y > yc) != (b.y > yc))
        crossings.push_back(a.x + (yc - a.y) * (b.x - a.x) / (b.y - a.y));
    }
    std::sort(crossings.begin(), crossings.end());
    for (std::size_t k = 0; k + 1 < crossings.size(); k += 2) {
      // pixel centers x + 0.5 in [c0, c1)
      const long long xs = static_cast<long long>(std::ceil(crossings[k] - 0.5)) - gx0;
      const long long xe = static_cast<long long>(std::ceil(crossings[k + 1] - 0.5)) - gx0;
      for (long long x = std::max(0LL, xs); x < std::min<long long>(gw, xe); ++x)
        grid[static_cast<std::size_t>(row) * gw + x] = 1;
    }
  }
}

RasterResult rasterize_polygons(const PolygonGeometry& geo, int width, int height) {
  RasterResult result{BinaryMask(width, height), 0};
  double minx = INFINITY, miny = INFINITY, maxx = -INFINITY, maxy = -INFINITY;
  for (const auto& poly : geo.polygons) {
    if (poly.size() < 3) continue;
    for (const auto& p : poly) {
      if (!std::isfinite(p.x) || !std::isfinite(p.y))
        throw ValidationError("polygon has a non-finite vertex");
      minx = std::min(minx, p.x);
      maxx = std::max(maxx, p.x);
      miny = std::min(miny, p.y);
      maxy = std::max(maxy, p.y);
    }
  }
  if (!std::isfinite(minx)) return result;
  const int gx0 = static_cast<int>(std::floor(minx));
  const int gy0 = static_cast<int>(std::floor(miny));
  const int gw = static_cast<int>(std::ceil(maxx)) - gx0;
  const int gh = static_cast<int>(std::ceil(maxy)) - gy0;
  if (gw <= 0 || gh <= 0) return result;
  std::vector<std::uint8_t> grid(static_cast<std::size_t>(gw) * gh, 0);
  for (const auto& poly : geo.polygons) {
    // Union across polygons: fill each into its own layer, then OR.
    std::vector<std::uint8_t> layer(grid.size(), 0);
    fill_polygon(poly, gx0, gy0, gw, gh, layer);
    for (std::size_t i = 0; i < grid.size(); ++i) grid[i] |= layer[i];
  }
  std::vector<std::uint8_t> bits(static_cast<std::size_t>(width) * height, 0);
  for (int row = 0; row < gh; ++row)
    for (int col = 0; col < gw; ++col) {
      if (!grid[static_cast<std::size_t>(row) * gw + col]) continue;
      const int x = gx0 + col;
      const int y = gy0 + row;
      if (x < 0 || y < 0 || x >= width || y >= height) {
        ++result.clipped_pixels;
      } else {
        bits[static_cast<std::size_t>(y) * width + x] = 1;
      }
    }
  result.mask = BinaryMask(width, height, std::move(bits));
  return result;
}

}  // namespace

RasterResult rasterize_geometry(const Geometry& geometry, int width, int height) {
  if (const auto* rle = std::get_if<Rle>(&geometry)) {
    if (rle->width != width || rle->height != height)
      throw ValidationError("RLE size " + std::to_string(rle->width) + "x" +
                            std::to_string(rle->height) + " does not match image " +
                            std::to_string(width) + "x" + std::to_string(height));
    return {decode_rle(*rle), 0};
  }
  return rasterize_polygons(std::get<PolygonGeometry>(geometry), width, height);
}

BinaryMask rasterize_mask(const PartAnnotation& part, int width, int height) {
  RasterResult r = rasterize_geometry(part.geometry, width, height);
  if (r.clipped_pixels > 0)
    throw ValidationError("part " + std::to_string(part.part_id) + " extends outside the " +
                          std::to_string(width) + "x" + std::to_string(height) + " image: " +
                          std::to_string(r.clipped_pixels) + " pixels clipped");
  return std::move(r.mask);
}

PartAnnotation make_part(std::int64_t part_id, Geometry geometry, int width, int height) {
  const RasterResult r = rasterize_geometry(geometry, width, height);
  return PartAnnotation{part_id, std::move(geometry), static_cast<std::int64_t>(r.mask.popcount())};
}

std::string ValidationReport::describe() const {
  std::ostringstream out;
  out << "image " << image_id << ":";
  if (ok()) out << " ok";
  if (empty_partset) out << " no parts;";
  for (const auto& o : overlaps)
    out << " parts " << o.part_a << "/" << o.part_b << " overlap in " << o.overlap_count << " px;";
  for (const auto& b : out_of_bounds)
    out << " part " << b.part_id << " has " << b.clipped_pixels << " px out of bounds;";
  for (auto id : zero_area) out << " part " << id << " has zero area;";
  for (const auto& m : area_mismatches)
    out << " part " << m.part_id << " cached area " << m.cached << " != rasterized "
        << m.rasterized << ";";
  return out.str();
}

ValidationReport validate_partset(const PartSet& ps) {
  ValidationReport report;
  report.image_id = ps.image_id;
  report.empty_partset = ps.parts.empty();
  std::vector<BinaryMask> masks;
  masks.reserve(ps.parts.size());
  for (const auto& part : ps.parts) {
    RasterResult r = rasterize_geometry(part.geometry, ps.width, ps.height);
    if (r.clipped_pixels > 0) report.out_of_bounds.push_back({part.part_id, r.clipped_pixels});
    const auto area = static_cast<std::int64_t>(r.mask.popcount());
    if (area == 0) report.zero_area.push_back(part.part_id);
    if (area != part.area) report.area_mismatches.push_back({part.part_id, part.area, area});
    masks.push_back(std::move(r.mask));
  }
  for (std::size_t i = 0; i < masks.size(); ++i)
    for (std::size_t j = i + 1; j < masks.size(); ++j) {
      const auto overlap = static_cast<std::int64_t>(masks[i].intersection_count(masks[j]));
      if (overlap > 0)
        report.overlaps.push_back({ps.parts[i].part_id, ps.parts[j].part_id, overlap});
    }
  return report;
}

std::string LoadReport::describe() const {
  std::ostringstream out;
  out << "images: " << images_total << " total, " << images_loaded << " loaded, "
      << skipped_no_parts.size() << " skipped (no parts)";
  if (!resolved_overlaps.empty())
    out << "; " << resolved_overlaps.size() << " overlaps resolved to the lower part id";
  if (!clipped_parts.empty()) out << "; " << clipped_parts.size() << " parts clipped to bounds";
  if (!dropped_zero_area.empty())
    out << "; " << dropped_zero_area.size() << " zero-area parts dropped";
  return out.str();
}

namespace {

json parse_json_file(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open annotation file " + file.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(file.string() + ": malformed JSON at byte offset " + std::to_string(e.byte) +
                     ": " + e.what());
  }
}

const json& require_array(const json& doc, const char* key, const std::filesystem::path& file) {
  if (!doc.is_object() || !doc.contains(key) || !doc[key].is_array())
    throw ValidationError(file.string() + ": missing '" + key + "' array");
  return doc[key];
}

template <typename T>
T field(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) throw ValidationError(where + ": missing field '" + key + "'");
  try {
    return obj[key].get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(where + ": bad field '" + key + "': " + e.what());
  }
}

Geometry parse_segmentation(const json& seg, const std::string& where) {
  if (seg.is_array()) {
    PolygonGeometry geo;
    for (const auto& flat : seg) {
      if (!flat.is_array() || flat.size() % 2 != 0)
        throw ValidationError(where + ": polygon must be a flat [x0,y0,x1,y1,...] list");
      Polygon poly;
      for (std::size_t i = 0; i < flat.size(); i += 2)
        poly.push_back({flat[i].get<double>(), flat[i + 1].get<double>()});
      geo.polygons.push_back(std::move(poly));
    }
    return geo;
  }
  if (seg.is_object()) {
    const auto size = field<std::vector<int>>(seg, "size", where);
    if (size.size() != 2) throw ValidationError(where + ": RLE size must be [height, width]");
    Rle rle{size[1], size[0], {}};
    const json& counts = seg.at("counts");
    if (counts.is_string()) {
      rle.counts = rle_counts_from_string(counts.get<std::string>());
    } else {
      rle.counts = counts.get<std::vector<std::uint32_t>>();
    }
    return rle;
  }
  throw ValidationError(where + ": segmentation must be a polygon list or an RLE object");
}

struct RawImages {
  std::map<ImageId, ImageRecord> by_id;
  LabelTable labels;
};

RawImages parse_images(const json& doc, const std::filesystem::path& root,
                       const std::filesystem::path& file) {
  const json& categories = require_array(doc, "categories", file);
  std::map<std::int64_t, std::string> cats;
  for (const auto& c : categories) {
    const std::string where = file.string() + " category";
    cats[field<std::int64_t>(c, "id", where)] = field<std::string>(c, "name", where);
  }
  std::vector<std::string> names;
  std::map<std::int64_t, int> cat_to_label;
  for (const auto& [id, name] : cats) {
    cat_to_label[id] = static_cast<int>(names.size());
    names.push_back(name);
  }
  RawImages raw{{}, LabelTable(names)};
  for (const auto& img : require_array(doc, "images", file)) {
    ImageRecord rec;
    rec.image_id = field<ImageId>(img, "id", file.string() + " image");
    const std::string where = file.string() + " image " + std::to_string(rec.image_id);
    rec.path = root / field<std::string>(img, "file_name", where);
    rec.width = field<int>(img, "width", where);
    rec.height = field<int>(img, "height", where);
    if (rec.width <= 0 || rec.height <= 0)
      throw ValidationError(where + ": width and height must be positive");
    const auto cat = field<std::int64_t>(img, "category_id", where);
    const auto it = cat_to_label.find(cat);
    if (it == cat_to_label.end())
      throw ValidationError(where + ": unknown category_id " + std::to_string(cat));
    rec.class_label = it->second;
    rec.class_name = names[static_cast<std::size_t>(it->second)];
    if (!raw.by_id.emplace(rec.image_id, rec).second)
      throw ValidationError(where + ": duplicate image id");
  }
  return raw;
}

// Resolves overlaps, bounds and degenerate parts for one image according to
// the policy. Returns the parts with RLE geometry.
std::vector<PartAnnotation> finalize_parts(std::vector<std::pair<std::int64_t, Geometry>> raw,
                                           const ImageRecord& img, const LoadOptions& options,
                                           LoadReport& report,
                                           std::vector<ValidationReport>& failures) {
  std::sort(raw.begin(), raw.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  const bool lenient = options.policy == OverlapPolicy::Lenient;
  ValidationReport vr;
  vr.image_id = img.image_id;

  std::vector<std::pair<std::int64_t, BinaryMask>> masks;
  for (auto& [id, geo] : raw) {
    RasterResult r = rasterize_geometry(geo, img.width, img.height);
    if (r.clipped_pixels > 0) {
      if (lenient) {
        report.clipped_parts.push_back({id, r.clipped_pixels});
      } else {
        vr.out_of_bounds.push_back({id, r.clipped_pixels});
      }
    }
    masks.emplace_back(id, std::move(r.mask));
  }

  if (lenient) {
    BinaryMask claimed(img.width, img.height);
    for (auto& [id, mask] : masks) {
      for (const auto& [lower_id, lower] : masks) {
        if (lower_id >= id) break;
        const auto overlap = static_cast<std::int64_t>(mask.intersection_count(lower));
        if (overlap > 0) report.resolved_overlaps.push_back({lower_id, id, overlap});
      }
      // lower masks are already trimmed, so each contested pixel is counted
      // once, against the part that kept it.
      mask.subtract(claimed);
      claimed |= mask;
    }
  } else {
    for (std::size_t i = 0; i < masks.size(); ++i)
      for (std::size_t j = i + 1; j < masks.size(); ++j) {
        const auto overlap =
            static_cast<std::int64_t>(masks[i].second.intersection_count(masks[j].second));
        if (overlap > 0) vr.overlaps.push_back({masks[i].first, masks[j].first, overlap});
      }
  }

  std::vector<PartAnnotation> parts;
  for (auto& [id, mask] : masks) {
    if (mask.popcount() == 0) {
      if (lenient) {
        report.dropped_zero_area.push_back(id);
      } else {
        vr.zero_area.push_back(id);
      }
      continue;
    }
    const auto area = static_cast<std::int64_t>(mask.popcount());
    parts.push_back({id, encode_rle(mask), area});
  }
  if (!vr.ok()) failures.push_back(std::move(vr));
  return parts;
}

}  // namespace

PartDataset load_part_dataset(const std::filesystem::path& root,
                              const std::filesystem::path& annotation_file,
                              const LoadOptions& options) {
  const json doc = parse_json_file(annotation_file);
  RawImages raw = parse_images(doc, root, annotation_file);

  std::map<ImageId, std::vector<std::pair<std::int64_t, Geometry>>> by_image;
  std::vector<std::int64_t> unknown;
  for (const auto& ann : require_array(doc, "annotations", annotation_file)) {
    const auto part_id = field<std::int64_t>(ann, "id", annotation_file.string() + " annotation");
    const std::string where = annotation_file.string() + " annotation " + std::to_string(part_id);
    const auto image_id = field<ImageId>(ann, "image_id", where);
    if (!raw.by_id.count(image_id)) {
      unknown.push_back(image_id);
      continue;
    }
    if (!ann.contains("segmentation"))
      throw ValidationError(where + ": missing field 'segmentation'");
    by_image[image_id].emplace_back(part_id, parse_segmentation(ann["segmentation"], where));
  }
  if (!unknown.empty()) {
    std::sort(unknown.begin(), unknown.end());
    unknown.erase(std::unique(unknown.begin(), unknown.end()), unknown.end());
    std::string ids;
    for (auto id : unknown) ids += (ids.empty() ? "" : ", ") + std::to_string(id);
    throw ValidationError(annotation_file.string() +
                          ": annotations reference unknown image ids: " + ids);
  }

  LoadReport report;
  report.images_total = raw.by_id.size();
  std::vector<PartEntry> entries;
  std::vector<ValidationReport> failures;
  for (auto& [id, img] : raw.by_id) {
    auto it = by_image.find(id);
    if (it == by_image.end() || it->second.empty()) {
      report.skipped_no_parts.push_back(id);
      continue;
    }
    std::vector<PartAnnotation> parts =
        finalize_parts(std::move(it->second), img, options, report, failures);
    if (parts.empty()) {
      report.skipped_no_parts.push_back(id);
      continue;
    }
    entries.push_back({img, PartSet{id, img.width, img.height, std::move(parts)}});
  }
  if (!failures.empty()) {
    std::string msg = annotation_file.string() + ": " + std::to_string(failures.size()) +
                      " image(s) failed strict validation:";
    for (std::size_t i = 0; i < failures.size() && i < 10; ++i)
      msg += "\n  " + failures[i].describe();
    if (failures.size() > 10) msg += "\n  ...";
    throw ValidationError(msg);
  }
  report.images_loaded = entries.size();
  return PartDataset(std::move(entries), std::move(raw.labels), std::move(report));
}

LabeledImages load_labeled_images(const std::filesystem::path& root,
                                  const std::filesystem::path& annotation_file) {
  const json doc = parse_json_file(annotation_file);
  RawImages raw = parse_images(doc, root, annotation_file);
  LabeledImages out{{}, std::move(raw.labels)};
  for (auto& [id, img] : raw.by_id) out.images.push_back(std::move(img));
  return out;
}

}  // namespace occaug
