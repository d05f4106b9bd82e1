// SPDX-License-Identifier: Apache-2.0
#pragma once

// COCO-style single-object part annotations.
//
// Expected JSON layout:
//   images:      [{id, file_name, width, height, category_id}]
//   annotations: [{id, image_id, segmentation}]   one entry per part
//   categories:  [{id, name}]                      object classes
//
// segmentation is either a polygon list [[x0,y0,x1,y1,...], ...] or an RLE
// object {"size":[h,w], "counts": [..] | "<coco string>"}. The annotation id is
// the part id. Class labels are assigned by ascending category id.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "occaug/mask.hpp"

namespace occaug {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

using Polygon = std::vector<Point>;

struct PolygonGeometry {
  std::vector<Polygon> polygons;
};

using Geometry = std::variant<PolygonGeometry, Rle>;

struct PartAnnotation {
  std::int64_t part_id = 0;
  Geometry geometry;
  std::int64_t area = 0;  // rasterized pixel count
};

struct PartSet {
  ImageId image_id = 0;
  int width = 0;
  int height = 0;
  std::vector<PartAnnotation> parts;

  std::size_t n() const { return parts.size(); }
  const PartAnnotation* find(std::int64_t part_id) const;
};

struct ImageRecord {
  ImageId image_id = 0;
  std::filesystem::path path;
  int class_label = 0;
  std::string class_name;
  int width = 0;
  int height = 0;
};

// Bijective class_label <-> class_name table.
class LabelTable {
 public:
  LabelTable() = default;
  explicit LabelTable(std::vector<std::string> names);

  int size() const { return static_cast<int>(names_.size()); }
  const std::string& name(int label) const { return names_.at(label); }
  std::optional<int> find(const std::string& name) const;
  const std::vector<std::string>& names() const { return names_; }

  // Two-column CSV: class_label,class_name
  void write_csv(const std::filesystem::path& path) const;
  static LabelTable read_csv(const std::filesystem::path& path);

  bool operator==(const LabelTable&) const = default;

 private:
  std::vector<std::string> names_;
};

// Rasterization keeps pixels whose center lies inside the geometry (even-odd
// rule per polygon, union across polygons). clipped_pixels counts inside
// pixels that fall outside the image.
struct RasterResult {
  BinaryMask mask;
  std::int64_t clipped_pixels = 0;
};

RasterResult rasterize_geometry(const Geometry& geometry, int width, int height);

// Throws ValidationError naming the clipped-pixel count when the geometry
// leaves the image.
BinaryMask rasterize_mask(const PartAnnotation& part, int width, int height);

// Builds a part with its cached area set from the rasterization.
PartAnnotation make_part(std::int64_t part_id, Geometry geometry, int width, int height);

struct OverlapViolation {
  std::int64_t part_a = 0;
  std::int64_t part_b = 0;
  std::int64_t overlap_count = 0;
};

struct OutOfBoundsPart {
  std::int64_t part_id = 0;
  std::int64_t clipped_pixels = 0;
};

struct AreaMismatch {
  std::int64_t part_id = 0;
  std::int64_t cached = 0;
  std::int64_t rasterized = 0;
};

struct ValidationReport {
  ImageId image_id = 0;
  std::vector<OverlapViolation> overlaps;
  std::vector<OutOfBoundsPart> out_of_bounds;
  std::vector<std::int64_t> zero_area;
  std::vector<AreaMismatch> area_mismatches;
  bool empty_partset = false;

  bool ok() const {
    return overlaps.empty() && out_of_bounds.empty() && zero_area.empty() &&
           area_mismatches.empty() && !empty_partset;
  }
  std::string describe() const;
};

ValidationReport validate_partset(const PartSet& ps);

enum class OverlapPolicy {
  Strict,   // overlaps, out-of-bounds and degenerate parts are load errors
  Lenient,  // contested pixels go to the lower part id; out-of-bounds pixels
            // are clipped; zero-area parts are dropped
};

struct LoadOptions {
  OverlapPolicy policy = OverlapPolicy::Strict;
};

struct LoadReport {
  std::size_t images_total = 0;
  std::size_t images_loaded = 0;
  std::vector<ImageId> skipped_no_parts;
  std::vector<OverlapViolation> resolved_overlaps;  // lenient mode only
  std::vector<OutOfBoundsPart> clipped_parts;       // lenient mode only
  std::vector<std::int64_t> dropped_zero_area;      // lenient mode only

  std::string describe() const;
};

struct PartEntry {
  ImageRecord image;
  PartSet parts;
};

// Immutable after construction; safe for concurrent reads.
class PartDataset {
 public:
  PartDataset(std::vector<PartEntry> entries, LabelTable labels, LoadReport report)
      : entries_(std::move(entries)), labels_(std::move(labels)), report_(std::move(report)) {}

  const std::vector<PartEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  const PartEntry& operator[](std::size_t i) const { return entries_[i]; }
  const LabelTable& labels() const { return labels_; }
  const LoadReport& report() const { return report_; }

 private:
  std::vector<PartEntry> entries_;
  LabelTable labels_;
  LoadReport report_;
};

// Entries are ordered by image id; parts within an entry by part id. Part
// geometry is stored as RLE. Throws ParseError (with byte offset) on
// malformed JSON and ValidationError on contract violations.
PartDataset load_part_dataset(const std::filesystem::path& root,
                              const std::filesystem::path& annotation_file,
                              const LoadOptions& options = {});

// Image records only (no part requirement), ordered by image id. Used for
// evaluation splits.
struct LabeledImages {
  std::vector<ImageRecord> images;
  LabelTable labels;
};

LabeledImages load_labeled_images(const std::filesystem::path& root,
                                  const std::filesystem::path& annotation_file);

}  // namespace occaug
