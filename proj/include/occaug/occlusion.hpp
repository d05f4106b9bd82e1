// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "occaug/annotation_store.hpp"
#include "occaug/mask.hpp"

namespace occaug {

// Training-time occlusion: the subset of parts whose union is largest among
// all subsets of ceil(n/2) parts.
struct OcclusionPlan {
  ImageId image_id = 0;
  std::vector<std::int64_t> selected_part_ids;  // ascending
  BinaryMask composite;
  double occluded_fraction = 0.0;

  bool operator==(const OcclusionPlan&) const = default;
};

constexpr std::size_t parts_to_occlude(std::size_t n) { return (n + 1) / 2; }

// Ties on union area go to the lexicographically smallest sorted id tuple.
OcclusionPlan select_part_combination(const PartSet& ps);

// Bitwise OR of the selected parts. Throws ValidationError on unknown ids.
BinaryMask compose_mask(const PartSet& ps, std::span<const std::int64_t> ids);

struct CellRect {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;  // exclusive
  int y1 = 0;  // exclusive

  int area() const { return (x1 - x0) * (y1 - y0); }
  bool operator==(const CellRect&) const = default;
};

// Grid of patch_size cells anchored at (0,0); cells on the right and bottom
// edges may be smaller.
class PatchGrid {
 public:
  PatchGrid(int width, int height, int patch_size);

  int columns() const { return columns_; }
  int rows() const { return rows_; }
  std::size_t cell_count() const { return static_cast<std::size_t>(columns_) * rows_; }
  CellRect cell(std::size_t index) const;

 private:
  int width_;
  int height_;
  int patch_size_;
  int columns_;
  int rows_;
};

// Number of grid cells blacked out for a target loss in percent.
std::size_t cells_for_target(std::size_t cell_count, double target_loss);

// Evaluation-time occlusion: round(target/100 * cells) distinct cells chosen
// uniformly at random (seeded). Throws ValidationError for target outside
// [0, 100] or patch_size outside [1, min(width, height)].
BinaryMask simulate_patch_occlusion(int width, int height, double target_loss, std::uint64_t seed,
                                    int patch_size = 16);

double measured_information_loss(const BinaryMask& mask);

// Plan files hold one text record:
//   <image_id> <width> <height> <id,id,...> <rle-string>
std::string format_plan(const OcclusionPlan& plan);
OcclusionPlan parse_plan(std::string_view line);
void write_plan_file(const std::filesystem::path& path, const OcclusionPlan& plan);
OcclusionPlan read_plan_file(const std::filesystem::path& path);
std::filesystem::path plan_path(const std::filesystem::path& plan_dir, ImageId image_id);

}  // namespace occaug
