// SPDX-License-Identifier: Apache-2.0
#include "occaug/occlusion.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "occaug/error.hpp"
#include "occaug/rng.hpp"

namespace occaug {

namespace {

// Exhaustive search used when parts overlap and the top-k reduction no
// longer holds. Visits subsets in lexicographic order so the first maximum
// found is the tie-break winner.
std::vector<std::size_t> best_subset_exhaustive(const std::vector<BinaryMask>& masks,
                                                std::size_t k) {
  const std::size_t n = masks.size();
  std::vector<std::size_t> idx(k);
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<std::size_t> best = idx;
  std::size_t best_area = 0;
  bool first = true;
  while (true) {
    BinaryMask u(masks[0].width(), masks[0].height());
    for (auto i : idx) u |= masks[i];
    if (first || u.popcount() > best_area) {
      best_area = u.popcount();
      best = idx;
      first = false;
    }
    std::size_t pos = k;
    while (pos > 0 && idx[pos - 1] == n - k + pos - 1) --pos;
    if (pos == 0) break;
    ++idx[pos - 1];
    for (std::size_t j = pos; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
  return best;
}

constexpr std::size_t kMaxExhaustiveParts = 16;

}  // namespace

OcclusionPlan select_part_combination(const PartSet& ps) {
  if (ps.parts.empty())
    throw ValidationError("image " + std::to_string(ps.image_id) + " has no parts to occlude");

  // Work in ascending part-id order so index order matches id order.
  std::vector<const PartAnnotation*> parts;
  for (const auto& p : ps.parts) parts.push_back(&p);
  std::sort(parts.begin(), parts.end(),
            [](const auto* a, const auto* b) { return a->part_id < b->part_id; });

  std::vector<BinaryMask> masks;
  std::size_t area_sum = 0;
  BinaryMask all(ps.width, ps.height);
  for (const auto* p : parts) {
    masks.push_back(rasterize_mask(*p, ps.width, ps.height));
    area_sum += masks.back().popcount();
    all |= masks.back();
  }
  const std::size_t k = parts_to_occlude(parts.size());

  std::vector<std::size_t> chosen;
  if (area_sum == all.popcount()) {
    // Disjoint parts: union area is the sum of areas, so the best subset is
    // the k largest parts, taking the smaller ids among equal areas.
    std::vector<std::size_t> order(parts.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return masks[a].popcount() > masks[b].popcount();
    });
    chosen.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  } else {
    if (parts.size() > kMaxExhaustiveParts)
      throw ValidationError("image " + std::to_string(ps.image_id) + " has " +
                            std::to_string(parts.size()) +
                            " overlapping parts; validate or load in lenient mode first");
    chosen = best_subset_exhaustive(masks, k);
  }
  std::sort(chosen.begin(), chosen.end());

  OcclusionPlan plan;
  plan.image_id = ps.image_id;
  plan.composite = BinaryMask(ps.width, ps.height);
  for (auto i : chosen) {
    plan.selected_part_ids.push_back(parts[i]->part_id);
    plan.composite |= masks[i];
  }
  plan.occluded_fraction = measured_information_loss(plan.composite);
  return plan;
}

BinaryMask compose_mask(const PartSet& ps, std::span<const std::int64_t> ids) {
  BinaryMask out(ps.width, ps.height);
  for (auto id : ids) {
    const PartAnnotation* part = ps.find(id);
    if (part == nullptr)
      throw ValidationError("image " + std::to_string(ps.image_id) + " has no part " +
                            std::to_string(id));
    out |= rasterize_mask(*part, ps.width, ps.height);
  }
  return out;
}

PatchGrid::PatchGrid(int width, int height, int patch_size)
    : width_(width), height_(height), patch_size_(patch_size) {
  if (width <= 0 || height <= 0) throw ValidationError("patch grid needs positive dimensions");
  if (patch_size <= 0 || patch_size > std::min(width, height))
    throw ValidationError("patch size " + std::to_string(patch_size) + " must be in [1, " +
                          std::to_string(std::min(width, height)) + "] for a " +
                          std::to_string(width) + "x" + std::to_string(height) + " image");
  columns_ = (width + patch_size - 1) / patch_size;
  rows_ = (height + patch_size - 1) / patch_size;
}

CellRect PatchGrid::cell(std::size_t index) const {
  const int row = static_cast<int>(index / columns_);
  const int col = static_cast<int>(index % columns_);
  const int x0 = col * patch_size_;
  const int y0 = row * patch_size_;
  return {x0, y0, std::min(x0 + patch_size_, width_), std::min(y0 + patch_size_, height_)};
}

std::size_t cells_for_target(std::size_t cell_count, double target_loss) {
  if (!(target_loss >= 0.0 && target_loss <= 100.0))
    throw ValidationError("information-loss target must be in [0, 100], got " +
                          std::to_string(target_loss));
  return static_cast<std::size_t>(std::llround(target_loss * static_cast<double>(cell_count) / 100.0));
}

BinaryMask simulate_patch_occlusion(int width, int height, double target_loss, std::uint64_t seed,
                                    int patch_size) {
  const PatchGrid grid(width, height, patch_size);
  const std::size_t cells = grid.cell_count();
  const std::size_t chosen = cells_for_target(cells, target_loss);

  // Partial Fisher-Yates: the first `chosen` slots are a uniform sample.
  std::vector<std::size_t> order(cells);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  for (std::size_t i = 0; i < chosen; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(cells - i));
    std::swap(order[i], order[j]);
  }
  BinaryMask mask(width, height);
  for (std::size_t i = 0; i < chosen; ++i) {
    const CellRect r = grid.cell(order[i]);
    mask.fill_rect(r.x0, r.y0, r.x1, r.y1);
  }
  return mask;
}

double measured_information_loss(const BinaryMask& mask) {
  if (mask.size() == 0) return 0.0;
  return static_cast<double>(mask.popcount()) / static_cast<double>(mask.size());
}

std::string format_plan(const OcclusionPlan& plan) {
  std::string ids;
  for (auto id : plan.selected_part_ids) ids += (ids.empty() ? "" : ",") + std::to_string(id);
  if (ids.empty()) ids = "-";
  const Rle rle = encode_rle(plan.composite);
  return std::to_string(plan.image_id) + " " + std::to_string(plan.composite.width()) + " " +
         std::to_string(plan.composite.height()) + " " + ids + " " +
         rle_counts_to_string(rle.counts);
}

OcclusionPlan parse_plan(std::string_view line) {
  std::istringstream in{std::string(line)};
  OcclusionPlan plan;
  Rle rle;
  std::string ids, counts;
  if (!(in >> plan.image_id >> rle.width >> rle.height >> ids >> counts))
    throw ParseError("malformed plan record '" + std::string(line) + "'");
  if (ids != "-") {
    std::istringstream id_in(ids);
    std::string tok;
    while (std::getline(id_in, tok, ',')) plan.selected_part_ids.push_back(std::stoll(tok));
  }
  rle.counts = rle_counts_from_string(counts);
  plan.composite = decode_rle(rle);
  plan.occluded_fraction = measured_information_loss(plan.composite);
  return plan;
}

std::filesystem::path plan_path(const std::filesystem::path& plan_dir, ImageId image_id) {
  return plan_dir / (std::to_string(image_id) + ".plan");
}

void write_plan_file(const std::filesystem::path& path, const OcclusionPlan& plan) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << format_plan(plan) << '\n';
  if (!out) throw IoError("cannot write plan " + path.string());
}

OcclusionPlan read_plan_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open plan " + path.string());
  std::string line;
  std::getline(in, line);
  return parse_plan(line);
}

}  // namespace occaug
