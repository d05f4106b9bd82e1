// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "occaug/generative_backend.hpp"
#include "occaug/image.hpp"
#include "occaug/mask.hpp"
#include "occaug/nn.hpp"
#include "occaug/training.hpp"

namespace occaug {

// Report columns, in percent.
inline const std::vector<int>& standard_loss_levels() {
  static const std::vector<int> levels{0, 20, 40, 60, 80};
  return levels;
}

// Fraction of rows whose label is among the k largest logits. Ties are
// broken toward the smaller class index; k is clamped to the class count.
// Throws ValidationError for k < 1 or a label out of range.
double top_k_accuracy(const Matrix& logits, std::span<const int> labels, int k);
bool in_top_k(std::span<const double> logits, int label, int k);

struct EvalConfig {
  std::vector<int> levels = standard_loss_levels();
  std::uint64_t seed = 0;
  int patch_size = 16;
  // Keep only these class names (intersected with the checkpoint labels).
  std::optional<std::vector<std::string>> class_subset;
  // Drop images whose class the checkpoint does not know instead of failing.
  bool intersect_classes = false;
  bool fusion = false;                   // must match the checkpoint
  GenerativeBackend* backend = nullptr;  // required when fusion is on
  int threads = 0;                       // 0: hardware concurrency
  int top_k = 5;

  void validate() const;
};

struct EvalImage {
  ImageId image_id = 0;
  std::string class_name;
  std::shared_ptr<const Image> image;
};

// Mask for one image at one level; identical for every method evaluated
// with the same seed.
std::uint64_t eval_mask_seed(std::uint64_t seed, ImageId image_id, int level);
BinaryMask eval_mask(const EvalConfig& config, ImageId image_id, int level, int width, int height);

struct AccuracyCell {
  int level = 0;
  double top1 = 0.0;
  double top5 = 0.0;
  double measured_loss = 0.0;  // mean blacked-out fraction, 0..1
  bool operator==(const AccuracyCell&) const = default;
};

struct AccuracyRow {
  std::string method;
  std::string arch;
  std::vector<AccuracyCell> cells;  // in level order
  const AccuracyCell* at_level(int level) const;
  bool operator==(const AccuracyRow&) const = default;
};

class AccuracyTable {
 public:
  AccuracyTable() : levels_(standard_loss_levels()) {}
  explicit AccuracyTable(std::vector<int> levels);

  const std::vector<int>& levels() const { return levels_; }
  const std::vector<AccuracyRow>& rows() const { return rows_; }
  // Throws ValidationError if the row's levels differ from the table's or a
  // cell breaks 0 <= top1 <= top5 <= 1.
  void add_row(AccuracyRow row);
  bool operator==(const AccuracyTable&) const = default;

 private:
  std::vector<int> levels_;
  std::vector<AccuracyRow> rows_;
};

// Classifies images with a checkpoint, running the backend for the fused
// path when the model has one. Thread-safe if the backend is.
class Predictor {
 public:
  Predictor(const RunCheckpoint& checkpoint, GenerativeBackend* backend);
  std::vector<double> logits(const Image& image) const;
  const RunCheckpoint& checkpoint() const { return checkpoint_; }

 private:
  const RunCheckpoint& checkpoint_;
  GenerativeBackend* backend_;
};

AccuracyRow evaluate_under_occlusion(const RunCheckpoint& checkpoint,
                                     std::span<const EvalImage> images, const EvalConfig& config,
                                     const std::string& method, const std::string& arch);

struct FolderResult {
  double top1 = 0.0;
  double top5 = 0.0;
  std::size_t images = 0;
  std::vector<std::string> skipped_classes;  // folder names outside the label table
};

// Layout: folder/<class_name>/<image>.ppm|.pgm. Images are resized (nearest)
// to the model input. Throws ValidationError when nothing can be scored.
FolderResult evaluate_real_folder(const RunCheckpoint& checkpoint,
                                  const std::filesystem::path& folder,
                                  GenerativeBackend* backend = nullptr, int top_k = 5);

// Reports. CSV columns: method,arch,level,top1,top5,measured_loss.
std::string format_csv(const AccuracyTable& table);
AccuracyTable parse_csv(std::string_view text);
std::string format_markdown(const AccuracyTable& table);
std::string format_svg_plot(const AccuracyTable& table);

struct ReportFiles {
  std::filesystem::path csv;
  std::filesystem::path markdown;
  std::filesystem::path plot;
};
// Writes <dir>/<stem>.csv, .md and, when plot is set, .svg. Throws
// ValidationError on an empty table and IoError on write failure.
ReportFiles emit_report(const AccuracyTable& table, const std::filesystem::path& dir,
                        const std::string& stem = "accuracy", bool plot = true);

}  // namespace occaug
