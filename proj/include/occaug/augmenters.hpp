// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "occaug/generative_backend.hpp"
#include "occaug/image.hpp"
#include "occaug/mask.hpp"
#include "occaug/occlusion.hpp"

namespace occaug {

enum class AugmentationKind { BlackOut, CutMix, ReplaceParts, SDInpaint };

// "blackout", "cutmix", "replace-parts", "sd-inpaint"
std::string_view kind_name(AugmentationKind kind);
AugmentationKind parse_kind(std::string_view name);

struct ClassWeight {
  int label = 0;
  double weight = 0.0;

  bool operator==(const ClassWeight&) const = default;
};

// Sparse per-class weights; entries are non-negative and sum to 1.
using LabelWeights = std::vector<ClassWeight>;

inline LabelWeights one_hot(int label) { return {{label, 1.0}}; }

// Exact mixing coefficient numerator / denominator.
struct MixRatio {
  std::int64_t numerator = 1;
  std::int64_t denominator = 1;

  double value() const { return static_cast<double>(numerator) / static_cast<double>(denominator); }
  bool operator==(const MixRatio&) const = default;
};

struct AugmentedSample {
  Image image;
  LabelWeights label_weights;
  std::optional<BinaryMask> source_mask;  // absent for CutMix
  std::optional<CellRect> pasted_rect;    // CutMix only
  std::optional<MixRatio> lambda;         // CutMix only: weight of the first label
  AugmentationKind kind = AugmentationKind::BlackOut;
};

// Masked pixels set to 0 in every channel. This is the single masking path:
// evaluation-time patch occlusion uses it too.
Image black_out_pixels(const Image& image, const BinaryMask& mask);

AugmentedSample black_out(const Image& image, const BinaryMask& mask, int label);

// Masked pixels copied from the donor at the same coordinates. The donor
// must already match the image's shape.
AugmentedSample replace_parts(const Image& image, const BinaryMask& mask, const Image& donor,
                              int label);

// CutMix rectangle: lambda ~ Beta(1,1), a box of area ratio 1 - lambda
// centred uniformly at random and clipped to the image.
CellRect sample_cutmix_rect(int width, int height, std::uint64_t seed);

// lambda = 1 - area(rect) / (W * H), exact.
MixRatio cutmix_lambda(const CellRect& rect, int width, int height);

AugmentedSample cutmix_with_rect(const Image& image_a, int label_a, const Image& image_b,
                                 int label_b, const CellRect& rect);
AugmentedSample cutmix(const Image& image_a, int label_a, const Image& image_b, int label_b,
                       std::uint64_t seed);

// "A class of <class_name>"
std::string inpaint_prompt(std::string_view class_name);

// Inpaints the plan's composite region. An empty mask returns the image
// without calling the backend. Backend errors are rethrown with the image id.
AugmentedSample inpaint_augment(const Image& image, const OcclusionPlan& plan,
                                std::string_view class_name, int label,
                                GenerativeBackend& backend, std::uint64_t seed, int steps = 0);

// On-disk cache of augmented images:
//   <root>/<method>/<image_id>.ppm
//   <root>/<method>/manifest.csv   (image_id,kind,seed,mask_file,prompt)
// The manifest's first line is "# status=complete" or "# status=incomplete".
// Per-image seed shared by the augment command and the training mixture.
std::uint64_t augmentation_seed(std::uint64_t seed, ImageId image_id);

// ReplaceParts donor for entry `index` of `count`: a seeded pick among the
// other entries, or `index` itself when it is the only one.
std::size_t donor_index(std::size_t count, std::size_t index, std::uint64_t seed);

struct ManifestRow {
  ImageId image_id = 0;
  std::string kind;
  std::uint64_t seed = 0;
  std::string mask_file;
  std::string prompt;

  bool operator==(const ManifestRow&) const = default;
};

struct Manifest {
  bool complete = false;
  std::vector<ManifestRow> rows;
};

class AugmentCache {
 public:
  AugmentCache(std::filesystem::path root, AugmentationKind kind);

  std::filesystem::path method_dir() const;
  std::filesystem::path image_path(ImageId image_id) const;
  bool contains(ImageId image_id) const;
  std::optional<Image> load(ImageId image_id) const;
  void store(ImageId image_id, const Image& image) const;

  Manifest read_manifest() const;
  void write_manifest(const Manifest& manifest) const;

 private:
  std::filesystem::path root_;
  AugmentationKind kind_;
};

}  // namespace occaug
