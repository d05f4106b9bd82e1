// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "occaug/annotation_store.hpp"
#include "occaug/augmenters.hpp"
#include "occaug/config.hpp"
#include "occaug/generative_backend.hpp"
#include "occaug/model.hpp"
#include "occaug/nn.hpp"
#include "occaug/occlusion.hpp"

namespace occaug {

// ---------------------------------------------------------------------------
// Loss

struct LossWeights {
  double alpha = 1.0;  // image term
  double beta = 0.5;   // mask term

  // Throws ValidationError on negative weights or alpha + beta == 0.
  void validate() const;
  bool operator==(const LossWeights&) const = default;
};

// -sum_k w_k log softmax(logits)_k. Weights must sum to 1.
double soft_cross_entropy(std::span<const double> logits, const LabelWeights& target);

struct LossResult {
  double loss = 0.0;
  double image_term = 0.0;  // mean image cross-entropy, unweighted
  double mask_term = 0.0;   // mean mask cross-entropy, unweighted; 0 for no masks
  Matrix grad_image_logits;
  Matrix grad_mask_logits;
};

// alpha * mean image CE + beta * mean mask CE. An empty mask batch
// contributes nothing.
double combined_loss(const Matrix& image_logits, std::span<const LabelWeights> image_targets,
                     const Matrix& mask_logits, std::span<const int> mask_labels,
                     const LossWeights& weights);
LossResult combined_loss_with_grad(const Matrix& image_logits,
                                   std::span<const LabelWeights> image_targets,
                                   const Matrix& mask_logits, std::span<const int> mask_labels,
                                   const LossWeights& weights);

// ---------------------------------------------------------------------------
// Configuration

struct TrainConfig {
  int batch_size = 64;
  double learning_rate = 1e-3;
  int epochs = 25;
  std::uint64_t seed = 0;
  std::optional<AugmentationKind> augmentation;  // nullopt = no augmentation
  LossWeights loss;
  std::string backbone = "pooled-mlp";
  bool fusion = false;
  int feature_dim = 64;
  int pool = 4;
  int projection_dim = 0;  // 0 means feature_dim
  int mask_grid = 8;
  int timestep = 100;
  std::string tap = "mid";

  void validate() const;
  KeyValues to_key_values() const;
  // Unknown keys are rejected.
  static TrainConfig from_key_values(const KeyValues& values, std::string_view source = "config");
  static const std::set<std::string, std::less<>>& keys();
  bool operator==(const TrainConfig&) const = default;
};

// "none" or an augmentation kind name.
std::string augmentation_name(const std::optional<AugmentationKind>& kind);
std::optional<AugmentationKind> parse_augmentation(std::string_view name);

// ---------------------------------------------------------------------------
// Training mixture

struct SourceImage {
  ImageId image_id = 0;
  int label = 0;
  std::string class_name;
  std::shared_ptr<const Image> image;
  std::shared_ptr<const OcclusionPlan> plan;
};

struct TrainingSample {
  ImageId image_id = 0;
  int label = 0;  // label of the source image
  bool augmented = false;
  std::shared_ptr<const Image> image;
  LabelWeights label_weights;
  std::shared_ptr<const BinaryMask> mask;  // composite mask; all-false for real samples
};

struct MixtureOptions {
  // Root of an AugmentCache; consulted first for every augmentation kind
  // except CutMix.
  std::optional<std::filesystem::path> cache_root;
  GenerativeBackend* backend = nullptr;  // needed for SDInpaint without cache
  int inpaint_steps = 0;                 // 0 uses the backend default
};

class TrainingMixture {
 public:
  TrainingMixture(std::vector<SourceImage> sources, LabelTable labels,
                  std::optional<AugmentationKind> kind, std::uint64_t seed,
                  const MixtureOptions& options = {});

  const LabelTable& labels() const { return labels_; }
  const std::optional<AugmentationKind>& kind() const { return kind_; }
  const std::vector<SourceImage>& sources() const { return sources_; }
  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  std::size_t epoch_size() const { return kind_ ? 2 * sources_.size() : sources_.size(); }

  // Every real image once and, with augmentation on, its augmented
  // counterpart once, in an order seeded by (seed, epoch).
  std::vector<TrainingSample> epoch(int epoch) const;

 private:
  TrainingSample real_sample(std::size_t i) const;
  TrainingSample augmented_sample(std::size_t i, int epoch) const;

  std::vector<SourceImage> sources_;
  LabelTable labels_;
  std::optional<AugmentationKind> kind_;
  std::uint64_t seed_;
  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<std::shared_ptr<const Image>> fixed_augmented_;  // all kinds but CutMix
  std::shared_ptr<const BinaryMask> empty_mask_;
};

TrainingMixture build_training_mixture(std::vector<SourceImage> sources, LabelTable labels,
                                       std::optional<AugmentationKind> kind, std::uint64_t seed,
                                       const MixtureOptions& options = {});

// Loads images from the store's paths and plans from plan_dir/<id>.plan.
// Throws ValidationError naming the first image without a plan.
TrainingMixture build_training_mixture(const PartDataset& store,
                                       std::optional<AugmentationKind> kind,
                                       const std::filesystem::path& plan_dir, std::uint64_t seed,
                                       const MixtureOptions& options = {});

// ---------------------------------------------------------------------------
// Training

struct EpochMetrics {
  int epoch = 0;
  double loss = 0.0;
  double top1 = 0.0;
  bool operator==(const EpochMetrics&) const = default;
};

struct RunCheckpoint {
  TrainConfig config;
  LabelTable labels;
  Model model;
  std::vector<EpochMetrics> metrics;
  std::string backend_version;  // fusion runs only

  // Directory with parameters.bin, config.txt, model.txt, labels.csv and
  // metrics.csv.
  void save(const std::filesystem::path& dir) const;
  static RunCheckpoint load(const std::filesystem::path& dir);
};

// Runs diffusion feature extraction with the null prompt and pools it.
std::vector<double> diffusion_features(GenerativeBackend& backend, const Image& image,
                                       int timestep, const std::string& tap);

using EpochCallback = std::function<void(const EpochMetrics&)>;

// Throws ValidationError on bad config, Error on a NaN loss (with epoch and
// step) and BackendError when the backend checksum changes during an epoch.
RunCheckpoint train(const TrainConfig& config, const TrainingMixture& mixture,
                    GenerativeBackend* backend, const EpochCallback& on_epoch = {});

// Index of the largest value, smallest index on ties.
int argmax(std::span<const double> values);

}  // namespace occaug
