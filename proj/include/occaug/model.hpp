// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "occaug/fusion_head.hpp"
#include "occaug/image.hpp"
#include "occaug/mask.hpp"
#include "occaug/nn.hpp"

namespace occaug {

struct ModelSpec {
  std::string backbone = "pooled-mlp";
  int width = 64;
  int height = 64;
  int channels = 3;
  int num_classes = 0;
  int feature_dim = 64;  // d_f
  int pool = 4;
  bool fusion = false;
  int diffusion_dim = 0;   // pooled l_d size, fusion only
  int projection_dim = 0;  // d_a, fusion only; 0 means d_f
  int mask_grid = 8;

  void validate() const;
  bool operator==(const ModelSpec&) const = default;
};

// Whatever a backbone needs to run its backward pass.
using BackboneTrace = std::vector<std::vector<double>>;

// Pluggable feature extractor exposing penultimate features l_f.
class Backbone {
 public:
  virtual ~Backbone() = default;

  virtual std::string id() const = 0;
  virtual int feature_dim() const = 0;
  virtual std::vector<double> features(const Image& image, BackboneTrace* trace) const = 0;
  // Accumulates parameter gradients into `grad` (from zeros_like()).
  virtual void backward(const BackboneTrace& trace, std::span<const double> grad_features,
                        Backbone& grad) const = 0;
  virtual std::vector<std::span<double>> parameters() = 0;
  virtual std::vector<std::span<const double>> parameters() const = 0;
  virtual std::unique_ptr<Backbone> clone() const = 0;
  virtual std::unique_ptr<Backbone> zeros_like() const = 0;
};

// Average-pools the image by `pool`, scales to [0,1], then one ReLU layer.
class PooledMlpBackbone final : public Backbone {
 public:
  PooledMlpBackbone(int width, int height, int channels, int pool, int feature_dim);

  void init(std::uint64_t seed);
  std::vector<double> pooled_input(const Image& image) const;

  std::string id() const override { return "pooled-mlp"; }
  int feature_dim() const override { return layer_.out(); }
  std::vector<double> features(const Image& image, BackboneTrace* trace) const override;
  void backward(const BackboneTrace& trace, std::span<const double> grad_features,
                Backbone& grad) const override;
  std::vector<std::span<double>> parameters() override { return layer_.parameters(); }
  std::vector<std::span<const double>> parameters() const override {
    return layer_.parameters();
  }
  std::unique_ptr<Backbone> clone() const override;
  std::unique_ptr<Backbone> zeros_like() const override;

 private:
  int width_;
  int height_;
  int channels_;
  int pool_;
  DenseLayer layer_;
};

// Known ids: "pooled-mlp". Throws ValidationError otherwise.
std::unique_ptr<Backbone> make_backbone(const ModelSpec& spec, std::uint64_t seed);

// Separate lightweight classifier for the mask term: the mask is rendered as
// a single-channel image, average-pooled to grid x grid, then an affine map
// to class logits. Zero-initialized.
class MaskBranch {
 public:
  MaskBranch() = default;
  MaskBranch(int width, int height, int grid, int num_classes);

  int width() const { return width_; }
  int height() const { return height_; }
  int grid() const { return grid_; }
  DenseLayer& layer() { return layer_; }
  const DenseLayer& layer() const { return layer_; }

  std::vector<double> pooled(const BinaryMask& mask) const;
  MaskBranch zeros_like() const { return MaskBranch(width_, height_, grid_, layer_.out()); }

 private:
  int width_ = 0;
  int height_ = 0;
  int grid_ = 0;
  DenseLayer layer_;
};

// Throws ValidationError when the mask size differs from the branch input.
std::vector<double> classify_mask_branch(const BinaryMask& mask, const MaskBranch& branch);

class Model {
 public:
  struct Trace {
    BackboneTrace backbone;
    std::vector<double> lf;
    std::vector<double> ld;
    std::vector<double> la;
  };

  Model() = default;
  Model(const ModelSpec& spec, std::uint64_t seed);
  Model(const Model& other);
  Model& operator=(const Model& other);
  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;

  const ModelSpec& spec() const { return spec_; }
  Backbone& backbone() { return *backbone_; }
  const Backbone& backbone() const { return *backbone_; }
  FusionHead* fusion() { return fusion_ ? &*fusion_ : nullptr; }
  const FusionHead* fusion() const { return fusion_ ? &*fusion_ : nullptr; }
  ClassifierHead& head() { return head_; }
  const ClassifierHead& head() const { return head_; }
  MaskBranch& mask_branch() { return mask_branch_; }
  const MaskBranch& mask_branch() const { return mask_branch_; }

  // ld_pooled must be empty without fusion and diffusion_dim long with it.
  std::vector<double> image_logits(const Image& image, std::span<const double> ld_pooled,
                                   Trace* trace = nullptr) const;
  void backward_image(const Trace& trace, std::span<const double> grad_logits, Model& grad) const;

  std::vector<double> mask_logits(const BinaryMask& mask) const {
    return classify_mask_branch(mask, mask_branch_);
  }
  void backward_mask(const BinaryMask& mask, std::span<const double> grad_logits,
                     Model& grad) const;

  Model zeros_like() const;

  // Fixed order: backbone, fusion projection, head, mask branch.
  std::vector<std::span<double>> parameters();
  std::vector<std::span<const double>> parameters() const;

  // params -= lr * grad.params
  void sgd_step(const Model& grad, double learning_rate);

 private:
  ModelSpec spec_;
  std::unique_ptr<Backbone> backbone_;
  std::optional<FusionHead> fusion_;
  ClassifierHead head_;
  MaskBranch mask_branch_;
};

}  // namespace occaug
