// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "occaug/generative_backend.hpp"
#include "occaug/nn.hpp"

namespace occaug {

using ClassifierFeatures = std::vector<double>;  // l_f
using FusedFeatures = std::vector<double>;       // l_a

struct FusionConfig {
  int classifier_dim = 0;  // d_f
  int diffusion_dim = 0;   // c, channels of the pooled diffusion map
  int projection_dim = 0;  // d_a; 0 means d_f
};

// Per-channel spatial mean.
std::vector<double> pool_features(const FeatureMap& map);

// l_a = P [l_f ; pooled l_d], P trainable, no bias. P starts as the
// truncated identity, so with d_a = d_f the diffusion branch starts switched
// off and the fused path reproduces the backbone-only head.
class FusionHead {
 public:
  FusionHead() = default;
  explicit FusionHead(const FusionConfig& config);

  const FusionConfig& config() const { return config_; }
  int input_dim() const { return config_.classifier_dim + config_.diffusion_dim; }
  int output_dim() const { return config_.projection_dim; }

  DenseLayer& projection() { return projection_; }
  const DenseLayer& projection() const { return projection_; }

  FusedFeatures fuse(std::span<const double> lf, std::span<const double> ld_pooled) const;

  // Accumulates dL/dP into grad.projection(); writes dL/dl_f into grad_lf
  // when it is non-empty. The diffusion input gets no gradient.
  void backward(std::span<const double> lf, std::span<const double> ld_pooled,
                std::span<const double> grad_la, FusionHead& grad, std::span<double> grad_lf) const;

  FusionHead zeros_like() const;

 private:
  std::vector<double> concat(std::span<const double> lf, std::span<const double> ld) const;

  FusionConfig config_;
  DenseLayer projection_;
};

// Affine map from l_a to class logits.
class ClassifierHead {
 public:
  ClassifierHead() = default;
  ClassifierHead(int input_dim, int num_classes) : layer_(input_dim, num_classes, true) {}

  int num_classes() const { return layer_.out(); }
  DenseLayer& layer() { return layer_; }
  const DenseLayer& layer() const { return layer_; }

  std::vector<double> classify(std::span<const double> la) const { return layer_.forward(la); }
  void backward(std::span<const double> la, std::span<const double> grad_logits,
                ClassifierHead& grad, std::span<double> grad_la) const {
    layer_.backward(la, grad_logits, grad.layer_, grad_la);
  }
  ClassifierHead zeros_like() const { return ClassifierHead(layer_.in(), layer_.out()); }

 private:
  DenseLayer layer_;
};

}  // namespace occaug
