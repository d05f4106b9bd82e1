// SPDX-License-Identifier: Apache-2.0
#include "occaug/fusion_head.hpp"

#include <algorithm>
#include <string>

#include "occaug/error.hpp"
#include "occaug/kernels.hpp"

namespace occaug {

std::vector<double> pool_features(const FeatureMap& map) {
  const std::size_t plane = static_cast<std::size_t>(map.height) * map.width;
  if (map.values.size() != plane * static_cast<std::size_t>(map.channels))
    throw ValidationError("feature map has " + std::to_string(map.values.size()) +
                          " values, expected " + std::to_string(plane * map.channels));
  std::vector<double> out(static_cast<std::size_t>(map.channels), 0.0);
  if (plane == 0) return out;
  for (int c = 0; c < map.channels; ++c)
    out[static_cast<std::size_t>(c)] =
        kernels::sum_f64({map.values.data() + c * plane, plane}) / static_cast<double>(plane);
  return out;
}

FusionHead::FusionHead(const FusionConfig& config) : config_(config) {
  if (config_.projection_dim == 0) config_.projection_dim = config_.classifier_dim;
  if (config_.classifier_dim <= 0 || config_.diffusion_dim < 0 || config_.projection_dim <= 0)
    throw ValidationError("fusion dimensions must be positive");
  projection_ = DenseLayer(input_dim(), config_.projection_dim, false);
  for (int i = 0; i < std::min(input_dim(), config_.projection_dim); ++i) projection_.w(i, i) = 1.0;
}

std::vector<double> FusionHead::concat(std::span<const double> lf,
                                       std::span<const double> ld) const {
  if (lf.size() != static_cast<std::size_t>(config_.classifier_dim) ||
      ld.size() != static_cast<std::size_t>(config_.diffusion_dim))
    throw ValidationError("fuse expects l_f of " + std::to_string(config_.classifier_dim) +
                          " and pooled l_d of " + std::to_string(config_.diffusion_dim) +
                          ", got " + std::to_string(lf.size()) + " and " +
                          std::to_string(ld.size()));
  std::vector<double> x(lf.begin(), lf.end());
  x.insert(x.end(), ld.begin(), ld.end());
  return x;
}

FusedFeatures FusionHead::fuse(std::span<const double> lf, std::span<const double> ld_pooled) const {
  return projection_.forward(concat(lf, ld_pooled));
}

void FusionHead::backward(std::span<const double> lf, std::span<const double> ld_pooled,
                          std::span<const double> grad_la, FusionHead& grad,
                          std::span<double> grad_lf) const {
  const std::vector<double> x = concat(lf, ld_pooled);
  std::vector<double> grad_x(grad_lf.empty() ? 0 : x.size());
  projection_.backward(x, grad_la, grad.projection_, grad_x);
  if (!grad_lf.empty()) std::copy_n(grad_x.begin(), grad_lf.size(), grad_lf.begin());
}

FusionHead FusionHead::zeros_like() const {
  FusionHead g;
  g.config_ = config_;
  g.projection_ = projection_.zeros_like();
  return g;
}

}  // namespace occaug
