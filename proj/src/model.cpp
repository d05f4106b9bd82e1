// SPDX-License-Identifier: Apache-2.0
#include "occaug/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "occaug/error.hpp"
#include "occaug/kernels.hpp"
#include "occaug/rng.hpp"

namespace occaug {

void ModelSpec::validate() const {
  if (width <= 0 || height <= 0 || channels <= 0)
    throw ValidationError("model input size must be positive");
  if (num_classes <= 0) throw ValidationError("model needs at least one class");
  if (feature_dim <= 0) throw ValidationError("feature_dim must be positive");
  if (pool <= 0 || width % pool != 0 || height % pool != 0)
    throw ValidationError("pool " + std::to_string(pool) + " must divide the input size " +
                          std::to_string(width) + "x" + std::to_string(height));
  if (mask_grid <= 0 || mask_grid > std::min(width, height))
    throw ValidationError("mask_grid must be in 1.." + std::to_string(std::min(width, height)));
  if (fusion && diffusion_dim <= 0)
    throw ValidationError("fusion needs a positive diffusion feature size");
  if (projection_dim < 0) throw ValidationError("projection_dim must be non-negative");
}

// ---------------------------------------------------------------------------

PooledMlpBackbone::PooledMlpBackbone(int width, int height, int channels, int pool,
                                     int feature_dim)
    : width_(width), height_(height), channels_(channels), pool_(pool),
      layer_(channels * (width / pool) * (height / pool), feature_dim, true) {}

void PooledMlpBackbone::init(std::uint64_t seed) {
  Rng rng(seed);
  layer_.init_normal(rng, std::sqrt(2.0 / layer_.in()));
}

std::vector<double> PooledMlpBackbone::pooled_input(const Image& image) const {
  if (image.width() != width_ || image.height() != height_ || image.channels() != channels_)
    throw ValidationError("backbone expects " + std::to_string(width_) + "x" +
                          std::to_string(height_) + "x" + std::to_string(channels_) + ", got " +
                          std::to_string(image.width()) + "x" + std::to_string(image.height()) +
                          "x" + std::to_string(image.channels()));
  const int pw = width_ / pool_;
  const int ph = height_ / pool_;
  const double scale = 1.0 / (255.0 * pool_ * pool_);
  std::vector<double> x(static_cast<std::size_t>(channels_) * pw * ph, 0.0);
  for (int c = 0; c < channels_; ++c)
    for (int y = 0; y < height_; ++y)
      for (int xx = 0; xx < width_; ++xx)
        x[(static_cast<std::size_t>(c) * ph + y / pool_) * pw + xx / pool_] += image.at(c, y, xx);
  for (auto& v : x) v *= scale;
  return x;
}

std::vector<double> PooledMlpBackbone::features(const Image& image, BackboneTrace* trace) const {
  std::vector<double> x = pooled_input(image);
  std::vector<double> h = layer_.forward(x);
  for (auto& v : h) v = std::max(v, 0.0);
  if (trace) *trace = {std::move(x), h};
  return h;
}

void PooledMlpBackbone::backward(const BackboneTrace& trace, std::span<const double> grad_features,
                                 Backbone& grad) const {
  auto* g = dynamic_cast<PooledMlpBackbone*>(&grad);
  if (!g || trace.size() != 2) throw ValidationError("pooled-mlp backward: bad trace or gradient");
  std::vector<double> grad_pre(grad_features.begin(), grad_features.end());
  for (std::size_t i = 0; i < grad_pre.size(); ++i)
    if (trace[1][i] <= 0.0) grad_pre[i] = 0.0;
  layer_.backward(trace[0], grad_pre, g->layer_, {});
}

std::unique_ptr<Backbone> PooledMlpBackbone::clone() const {
  return std::make_unique<PooledMlpBackbone>(*this);
}

std::unique_ptr<Backbone> PooledMlpBackbone::zeros_like() const {
  return std::make_unique<PooledMlpBackbone>(width_, height_, channels_, pool_, layer_.out());
}

std::unique_ptr<Backbone> make_backbone(const ModelSpec& spec, std::uint64_t seed) {
  if (spec.backbone == "pooled-mlp") {
    auto b = std::make_unique<PooledMlpBackbone>(spec.width, spec.height, spec.channels, spec.pool,
                                                 spec.feature_dim);
    b->init(seed);
    return b;
  }
  throw ValidationError("unknown backbone '" + spec.backbone + "' (known: pooled-mlp)");
}

// ---------------------------------------------------------------------------

MaskBranch::MaskBranch(int width, int height, int grid, int num_classes)
    : width_(width), height_(height), grid_(grid), layer_(grid * grid, num_classes, true) {
  if (grid <= 0 || grid > std::min(width, height))
    throw ValidationError("mask grid must be in 1..min(width, height)");
}

std::vector<double> MaskBranch::pooled(const BinaryMask& mask) const {
  if (mask.width() != width_ || mask.height() != height_)
    throw ValidationError("mask branch expects " + std::to_string(width_) + "x" +
                          std::to_string(height_) + ", got " + std::to_string(mask.width()) +
                          "x" + std::to_string(mask.height()));
  std::vector<double> out(static_cast<std::size_t>(grid_) * grid_, 0.0);
  for (int gy = 0; gy < grid_; ++gy) {
    const int y0 = gy * height_ / grid_, y1 = (gy + 1) * height_ / grid_;
    for (int gx = 0; gx < grid_; ++gx) {
      const int x0 = gx * width_ / grid_, x1 = (gx + 1) * width_ / grid_;
      std::int64_t set = 0;
      for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) set += mask.get(x, y) ? 1 : 0;
      out[static_cast<std::size_t>(gy) * grid_ + gx] =
          static_cast<double>(set) / static_cast<double>((y1 - y0) * (x1 - x0));
    }
  }
  return out;
}

std::vector<double> classify_mask_branch(const BinaryMask& mask, const MaskBranch& branch) {
  return branch.layer().forward(branch.pooled(mask));
}

// ---------------------------------------------------------------------------

Model::Model(const ModelSpec& spec, std::uint64_t seed) : spec_(spec) {
  spec_.validate();
  backbone_ = make_backbone(spec_, mix_seed({seed, 0xBBu}));
  int head_in = backbone_->feature_dim();
  if (spec_.fusion) {
    fusion_.emplace(FusionConfig{backbone_->feature_dim(), spec_.diffusion_dim,
                                 spec_.projection_dim});
    head_in = fusion_->output_dim();
  }
  head_ = ClassifierHead(head_in, spec_.num_classes);
  Rng rng(mix_seed({seed, 0x4Eu}));
  head_.layer().init_normal(rng, std::sqrt(1.0 / head_in));
  mask_branch_ = MaskBranch(spec_.width, spec_.height, spec_.mask_grid, spec_.num_classes);
}

Model::Model(const Model& other)
    : spec_(other.spec_),
      backbone_(other.backbone_ ? other.backbone_->clone() : nullptr),
      fusion_(other.fusion_),
      head_(other.head_),
      mask_branch_(other.mask_branch_) {}

Model& Model::operator=(const Model& other) {
  if (this != &other) {
    Model copy(other);
    *this = std::move(copy);
  }
  return *this;
}

std::vector<double> Model::image_logits(const Image& image, std::span<const double> ld_pooled,
                                        Trace* trace) const {
  Trace local;
  Trace& t = trace ? *trace : local;
  t.lf = backbone_->features(image, trace ? &t.backbone : nullptr);
  if (fusion_) {
    t.ld.assign(ld_pooled.begin(), ld_pooled.end());
    t.la = fusion_->fuse(t.lf, t.ld);
  } else {
    if (!ld_pooled.empty())
      throw ValidationError("diffusion features given to a model without fusion");
    t.ld.clear();
    t.la = t.lf;
  }
  return head_.classify(t.la);
}

void Model::backward_image(const Trace& trace, std::span<const double> grad_logits,
                           Model& grad) const {
  std::vector<double> grad_la(trace.la.size());
  head_.backward(trace.la, grad_logits, grad.head_, grad_la);
  std::vector<double> grad_lf(trace.lf.size());
  if (fusion_)
    fusion_->backward(trace.lf, trace.ld, grad_la, *grad.fusion_, grad_lf);
  else
    grad_lf = grad_la;
  backbone_->backward(trace.backbone, grad_lf, *grad.backbone_);
}

void Model::backward_mask(const BinaryMask& mask, std::span<const double> grad_logits,
                          Model& grad) const {
  mask_branch_.layer().backward(mask_branch_.pooled(mask), grad_logits, grad.mask_branch_.layer(),
                                {});
}

Model Model::zeros_like() const {
  Model g;
  g.spec_ = spec_;
  g.backbone_ = backbone_->zeros_like();
  if (fusion_) g.fusion_ = fusion_->zeros_like();
  g.head_ = head_.zeros_like();
  g.mask_branch_ = mask_branch_.zeros_like();
  return g;
}

std::vector<std::span<double>> Model::parameters() {
  std::vector<std::span<double>> out = backbone_->parameters();
  if (fusion_)
    for (auto p : fusion_->projection().parameters()) out.push_back(p);
  for (auto p : head_.layer().parameters()) out.push_back(p);
  for (auto p : mask_branch_.layer().parameters()) out.push_back(p);
  return out;
}

std::vector<std::span<const double>> Model::parameters() const {
  std::vector<std::span<const double>> out = static_cast<const Backbone&>(*backbone_).parameters();
  if (fusion_)
    for (auto p : fusion_->projection().parameters()) out.push_back(p);
  for (auto p : head_.layer().parameters()) out.push_back(p);
  for (auto p : mask_branch_.layer().parameters()) out.push_back(p);
  return out;
}

void Model::sgd_step(const Model& grad, double learning_rate) {
  auto mine = parameters();
  const auto theirs = grad.parameters();
  if (mine.size() != theirs.size()) throw ValidationError("sgd_step: model shapes differ");
  for (std::size_t i = 0; i < mine.size(); ++i) {
    if (mine[i].size() != theirs[i].size()) throw ValidationError("sgd_step: model shapes differ");
    kernels::axpy_f64(mine[i], -learning_rate, theirs[i]);
  }
}

}  // namespace occaug
