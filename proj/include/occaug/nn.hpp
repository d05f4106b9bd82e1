// SPDX-License-Identifier: Apache-2.0
#pragma once

// Small dense-network pieces shared by the fusion head, the classifier head,
// the mask branch and the bundled backbone. Double precision throughout so
// gradients can be checked against finite differences.

#include <cstdint>
#include <span>
#include <vector>

#include "occaug/rng.hpp"

namespace occaug {

struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c, double fill = 0.0)
      : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {}

  std::span<double> row(int r) { return {data.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)}; }
  std::span<const double> row(int r) const {
    return {data.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)};
  }
  double& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

  bool operator==(const Matrix&) const = default;
};

// y = W x (+ b), W stored row-major as out x in.
class DenseLayer {
 public:
  DenseLayer() = default;
  DenseLayer(int in, int out, bool has_bias);

  int in() const { return in_; }
  int out() const { return out_; }
  bool has_bias() const { return has_bias_; }

  std::span<double> weight() { return weight_; }
  std::span<const double> weight() const { return weight_; }
  std::span<double> bias() { return bias_; }
  std::span<const double> bias() const { return bias_; }
  double& w(int o, int i) { return weight_[static_cast<std::size_t>(o) * in_ + i]; }
  double w(int o, int i) const { return weight_[static_cast<std::size_t>(o) * in_ + i]; }

  // Throws ValidationError when sizes disagree with the layer.
  void forward(std::span<const double> x, std::span<double> y) const;
  std::vector<double> forward(std::span<const double> x) const;

  // Accumulates dL/dW, dL/db into grad (same shape) and, when grad_x is
  // non-empty, writes dL/dx.
  void backward(std::span<const double> x, std::span<const double> grad_y, DenseLayer& grad,
                std::span<double> grad_x) const;

  void init_normal(Rng& rng, double scale);
  void set_zero();
  DenseLayer zeros_like() const { return DenseLayer(in_, out_, has_bias_); }

  // Parameter views in a fixed order (weight, then bias if present).
  std::vector<std::span<double>> parameters();
  std::vector<std::span<const double>> parameters() const;

 private:
  int in_ = 0;
  int out_ = 0;
  bool has_bias_ = false;
  std::vector<double> weight_;
  std::vector<double> bias_;
};

std::vector<double> softmax(std::span<const double> logits);

}  // namespace occaug
