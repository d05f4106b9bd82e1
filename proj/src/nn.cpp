// SPDX-License-Identifier: Apache-2.0
#include "occaug/nn.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "occaug/error.hpp"
#include "occaug/kernels.hpp"

namespace occaug {

DenseLayer::DenseLayer(int in, int out, bool has_bias)
    : in_(in), out_(out), has_bias_(has_bias),
      weight_(static_cast<std::size_t>(in) * out, 0.0),
      bias_(has_bias ? static_cast<std::size_t>(out) : 0, 0.0) {
  if (in <= 0 || out <= 0) throw ValidationError("dense layer dimensions must be positive");
}

void DenseLayer::forward(std::span<const double> x, std::span<double> y) const {
  if (x.size() != static_cast<std::size_t>(in_) || y.size() != static_cast<std::size_t>(out_))
    throw ValidationError("dense layer expects input " + std::to_string(in_) + " / output " +
                          std::to_string(out_) + ", got " + std::to_string(x.size()) + " / " +
                          std::to_string(y.size()));
  const auto& k = kernels::active();
  for (int o = 0; o < out_; ++o) {
    const double dot = k.dot_f64(weight_.data() + static_cast<std::size_t>(o) * in_, x.data(),
                                 static_cast<std::size_t>(in_));
    y[static_cast<std::size_t>(o)] = has_bias_ ? dot + bias_[static_cast<std::size_t>(o)] : dot;
  }
}

std::vector<double> DenseLayer::forward(std::span<const double> x) const {
  std::vector<double> y(static_cast<std::size_t>(out_));
  forward(x, y);
  return y;
}

void DenseLayer::backward(std::span<const double> x, std::span<const double> grad_y,
                          DenseLayer& grad, std::span<double> grad_x) const {
  if (x.size() != static_cast<std::size_t>(in_) || grad_y.size() != static_cast<std::size_t>(out_))
    throw ValidationError("dense layer backward: size mismatch");
  if (grad.in_ != in_ || grad.out_ != out_ || grad.has_bias_ != has_bias_)
    throw ValidationError("dense layer backward: gradient buffer has the wrong shape");
  const auto& k = kernels::active();
  for (int o = 0; o < out_; ++o) {
    const double g = grad_y[static_cast<std::size_t>(o)];
    if (g == 0.0) continue;
    k.axpy_f64(grad.weight_.data() + static_cast<std::size_t>(o) * in_, g, x.data(),
               static_cast<std::size_t>(in_));
    if (has_bias_) grad.bias_[static_cast<std::size_t>(o)] += g;
  }
  if (grad_x.empty()) return;
  if (grad_x.size() != static_cast<std::size_t>(in_))
    throw ValidationError("dense layer backward: input gradient has the wrong size");
  std::fill(grad_x.begin(), grad_x.end(), 0.0);
  for (int o = 0; o < out_; ++o) {
    const double g = grad_y[static_cast<std::size_t>(o)];
    if (g == 0.0) continue;
    k.axpy_f64(grad_x.data(), g, weight_.data() + static_cast<std::size_t>(o) * in_,
               static_cast<std::size_t>(in_));
  }
}

void DenseLayer::init_normal(Rng& rng, double scale) {
  for (auto& v : weight_) v = scale * rng.normal();
  std::fill(bias_.begin(), bias_.end(), 0.0);
}

void DenseLayer::set_zero() {
  std::fill(weight_.begin(), weight_.end(), 0.0);
  std::fill(bias_.begin(), bias_.end(), 0.0);
}

std::vector<std::span<double>> DenseLayer::parameters() {
  std::vector<std::span<double>> out{weight_};
  if (has_bias_) out.emplace_back(bias_);
  return out;
}

std::vector<std::span<const double>> DenseLayer::parameters() const {
  std::vector<std::span<const double>> out{weight_};
  if (has_bias_) out.emplace_back(bias_);
  return out;
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.size());
  if (logits.empty()) return p;
  const double m = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - m);
    z += p[i];
  }
  for (auto& v : p) v /= z;
  return p;
}

}  // namespace occaug
