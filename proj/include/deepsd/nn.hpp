#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "deepsd/grid.hpp"

namespace deepsd::nn {

/// Dense [channels, height, width] array, row-major within each channel.
struct Tensor3 {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> data;

  Tensor3() = default;
  Tensor3(std::size_t c, std::size_t h, std::size_t w, double fill = 0.0)
      : channels(c), height(h), width(w), data(c * h * w, fill) {}

  std::size_t plane() const noexcept { return height * width; }
  std::size_t size() const noexcept { return data.size(); }

  double& operator()(std::size_t c, std::size_t y, std::size_t x) {
    return data[(c * height + y) * width + x];
  }
  double operator()(std::size_t c, std::size_t y, std::size_t x) const {
    return data[(c * height + y) * width + x];
  }

  bool same_shape(const Tensor3& o) const noexcept {
    return channels == o.channels && height == o.height && width == o.width;
  }
  bool operator==(const Tensor3&) const = default;
};

/// Packs the channels of a stack into a tensor and back.
Tensor3 to_tensor(const ChannelStack& cs);
Tensor3 to_tensor(const GeoGrid& g);
GeoGrid plane_to_grid(const Tensor3& t, const GeoRef& ref);

/// Square-kernel convolution layer. Weights are laid out
/// [out_channels][in_channels][kernel][kernel].
struct ConvLayer {
  std::size_t out_channels = 0;
  std::size_t in_channels = 0;
  std::size_t kernel = 0;
  std::vector<double> weights;
  std::vector<double> bias;

  ConvLayer() = default;
  ConvLayer(std::size_t out_c, std::size_t in_c, std::size_t k)
      : out_channels(out_c), in_channels(in_c), kernel(k),
        weights(out_c * in_c * k * k, 0.0), bias(out_c, 0.0) {}

  double& w(std::size_t o, std::size_t i, std::size_t y, std::size_t x) {
    return weights[((o * in_channels + i) * kernel + y) * kernel + x];
  }
  double w(std::size_t o, std::size_t i, std::size_t y, std::size_t x) const {
    return weights[((o * in_channels + i) * kernel + y) * kernel + x];
  }

  bool operator==(const ConvLayer&) const = default;
};

/// Cross-correlation over the "valid" extent plus per-channel bias.
Tensor3 conv2d_valid(const Tensor3& input, const ConvLayer& layer);

struct Architecture {
  std::size_t input_channels = 2;
  std::size_t n1 = 64;
  std::size_t n2 = 32;
  std::size_t f1 = 9;
  std::size_t f2 = 1;
  std::size_t f3 = 5;

  /// Total spatial shrinkage of the three valid convolutions.
  std::size_t shrink() const noexcept { return f1 + f2 + f3 - 3; }
  bool operator==(const Architecture&) const = default;
};

/// The three-layer network: relu(conv) -> relu(conv) -> conv, plus the
/// normalisation statistics of its input channels.
struct SrcnnParams {
  Architecture arch;
  ConvLayer layer1;
  ConvLayer layer2;
  ConvLayer layer3;
  NormStats norm;
  /// Bumped by every optimiser step; lets cached activations detect staleness.
  std::uint64_t generation = 0;

  SrcnnParams() = default;
  explicit SrcnnParams(const Architecture& a);

  /// Throws DimensionError unless layer shapes chain as `arch` requires.
  void validate() const;

  /// W1, b1, W2, b2, W3, b3.
  std::array<std::span<double>, 6> tensors();
  std::array<std::span<const double>, 6> tensors() const;

  bool same_values(const SrcnnParams& o) const {
    return arch == o.arch && layer1 == o.layer1 && layer2 == o.layer2 && layer3 == o.layer3 &&
           norm == o.norm;
  }
};

/// Weights i.i.d. N(0, init_std^2), biases zero, fully determined by seed.
SrcnnParams init_params(std::uint64_t seed, const Architecture& arch, double init_std = 1e-3);

/// Activations kept from a forward pass for the matching backward pass.
struct ForwardCache {
  Tensor3 input;
  Tensor3 a1;
  Tensor3 a2;
  std::uint64_t generation = 0;
  bool valid = false;
};

/// Network output [1, H - shrink, W - shrink]. Throws DimensionError on
/// undersized or channel-mismatched input.
Tensor3 forward(const SrcnnParams& p, const Tensor3& x, ForwardCache* cache = nullptr);

struct Gradients {
  ConvLayer layer1;
  ConvLayer layer2;
  ConvLayer layer3;
  Tensor3 d_input;

  static Gradients zeros_like(const SrcnnParams& p);
  std::array<std::span<double>, 6> tensors();
  std::array<std::span<const double>, 6> tensors() const;
  Gradients& operator+=(const Gradients& o);
  Gradients& operator*=(double s);
};

/// Analytic gradients of the three-layer composition given dL/d(output).
/// Throws std::logic_error if `cache` was not produced by forward(p, x).
Gradients backward(const SrcnnParams& p, const Tensor3& x, const Tensor3& d_out,
                   const ForwardCache& cache, bool want_input_grad = true);

struct LossResult {
  double loss = 0.0;
  Tensor3 grad;  // d(loss)/d(pred)
};

/// Mean squared error over all elements, gradient 2(pred - label)/N.
LossResult mse_loss(const Tensor3& pred, const Tensor3& label);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::array<double, 3> layer_lr{1e-4, 1e-4, 1e-5};
  std::array<std::vector<double>, 6> m;
  std::array<std::vector<double>, 6> v;
  std::uint64_t t = 0;

  static AdamState for_params(const SrcnnParams& p);
};

/// One bias-corrected Adam update; layer k uses layer_lr[k].
void adam_step(SrcnnParams& p, const Gradients& grads, AdamState& state);

}  // namespace deepsd::nn
