#include "deepsd/nn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

#include "deepsd/errors.hpp"
#include "deepsd/random.hpp"

namespace deepsd::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

std::string shape(const Tensor3& t) {
  return std::to_string(t.channels) + "x" + std::to_string(t.height) + "x" +
         std::to_string(t.width);
}

// Per-thread scratch reused across calls; large fresh allocations cost more
// in page faults than the convolutions themselves.
double* scratch(int slot, std::size_t n) {
  thread_local std::array<std::vector<double>, 2> buffers;
  auto& b = buffers[static_cast<std::size_t>(slot)];
  if (b.size() < n) b.resize(n);
  return b.data();
}

// Rows indexed (c, ky, kx), columns (y, x) over the valid output extent.
const double* im2col(const Tensor3& in, std::size_t k) {
  const std::size_t ho = in.height - k + 1;
  const std::size_t wo = in.width - k + 1;
  double* col = scratch(0, in.channels * k * k * ho * wo);
  double* dst = col;
  for (std::size_t c = 0; c < in.channels; ++c) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        for (std::size_t y = 0; y < ho; ++y) {
          const double* src = &in.data[(c * in.height + y + ky) * in.width + kx];
          std::copy_n(src, wo, dst);
          dst += wo;
        }
      }
    }
  }
  return col;
}

// Adjoint of im2col: scatters column gradients back onto the input lattice.
Tensor3 col2im(const double* col, std::size_t channels, std::size_t height, std::size_t width,
               std::size_t k) {
  Tensor3 out(channels, height, width);
  const std::size_t ho = height - k + 1;
  const std::size_t wo = width - k + 1;
  const double* src = col;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        for (std::size_t y = 0; y < ho; ++y) {
          double* dst = &out.data[(c * height + y + ky) * width + kx];
          for (std::size_t x = 0; x < wo; ++x) dst[x] += src[x];
          src += wo;
        }
      }
    }
  }
  return out;
}

void check_conv_input(const Tensor3& input, const ConvLayer& layer) {
  if (input.channels != layer.in_channels) {
    throw DimensionError("conv input has " + std::to_string(input.channels) +
                         " channels, layer expects " + std::to_string(layer.in_channels));
  }
  if (input.height < layer.kernel || input.width < layer.kernel) {
    throw DimensionError("conv input " + shape(input) + " smaller than kernel " +
                         std::to_string(layer.kernel));
  }
}

// out = W * col + b, where col is [K, N] for K = in_c*k*k.
Tensor3 apply_gemm(const ConvLayer& layer, const double* col, std::size_t ho, std::size_t wo) {
  const auto n = static_cast<Eigen::Index>(ho * wo);
  const auto kk = static_cast<Eigen::Index>(layer.in_channels * layer.kernel * layer.kernel);
  const auto o = static_cast<Eigen::Index>(layer.out_channels);
  Tensor3 out(layer.out_channels, ho, wo);
  MatMap result(out.data.data(), o, n);
  ConstMatMap w(layer.weights.data(), o, kk);
  ConstMatMap c(col, kk, n);
  result.noalias() = w * c;
  for (Eigen::Index i = 0; i < o; ++i) result.row(i).array() += layer.bias[static_cast<std::size_t>(i)];
  return out;
}

// Layers with few output channels (the reconstruction layer) skip im2col:
// its column matrix would be in_c*k*k times larger than the output.
constexpr std::size_t kDirectMaxOut = 4;

Tensor3 direct_forward(const Tensor3& in, const ConvLayer& layer) {
  const std::size_t k = layer.kernel;
  const std::size_t ho = in.height - k + 1;
  const std::size_t wo = in.width - k + 1;
  Tensor3 out(layer.out_channels, ho, wo);
  for (std::size_t o = 0; o < layer.out_channels; ++o) {
    double* dst = &out.data[o * ho * wo];
    std::fill_n(dst, ho * wo, layer.bias[o]);
    for (std::size_t c = 0; c < in.channels; ++c) {
      for (std::size_t ky = 0; ky < k; ++ky) {
        for (std::size_t kx = 0; kx < k; ++kx) {
          const double w = layer.weights[((o * layer.in_channels + c) * k + ky) * k + kx];
          for (std::size_t y = 0; y < ho; ++y) {
            const double* src = &in.data[(c * in.height + y + ky) * in.width + kx];
            double* row = dst + y * wo;
            for (std::size_t x = 0; x < wo; ++x) row[x] += w * src[x];
          }
        }
      }
    }
  }
  return out;
}

Tensor3 direct_backward(const ConvLayer& layer, const Tensor3& in, const Tensor3& d_z, ConvLayer& grad,
                        bool want_input_grad) {
  const std::size_t k = layer.kernel;
  const std::size_t ho = d_z.height;
  const std::size_t wo = d_z.width;
  Tensor3 d_in;
  if (want_input_grad) d_in = Tensor3(in.channels, in.height, in.width);
  for (std::size_t o = 0; o < layer.out_channels; ++o) {
    const double* dz = &d_z.data[o * ho * wo];
    double bsum = 0.0;
    for (std::size_t i = 0; i < ho * wo; ++i) bsum += dz[i];
    grad.bias[o] += bsum;
    for (std::size_t c = 0; c < in.channels; ++c) {
      for (std::size_t ky = 0; ky < k; ++ky) {
        for (std::size_t kx = 0; kx < k; ++kx) {
          const std::size_t wi = ((o * layer.in_channels + c) * k + ky) * k + kx;
          const double w = layer.weights[wi];
          double acc = 0.0;
          for (std::size_t y = 0; y < ho; ++y) {
            const std::size_t off = (c * in.height + y + ky) * in.width + kx;
            const double* src = &in.data[off];
            const double* g = dz + y * wo;
            for (std::size_t x = 0; x < wo; ++x) acc += g[x] * src[x];
            if (want_input_grad) {
              double* dst = &d_in.data[off];
              for (std::size_t x = 0; x < wo; ++x) dst[x] += w * g[x];
            }
          }
          grad.weights[wi] += acc;
        }
      }
    }
  }
  return d_in;
}

void relu_inplace(Tensor3& t) {
  for (double& v : t.data) v = std::max(v, 0.0);
}

}  // namespace

Tensor3 to_tensor(const ChannelStack& cs) {
  Tensor3 t(cs.channels(), cs.rows(), cs.cols());
  for (std::size_t c = 0; c < cs.channels(); ++c) {
    const auto v = cs[c].values();
    std::copy(v.begin(), v.end(), t.data.begin() + static_cast<std::ptrdiff_t>(c * t.plane()));
  }
  return t;
}

Tensor3 to_tensor(const GeoGrid& g) {
  Tensor3 t(1, g.rows(), g.cols());
  std::copy(g.values().begin(), g.values().end(), t.data.begin());
  return t;
}

GeoGrid plane_to_grid(const Tensor3& t, const GeoRef& ref) {
  if (t.channels != 1) throw DimensionError("expected a single-channel tensor, got " + shape(t));
  return GeoGrid(t.height, t.width, ref, t.data);
}

Tensor3 conv2d_valid(const Tensor3& input, const ConvLayer& layer) {
  check_conv_input(input, layer);
  const std::size_t ho = input.height - layer.kernel + 1;
  const std::size_t wo = input.width - layer.kernel + 1;
  if (layer.kernel == 1) return apply_gemm(layer, input.data.data(), ho, wo);
  if (layer.out_channels <= kDirectMaxOut) return direct_forward(input, layer);
  return apply_gemm(layer, im2col(input, layer.kernel), ho, wo);
}

SrcnnParams::SrcnnParams(const Architecture& a)
    : arch(a),
      layer1(a.n1, a.input_channels, a.f1),
      layer2(a.n2, a.n1, a.f2),
      layer3(1, a.n2, a.f3) {
  norm.mean.assign(a.input_channels, 0.0);
  norm.std.assign(a.input_channels, 1.0);
}

void SrcnnParams::validate() const {
  const auto check = [](const ConvLayer& l, std::size_t out, std::size_t in, std::size_t k,
                        const char* name) {
    if (l.out_channels != out || l.in_channels != in || l.kernel != k ||
        l.weights.size() != out * in * k * k || l.bias.size() != out) {
      throw DimensionError(std::string(name) + " shape does not match architecture");
    }
  };
  check(layer1, arch.n1, arch.input_channels, arch.f1, "layer1");
  check(layer2, arch.n2, arch.n1, arch.f2, "layer2");
  check(layer3, 1, arch.n2, arch.f3, "layer3");
  if (norm.channels() != arch.input_channels || norm.std.size() != norm.mean.size()) {
    throw DimensionError("normalization stats do not match input channel count");
  }
}

std::array<std::span<double>, 6> SrcnnParams::tensors() {
  return {layer1.weights, layer1.bias, layer2.weights, layer2.bias, layer3.weights, layer3.bias};
}

std::array<std::span<const double>, 6> SrcnnParams::tensors() const {
  return {layer1.weights, layer1.bias, layer2.weights, layer2.bias, layer3.weights, layer3.bias};
}

SrcnnParams init_params(std::uint64_t seed, const Architecture& arch, double init_std) {
  SrcnnParams p(arch);
  Rng rng(seed, 0x5eed'0001);
  for (ConvLayer* l : {&p.layer1, &p.layer2, &p.layer3}) {
    for (double& w : l->weights) w = init_std * rng.normal();
  }
  return p;
}

Tensor3 forward(const SrcnnParams& p, const Tensor3& x, ForwardCache* cache) {
  if (x.channels != p.arch.input_channels) {
    throw DimensionError("network expects " + std::to_string(p.arch.input_channels) +
                         " input channels, got " + std::to_string(x.channels));
  }
  if (x.height <= p.arch.shrink() || x.width <= p.arch.shrink()) {
    throw DimensionError("input " + shape(x) + " too small for total shrinkage " +
                         std::to_string(p.arch.shrink()));
  }
  Tensor3 a1 = conv2d_valid(x, p.layer1);
  relu_inplace(a1);
  Tensor3 a2 = conv2d_valid(a1, p.layer2);
  relu_inplace(a2);
  Tensor3 out = conv2d_valid(a2, p.layer3);
  if (cache) {
    cache->input = x;
    cache->a1 = std::move(a1);
    cache->a2 = std::move(a2);
    cache->generation = p.generation;
    cache->valid = true;
  }
  return out;
}

Gradients Gradients::zeros_like(const SrcnnParams& p) {
  Gradients g;
  g.layer1 = ConvLayer(p.layer1.out_channels, p.layer1.in_channels, p.layer1.kernel);
  g.layer2 = ConvLayer(p.layer2.out_channels, p.layer2.in_channels, p.layer2.kernel);
  g.layer3 = ConvLayer(p.layer3.out_channels, p.layer3.in_channels, p.layer3.kernel);
  return g;
}

std::array<std::span<double>, 6> Gradients::tensors() {
  return {layer1.weights, layer1.bias, layer2.weights, layer2.bias, layer3.weights, layer3.bias};
}

std::array<std::span<const double>, 6> Gradients::tensors() const {
  return {layer1.weights, layer1.bias, layer2.weights, layer2.bias, layer3.weights, layer3.bias};
}

Gradients& Gradients::operator+=(const Gradients& o) {
  auto dst = tensors();
  const auto src = o.tensors();
  for (std::size_t t = 0; t < dst.size(); ++t) {
    if (dst[t].size() != src[t].size()) throw DimensionError("gradient shapes differ");
    for (std::size_t i = 0; i < dst[t].size(); ++i) dst[t][i] += src[t][i];
  }
  return *this;
}

Gradients& Gradients::operator*=(double s) {
  for (auto t : tensors()) {
    for (double& v : t) v *= s;
  }
  for (double& v : d_input.data) v *= s;
  return *this;
}

namespace {

// Given dL/dz for a layer whose input was `in`, fills the layer's weight and
// bias gradients and optionally returns dL/d(in).
Tensor3 conv_backward(const ConvLayer& layer, const Tensor3& in, const Tensor3& d_z,
                      ConvLayer& grad, bool want_input_grad) {
  const std::size_t k = layer.kernel;
  if (k != 1 && layer.out_channels <= kDirectMaxOut) {
    return direct_backward(layer, in, d_z, grad, want_input_grad);
  }
  const auto n = static_cast<Eigen::Index>(d_z.plane());
  const auto kk = static_cast<Eigen::Index>(layer.in_channels * k * k);
  const auto o = static_cast<Eigen::Index>(layer.out_channels);

  const double* col = k == 1 ? in.data.data() : im2col(in, k);
  ConstMatMap dz(d_z.data.data(), o, n);
  ConstMatMap c(col, kk, n);
  MatMap dw(grad.weights.data(), o, kk);
  dw.noalias() += dz * c.transpose();
  // Plain loop: Eigen's vectorised sum peels by address, which would make
  // results depend on where a thread's buffers happen to land.
  for (Eigen::Index i = 0; i < o; ++i) {
    const double* row = d_z.data.data() + i * n;
    double s = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) s += row[j];
    grad.bias[static_cast<std::size_t>(i)] += s;
  }

  if (!want_input_grad) return {};
  ConstMatMap w(layer.weights.data(), o, kk);
  if (k == 1) {
    Tensor3 d_in(in.channels, in.height, in.width);
    MatMap(d_in.data.data(), kk, n).noalias() = w.transpose() * dz;
    return d_in;
  }
  double* d_col = scratch(1, static_cast<std::size_t>(kk * n));
  MatMap(d_col, kk, n).noalias() = w.transpose() * dz;
  return col2im(d_col, in.channels, in.height, in.width, k);
}

void relu_mask(Tensor3& grad, const Tensor3& activation) {
  for (std::size_t i = 0; i < grad.data.size(); ++i) {
    if (activation.data[i] <= 0.0) grad.data[i] = 0.0;
  }
}

}  // namespace

Gradients backward(const SrcnnParams& p, const Tensor3& x, const Tensor3& d_out,
                   const ForwardCache& cache, bool want_input_grad) {
  if (!cache.valid || cache.generation != p.generation || !cache.input.same_shape(x) ||
      cache.input.data != x.data) {
    throw std::logic_error("backward called with a stale forward cache");
  }
  const std::size_t ho = x.height - p.arch.shrink();
  const std::size_t wo = x.width - p.arch.shrink();
  if (d_out.channels != 1 || d_out.height != ho || d_out.width != wo) {
    throw DimensionError("upstream gradient " + shape(d_out) + " does not match output shape");
  }
  Gradients g = Gradients::zeros_like(p);
  Tensor3 d_a2 = conv_backward(p.layer3, cache.a2, d_out, g.layer3, true);
  relu_mask(d_a2, cache.a2);
  Tensor3 d_a1 = conv_backward(p.layer2, cache.a1, d_a2, g.layer2, true);
  relu_mask(d_a1, cache.a1);
  g.d_input = conv_backward(p.layer1, cache.input, d_a1, g.layer1, want_input_grad);
  return g;
}

LossResult mse_loss(const Tensor3& pred, const Tensor3& label) {
  if (!pred.same_shape(label)) {
    throw DimensionError("loss shapes differ: " + shape(pred) + " vs " + shape(label));
  }
  if (pred.size() == 0) throw DimensionError("loss on empty tensors");
  LossResult r;
  r.grad = Tensor3(pred.channels, pred.height, pred.width);
  const double n = static_cast<double>(pred.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred.data[i] - label.data[i];
    sum += d * d;
    r.grad.data[i] = 2.0 * d / n;
  }
  r.loss = sum / n;
  return r;
}

AdamState AdamState::for_params(const SrcnnParams& p) {
  AdamState s;
  const auto t = p.tensors();
  for (std::size_t i = 0; i < t.size(); ++i) {
    s.m[i].assign(t[i].size(), 0.0);
    s.v[i].assign(t[i].size(), 0.0);
  }
  return s;
}

void adam_step(SrcnnParams& p, const Gradients& grads, AdamState& state) {
  auto params = p.tensors();
  const auto g = grads.tensors();
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].size() != g[i].size() || state.m[i].size() != g[i].size() ||
        state.v[i].size() != g[i].size()) {
      throw DimensionError("adam_step: parameter, gradient and moment shapes differ");
    }
  }
  ++state.t;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double lr = state.layer_lr[i / 2];
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < params[i].size(); ++j) {
      const double gj = g[i][j];
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * gj;
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * gj * gj;
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      params[i][j] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
  ++p.generation;
}

}  // namespace deepsd::nn
