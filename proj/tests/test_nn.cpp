#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "deepsd/checkpoint.hpp"
#include "deepsd/errors.hpp"
#include "deepsd/raster_io.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace deepsd;
using namespace deepsd::nn;

namespace {

double max_abs_diff(const Tensor3& a, const Tensor3& b) {
  REQUIRE(a.same_shape(b));
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

const Architecture kTiny{2, 2, 2, 9, 1, 5};

}  // namespace

TEST_SUITE("conv") {
  TEST_CASE("1x1 identity kernel") {
    Rng rng(1);
    const Tensor3 x = oracle::random_tensor(1, 6, 7, rng);
    ConvLayer id(1, 1, 1);
    id.weights[0] = 1.0;
    CHECK(conv2d_valid(x, id) == x);
  }

  TEST_CASE("3x3 ones on a constant input") {
    for (std::size_t out_c : {1u, 8u}) {
      ConvLayer l(out_c, 1, 3);
      std::fill(l.weights.begin(), l.weights.end(), 1.0);
      std::fill(l.bias.begin(), l.bias.end(), 0.25);
      const Tensor3 y = conv2d_valid(Tensor3(1, 5, 5, 2.0), l);
      CHECK(y.channels == out_c);
      CHECK(y.height == 3);
      for (double v : y.data) CHECK(v == doctest::Approx(9 * 2.0 + 0.25));
    }
  }

  TEST_CASE("matches the triple-loop oracle") {
    Rng rng(2);
    const struct { std::size_t in_c, out_c, k, h, w; } shapes[] = {
        {1, 2, 3, 5, 5}, {2, 1, 5, 9, 11}, {3, 8, 3, 10, 7}, {4, 6, 1, 6, 6}, {2, 16, 9, 15, 15}, {5, 3, 2, 4, 9}};
    for (const auto& s : shapes) {
      for (int rep = 0; rep < 4; ++rep) {
        const Tensor3 x = oracle::random_tensor(s.in_c, s.h, s.w, rng);
        const ConvLayer l = oracle::random_layer(s.out_c, s.in_c, s.k, rng);
        CHECK(max_abs_diff(conv2d_valid(x, l), oracle::conv(x, l)) <= 1e-12);
      }
    }
  }

  TEST_CASE("shape mismatches are rejected") {
    CHECK_THROWS_AS(conv2d_valid(Tensor3(2, 5, 5), ConvLayer(1, 1, 3)), DimensionError);
    CHECK_THROWS_AS(conv2d_valid(Tensor3(1, 2, 5), ConvLayer(1, 1, 3)), DimensionError);
  }
}

TEST_SUITE("forward") {
  TEST_CASE("zero weights give the output bias") {
    SrcnnParams p(Architecture{});
    p.layer3.bias[0] = 0.75;
    const Tensor3 y = forward(p, Tensor3(2, 20, 20, 3.0));
    for (double v : y.data) CHECK(v == 0.75);
  }

  TEST_CASE("51x51 sub-image yields 39x39") {
    const SrcnnParams p = init_params(3, Architecture{});
    const Tensor3 y = forward(p, Tensor3(2, 51, 51, 0.5));
    CHECK(y.channels == 1);
    CHECK(y.height == 39);
    CHECK(y.width == 39);
  }

  TEST_CASE("closed first-layer gates leave only the bias path") {
    SrcnnParams p = oracle::random_params(Architecture{2, 8, 4, 9, 1, 5}, 4);
    for (double& b : p.layer1.bias) b = -1e6;
    double expected = p.layer3.bias[0];
    for (std::size_t j = 0; j < p.arch.n2; ++j) {
      const double a2 = std::max(0.0, p.layer2.bias[j]);
      for (std::size_t ky = 0; ky < 5; ++ky)
        for (std::size_t kx = 0; kx < 5; ++kx) expected += p.layer3.w(0, j, ky, kx) * a2;
    }
    Rng rng(5);
    const Tensor3 y = forward(p, oracle::random_tensor(2, 20, 20, rng));
    for (double v : y.data) CHECK(v == doctest::Approx(expected).epsilon(1e-12));
  }

  TEST_CASE("undersized or mis-channelled input is rejected") {
    const SrcnnParams p = init_params(0, Architecture{});
    CHECK_THROWS_AS(forward(p, Tensor3(2, 12, 40)), DimensionError);
    CHECK_THROWS_AS(forward(p, Tensor3(3, 20, 20)), DimensionError);
  }

  TEST_CASE("piecewise linear in the input for a fixed activation pattern") {
    const SrcnnParams p = oracle::random_params(kTiny, 6);
    Rng rng(7);
    const Tensor3 x = oracle::random_tensor(2, 15, 15, rng);
    const Tensor3 d = oracle::random_tensor(2, 15, 15, rng, 1e-9);
    Tensor3 x1 = x, x2 = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
      x1.data[i] += d.data[i];
      x2.data[i] += 2 * d.data[i];
    }
    const Tensor3 f0 = forward(p, x), f1 = forward(p, x1), f2 = forward(p, x2);
    for (std::size_t i = 0; i < f0.size(); ++i) {
      CHECK(std::abs((f2.data[i] - f0.data[i]) - 2 * (f1.data[i] - f0.data[i])) < 1e-13);
    }
  }
}

TEST_SUITE("loss") {
  TEST_CASE("mse examples and oracle") {
    Rng rng(8);
    const Tensor3 a = oracle::random_tensor(1, 7, 9, rng);
    CHECK(mse_loss(a, a).loss == 0.0);
    Tensor3 b = a;
    for (double& v : b.data) v -= 2.0;
    CHECK(mse_loss(a, b).loss == doctest::Approx(4.0));
    for (int rep = 0; rep < 20; ++rep) {
      const Tensor3 p = oracle::random_tensor(1, 13, 11, rng), l = oracle::random_tensor(1, 13, 11, rng);
      const LossResult r = mse_loss(p, l);
      CHECK(std::abs(r.loss - oracle::mse(p, l)) <= 1e-12);
      CHECK(r.loss >= 0.0);
      for (std::size_t i = 0; i < p.size(); ++i) {
        CHECK(r.grad.data[i] == doctest::Approx(2.0 * (p.data[i] - l.data[i]) / static_cast<double>(p.size())));
      }
    }
    CHECK_THROWS_AS(mse_loss(Tensor3(1, 2, 2), Tensor3(1, 2, 3)), DimensionError);
  }
}

TEST_SUITE("backward") {
  TEST_CASE("finite differences on the tiny network") {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      Rng rng(seed, 9);
      const SrcnnParams p = oracle::random_params(kTiny, seed);
      const Tensor3 x = oracle::random_tensor(2, 15, 15, rng);
      const Tensor3 label = oracle::random_tensor(1, 3, 3, rng);
      const auto r = oracle::gradient_check(p, x, label);
      CHECK(r.checked > 0);
      CHECK(r.max_rel_error < 1e-4);
    }
  }

  TEST_CASE("finite differences with wider layers") {
    Rng rng(10);
    const SrcnnParams p = oracle::random_params(Architecture{2, 6, 5, 3, 1, 3}, 11);
    const Tensor3 x = oracle::random_tensor(2, 11, 12, rng);
    const Tensor3 label = oracle::random_tensor(1, 7, 8, rng);
    CHECK(oracle::gradient_check(p, x, label).max_rel_error < 1e-4);
  }

  TEST_CASE("zero and doubled upstream gradients") {
    const SrcnnParams p = oracle::random_params(kTiny, 12);
    Rng rng(13);
    const Tensor3 x = oracle::random_tensor(2, 15, 15, rng);
    ForwardCache cache;
    const Tensor3 y = forward(p, x, &cache);
    const Gradients zero = backward(p, x, Tensor3(1, y.height, y.width), cache);
    for (auto t : zero.tensors())
      for (double v : t) CHECK(v == 0.0);

    const Tensor3 d = oracle::random_tensor(1, y.height, y.width, rng);
    Tensor3 d2 = d;
    for (double& v : d2.data) v *= 2.0;
    const Gradients g1 = backward(p, x, d, cache), g2 = backward(p, x, d2, cache);
    const auto t1 = g1.tensors(), t2 = g2.tensors();
    for (std::size_t t = 0; t < t1.size(); ++t)
      for (std::size_t i = 0; i < t1[t].size(); ++i) CHECK(t2[t][i] == doctest::Approx(2.0 * t1[t][i]));
  }

  TEST_CASE("stale caches are rejected") {
    SrcnnParams p = oracle::random_params(kTiny, 14);
    Rng rng(15);
    const Tensor3 x = oracle::random_tensor(2, 15, 15, rng);
    ForwardCache cache;
    const Tensor3 y = forward(p, x, &cache);
    const Tensor3 d(1, y.height, y.width, 1.0);
    const Tensor3 other = oracle::random_tensor(2, 15, 15, rng);
    CHECK_THROWS_AS(backward(p, other, d, cache), std::logic_error);
    CHECK_THROWS_AS(backward(p, x, d, ForwardCache{}), std::logic_error);
    AdamState s = AdamState::for_params(p);
    adam_step(p, backward(p, x, d, cache), s);
    CHECK_THROWS_AS(backward(p, x, d, cache), std::logic_error);
  }
}

TEST_SUITE("adam") {
  TEST_CASE("zero gradients leave a fresh model unchanged") {
    SrcnnParams p = init_params(16, kTiny);
    const SrcnnParams before = p;
    AdamState s = AdamState::for_params(p);
    adam_step(p, Gradients::zeros_like(p), s);
    CHECK(p.same_values(before));
    CHECK(s.t == 1);
  }

  TEST_CASE("first step closed form") {
    SrcnnParams p = init_params(17, kTiny);
    const SrcnnParams before = p;
    AdamState s = AdamState::for_params(p);
    Gradients g = Gradients::zeros_like(p);
    Rng rng(18);
    for (auto t : g.tensors())
      for (double& v : t) v = rng.normal();
    adam_step(p, g, s);
    const auto after = p.tensors();
    const auto prior = before.tensors();
    const auto grads = static_cast<const Gradients&>(g).tensors();
    for (std::size_t t = 0; t < after.size(); ++t) {
      const double lr = s.layer_lr[t / 2];
      for (std::size_t i = 0; i < after[t].size(); ++i) {
        // Bias-corrected moments equal g and g^2 after one step.
        const double step = lr * grads[t][i] / (std::abs(grads[t][i]) + s.epsilon);
        CHECK(std::abs((prior[t][i] - after[t][i]) - step) < 1e-9);
      }
    }
    CHECK(s.layer_lr[0] == 1e-4);
    CHECK(s.layer_lr[1] == 1e-4);
    CHECK(s.layer_lr[2] == 1e-5);
  }

  TEST_CASE("hundred steps are bit reproducible") {
    const auto run = [] {
      SrcnnParams p = init_params(19, kTiny, 0.1);
      AdamState s = AdamState::for_params(p);
      Rng rng(20);
      const Tensor3 x = oracle::random_tensor(2, 15, 15, rng);
      const Tensor3 label = oracle::random_tensor(1, 3, 3, rng);
      for (int i = 0; i < 100; ++i) {
        ForwardCache c;
        const LossResult l = mse_loss(forward(p, x, &c), label);
        adam_step(p, backward(p, x, l.grad, c, false), s);
      }
      return p;
    };
    CHECK(encode_checkpoint(run()) == encode_checkpoint(run()));
  }
}

TEST_SUITE("init") {
  TEST_CASE("seeded Gaussian weights, zero biases") {
    const SrcnnParams a = init_params(21, Architecture{});
    CHECK(a.same_values(init_params(21, Architecture{})));
    CHECK_FALSE(a.same_values(init_params(22, Architecture{})));
    double ss = 0.0;
    for (double v : a.layer1.weights) ss += v * v;
    const double sd = std::sqrt(ss / static_cast<double>(a.layer1.weights.size()));
    CHECK(a.layer1.weights.size() == 64 * 2 * 9 * 9);
    CHECK(sd >= 8e-4);
    CHECK(sd <= 1.2e-3);
    for (const ConvLayer* l : {&a.layer1, &a.layer2, &a.layer3})
      for (double b : l->bias) CHECK(b == 0.0);
    CHECK_NOTHROW(a.validate());
  }
}

TEST_SUITE("checkpoint") {
  TEST_CASE("round trip is bit exact") {
    deepsd::test::TempDir dir("ckpt");
    SrcnnParams p = oracle::random_params(Architecture{}, 23);
    p.norm = {{1.25, 300.5}, {2.5, 800.125}};
    save_checkpoint(p, dir / "a.src");
    const SrcnnParams q = load_checkpoint(dir / "a.src");
    CHECK(q.same_values(p));
    save_checkpoint(q, dir / "b.src");
    CHECK(read_file_bytes(dir / "a.src") == read_file_bytes(dir / "b.src"));
  }

  TEST_CASE("corrupt checkpoints are rejected") {
    const auto bytes = encode_checkpoint(init_params(24, kTiny));
    auto bad = bytes;
    bad[3] = '9';
    CHECK_THROWS_AS(decode_checkpoint(bad), ParseError);
    auto cut = bytes;
    cut.resize(cut.size() - 8);
    try {
      decode_checkpoint(cut);
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.kind() == ParseError::Kind::kTruncated);
    }
  }
}
