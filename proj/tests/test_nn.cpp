#include <doctest.h>

#include <cmath>

#include "flowcnn/nn.hpp"
#include "flowcnn/rng.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace flowcnn;
using testutil::thrown_kind;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double lo = -1.0,
                     double hi = 1.0) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i)
    t[i] = static_cast<float>(rng.uniform(lo, hi));
  return t;
}

Conv3dLayer random_conv(std::size_t filters, std::size_t channels, std::size_t n,
                        Rng& rng) {
  Conv3dLayer layer;
  layer.kernels = random_tensor({filters, channels, n, 3, 3}, rng);
  layer.bias = random_tensor({filters}, rng);
  return layer;
}

}  // namespace

TEST_CASE("conv3d delta kernel crops channel 0") {
  Rng rng(101);
  Tensor x = random_tensor({3, 4, 6, 7}, rng);
  Conv3dLayer layer;
  layer.kernels = Tensor({1, 3, 1, 3, 3});
  layer.bias = Tensor({1});
  layer.kernels[0 * 9 + 1 * 3 + 1] = 1.0f;  // (c=0, n=0, i=1, j=1)

  Tensor y = conv3d_forward(x, layer);
  REQUIRE(y.shape() == std::vector<std::size_t>{1, 4, 4, 5});
  for (std::size_t d = 0; d < 4; ++d)
    for (std::size_t h = 0; h < 4; ++h)
      for (std::size_t w = 0; w < 5; ++w)
        CHECK(y[(d * 4 + h) * 5 + w] ==
              x[(0 * 4 + d) * 6 * 7 + (h + 1) * 7 + (w + 1)]);
}

TEST_CASE("conv3d of zero input returns the bias") {
  Tensor x({3, 3, 5, 5});
  Rng rng(102);
  Conv3dLayer layer = random_conv(6, 3, 2, rng);
  Tensor y = conv3d_forward(x, layer);
  for (std::size_t f = 0; f < 6; ++f)
    for (std::size_t i = 0; i < y.size() / 6; ++i)
      CHECK(y[f * (y.size() / 6) + i] == doctest::Approx(layer.bias[f]));
}

TEST_CASE("conv3d matches the reference on random instances") {
  Rng rng(103);
  for (int round = 0; round < 10; ++round) {
    const std::size_t c = 1 + rng.index(3), d = 1 + rng.index(8);
    const std::size_t h = 3 + rng.index(8), w = 3 + rng.index(8);
    const std::size_t f = 1 + rng.index(6), n = 1 + rng.index(d);
    Tensor x = random_tensor({c, d, h, w}, rng);
    Conv3dLayer layer;
    layer.kernels = random_tensor({f, c, n, 3, 3}, rng);
    layer.bias = random_tensor({f}, rng);

    Tensor got = conv3d_forward(x, layer);
    Tensor want = oracle::conv3d_reference(x, layer.kernels, layer.bias);
    REQUIRE(got.shape() == want.shape());
    for (std::size_t i = 0; i < got.size(); ++i)
      CHECK(std::fabs(got[i] - want[i]) <= 1e-5 * (1.0 + std::fabs(want[i])));
  }
}

TEST_CASE("conv3d is linear in its input when bias is zero") {
  Rng rng(104);
  Conv3dLayer layer = random_conv(4, 2, 2, rng);
  layer.bias.fill(0.0f);
  Tensor a = random_tensor({2, 4, 6, 6}, rng);
  Tensor b = random_tensor({2, 4, 6, 6}, rng);
  Tensor mix(a.shape());
  for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = 0.7f * a[i] - 0.4f * b[i];

  Tensor ya = conv3d_forward(a, layer);
  Tensor yb = conv3d_forward(b, layer);
  Tensor ymix = conv3d_forward(mix, layer);
  for (std::size_t i = 0; i < ymix.size(); ++i)
    CHECK(std::fabs(ymix[i] - (0.7f * ya[i] - 0.4f * yb[i])) <= 1e-5);
}

TEST_CASE("conv3d error kinds") {
  Rng rng(105);
  Tensor x = random_tensor({3, 2, 5, 5}, rng);
  SUBCASE("kernel deeper than the input") {
    Conv3dLayer layer = random_conv(2, 3, 4, rng);
    CHECK(thrown_kind([&] { conv3d_forward(x, layer); }) == ErrorKind::KernelTooDeep);
  }
  SUBCASE("channel mismatch") {
    Conv3dLayer layer = random_conv(2, 4, 1, rng);
    CHECK(thrown_kind([&] { conv3d_forward(x, layer); }) == ErrorKind::ShapeMismatch);
  }
  SUBCASE("grad_out of the wrong shape") {
    Conv3dLayer layer = random_conv(2, 3, 1, rng);
    Tensor bad({2, 2, 2, 2});
    CHECK(thrown_kind([&] { conv3d_backward(x, layer, bad); }) == ErrorKind::ShapeMismatch);
  }
}

TEST_CASE("conv3d backward basics") {
  Rng rng(106);
  Tensor x = random_tensor({2, 3, 5, 5}, rng);
  Conv3dLayer layer = random_conv(2, 2, 2, rng);

  SUBCASE("zero grad_out yields zero gradients") {
    Tensor zero({2, 2, 3, 3});
    Conv3dGrads grads = conv3d_backward(x, layer, zero);
    for (std::size_t i = 0; i < grads.kernels.size(); ++i) CHECK(grads.kernels[i] == 0.0f);
    for (std::size_t i = 0; i < grads.x.size(); ++i) CHECK(grads.x[i] == 0.0f);
    for (std::size_t i = 0; i < grads.bias.size(); ++i) CHECK(grads.bias[i] == 0.0f);
  }
  SUBCASE("a single unit of grad_out copies the input patch into grad_kernels") {
    Tensor grad_out({2, 2, 3, 3});
    const std::size_t f = 1, zd = 1, zy = 2, zx = 0;
    grad_out[((f * 2 + zd) * 3 + zy) * 3 + zx] = 1.0f;
    Conv3dGrads grads = conv3d_backward(x, layer, grad_out);
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t n = 0; n < 2; ++n)
        for (std::size_t i = 0; i < 3; ++i)
          for (std::size_t j = 0; j < 3; ++j)
            CHECK(grads.kernels[(((f * 2 + c) * 2 + n) * 3 + i) * 3 + j] ==
                  x[((c * 3 + zd + n) * 5 + zy + i) * 5 + zx + j]);
    CHECK(grads.bias[f] == 1.0f);
    CHECK(grads.bias[0] == 0.0f);
  }
}

TEST_CASE("conv3d gradients agree with finite differences of sum(out^2)/2") {
  Rng rng(107);
  Tensor x = random_tensor({2, 3, 5, 6}, rng);
  Conv3dLayer layer = random_conv(2, 2, 2, rng);

  // analytic: grad wrt kernels with grad_out = out
  Tensor out = conv3d_forward(x, layer);
  Conv3dGrads grads = conv3d_backward(x, layer, out);

  auto loss_with_kernels = [&](const std::vector<float>& flat) {
    Conv3dLayer probe = layer;
    probe.kernels = Tensor(layer.kernels.shape(), flat);
    Tensor y = conv3d_forward(x, probe);
    double sum = 0;
    for (std::size_t i = 0; i < y.size(); ++i)
      sum += 0.5 * static_cast<double>(y[i]) * y[i];
    return sum;
  };
  std::vector<double> fd =
      finite_diff_gradient(loss_with_kernels, layer.kernels.values(), 1e-2);
  for (std::size_t i = 0; i < fd.size(); ++i)
    CHECK(std::fabs(fd[i] - grads.kernels[i]) <= 1e-3 * (1.0 + std::fabs(fd[i])));
}

TEST_CASE("maxpool3d basics") {
  Rng rng(108);
  SUBCASE("pool (1,1,1) is the identity") {
    Tensor x = random_tensor({2, 3, 4, 4}, rng);
    PoolResult res = maxpool3d(x, {1, 1, 1});
    CHECK(res.y.values() == x.values());
  }
  SUBCASE("constant input keeps the first element of each window") {
    Tensor x({1, 2, 4, 4});
    x.fill(0.5f);
    PoolResult res = maxpool3d(x, {2, 2, 2});
    REQUIRE(res.y.shape() == std::vector<std::size_t>{1, 1, 2, 2});
    for (std::size_t i = 0; i < res.y.size(); ++i) CHECK(res.y[i] == 0.5f);
    CHECK(res.argmax[0] == 0);         // window origin
    CHECK(res.argmax[1] == 2);         // next spatial window
    CHECK(res.argmax[2] == 8);
  }
  SUBCASE("window larger than the input reports PoolTooLarge") {
    Tensor x = random_tensor({1, 2, 3, 3}, rng);
    CHECK(thrown_kind([&] { maxpool3d(x, {4, 1, 1}); }) == ErrorKind::PoolTooLarge);
  }
}

TEST_CASE("maxpool3d matches the reference and drops remainders") {
  Rng rng(109);
  for (int round = 0; round < 10; ++round) {
    const std::size_t c = 1 + rng.index(3), d = 1 + rng.index(8);
    const std::size_t h = 1 + rng.index(10), w = 1 + rng.index(10);
    const std::size_t pd = 1 + rng.index(d), ph = 1 + rng.index(h), pw = 1 + rng.index(w);
    Tensor x = random_tensor({c, d, h, w}, rng);
    PoolResult res = maxpool3d(x, {pd, ph, pw});
    Tensor want = oracle::maxpool3d_reference(x, {pd, ph, pw});
    REQUIRE(res.y.shape() == want.shape());
    CHECK(res.y.values() == want.values());
  }
}

TEST_CASE("maxpool3d backward routes gradient to the argmax only") {
  Rng rng(110);
  Tensor x = random_tensor({2, 4, 6, 6}, rng);
  PoolResult res = maxpool3d(x, {2, 3, 3});

  SUBCASE("ones in grad_out place exactly one unit per window") {
    Tensor ones(res.y.shape());
    ones.fill(1.0f);
    Tensor gx = maxpool3d_backward(res, ones);
    double sum = 0;
    std::size_t nonzero = 0;
    for (std::size_t i = 0; i < gx.size(); ++i) {
      sum += gx[i];
      if (gx[i] != 0.0f) {
        ++nonzero;
        CHECK(gx[i] == 1.0f);
      }
    }
    CHECK(nonzero == res.y.size());
    CHECK(sum == doctest::Approx(static_cast<double>(res.y.size())));
  }
  SUBCASE("conservation: grad_out values land in grad_x unchanged") {
    Tensor go(res.y.shape());
    for (std::size_t i = 0; i < go.size(); ++i)
      go[i] = static_cast<float>(rng.uniform(-1, 1));
    Tensor gx = maxpool3d_backward(res, go);
    // disjoint windows route each value exactly once, so the nonzero
    // multisets agree and the sums are conserved exactly
    std::vector<float> sent, received;
    for (std::size_t i = 0; i < go.size(); ++i)
      if (go[i] != 0.0f) sent.push_back(go[i]);
    for (std::size_t i = 0; i < gx.size(); ++i)
      if (gx[i] != 0.0f) received.push_back(gx[i]);
    std::sort(sent.begin(), sent.end());
    std::sort(received.begin(), received.end());
    CHECK(sent == received);
  }
}

TEST_CASE("relu and its subgradient convention") {
  Tensor x({4});
  x[0] = -1.0f; x[1] = 0.0f; x[2] = 2.0f; x[3] = -0.5f;
  Tensor y = relu(x);
  CHECK(y[0] == 0.0f);
  CHECK(y[1] == 0.0f);
  CHECK(y[2] == 2.0f);

  Tensor go({4});
  go.fill(1.0f);
  Tensor gx = relu_backward(x, go);
  CHECK(gx[0] == 0.0f);
  CHECK(gx[1] == 0.0f);  // subgradient at 0 is 0
  CHECK(gx[2] == 1.0f);

  Rng rng(111);
  Tensor r = random_tensor({64}, rng);
  Tensor neg(r.shape());
  for (std::size_t i = 0; i < r.size(); ++i) neg[i] = -r[i];
  Tensor a = relu(r), b = relu(neg);
  for (std::size_t i = 0; i < r.size(); ++i)
    CHECK(a[i] + b[i] == doctest::Approx(std::fabs(r[i])));
}

TEST_CASE("dense layer forward and gradients") {
  SUBCASE("identity weights pass the input through") {
    DenseLayer layer;
    layer.weights = Tensor({3, 3});
    layer.bias = Tensor({3});
    for (std::size_t i = 0; i < 3; ++i) layer.weights[i * 3 + i] = 1.0f;
    std::vector<float> x{0.2f, -0.4f, 0.9f};
    CHECK(dense_forward(x, layer) == x);
  }
  SUBCASE("zero input returns the bias") {
    Rng rng(112);
    DenseLayer layer;
    layer.weights = random_tensor({4, 5}, rng);
    layer.bias = random_tensor({4}, rng);
    std::vector<float> x(5, 0.0f);
    CHECK(dense_forward(x, layer) == layer.bias.values());
  }
  SUBCASE("gradients match finite differences") {
    Rng rng(113);
    DenseLayer layer;
    layer.weights = random_tensor({3, 4}, rng);
    layer.bias = random_tensor({3}, rng);
    std::vector<float> x{0.1f, -0.7f, 0.3f, 0.5f};

    std::vector<float> y = dense_forward(x, layer);
    DenseGrads grads = dense_backward(x, layer, y);  // loss = sum(y^2)/2

    auto loss_with_weights = [&](const std::vector<float>& flat) {
      DenseLayer probe = layer;
      probe.weights = Tensor(layer.weights.shape(), flat);
      std::vector<float> out = dense_forward(x, probe);
      double sum = 0;
      for (float v : out) sum += 0.5 * static_cast<double>(v) * v;
      return sum;
    };
    std::vector<double> fd =
        finite_diff_gradient(loss_with_weights, layer.weights.values(), 1e-2);
    for (std::size_t i = 0; i < fd.size(); ++i)
      CHECK(std::fabs(fd[i] - grads.weights[i]) <= 1e-3 * (1.0 + std::fabs(fd[i])));
  }
  SUBCASE("length mismatch reports ShapeMismatch") {
    DenseLayer layer;
    layer.weights = Tensor({2, 3});
    layer.bias = Tensor({2});
    std::vector<float> x(4, 0.0f);
    CHECK(thrown_kind([&] { dense_forward(x, layer); }) == ErrorKind::ShapeMismatch);
  }
}

TEST_CASE("sigmoid_bce values and stability") {
  const double ln2 = 0.6931471805599453;
  CHECK(sigmoid_bce(0.0, 0).loss == doctest::Approx(ln2));
  CHECK(sigmoid_bce(0.0, 1).loss == doctest::Approx(ln2));
  CHECK(sigmoid_bce(0.0, 1).dlogit == doctest::Approx(-0.5));
  CHECK(sigmoid_bce(0.0, 0).dlogit == doctest::Approx(0.5));

  CHECK(sigmoid_bce(30.0, 1).loss < 1e-12);
  CHECK(std::isfinite(sigmoid_bce(30.0, 1).loss));
  CHECK(sigmoid_bce(-30.0, 1).loss == doctest::Approx(30.0).epsilon(1e-9));
  CHECK(std::isfinite(sigmoid_bce(500.0, 0).loss));
  CHECK(sigmoid_bce(500.0, 0).loss == doctest::Approx(500.0));
}

TEST_CASE("adam steps") {
  AdamHyper hyper;

  SUBCASE("zero gradient leaves parameters untouched") {
    Tensor p({3});
    p[0] = 0.5f; p[1] = -0.25f; p[2] = 1.5f;
    Tensor copy = p;
    Tensor g({3});
    std::vector<Tensor*> params{&p};
    AdamState state = AdamState::like(params);
    adam_step(params, {&g}, state, hyper);
    CHECK(p.values() == copy.values());
    CHECK(state.t == 1);
  }
  SUBCASE("one unit-gradient step from zero") {
    Tensor p({1});
    Tensor g({1});
    g[0] = 1.0f;
    std::vector<Tensor*> params{&p};
    AdamState state = AdamState::like(params);
    adam_step(params, {&g}, state, hyper);
    // bias correction makes m_hat = v_hat = 1, so the step is -alpha/(1+eps)
    CHECK(p[0] == doctest::Approx(-0.000999999990).epsilon(1e-7));
  }
  SUBCASE("two steps match the hand-unrolled recurrence") {
    Tensor p({1});
    Tensor g({1});
    g[0] = 1.0f;
    std::vector<Tensor*> params{&p};
    AdamState state = AdamState::like(params);
    adam_step(params, {&g}, state, hyper);
    adam_step(params, {&g}, state, hyper);

    // same recurrence unrolled in double
    double theta = 0, m = 0, v = 0;
    for (int t = 1; t <= 2; ++t) {
      m = 0.9 * m + 0.1 * 1.0;
      v = 0.999 * v + 0.001 * 1.0;
      const double m_hat = m / (1.0 - std::pow(0.9, t));
      const double v_hat = v / (1.0 - std::pow(0.999, t));
      theta -= 1e-3 * m_hat / (std::sqrt(v_hat) + 1e-8);
    }
    CHECK(p[0] == doctest::Approx(theta).epsilon(1e-6));
    CHECK(state.t == 2);
  }
  SUBCASE("first update magnitude never exceeds alpha") {
    for (double mag : {1e-8, 1e-3, 1.0, 1e4, 1e8}) {
      Tensor p({1});
      Tensor g({1});
      g[0] = static_cast<float>(mag);
      std::vector<Tensor*> params{&p};
      AdamState state = AdamState::like(params);
      adam_step(params, {&g}, state, hyper);
      CHECK(std::fabs(p[0]) <= hyper.alpha * (1.0 + 1e-6));
    }
  }
}

TEST_CASE("finite differences on closed-form functions") {
  auto square = [](const std::vector<float>& p) {
    return static_cast<double>(p[0]) * p[0];
  };
  std::vector<double> g = finite_diff_gradient(square, {3.0f}, 1e-3);
  CHECK(std::fabs(g[0] - 6.0) <= 1e-6);

  auto constant = [](const std::vector<float>&) { return 4.2; };
  g = finite_diff_gradient(constant, {0.3f, -2.0f}, 1e-3);
  CHECK(g[0] == 0.0);
  CHECK(g[1] == 0.0);

  auto sine = [](const std::vector<float>& p) {
    return std::sin(static_cast<double>(p[0]));
  };
  const double h = 1e-2;
  g = finite_diff_gradient(sine, {0.0f}, h);
  CHECK(std::fabs(g[0] - 1.0) <= h * h / 6.0 + 1e-9);
}
