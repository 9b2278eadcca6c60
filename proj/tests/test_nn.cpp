#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "radarsim/nn/adam.hpp"
#include "radarsim/nn/layers.hpp"
#include "radarsim/nn/tensor.hpp"
#include "radarsim/rng.hpp"

using radarsim::Rng;
using namespace radarsim::nn;

namespace {

using DTensor = Tensor<double>;

DTensor random_tensor(Rng& rng, int n, int c, int h, int w, double lo = -1.0, double hi = 1.0) {
  DTensor t(n, c, h, w);
  for (double& v : t.v) v = rng.uniform(lo, hi);
  return t;
}

// Random values bounded away from zero so activation kinks stay untouched by
// finite-difference probes.
DTensor off_kink_tensor(Rng& rng, int n, int c, int h, int w) {
  DTensor t(n, c, h, w);
  for (double& v : t.v) {
    const double sgn = rng.bernoulli(0.5) ? 1.0 : -1.0;
    v = sgn * rng.uniform(0.05, 1.0);
  }
  return t;
}

// Scalar probe L = sum(r .* y) turns any layer into a differentiable scalar
// function; dL/dy = r.
double probe(const DTensor& y, const DTensor& r) {
  double s = 0;
  for (size_t k = 0; k < y.v.size(); ++k) s += r.v[k] * y.v[k];
  return s;
}

void check_grad(double fd, double analytic) {
  CHECK(std::abs(fd - analytic) <= 1e-3 * std::max(1.0, std::abs(analytic)));
}

// Direct convolution with circular row padding and zero column padding; the
// independent oracle for the im2col + GEMM path.
DTensor conv_reference(const DTensor& x, const DTensor& w, const std::vector<double>& bias,
                       int sh, int sw, int pt, int pl, int oh, int ow) {
  DTensor y(x.n, w.n, oh, ow);
  for (int in = 0; in < x.n; ++in)
    for (int oc = 0; oc < w.n; ++oc)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          double acc = bias.empty() ? 0.0 : bias[oc];
          for (int ic = 0; ic < x.c; ++ic)
            for (int ky = 0; ky < w.h; ++ky)
              for (int kx = 0; kx < w.w; ++kx) {
                int ry = (oy * sh + ky - pt) % x.h;
                if (ry < 0) ry += x.h;
                const int cx = ox * sw + kx - pl;
                if (cx < 0 || cx >= x.w) continue;
                acc += w.at(oc, ic, ky, kx) * x.at(in, ic, ry, cx);
              }
          y.at(in, oc, oy, ox) = acc;
        }
  return y;
}

// Central finite difference of probe(layer.forward(x), r) in one element of
// an arbitrary value vector (input or parameter).
template <typename Forward>
double fd_probe(std::vector<double>& slot, size_t k, Forward forward, double h = 1e-5) {
  const double keep = slot[k];
  slot[k] = keep + h;
  const double lp = forward();
  slot[k] = keep - h;
  const double lm = forward();
  slot[k] = keep;
  return (lp - lm) / (2.0 * h);
}

}  // namespace

TEST_CASE("convolution matches the direct reference", "[nn]") {
  Rng rng = Rng::stream(31, "conv-ref");
  struct Case {
    int in_c, out_c, k, stride, h, w;
  };
  const Case cases[] = {
      {1, 1, 3, 1, 4, 5}, {2, 3, 3, 1, 6, 6}, {3, 2, 4, 2, 8, 6}, {2, 2, 7, 1, 8, 9},
      {1, 4, 4, 2, 6, 7}, {2, 1, 1, 1, 5, 5}, {2, 2, 4, 1, 6, 5},
  };
  for (const Case& cs : cases) {
    const int p = (cs.k - 1) / 2;
    Conv2d<double> conv = Conv2d<double>::same(cs.in_c, cs.out_c, cs.k, cs.stride, "t");
    conv.init(rng, 0.3);
    auto ps = conv.params();
    for (double& b : ps[1]->val.v) b = rng.uniform(-0.5, 0.5);
    const DTensor x = random_tensor(rng, 2, cs.in_c, cs.h, cs.w);
    const DTensor y = conv.forward(x);

    const int pad = cs.k - 1;
    const int oh = (cs.h + pad - cs.k) / cs.stride + 1;
    const int ow = (cs.w + pad - cs.k) / cs.stride + 1;
    REQUIRE(y.h == oh);
    REQUIRE(y.w == ow);
    const DTensor ref =
        conv_reference(x, ps[0]->val, ps[1]->val.v, cs.stride, cs.stride, p, p, oh, ow);
    for (size_t k = 0; k < y.v.size(); ++k)
      REQUIRE(y.v[k] == Catch::Approx(ref.v[k]).margin(1e-10));
  }
}

TEST_CASE("convolution rows wrap circularly", "[nn]") {
  Conv2d<double> conv = Conv2d<double>::same(1, 1, 3, 1, "wrap");
  auto ps = conv.params();
  for (double& v : ps[0]->val.v) v = 1.0;  // sum over the 3x3 window
  ps[1]->val.v[0] = 0.0;
  DTensor x(1, 1, 4, 3);
  x.at(0, 0, 0, 1) = 1.0;  // single spike in the first row, middle column
  const DTensor y = conv.forward(x);
  // The spike feeds its own row, the next row, and the wrapped last row.
  for (int r : {0, 1, 3})
    for (int c = 0; c < 3; ++c) CHECK(y.at(0, 0, r, c) == 1.0);
  for (int c = 0; c < 3; ++c) CHECK(y.at(0, 0, 2, c) == 0.0);
}

TEST_CASE("convolution gradients match finite differences", "[nn]") {
  Rng rng = Rng::stream(32, "conv-fd");
  struct Case {
    int in_c, out_c, k, stride, h, w;
  };
  const Case cases[] = {{2, 3, 3, 1, 4, 5}, {2, 2, 4, 2, 6, 5}, {2, 2, 4, 1, 5, 4}};
  for (const Case& cs : cases) {
    Conv2d<double> conv = Conv2d<double>::same(cs.in_c, cs.out_c, cs.k, cs.stride, "t");
    conv.init(rng, 0.3);
    auto ps = conv.params();
    for (double& b : ps[1]->val.v) b = rng.uniform(-0.5, 0.5);
    DTensor x = random_tensor(rng, 1, cs.in_c, cs.h, cs.w);
    const DTensor y = conv.forward(x);
    const DTensor r = random_tensor(rng, y.n, y.c, y.h, y.w);

    for (auto* p : ps) p->zero_grad();
    const DTensor gx = conv.backward(r, true, true);
    const DTensor gw = ps[0]->grad;
    const DTensor gb = ps[1]->grad;

    const auto loss = [&]() { return probe(conv.forward(x), r); };
    for (size_t k = 0; k < x.v.size(); ++k) check_grad(fd_probe(x.v, k, loss), gx.v[k]);
    for (size_t k = 0; k < ps[0]->val.v.size(); ++k)
      check_grad(fd_probe(ps[0]->val.v, k, loss), gw.v[k]);
    for (size_t k = 0; k < ps[1]->val.v.size(); ++k)
      check_grad(fd_probe(ps[1]->val.v, k, loss), gb.v[k]);
  }
}

TEST_CASE("convolution backward can skip parameter accumulation", "[nn]") {
  Rng rng = Rng::stream(33, "conv-accum");
  Conv2d<double> conv = Conv2d<double>::same(2, 2, 3, 1, "t");
  conv.init(rng, 0.3);
  const DTensor x = random_tensor(rng, 1, 2, 4, 4);
  const DTensor r = random_tensor(rng, 1, 2, 4, 4);
  auto ps = conv.params();

  for (auto* p : ps) p->zero_grad();
  conv.forward(x);
  const DTensor gx_acc = conv.backward(r, true, true);
  const DTensor gw_once = ps[0]->grad;

  // A second accumulating pass doubles the parameter gradient.
  conv.forward(x);
  conv.backward(r, true, true);
  for (size_t k = 0; k < gw_once.v.size(); ++k)
    CHECK(ps[0]->grad.v[k] == Catch::Approx(2.0 * gw_once.v[k]).margin(1e-12));

  // accum=false leaves parameters untouched but still yields the input grad.
  for (auto* p : ps) p->zero_grad();
  conv.forward(x);
  const DTensor gx_pure = conv.backward(r, true, false);
  for (double g : ps[0]->grad.v) CHECK(g == 0.0);
  for (double g : ps[1]->grad.v) CHECK(g == 0.0);
  for (size_t k = 0; k < gx_acc.v.size(); ++k)
    CHECK(gx_pure.v[k] == Catch::Approx(gx_acc.v[k]).margin(1e-12));
}

TEST_CASE("convolution rejects bad shapes", "[nn]") {
  Conv2d<double> conv = Conv2d<double>::same(2, 2, 3, 1, "t");
  DTensor wrong_c(1, 3, 4, 4);
  CHECK_THROWS_AS(conv.forward(wrong_c), std::invalid_argument);
  Conv2d<double> wide(1, 1, 1, 9, 1, 1, 0, 0, 0, 0, true, "w");
  DTensor narrow(1, 1, 4, 4);
  CHECK_THROWS_AS(wide.forward(narrow), std::invalid_argument);
}

TEST_CASE("zero-stuffed upsampling doubles dims and reduces to stuffing", "[nn]") {
  ConvUp2<double> up(2, 2, "up");
  auto ps = up.params();
  ps[0]->val.zero();
  ps[1]->val.zero();
  // Identity center taps: output == the zero-stuffed input.
  for (int c = 0; c < 2; ++c) ps[0]->val.at(c, c, 1, 1) = 1.0;
  Rng rng = Rng::stream(34, "up-stuff");
  const DTensor x = random_tensor(rng, 1, 2, 3, 4);
  const DTensor y = up.forward(x);
  REQUIRE(y.h == 6);
  REQUIRE(y.w == 8);
  for (int c = 0; c < 2; ++c)
    for (int yy = 0; yy < 6; ++yy)
      for (int xx = 0; xx < 8; ++xx) {
        const double want =
            (yy % 2 == 0 && xx % 2 == 0) ? x.at(0, c, yy / 2, xx / 2) : 0.0;
        CHECK(y.at(0, c, yy, xx) == Catch::Approx(want).margin(1e-12));
      }
}

TEST_CASE("upsampling gradients match finite differences", "[nn]") {
  Rng rng = Rng::stream(35, "up-fd");
  ConvUp2<double> up(2, 3, "up");
  up.init(rng, 0.3);
  auto ps = up.params();
  DTensor x = random_tensor(rng, 1, 2, 3, 4);
  const DTensor y = up.forward(x);
  const DTensor r = random_tensor(rng, y.n, y.c, y.h, y.w);
  for (auto* p : ps) p->zero_grad();
  const DTensor gx = up.backward(r, true, true);
  const DTensor gw = ps[0]->grad;

  const auto loss = [&]() { return probe(up.forward(x), r); };
  for (size_t k = 0; k < x.v.size(); ++k) check_grad(fd_probe(x.v, k, loss), gx.v[k]);
  for (size_t k = 0; k < ps[0]->val.v.size(); ++k)
    check_grad(fd_probe(ps[0]->val.v, k, loss), gw.v[k]);
}

TEST_CASE("batch normalization standardizes per channel", "[nn]") {
  Rng rng = Rng::stream(36, "bn-fwd");
  BatchNorm<double> bn(3, "bn");
  auto ps = bn.params();
  for (double& g : ps[0]->val.v) g = 1.0;
  const DTensor x = random_tensor(rng, 2, 3, 4, 4, -2.0, 2.0);
  const DTensor y = bn.forward(x);
  const size_t plane = 16;
  for (int c = 0; c < 3; ++c) {
    double mean = 0, var = 0;
    for (int in = 0; in < 2; ++in)
      for (size_t k = 0; k < plane; ++k) mean += y.plane(in, c)[k];
    mean /= 32.0;
    for (int in = 0; in < 2; ++in)
      for (size_t k = 0; k < plane; ++k) {
        const double d = y.plane(in, c)[k] - mean;
        var += d * d;
      }
    var /= 32.0;
    CHECK(mean == Catch::Approx(0.0).margin(1e-9));
    CHECK(var == Catch::Approx(1.0).margin(1e-3));  // off by eps only
  }

  BatchNorm<double> tiny(2, "tiny");
  DTensor single(1, 2, 1, 1);
  CHECK_THROWS_AS(tiny.forward(single), std::invalid_argument);
}

TEST_CASE("batch normalization gradients match finite differences", "[nn]") {
  Rng rng = Rng::stream(37, "bn-fd");
  BatchNorm<double> bn(2, "bn");
  bn.init(rng);
  auto ps = bn.params();
  DTensor x = random_tensor(rng, 2, 2, 3, 3, -2.0, 2.0);
  const DTensor y = bn.forward(x);
  const DTensor r = random_tensor(rng, y.n, y.c, y.h, y.w);
  for (auto* p : ps) p->zero_grad();
  const DTensor gx = bn.backward(r, true, true);
  const DTensor ggamma = ps[0]->grad;
  const DTensor gbeta = ps[1]->grad;

  const auto loss = [&]() { return probe(bn.forward(x), r); };
  for (size_t k = 0; k < x.v.size(); ++k) check_grad(fd_probe(x.v, k, loss), gx.v[k]);
  for (size_t k = 0; k < ps[0]->val.v.size(); ++k)
    check_grad(fd_probe(ps[0]->val.v, k, loss), ggamma.v[k]);
  for (size_t k = 0; k < ps[1]->val.v.size(); ++k)
    check_grad(fd_probe(ps[1]->val.v, k, loss), gbeta.v[k]);
}

TEST_CASE("activation gradients match finite differences", "[nn]") {
  Rng rng = Rng::stream(38, "act-fd");
  DTensor x = off_kink_tensor(rng, 1, 2, 3, 4);
  const DTensor r = random_tensor(rng, 1, 2, 3, 4);

  ReLU<double> relu;
  DTensor y = relu.forward(x);
  for (size_t k = 0; k < x.v.size(); ++k)
    CHECK(y.v[k] == (x.v[k] > 0 ? x.v[k] : 0.0));
  DTensor gx = relu.backward(r);
  for (size_t k = 0; k < x.v.size(); ++k)
    check_grad(fd_probe(x.v, k, [&]() { return probe(relu.forward(x), r); }), gx.v[k]);

  LeakyReLU<double> lrelu(0.2);
  y = lrelu.forward(x);
  for (size_t k = 0; k < x.v.size(); ++k)
    CHECK(y.v[k] == Catch::Approx(x.v[k] > 0 ? x.v[k] : 0.2 * x.v[k]).margin(1e-12));
  gx = lrelu.backward(r);
  for (size_t k = 0; k < x.v.size(); ++k)
    check_grad(fd_probe(x.v, k, [&]() { return probe(lrelu.forward(x), r); }), gx.v[k]);

  Tanh<double> tanh_l;
  tanh_l.forward(x);
  gx = tanh_l.backward(r);
  for (size_t k = 0; k < x.v.size(); ++k)
    check_grad(fd_probe(x.v, k, [&]() { return probe(tanh_l.forward(x), r); }), gx.v[k]);
}

TEST_CASE("max pooling picks the block maximum and routes its gradient", "[nn]") {
  // A shuffled lattice keeps every pairwise gap at 0.05 or more, so the
  // argmax is stable under finite-difference probes.
  std::vector<uint64_t> perm;
  radarsim::shuffled_indices(5, "pool-lattice", 0, 32, perm);
  DTensor x(1, 2, 4, 4);
  for (size_t k = 0; k < 32; ++k) x.v[k] = 0.05 * static_cast<double>(perm[k]);

  MaxPool2<double> pool;
  const DTensor y = pool.forward(x);
  REQUIRE(y.h == 2);
  REQUIRE(y.w == 2);
  for (int c = 0; c < 2; ++c)
    for (int oy = 0; oy < 2; ++oy)
      for (int ox = 0; ox < 2; ++ox) {
        double want = -1.0;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx)
            want = std::max(want, x.at(0, c, oy * 2 + dy, ox * 2 + dx));
        CHECK(y.at(0, c, oy, ox) == want);
      }

  Rng rng = Rng::stream(39, "pool-fd");
  const DTensor r = random_tensor(rng, 1, 2, 2, 2);
  const DTensor gx = pool.backward(r);
  for (size_t k = 0; k < x.v.size(); ++k)
    check_grad(fd_probe(x.v, k, [&]() { return probe(pool.forward(x), r); }), gx.v[k]);

  DTensor odd(1, 1, 3, 4);
  CHECK_THROWS_AS(pool.forward(odd), std::invalid_argument);
}

TEST_CASE("adam follows its update recurrences", "[nn]") {
  Param<double> p;
  p.alloc(1, 1, 1, 2, "p");
  p.val.v = {1.0, -2.0};
  AdamConfig cfg{0.1, 0.9, 0.999, 1e-8};
  AdamGroup group;
  std::vector<Param<double>*> ps{&p};

  double m[2] = {0, 0}, v[2] = {0, 0}, val[2] = {1.0, -2.0};
  const double grads[2][2] = {{0.5, -1.5}, {-0.25, 0.75}};
  for (int t = 1; t <= 2; ++t) {
    p.grad.v = {grads[t - 1][0], grads[t - 1][1]};
    adam_step(ps, cfg, group);
    for (int k = 0; k < 2; ++k) {
      const double g = grads[t - 1][k];
      m[k] = 0.9 * m[k] + 0.1 * g;
      v[k] = 0.999 * v[k] + 0.001 * g * g;
      const double mhat = m[k] / (1.0 - std::pow(0.9, t));
      const double vhat = v[k] / (1.0 - std::pow(0.999, t));
      val[k] -= 0.1 * mhat / (std::sqrt(vhat) + 1e-8);
      CHECK(p.val.v[k] == Catch::Approx(val[k]).margin(1e-12));
    }
    CHECK(group.t == static_cast<uint64_t>(t));
  }

  zero_grads(ps);
  for (double g : p.grad.v) CHECK(g == 0.0);
}

TEST_CASE("first adam step moves by the learning rate", "[nn]") {
  // With zeroed moments the first update is lr * g / (|g| + eps).
  Param<double> p;
  p.alloc(1, 1, 1, 1, "p");
  p.val.v = {0.0};
  p.grad.v = {0.004};
  AdamConfig cfg{1e-2, 0.5, 0.999, 1e-8};
  AdamGroup group;
  std::vector<Param<double>*> ps{&p};
  adam_step(ps, cfg, group);
  CHECK(p.val.v[0] == Catch::Approx(-1e-2).epsilon(1e-5));
}
