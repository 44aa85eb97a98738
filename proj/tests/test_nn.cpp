#include <gtest/gtest.h>

#include "texlab/nn.hpp"
#include "test_util.hpp"

using namespace texlab;

namespace {

Tensor<double> random_tensor(int n, int c, int h, int w, std::uint64_t seed) {
  Tensor<double> t(n, c, h, w);
  Rng rng(seed);
  fill_normal(t, rng);
  return t;
}

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  std::vector<double> v(n);
  Rng rng(seed);
  rng.fill_normal(v);
  return v;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

TEST(Conv, OutputShapes) {
  Rng rng(0);
  ConvP<double> p;
  p.init(3, 8, 3, 1, rng);
  Tensor<double> x = random_tensor(2, 3, 16, 16, 1);
  Tensor<double> y = conv_forward(p, x);
  EXPECT_EQ(y.n, 2);
  EXPECT_EQ(y.c, 8);
  EXPECT_EQ(y.h, 16);
  EXPECT_EQ(y.w, 16);

  ConvP<double> s2;
  s2.init(3, 4, 3, 2, rng);
  Tensor<double> y2 = conv_forward(s2, x);
  EXPECT_EQ(y2.h, 8);
  EXPECT_EQ(y2.w, 8);
}

TEST(Conv, IdentityKernelPassesInterior) {
  Rng rng(0);
  ConvP<double> p;
  p.init(1, 1, 3, 1, rng, 1.0);
  std::fill(p.weight.begin(), p.weight.end(), 0.0);
  p.weight[4] = 1.0 / p.wscale();  // center tap, undo the runtime scale
  Tensor<double> x = random_tensor(1, 1, 8, 8, 3);
  Tensor<double> y = conv_forward(p, x);
  for (int i = 1; i < 7; ++i)
    for (int j = 1; j < 7; ++j) EXPECT_NEAR(y.at(0, 0, i, j), x.at(0, 0, i, j), 1e-12);
}

TEST(Conv, GradientsMatchFiniteDifferences) {
  Rng rng(0);
  ConvP<double> p;
  p.init(2, 3, 3, 2, rng);
  Tensor<double> x = random_tensor(2, 2, 8, 8, 11);
  Tensor<double> y0 = conv_forward(p, x);
  const std::vector<double> head = random_vec(y0.size(), 12);

  Tensor<double> dy(y0.n, y0.c, y0.h, y0.w);
  dy.v.assign(head.begin(), head.end());
  ConvGrad<double> dp;
  dp.match(p);
  Tensor<double> dx;
  conv_backward(p, x, dy, &dp, &dx);

  auto f = [&]() { return dot(conv_forward(p, x).v, head); };
  EXPECT_LT(test::max_grad_rel_err(f, x.v, dx.v, test::pick_coords(x.size(), 6, 1)), 1e-6);
  EXPECT_LT(test::max_grad_rel_err(f, p.weight, dp.weight,
                                   test::pick_coords(p.weight.size(), 6, 2)),
            1e-6);
  EXPECT_LT(test::max_grad_rel_err(f, p.bias, dp.bias, {0, 1, 2}), 1e-6);
}

TEST(Dense, GradientsMatchFiniteDifferences) {
  Rng rng(0);
  DenseP<double> p;
  p.init(10, 5, rng);
  Tensor<double> x = random_tensor(3, 10, 1, 1, 21);
  const std::vector<double> head = random_vec(15, 22);

  Tensor<double> dy = Tensor<double>::vectors(3, 5);
  dy.v.assign(head.begin(), head.end());
  DenseGrad<double> dp;
  dp.match(p);
  Tensor<double> dx;
  dense_backward(p, x, dy, &dp, &dx);

  auto f = [&]() { return dot(dense_forward(p, x).v, head); };
  EXPECT_LT(test::max_grad_rel_err(f, x.v, dx.v, test::pick_coords(x.size(), 6, 3)), 1e-6);
  EXPECT_LT(test::max_grad_rel_err(f, p.weight, dp.weight,
                                   test::pick_coords(p.weight.size(), 6, 4)),
            1e-6);
}

TEST(Activations, LreluAndTanhBackward) {
  Tensor<double> z = random_tensor(1, 4, 5, 5, 31);
  const std::vector<double> head = random_vec(z.size(), 32);
  Tensor<double> dy = z;
  dy.v.assign(head.begin(), head.end());

  Tensor<double> dz = lrelu_backward(z, dy);
  auto f = [&]() { return dot(lrelu_forward(z).v, head); };
  EXPECT_LT(test::max_grad_rel_err(f, z.v, dz.v, test::pick_coords(z.size(), 8, 5)), 1e-5);

  Tensor<double> a = tanh_forward(z);
  Tensor<double> dzt = tanh_backward(a, dy);
  auto g = [&]() { return dot(tanh_forward(z).v, head); };
  EXPECT_LT(test::max_grad_rel_err(g, z.v, dzt.v, test::pick_coords(z.size(), 8, 6)), 1e-6);
}

TEST(RmsNorm, BackwardMatchesFiniteDifferences) {
  Tensor<double> z = random_tensor(2, 3, 4, 4, 41);
  const std::vector<double> head = random_vec(z.size(), 42);
  RmsCache<double> cache;
  Tensor<double> y = rmsnorm_forward(z, cache);
  Tensor<double> dy = z;
  dy.v.assign(head.begin(), head.end());
  Tensor<double> dz = rmsnorm_backward(z, cache, dy);

  auto f = [&]() {
    RmsCache<double> c2;
    return dot(rmsnorm_forward(z, c2).v, head);
  };
  EXPECT_LT(test::max_grad_rel_err(f, z.v, dz.v, test::pick_coords(z.size(), 8, 7)), 1e-6);
  (void)y;
}

TEST(Upsample, BackwardIsAdjoint) {
  Tensor<double> x = random_tensor(1, 2, 4, 4, 51);
  Tensor<double> y = upsample2_forward(x);
  Tensor<double> u = random_tensor(1, 2, 8, 8, 52);
  Tensor<double> ut = upsample2_backward(u);
  // <u, Ax> == <A^T u, x>
  double lhs = 0, rhs = 0;
  for (std::size_t i = 0; i < y.v.size(); ++i) lhs += u.v[i] * y.v[i];
  for (std::size_t i = 0; i < x.v.size(); ++i) rhs += ut.v[i] * x.v[i];
  EXPECT_NEAR(lhs, rhs, 1e-10);
}

TEST(Adam, MinimizesQuadratic) {
  std::vector<double> p = {5.0, -3.0};
  std::vector<double> g(2);
  Adam<double> opt;
  for (int i = 0; i < 2000; ++i) {
    g[0] = 2 * p[0];
    g[1] = 2 * p[1];
    opt.step(0.05, {&p}, {&g});
  }
  EXPECT_NEAR(p[0], 0.0, 1e-3);
  EXPECT_NEAR(p[1], 0.0, 1e-3);
}

TEST(Rng, DeterministicStreams) {
  Rng a(123), b(123);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
  Rng c(123);
  double m = 0, m2 = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double x = c.normal();
    m += x;
    m2 += x * x;
  }
  m /= n;
  m2 /= n;
  EXPECT_NEAR(m, 0.0, 0.05);
  EXPECT_NEAR(m2, 1.0, 0.05);
}

TEST(SeedDerivation, TagAndIndexSeparateStreams) {
  const auto a = derive_seed(7, "alpha", 0);
  const auto b = derive_seed(7, "alpha", 1);
  const auto c = derive_seed(7, "beta", 0);
  EXPECT_NE(a, b);
  EXPECT_NE(a, c);
  EXPECT_EQ(a, derive_seed(7, "alpha", 0));
}
