#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "mea/kernels.hpp"

using namespace mea::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, unsigned seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

void expect_close(const std::vector<double>& a, const std::vector<double>& b, double tol = 1e-12) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) ASSERT_NEAR(a[i], b[i], tol * (1.0 + std::abs(a[i]))) << "index " << i;
}

}  // namespace

class ConvKernels : public ::testing::TestWithParam<ConvDims> {};

TEST_P(ConvKernels, ForwardMatchesReference) {
  const ConvDims d = GetParam();
  const auto x = random_vec(std::size_t(d.n) * d.in_c * d.h * d.w, 1);
  const auto w = random_vec(std::size_t(d.out_c) * d.in_c * d.k * d.k, 2);
  const auto b = random_vec(d.out_c, 3);
  std::vector<double> y_ref(std::size_t(d.n) * d.out_c * d.h * d.w), y_omp(y_ref.size());
  ref::conv2d_forward(x, w, b, y_ref, d);
  omp::conv2d_forward(x, w, b, y_omp, d);
  expect_close(y_ref, y_omp);
}

TEST_P(ConvKernels, BackwardMatchesReference) {
  const ConvDims d = GetParam();
  const auto x = random_vec(std::size_t(d.n) * d.in_c * d.h * d.w, 4);
  const auto w = random_vec(std::size_t(d.out_c) * d.in_c * d.k * d.k, 5);
  const auto dy = random_vec(std::size_t(d.n) * d.out_c * d.h * d.w, 6);
  // Non-zero starting buffers check accumulation.
  auto dx_ref = random_vec(x.size(), 7), dx_omp = dx_ref;
  auto dw_ref = random_vec(w.size(), 8), dw_omp = dw_ref;
  auto db_ref = random_vec(d.out_c, 9), db_omp = db_ref;
  ref::conv2d_backward_input(dy, w, dx_ref, d);
  omp::conv2d_backward_input(dy, w, dx_omp, d);
  ref::conv2d_backward_params(x, dy, dw_ref, db_ref, d);
  omp::conv2d_backward_params(x, dy, dw_omp, db_omp, d);
  expect_close(dx_ref, dx_omp);
  expect_close(dw_ref, dw_omp);
  expect_close(db_ref, db_omp);
}

INSTANTIATE_TEST_SUITE_P(Shapes, ConvKernels,
                         ::testing::Values(ConvDims{1, 1, 1, 1, 1, 3}, ConvDims{2, 3, 4, 8, 8, 3},
                                           ConvDims{3, 5, 2, 7, 9, 3}, ConvDims{2, 4, 3, 16, 16, 1},
                                           ConvDims{1, 2, 3, 6, 5, 5}));

TEST(ConvReference, IdentityKernelCopiesInput) {
  const ConvDims d{1, 1, 1, 4, 4, 3};
  const auto x = random_vec(16, 10);
  std::vector<double> w(9, 0.0), b{0.0}, y(16);
  w[4] = 1.0;
  ref::conv2d_forward(x, w, b, y, d);
  expect_close(x, y, 0.0);
}

TEST(ConvReference, ZeroPaddingAtBorders) {
  // All-ones 3x3 kernel over all-ones input counts in-bounds neighbours.
  const ConvDims d{1, 1, 1, 3, 3, 3};
  std::vector<double> x(9, 1.0), w(9, 1.0), b{0.0}, y(9);
  ref::conv2d_forward(x, w, b, y, d);
  const std::vector<double> expected{4, 6, 4, 6, 9, 6, 4, 6, 4};
  expect_close(expected, y, 0.0);
}

TEST(LinearKernels, MatchReference) {
  for (const LinearDims d : {LinearDims{1, 1, 1}, LinearDims{4, 30, 7}, LinearDims{3, 65, 33}}) {
    const auto x = random_vec(std::size_t(d.n) * d.in, 11);
    const auto w = random_vec(std::size_t(d.out) * d.in, 12);
    const auto b = random_vec(d.out, 13);
    const auto dy = random_vec(std::size_t(d.n) * d.out, 14);
    std::vector<double> y_ref(dy.size()), y_omp(dy.size());
    ref::linear_forward(x, w, b, y_ref, d);
    omp::linear_forward(x, w, b, y_omp, d);
    expect_close(y_ref, y_omp);
    auto dx_ref = random_vec(x.size(), 15), dx_omp = dx_ref;
    auto dw_ref = random_vec(w.size(), 16), dw_omp = dw_ref;
    auto db_ref = random_vec(b.size(), 17), db_omp = db_ref;
    ref::linear_backward_input(dy, w, dx_ref, d);
    omp::linear_backward_input(dy, w, dx_omp, d);
    ref::linear_backward_params(x, dy, dw_ref, db_ref, d);
    omp::linear_backward_params(x, dy, dw_omp, db_omp, d);
    expect_close(dx_ref, dx_omp);
    expect_close(dw_ref, dw_omp);
    expect_close(db_ref, db_omp);
  }
}

TEST(PlaneKernels, PoolAndUpsampleMatchReference) {
  for (const PlaneDims d : {PlaneDims{1, 2, 2, 2}, PlaneDims{6, 8, 8, 4}, PlaneDims{5, 12, 6, 3}}) {
    const std::size_t full = std::size_t(d.planes) * d.h * d.w;
    const std::size_t coarse = full / (d.factor * d.factor);
    const auto x = random_vec(full, 20);
    const auto c = random_vec(coarse, 21);
    // Upsampling is described by its (coarse) input extents.
    const PlaneDims up{d.planes, d.h / d.factor, d.w / d.factor, d.factor};
    std::vector<double> p_ref(coarse), p_omp(coarse), u_ref(full), u_omp(full);
    ref::avg_pool_forward(x, p_ref, d);
    omp::avg_pool_forward(x, p_omp, d);
    expect_close(p_ref, p_omp);
    ref::upsample_forward(c, u_ref, up);
    omp::upsample_forward(c, u_omp, up);
    expect_close(u_ref, u_omp);
    auto gx_ref = random_vec(full, 22), gx_omp = gx_ref;
    ref::avg_pool_backward(c, gx_ref, d);
    omp::avg_pool_backward(c, gx_omp, d);
    expect_close(gx_ref, gx_omp);
    auto gc_ref = random_vec(coarse, 23), gc_omp = gc_ref;
    ref::upsample_backward(x, gc_ref, up);
    omp::upsample_backward(x, gc_omp, up);
    expect_close(gc_ref, gc_omp);
  }
}

TEST(PlaneKernels, PoolIsAdjointOfUpsampleUpToScale) {
  // <pool(x), c> * f^2 == <x, upsample(c)>
  const PlaneDims d{2, 8, 8, 2};
  const auto x = random_vec(128, 30);
  const auto c = random_vec(32, 31);
  std::vector<double> p(32), u(128);
  ref::avg_pool_forward(x, p, d);
  ref::upsample_forward(c, u, PlaneDims{2, 4, 4, 2});
  double lhs = 0, rhs = 0;
  for (int i = 0; i < 32; ++i) lhs += p[i] * c[i];
  for (int i = 0; i < 128; ++i) rhs += x[i] * u[i];
  EXPECT_NEAR(lhs * 4.0, rhs, 1e-12);
}

TEST(JpegKernels, MatchReference) {
  for (int quality : {10, 50, 95}) {
    const PlaneDims d{3, 16, 24, 8};
    const auto x = random_vec(std::size_t(d.planes) * d.h * d.w, 40 + quality, 0.0, 1.0);
    std::vector<double> y_ref(x.size()), y_omp(x.size());
    ref::jpeg_quantize(x, y_ref, d, luminance_table(quality));
    omp::jpeg_quantize(x, y_omp, d, luminance_table(quality));
    // The two DCT formulations differ by rounding noise, far from quantizer ties
    // for random input.
    expect_close(y_ref, y_omp, 1e-9);
  }
}

TEST(JpegKernels, ConstantBlockSurvives) {
  // A flat block has only a DC coefficient; a multiple of the DC step is exact.
  const PlaneDims d{1, 8, 8, 8};
  const auto table = luminance_table(50);
  const double level = (128.0 + 4 * table[0]) / 255.0;
  std::vector<double> x(64, level), y(64);
  ref::jpeg_quantize(x, y, d, table);
  for (double v : y) EXPECT_NEAR(v, level, 1e-12);
}

TEST(JpegKernels, QualityTableScaling) {
  // IJG: quality 50 keeps the base table; 100 maps every entry to 1.
  EXPECT_DOUBLE_EQ(luminance_table(50)[0], 16.0);
  EXPECT_DOUBLE_EQ(luminance_table(100)[0], 1.0);
  EXPECT_DOUBLE_EQ(luminance_table(75)[0], 8.0);
  EXPECT_DOUBLE_EQ(luminance_table(25)[0], 32.0);
}

TEST(Backend, DispatchFollowsSelection) {
  set_backend(Backend::reference);
  EXPECT_EQ(backend(), Backend::reference);
  set_backend(Backend::openmp);
  EXPECT_EQ(backend(), Backend::openmp);
}
