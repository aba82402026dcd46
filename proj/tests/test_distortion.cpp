#include <gtest/gtest.h>

#include <cmath>

#include "mea/distortion.hpp"
#include "mea/errors.hpp"

using namespace mea;

namespace {

Image mid_range_image(int size, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  Tensor t(Shape{1, 3, size, size});
  for (auto& v : t.values()) v = 0.3 + 0.4 * uniform01(rng);
  return Image(std::move(t));
}

std::vector<DistortionSpec> every_kind() {
  return {DistortionSpec::identity(), DistortionSpec::noise(0.05),  DistortionSpec::blur(5, 1.5),
          DistortionSpec::jpeg(50),   DistortionSpec::dropout(0.5), DistortionSpec::crop(0.7)};
}

}  // namespace

TEST(Distortion, IdentityIsBitExact) {
  const Image x = mid_range_image(16, 1);
  Rng rng = make_rng(2);
  EXPECT_EQ(apply(DistortionSpec::identity(), x, rng), x);
  EXPECT_EQ(apply(DistortionSpec::noise(0.0), x, rng), x);
}

TEST(Distortion, NoiseMeanAbsoluteChange) {
  // Folded normal: E|N(0, 0.05)| = 0.05 * sqrt(2 / pi) ~= 0.0399.
  const Image x = mid_range_image(64, 3);
  Rng rng = make_rng(4);
  const Image y = apply(DistortionSpec::noise(0.05), x, rng);
  double mean = 0.0;
  for (std::size_t i = 0; i < x.values().size(); ++i) mean += std::abs(y.values()[i] - x.values()[i]);
  mean /= static_cast<double>(x.values().size());
  EXPECT_GE(mean, 0.03);
  EXPECT_LE(mean, 0.05);
  EXPECT_NEAR(mean, 0.05 * std::sqrt(2.0 / M_PI), 0.002);
}

TEST(Distortion, PreservesShapeAndRange) {
  Rng rng = make_rng(5);
  Tensor t(Shape{1, 3, 16, 16});
  for (auto& v : t.values()) v = uniform01(rng);
  const Image x(t);
  for (const auto& spec : every_kind()) {
    for (int rep = 0; rep < 3; ++rep) {
      const Image y = apply(spec, x, rng);
      ASSERT_EQ(y.height(), 16);
      ASSERT_EQ(y.width(), 16);
      for (double v : y.values()) {
        ASSERT_GE(v, 0.0) << spec.label();
        ASSERT_LE(v, 1.0) << spec.label();
      }
    }
  }
}

TEST(Distortion, TrainModeStaysInRange) {
  Rng rng = make_rng(6);
  ag::Var x = ag::Var::constant(mid_range_image(16, 7).tensor());
  for (const auto& spec : every_kind()) {
    const ag::Var y = apply(spec, x, rng, Mode::train);
    for (double v : y.value().values()) {
      ASSERT_GE(v, -1e-12) << spec.label();
      ASSERT_LE(v, 1.0 + 1e-12) << spec.label();
    }
  }
}

TEST(Distortion, JacobianVectorProductIsNonzero) {
  // Finite-difference directional derivative along a random direction.
  const Image x = mid_range_image(16, 8);
  Rng dir_rng = make_rng(9);
  Tensor dir(x.tensor().shape());
  for (auto& v : dir.values()) v = uniform01(dir_rng) - 0.5;
  for (const auto& spec : every_kind()) {
    // The JPEG forward pass rounds, so its secant needs a step wider than a quantizer bin.
    const double eps = spec.kind == DistortionKind::jpeg_approx ? 0.05 : 1e-4;
    Tensor plus = x.tensor(), minus = x.tensor();
    for (std::size_t i = 0; i < dir.size(); ++i) {
      plus[i] += eps * dir[i];
      minus[i] -= eps * dir[i];
    }
    // Same random draw for both evaluations.
    Rng r1 = make_rng(10), r2 = make_rng(10);
    const ag::Var yp = apply(spec, ag::Var::constant(plus), r1, Mode::train);
    const ag::Var ym = apply(spec, ag::Var::constant(minus), r2, Mode::train);
    double norm = 0.0;
    for (std::size_t i = 0; i < dir.size(); ++i) norm += std::abs(yp.value()[i] - ym.value()[i]) / (2 * eps);
    EXPECT_GT(norm, 1e-3) << spec.label();

    // The analytic backward pass also reaches the input.
    ag::Var leaf = ag::Var::leaf(x.tensor(), true);
    Rng r3 = make_rng(10);
    ag::backward(ag::mean_square(apply(spec, leaf, r3, Mode::train)));
    double g = 0.0;
    for (double v : leaf.grad().values()) g += std::abs(v);
    EXPECT_GT(g, 0.0) << spec.label();
  }
}

TEST(Distortion, DropoutTakesReplacedPixelsFromCover) {
  const Image x = mid_range_image(16, 11);
  const Image cover(16, 16, 0.0);
  Rng rng = make_rng(12);
  ag::Var cv = ag::Var::constant(cover.tensor());
  const ag::Var y = apply(DistortionSpec::dropout(0.5), ag::Var::constant(x.tensor()), rng, Mode::eval, &cv);
  int kept = 0;
  for (int py = 0; py < 16; ++py)
    for (int px = 0; px < 16; ++px) {
      const bool keep = y.value().at(0, 0, py, px) != 0.0;
      kept += keep;
      for (int c = 0; c < 3; ++c) {
        EXPECT_EQ(y.value().at(0, c, py, px), keep ? x.at(c, py, px) : 0.0);
      }
    }
  EXPECT_GT(kept, 64);
  EXPECT_LT(kept, 192);
}

TEST(Distortion, JpegEvalRoundsTrueQuantization) {
  const Image x = mid_range_image(16, 13);
  Rng rng = make_rng(14);
  const Image y = apply(DistortionSpec::jpeg(10), x, rng);
  EXPECT_FALSE(y == x);
  // Idempotent up to clamping: re-quantizing changes little.
  const Image z = apply(DistortionSpec::jpeg(10), y, rng);
  double diff = 0.0;
  for (std::size_t i = 0; i < y.values().size(); ++i) diff = std::max(diff, std::abs(z.values()[i] - y.values()[i]));
  EXPECT_LT(diff, 0.05);
}

TEST(Distortion, ParameterRangesAreValidated) {
  EXPECT_THROW(DistortionSpec::noise(0.6).validate(), ConfigError);
  EXPECT_THROW(DistortionSpec::blur(4, 1.0).validate(), ConfigError);
  EXPECT_THROW(DistortionSpec::blur(13, 1.0).validate(), ConfigError);
  EXPECT_THROW(DistortionSpec::blur(3, 0.0).validate(), ConfigError);
  EXPECT_THROW(DistortionSpec::jpeg(5).validate(), ConfigError);
  EXPECT_THROW(DistortionSpec::jpeg(96).validate(), ConfigError);
  EXPECT_THROW(DistortionSpec::dropout(0.0).validate(), ConfigError);
  EXPECT_THROW(DistortionSpec::crop(0.4).validate(), ConfigError);
  Rng rng = make_rng(1);
  EXPECT_THROW(apply(DistortionSpec::jpeg(3), mid_range_image(8, 1), rng), ConfigError);
}

TEST(DistortionPool, IdentityOnlyAlwaysIdentity) {
  const DistortionPool pool = DistortionPool::identity_only();
  Rng rng = make_rng(15);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(sample_from_pool(pool, rng).kind, DistortionKind::identity);
}

TEST(DistortionPool, FrequenciesConverge) {
  const DistortionPool pool({DistortionSpec::identity(0.5), DistortionSpec::noise(0.02, 0.5)});
  Rng rng = make_rng(16);
  int identity = 0;
  for (int i = 0; i < 10000; ++i) identity += sample_from_pool(pool, rng).kind == DistortionKind::identity;
  EXPECT_NEAR(identity / 10000.0, 0.5, 0.02);
}

TEST(DistortionPool, DefaultTrainingFrequencies) {
  const DistortionPool pool = DistortionPool::default_training();
  Rng rng = make_rng(17);
  std::map<DistortionKind, int> counts;
  for (int i = 0; i < 20000; ++i) ++counts[sample_from_pool(pool, rng).kind];
  EXPECT_NEAR(counts[DistortionKind::identity] / 20000.0, 0.4, 0.02);
  EXPECT_NEAR(counts[DistortionKind::gaussian_noise] / 20000.0, 0.2, 0.02);
  EXPECT_NEAR(counts[DistortionKind::dropout] / 20000.0, 0.1, 0.02);
}

TEST(DistortionPool, InvalidPoolsAreConfigErrors) {
  EXPECT_THROW(DistortionPool(std::vector<DistortionSpec>{}), ConfigError);
  EXPECT_THROW(DistortionPool({DistortionSpec::identity(0.5), DistortionSpec::noise(0.02, 0.4)}), ConfigError);
}

TEST(DistortionKind, StringRoundTrip) {
  for (const auto& s : every_kind()) EXPECT_EQ(distortion_kind_from_string(to_string(s.kind)), s.kind);
  EXPECT_THROW(distortion_kind_from_string("sharpen"), ConfigError);
}
