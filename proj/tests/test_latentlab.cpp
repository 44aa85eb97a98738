#include <gtest/gtest.h>

#include <cmath>

#include "texlab/latentlab.hpp"
#include "texlab/training.hpp"
#include "test_util.hpp"

using namespace texlab;

namespace {

ModelDims tiny_dims() {
  ModelDims d;
  d.latent_dim = 8;
  d.image_size = 16;
  d.gen_base_channels = 16;
  d.gen_channels = {16, 8};
  d.enc_channels = {8, 8, 16, 16, 16};
  d.enc_fc = 32;
  d.disc_channels = {8, 16, 16, 16};
  d.disc_fc = 16;
  d.phi_channels = {8, 8, 16, 16};
  return d;
}

LatentWT<float> random_latent(int d, std::uint64_t seed) {
  LatentWT<float> w{std::vector<float>(d)};
  Rng rng(seed);
  for (auto& v : w.v) v = static_cast<float>(rng.normal());
  return w;
}

Image checkerboard(int size, int period) {
  Image img(3, size, size);
  const int cell = period / 2;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x)
        img.at(c, y, x) = ((y / cell + x / cell) % 2 == 0) ? -0.8f : 0.8f;
  return img;
}

// apparent period of one row profile: smallest lag whose normalized
// autocorrelation comes back up to ~1
int autocorr_peak_lag(const Image& img, int max_lag) {
  std::vector<double> profile(img.width, 0.0);
  const int y0 = img.height / 4;
  for (int x = 0; x < img.width; ++x) profile[x] = img.at(0, y0, x);
  double mean = 0;
  for (double v : profile) mean += v;
  mean /= profile.size();
  double var = 0;
  for (double v : profile) var += (v - mean) * (v - mean);
  var /= profile.size();
  for (int lag = 2; lag <= max_lag; ++lag) {
    double s = 0;
    int count = 0;
    for (int x = 0; x + lag < img.width; ++x, ++count)
      s += (profile[x] - mean) * (profile[x + lag] - mean);
    if (count > 0 && s / count >= 0.9 * var) return lag;
  }
  return -1;
}

}  // namespace

TEST(LerpW, EndpointsExactAndSymmetric) {
  const auto a = random_latent(8, 1);
  const auto b = random_latent(8, 2);
  EXPECT_EQ(lerp_w(a, b, 0.0).v, a.v);
  EXPECT_EQ(lerp_w(a, b, 1.0).v, b.v);
  for (double t : {0.25, 0.5, 0.75}) EXPECT_EQ(lerp_w(a, b, t).v, lerp_w(b, a, 1.0 - t).v);

  LatentWT<float> bad{std::vector<float>(5, 0.f)};
  EXPECT_THROW(lerp_w(a, bad, 0.5), Error);
}

TEST(LerpW, MatchesReferenceFormulaToTightTolerance) {
  // double-precision path: exact linear algebra against the reference formula
  LatentWT<double> a{std::vector<double>(8)}, b{std::vector<double>(8)};
  Rng rng(3);
  for (auto& v : a.v) v = rng.normal();
  for (auto& v : b.v) v = rng.normal();
  for (double t : {0.1, 0.37, 0.5, 0.93}) {
    const auto out = lerp_w(a, b, t);
    for (std::size_t i = 0; i < out.v.size(); ++i) {
      const double ref = (1.0 - t) * a.v[i] + t * b.v[i];
      EXPECT_NEAR(out.v[i], ref, 1e-9);
    }
  }
}

TEST(MeanW, SingleSampleIsExactlyTheMappedLatent) {
  auto b = create_bundle<float>(tiny_dims(), 5);
  const auto mean = estimate_mean_w(b, 1, 123);
  Tensor<float> z = sample_z_batch<float>(1, 8, derive_seed(123, "mean-w", 0));
  Tensor<float> w = b.mapping.forward(z);
  EXPECT_EQ(mean.v, std::vector<float>(w.v.begin(), w.v.end()));
}

TEST(MeanW, IdentityMappingObeysStandardErrorBound) {
  ModelDims d = tiny_dims();
  d.latent_dim = 32;
  auto b = create_bundle<float>(d, 6, /*identity_mapping=*/true);
  const int n = 10000;
  const auto mean = estimate_mean_w(b, n, 7);
  double norm = 0;
  for (float v : mean.v) norm += static_cast<double>(v) * v;
  norm = std::sqrt(norm);
  EXPECT_LE(norm, 3.0 * std::sqrt(32.0 / n));
}

TEST(MeanW, TwoSeedsConvergeToTheSameVector) {
  auto b = create_bundle<float>(tiny_dims(), 8);
  const auto m1 = estimate_mean_w(b, 100000, 11);
  const auto m2 = estimate_mean_w(b, 100000, 12);
  for (std::size_t i = 0; i < m1.v.size(); ++i) EXPECT_NEAR(m1.v[i], m2.v[i], 0.05);
}

TEST(GlobalInterpolate, TwoStepsAreExactlyTheEndpoints) {
  auto b = create_bundle<float>(tiny_dims(), 13);
  const auto path = global_interpolate(b, 21, 2);
  ASSERT_EQ(path.frames.size(), 2u);
  EXPECT_EQ(path.frames[0].data, synthesize(path.w_a, b).pixels.data);
  EXPECT_EQ(path.frames[1].data, synthesize(path.w_b, b).pixels.data);

  // deterministic given seed
  const auto path2 = global_interpolate(b, 21, 2);
  EXPECT_EQ(path2.frames[0].data, path.frames[0].data);
  EXPECT_THROW(global_interpolate(b, 21, 1), Error);
}

TEST(GlobalInterpolate, EveryFrameComesFromItsLatent) {
  auto b = create_bundle<float>(tiny_dims(), 14);
  const auto path = global_interpolate(b, 22, 5);
  ASSERT_EQ(path.latents.size(), 5u);
  for (int i = 0; i < 5; ++i) {
    LatentWT<float> wi{path.latents[i]};
    EXPECT_EQ(path.frames[i].data, synthesize(wi, b).pixels.data);
  }
}

TEST(GramTargetInterpolate, StationaryWhenStartingAtTheEndpoint) {
  auto b = create_bundle<float>(tiny_dims(), 15);
  const Image ia = synthesize(random_latent(8, 16), b).pixels;
  const Image ib = synthesize(random_latent(8, 17), b).pixels;
  const Image out = gram_target_interpolate(ia, ib, 0.0, b, 20, 0.02, 23, &ia);
  EXPECT_EQ(out.data, ia.data);  // zero loss, zero gradient, image unchanged
}

TEST(GramTargetInterpolate, ReducesGramDistanceFromNoiseStart) {
  auto b = create_bundle<float>(tiny_dims(), 18);
  const Image ia = synthesize(random_latent(8, 19), b).pixels;
  const Image ib = synthesize(random_latent(8, 20), b).pixels;

  // initial noise image at the same seed the optimizer uses
  Tensor<float> u(1, 3, 16, 16);
  Rng rng(derive_seed(24, "gram-interp"));
  for (auto& v : u.v) v = static_cast<float>(rng.normal(0.0, 0.1));
  Image start = from_tensor(u);
  for (auto& v : start.data) v = clamp_unit(v);
  const double initial = gram_loss(start, ia, b);

  const Image out = gram_target_interpolate(ia, ib, 0.0, b, 400, 0.02, 24);
  const double final_d = gram_loss(out, ia, b);
  EXPECT_LT(final_d, initial / 5.0);

  for (float v : out.data) {
    ASSERT_GE(v, -1.f);
    ASSERT_LE(v, 1.f);
  }
}

TEST(SynthesizeCrops, ZeroSigmaReturnsOriginalLatentExactly) {
  auto b = create_bundle<float>(tiny_dims(), 25);
  const auto w = random_latent(8, 26);
  InversionConfig cfg;
  cfg.max_iters = 15;
  cfg.seed = 27;
  const auto crops = synthesize_crops(w, 3, 0.0, b, cfg);
  ASSERT_EQ(crops.size(), 3u);
  for (const auto& [latent, img] : crops) {
    EXPECT_EQ(latent.v, w.v);  // zero gradient at the start
    EXPECT_EQ(img.data, synthesize(w, b).pixels.data);
  }
}

TEST(SynthesizeCrops, PositiveSigmaGivesDistinctLatents) {
  auto b = create_bundle<float>(tiny_dims(), 28);
  const auto w = random_latent(8, 29);
  InversionConfig cfg;
  cfg.max_iters = 5;
  cfg.seed = 30;
  const auto crops = synthesize_crops(w, 4, 0.1, b, cfg);
  for (std::size_t i = 0; i < crops.size(); ++i)
    for (std::size_t j = i + 1; j < crops.size(); ++j) {
      double dist = 0;
      for (std::size_t k = 0; k < crops[i].first.v.size(); ++k) {
        const double d = static_cast<double>(crops[i].first.v[k]) - crops[j].first.v[k];
        dist += d * d;
      }
      EXPECT_GT(dist, 0.0);
    }
}

TEST(TransformImage, IdentityCases) {
  const Image img = checkerboard(32, 8);
  TransformSpec scale1;
  scale1.kind = TransformKind::scale;
  scale1.scale_factor = 1.0;
  EXPECT_EQ(transform_image(img, scale1).data, img.data);

  TransformSpec zero_color;
  zero_color.kind = TransformKind::color_perturb;
  zero_color.color_offset = {0, 0, 0};
  EXPECT_EQ(transform_image(img, zero_color).data, img.data);
}

TEST(TransformImage, ScaleDoublesApparentPeriod) {
  // vertical stripes: constant along y, so scaling cannot blend rows
  Image img(3, 32, 32);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x) img.at(c, y, x) = (x / 4) % 2 == 0 ? -0.8f : 0.8f;
  EXPECT_EQ(autocorr_peak_lag(img, 12), 8);
  TransformSpec spec;
  spec.kind = TransformKind::scale;
  spec.scale_factor = 2.0;
  const Image out = transform_image(img, spec);
  EXPECT_EQ(autocorr_peak_lag(out, 24), 16);
}

TEST(TransformImage, ColorOffsetsShiftChannelMeans) {
  // values at +-0.5 so the offsets never clamp
  Image img = checkerboard(32, 8);
  for (auto& v : img.data) v *= 0.5f;
  TransformSpec spec;
  spec.kind = TransformKind::color_perturb;
  spec.color_offset = {0.25, -0.25, 0.0};
  const Image out = transform_image(img, spec);
  for (int c = 0; c < 3; ++c) {
    double m_in = 0, m_out = 0;
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x) {
        m_in += img.at(c, y, x);
        m_out += out.at(c, y, x);
      }
    EXPECT_NEAR((m_out - m_in) / (32 * 32), spec.color_offset[c], 1e-5);
  }
}

TEST(TransformImage, InvalidSpecsRejected) {
  const Image img = checkerboard(32, 8);
  TransformSpec bad_scale;
  bad_scale.kind = TransformKind::scale;
  bad_scale.scale_factor = 3.0;
  EXPECT_THROW(
      try { transform_image(img, bad_scale); } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::InvalidSpec);
        throw;
      },
      Error);
  TransformSpec bad_color;
  bad_color.kind = TransformKind::color_perturb;
  bad_color.color_offset = {0.9, 0, 0};
  EXPECT_THROW(transform_image(img, bad_color), Error);
}

TEST(LocalInterpolate, RequiresTrainedEncoderAndIsDeterministic) {
  auto b = create_bundle<float>(tiny_dims(), 31);
  const auto w = random_latent(8, 32);
  TransformSpec spec;
  spec.kind = TransformKind::color_perturb;
  spec.color_offset = {0.2, 0.0, -0.1};
  InversionConfig cfg;
  cfg.max_iters = 10;
  cfg.seed = 33;
  EXPECT_THROW(local_interpolate(w, spec, 4, b, cfg), Error);

  b.encoder_trained = true;  // structurally valid even without real training
  const auto p1 = local_interpolate(w, spec, 4, b, cfg);
  const auto p2 = local_interpolate(w, spec, 4, b, cfg);
  ASSERT_EQ(p1.frames.size(), 4u);
  EXPECT_EQ(p1.frames[0].data, synthesize(w, b).pixels.data);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(p1.frames[i].data, p2.frames[i].data);
}

TEST(Strips, HconcatLayout) {
  std::vector<Image> frames(3, Image(3, 8, 8));
  const Image strip = hconcat(frames, 2);
  EXPECT_EQ(strip.height, 8);
  EXPECT_EQ(strip.width, 8 * 3 + 2 * 2);
}
