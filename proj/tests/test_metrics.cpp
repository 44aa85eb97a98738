#include <gtest/gtest.h>

#include "texlab/metrics.hpp"
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

Image constant_image(int size, float v) {
  Image img(3, size, size);
  std::fill(img.data.begin(), img.data.end(), v);
  return img;
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

Image noise_image(int size, std::uint64_t seed) {
  Image img(3, size, size);
  Rng rng(seed);
  for (auto& v : img.data) v = clamp_unit(static_cast<float>(rng.normal(0, 0.4)));
  return img;
}

// stripes running horizontally: intensity varies along y only
Image horizontal_stripes(int size, int period) {
  Image img(3, size, size);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x)
        img.at(c, y, x) = (y / (period / 2)) % 2 == 0 ? -0.7f : 0.7f;
  return img;
}

double band_energy(const std::vector<Subband>& bands, int scale, int orient) {
  for (const auto& b : bands)
    if (b.scale == scale && b.orientation == orient) {
      double e = 0;
      for (double v : b.values) e += v * v;
      return e;
    }
  return -1;
}

}  // namespace

TEST(Subbands, ConstantImageHasZeroBandpassResponse) {
  const auto bands = subband_decompose(constant_image(32, 0.37f));
  int n_bandpass = 0;
  for (const auto& b : bands) {
    if (b.scale < 0) continue;  // lowpass residual carries the DC
    ++n_bandpass;
    for (double v : b.values) ASSERT_LE(std::fabs(v), 1e-6);
  }
  EXPECT_EQ(n_bandpass, 12);  // 3 scales x 4 orientations
  EXPECT_EQ(bands.size(), 13u);
}

TEST(Subbands, OrientationSelectivityOnStripes) {
  const auto bands = subband_decompose(horizontal_stripes(32, 8));
  // variation along y excites the derivative-along-y subband (orientation 2)
  // far more than the derivative-along-x subband (orientation 0)
  for (int scale = 0; scale < 2; ++scale) {
    const double ey = band_energy(bands, scale, 2);
    const double ex = band_energy(bands, scale, 0);
    EXPECT_GT(ey, 10.0 * ex) << "scale " << scale;
  }
}

TEST(Subbands, DeterministicAndSizeChecked) {
  const Image img = noise_image(16, 1);
  const auto b1 = subband_decompose(img);
  const auto b2 = subband_decompose(img);
  for (std::size_t i = 0; i < b1.size(); ++i) ASSERT_EQ(b1[i].values, b2[i].values);

  EXPECT_THROW(
      try { subband_decompose(constant_image(8, 0.f)); } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ImageTooSmall);
        throw;
      },
      Error);
}

TEST(SubbandStats, VarianceAndAutocorrelationBounds) {
  const auto bands = subband_decompose(noise_image(32, 2));
  for (const auto& b : bands) {
    const auto st = subband_stats(b);
    EXPECT_GE(st.var, 0.0);
    EXPECT_GE(st.rho_x, -1.0);
    EXPECT_LE(st.rho_x, 1.0);
    EXPECT_GE(st.rho_y, -1.0);
    EXPECT_LE(st.rho_y, 1.0);
  }
}

TEST(Stsim, ReflexivityAndSymmetry) {
  const Image a = checkerboard(32, 8);
  const Image b = noise_image(32, 3);
  EXPECT_NEAR(stsim1(a, a), 1.0, 1e-9);
  EXPECT_NEAR(stsim2(a, a), 1.0, 1e-9);
  EXPECT_NEAR(stsim1(a, b), stsim1(b, a), 1e-9);
  EXPECT_NEAR(stsim2(a, b), stsim2(b, a), 1e-9);
}

TEST(Stsim, RangeOnRandomPairs) {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const Image a = noise_image(16, rng.next_u64());
    const Image b = trial % 3 == 0 ? checkerboard(16, 4) : noise_image(16, rng.next_u64());
    const double s1 = stsim1(a, b), s2 = stsim2(a, b);
    ASSERT_GE(s1, 0.0);
    ASSERT_LE(s1, 1.0);
    ASSERT_GE(s2, 0.0);
    ASSERT_LE(s2, 1.0);
  }
}

TEST(Stsim, ErrorPaths) {
  const Image a = checkerboard(32, 8);
  const Image small(3, 8, 8);
  EXPECT_THROW(stsim1(a, Image(3, 16, 16)), Error);
  EXPECT_THROW(stsim1(small, small), Error);
}

// Location-insensitivity: a full-period shift leaves the score unchanged, a
// half-period shift (maximal pixel-wise change) barely moves it.
TEST(Stsim, ShiftToleranceOnCheckerboard) {
  const Image img = checkerboard(64, 8);
  const Image full = cyclic_shift(img, 0, 8);
  const Image half = cyclic_shift(img, 0, 4);

  EXPECT_LE(std::fabs(stsim1(img, full) - 1.0), 1e-3);
  EXPECT_GE(stsim1(img, half), 0.95);
  EXPECT_LE(std::fabs(stsim1(img, half) - stsim1(img, img)), 0.05);

  // the pixel metric sees the maximal possible change for the half shift
  double l2 = 0;
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    const double d = static_cast<double>(img.data[i]) - half.data[i];
    l2 += d * d;
  }
  EXPECT_GT(l2 / img.data.size(), 1.0);
}

TEST(Stsim, DistinctTexturesScoreBelowIdentical) {
  const Image cb = checkerboard(32, 8);
  const Image nz = noise_image(32, 5);
  EXPECT_LT(stsim1(cb, nz), 0.9);
  EXPECT_LT(stsim2(cb, nz), 0.9);
}

TEST(ErrorDistributionOp, DeterministicNonnegativeAndSeedSensitive) {
  auto b = create_bundle<float>(tiny_dims(), 6);
  const auto d1 = latent_error_distribution(b, EncoderKind::trained, 50, 7);
  const auto d2 = latent_error_distribution(b, EncoderKind::trained, 50, 7);
  EXPECT_EQ(d1.samples, d2.samples);
  ASSERT_EQ(d1.samples.size(), 50u);
  for (double s : d1.samples) EXPECT_GE(s, 0.0);

  const auto d3 = latent_error_distribution(b, EncoderKind::random_init, 50, 7);
  EXPECT_NE(d3.samples, d1.samples);
}

TEST(ErrorDistributionOp, PercentilesInterpolate) {
  ErrorDistribution d;
  d.samples = {4.0, 1.0, 3.0, 2.0, 5.0};
  EXPECT_NEAR(d.percentile(0), 1.0, 1e-12);
  EXPECT_NEAR(d.percentile(50), 3.0, 1e-12);
  EXPECT_NEAR(d.percentile(100), 5.0, 1e-12);
  EXPECT_NEAR(d.percentile(25), 2.0, 1e-12);
  EXPECT_NEAR(d.mean(), 3.0, 1e-12);
}

TEST(Retrieval, ExactMatchRanksFirstWithUnitScore) {
  auto manifest = default_roster(32, 8, 3);
  manifest.families.resize(4);
  const auto corpus = materialize_corpus(manifest);
  const Image query = corpus.crops[2][1];
  const auto hits = retrieve_nearest(query, corpus, 3);
  ASSERT_EQ(hits.size(), 3u);
  EXPECT_EQ(hits[0].family_id, corpus.manifest.families[2].family_id);
  EXPECT_EQ(hits[0].crop_index, 1);
  EXPECT_NEAR(hits[0].score, 1.0, 1e-9);
}

TEST(Retrieval, OversizedKReturnsWholeCorpusRanked) {
  auto manifest = default_roster(32, 9, 2);
  manifest.families.resize(2);
  const auto corpus = materialize_corpus(manifest);
  const auto hits = retrieve_nearest(corpus.crops[0][0], corpus, 100);
  EXPECT_EQ(static_cast<int>(hits.size()), corpus.total());
  for (std::size_t i = 1; i < hits.size(); ++i) EXPECT_GE(hits[i - 1].score, hits[i].score);
}

TEST(Retrieval, CheckerboardQueryPrefersCheckerboards) {
  CorpusManifest manifest;
  manifest.crop_size = 32;
  manifest.seed = 10;
  FamilyParams cb;
  cb.crop_size = 32;
  cb.period = 32 / 6.0;
  FamilyParams nz;
  nz.crop_size = 32;
  nz.sigma = 0.35;
  nz.correlation_length = 1.5;
  FamilyDesc d1{"cb", FamilyKind::checkerboard, cb, 11, 4};
  FamilyDesc d2{"noise", FamilyKind::gaussian_noise_field, nz, 12, 4};
  manifest.families = {d1, d2};
  const auto corpus = materialize_corpus(manifest);

  const auto fam = family_from_desc(d1);
  const Image query = sample_crop(fam, 32, 999).pixels;
  const auto hits = retrieve_nearest(query, corpus, 1);
  EXPECT_EQ(hits[0].family_id, "cb");

  CorpusCrops empty;
  EXPECT_THROW(retrieve_nearest(query, empty, 1), Error);
}

TEST(Reports, CsvAndJsonAndHistogram) {
  MetricReport report;
  report.pairs.push_back({"a", 0.9, 0.95});
  report.pairs.push_back({"b", 0.8, 0.85});
  report.config_hash = 123;
  const auto dir = std::filesystem::temp_directory_path();
  report.write_csv((dir / "texlab_report_test.csv").string());
  report.write_json((dir / "texlab_report_test.json").string());
  EXPECT_NEAR(report.mean1(), 0.85, 1e-12);

  ErrorDistribution a, b;
  a.samples = {0.1, 0.2, 0.3};
  b.samples = {1.0, 1.1, 1.2};
  const Image hist = render_histogram(a, b);
  EXPECT_EQ(hist.height, 240);
  EXPECT_EQ(hist.width, 480);
  write_distribution_csv(a, (dir / "texlab_dist_test.csv").string());
  const auto j = distribution_summary_json(a);
  EXPECT_EQ(j.at("n").get<int>(), 3);
  std::filesystem::remove(dir / "texlab_report_test.csv");
  std::filesystem::remove(dir / "texlab_report_test.json");
  std::filesystem::remove(dir / "texlab_dist_test.csv");
}
