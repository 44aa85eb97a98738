#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "texlab/corpus.hpp"

using namespace texlab;
namespace fs = std::filesystem;

namespace {

FamilyParams params_for(int crop_size) {
  FamilyParams p;
  p.crop_size = crop_size;
  return p;
}

}  // namespace

TEST(Corpus, CheckerboardIsPeriodicByConstruction) {
  FamilyParams p = params_for(64);
  p.period = 8;
  p.base_size = 256;
  auto fam = make_family(FamilyKind::checkerboard, p, 0);
  const auto& img = fam.base;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < img.height - 8; ++y)
      for (int x = 0; x < img.width - 8; ++x) {
        ASSERT_EQ(img.at(c, y, x), img.at(c, y, x + 8));
        ASSERT_EQ(img.at(c, y, x), img.at(c, y + 8, x));
      }
}

TEST(Corpus, NoiseFieldSampleMeanNearZero) {
  FamilyParams p = params_for(32);
  p.sigma = 0.3;
  p.correlation_length = 1.0;
  p.base_size = 256;
  auto fam = make_family(FamilyKind::gaussian_noise_field, p, 1);
  double m = 0;
  for (float v : fam.base.data) m += v;
  m /= fam.base.data.size();
  EXPECT_NEAR(m, 0.0, 0.05);
}

TEST(Corpus, FiveTextonRuleRejectsCoarsePeriods) {
  FamilyParams p = params_for(64);
  p.period = 20;  // 64/20 < 5 repetitions
  EXPECT_THROW(
      try { make_family(FamilyKind::checkerboard, p, 0); } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::InvalidParams);
        throw;
      },
      Error);
}

TEST(Corpus, StochasticKindsBoundCorrelationLength) {
  FamilyParams p = params_for(32);
  p.correlation_length = 10.0;  // > 32/5
  EXPECT_THROW(make_family(FamilyKind::gaussian_noise_field, p, 0), Error);
}

TEST(Corpus, UnknownKindNameRejected) {
  EXPECT_THROW(
      try { family_kind_from_name("perlin"); } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::UnknownKind);
        throw;
      },
      Error);
}

TEST(Corpus, SampleCropDeterministicAndBounded) {
  FamilyParams p = params_for(32);
  p.period = 6;
  auto fam = make_family(FamilyKind::stripe_field, p, 3);

  auto c1 = sample_crop(fam, 32, 77);
  auto c2 = sample_crop(fam, 32, 77);
  EXPECT_EQ(c1.pixels.data, c2.pixels.data);
  EXPECT_EQ(c1.row, c2.row);
  EXPECT_EQ(c1.col, c2.col);

  // crop_size equal to the base side leaves a single valid origin
  auto full = sample_crop(fam, fam.base.height, 5);
  EXPECT_EQ(full.row, 0);
  EXPECT_EQ(full.col, 0);

  EXPECT_THROW(
      try { sample_crop(fam, fam.base.height + 1, 5); } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::CropTooLarge);
        throw;
      },
      Error);
}

TEST(Corpus, CropsCopyDisjointBaseWindows) {
  FamilyParams p = params_for(32);
  p.correlation_length = 3.0;
  auto fam = make_family(FamilyKind::voronoi_cells, p, 4);
  // find two crops with disjoint windows
  TextureCrop a = sample_crop(fam, 32, 1);
  TextureCrop b;
  for (std::uint64_t s = 2;; ++s) {
    b = sample_crop(fam, 32, s);
    const bool overlap_rows = a.row < b.row + 32 && b.row < a.row + 32;
    const bool overlap_cols = a.col < b.col + 32 && b.col < a.col + 32;
    if (!(overlap_rows && overlap_cols)) break;
  }
  // each crop is exactly its base window, so disjoint windows share nothing
  for (const auto* crop : {&a, &b})
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x)
          ASSERT_EQ(crop->pixels.at(c, y, x), fam.base.at(c, crop->row + y, crop->col + x));
}

TEST(Corpus, HomogeneityProxyHoldsForAllProceduralKinds) {
  const auto manifest = default_roster(32, 9, 1);
  EXPECT_EQ(manifest.families.size(), 12u);
  for (const auto& desc : manifest.families) {
    const auto fam = family_from_desc(desc);
    const auto [cov_mean, cov_var] = homogeneity_cov(fam, 32, 20, 1234);
    EXPECT_LT(cov_mean, 0.5) << desc.family_id;
    EXPECT_LT(cov_var, 0.5) << desc.family_id;
  }
}

TEST(Corpus, MaterializationIsAPureFunctionOfManifest) {
  const auto manifest = default_roster(32, 42, 3);
  const auto c1 = materialize_corpus(manifest);
  const auto c2 = materialize_corpus(manifest);
  ASSERT_EQ(c1.crops.size(), c2.crops.size());
  for (std::size_t f = 0; f < c1.crops.size(); ++f)
    for (std::size_t j = 0; j < c1.crops[f].size(); ++j)
      ASSERT_EQ(c1.crops[f][j].data, c2.crops[f][j].data);
}

TEST(Corpus, ManifestJsonRoundTrip) {
  const auto manifest = default_roster(32, 5, 40);
  const auto j = manifest_to_json(manifest);
  const auto back = manifest_from_json(j);
  EXPECT_EQ(back.crop_size, manifest.crop_size);
  EXPECT_EQ(back.seed, manifest.seed);
  ASSERT_EQ(back.families.size(), manifest.families.size());
  for (std::size_t i = 0; i < back.families.size(); ++i) {
    EXPECT_EQ(back.families[i].family_id, manifest.families[i].family_id);
    EXPECT_EQ(back.families[i].kind, manifest.families[i].kind);
    EXPECT_EQ(back.families[i].seed, manifest.families[i].seed);
    EXPECT_EQ(back.families[i].params.period, manifest.families[i].params.period);
  }
  EXPECT_EQ(manifest_to_json(back).dump(), j.dump());
}

TEST(Corpus, PngQuantizationRoundTripsBytes) {
  for (int p = 0; p < 256; ++p)
    EXPECT_EQ(to_byte(from_byte(static_cast<unsigned char>(p))), p);
}

TEST(Corpus, WriteAndLoadCorpusDirectory) {
  const auto dir = fs::temp_directory_path() / "texlab_corpus_test";
  fs::remove_all(dir);
  auto manifest = default_roster(32, 11, 2);
  manifest.families.resize(3);
  const auto corpus = materialize_corpus(manifest);
  write_corpus_dir(corpus, dir.string());
  const auto loaded = load_corpus_dir(dir.string());
  ASSERT_EQ(loaded.crops.size(), 3u);
  // loaded crops equal the quantized originals
  for (std::size_t f = 0; f < loaded.crops.size(); ++f)
    for (std::size_t j = 0; j < loaded.crops[f].size(); ++j) {
      const auto& a = corpus.crops[f][j];
      const auto& b = loaded.crops[f][j];
      for (std::size_t i = 0; i < a.data.size(); ++i)
        ASSERT_EQ(from_byte(to_byte(a.data[i])), b.data[i]);
    }
  fs::remove_all(dir);
}

TEST(Corpus, IngestDirectoryAcceptsAndRejects) {
  const auto dir = fs::temp_directory_path() / "texlab_ingest_test";
  fs::remove_all(dir);
  fs::create_directories(dir);

  Image big(3, 256, 256);
  Rng rng(1);
  for (auto& v : big.data) v = static_cast<float>(rng.uniform(-1, 1));
  write_png(big, (dir / "big.png").string());
  Image small(3, 100, 100);
  write_png(small, (dir / "small.png").string());
  std::ofstream(dir / "junk.txt") << "not an image";

  std::vector<std::pair<std::string, std::string>> rejected;
  const auto manifest = ingest_directory(dir.string(), 64, &rejected);
  ASSERT_EQ(manifest.families.size(), 1u);
  EXPECT_EQ(manifest.families[0].kind, FamilyKind::user_image);
  EXPECT_EQ(rejected.size(), 2u);  // undecodable txt + undersized png

  // the user family materializes crops from the source file
  const auto fam = family_from_desc(manifest.families[0]);
  EXPECT_EQ(fam.base.height, 256);
  const auto crop = sample_crop(fam, 64, 3);
  EXPECT_EQ(crop.pixels.height, 64);
  fs::remove_all(dir);
}

TEST(Corpus, EmptyDirectoryFails) {
  const auto dir = fs::temp_directory_path() / "texlab_empty_test";
  fs::remove_all(dir);
  fs::create_directories(dir);
  EXPECT_THROW(
      try { ingest_directory(dir.string(), 32); } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::EmptyDirectory);
        throw;
      },
      Error);
  fs::remove_all(dir);
}
