#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

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

CorpusCrops tiny_corpus(int crops_per_family = 6) {
  auto manifest = default_roster(16, 33, crops_per_family);
  manifest.families.resize(4);
  return materialize_corpus(manifest);
}

GanTrainConfig tiny_gan_cfg(int steps) {
  GanTrainConfig cfg;
  cfg.steps = steps;
  cfg.batch_size = 4;
  cfg.checkpoint_every = 0;
  cfg.seed = 5;
  return cfg;
}

double moving_average(const std::vector<TrainRecord>& recs, std::size_t start, std::size_t count) {
  double m = 0;
  for (std::size_t i = start; i < start + count; ++i) m += recs[i].a;
  return m / count;
}

}  // namespace

TEST(AdversarialLoss, MatchesHandComputedValues) {
  // direct evaluation of the discriminator objective
  EXPECT_DOUBLE_EQ(d_loss({3, 5}, {1, 2}), -2.5);
  // identical real and fake score distributions give zero
  EXPECT_DOUBLE_EQ(d_loss({1, 2, 3}, {1, 2, 3}), 0.0);
  EXPECT_DOUBLE_EQ(g_loss({1, 3}), -2.0);
  EXPECT_DOUBLE_EQ(g_loss({0}), 0.0);
}

TEST(AdversarialLoss, EmptyBatchesRejected) {
  EXPECT_THROW(
      try { d_loss({}, {1}); } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::EmptyBatch);
        throw;
      },
      Error);
  EXPECT_THROW(d_loss({1}, {}), Error);
  EXPECT_THROW(g_loss({}), Error);
}

TEST(AdversarialLoss, MatchesScalarReferenceOnRandomVectors) {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> real(5), fake(7);
    for (auto& v : real) v = rng.normal(0, 2);
    for (auto& v : fake) v = rng.normal(0, 2);
    double mr = 0, mf = 0;
    for (double v : real) mr += v;
    for (double v : fake) mf += v;
    mr /= real.size();
    mf /= fake.size();
    EXPECT_NEAR(d_loss(real, fake), mf - mr, 1e-6);
    EXPECT_NEAR(g_loss(fake), -mf, 1e-6);

    double ld = 0;
    for (double v : fake) ld += softplus(v) / fake.size();
    for (double v : real) ld += softplus(-v) / real.size();
    EXPECT_NEAR(d_loss(real, fake, GanLossForm::nonsaturating_logistic), ld, 1e-6);
  }
}

TEST(AdversarialLoss, LogisticGradientsMatchFiniteDifferences) {
  std::vector<double> real = {0.3, -1.2, 2.0}, fake = {-0.5, 0.7};
  std::vector<double> dreal, dfake;
  d_loss_grads(real, fake, GanLossForm::nonsaturating_logistic, dreal, dfake);
  auto f = [&]() { return d_loss(real, fake, GanLossForm::nonsaturating_logistic); };
  for (std::size_t i = 0; i < real.size(); ++i)
    EXPECT_LT(test::rel_err(test::central_diff(f, real[i], 1e-6), dreal[i]), 1e-6);
  for (std::size_t i = 0; i < fake.size(); ++i)
    EXPECT_LT(test::rel_err(test::central_diff(f, fake[i], 1e-6), dfake[i]), 1e-6);

  std::vector<double> dg;
  g_loss_grads(fake, GanLossForm::nonsaturating_logistic, dg);
  auto g = [&]() { return g_loss(fake, GanLossForm::nonsaturating_logistic); };
  for (std::size_t i = 0; i < fake.size(); ++i)
    EXPECT_LT(test::rel_err(test::central_diff(g, fake[i], 1e-6), dg[i]), 1e-6);
}

TEST(EncoderLoss, MatchesScalarReferenceAndIsOrderInvariant) {
  auto b = create_bundle<float>(tiny_dims(), 60);
  std::vector<LatentWT<float>> batch;
  Rng rng(61);
  for (int i = 0; i < 5; ++i) {
    LatentWT<float> w{std::vector<float>(8)};
    for (auto& v : w.v) v = static_cast<float>(rng.normal());
    batch.push_back(w);
  }
  const double loss = encoder_loss(batch, b);
  EXPECT_GE(loss, 0.0);

  // scalar reference path, one latent at a time
  double ref = 0;
  for (const auto& w : batch) {
    const auto img = synthesize(w, b);
    const auto what = encode(img.pixels, b);
    for (std::size_t i = 0; i < w.v.size(); ++i) {
      const double diff = static_cast<double>(w.v[i]) - what.v[i];
      ref += diff * diff;
    }
  }
  ref /= batch.size();
  EXPECT_NEAR(loss, ref, 1e-4 * std::max(1.0, ref));

  std::reverse(batch.begin(), batch.end());
  EXPECT_NEAR(encoder_loss(batch, b), loss, 1e-5 * std::max(1.0, loss));
}

TEST(EncoderLoss, EmptyBatchAndDimMismatchRejected) {
  auto b = create_bundle<float>(tiny_dims(), 62);
  EXPECT_THROW(encoder_loss<float>({}, b), Error);
  std::vector<LatentWT<float>> bad = {{std::vector<float>(3, 0.f)}};
  EXPECT_THROW(
      try { encoder_loss(bad, b); } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::DimMismatch);
        throw;
      },
      Error);
}

TEST(TrainGan, SingleStepLogsOneRecord) {
  auto b = create_bundle<float>(tiny_dims(), 63);
  const auto corpus = tiny_corpus();
  const auto log = train_gan(corpus, tiny_gan_cfg(1), b);
  ASSERT_EQ(log.records.size(), 1u);
  EXPECT_EQ(log.records[0].step, 0);
  EXPECT_TRUE(std::isfinite(log.records[0].a));
  EXPECT_TRUE(std::isfinite(log.records[0].b));
  EXPECT_TRUE(b.generator_trained);
}

TEST(TrainGan, DeterministicGivenSeeds) {
  const auto corpus = tiny_corpus();
  auto b1 = create_bundle<float>(tiny_dims(), 64);
  auto b2 = create_bundle<float>(tiny_dims(), 64);
  const auto l1 = train_gan(corpus, tiny_gan_cfg(20), b1);
  const auto l2 = train_gan(corpus, tiny_gan_cfg(20), b2);
  ASSERT_EQ(l1.records.size(), l2.records.size());
  for (std::size_t i = 0; i < l1.records.size(); ++i) {
    EXPECT_EQ(l1.records[i].a, l2.records[i].a);
    EXPECT_EQ(l1.records[i].b, l2.records[i].b);
    EXPECT_EQ(l1.records[i].grad_norm, l2.records[i].grad_norm);
  }
  EXPECT_EQ(generator_checksum(b1), generator_checksum(b2));
}

TEST(TrainGan, PhiStaysFrozenAndEmptyCorpusRejected) {
  auto b = create_bundle<float>(tiny_dims(), 65);
  const auto phi_before = phi_checksum(b);
  const auto corpus = tiny_corpus(3);
  train_gan(corpus, tiny_gan_cfg(5), b);
  EXPECT_EQ(phi_checksum(b), phi_before);

  CorpusCrops empty;
  EXPECT_THROW(
      try { train_gan(empty, tiny_gan_cfg(1), b); } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::EmptyCorpus);
        throw;
      },
      Error);
}

TEST(TrainGan, DivergenceAbortsAndRestoresSnapshot) {
  auto b = create_bundle<float>(tiny_dims(), 66);
  const auto gen_before = generator_checksum(b);
  auto cfg = tiny_gan_cfg(200);
  cfg.lr_d = 1e18;
  cfg.lr_g = 1e18;
  cfg.loss_form = GanLossForm::wasserstein_as_written;
  cfg.r1_weight = 0;
  const auto corpus = tiny_corpus(3);
  try {
    train_gan(corpus, cfg, b);
    FAIL() << "expected DivergenceDetected";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DivergenceDetected);
  }
  // snapshot restore puts the generator back at its initial state
  EXPECT_EQ(generator_checksum(b), gen_before);
}

TEST(TrainEncoder, RequiresTrainedGenerator) {
  auto b = create_bundle<float>(tiny_dims(), 67);
  EncoderTrainConfig cfg;
  cfg.steps = 1;
  EXPECT_THROW(
      try { train_encoder(b, cfg); } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::MissingArtifact);
        throw;
      },
      Error);
}

TEST(TrainEncoder, GeneratorFrozenLossDropsAndTraceIsDeterministic) {
  const auto corpus = tiny_corpus(4);
  auto b1 = create_bundle<float>(tiny_dims(), 68);
  train_gan(corpus, tiny_gan_cfg(5), b1);
  const auto gen_before = generator_checksum(b1);
  const auto phi_before = phi_checksum(b1);

  EncoderTrainConfig cfg;
  cfg.steps = 2000;
  cfg.batch_size = 8;
  cfg.lr = 3e-4;
  cfg.lr_decay_every = 4000;
  cfg.seed = 21;
  const auto log = train_encoder(b1, cfg);
  ASSERT_EQ(log.records.size(), 2000u);
  EXPECT_EQ(generator_checksum(b1), gen_before);
  EXPECT_EQ(phi_checksum(b1), phi_before);
  EXPECT_TRUE(b1.encoder_trained);

  // window-100 moving average at the end is below the start
  const double start = moving_average(log.records, 0, 100);
  const double end = moving_average(log.records, log.records.size() - 100, 100);
  EXPECT_LT(end, start);

  // identical seeds give an identical loss trace
  auto b2 = create_bundle<float>(tiny_dims(), 68);
  train_gan(corpus, tiny_gan_cfg(5), b2);
  const auto log2 = train_encoder(b2, cfg);
  for (std::size_t i = 0; i < 2000; i += 97) EXPECT_EQ(log.records[i].a, log2.records[i].a);
}

TEST(TrainLog, CsvSerialization) {
  TrainLog log;
  for (int i = 0; i < 3; ++i) {
    TrainRecord r;
    r.step = i;
    r.a = 0.5 * i;
    r.b = -0.25 * i;
    r.grad_norm = 1.0 + i;
    log.records.push_back(r);
  }
  const auto path = std::filesystem::temp_directory_path() / "texlab_log_test.csv";
  log.write_gan_csv(path.string());
  std::ifstream f(path);
  std::string header;
  std::getline(f, header);
  EXPECT_EQ(header, "step,loss_d,loss_g,grad_norm");
  std::string line;
  int rows = 0;
  while (std::getline(f, line)) ++rows;
  EXPECT_EQ(rows, 3);
  std::filesystem::remove(path);
}
