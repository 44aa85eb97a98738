#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "texlab/common.hpp"
#include "texlab/corpus.hpp"
#include "texlab/models.hpp"
#include "texlab/nn.hpp"

namespace texlab {

enum class GanLossForm { wasserstein_as_written, nonsaturating_logistic };

inline GanLossForm gan_loss_form_from_name(const std::string& s) {
  if (s == "wasserstein_as_written") return GanLossForm::wasserstein_as_written;
  if (s == "nonsaturating_logistic") return GanLossForm::nonsaturating_logistic;
  fail(ErrorCode::InvalidParams, "unknown loss form: " + s);
}

struct GanTrainConfig {
  int steps = 3000;
  int batch_size = 16;
  double lr_g = 0.002, lr_d = 0.002;
  double r1_weight = 1.0;
  GanLossForm loss_form = GanLossForm::nonsaturating_logistic;
  std::uint64_t seed = 0;
  int checkpoint_every = 500;
  double adam_beta1 = 0.0, adam_beta2 = 0.99;

  void validate() const {
    require(steps >= 1, ErrorCode::InvalidParams, "steps must be >= 1");
    require(batch_size >= 1, ErrorCode::InvalidParams, "batch_size must be >= 1");
    require(lr_g > 0 && lr_d > 0, ErrorCode::InvalidParams, "learning rates must be > 0");
    require(r1_weight >= 0, ErrorCode::InvalidParams, "r1_weight must be >= 0");
  }
};

struct EncoderTrainConfig {
  int steps = 10000;
  int batch_size = 32;
  double lr = 1e-4;
  double lr_decay_factor = 0.2;
  int lr_decay_every = 4000;
  std::uint64_t seed = 0;
  double adam_beta1 = 0.9, adam_beta2 = 0.999;

  void validate() const {
    require(steps >= 1, ErrorCode::InvalidParams, "steps must be >= 1");
    require(batch_size >= 1, ErrorCode::InvalidParams, "batch_size must be >= 1");
    require(lr > 0, ErrorCode::InvalidParams, "lr must be > 0");
    require(lr_decay_factor > 0 && lr_decay_factor <= 1, ErrorCode::InvalidParams,
            "lr_decay_factor must be in (0, 1]");
    require(lr_decay_every >= 1, ErrorCode::InvalidParams, "lr_decay_every must be >= 1");
  }
};

struct TrainRecord {
  int step = 0;
  double a = 0, b = 0;  // (loss_d, loss_g) for GAN, (loss_e, unused) for encoder
  double grad_norm = 0;
};

struct TrainLog {
  std::vector<TrainRecord> records;
  std::vector<std::string> checkpoint_paths;

  void write_gan_csv(const std::string& path) const { write_csv(path, "step,loss_d,loss_g,grad_norm", true); }
  void write_encoder_csv(const std::string& path) const { write_csv(path, "step,loss_e,grad_norm", false); }

 private:
  void write_csv(const std::string& path, const char* header, bool gan) const {
    std::ofstream f(path);
    require(f.good(), ErrorCode::IoError, "cannot write " + path);
    f << header << "\n";
    char line[160];
    for (const auto& r : records) {
      if (gan)
        std::snprintf(line, sizeof(line), "%d,%.9g,%.9g,%.9g\n", r.step, r.a, r.b, r.grad_norm);
      else
        std::snprintf(line, sizeof(line), "%d,%.9g,%.9g\n", r.step, r.a, r.grad_norm);
      f << line;
    }
  }
};

// ---- adversarial loss arithmetic ----

inline double softplus(double x) { return x > 30 ? x : std::log1p(std::exp(x)); }
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double d_loss(const std::vector<double>& real_scores, const std::vector<double>& fake_scores,
                     GanLossForm form = GanLossForm::wasserstein_as_written) {
  require(!real_scores.empty() && !fake_scores.empty(), ErrorCode::EmptyBatch,
          "d_loss needs nonempty score batches");
  double r = 0, f = 0;
  if (form == GanLossForm::wasserstein_as_written) {
    for (double s : fake_scores) f += s;
    for (double s : real_scores) r += s;
    return f / fake_scores.size() - r / real_scores.size();
  }
  for (double s : fake_scores) f += softplus(s);
  for (double s : real_scores) r += softplus(-s);
  return f / fake_scores.size() + r / real_scores.size();
}

inline double g_loss(const std::vector<double>& fake_scores,
                     GanLossForm form = GanLossForm::wasserstein_as_written) {
  require(!fake_scores.empty(), ErrorCode::EmptyBatch, "g_loss needs a nonempty score batch");
  double f = 0;
  if (form == GanLossForm::wasserstein_as_written) {
    for (double s : fake_scores) f += s;
    return -f / fake_scores.size();
  }
  for (double s : fake_scores) f += softplus(-s);
  return f / fake_scores.size();
}

// Score-space gradients of the losses above.
inline void d_loss_grads(const std::vector<double>& real, const std::vector<double>& fake,
                         GanLossForm form, std::vector<double>& dreal, std::vector<double>& dfake) {
  dreal.resize(real.size());
  dfake.resize(fake.size());
  if (form == GanLossForm::wasserstein_as_written) {
    for (auto& v : dreal) v = -1.0 / real.size();
    for (auto& v : dfake) v = 1.0 / fake.size();
    return;
  }
  for (std::size_t i = 0; i < real.size(); ++i) dreal[i] = -sigmoid(-real[i]) / real.size();
  for (std::size_t i = 0; i < fake.size(); ++i) dfake[i] = sigmoid(fake[i]) / fake.size();
}

inline void g_loss_grads(const std::vector<double>& fake, GanLossForm form,
                         std::vector<double>& dfake) {
  dfake.resize(fake.size());
  if (form == GanLossForm::wasserstein_as_written) {
    for (auto& v : dfake) v = -1.0 / fake.size();
    return;
  }
  for (std::size_t i = 0; i < fake.size(); ++i) dfake[i] = -sigmoid(-fake[i]) / fake.size();
}

// ---- helpers ----

template <typename S, typename V>
std::vector<std::vector<S>*> collect_vectors(V& visitable) {
  std::vector<std::vector<S>*> out;
  visitable.visit([&out](const char*, std::vector<S>& v) { out.push_back(&v); });
  return out;
}

template <typename S>
double grad_norm(const std::vector<const std::vector<S>*>& grads) {
  double s = 0;
  for (const auto* g : grads) s += sum_squares(*g);
  return std::sqrt(s);
}

template <typename S>
std::vector<const std::vector<S>*> as_const(const std::vector<std::vector<S>*>& v) {
  return {v.begin(), v.end()};
}

namespace detail {

template <typename S>
std::vector<std::vector<S>> snapshot_params(const std::vector<std::vector<S>*>& ps) {
  std::vector<std::vector<S>> out;
  out.reserve(ps.size());
  for (auto* p : ps) out.push_back(*p);
  return out;
}

template <typename S>
void restore_params(const std::vector<std::vector<S>>& snap, const std::vector<std::vector<S>*>& ps) {
  for (std::size_t i = 0; i < ps.size(); ++i) *ps[i] = snap[i];
}

}  // namespace detail

using CheckpointHook = std::function<void(int step)>;

// Adversarial training of (G, D) on the corpus crops. Each batch slot draws a
// family uniformly and then one of its crops uniformly, so batches mix both
// diversity axes. R1 gradient penalty is applied on the real batch.
template <typename S>
TrainLog train_gan(const CorpusCrops& corpus, const GanTrainConfig& cfg, ModelBundleT<S>& bundle,
                   const CheckpointHook& checkpoint_hook = {}) {
  cfg.validate();
  require(!corpus.crops.empty() && corpus.total() > 0, ErrorCode::EmptyCorpus, "corpus is empty");
  for (const auto& fam : corpus.crops)
    require(!fam.empty(), ErrorCode::EmptyCorpus, "corpus family without crops");
  const int B = cfg.batch_size;
  const int d = bundle.dims.latent_dim;
  const int S_img = bundle.dims.image_size;
  for (const auto& fam : corpus.crops)
    for (const auto& img : fam)
      require(img.height == S_img && img.width == S_img, ErrorCode::SizeMismatch,
              "corpus crop size does not match model image_size");

  const std::uint64_t phi_before = phi_checksum(bundle);
  bundle.seeds["gan"] = cfg.seed;

  auto d_params = collect_vectors<S>(bundle.disc);
  std::vector<std::vector<S>*> g_params;
  if (!bundle.mapping.identity) g_params = collect_vectors<S>(bundle.mapping);
  for (auto* p : collect_vectors<S>(bundle.synthesis)) g_params.push_back(p);

  Adam<S> opt_d, opt_g;
  opt_d.beta1 = opt_g.beta1 = cfg.adam_beta1;
  opt_d.beta2 = opt_g.beta2 = cfg.adam_beta2;

  auto snap_d = detail::snapshot_params<S>(d_params);
  auto snap_g = detail::snapshot_params<S>(g_params);
  int snap_step = 0;

  typename Discriminator<S>::Grads dgrads;
  typename MappingNet<S>::Grads mgrads;
  typename SynthesisNet<S>::Grads sgrads;

  TrainLog log;
  log.records.reserve(cfg.steps);

  Tensor<S> real(B, bundle.dims.channels, S_img, S_img);
  for (int step = 0; step < cfg.steps; ++step) {
    // ---- D update ----
    Rng batch_rng(derive_seed(cfg.seed, "gan-batch", step));
    for (int i = 0; i < B; ++i) {
      const int fi = batch_rng.uniform_int(0, static_cast<int>(corpus.crops.size()) - 1);
      const int ci = batch_rng.uniform_int(0, static_cast<int>(corpus.crops[fi].size()) - 1);
      copy_into_tensor(corpus.crops[fi][ci], real, i);
    }
    Tensor<S> z = sample_z_batch<S>(B, d, derive_seed(cfg.seed, "gan-z-d", step));
    Tensor<S> fake = bundle.synthesis.forward(bundle.mapping.forward(z));

    typename Discriminator<S>::Cache c_real, c_fake;
    Tensor<S> sr = bundle.disc.forward(real, c_real);
    Tensor<S> sf = bundle.disc.forward(fake, c_fake);
    std::vector<double> real_scores(sr.v.begin(), sr.v.end());
    std::vector<double> fake_scores(sf.v.begin(), sf.v.end());
    double loss_d = d_loss(real_scores, fake_scores, cfg.loss_form);

    std::vector<double> dreal, dfake;
    d_loss_grads(real_scores, fake_scores, cfg.loss_form, dreal, dfake);
    dgrads.match(bundle.disc);
    Tensor<S> dsr = Tensor<S>::vectors(B, 1), dsf = Tensor<S>::vectors(B, 1);
    for (int i = 0; i < B; ++i) {
      dsr.v[i] = static_cast<S>(dreal[i]);
      dsf.v[i] = static_cast<S>(dfake[i]);
    }
    bundle.disc.backward(c_real, dsr, &dgrads, nullptr);
    bundle.disc.backward(c_fake, dsf, &dgrads, nullptr);
    if (cfg.r1_weight > 0) {
      const double penalty_sum = bundle.disc.r1_penalty_grad(c_real, cfg.r1_weight / (2.0 * B), dgrads);
      loss_d += 0.5 * cfg.r1_weight * penalty_sum / B;
    }
    auto d_grad_ptrs = collect_vectors<S>(dgrads);
    const double gnorm_d = grad_norm<S>(as_const<S>(d_grad_ptrs));
    opt_d.step(cfg.lr_d, d_params, as_const<S>(d_grad_ptrs));

    // ---- G update ----
    Tensor<S> zg = sample_z_batch<S>(B, d, derive_seed(cfg.seed, "gan-z-g", step));
    typename MappingNet<S>::Cache mc;
    typename SynthesisNet<S>::Cache sc;
    typename Discriminator<S>::Cache dc;
    Tensor<S> w = bundle.mapping.forward(zg, &mc);
    Tensor<S> img = bundle.synthesis.forward(w, &sc);
    Tensor<S> sg = bundle.disc.forward(img, dc);
    std::vector<double> gen_scores(sg.v.begin(), sg.v.end());
    const double loss_g = g_loss(gen_scores, cfg.loss_form);

    std::vector<double> dgen;
    g_loss_grads(gen_scores, cfg.loss_form, dgen);
    Tensor<S> dsg = Tensor<S>::vectors(B, 1);
    for (int i = 0; i < B; ++i) dsg.v[i] = static_cast<S>(dgen[i]);
    Tensor<S> dimg;
    bundle.disc.backward(dc, dsg, nullptr, &dimg);
    mgrads.match(bundle.mapping);
    sgrads.match(bundle.synthesis);
    Tensor<S> dw;
    bundle.synthesis.backward(sc, dimg, &sgrads, &dw);
    bundle.mapping.backward(mc, dw, &mgrads, nullptr);
    std::vector<std::vector<S>*> g_grad_ptrs;
    if (!bundle.mapping.identity) g_grad_ptrs = collect_vectors<S>(mgrads);
    for (auto* p : collect_vectors<S>(sgrads)) g_grad_ptrs.push_back(p);
    opt_g.step(cfg.lr_g, g_params, as_const<S>(g_grad_ptrs));

    TrainRecord rec;
    rec.step = step;
    rec.a = loss_d;
    rec.b = loss_g;
    rec.grad_norm = gnorm_d;
    if (!std::isfinite(rec.a) || !std::isfinite(rec.b) || !std::isfinite(rec.grad_norm)) {
      detail::restore_params(snap_d, d_params);
      detail::restore_params(snap_g, g_params);
      fail(ErrorCode::DivergenceDetected,
           "non-finite loss at step " + std::to_string(step) + "; parameters restored to step " +
               std::to_string(snap_step));
    }
    log.records.push_back(rec);

    if (cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0) {
      snap_d = detail::snapshot_params<S>(d_params);
      snap_g = detail::snapshot_params<S>(g_params);
      snap_step = step + 1;
      if (checkpoint_hook) checkpoint_hook(step + 1);
    }
  }
  bundle.generator_trained = true;
  require(phi_checksum(bundle) == phi_before, ErrorCode::FrozenParamsMutated,
          "feature extractor changed during GAN training");
  return log;
}

// Mean over the batch of ||w - F(G(w))||^2; forward only.
template <typename S>
double encoder_loss(const std::vector<LatentWT<S>>& w_batch, const ModelBundleT<S>& bundle) {
  require(!w_batch.empty(), ErrorCode::EmptyBatch, "encoder_loss needs a nonempty batch");
  const int d = bundle.dims.latent_dim;
  Tensor<S> w = Tensor<S>::vectors(static_cast<int>(w_batch.size()), d);
  for (std::size_t i = 0; i < w_batch.size(); ++i) {
    require(static_cast<int>(w_batch[i].v.size()) == d, ErrorCode::DimMismatch,
            "latent dim mismatch in encoder_loss");
    std::copy(w_batch[i].v.begin(), w_batch[i].v.end(), w.item(static_cast<int>(i)));
  }
  Tensor<S> img = bundle.synthesis.forward(w);
  Tensor<S> what = encode_batch(bundle, img);
  double loss = 0;
  for (std::size_t i = 0; i < w.v.size(); ++i) {
    const double diff = static_cast<double>(w.v[i]) - what.v[i];
    loss += diff * diff;
  }
  return loss / w_batch.size();
}

// Latent-domain reconstruction consistency: every step draws fresh z, maps to
// w, synthesizes, and trains only the encoder to recover w. The generator and
// mapping stay frozen (checksum-verified) and no image-domain loss is used;
// note the signature takes no corpus.
template <typename S>
TrainLog train_encoder(ModelBundleT<S>& bundle, const EncoderTrainConfig& cfg) {
  cfg.validate();
  require(bundle.generator_trained, ErrorCode::MissingArtifact,
          "train_encoder requires a trained generator (run GAN training first)");
  const int B = cfg.batch_size;
  const int d = bundle.dims.latent_dim;
  const std::uint64_t gen_before = generator_checksum(bundle);
  const std::uint64_t phi_before = phi_checksum(bundle);
  bundle.seeds["encoder"] = cfg.seed;

  auto e_params = collect_vectors<S>(bundle.encoder);
  Adam<S> opt;
  opt.beta1 = cfg.adam_beta1;
  opt.beta2 = cfg.adam_beta2;
  typename Encoder<S>::Grads egrads;

  TrainLog log;
  log.records.reserve(cfg.steps);
  for (int step = 0; step < cfg.steps; ++step) {
    Tensor<S> z = sample_z_batch<S>(B, d, derive_seed(cfg.seed, "enc-z", step));
    Tensor<S> w = bundle.mapping.forward(z);
    Tensor<S> img = bundle.synthesis.forward(w);

    typename Encoder<S>::Cache ec;
    Tensor<S> what = bundle.encoder.forward(img, ec);
    double loss = 0;
    Tensor<S> dwhat = Tensor<S>::vectors(B, d);
    for (std::size_t i = 0; i < w.v.size(); ++i) {
      const double diff = static_cast<double>(what.v[i]) - w.v[i];
      loss += diff * diff;
      dwhat.v[i] = static_cast<S>(2.0 * diff / B);
    }
    loss /= B;

    egrads.match(bundle.encoder);
    bundle.encoder.backward(ec, dwhat, &egrads, nullptr);
    auto e_grad_ptrs = collect_vectors<S>(egrads);
    const double gnorm = grad_norm<S>(as_const<S>(e_grad_ptrs));
    const double lr = cfg.lr * std::pow(cfg.lr_decay_factor, step / cfg.lr_decay_every);
    opt.step(lr, e_params, as_const<S>(e_grad_ptrs));

    if (!std::isfinite(loss) || !std::isfinite(gnorm))
      fail(ErrorCode::DivergenceDetected, "non-finite encoder loss at step " + std::to_string(step));
    TrainRecord rec;
    rec.step = step;
    rec.a = loss;
    rec.grad_norm = gnorm;
    log.records.push_back(rec);
  }
  require(generator_checksum(bundle) == gen_before, ErrorCode::FrozenParamsMutated,
          "generator parameters changed during encoder training");
  require(phi_checksum(bundle) == phi_before, ErrorCode::FrozenParamsMutated,
          "feature extractor changed during encoder training");
  bundle.encoder_trained = true;
  return log;
}

}  // namespace texlab
