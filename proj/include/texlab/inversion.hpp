#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "texlab/common.hpp"
#include "texlab/image.hpp"
#include "texlab/models.hpp"
#include "texlab/nn.hpp"

namespace texlab {

enum class InitMode { encoder, mean_w, random };
enum class LossMode { style_gram, pixel_l2, content };

inline InitMode init_mode_from_name(const std::string& s) {
  if (s == "encoder") return InitMode::encoder;
  if (s == "mean_w") return InitMode::mean_w;
  if (s == "random") return InitMode::random;
  fail(ErrorCode::InvalidParams, "unknown init mode: " + s);
}

inline LossMode loss_mode_from_name(const std::string& s) {
  if (s == "style_gram" || s == "style") return LossMode::style_gram;
  if (s == "pixel_l2" || s == "pixel") return LossMode::pixel_l2;
  if (s == "content") return LossMode::content;
  fail(ErrorCode::InvalidParams, "unknown loss mode: " + s);
}

struct InversionConfig {
  InitMode init_mode = InitMode::encoder;
  LossMode loss_mode = LossMode::style_gram;
  int max_iters = 500;
  double lr = 0.01;
  double tol = 1e-5;  // relative loss change over 10 iterations
  std::uint64_t seed = 0;
  int restarts = 0;       // extra randomly-initialized runs, best final loss wins
  bool plain_sgd = false;  // first-order update without adaptive moments
  int content_layer = 1;

  void validate() const {
    require(max_iters >= 1, ErrorCode::InvalidParams, "max_iters must be >= 1");
    require(lr > 0, ErrorCode::InvalidParams, "lr must be > 0");
    require(tol >= 0, ErrorCode::InvalidParams, "tol must be >= 0");
    require(restarts >= 0, ErrorCode::InvalidParams, "restarts must be >= 0");
  }
};

template <typename S>
struct InversionResultT {
  LatentWT<S> w_star, w_init;
  std::vector<double> loss_trace;
  Image reconstruction;
  bool converged = false;
};
using InversionResult = InversionResultT<float>;

// ---- Gram machinery ----

// Raw channel inner-product matrix of one feature layer (no normalization).
template <typename S>
RowMat<S> gram_matrix(const typename FeatureMapsT<S>::Layer& layer) {
  require(all_finite(layer.values), ErrorCode::InvalidParams, "non-finite feature values");
  const int C = layer.channels, P = layer.side * layer.side;
  ConstMatMap<S> f(layer.values.data(), C, P);
  RowMat<S> g(C, C);
  g.noalias() = f * f.transpose();
  return g;
}

template <typename S>
RowMat<S> gram_of_tensor(const Tensor<S>& t) {
  const int C = t.c, P = t.plane();
  ConstMatMap<S> f(t.v.data(), C, P);
  RowMat<S> g(C, C);
  g.noalias() = f * f.transpose();
  return g;
}

template <typename S>
struct GramTargets {
  std::vector<RowMat<S>> grams;   // per layer
  std::vector<double> norms;      // C_l * N_l^2 per layer
};

template <typename S>
GramTargets<S> gram_targets(const std::vector<Tensor<S>>& feats) {
  GramTargets<S> t;
  for (const auto& f : feats) {
    t.grams.push_back(gram_of_tensor(f));
    t.norms.push_back(static_cast<double>(f.c) * f.plane());
  }
  return t;
}

// Sum over layers and Gram entries of ((G1 - G2) / (C_l * N_l^2))^2, plus the
// feature-space gradient when dfeats is supplied.
template <typename S>
double gram_objective(const std::vector<Tensor<S>>& feats, const GramTargets<S>& target,
                      std::vector<Tensor<S>>* dfeats) {
  double loss = 0;
  if (dfeats) dfeats->assign(feats.size(), {});
  for (std::size_t l = 0; l < feats.size(); ++l) {
    const auto& f = feats[l];
    RowMat<S> g = gram_of_tensor(f);
    const double inv = 1.0 / target.norms[l];
    RowMat<S> diff = (g - target.grams[l]) * static_cast<S>(inv);
    loss += static_cast<double>(diff.squaredNorm());
    if (dfeats) {
      // dL/dF = 2 (dL/dG) F with dL/dG = 2 * diff / norm
      Tensor<S> df(1, f.c, f.h, f.w);
      ConstMatMap<S> fm(f.v.data(), f.c, f.plane());
      MatMap<S> dfm(df.v.data(), f.c, f.plane());
      dfm.noalias() = (diff * static_cast<S>(4.0 * inv)) * fm;
      (*dfeats)[l] = std::move(df);
    }
  }
  return loss;
}

template <typename S>
double gram_loss(const Image& i1, const Image& i2, const ModelBundleT<S>& bundle) {
  require(i1.same_size(i2), ErrorCode::SizeMismatch, "gram_loss image sizes differ");
  check_image_size(i1, bundle);
  const auto f1 = bundle.phi.forward(to_tensor<S>(i1));
  const auto f2 = bundle.phi.forward(to_tensor<S>(i2));
  return gram_objective(f1, gram_targets(f2), static_cast<std::vector<Tensor<S>>*>(nullptr));
}

inline double pixel_l2_loss(const Image& i1, const Image& i2) {
  require(i1.same_size(i2), ErrorCode::SizeMismatch, "pixel_l2_loss image sizes differ");
  return mean_pixel_sq_diff(i1, i2);
}

template <typename S>
double content_loss(const Image& i1, const Image& i2, const ModelBundleT<S>& bundle, int layer = 1) {
  require(i1.same_size(i2), ErrorCode::SizeMismatch, "content_loss image sizes differ");
  check_image_size(i1, bundle);
  require(layer >= 0 && layer < static_cast<int>(bundle.dims.phi_channels.size()),
          ErrorCode::InvalidParams, "content layer out of range");
  const auto f1 = bundle.phi.forward(to_tensor<S>(i1));
  const auto f2 = bundle.phi.forward(to_tensor<S>(i2));
  double s = 0;
  for (std::size_t i = 0; i < f1[layer].v.size(); ++i) {
    const double d = static_cast<double>(f1[layer].v[i]) - f2[layer].v[i];
    s += d * d;
  }
  return s / f1[layer].v.size();
}

// ---- initialization schemes ----

template <typename S>
LatentWT<S> init_latent(const Image& image, InitMode mode, const ModelBundleT<S>& bundle,
                        std::uint64_t seed) {
  switch (mode) {
    case InitMode::encoder:
      require(bundle.encoder_trained, ErrorCode::MissingEncoder,
              "encoder init requires a trained encoder");
      return encode(image, bundle);
    case InitMode::mean_w:
      require(bundle.mean_w.has_value(), ErrorCode::MissingMeanW,
              "mean_w init requires a precomputed mean latent");
      return {*bundle.mean_w};
    case InitMode::random: {
      Tensor<S> z = sample_z_batch<S>(1, bundle.dims.latent_dim, seed);
      Tensor<S> w = bundle.mapping.forward(z);
      return {w.v};
    }
  }
  fail(ErrorCode::InvalidParams, "bad init mode");
}

// ---- the inversion objective over w ----

namespace detail {

template <typename S>
struct InversionObjective {
  const ModelBundleT<S>& bundle;
  LossMode mode;
  int content_layer;
  GramTargets<S> targets;        // style
  Tensor<S> target_feat;         // content
  Tensor<S> target_img;          // pixel

  InversionObjective(const Image& target, const ModelBundleT<S>& b, LossMode m, int layer)
      : bundle(b), mode(m), content_layer(layer) {
    Tensor<S> t = to_tensor<S>(target);
    if (mode == LossMode::style_gram) {
      targets = gram_targets(b.phi.forward(t));
    } else if (mode == LossMode::content) {
      target_feat = b.phi.forward(t)[content_layer];
    } else {
      target_img = t;
    }
  }

  // Loss at image `img` plus gradient w.r.t. the image (dimg zero-initialized here).
  double eval(const Tensor<S>& img, Tensor<S>& dimg) const {
    if (mode == LossMode::pixel_l2) {
      double loss = 0;
      dimg = Tensor<S>(img.n, img.c, img.h, img.w);
      const double inv = 1.0 / img.size();
      for (std::size_t i = 0; i < img.v.size(); ++i) {
        const double d = static_cast<double>(img.v[i]) - target_img.v[i];
        loss += d * d;
        dimg.v[i] = static_cast<S>(2.0 * d * inv);
      }
      return loss * inv;
    }
    typename FeatureExtractor<S>::Cache pc;
    const auto feats = bundle.phi.forward(img, &pc);
    std::vector<Tensor<S>> dfeats(feats.size());
    double loss = 0;
    if (mode == LossMode::style_gram) {
      loss = gram_objective(feats, targets, &dfeats);
    } else {
      const auto& f = feats[content_layer];
      Tensor<S> df(1, f.c, f.h, f.w);
      const double inv = 1.0 / f.v.size();
      for (std::size_t i = 0; i < f.v.size(); ++i) {
        const double d = static_cast<double>(f.v[i]) - target_feat.v[i];
        loss += d * d;
        df.v[i] = static_cast<S>(2.0 * d * inv);
      }
      loss *= inv;
      dfeats[content_layer] = std::move(df);
    }
    bundle.phi.backward(pc, dfeats, &dimg);
    return loss;
  }
};

template <typename S>
struct LatentAdam {
  std::vector<double> m, v;
  long t = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  void step(double lr, std::vector<S>& w, const Tensor<S>& grad, bool plain) {
    if (plain) {
      for (std::size_t i = 0; i < w.size(); ++i) w[i] -= static_cast<S>(lr * grad.v[i]);
      return;
    }
    if (m.empty()) {
      m.assign(w.size(), 0);
      v.assign(w.size(), 0);
    }
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, t), bc2 = 1.0 - std::pow(beta2, t);
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double g = grad.v[i];
      m[i] = beta1 * m[i] + (1 - beta1) * g;
      v[i] = beta2 * v[i] + (1 - beta2) * g * g;
      w[i] -= static_cast<S>(lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps));
    }
  }
};

template <typename S>
InversionResultT<S> invert_single(const Image& image, const InversionConfig& cfg,
                                  const ModelBundleT<S>& bundle, const LatentWT<S>& w0) {
  InversionObjective<S> obj(image, bundle, cfg.loss_mode, cfg.content_layer);
  InversionResultT<S> res;
  res.w_init = w0;
  std::vector<S> w = w0.v;
  std::vector<S> best_w = w;
  double best_loss = std::numeric_limits<double>::infinity();
  LatentAdam<S> opt;
  Tensor<S> wt = Tensor<S>::vectors(1, bundle.dims.latent_dim);

  for (int it = 0; it < cfg.max_iters; ++it) {
    wt.v = w;
    typename SynthesisNet<S>::Cache sc;
    Tensor<S> img = bundle.synthesis.forward(wt, &sc);
    Tensor<S> dimg;
    const double loss = obj.eval(img, dimg);
    if (!std::isfinite(loss)) {
      // abort, return best-so-far
      res.converged = false;
      break;
    }
    res.loss_trace.push_back(loss);
    if (loss < best_loss) {
      best_loss = loss;
      best_w = w;
    }
    if (cfg.tol > 0 && it >= 10) {
      const double prev = res.loss_trace[it - 10];
      const double rel = std::fabs(prev - loss) / std::max(std::fabs(prev), 1e-30);
      if (rel < cfg.tol) {
        res.converged = true;
        break;
      }
    }
    Tensor<S> dw;
    bundle.synthesis.backward(sc, dimg, nullptr, &dw);
    opt.step(cfg.lr, w, dw, cfg.plain_sgd);
  }
  res.w_star = {best_w};
  res.reconstruction = synthesize(res.w_star, bundle).pixels;
  return res;
}

}  // namespace detail

// Iterative first-order refinement of w against a target image; all network
// parameters stay frozen. Stops at max_iters or when the relative loss change
// over 10 iterations drops below tol.
template <typename S>
InversionResultT<S> invert(const Image& image, const InversionConfig& cfg,
                           const ModelBundleT<S>& bundle) {
  cfg.validate();
  check_image_size(image, bundle);
  LatentWT<S> w0 = init_latent(image, cfg.init_mode, bundle, derive_seed(cfg.seed, "invert-init"));
  InversionResultT<S> best = detail::invert_single(image, cfg, bundle, w0);
  for (int r = 0; r < cfg.restarts; ++r) {
    LatentWT<S> wr =
        init_latent(image, InitMode::random, bundle, derive_seed(cfg.seed, "invert-restart", r));
    InversionResultT<S> cand = detail::invert_single(image, cfg, bundle, wr);
    if (!cand.loss_trace.empty() &&
        (best.loss_trace.empty() || cand.loss_trace.back() < best.loss_trace.back()))
      best = std::move(cand);
  }
  return best;
}

// One encoder pass followed by one synthesis pass; no iteration.
template <typename S>
TextureCrop resynthesize(const Image& image, const ModelBundleT<S>& bundle) {
  require(bundle.encoder_trained, ErrorCode::MissingEncoder,
          "resynthesize requires a trained encoder");
  return synthesize(encode(image, bundle), bundle);
}

// ---- latent file format: "TXL1" | u32 count | u32 dim | f32 LE values ----

template <typename S>
void write_latents(const std::string& path, const std::vector<std::vector<S>>& latents) {
  require(!latents.empty(), ErrorCode::InvalidParams, "no latents to write");
  std::ofstream f(path, std::ios::binary);
  require(f.good(), ErrorCode::IoError, "cannot write " + path);
  f.write("TXL1", 4);
  const std::uint32_t count = static_cast<std::uint32_t>(latents.size());
  const std::uint32_t dim = static_cast<std::uint32_t>(latents[0].size());
  f.write(reinterpret_cast<const char*>(&count), 4);
  f.write(reinterpret_cast<const char*>(&dim), 4);
  for (const auto& l : latents) {
    require(l.size() == dim, ErrorCode::DimMismatch, "ragged latent list");
    for (S v : l) {
      const float fv = static_cast<float>(v);
      f.write(reinterpret_cast<const char*>(&fv), 4);
    }
  }
}

inline std::vector<std::vector<float>> read_latents(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), ErrorCode::MissingArtifact, "latent file not found: " + path);
  char magic[4];
  f.read(magic, 4);
  require(f.good() && std::string(magic, 4) == "TXL1", ErrorCode::IoError,
          "bad latent file magic in " + path);
  std::uint32_t count = 0, dim = 0;
  f.read(reinterpret_cast<char*>(&count), 4);
  f.read(reinterpret_cast<char*>(&dim), 4);
  std::vector<std::vector<float>> out(count, std::vector<float>(dim));
  for (auto& l : out) {
    f.read(reinterpret_cast<char*>(l.data()), static_cast<std::streamsize>(dim * sizeof(float)));
    require(f.good(), ErrorCode::IoError, "truncated latent file " + path);
  }
  return out;
}

inline void write_loss_trace_csv(const std::string& path, const std::vector<double>& trace) {
  std::ofstream f(path);
  require(f.good(), ErrorCode::IoError, "cannot write " + path);
  f << "iter,loss\n";
  char line[64];
  for (std::size_t i = 0; i < trace.size(); ++i) {
    std::snprintf(line, sizeof(line), "%zu,%.9g\n", i, trace[i]);
    f << line;
  }
}

}  // namespace texlab
