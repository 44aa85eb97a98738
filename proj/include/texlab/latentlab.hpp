#pragma once

#include <array>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "texlab/common.hpp"
#include "texlab/image.hpp"
#include "texlab/inversion.hpp"
#include "texlab/models.hpp"

namespace texlab {

template <typename S>
struct InterpolationPathT {
  LatentWT<S> w_a, w_b;
  int steps = 0;
  std::vector<std::vector<S>> latents;  // one per frame
  std::vector<Image> frames;            // frames[i] = synthesize(latents[i])
};
using InterpolationPath = InterpolationPathT<float>;

enum class TransformKind { scale, color_perturb };

struct TransformSpec {
  TransformKind kind = TransformKind::scale;
  double scale_factor = 1.0;
  std::array<double, 3> color_offset{0.0, 0.0, 0.0};

  void validate() const {
    if (kind == TransformKind::scale)
      require(scale_factor >= 0.5 && scale_factor <= 2.0, ErrorCode::InvalidSpec,
              "scale factor must lie in [0.5, 2.0]");
    else
      for (double o : color_offset)
        require(o >= -0.5 && o <= 0.5, ErrorCode::InvalidSpec,
                "color offsets must lie in [-0.5, 0.5]");
  }
};

// Monte-Carlo estimate of the mean mapped latent, in batches.
template <typename S>
LatentWT<S> estimate_mean_w(const ModelBundleT<S>& bundle, int n_samples, std::uint64_t seed) {
  require(n_samples >= 1, ErrorCode::InvalidParams, "n_samples must be >= 1");
  const int d = bundle.dims.latent_dim;
  std::vector<double> acc(d, 0.0);
  int done = 0, chunk_idx = 0;
  while (done < n_samples) {
    const int b = std::min(256, n_samples - done);
    Tensor<S> z = sample_z_batch<S>(b, d, derive_seed(seed, "mean-w", chunk_idx++));
    Tensor<S> w = bundle.mapping.forward(z);
    for (int ni = 0; ni < b; ++ni)
      for (int i = 0; i < d; ++i) acc[i] += static_cast<double>(w.item(ni)[i]);
    done += b;
  }
  LatentWT<S> mean;
  mean.v.resize(d);
  for (int i = 0; i < d; ++i) mean.v[i] = static_cast<S>(acc[i] / n_samples);
  return mean;
}

template <typename S>
LatentWT<S> lerp_w(const LatentWT<S>& a, const LatentWT<S>& b, double t) {
  require(a.v.size() == b.v.size(), ErrorCode::DimMismatch, "lerp_w dims differ");
  LatentWT<S> out;
  out.v.resize(a.v.size());
  for (std::size_t i = 0; i < a.v.size(); ++i)
    out.v[i] = static_cast<S>((1.0 - t) * a.v[i] + t * b.v[i]);
  return out;
}

template <typename S>
InterpolationPathT<S> interpolate_path(const LatentWT<S>& w_a, const LatentWT<S>& w_b, int steps,
                                       const ModelBundleT<S>& bundle) {
  require(steps >= 2, ErrorCode::InvalidParams, "interpolation needs at least 2 steps");
  InterpolationPathT<S> path;
  path.w_a = w_a;
  path.w_b = w_b;
  path.steps = steps;
  for (int i = 0; i < steps; ++i) {
    const double t = static_cast<double>(i) / (steps - 1);
    LatentWT<S> wi = lerp_w(w_a, w_b, t);
    path.frames.push_back(synthesize(wi, bundle).pixels);
    path.latents.push_back(std::move(wi.v));
  }
  return path;
}

// Straight line between two independently sampled mapped latents.
template <typename S>
InterpolationPathT<S> global_interpolate(const ModelBundleT<S>& bundle, std::uint64_t seed,
                                         int steps) {
  const int d = bundle.dims.latent_dim;
  Tensor<S> za = sample_z_batch<S>(1, d, derive_seed(seed, "interp-a"));
  Tensor<S> zb = sample_z_batch<S>(1, d, derive_seed(seed, "interp-b"));
  LatentWT<S> wa{bundle.mapping.forward(za).v};
  LatentWT<S> wb{bundle.mapping.forward(zb).v};
  return interpolate_path(wa, wb, steps, bundle);
}

// Pixel-domain baseline: optimize an image toward the per-layer blend
// (1-t) G(I_a) + t G(I_b) of Gram targets. The image is parameterized through
// a clamp to [-1,1]; gradients vanish outside the clamp range.
template <typename S>
Image gram_target_interpolate(const Image& i_a, const Image& i_b, double t,
                              const ModelBundleT<S>& bundle, int iters, double lr,
                              std::uint64_t seed, const Image* start = nullptr) {
  require(i_a.same_size(i_b), ErrorCode::SizeMismatch, "endpoint image sizes differ");
  check_image_size(i_a, bundle);
  require(iters >= 1, ErrorCode::InvalidParams, "iters must be >= 1");

  GramTargets<S> ta = gram_targets(bundle.phi.forward(to_tensor<S>(i_a)));
  GramTargets<S> tb = gram_targets(bundle.phi.forward(to_tensor<S>(i_b)));
  GramTargets<S> blend = ta;
  for (std::size_t l = 0; l < blend.grams.size(); ++l)
    blend.grams[l] = ta.grams[l] * static_cast<S>(1.0 - t) + tb.grams[l] * static_cast<S>(t);

  Tensor<S> u(1, i_a.channels, i_a.height, i_a.width);
  if (start) {
    copy_into_tensor(*start, u, 0);
  } else {
    Rng rng(derive_seed(seed, "gram-interp"));
    for (auto& v : u.v) v = static_cast<S>(rng.normal(0.0, 0.1));
  }

  detail::LatentAdam<S> opt;
  Tensor<S> img = u;
  for (int it = 0; it < iters; ++it) {
    img = u;
    for (auto& v : img.v) v = std::min(S(1), std::max(S(-1), v));
    typename FeatureExtractor<S>::Cache pc;
    const auto feats = bundle.phi.forward(img, &pc);
    std::vector<Tensor<S>> dfeats;
    const double loss = gram_objective(feats, blend, &dfeats);
    require(std::isfinite(loss), ErrorCode::NonFiniteLoss, "gram interpolation diverged");
    Tensor<S> dimg;
    bundle.phi.backward(pc, dfeats, &dimg);
    // clamp parameterization: pass gradient only strictly inside the range
    for (std::size_t i = 0; i < dimg.v.size(); ++i)
      if (u.v[i] <= S(-1) || u.v[i] >= S(1)) dimg.v[i] = S(0);
    opt.step(lr, u.v, dimg, false);
  }
  img = u;
  for (auto& v : img.v) v = std::min(S(1), std::max(S(-1), v));
  return from_tensor(img);
}

// Different crops of the same texture: perturb w with N(0, sigma^2) noise and
// refine each sample by Gram-loss inversion against the original synthesis.
template <typename S>
std::vector<std::pair<LatentWT<S>, Image>> synthesize_crops(const LatentWT<S>& w, int n,
                                                            double sigma,
                                                            const ModelBundleT<S>& bundle,
                                                            InversionConfig invert_cfg) {
  require(n >= 1, ErrorCode::InvalidParams, "n must be >= 1");
  require(sigma >= 0, ErrorCode::InvalidParams, "sigma must be >= 0");
  const Image target = synthesize(w, bundle).pixels;
  invert_cfg.loss_mode = LossMode::style_gram;
  invert_cfg.validate();

  std::vector<std::pair<LatentWT<S>, Image>> out;
  for (int k = 0; k < n; ++k) {
    Rng rng(derive_seed(invert_cfg.seed, "crop-noise", k));
    LatentWT<S> wk = w;
    for (auto& v : wk.v) v += static_cast<S>(rng.normal(0.0, sigma));
    InversionResultT<S> res = detail::invert_single(target, invert_cfg, bundle, wk);
    out.emplace_back(res.w_star, res.reconstruction);
  }
  return out;
}

// Scale about the image center (bilinear) or per-channel color offsets.
inline Image transform_image(const Image& image, const TransformSpec& spec) {
  spec.validate();
  Image out(image.channels, image.height, image.width);
  if (spec.kind == TransformKind::color_perturb) {
    for (int c = 0; c < image.channels; ++c) {
      const float off = static_cast<float>(spec.color_offset[c % 3]);
      for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x) out.at(c, y, x) = clamp_unit(image.at(c, y, x) + off);
    }
    return out;
  }
  const double cy = (image.height - 1) / 2.0, cx = (image.width - 1) / 2.0;
  for (int c = 0; c < image.channels; ++c)
    for (int y = 0; y < image.height; ++y)
      for (int x = 0; x < image.width; ++x)
        out.at(c, y, x) =
            sample_bilinear(image, c, cy + (y - cy) / spec.scale_factor,
                            cx + (x - cx) / spec.scale_factor);
  return out;
}

// Transform the synthesis of w, invert the transformed image (encoder init,
// style loss), then walk the line between w and the inferred latent.
template <typename S>
InterpolationPathT<S> local_interpolate(const LatentWT<S>& w, const TransformSpec& spec, int steps,
                                        const ModelBundleT<S>& bundle, InversionConfig invert_cfg) {
  const Image transformed = transform_image(synthesize(w, bundle).pixels, spec);
  invert_cfg.init_mode = InitMode::encoder;
  invert_cfg.loss_mode = LossMode::style_gram;
  InversionResultT<S> res = invert(transformed, invert_cfg, bundle);
  return interpolate_path(w, res.w_star, steps, bundle);
}

}  // namespace texlab
