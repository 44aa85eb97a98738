#pragma once

#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "texlab/common.hpp"
#include "texlab/tensor.hpp"

namespace texlab {

// Layers store unit-variance weights and apply the per-layer scale
// gain/sqrt(fan_in) at use time (runtime weight scaling), which keeps Adam
// step sizes comparable across layers.

template <typename S>
struct ConvP {
  int in_c = 0, out_c = 0, k = 3, stride = 1, pad = 1;
  bool reflect_pad = false;
  double gain = std::sqrt(2.0);
  std::vector<S> weight;  // out_c x (in_c*k*k), unit scale
  std::vector<S> bias;    // out_c

  void init(int in, int out, int kk, int str, Rng& rng, double g = std::sqrt(2.0)) {
    in_c = in;
    out_c = out;
    k = kk;
    stride = str;
    pad = kk / 2;
    gain = g;
    weight.assign(static_cast<std::size_t>(out_c) * in_c * k * k, S(0));
    bias.assign(out_c, S(0));
    rng.fill_normal(weight);
  }
  double wscale() const { return gain / std::sqrt(static_cast<double>(in_c) * k * k); }
  int out_side(int in_side) const { return (in_side + 2 * pad - k) / stride + 1; }
};

template <typename S>
struct DenseP {
  int in_f = 0, out_f = 0;
  double gain = std::sqrt(2.0);
  std::vector<S> weight;  // out_f x in_f, unit scale
  std::vector<S> bias;    // out_f

  void init(int in, int out, Rng& rng, double g = std::sqrt(2.0)) {
    in_f = in;
    out_f = out;
    gain = g;
    weight.assign(static_cast<std::size_t>(out_f) * in_f, S(0));
    bias.assign(out_f, S(0));
    rng.fill_normal(weight);
  }
  double wscale() const { return gain / std::sqrt(static_cast<double>(in_f)); }
};

template <typename S>
struct ConvGrad {
  std::vector<S> weight, bias;
  void match(const ConvP<S>& p) {
    weight.assign(p.weight.size(), S(0));
    bias.assign(p.bias.size(), S(0));
  }
};

template <typename S>
struct DenseGrad {
  std::vector<S> weight, bias;
  void match(const DenseP<S>& p) {
    weight.assign(p.weight.size(), S(0));
    bias.assign(p.bias.size(), S(0));
  }
};

// ---- convolution ----

template <typename S>
Tensor<S> conv_forward(const ConvP<S>& p, const Tensor<S>& x) {
  require(x.c == p.in_c, ErrorCode::DimMismatch, "conv input channels");
  const int ho = p.out_side(x.h), wo = p.out_side(x.w);
  Tensor<S> y(x.n, p.out_c, ho, wo);
  const int K = p.in_c * p.k * p.k, M = ho * wo;
  const S sc = static_cast<S>(p.wscale());
  ConstMatMap<S> w(p.weight.data(), p.out_c, K);
  std::vector<S> col;
  for (int ni = 0; ni < x.n; ++ni) {
    im2col(x, ni, p.k, p.stride, p.pad, ho, wo, col, p.reflect_pad);
    MatMap<S> ym(y.item(ni), p.out_c, M);
    ym.noalias() = (w * ConstMatMap<S>(col.data(), K, M)) * sc;
    for (int oc = 0; oc < p.out_c; ++oc) {
      S* row = y.item(ni) + static_cast<std::size_t>(oc) * M;
      const S b = p.bias[oc];
      for (int i = 0; i < M; ++i) row[i] += b;
    }
  }
  return y;
}

// Accumulates into dp (if given); writes dx (if given).
template <typename S>
void conv_backward(const ConvP<S>& p, const Tensor<S>& x, const Tensor<S>& dy, ConvGrad<S>* dp,
                   Tensor<S>* dx) {
  const int ho = dy.h, wo = dy.w;
  const int K = p.in_c * p.k * p.k, M = ho * wo;
  const S sc = static_cast<S>(p.wscale());
  ConstMatMap<S> w(p.weight.data(), p.out_c, K);
  std::vector<S> col, dcol(static_cast<std::size_t>(K) * M);
  if (dx) {
    *dx = Tensor<S>(x.n, x.c, x.h, x.w);
  }
  for (int ni = 0; ni < x.n; ++ni) {
    ConstMatMap<S> dym(dy.item(ni), p.out_c, M);
    if (dp) {
      im2col(x, ni, p.k, p.stride, p.pad, ho, wo, col, p.reflect_pad);
      MatMap<S> dw(dp->weight.data(), p.out_c, K);
      dw.noalias() += (dym * ConstMatMap<S>(col.data(), K, M).transpose()) * sc;
      // fixed-order accumulation keeps results independent of heap alignment
      for (int oc = 0; oc < p.out_c; ++oc) {
        const S* row = dy.item(ni) + static_cast<std::size_t>(oc) * M;
        S acc = S(0);
        for (int i = 0; i < M; ++i) acc += row[i];
        dp->bias[oc] += acc;
      }
    }
    if (dx) {
      MatMap<S> dcm(dcol.data(), K, M);
      dcm.noalias() = (w.transpose() * dym) * sc;
      col2im_add(dcol, x.c, x.h, x.w, p.k, p.stride, p.pad, ho, wo, dx->item(ni), p.reflect_pad);
    }
  }
}

// ---- dense (operates on the flattened per-item features) ----

template <typename S>
Tensor<S> dense_forward(const DenseP<S>& p, const Tensor<S>& x) {
  require(x.per_item() == p.in_f, ErrorCode::DimMismatch, "dense input features");
  Tensor<S> y = Tensor<S>::vectors(x.n, p.out_f);
  const S sc = static_cast<S>(p.wscale());
  ConstMatMap<S> w(p.weight.data(), p.out_f, p.in_f);
  ConstMatMap<S> xm(x.v.data(), x.n, p.in_f);
  MatMap<S> ym(y.v.data(), x.n, p.out_f);
  ym.noalias() = (xm * w.transpose()) * sc;
  for (int ni = 0; ni < x.n; ++ni)
    for (int o = 0; o < p.out_f; ++o) ym(ni, o) += p.bias[o];
  return y;
}

template <typename S>
void dense_backward(const DenseP<S>& p, const Tensor<S>& x, const Tensor<S>& dy, DenseGrad<S>* dp,
                    Tensor<S>* dx) {
  const S sc = static_cast<S>(p.wscale());
  ConstMatMap<S> w(p.weight.data(), p.out_f, p.in_f);
  ConstMatMap<S> xm(x.v.data(), x.n, p.in_f);
  ConstMatMap<S> dym(dy.v.data(), x.n, p.out_f);
  if (dp) {
    MatMap<S> dw(dp->weight.data(), p.out_f, p.in_f);
    dw.noalias() += (dym.transpose() * xm) * sc;
    for (int ni = 0; ni < x.n; ++ni)
      for (int o = 0; o < p.out_f; ++o) dp->bias[o] += dym(ni, o);
  }
  if (dx) {
    *dx = Tensor<S>(x.n, x.c, x.h, x.w);
    MatMap<S> dxm(dx->v.data(), x.n, p.in_f);
    dxm.noalias() = (dym * w) * sc;
  }
}

// ---- activations ----

template <typename S>
Tensor<S> lrelu_forward(const Tensor<S>& z, double slope = 0.2) {
  Tensor<S> a = z;
  const S sl = static_cast<S>(slope);
  for (auto& v : a.v)
    if (v < S(0)) v *= sl;
  return a;
}

// dz from da using the cached pre-activation z.
template <typename S>
Tensor<S> lrelu_backward(const Tensor<S>& z, const Tensor<S>& da, double slope = 0.2) {
  Tensor<S> dz = da;
  const S sl = static_cast<S>(slope);
  for (std::size_t i = 0; i < dz.v.size(); ++i)
    if (z.v[i] < S(0)) dz.v[i] *= sl;
  return dz;
}

template <typename S>
void lrelu_mask_inplace(const Tensor<S>& z, Tensor<S>& t, double slope = 0.2) {
  const S sl = static_cast<S>(slope);
  for (std::size_t i = 0; i < t.v.size(); ++i)
    if (z.v[i] < S(0)) t.v[i] *= sl;
}

template <typename S>
Tensor<S> tanh_forward(const Tensor<S>& z) {
  Tensor<S> a = z;
  for (auto& v : a.v) v = std::tanh(v);
  return a;
}

template <typename S>
Tensor<S> tanh_backward(const Tensor<S>& a, const Tensor<S>& da) {
  Tensor<S> dz = da;
  for (std::size_t i = 0; i < dz.v.size(); ++i) dz.v[i] *= (S(1) - a.v[i] * a.v[i]);
  return dz;
}

// ---- nearest-neighbor 2x upsampling ----

template <typename S>
Tensor<S> upsample2_forward(const Tensor<S>& x) {
  Tensor<S> y(x.n, x.c, x.h * 2, x.w * 2);
  for (int ni = 0; ni < x.n; ++ni)
    for (int ci = 0; ci < x.c; ++ci)
      for (int yy = 0; yy < y.h; ++yy) {
        const S* src = &x.v[((static_cast<std::size_t>(ni) * x.c + ci) * x.h + yy / 2) * x.w];
        S* dst = &y.v[((static_cast<std::size_t>(ni) * y.c + ci) * y.h + yy) * y.w];
        for (int xx = 0; xx < y.w; ++xx) dst[xx] = src[xx / 2];
      }
  return y;
}

template <typename S>
Tensor<S> upsample2_backward(const Tensor<S>& dy) {
  Tensor<S> dx(dy.n, dy.c, dy.h / 2, dy.w / 2);
  for (int ni = 0; ni < dy.n; ++ni)
    for (int ci = 0; ci < dy.c; ++ci)
      for (int yy = 0; yy < dy.h; ++yy) {
        const S* src = &dy.v[((static_cast<std::size_t>(ni) * dy.c + ci) * dy.h + yy) * dy.w];
        S* dst = &dx.v[((static_cast<std::size_t>(ni) * dx.c + ci) * dx.h + yy / 2) * dx.w];
        for (int xx = 0; xx < dy.w; ++xx) dst[xx / 2] += src[xx];
      }
  return dx;
}

// ---- per-channel RMS normalization over spatial positions ----

template <typename S>
struct RmsCache {
  std::vector<S> inv;  // n*c, the 1/rms factors
};

template <typename S>
Tensor<S> rmsnorm_forward(const Tensor<S>& z, RmsCache<S>& cache, double eps = 1e-8) {
  Tensor<S> y = z;
  const int P = z.plane();
  cache.inv.assign(static_cast<std::size_t>(z.n) * z.c, S(0));
  for (int ni = 0; ni < z.n; ++ni)
    for (int ci = 0; ci < z.c; ++ci) {
      S* p = &y.v[(static_cast<std::size_t>(ni) * z.c + ci) * P];
      double s = 0;
      for (int i = 0; i < P; ++i) s += static_cast<double>(p[i]) * p[i];
      const S inv = static_cast<S>(1.0 / std::sqrt(s / P + eps));
      cache.inv[static_cast<std::size_t>(ni) * z.c + ci] = inv;
      for (int i = 0; i < P; ++i) p[i] *= inv;
    }
  return y;
}

template <typename S>
Tensor<S> rmsnorm_backward(const Tensor<S>& z, const RmsCache<S>& cache, const Tensor<S>& dy) {
  Tensor<S> dz = dy;
  const int P = z.plane();
  for (int ni = 0; ni < z.n; ++ni)
    for (int ci = 0; ci < z.c; ++ci) {
      const std::size_t off = (static_cast<std::size_t>(ni) * z.c + ci) * P;
      const S inv = cache.inv[static_cast<std::size_t>(ni) * z.c + ci];
      double dot = 0;
      for (int i = 0; i < P; ++i) dot += static_cast<double>(dy.v[off + i]) * z.v[off + i];
      const double k = static_cast<double>(inv) * inv * inv * dot / P;
      for (int i = 0; i < P; ++i)
        dz.v[off + i] = static_cast<S>(inv * dy.v[off + i] - k * z.v[off + i]);
    }
  return dz;
}

// ---- optimizers ----

template <typename S>
struct Adam {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long t = 0;
  std::vector<std::vector<S>> m, v;

  void reset() {
    t = 0;
    m.clear();
    v.clear();
  }

  // params and grads must be passed in the same order every step.
  void step(double lr, const std::vector<std::vector<S>*>& params,
            const std::vector<const std::vector<S>*>& grads) {
    require(params.size() == grads.size(), ErrorCode::DimMismatch, "adam params/grads");
    if (m.empty()) {
      for (auto* p : params) {
        m.emplace_back(p->size(), S(0));
        v.emplace_back(p->size(), S(0));
      }
    }
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, t);
    const double bc2 = 1.0 - std::pow(beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& p = *params[i];
      const auto& g = *grads[i];
      auto& mi = m[i];
      auto& vi = v[i];
      for (std::size_t j = 0; j < p.size(); ++j) {
        const double gj = g[j];
        mi[j] = static_cast<S>(beta1 * mi[j] + (1 - beta1) * gj);
        vi[j] = static_cast<S>(beta2 * vi[j] + (1 - beta2) * gj * gj);
        const double mh = mi[j] / bc1, vh = vi[j] / bc2;
        p[j] -= static_cast<S>(lr * mh / (std::sqrt(vh) + eps));
      }
    }
  }
};

template <typename S>
std::uint64_t params_checksum_acc(const std::vector<S>& v, std::uint64_t h) {
  return fnv1a_bytes(v.data(), v.size() * sizeof(S), h);
}

}  // namespace texlab
