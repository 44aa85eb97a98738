#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "texlab/common.hpp"
#include "texlab/corpus.hpp"
#include "texlab/image.hpp"
#include "texlab/models.hpp"

namespace texlab {

// Oriented multi-scale decomposition used by the structural similarity
// metrics: 3 scales x 4 orientations of sigma-normalized Gaussian-derivative
// band-pass filters (applied at full resolution) plus a Gaussian lowpass
// residual. Band-pass kernels sum to zero, so constant images give zero
// response everywhere.
struct Subband {
  int scale = 0;        // 0..2, or -1 for the lowpass residual
  int orientation = 0;  // 0..3 -> 0, 45, 90, 135 degrees
  int h = 0, w = 0;
  std::vector<double> values;
};

struct SubbandStats {
  double mean = 0, var = 0, rho_x = 0, rho_y = 0;
};

namespace detail {

inline std::vector<double> gauss_kernel1d(double sigma) {
  const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * r + 1);
  double sum = 0;
  for (int i = -r; i <= r; ++i) {
    k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += k[i + r];
  }
  for (auto& v : k) v /= sum;
  return k;
}

// sigma-normalized first derivative of the (normalized) Gaussian
inline std::vector<double> gauss_deriv_kernel1d(double sigma) {
  auto g = gauss_kernel1d(sigma);
  const int r = (static_cast<int>(g.size()) - 1) / 2;
  std::vector<double> k(g.size());
  for (int i = -r; i <= r; ++i) k[i + r] = -static_cast<double>(i) / sigma * g[i + r];
  return k;
}

inline void conv_rows(const std::vector<double>& in, int h, int w, const std::vector<double>& k,
                      std::vector<double>& out) {
  const int r = (static_cast<int>(k.size()) - 1) / 2;
  out.resize(in.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0;
      for (int i = -r; i <= r; ++i) s += k[i + r] * in[y * w + reflect_index(x + i, w)];
      out[y * w + x] = s;
    }
}

inline void conv_cols(const std::vector<double>& in, int h, int w, const std::vector<double>& k,
                      std::vector<double>& out) {
  const int r = (static_cast<int>(k.size()) - 1) / 2;
  out.resize(in.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0;
      for (int i = -r; i <= r; ++i) s += k[i + r] * in[reflect_index(y + i, h) * w + x];
      out[y * w + x] = s;
    }
}

}  // namespace detail

inline std::vector<double> to_grayscale(const Image& img) {
  std::vector<double> g(static_cast<std::size_t>(img.height) * img.width, 0.0);
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) g[y * img.width + x] += img.at(c, y, x);
  for (auto& v : g) v /= img.channels;
  return g;
}

inline std::vector<Subband> subband_decompose(const Image& image) {
  require(image.height >= 16 && image.width >= 16, ErrorCode::ImageTooSmall,
          "subband decomposition needs at least 16x16");
  const int h = image.height, w = image.width;
  const auto gray = to_grayscale(image);
  std::vector<Subband> out;
  std::vector<double> tmp, ix, iy;
  for (int s = 0; s < 3; ++s) {
    const double sigma = std::pow(2.0, s);
    const auto g = detail::gauss_kernel1d(sigma);
    const auto dg = detail::gauss_deriv_kernel1d(sigma);
    detail::conv_rows(gray, h, w, dg, tmp);
    detail::conv_cols(tmp, h, w, g, ix);
    detail::conv_rows(gray, h, w, g, tmp);
    detail::conv_cols(tmp, h, w, dg, iy);
    for (int o = 0; o < 4; ++o) {
      const double th = o * M_PI / 4.0;
      Subband sb;
      sb.scale = s;
      sb.orientation = o;
      sb.h = h;
      sb.w = w;
      sb.values.resize(gray.size());
      const double cth = std::cos(th), sth = std::sin(th);
      for (std::size_t i = 0; i < gray.size(); ++i) sb.values[i] = cth * ix[i] + sth * iy[i];
      out.push_back(std::move(sb));
    }
  }
  Subband low;
  low.scale = -1;
  low.orientation = -1;
  low.h = h;
  low.w = w;
  const auto gl = detail::gauss_kernel1d(8.0);
  detail::conv_rows(gray, h, w, gl, tmp);
  detail::conv_cols(tmp, h, w, gl, low.values);
  out.push_back(std::move(low));
  return out;
}

inline SubbandStats subband_stats(const Subband& sb) {
  SubbandStats st;
  const auto& v = sb.values;
  double m = 0;
  for (double x : v) m += x;
  m /= v.size();
  double var = 0;
  for (double x : v) var += (x - m) * (x - m);
  var /= v.size();
  st.mean = m;
  st.var = var;
  if (var <= 0) return st;
  double ax = 0, ay = 0;
  long nx = 0, ny = 0;
  for (int y = 0; y < sb.h; ++y)
    for (int x = 0; x + 1 < sb.w; ++x, ++nx)
      ax += (v[y * sb.w + x] - m) * (v[y * sb.w + x + 1] - m);
  for (int y = 0; y + 1 < sb.h; ++y)
    for (int x = 0; x < sb.w; ++x, ++ny)
      ay += (v[y * sb.w + x] - m) * (v[(y + 1) * sb.w + x] - m);
  st.rho_x = std::min(1.0, std::max(-1.0, ax / nx / var));
  st.rho_y = std::min(1.0, std::max(-1.0, ay / ny / var));
  return st;
}

namespace detail {

constexpr double kStsimC0 = 1e-3;  // stabilizer for the mean term
constexpr double kStsimC1 = 1e-3;  // stabilizer for the variance term

inline double mean_term(double m1, double m2) {
  const double t = (2.0 * m1 * m2 + kStsimC0) / (m1 * m1 + m2 * m2 + kStsimC0);
  return std::min(1.0, std::max(0.0, t));
}

inline double var_term(double v1, double v2) {
  const double s1 = std::sqrt(std::max(0.0, v1)), s2 = std::sqrt(std::max(0.0, v2));
  return (2.0 * s1 * s2 + kStsimC1) / (s1 * s1 + s2 * s2 + kStsimC1);
}

inline double rho_term(double r1, double r2) { return 1.0 - 0.5 * std::fabs(r1 - r2); }

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= a.size();
  mb /= b.size();
  double sab = 0, sa = 0, sb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    sa += (a[i] - ma) * (a[i] - ma);
    sb += (b[i] - mb) * (b[i] - mb);
  }
  if (sa <= 0 || sb <= 0) return 0.0;
  return std::min(1.0, std::max(-1.0, sab / std::sqrt(sa * sb)));
}

struct Decomposition {
  std::vector<Subband> bands;
  std::vector<SubbandStats> stats;
};

inline Decomposition decompose_with_stats(const Image& img) {
  Decomposition d;
  d.bands = subband_decompose(img);
  for (const auto& b : d.bands) d.stats.push_back(subband_stats(b));
  return d;
}

inline int band_index(int scale, int orient) { return scale * 4 + orient; }

// Per-subband geometric mean of the comparison factors. For STSIM-2 the
// factor list of a band-pass subband additionally contains the adjacent
// orientation and adjacent scale cross-correlation comparisons.
inline double stsim_score(const Decomposition& d1, const Decomposition& d2, bool with_cross) {
  double total = 0;
  const int n = static_cast<int>(d1.bands.size());
  for (int i = 0; i < n; ++i) {
    const auto& s1 = d1.stats[i];
    const auto& s2 = d2.stats[i];
    double prod = mean_term(s1.mean, s2.mean) * var_term(s1.var, s2.var) *
                  rho_term(s1.rho_x, s2.rho_x) * rho_term(s1.rho_y, s2.rho_y);
    int nfactors = 4;
    if (with_cross && d1.bands[i].scale >= 0) {
      const int s = d1.bands[i].scale, o = d1.bands[i].orientation;
      const int jo = band_index(s, (o + 1) % 4);
      const double r1 = pearson(d1.bands[i].values, d1.bands[jo].values);
      const double r2 = pearson(d2.bands[i].values, d2.bands[jo].values);
      prod *= rho_term(r1, r2);
      ++nfactors;
      if (s + 1 < 3) {
        const int js = band_index(s + 1, o);
        const double q1 = pearson(d1.bands[i].values, d1.bands[js].values);
        const double q2 = pearson(d2.bands[i].values, d2.bands[js].values);
        prod *= rho_term(q1, q2);
        ++nfactors;
      }
    }
    total += std::pow(std::max(0.0, prod), 1.0 / nfactors);
  }
  return total / n;
}

}  // namespace detail

inline void check_metric_inputs(const Image& i1, const Image& i2) {
  require(i1.same_size(i2), ErrorCode::SizeMismatch, "metric image sizes differ");
  require(i1.height >= 16 && i1.width >= 16, ErrorCode::ImageTooSmall,
          "metric needs at least 16x16 images");
}

inline double stsim1(const Image& i1, const Image& i2) {
  check_metric_inputs(i1, i2);
  return detail::stsim_score(detail::decompose_with_stats(i1), detail::decompose_with_stats(i2),
                             false);
}

inline double stsim2(const Image& i1, const Image& i2) {
  check_metric_inputs(i1, i2);
  return detail::stsim_score(detail::decompose_with_stats(i1), detail::decompose_with_stats(i2),
                             true);
}

// ---- latent reconstruction error distributions ----

enum class EncoderKind { trained, random_init };

struct ErrorDistribution {
  EncoderKind encoder_kind = EncoderKind::trained;
  std::vector<double> samples;  // ||w - F(G(w))||_2 per draw

  double mean() const {
    double m = 0;
    for (double s : samples) m += s;
    return m / samples.size();
  }
  // Linear-interpolation percentile on the sorted samples.
  double percentile(double q) const {
    std::vector<double> s = samples;
    std::sort(s.begin(), s.end());
    const double rank = q / 100.0 * (s.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(rank));
    const std::size_t hi = std::min(s.size() - 1, lo + 1);
    const double f = rank - lo;
    return s[lo] * (1 - f) + s[hi] * f;
  }
};

template <typename S>
ErrorDistribution latent_error_distribution(const ModelBundleT<S>& bundle, EncoderKind kind, int n,
                                            std::uint64_t seed) {
  require(n >= 1, ErrorCode::InvalidParams, "n must be >= 1");
  Encoder<S> random_encoder;
  if (kind == EncoderKind::random_init) {
    Rng r(derive_seed(seed, "random-encoder"));
    random_encoder.init(bundle.dims, r);
  }
  const Encoder<S>& enc = kind == EncoderKind::trained ? bundle.encoder : random_encoder;

  ErrorDistribution dist;
  dist.encoder_kind = kind;
  const int d = bundle.dims.latent_dim;
  int done = 0, chunk = 0;
  while (done < n) {
    const int b = std::min(64, n - done);
    Tensor<S> z = sample_z_batch<S>(b, d, derive_seed(seed, "latent-error", chunk++));
    Tensor<S> w = bundle.mapping.forward(z);
    Tensor<S> img = bundle.synthesis.forward(w);
    typename Encoder<S>::Cache ec;
    Tensor<S> what = enc.forward(img, ec);
    for (int i = 0; i < b; ++i) {
      double e = 0;
      for (int j = 0; j < d; ++j) {
        const double diff = static_cast<double>(w.item(i)[j]) - what.item(i)[j];
        e += diff * diff;
      }
      dist.samples.push_back(std::sqrt(e));
    }
    done += b;
  }
  return dist;
}

// ---- nearest-texture retrieval (objective memorization probe) ----

struct RetrievalHit {
  std::string family_id;
  int crop_index = 0;
  double score = 0;
};

inline std::vector<RetrievalHit> retrieve_nearest(const Image& query, const CorpusCrops& corpus,
                                                  int k) {
  require(corpus.total() > 0, ErrorCode::EmptyCorpus, "retrieval corpus is empty");
  require(k >= 1, ErrorCode::InvalidParams, "k must be >= 1");
  const auto qd = detail::decompose_with_stats(query);
  std::vector<RetrievalHit> hits;
  for (std::size_t fi = 0; fi < corpus.crops.size(); ++fi)
    for (std::size_t ci = 0; ci < corpus.crops[fi].size(); ++ci) {
      check_metric_inputs(query, corpus.crops[fi][ci]);
      RetrievalHit hit;
      hit.family_id = corpus.manifest.families[fi].family_id;
      hit.crop_index = static_cast<int>(ci);
      hit.score =
          detail::stsim_score(qd, detail::decompose_with_stats(corpus.crops[fi][ci]), false);
      hits.push_back(std::move(hit));
    }
  std::sort(hits.begin(), hits.end(), [](const RetrievalHit& a, const RetrievalHit& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.family_id != b.family_id) return a.family_id < b.family_id;
    return a.crop_index < b.crop_index;
  });
  if (static_cast<int>(hits.size()) > k) hits.resize(k);
  return hits;
}

// ---- report serialization ----

struct MetricReport {
  struct Pair {
    std::string pair_id;
    double stsim1 = 0, stsim2 = 0;
  };
  std::vector<Pair> pairs;
  std::uint64_t config_hash = 0;

  double mean1() const {
    double m = 0;
    for (const auto& p : pairs) m += p.stsim1;
    return pairs.empty() ? 0 : m / pairs.size();
  }
  double mean2() const {
    double m = 0;
    for (const auto& p : pairs) m += p.stsim2;
    return pairs.empty() ? 0 : m / pairs.size();
  }

  void write_csv(const std::string& path) const {
    std::ofstream f(path);
    require(f.good(), ErrorCode::IoError, "cannot write " + path);
    f << "pair_id,stsim1,stsim2\n";
    char line[160];
    for (const auto& p : pairs) {
      std::snprintf(line, sizeof(line), "%s,%.9g,%.9g\n", p.pair_id.c_str(), p.stsim1, p.stsim2);
      f << line;
    }
  }

  void write_json(const std::string& path) const {
    nlohmann::json j;
    j["config_hash"] = config_hash;
    j["pairs"] = pairs.size();
    j["mean_stsim1"] = mean1();
    j["mean_stsim2"] = mean2();
    std::ofstream f(path);
    require(f.good(), ErrorCode::IoError, "cannot write " + path);
    f << j.dump(2) << "\n";
  }
};

inline void write_distribution_csv(const ErrorDistribution& d, const std::string& path) {
  std::ofstream f(path);
  require(f.good(), ErrorCode::IoError, "cannot write " + path);
  f << "sample\n";
  char line[48];
  for (double s : d.samples) {
    std::snprintf(line, sizeof(line), "%.9g\n", s);
    f << line;
  }
}

inline nlohmann::json distribution_summary_json(const ErrorDistribution& d) {
  nlohmann::json j;
  j["encoder_kind"] = d.encoder_kind == EncoderKind::trained ? "trained" : "random_init";
  j["n"] = d.samples.size();
  j["mean"] = d.mean();
  for (double q : {1.0, 5.0, 25.0, 50.0, 75.0, 95.0, 99.0})
    j["p" + std::to_string(static_cast<int>(q))] = d.percentile(q);
  return j;
}

// Overlaid histogram of two error distributions rendered to an image.
inline Image render_histogram(const ErrorDistribution& a, const ErrorDistribution& b, int bins = 48,
                              int width = 480, int height = 240) {
  double lo = 1e30, hi = -1e30;
  for (const auto* d : {&a, &b})
    for (double s : d->samples) {
      lo = std::min(lo, s);
      hi = std::max(hi, s);
    }
  if (hi <= lo) hi = lo + 1;
  std::vector<double> ha(bins, 0), hb(bins, 0);
  for (double s : a.samples)
    ha[std::min<int>(bins - 1, static_cast<int>((s - lo) / (hi - lo) * bins))] += 1;
  for (double s : b.samples)
    hb[std::min<int>(bins - 1, static_cast<int>((s - lo) / (hi - lo) * bins))] += 1;
  double peak = 1;
  for (int i = 0; i < bins; ++i) peak = std::max({peak, ha[i], hb[i]});

  Image img(3, height, width);
  std::fill(img.data.begin(), img.data.end(), 1.f);  // white background
  for (int i = 0; i < bins; ++i) {
    const int x0 = i * width / bins, x1 = (i + 1) * width / bins;
    const int ya = static_cast<int>(ha[i] / peak * (height - 2));
    const int yb = static_cast<int>(hb[i] / peak * (height - 2));
    for (int x = x0; x < x1; ++x) {
      for (int y = 0; y < ya; ++y) {  // first distribution: blue
        img.at(0, height - 1 - y, x) -= 1.2f;
        img.at(1, height - 1 - y, x) -= 1.2f;
      }
      for (int y = 0; y < yb; ++y) {  // second distribution: red
        img.at(1, height - 1 - y, x) -= 1.2f;
        img.at(2, height - 1 - y, x) -= 1.2f;
      }
    }
  }
  for (auto& v : img.data) v = clamp_unit(v);
  return img;
}

}  // namespace texlab
