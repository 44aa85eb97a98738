#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "texlab/common.hpp"
#include "texlab/image.hpp"

namespace texlab {

enum class FamilyKind {
  checkerboard,
  sinusoid_grating,
  gaussian_noise_field,
  blob_field,
  stripe_field,
  voronoi_cells,
  user_image,
};

inline const char* family_kind_name(FamilyKind k) {
  switch (k) {
    case FamilyKind::checkerboard: return "checkerboard";
    case FamilyKind::sinusoid_grating: return "sinusoid_grating";
    case FamilyKind::gaussian_noise_field: return "gaussian_noise_field";
    case FamilyKind::blob_field: return "blob_field";
    case FamilyKind::stripe_field: return "stripe_field";
    case FamilyKind::voronoi_cells: return "voronoi_cells";
    case FamilyKind::user_image: return "user_image";
  }
  return "unknown";
}

inline FamilyKind family_kind_from_name(const std::string& s) {
  for (FamilyKind k : {FamilyKind::checkerboard, FamilyKind::sinusoid_grating,
                       FamilyKind::gaussian_noise_field, FamilyKind::blob_field,
                       FamilyKind::stripe_field, FamilyKind::voronoi_cells, FamilyKind::user_image})
    if (s == family_kind_name(k)) return k;
  fail(ErrorCode::UnknownKind, "unknown texture kind: " + s);
}

// Kind-specific knobs; unused fields are ignored by the generator for a kind.
struct FamilyParams {
  double period = 8.0;              // full repeat cycle in pixels (periodic kinds)
  double orientation = 0.0;         // radians
  double sigma = 0.3;               // amplitude for noise-driven kinds
  double correlation_length = 2.0;  // pixels (stochastic kinds)
  int crop_size = 32;
  int base_size = 0;  // 0 -> 4 * crop_size
  std::array<double, 3> color_a{-0.8, -0.8, -0.8};
  std::array<double, 3> color_b{0.8, 0.8, 0.8};
  std::string source_path;  // user_image only

  int resolved_base() const { return base_size > 0 ? base_size : 4 * crop_size; }
};

struct TextureFamily {
  std::string family_id;
  FamilyKind kind = FamilyKind::checkerboard;
  FamilyParams params;
  std::uint64_t seed = 0;
  Image base;
};

struct TextureCrop {
  std::string family_id;
  int crop_index = 0;
  Image pixels;
  int row = 0, col = 0;
};

struct FamilyDesc {
  std::string family_id;
  FamilyKind kind = FamilyKind::checkerboard;
  FamilyParams params;
  std::uint64_t seed = 0;
  int count = 1;
};

struct CorpusManifest {
  int crop_size = 32;
  std::uint64_t seed = 0;
  std::vector<FamilyDesc> families;
};

namespace detail {

inline void rotate_coords(double x, double y, double theta, double& u, double& v) {
  const double c = std::cos(theta), s = std::sin(theta);
  u = x * c + y * s;
  v = -x * s + y * c;
}

inline void paint(Image& img, int y, int x, const std::array<double, 3>& col) {
  for (int c = 0; c < 3; ++c) img.at(c, y, x) = clamp_unit(static_cast<float>(col[c]));
}

inline std::array<double, 3> mix(const std::array<double, 3>& a, const std::array<double, 3>& b,
                                 double t) {
  return {a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t};
}

inline Image gen_checkerboard(const FamilyParams& p, std::uint64_t) {
  const int n = p.resolved_base();
  const double cell = p.period / 2.0;
  Image img(3, n, n);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      double u, v;
      rotate_coords(x, y, p.orientation, u, v);
      const long iu = static_cast<long>(std::floor(u / cell));
      const long iv = static_cast<long>(std::floor(v / cell));
      paint(img, y, x, ((iu + iv) & 1) ? p.color_b : p.color_a);
    }
  return img;
}

inline Image gen_stripes(const FamilyParams& p, std::uint64_t) {
  const int n = p.resolved_base();
  Image img(3, n, n);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      double u, v;
      rotate_coords(x, y, p.orientation, u, v);
      double f = u / p.period;
      f -= std::floor(f);
      paint(img, y, x, f < 0.5 ? p.color_a : p.color_b);
    }
  return img;
}

inline Image gen_sinusoid(const FamilyParams& p, std::uint64_t) {
  const int n = p.resolved_base();
  Image img(3, n, n);
  const auto mid = mix(p.color_a, p.color_b, 0.5);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      double u, v;
      rotate_coords(x, y, p.orientation, u, v);
      const double s = std::sin(2.0 * M_PI * u / p.period);
      const auto col = mix(mid, s >= 0 ? p.color_b : p.color_a, std::fabs(s));
      paint(img, y, x, col);
    }
  return img;
}

// Separable Gaussian blur with reflected borders.
inline std::vector<double> gaussian_kernel(double sigma) {
  const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * r + 1);
  double sum = 0;
  for (int i = -r; i <= r; ++i) {
    k[i + r] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    sum += k[i + r];
  }
  for (auto& v : k) v /= sum;
  return k;
}

inline int reflect_index(int i, int n) {
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - i - 1;
  }
  return i;
}

inline void blur_field(std::vector<double>& f, int n, double sigma) {
  if (sigma <= 0) return;
  const auto k = gaussian_kernel(sigma);
  const int r = (static_cast<int>(k.size()) - 1) / 2;
  std::vector<double> tmp(f.size());
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      double s = 0;
      for (int i = -r; i <= r; ++i) s += k[i + r] * f[y * n + reflect_index(x + i, n)];
      tmp[y * n + x] = s;
    }
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      double s = 0;
      for (int i = -r; i <= r; ++i) s += k[i + r] * tmp[reflect_index(y + i, n) * n + x];
      f[y * n + x] = s;
    }
}

inline Image gen_noise_field(const FamilyParams& p, std::uint64_t seed) {
  const int n = p.resolved_base();
  Rng rng(derive_seed(seed, "noise_field"));
  std::vector<double> f(static_cast<std::size_t>(n) * n);
  for (auto& v : f) v = rng.normal();
  blur_field(f, n, p.correlation_length > 1.0 ? p.correlation_length : 0.0);
  // Renormalize to unit variance so sigma means the same at any smoothing.
  double m = 0, m2 = 0;
  for (double v : f) {
    m += v;
    m2 += v * v;
  }
  m /= f.size();
  m2 = m2 / f.size() - m * m;
  const double inv = m2 > 0 ? 1.0 / std::sqrt(m2) : 1.0;
  const auto mid = mix(p.color_a, p.color_b, 0.5);
  const std::array<double, 3> dir = {(p.color_b[0] - p.color_a[0]) / 2.0,
                                     (p.color_b[1] - p.color_a[1]) / 2.0,
                                     (p.color_b[2] - p.color_a[2]) / 2.0};
  Image img(3, n, n);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const double v = (f[y * n + x] - m) * inv * p.sigma;
      paint(img, y, x, {mid[0] + v * 2.0 * dir[0], mid[1] + v * 2.0 * dir[1], mid[2] + v * 2.0 * dir[2]});
    }
  return img;
}

inline Image gen_blob_field(const FamilyParams& p, std::uint64_t seed) {
  const int n = p.resolved_base();
  Rng rng(derive_seed(seed, "blob_field"));
  const double rho = std::max(1.0, p.correlation_length);
  const double spacing = 2.5 * rho;
  const int count = std::max(1, static_cast<int>((n / spacing) * (n / spacing)));
  Image img(3, n, n);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) paint(img, y, x, p.color_a);
  for (int b = 0; b < count; ++b) {
    const double cy = rng.uniform(0, n), cx = rng.uniform(0, n);
    const double t = rng.uniform(0.5, 1.0);
    const auto col = mix(p.color_a, p.color_b, t);
    const int r = static_cast<int>(std::ceil(3 * rho));
    for (int dy = -r; dy <= r; ++dy)
      for (int dx = -r; dx <= r; ++dx) {
        // wrap blobs torus-style to keep borders statistically identical
        const int yy = ((static_cast<int>(cy) + dy) % n + n) % n;
        const int xx = ((static_cast<int>(cx) + dx) % n + n) % n;
        const double g = std::exp(-0.5 * (dy * dy + dx * dx) / (rho * rho));
        for (int c = 0; c < 3; ++c) {
          const double mixed = img.at(c, yy, xx) * (1 - g) + col[c] * g;
          img.at(c, yy, xx) = clamp_unit(static_cast<float>(mixed));
        }
      }
  }
  return img;
}

inline Image gen_voronoi(const FamilyParams& p, std::uint64_t seed) {
  const int n = p.resolved_base();
  Rng rng(derive_seed(seed, "voronoi"));
  const double cell = std::max(2.0, p.correlation_length);
  const int g = std::max(1, static_cast<int>(std::round(n / cell)));
  struct Site {
    double y, x;
    std::array<double, 3> col;
  };
  std::vector<Site> sites(static_cast<std::size_t>(g) * g);
  for (int i = 0; i < g; ++i)
    for (int j = 0; j < g; ++j) {
      auto& s = sites[static_cast<std::size_t>(i) * g + j];
      s.y = (i + rng.uniform()) * n / g;
      s.x = (j + rng.uniform()) * n / g;
      s.col = mix(p.color_a, p.color_b, rng.uniform());
    }
  Image img(3, n, n);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const int ci = std::min(g - 1, static_cast<int>(y * g / n));
      const int cj = std::min(g - 1, static_cast<int>(x * g / n));
      double best = 1e30;
      const Site* bs = &sites[0];
      for (int di = -2; di <= 2; ++di)
        for (int dj = -2; dj <= 2; ++dj) {
          const int ii = (ci + di % g + g) % g, jj = (cj + dj % g + g) % g;
          const auto& s = sites[static_cast<std::size_t>(ii) * g + jj];
          // torus distance
          double dy = std::fabs(y - s.y), dx = std::fabs(x - s.x);
          dy = std::min(dy, n - dy);
          dx = std::min(dx, n - dx);
          const double d = dy * dy + dx * dx;
          if (d < best) {
            best = d;
            bs = &s;
          }
        }
      paint(img, y, x, bs->col);
    }
  return img;
}

}  // namespace detail

inline bool kind_is_periodic(FamilyKind k) {
  return k == FamilyKind::checkerboard || k == FamilyKind::sinusoid_grating ||
         k == FamilyKind::stripe_field;
}

inline void validate_family_params(FamilyKind kind, const FamilyParams& p) {
  require(p.crop_size >= 4, ErrorCode::InvalidParams, "crop_size must be >= 4");
  const int base = p.resolved_base();
  require(base >= 4 * p.crop_size, ErrorCode::InvalidParams,
          "base image must be at least 4x crop_size per side");
  if (kind_is_periodic(kind)) {
    require(p.period >= 2.0, ErrorCode::InvalidParams, "period must be >= 2 pixels");
    // at least 5 texton repetitions per crop
    require(p.crop_size / p.period >= 5.0, ErrorCode::InvalidParams,
            "crop/period = " + std::to_string(p.crop_size / p.period) +
                " gives fewer than 5 texton repetitions");
  } else if (kind != FamilyKind::user_image) {
    require(p.correlation_length > 0, ErrorCode::InvalidParams, "correlation_length must be > 0");
    require(p.correlation_length <= p.crop_size / 5.0, ErrorCode::InvalidParams,
            "correlation_length exceeds crop_size/5");
  }
  for (int c = 0; c < 3; ++c) {
    require(p.color_a[c] >= -1 && p.color_a[c] <= 1 && p.color_b[c] >= -1 && p.color_b[c] <= 1,
            ErrorCode::InvalidParams, "colors must lie in [-1,1]");
  }
}

inline TextureFamily make_family(FamilyKind kind, const FamilyParams& params, std::uint64_t seed) {
  validate_family_params(kind, params);
  TextureFamily fam;
  fam.kind = kind;
  fam.params = params;
  fam.seed = seed;
  fam.family_id = std::string(family_kind_name(kind)) + "_" + std::to_string(seed);
  switch (kind) {
    case FamilyKind::checkerboard: fam.base = detail::gen_checkerboard(params, seed); break;
    case FamilyKind::sinusoid_grating: fam.base = detail::gen_sinusoid(params, seed); break;
    case FamilyKind::gaussian_noise_field: fam.base = detail::gen_noise_field(params, seed); break;
    case FamilyKind::blob_field: fam.base = detail::gen_blob_field(params, seed); break;
    case FamilyKind::stripe_field: fam.base = detail::gen_stripes(params, seed); break;
    case FamilyKind::voronoi_cells: fam.base = detail::gen_voronoi(params, seed); break;
    case FamilyKind::user_image:
      fam.base = read_png(params.source_path);
      require(std::min(fam.base.height, fam.base.width) >= 4 * params.crop_size,
              ErrorCode::InvalidParams, "user image smaller than 4x crop_size per side");
      break;
  }
  return fam;
}

inline TextureFamily family_from_desc(const FamilyDesc& d) {
  TextureFamily fam = make_family(d.kind, d.params, d.seed);
  fam.family_id = d.family_id;
  return fam;
}

inline TextureCrop sample_crop(const TextureFamily& family, int crop_size, std::uint64_t rng_seed) {
  require(crop_size <= std::min(family.base.height, family.base.width), ErrorCode::CropTooLarge,
          "crop_size " + std::to_string(crop_size) + " exceeds base " +
              std::to_string(family.base.height) + "x" + std::to_string(family.base.width));
  Rng rng(rng_seed);
  const int row = rng.uniform_int(0, family.base.height - crop_size);
  const int col = rng.uniform_int(0, family.base.width - crop_size);
  TextureCrop crop;
  crop.family_id = family.family_id;
  crop.row = row;
  crop.col = col;
  crop.pixels = crop_window(family.base, row, col, crop_size);
  return crop;
}

// Statistical stand-in for perceived homogeneity: coefficient of variation of
// per-crop means and variances over n random crops, intensities mapped to [0,1].
inline std::pair<double, double> homogeneity_cov(const TextureFamily& family, int crop_size,
                                                 int n_crops, std::uint64_t seed) {
  std::vector<double> means, vars;
  for (int i = 0; i < n_crops; ++i) {
    const auto crop = sample_crop(family, crop_size, derive_seed(seed, "homog", i));
    double m = 0, m2 = 0;
    for (float v : crop.pixels.data) {
      const double u = (v + 1.0) * 0.5;
      m += u;
      m2 += u * u;
    }
    m /= crop.pixels.data.size();
    means.push_back(m);
    vars.push_back(std::max(0.0, m2 / crop.pixels.data.size() - m * m));
  }
  auto cov = [](const std::vector<double>& xs) {
    double m = 0;
    for (double x : xs) m += x;
    m /= xs.size();
    double s = 0;
    for (double x : xs) s += (x - m) * (x - m);
    s = std::sqrt(s / xs.size());
    return std::fabs(m) > 1e-12 ? s / std::fabs(m) : 0.0;
  };
  return {cov(means), cov(vars)};
}

// ---- manifest (de)serialization ----

inline nlohmann::json params_to_json(const FamilyParams& p) {
  nlohmann::json j;
  j["period"] = p.period;
  j["orientation"] = p.orientation;
  j["sigma"] = p.sigma;
  j["correlation_length"] = p.correlation_length;
  j["crop_size"] = p.crop_size;
  j["base_size"] = p.base_size;
  j["color_a"] = p.color_a;
  j["color_b"] = p.color_b;
  if (!p.source_path.empty()) j["source_path"] = p.source_path;
  return j;
}

inline FamilyParams params_from_json(const nlohmann::json& j) {
  FamilyParams p;
  p.period = j.value("period", p.period);
  p.orientation = j.value("orientation", p.orientation);
  p.sigma = j.value("sigma", p.sigma);
  p.correlation_length = j.value("correlation_length", p.correlation_length);
  p.crop_size = j.value("crop_size", p.crop_size);
  p.base_size = j.value("base_size", p.base_size);
  if (j.contains("color_a")) p.color_a = j["color_a"].get<std::array<double, 3>>();
  if (j.contains("color_b")) p.color_b = j["color_b"].get<std::array<double, 3>>();
  p.source_path = j.value("source_path", std::string());
  return p;
}

inline nlohmann::json manifest_to_json(const CorpusManifest& m) {
  nlohmann::json j;
  j["crop_size"] = m.crop_size;
  j["seed"] = m.seed;
  j["families"] = nlohmann::json::array();
  for (const auto& f : m.families) {
    nlohmann::json fj;
    fj["family_id"] = f.family_id;
    fj["kind"] = family_kind_name(f.kind);
    fj["seed"] = f.seed;
    fj["count"] = f.count;
    fj["params"] = params_to_json(f.params);
    j["families"].push_back(fj);
  }
  return j;
}

inline CorpusManifest manifest_from_json(const nlohmann::json& j) {
  CorpusManifest m;
  m.crop_size = j.at("crop_size").get<int>();
  m.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& fj : j.at("families")) {
    FamilyDesc d;
    d.family_id = fj.at("family_id").get<std::string>();
    d.kind = family_kind_from_name(fj.at("kind").get<std::string>());
    d.seed = fj.at("seed").get<std::uint64_t>();
    d.count = fj.at("count").get<int>();
    d.params = params_from_json(fj.at("params"));
    require(d.count >= 1, ErrorCode::InvalidParams, "family count must be >= 1");
    m.families.push_back(d);
  }
  std::map<std::string, int> seen;
  for (const auto& f : m.families)
    require(++seen[f.family_id] == 1, ErrorCode::InvalidParams,
            "duplicate family_id " + f.family_id);
  return m;
}

inline void save_manifest(const CorpusManifest& m, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), ErrorCode::IoError, "cannot write " + path);
  out << manifest_to_json(m).dump(2) << "\n";
}

inline CorpusManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::MissingArtifact, "corpus manifest not found: " + path);
  nlohmann::json j;
  in >> j;
  return manifest_from_json(j);
}

// Default procedural roster: two parameter variants for each of the six kinds.
inline CorpusManifest default_roster(int crop_size, std::uint64_t seed, int crops_per_family) {
  CorpusManifest m;
  m.crop_size = crop_size;
  m.seed = seed;
  auto add = [&](FamilyKind kind, FamilyParams p, int variant) {
    FamilyDesc d;
    d.kind = kind;
    p.crop_size = crop_size;
    d.params = p;
    d.seed = derive_seed(seed, family_kind_name(kind), variant);
    d.family_id = std::string(family_kind_name(kind)) + "_" + std::to_string(variant);
    d.count = crops_per_family;
    m.families.push_back(d);
  };
  const double cs = crop_size;
  FamilyParams p;

  p = {};
  p.period = cs / 6.0;
  p.color_a = {-0.8, -0.7, -0.6};
  p.color_b = {0.8, 0.75, 0.6};
  add(FamilyKind::checkerboard, p, 0);
  p.period = cs / 8.0;
  p.orientation = 0.35;
  p.color_a = {-0.6, -0.2, 0.3};
  p.color_b = {0.5, 0.1, -0.5};
  add(FamilyKind::checkerboard, p, 1);

  p = {};
  p.period = cs / 5.0;
  p.orientation = 0.25;
  p.color_a = {-0.9, -0.4, 0.0};
  p.color_b = {0.9, 0.6, 0.2};
  add(FamilyKind::sinusoid_grating, p, 0);
  p.period = cs / 7.0;
  p.orientation = 1.2;
  p.color_a = {-0.3, -0.8, -0.5};
  p.color_b = {0.2, 0.8, 0.6};
  add(FamilyKind::sinusoid_grating, p, 1);

  p = {};
  p.sigma = 0.35;
  p.correlation_length = 1.0;
  add(FamilyKind::gaussian_noise_field, p, 0);
  p.sigma = 0.3;
  p.correlation_length = cs / 8.0;
  p.color_a = {-0.9, -0.6, -0.2};
  p.color_b = {0.7, 0.8, 0.6};
  add(FamilyKind::gaussian_noise_field, p, 1);

  p = {};
  p.correlation_length = cs / 12.0;
  p.color_a = {-0.85, -0.8, -0.7};
  p.color_b = {0.9, 0.7, 0.2};
  add(FamilyKind::blob_field, p, 0);
  p.correlation_length = cs / 7.0;
  p.color_a = {0.1, -0.4, -0.8};
  p.color_b = {-0.2, 0.6, 0.9};
  add(FamilyKind::blob_field, p, 1);

  p = {};
  p.period = cs / 5.0;
  p.orientation = 0.0;
  p.color_a = {-0.7, -0.75, -0.8};
  p.color_b = {0.75, 0.7, 0.55};
  add(FamilyKind::stripe_field, p, 0);
  p.period = cs / 6.0;
  p.orientation = 0.9;
  p.color_a = {0.6, -0.5, -0.3};
  p.color_b = {-0.6, 0.4, 0.7};
  add(FamilyKind::stripe_field, p, 1);

  p = {};
  p.correlation_length = cs / 6.0;
  p.color_a = {-0.8, -0.5, -0.1};
  p.color_b = {0.7, 0.6, 0.4};
  add(FamilyKind::voronoi_cells, p, 0);
  p.correlation_length = cs / 9.0;
  p.color_a = {-0.4, -0.9, -0.6};
  p.color_b = {0.3, 0.8, 0.9};
  add(FamilyKind::voronoi_cells, p, 1);

  return m;
}

// Turns a directory of decodable images into user_image families. Undecodable
// or undersized files are rejected per-file; rejection reasons are returned.
inline CorpusManifest ingest_directory(const std::string& path, int crop_size,
                                       std::vector<std::pair<std::string, std::string>>* rejected =
                                           nullptr) {
  namespace fs = std::filesystem;
  require(fs::is_directory(path), ErrorCode::EmptyDirectory, "not a directory: " + path);
  std::vector<std::string> entries;
  for (const auto& e : fs::directory_iterator(path))
    if (e.is_regular_file()) entries.push_back(e.path().string());
  std::sort(entries.begin(), entries.end());

  CorpusManifest m;
  m.crop_size = crop_size;
  m.seed = 0;
  int decodable = 0;
  for (const auto& file : entries) {
    Image img;
    try {
      img = read_png(file);
    } catch (const Error&) {
      if (rejected) rejected->emplace_back(file, "undecodable");
      std::cerr << "[corpus] skipping undecodable file: " << file << "\n";
      continue;
    }
    ++decodable;
    if (std::min(img.height, img.width) < 4 * crop_size) {
      const std::string why = "image " + std::to_string(img.width) + "x" +
                              std::to_string(img.height) + " smaller than 4x crop_size (" +
                              std::to_string(4 * crop_size) + ")";
      if (rejected) rejected->emplace_back(file, why);
      std::cerr << "[corpus] rejecting " << file << ": " << why << "\n";
      continue;
    }
    FamilyDesc d;
    d.kind = FamilyKind::user_image;
    d.params.crop_size = crop_size;
    d.params.base_size = std::min(img.height, img.width);
    d.params.source_path = file;
    d.seed = fnv1a(file);
    d.family_id = "user_" + fs::path(file).stem().string();
    d.count = 40;
    m.families.push_back(d);
  }
  require(decodable > 0, ErrorCode::EmptyDirectory, "no decodable images in " + path);
  require(!m.families.empty(), ErrorCode::EmptyDirectory,
          "no usable images in " + path + " (all rejected)");
  return m;
}

// Materialized corpus: every crop listed in the manifest, grouped by family.
struct CorpusCrops {
  CorpusManifest manifest;
  std::vector<std::vector<Image>> crops;  // [family][crop_index]

  int total() const {
    int t = 0;
    for (const auto& f : crops) t += static_cast<int>(f.size());
    return t;
  }
};

inline CorpusCrops materialize_corpus(const CorpusManifest& m) {
  CorpusCrops out;
  out.manifest = m;
  for (const auto& desc : m.families) {
    const TextureFamily fam = family_from_desc(desc);
    std::vector<Image> crops;
    for (int j = 0; j < desc.count; ++j)
      crops.push_back(sample_crop(fam, m.crop_size, derive_seed(m.seed, desc.family_id, j)).pixels);
    out.crops.push_back(std::move(crops));
  }
  return out;
}

inline void write_corpus_dir(const CorpusCrops& corpus, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  for (std::size_t i = 0; i < corpus.crops.size(); ++i) {
    const auto& fam = corpus.manifest.families[i];
    fs::create_directories(fs::path(dir) / fam.family_id);
    char name[32];
    for (std::size_t j = 0; j < corpus.crops[i].size(); ++j) {
      std::snprintf(name, sizeof(name), "crop_%04zu.png", j);
      write_png(corpus.crops[i][j], (fs::path(dir) / fam.family_id / name).string());
    }
  }
  save_manifest(corpus.manifest, (fs::path(dir) / "corpus_manifest.json").string());
}

inline CorpusCrops load_corpus_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  CorpusCrops out;
  out.manifest = load_manifest((fs::path(dir) / "corpus_manifest.json").string());
  for (const auto& fam : out.manifest.families) {
    std::vector<Image> crops;
    char name[32];
    for (int j = 0; j < fam.count; ++j) {
      std::snprintf(name, sizeof(name), "crop_%04d.png", j);
      const auto p = fs::path(dir) / fam.family_id / name;
      require(fs::exists(p), ErrorCode::MissingArtifact, "missing crop file " + p.string());
      crops.push_back(read_png(p.string()));
    }
    out.crops.push_back(std::move(crops));
  }
  return out;
}

}  // namespace texlab
