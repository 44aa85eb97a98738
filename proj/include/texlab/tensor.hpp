#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cstdint>
#include <vector>

#include "texlab/common.hpp"

namespace texlab {

// Dense NCHW tensor. Latent batches are stored as (n, dim, 1, 1) so the same
// layer machinery covers both image and vector data.
template <typename S>
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<S> v;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_)
      : n(n_), c(c_), h(h_), w(w_), v(static_cast<std::size_t>(n_) * c_ * h_ * w_, S(0)) {}

  static Tensor vectors(int n_, int dim) { return Tensor(n_, dim, 1, 1); }

  std::size_t size() const { return v.size(); }
  int plane() const { return h * w; }
  int per_item() const { return c * h * w; }

  S& at(int ni, int ci, int hi, int wi) {
    return v[((static_cast<std::size_t>(ni) * c + ci) * h + hi) * w + wi];
  }
  S at(int ni, int ci, int hi, int wi) const {
    return v[((static_cast<std::size_t>(ni) * c + ci) * h + hi) * w + wi];
  }

  S* item(int ni) { return v.data() + static_cast<std::size_t>(ni) * per_item(); }
  const S* item(int ni) const { return v.data() + static_cast<std::size_t>(ni) * per_item(); }

  void zero() { std::fill(v.begin(), v.end(), S(0)); }

  bool same_shape(const Tensor& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }
};

template <typename S>
using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MatMap = Eigen::Map<RowMat<S>>;
template <typename S>
using ConstMatMap = Eigen::Map<const RowMat<S>>;

template <typename S>
MatMap<S> as_matrix(std::vector<S>& v, int rows, int cols) {
  return MatMap<S>(v.data(), rows, cols);
}
template <typename S>
ConstMatMap<S> as_matrix(const std::vector<S>& v, int rows, int cols) {
  return ConstMatMap<S>(v.data(), rows, cols);
}

template <typename S>
void fill_normal(Tensor<S>& t, Rng& rng, double mean = 0.0, double stddev = 1.0) {
  for (auto& x : t.v) x = static_cast<S>(rng.normal(mean, stddev));
}

template <typename S>
double sum_squares(const std::vector<S>& v) {
  double s = 0;
  for (S x : v) s += static_cast<double>(x) * static_cast<double>(x);
  return s;
}

// Symmetric (edge-inclusive) reflection of an out-of-range coordinate.
inline int reflect_coord(int i, int n) {
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - i - 1;
  }
  return i;
}

// Patch matrix for 2D convolution: rows index (c, ky, kx), columns index
// (ho, wo) of one batch item. Out-of-range taps read zero, or the reflected
// pixel when reflect_pad is set.
template <typename S>
void im2col(const Tensor<S>& x, int ni, int k, int stride, int pad, int ho, int wo,
            std::vector<S>& col, bool reflect_pad = false) {
  const int rows = x.c * k * k;
  col.resize(static_cast<std::size_t>(rows) * ho * wo);
  const S* src = x.item(ni);
  std::size_t r = 0;
  for (int ci = 0; ci < x.c; ++ci) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx, ++r) {
        S* dst = col.data() + r * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
          int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= x.h) {
            if (!reflect_pad) {
              std::fill(dst + oy * wo, dst + (oy + 1) * wo, S(0));
              continue;
            }
            iy = reflect_coord(iy, x.h);
          }
          const S* row = src + (static_cast<std::size_t>(ci) * x.h + iy) * x.w;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride + kx - pad;
            if (ix >= 0 && ix < x.w)
              dst[oy * wo + ox] = row[ix];
            else
              dst[oy * wo + ox] = reflect_pad ? row[reflect_coord(ix, x.w)] : S(0);
          }
        }
      }
    }
  }
}

// Transpose of im2col: scatter-add a patch matrix back into image layout.
template <typename S>
void col2im_add(const std::vector<S>& col, int c, int h, int w, int k, int stride, int pad,
                int ho, int wo, S* dst, bool reflect_pad = false) {
  std::size_t r = 0;
  for (int ci = 0; ci < c; ++ci) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx, ++r) {
        const S* src = col.data() + r * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
          int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= h) {
            if (!reflect_pad) continue;
            iy = reflect_coord(iy, h);
          }
          S* row = dst + (static_cast<std::size_t>(ci) * h + iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            int ix = ox * stride + kx - pad;
            if (ix < 0 || ix >= w) {
              if (!reflect_pad) continue;
              ix = reflect_coord(ix, w);
            }
            row[ix] += src[oy * wo + ox];
          }
        }
      }
    }
  }
}

}  // namespace texlab
