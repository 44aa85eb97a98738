#pragma once

#include <array>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "texlab/common.hpp"
#include "texlab/corpus.hpp"
#include "texlab/image.hpp"
#include "texlab/nn.hpp"
#include "texlab/tensor.hpp"

namespace texlab {

template <typename S>
struct LatentZT {
  std::vector<S> v;
};
template <typename S>
struct LatentWT {
  std::vector<S> v;
};
using LatentZ = LatentZT<float>;
using LatentW = LatentWT<float>;

template <typename S>
struct FeatureMapsT {
  struct Layer {
    int channels = 0, side = 0;
    std::vector<S> values;  // channels x side x side
  };
  std::vector<Layer> layers;
};
using FeatureMaps = FeatureMapsT<float>;

struct ModelDims {
  int latent_dim = 32;
  int image_size = 32;
  int channels = 3;
  int base_size = 4;                          // synthesis starts from a learned base x base map
  int gen_base_channels = 64;                 // channels of the learned constant
  std::vector<int> gen_channels = {64, 32, 16};  // per upsample block
  std::vector<int> enc_channels = {16, 32, 64, 64, 64};  // stem + 4 downsample blocks
  int enc_fc = 128;
  std::vector<int> disc_channels = {16, 32, 64, 64};  // stem + 3 downsample blocks
  int disc_fc = 64;
  std::vector<int> phi_channels = {16, 32, 64, 64};

  int gen_blocks() const {
    int n = 0, s = base_size;
    while (s < image_size) {
      s *= 2;
      ++n;
    }
    return n;
  }

  void validate() const {
    require(latent_dim >= 2, ErrorCode::InvalidParams, "latent_dim must be >= 2");
    require(channels == 3, ErrorCode::InvalidParams, "only 3-channel images are supported");
    int s = base_size;
    for (int i = 0; i < gen_blocks(); ++i) s *= 2;
    require(s == image_size, ErrorCode::InvalidParams,
            "image_size must be base_size * 2^k, got " + std::to_string(image_size));
    require(static_cast<int>(gen_channels.size()) == gen_blocks(), ErrorCode::InvalidParams,
            "gen_channels must list one channel count per upsample block");
    require(enc_channels.size() == 5 && disc_channels.size() == 4 && phi_channels.size() == 4,
            ErrorCode::InvalidParams, "channel schedules have fixed block counts");
    require(image_size >= 16 && image_size % 16 == 0, ErrorCode::InvalidParams,
            "image_size must be a multiple of 16");
  }
};

// ---- per-item normalization across features (latents) ----

template <typename S>
Tensor<S> pixelnorm_forward(const Tensor<S>& x, std::vector<S>* inv_out, double eps = 1e-8) {
  Tensor<S> y = x;
  const int f = x.per_item();
  if (inv_out) inv_out->assign(x.n, S(0));
  for (int ni = 0; ni < x.n; ++ni) {
    S* p = y.item(ni);
    double s = 0;
    for (int i = 0; i < f; ++i) s += static_cast<double>(p[i]) * p[i];
    const S inv = static_cast<S>(1.0 / std::sqrt(s / f + eps));
    if (inv_out) (*inv_out)[ni] = inv;
    for (int i = 0; i < f; ++i) p[i] *= inv;
  }
  return y;
}

template <typename S>
Tensor<S> pixelnorm_backward(const Tensor<S>& x, const std::vector<S>& inv, const Tensor<S>& dy) {
  Tensor<S> dx = dy;
  const int f = x.per_item();
  for (int ni = 0; ni < x.n; ++ni) {
    const S* xp = x.item(ni);
    const S* dyp = dy.item(ni);
    S* dxp = dx.item(ni);
    double dot = 0;
    for (int i = 0; i < f; ++i) dot += static_cast<double>(dyp[i]) * xp[i];
    const double k = static_cast<double>(inv[ni]) * inv[ni] * inv[ni] * dot / f;
    for (int i = 0; i < f; ++i) dxp[i] = static_cast<S>(inv[ni] * dyp[i] - k * xp[i]);
  }
  return dx;
}

// ---- mapping network M: Z -> W ----

template <typename S>
struct MappingNet {
  int d = 0;
  bool identity = false;  // debug mode: M is literally the identity map
  DenseP<S> fc1, fc2;

  struct Cache {
    Tensor<S> x, xn, z1, a1;
    std::vector<S> inv;
  };
  struct Grads {
    DenseGrad<S> fc1, fc2;
    void match(const MappingNet& n) {
      fc1.match(n.fc1);
      fc2.match(n.fc2);
    }
    template <typename F>
    void visit(F&& f) {
      f("g", fc1.weight);
      f("g", fc1.bias);
      f("g", fc2.weight);
      f("g", fc2.bias);
    }
  };

  void init(int dim, Rng& rng) {
    d = dim;
    fc1.init(d, d, rng, std::sqrt(2.0));
    fc2.init(d, d, rng, 1.0);
  }

  Tensor<S> forward(const Tensor<S>& z, Cache* c = nullptr) const {
    require(z.per_item() == d, ErrorCode::DimMismatch,
            "mapping expects dim " + std::to_string(d) + ", got " + std::to_string(z.per_item()));
    if (identity) {
      if (c) c->x = z;
      return z;
    }
    Cache local;
    Cache& cc = c ? *c : local;
    cc.x = z;
    cc.xn = pixelnorm_forward(z, &cc.inv);
    cc.z1 = dense_forward(fc1, cc.xn);
    cc.a1 = lrelu_forward(cc.z1);
    return dense_forward(fc2, cc.a1);
  }

  void backward(const Cache& c, const Tensor<S>& dw, Grads* g, Tensor<S>* dz) const {
    if (identity) {
      if (dz) *dz = dw;
      return;
    }
    Tensor<S> da1;
    dense_backward(fc2, c.a1, dw, g ? &g->fc2 : nullptr, &da1);
    Tensor<S> dz1 = lrelu_backward(c.z1, da1);
    Tensor<S> dxn;
    dense_backward(fc1, c.xn, dz1, g ? &g->fc1 : nullptr, dz ? &dxn : nullptr);
    if (dz) *dz = pixelnorm_backward(c.x, c.inv, dxn);
  }

  template <typename F>
  void visit(F&& f) {
    if (identity) return;
    f("mapping.fc1.weight", fc1.weight);
    f("mapping.fc1.bias", fc1.bias);
    f("mapping.fc2.weight", fc2.weight);
    f("mapping.fc2.bias", fc2.bias);
  }
};

// ---- synthesis network: learned constant + upsample blocks, each modulated
// by a per-channel (scale, shift) affine of w ----

template <typename S>
struct SynthesisNet {
  int d = 0, base = 4, img = 0;
  int base_c = 0;
  std::vector<S> const_input;  // base_c x base x base
  struct Block {
    ConvP<S> conv;
    DenseP<S> aff_s, aff_t;  // d -> channels of this block
  };
  std::vector<Block> blocks;
  ConvP<S> to_rgb;

  struct BlockCache {
    Tensor<S> x_up, z, xhat, y;
    Tensor<S> s, t;  // (n, c, 1, 1)
    RmsCache<S> rms;
  };
  struct Cache {
    Tensor<S> w;
    std::vector<BlockCache> blocks;
    Tensor<S> rgb_in, out;
  };
  struct Grads {
    std::vector<S> const_input;
    struct BlockGrads {
      ConvGrad<S> conv;
      DenseGrad<S> aff_s, aff_t;
    };
    std::vector<BlockGrads> blocks;
    ConvGrad<S> to_rgb;
    void match(const SynthesisNet& n) {
      const_input.assign(n.const_input.size(), S(0));
      blocks.resize(n.blocks.size());
      for (std::size_t i = 0; i < n.blocks.size(); ++i) {
        blocks[i].conv.match(n.blocks[i].conv);
        blocks[i].aff_s.match(n.blocks[i].aff_s);
        blocks[i].aff_t.match(n.blocks[i].aff_t);
      }
      to_rgb.match(n.to_rgb);
    }
    template <typename F>
    void visit(F&& f) {
      f("g", const_input);
      for (auto& b : blocks) {
        f("g", b.conv.weight);
        f("g", b.conv.bias);
        f("g", b.aff_s.weight);
        f("g", b.aff_s.bias);
        f("g", b.aff_t.weight);
        f("g", b.aff_t.bias);
      }
      f("g", to_rgb.weight);
      f("g", to_rgb.bias);
    }
  };

  void init(const ModelDims& dims, Rng& rng) {
    d = dims.latent_dim;
    base = dims.base_size;
    img = dims.image_size;
    base_c = dims.gen_base_channels;
    const_input.assign(static_cast<std::size_t>(base_c) * base * base, S(0));
    rng.fill_normal(const_input);
    int in_c = base_c;
    blocks.clear();
    for (int out_c : dims.gen_channels) {
      Block b;
      b.conv.init(in_c, out_c, 3, 1, rng);
      b.aff_s.init(d, out_c, rng, 0.3);
      b.aff_t.init(d, out_c, rng, 0.3);
      blocks.push_back(std::move(b));
      in_c = out_c;
    }
    to_rgb.init(in_c, dims.channels, 1, 1, rng, 1.0);
  }

  Tensor<S> forward(const Tensor<S>& w, Cache* c = nullptr) const {
    require(w.per_item() == d, ErrorCode::DimMismatch,
            "synthesis expects dim " + std::to_string(d) + ", got " + std::to_string(w.per_item()));
    Cache local;
    Cache& cc = c ? *c : local;
    cc.w = w;
    cc.blocks.assign(blocks.size(), {});
    Tensor<S> x(w.n, base_c, base, base);
    for (int ni = 0; ni < w.n; ++ni)
      std::copy(const_input.begin(), const_input.end(), x.item(ni));
    for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
      const Block& b = blocks[bi];
      BlockCache& bc = cc.blocks[bi];
      bc.x_up = upsample2_forward(x);
      bc.z = conv_forward(b.conv, bc.x_up);
      bc.xhat = rmsnorm_forward(bc.z, bc.rms);
      bc.s = dense_forward(b.aff_s, w);
      for (auto& v : bc.s.v) v += S(1);
      bc.t = dense_forward(b.aff_t, w);
      bc.y = bc.xhat;
      const int P = bc.y.plane();
      for (int ni = 0; ni < bc.y.n; ++ni)
        for (int ci = 0; ci < bc.y.c; ++ci) {
          S* p = &bc.y.v[(static_cast<std::size_t>(ni) * bc.y.c + ci) * P];
          const S sv = bc.s.v[static_cast<std::size_t>(ni) * bc.y.c + ci];
          const S tv = bc.t.v[static_cast<std::size_t>(ni) * bc.y.c + ci];
          for (int i = 0; i < P; ++i) p[i] = p[i] * sv + tv;
        }
      x = lrelu_forward(bc.y);
    }
    cc.rgb_in = x;
    Tensor<S> z = conv_forward(to_rgb, x);
    cc.out = tanh_forward(z);
    return cc.out;
  }

  void backward(const Cache& c, const Tensor<S>& dout, Grads* g, Tensor<S>* dw) const {
    Tensor<S> dz_rgb = tanh_backward(c.out, dout);
    Tensor<S> da;
    conv_backward(to_rgb, c.rgb_in, dz_rgb, g ? &g->to_rgb : nullptr, &da);
    if (dw) *dw = Tensor<S>::vectors(c.w.n, d);
    for (int bi = static_cast<int>(blocks.size()) - 1; bi >= 0; --bi) {
      const Block& b = blocks[bi];
      const BlockCache& bc = c.blocks[bi];
      Tensor<S> dy = lrelu_backward(bc.y, da);
      // split dy into the normalized path and the (s, t) affines
      Tensor<S> ds = Tensor<S>::vectors(dy.n, dy.c);
      Tensor<S> dt = Tensor<S>::vectors(dy.n, dy.c);
      Tensor<S> dxhat = dy;
      const int P = dy.plane();
      for (int ni = 0; ni < dy.n; ++ni)
        for (int ci = 0; ci < dy.c; ++ci) {
          const std::size_t off = (static_cast<std::size_t>(ni) * dy.c + ci) * P;
          const S sv = bc.s.v[static_cast<std::size_t>(ni) * dy.c + ci];
          double ds_acc = 0, dt_acc = 0;
          for (int i = 0; i < P; ++i) {
            ds_acc += static_cast<double>(dy.v[off + i]) * bc.xhat.v[off + i];
            dt_acc += dy.v[off + i];
            dxhat.v[off + i] *= sv;
          }
          ds.v[static_cast<std::size_t>(ni) * dy.c + ci] = static_cast<S>(ds_acc);
          dt.v[static_cast<std::size_t>(ni) * dy.c + ci] = static_cast<S>(dt_acc);
        }
      Tensor<S> dz = rmsnorm_backward(bc.z, bc.rms, dxhat);
      Tensor<S> dx_up;
      conv_backward(b.conv, bc.x_up, dz, g ? &g->blocks[bi].conv : nullptr, &dx_up);
      da = upsample2_backward(dx_up);
      Tensor<S> dw_s, dw_t;
      dense_backward(b.aff_s, c.w, ds, g ? &g->blocks[bi].aff_s : nullptr, dw ? &dw_s : nullptr);
      dense_backward(b.aff_t, c.w, dt, g ? &g->blocks[bi].aff_t : nullptr, dw ? &dw_t : nullptr);
      if (dw)
        for (std::size_t i = 0; i < dw->v.size(); ++i) dw->v[i] += dw_s.v[i] + dw_t.v[i];
    }
    if (g) {
      // da now holds the gradient at the broadcast constant
      for (int ni = 0; ni < da.n; ++ni) {
        const S* src = da.item(ni);
        for (std::size_t i = 0; i < g->const_input.size(); ++i) g->const_input[i] += src[i];
      }
    }
  }

  template <typename F>
  void visit(F&& f) {
    f("synthesis.const", const_input);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const std::string p = "synthesis.block" + std::to_string(i);
      f((p + ".conv.weight").c_str(), blocks[i].conv.weight);
      f((p + ".conv.bias").c_str(), blocks[i].conv.bias);
      f((p + ".aff_s.weight").c_str(), blocks[i].aff_s.weight);
      f((p + ".aff_s.bias").c_str(), blocks[i].aff_s.bias);
      f((p + ".aff_t.weight").c_str(), blocks[i].aff_t.weight);
      f((p + ".aff_t.bias").c_str(), blocks[i].aff_t.bias);
    }
    f("synthesis.to_rgb.weight", to_rgb.weight);
    f("synthesis.to_rgb.bias", to_rgb.bias);
  }
};

// ---- shared conv trunk for the discriminator and the encoder ----

template <typename S>
struct ConvTrunk {
  ConvP<S> stem;
  std::vector<ConvP<S>> down;

  struct Cache {
    Tensor<S> x;
    Tensor<S> z_stem, a_stem;
    std::vector<Tensor<S>> z_down, a_down;
  };
  struct Grads {
    ConvGrad<S> stem;
    std::vector<ConvGrad<S>> down;
    void match(const ConvTrunk& t) {
      stem.match(t.stem);
      down.resize(t.down.size());
      for (std::size_t i = 0; i < t.down.size(); ++i) down[i].match(t.down[i]);
    }
    template <typename F>
    void visit(F&& f) {
      f("g", stem.weight);
      f("g", stem.bias);
      for (auto& d : down) {
        f("g", d.weight);
        f("g", d.bias);
      }
    }
  };

  void init(int in_c, const std::vector<int>& chans, Rng& rng) {
    stem.init(in_c, chans[0], 3, 1, rng);
    down.clear();
    for (std::size_t i = 1; i < chans.size(); ++i) {
      ConvP<S> c;
      c.init(down.empty() ? chans[0] : down.back().out_c, chans[i], 3, 2, rng);
      down.push_back(std::move(c));
    }
  }

  Tensor<S> forward(const Tensor<S>& x, Cache& c) const {
    c.x = x;
    c.z_stem = conv_forward(stem, x);
    c.a_stem = lrelu_forward(c.z_stem);
    c.z_down.assign(down.size(), {});
    c.a_down.assign(down.size(), {});
    const Tensor<S>* cur = &c.a_stem;
    for (std::size_t i = 0; i < down.size(); ++i) {
      c.z_down[i] = conv_forward(down[i], *cur);
      c.a_down[i] = lrelu_forward(c.z_down[i]);
      cur = &c.a_down[i];
    }
    return *cur;
  }

  // Backward from the trunk output gradient. Optionally records the masked
  // pre-activation deltas of every conv output (needed by the R1 pass).
  void backward(const Cache& c, const Tensor<S>& dtop, Grads* g, Tensor<S>* dx,
                std::vector<Tensor<S>>* deltas) const {
    Tensor<S> da = dtop;
    if (deltas) deltas->assign(down.size() + 1, {});
    for (int i = static_cast<int>(down.size()) - 1; i >= 0; --i) {
      Tensor<S> dz = lrelu_backward(c.z_down[i], da);
      if (deltas) (*deltas)[i + 1] = dz;
      const Tensor<S>& input = (i == 0) ? c.a_stem : c.a_down[i - 1];
      conv_backward(down[i], input, dz, g ? &g->down[i] : nullptr, &da);
    }
    Tensor<S> dz = lrelu_backward(c.z_stem, da);
    if (deltas) (*deltas)[0] = dz;
    conv_backward(stem, c.x, dz, g ? &g->stem : nullptr, dx);
  }

  template <typename F>
  void visit(const char* prefix, F&& f) {
    std::string p(prefix);
    f((p + ".stem.weight").c_str(), stem.weight);
    f((p + ".stem.bias").c_str(), stem.bias);
    for (std::size_t i = 0; i < down.size(); ++i) {
      const std::string q = p + ".down" + std::to_string(i);
      f((q + ".weight").c_str(), down[i].weight);
      f((q + ".bias").c_str(), down[i].bias);
    }
  }
};

// ---- discriminator ----

template <typename S>
struct Discriminator {
  int img = 0;
  ConvTrunk<S> trunk;
  DenseP<S> fc1, fc2;

  struct Cache {
    typename ConvTrunk<S>::Cache trunk;
    Tensor<S> top, z_fc1, a_fc1, score;
  };
  struct Grads {
    typename ConvTrunk<S>::Grads trunk;
    DenseGrad<S> fc1, fc2;
    void match(const Discriminator& d) {
      trunk.match(d.trunk);
      fc1.match(d.fc1);
      fc2.match(d.fc2);
    }
    template <typename F>
    void visit(F&& f) {
      trunk.visit(f);
      f("g", fc1.weight);
      f("g", fc1.bias);
      f("g", fc2.weight);
      f("g", fc2.bias);
    }
  };

  void init(const ModelDims& dims, Rng& rng) {
    img = dims.image_size;
    trunk.init(dims.channels, dims.disc_channels, rng);
    int side = dims.image_size;
    for (std::size_t i = 0; i + 1 < dims.disc_channels.size(); ++i) side = (side + 1) / 2;
    fc1.init(dims.disc_channels.back() * side * side, dims.disc_fc, rng, std::sqrt(2.0));
    fc2.init(dims.disc_fc, 1, rng, 1.0);
  }

  Tensor<S> forward(const Tensor<S>& x, Cache& c) const {
    require(x.h == img && x.w == img, ErrorCode::SizeMismatch,
            "discriminator expects " + std::to_string(img) + "x" + std::to_string(img));
    c.top = trunk.forward(x, c.trunk);
    c.z_fc1 = dense_forward(fc1, c.top);
    c.a_fc1 = lrelu_forward(c.z_fc1);
    c.score = dense_forward(fc2, c.a_fc1);
    return c.score;
  }

  void backward(const Cache& c, const Tensor<S>& dscore, Grads* g, Tensor<S>* dx,
                std::vector<Tensor<S>>* conv_deltas = nullptr, Tensor<S>* fc1_delta = nullptr) const {
    Tensor<S> da_fc1;
    dense_backward(fc2, c.a_fc1, dscore, g ? &g->fc2 : nullptr, &da_fc1);
    Tensor<S> dz_fc1 = lrelu_backward(c.z_fc1, da_fc1);
    if (fc1_delta) *fc1_delta = dz_fc1;
    Tensor<S> dtop_flat;
    dense_backward(fc1, c.top, dz_fc1, g ? &g->fc1 : nullptr, &dtop_flat);
    Tensor<S> dtop(c.top.n, c.top.c, c.top.h, c.top.w);
    dtop.v = dtop_flat.v;
    trunk.backward(c.trunk, dtop, g ? &g->trunk : nullptr, dx, conv_deltas);
  }

  // Zero-centered gradient penalty on real batches: P = sum_b ||grad_x D(x_b)||^2.
  // The parameter gradient of P is exact for piecewise-linear activations: the
  // backward chain is linear in the weights given the activation masks, so a
  // second mask-linearized forward pass starting from 2*grad_x yields it.
  // Biases influence P only through the masks and receive no gradient.
  double r1_penalty_grad(const Cache& c, double coeff, Grads& g) const {
    std::vector<Tensor<S>> deltas;
    Tensor<S> fc1_delta;
    Tensor<S> ones = Tensor<S>::vectors(c.score.n, 1);
    std::fill(ones.v.begin(), ones.v.end(), S(1));
    Tensor<S> gx;
    backward(c, ones, nullptr, &gx, &deltas, &fc1_delta);
    double penalty = 0;
    for (S v : gx.v) penalty += static_cast<double>(v) * v;

    // linearized forward from u = 2*coeff*gx, accumulating weight-only grads
    Tensor<S> u = gx;
    const S k = static_cast<S>(2.0 * coeff);
    for (auto& v : u.v) v *= k;

    conv_backward(trunk.stem, u, deltas[0], &g.trunk.stem, static_cast<Tensor<S>*>(nullptr));
    strip_bias(g.trunk.stem, deltas[0]);
    Tensor<S> v = conv_forward(trunk.stem, u);
    sub_bias(trunk.stem, v);
    lrelu_mask_inplace(c.trunk.z_stem, v);
    for (std::size_t i = 0; i < trunk.down.size(); ++i) {
      conv_backward(trunk.down[i], v, deltas[i + 1], &g.trunk.down[i],
                    static_cast<Tensor<S>*>(nullptr));
      strip_bias(g.trunk.down[i], deltas[i + 1]);
      Tensor<S> nv = conv_forward(trunk.down[i], v);
      sub_bias(trunk.down[i], nv);
      lrelu_mask_inplace(c.trunk.z_down[i], nv);
      v = nv;
    }
    dense_backward(fc1, v, fc1_delta, &g.fc1, static_cast<Tensor<S>*>(nullptr));
    strip_bias_dense(g.fc1, fc1_delta);
    Tensor<S> vf = dense_forward(fc1, v);
    sub_bias_dense(fc1, vf);
    lrelu_mask_inplace(c.z_fc1, vf);
    Tensor<S> ones_d = ones;  // delta at the score output is the upstream 1
    dense_backward(fc2, vf, ones_d, &g.fc2, static_cast<Tensor<S>*>(nullptr));
    strip_bias_dense(g.fc2, ones_d);
    return penalty;
  }

  template <typename F>
  void visit(F&& f) {
    trunk.visit("disc", f);
    f("disc.fc1.weight", fc1.weight);
    f("disc.fc1.bias", fc1.bias);
    f("disc.fc2.weight", fc2.weight);
    f("disc.fc2.bias", fc2.bias);
  }

 private:
  // conv/dense_backward accumulate a bias term from the delta; the R1 pass
  // must not, so remove exactly what was just added.
  static void strip_bias(ConvGrad<S>& g, const Tensor<S>& dy) {
    for (int ni = 0; ni < dy.n; ++ni)
      for (int ci = 0; ci < dy.c; ++ci) {
        const S* p = &dy.v[(static_cast<std::size_t>(ni) * dy.c + ci) * dy.plane()];
        double s = 0;
        for (int i = 0; i < dy.plane(); ++i) s += p[i];
        g.bias[ci] -= static_cast<S>(s);
      }
  }
  static void strip_bias_dense(DenseGrad<S>& g, const Tensor<S>& dy) {
    for (int ni = 0; ni < dy.n; ++ni)
      for (int o = 0; o < dy.per_item(); ++o) g.bias[o] -= dy.item(ni)[o];
  }
  static void sub_bias(const ConvP<S>& p, Tensor<S>& y) {
    for (int ni = 0; ni < y.n; ++ni)
      for (int ci = 0; ci < y.c; ++ci) {
        S* q = &y.v[(static_cast<std::size_t>(ni) * y.c + ci) * y.plane()];
        for (int i = 0; i < y.plane(); ++i) q[i] -= p.bias[ci];
      }
  }
  static void sub_bias_dense(const DenseP<S>& p, Tensor<S>& y) {
    for (int ni = 0; ni < y.n; ++ni)
      for (int o = 0; o < p.out_f; ++o) y.item(ni)[o] -= p.bias[o];
  }
};

// ---- encoder F: image -> w ----

template <typename S>
struct Encoder {
  int img = 0, d = 0;
  ConvTrunk<S> trunk;
  DenseP<S> fc1, fc2;

  struct Cache {
    typename ConvTrunk<S>::Cache trunk;
    Tensor<S> top, z_fc1, a_fc1;
  };
  struct Grads {
    typename ConvTrunk<S>::Grads trunk;
    DenseGrad<S> fc1, fc2;
    void match(const Encoder& e) {
      trunk.match(e.trunk);
      fc1.match(e.fc1);
      fc2.match(e.fc2);
    }
    template <typename F>
    void visit(F&& f) {
      trunk.visit(f);
      f("g", fc1.weight);
      f("g", fc1.bias);
      f("g", fc2.weight);
      f("g", fc2.bias);
    }
  };

  void init(const ModelDims& dims, Rng& rng) {
    img = dims.image_size;
    d = dims.latent_dim;
    trunk.init(dims.channels, dims.enc_channels, rng);
    int side = dims.image_size;
    for (std::size_t i = 0; i + 1 < dims.enc_channels.size(); ++i) side = (side + 1) / 2;
    fc1.init(dims.enc_channels.back() * side * side, dims.enc_fc, rng, std::sqrt(2.0));
    fc2.init(dims.enc_fc, d, rng, 1.0);
  }

  Tensor<S> forward(const Tensor<S>& x, Cache& c) const {
    require(x.h == img && x.w == img, ErrorCode::SizeMismatch,
            "encoder expects " + std::to_string(img) + "x" + std::to_string(img));
    c.top = trunk.forward(x, c.trunk);
    c.z_fc1 = dense_forward(fc1, c.top);
    c.a_fc1 = lrelu_forward(c.z_fc1);
    return dense_forward(fc2, c.a_fc1);
  }

  void backward(const Cache& c, const Tensor<S>& dwhat, Grads* g, Tensor<S>* dx) const {
    Tensor<S> da_fc1;
    dense_backward(fc2, c.a_fc1, dwhat, g ? &g->fc2 : nullptr, &da_fc1);
    Tensor<S> dz_fc1 = lrelu_backward(c.z_fc1, da_fc1);
    Tensor<S> dtop_flat;
    dense_backward(fc1, c.top, dz_fc1, g ? &g->fc1 : nullptr, &dtop_flat);
    Tensor<S> dtop(c.top.n, c.top.c, c.top.h, c.top.w);
    dtop.v = dtop_flat.v;
    trunk.backward(c.trunk, dtop, g ? &g->trunk : nullptr, dx, nullptr);
  }

  template <typename F>
  void visit(F&& f) {
    trunk.visit("encoder", f);
    f("encoder.fc1.weight", fc1.weight);
    f("encoder.fc1.bias", fc1.bias);
    f("encoder.fc2.weight", fc2.weight);
    f("encoder.fc2.bias", fc2.bias);
  }
};

// ---- frozen random-weight feature extractor ----

template <typename S>
struct FeatureExtractor {
  int img = 0;
  std::vector<ConvP<S>> convs;  // strides 1,2,2,2

  struct Cache {
    Tensor<S> x;
    std::vector<Tensor<S>> z, a;
  };

  void init(const ModelDims& dims, Rng& rng) {
    img = dims.image_size;
    convs.clear();
    int in_c = dims.channels;
    for (std::size_t i = 0; i < dims.phi_channels.size(); ++i) {
      ConvP<S> c;
      c.init(in_c, dims.phi_channels[i], 3, i == 0 ? 1 : 2, rng);
      c.reflect_pad = true;  // borders see texture, keeping Grams shift-tolerant
      convs.push_back(std::move(c));
      in_c = dims.phi_channels[i];
    }
  }

  // Post-activation maps of all layers; spatial sides strictly decrease.
  std::vector<Tensor<S>> forward(const Tensor<S>& x, Cache* c = nullptr) const {
    require(x.h == img && x.w == img, ErrorCode::SizeMismatch,
            "feature extractor expects " + std::to_string(img) + "x" + std::to_string(img));
    Cache local;
    Cache& cc = c ? *c : local;
    cc.x = x;
    cc.z.assign(convs.size(), {});
    cc.a.assign(convs.size(), {});
    const Tensor<S>* cur = &cc.x;
    for (std::size_t i = 0; i < convs.size(); ++i) {
      cc.z[i] = conv_forward(convs[i], *cur);
      cc.a[i] = lrelu_forward(cc.z[i]);
      cur = &cc.a[i];
    }
    return cc.a;
  }

  // dfeats holds one gradient tensor per layer; empty tensors mean no
  // gradient flows into that layer's output directly.
  void backward(const Cache& c, const std::vector<Tensor<S>>& dfeats, Tensor<S>* dx) const {
    Tensor<S> da;
    for (int i = static_cast<int>(convs.size()) - 1; i >= 0; --i) {
      if (da.size() == 0) {
        if (dfeats[i].size() == 0) continue;
        da = dfeats[i];
      } else if (dfeats[i].size() > 0) {
        for (std::size_t j = 0; j < da.v.size(); ++j) da.v[j] += dfeats[i].v[j];
      }
      Tensor<S> dz = lrelu_backward(c.z[i], da);
      const Tensor<S>& input = (i == 0) ? c.x : c.a[i - 1];
      Tensor<S> dprev;
      conv_backward(convs[i], input, dz, static_cast<ConvGrad<S>*>(nullptr),
                    (i == 0 && !dx) ? nullptr : &dprev);
      if (i == 0) {
        if (dx) *dx = dprev;
      } else {
        da = dprev;
      }
    }
    if (dx && dx->size() == 0) *dx = Tensor<S>(c.x.n, c.x.c, c.x.h, c.x.w);
  }

  template <typename F>
  void visit(F&& f) {
    for (std::size_t i = 0; i < convs.size(); ++i) {
      const std::string p = "phi.conv" + std::to_string(i);
      f((p + ".weight").c_str(), convs[i].weight);
      f((p + ".bias").c_str(), convs[i].bias);
    }
  }
};

// ---- bundle ----

template <typename S>
struct ModelBundleT {
  ModelDims dims;
  MappingNet<S> mapping;
  SynthesisNet<S> synthesis;
  Discriminator<S> disc;
  Encoder<S> encoder;
  FeatureExtractor<S> phi;
  std::optional<std::vector<S>> mean_w;
  bool generator_trained = false;
  bool encoder_trained = false;
  std::map<std::string, std::uint64_t> seeds;
  std::uint64_t config_hash = 0;
};
using ModelBundle = ModelBundleT<float>;

template <typename S>
ModelBundleT<S> create_bundle(const ModelDims& dims, std::uint64_t seed, bool identity_mapping = false) {
  dims.validate();
  ModelBundleT<S> b;
  b.dims = dims;
  b.seeds["model"] = seed;
  {
    Rng r(derive_seed(seed, "mapping"));
    b.mapping.init(dims.latent_dim, r);
    b.mapping.identity = identity_mapping;
  }
  {
    Rng r(derive_seed(seed, "synthesis"));
    b.synthesis.init(dims, r);
  }
  {
    Rng r(derive_seed(seed, "disc"));
    b.disc.init(dims, r);
  }
  {
    Rng r(derive_seed(seed, "encoder"));
    b.encoder.init(dims, r);
  }
  {
    Rng r(derive_seed(seed, "phi"));
    b.phi.init(dims, r);
  }
  return b;
}

// ---- checksums (frozen-parameter contracts) ----

template <typename S, typename Net>
std::uint64_t net_checksum(Net& net) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  net.visit([&h](const char*, std::vector<S>& v) { h = params_checksum_acc(v, h); });
  return h;
}

template <typename S>
std::uint64_t generator_checksum(ModelBundleT<S>& b) {
  std::uint64_t h = net_checksum<S>(b.mapping);
  return net_checksum<S>(b.synthesis) ^ h;
}
template <typename S>
std::uint64_t phi_checksum(ModelBundleT<S>& b) {
  return net_checksum<S>(b.phi);
}
template <typename S>
std::uint64_t encoder_checksum(ModelBundleT<S>& b) {
  return net_checksum<S>(b.encoder);
}

// ---- batched helpers ----

template <typename S>
Tensor<S> sample_z_batch(int n, int d, std::uint64_t seed) {
  Tensor<S> z = Tensor<S>::vectors(n, d);
  Rng rng(seed);
  rng.fill_normal(z.v);
  return z;
}

template <typename S>
Tensor<S> synthesize_batch(const ModelBundleT<S>& b, const Tensor<S>& w) {
  return b.synthesis.forward(w);
}

template <typename S>
Tensor<S> encode_batch(const ModelBundleT<S>& b, const Tensor<S>& images) {
  typename Encoder<S>::Cache c;
  return b.encoder.forward(images, c);
}

// ---- public single-item operations ----

template <typename S>
LatentWT<S> map_latent(const LatentZT<S>& z, const ModelBundleT<S>& b) {
  require(static_cast<int>(z.v.size()) == b.dims.latent_dim, ErrorCode::DimMismatch,
          "latent dim " + std::to_string(z.v.size()) + " != " + std::to_string(b.dims.latent_dim));
  Tensor<S> t = Tensor<S>::vectors(1, b.dims.latent_dim);
  t.v = z.v;
  Tensor<S> w = b.mapping.forward(t);
  return {w.v};
}

template <typename S>
TextureCrop synthesize(const LatentWT<S>& w, const ModelBundleT<S>& b) {
  require(static_cast<int>(w.v.size()) == b.dims.latent_dim, ErrorCode::DimMismatch,
          "latent dim " + std::to_string(w.v.size()) + " != " + std::to_string(b.dims.latent_dim));
  Tensor<S> t = Tensor<S>::vectors(1, b.dims.latent_dim);
  t.v = w.v;
  Tensor<S> img = b.synthesis.forward(t);
  TextureCrop crop;
  crop.family_id = "generated";
  crop.pixels = from_tensor(img);
  return crop;
}

template <typename S>
void check_image_size(const Image& img, const ModelBundleT<S>& b) {
  require(img.height == b.dims.image_size && img.width == b.dims.image_size &&
              img.channels == b.dims.channels,
          ErrorCode::SizeMismatch,
          "image " + std::to_string(img.width) + "x" + std::to_string(img.height) + " does not match configured " +
              std::to_string(b.dims.image_size));
}

template <typename S>
double discriminate(const Image& img, const ModelBundleT<S>& b) {
  check_image_size(img, b);
  typename Discriminator<S>::Cache c;
  Tensor<S> score = b.disc.forward(to_tensor<S>(img), c);
  return static_cast<double>(score.v[0]);
}

template <typename S>
std::vector<double> discriminate_batch(const Tensor<S>& images, const ModelBundleT<S>& b) {
  typename Discriminator<S>::Cache c;
  Tensor<S> score = b.disc.forward(images, c);
  std::vector<double> out(score.v.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<double>(score.v[i]);
  return out;
}

template <typename S>
LatentWT<S> encode(const Image& img, const ModelBundleT<S>& b) {
  check_image_size(img, b);
  typename Encoder<S>::Cache c;
  Tensor<S> w = b.encoder.forward(to_tensor<S>(img), c);
  return {w.v};
}

template <typename S>
FeatureMapsT<S> extract_features(const Image& img, const ModelBundleT<S>& b) {
  check_image_size(img, b);
  auto feats = b.phi.forward(to_tensor<S>(img));
  FeatureMapsT<S> out;
  for (const auto& f : feats) {
    typename FeatureMapsT<S>::Layer layer;
    layer.channels = f.c;
    layer.side = f.h;
    layer.values = f.v;
    out.layers.push_back(std::move(layer));
  }
  return out;
}

// ---- checkpoint container ----
//
// Layout (little endian):
//   magic "TXCK" | u32 version | u64 config_hash
//   u32 json_len | json bytes   (dims, flags, seeds)
//   u32 n_tensors | per tensor: u32 name_len | name | u32 count | f32 values
namespace detail {

inline void write_u32(std::ofstream& f, std::uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); }
inline void write_u64(std::ofstream& f, std::uint64_t v) { f.write(reinterpret_cast<const char*>(&v), 8); }
inline std::uint32_t read_u32(std::ifstream& f) {
  std::uint32_t v = 0;
  f.read(reinterpret_cast<char*>(&v), 4);
  return v;
}
inline std::uint64_t read_u64(std::ifstream& f) {
  std::uint64_t v = 0;
  f.read(reinterpret_cast<char*>(&v), 8);
  return v;
}

}  // namespace detail

inline nlohmann::json dims_to_json(const ModelDims& d) {
  nlohmann::json j;
  j["latent_dim"] = d.latent_dim;
  j["image_size"] = d.image_size;
  j["channels"] = d.channels;
  j["base_size"] = d.base_size;
  j["gen_base_channels"] = d.gen_base_channels;
  j["gen_channels"] = d.gen_channels;
  j["enc_channels"] = d.enc_channels;
  j["enc_fc"] = d.enc_fc;
  j["disc_channels"] = d.disc_channels;
  j["disc_fc"] = d.disc_fc;
  j["phi_channels"] = d.phi_channels;
  return j;
}

inline ModelDims dims_from_json(const nlohmann::json& j) {
  ModelDims d;
  d.latent_dim = j.at("latent_dim").get<int>();
  d.image_size = j.at("image_size").get<int>();
  d.channels = j.at("channels").get<int>();
  d.base_size = j.at("base_size").get<int>();
  d.gen_base_channels = j.at("gen_base_channels").get<int>();
  d.gen_channels = j.at("gen_channels").get<std::vector<int>>();
  d.enc_channels = j.at("enc_channels").get<std::vector<int>>();
  d.enc_fc = j.at("enc_fc").get<int>();
  d.disc_channels = j.at("disc_channels").get<std::vector<int>>();
  d.disc_fc = j.at("disc_fc").get<int>();
  d.phi_channels = j.at("phi_channels").get<std::vector<int>>();
  return d;
}

inline void save_bundle(ModelBundle& b, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  require(f.good(), ErrorCode::IoError, "cannot write checkpoint " + path);
  f.write("TXCK", 4);
  detail::write_u32(f, 1);
  detail::write_u64(f, b.config_hash);

  nlohmann::json meta;
  meta["dims"] = dims_to_json(b.dims);
  meta["generator_trained"] = b.generator_trained;
  meta["encoder_trained"] = b.encoder_trained;
  meta["mapping_identity"] = b.mapping.identity;
  meta["seeds"] = b.seeds;
  const std::string mjson = meta.dump();
  detail::write_u32(f, static_cast<std::uint32_t>(mjson.size()));
  f.write(mjson.data(), static_cast<std::streamsize>(mjson.size()));

  std::vector<std::pair<std::string, std::vector<float>*>> tensors;
  auto collect = [&tensors](const char* name, std::vector<float>& v) {
    tensors.emplace_back(name, &v);
  };
  b.mapping.visit(collect);
  b.synthesis.visit(collect);
  b.disc.visit(collect);
  b.encoder.visit(collect);
  b.phi.visit(collect);
  std::vector<float> mean_w_copy;
  if (b.mean_w) {
    mean_w_copy = *b.mean_w;
    tensors.emplace_back("mean_w", &mean_w_copy);
  }
  detail::write_u32(f, static_cast<std::uint32_t>(tensors.size()));
  for (auto& [name, vec] : tensors) {
    detail::write_u32(f, static_cast<std::uint32_t>(name.size()));
    f.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::write_u32(f, static_cast<std::uint32_t>(vec->size()));
    f.write(reinterpret_cast<const char*>(vec->data()),
            static_cast<std::streamsize>(vec->size() * sizeof(float)));
  }
  require(f.good(), ErrorCode::IoError, "short write on checkpoint " + path);
}

// expected_hash == 0 skips verification (hash is still available on the bundle).
inline ModelBundle load_bundle(const std::string& path, std::uint64_t expected_hash = 0) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), ErrorCode::MissingArtifact, "checkpoint not found: " + path);
  char magic[4];
  f.read(magic, 4);
  require(f.good() && std::string(magic, 4) == "TXCK", ErrorCode::IoError,
          "bad checkpoint magic in " + path);
  const auto version = detail::read_u32(f);
  require(version == 1, ErrorCode::IoError, "unsupported checkpoint version");
  const auto hash = detail::read_u64(f);
  if (expected_hash != 0)
    require(hash == expected_hash, ErrorCode::ConfigHashMismatch,
            "checkpoint was created under a different model config");

  const auto mlen = detail::read_u32(f);
  std::string mjson(mlen, '\0');
  f.read(mjson.data(), mlen);
  const auto meta = nlohmann::json::parse(mjson);

  ModelBundle b = create_bundle<float>(dims_from_json(meta.at("dims")), 0,
                                       meta.value("mapping_identity", false));
  b.config_hash = hash;
  b.generator_trained = meta.value("generator_trained", false);
  b.encoder_trained = meta.value("encoder_trained", false);
  if (meta.contains("seeds")) b.seeds = meta.at("seeds").get<std::map<std::string, std::uint64_t>>();

  std::map<std::string, std::vector<float>*> by_name;
  auto collect = [&by_name](const char* name, std::vector<float>& v) { by_name[name] = &v; };
  b.mapping.visit(collect);
  b.synthesis.visit(collect);
  b.disc.visit(collect);
  b.encoder.visit(collect);
  b.phi.visit(collect);

  const auto n_tensors = detail::read_u32(f);
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    const auto nlen = detail::read_u32(f);
    std::string name(nlen, '\0');
    f.read(name.data(), nlen);
    const auto count = detail::read_u32(f);
    std::vector<float> vals(count);
    f.read(reinterpret_cast<char*>(vals.data()), static_cast<std::streamsize>(count * sizeof(float)));
    require(f.good(), ErrorCode::IoError, "truncated checkpoint " + path);
    if (name == "mean_w") {
      b.mean_w = std::move(vals);
      continue;
    }
    auto it = by_name.find(name);
    require(it != by_name.end(), ErrorCode::IoError, "unknown tensor in checkpoint: " + name);
    require(it->second->size() == vals.size(), ErrorCode::IoError,
            "tensor size mismatch for " + name);
    *it->second = std::move(vals);
  }
  return b;
}

// Externally supplied feature-extractor weights (tensor names as in visit()).
template <typename S>
void load_phi_weights(ModelBundleT<S>& b, const std::string& path) {
  ModelBundle src = load_bundle(path);
  require(src.dims.phi_channels == b.dims.phi_channels && src.dims.image_size == b.dims.image_size,
          ErrorCode::InvalidParams, "phi weight file has incompatible dims");
  std::vector<std::vector<float>*> src_params;
  src.phi.visit([&src_params](const char*, std::vector<float>& v) { src_params.push_back(&v); });
  std::size_t i = 0;
  b.phi.visit([&](const char*, std::vector<S>& v) {
    const auto& s = *src_params[i++];
    require(s.size() == v.size(), ErrorCode::InvalidParams, "phi tensor size mismatch");
    for (std::size_t j = 0; j < v.size(); ++j) v[j] = static_cast<S>(s[j]);
  });
}

}  // namespace texlab
