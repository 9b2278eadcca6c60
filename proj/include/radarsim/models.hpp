#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "radarsim/grid.hpp"
#include "radarsim/nn/adam.hpp"
#include "radarsim/nn/layers.hpp"
#include "radarsim/nn/tensor.hpp"
#include "radarsim/rng.hpp"

namespace radarsim {

// Standard-normal noise channel; concatenated with the conditioning grid so
// generators define sampleable observation distributions.
struct LatentNoise {
  Grid values;
};

inline LatentNoise make_latent(const PolarGridSpec& spec, Rng& rng) {
  LatentNoise n;
  n.values = Grid(spec.num_azimuths, spec.num_range_bins);
  for (float& v : n.values.v) v = static_cast<float>(rng.normal());
  return n;
}

struct GeneratorConfig {
  int residual_blocks = 9;
  int base_channels = 64;
  int downsampling_stages = 2;
  // Fixed by design: batch-style normalization, tanh output head.

  void validate() const {
    if (residual_blocks < 1 || base_channels < 1 || downsampling_stages < 1)
      throw std::invalid_argument("GeneratorConfig: counts must be >= 1");
  }
};

struct DiscriminatorConfig {
  int layers = 3;  // stride-2 stages
  int base_channels = 64;
  bool patch_output = true;

  void validate() const {
    if (layers < 1 || base_channels < 1)
      throw std::invalid_argument("DiscriminatorConfig: counts must be >= 1");
    if (!patch_output) throw std::invalid_argument("DiscriminatorConfig: patch_output is fixed");
  }
};

struct SegmenterConfig {
  int levels = 6;
  int initial_features = 8;
  int classes = 3;  // free, occupied, unknown

  void validate() const {
    if (levels < 1 || initial_features < 1)
      throw std::invalid_argument("SegmenterConfig: counts must be >= 1");
    if (classes != 3) throw std::invalid_argument("SegmenterConfig: classes is fixed at 3");
  }
};

namespace nn {

// Conditional generator: c7s1 stem, stride-2 downsampling stages, residual
// blocks, zero-stuff up-convolutions, c7s1 tanh head. Input is the 2-channel
// (signal, noise) polar tensor; output one channel in (-1, 1).
template <typename T>
class ResNetGenerator {
 public:
  ResNetGenerator() = default;
  explicit ResNetGenerator(const GeneratorConfig& cfg, int in_channels = 2) : cfg_(cfg) {
    cfg.validate();
    const int S = cfg.downsampling_stages;
    stem_ = Conv2d<T>::same(in_channels, cfg.base_channels, 7, 1, "stem");
    stem_bn_ = BatchNorm<T>(cfg.base_channels, "stem");
    int ch = cfg.base_channels;
    for (int s = 0; s < S; ++s) {
      downs_.emplace_back(Conv2d<T>::same(ch, ch * 2, 3, 2, "down" + std::to_string(s)));
      down_bns_.emplace_back(BatchNorm<T>(ch * 2, "down" + std::to_string(s)));
      ch *= 2;
    }
    for (int b = 0; b < cfg.residual_blocks; ++b) {
      const std::string nm = "res" + std::to_string(b);
      blocks_.push_back(Block{Conv2d<T>::same(ch, ch, 3, 1, nm + ".c1"),
                              BatchNorm<T>(ch, nm + ".c1"), ReLU<T>{},
                              Conv2d<T>::same(ch, ch, 3, 1, nm + ".c2"),
                              BatchNorm<T>(ch, nm + ".c2")});
    }
    for (int s = 0; s < S; ++s) {
      ups_.emplace_back(ConvUp2<T>(ch, ch / 2, "up" + std::to_string(s)));
      up_bns_.emplace_back(BatchNorm<T>(ch / 2, "up" + std::to_string(s)));
      ch /= 2;
    }
    head_ = Conv2d<T>::same(ch, 1, 7, 1, "head");
    down_relus_.resize(downs_.size());
    up_relus_.resize(ups_.size());
  }

  void init(Rng& rng) {
    stem_.init(rng);
    stem_bn_.init(rng);
    for (size_t s = 0; s < downs_.size(); ++s) {
      downs_[s].init(rng);
      down_bns_[s].init(rng);
    }
    for (auto& b : blocks_) {
      b.c1.init(rng);
      b.b1.init(rng);
      b.c2.init(rng);
      b.b2.init(rng);
    }
    for (size_t s = 0; s < ups_.size(); ++s) {
      ups_[s].init(rng);
      up_bns_[s].init(rng);
    }
    head_.init(rng);
  }

  Tensor<T> forward(const Tensor<T>& x) {
    const int stride = 1 << cfg_.downsampling_stages;
    if (x.h % stride != 0)
      throw std::invalid_argument("generator: azimuth dim must be divisible by the stride product");
    pad_w_ = (stride - x.w % stride) % stride;
    in_w_ = x.w;
    Tensor<T> h = pad_w_ ? pad_cols(x, pad_w_) : x;
    h = stem_relu_.forward(stem_bn_.forward(stem_.forward(h)));
    for (size_t s = 0; s < downs_.size(); ++s)
      h = down_relus_[s].forward(down_bns_[s].forward(downs_[s].forward(h)));
    for (auto& b : blocks_) {
      Tensor<T> t = b.b2.forward(b.c2.forward(b.r1.forward(b.b1.forward(b.c1.forward(h)))));
      for (size_t k = 0; k < t.v.size(); ++k) t.v[k] += h.v[k];
      h = std::move(t);
    }
    for (size_t s = 0; s < ups_.size(); ++s)
      h = up_relus_[s].forward(up_bns_[s].forward(ups_[s].forward(h)));
    Tensor<T> y = tanh_.forward(head_.forward(h));
    return pad_w_ ? crop_cols(y, in_w_) : y;
  }

  Tensor<T> backward(const Tensor<T>& gy_in, bool need_gx, bool accum = true) {
    Tensor<T> g = pad_w_ ? pad_cols(gy_in, pad_w_) : gy_in;
    g = head_.backward(tanh_.backward(g), true, accum);
    for (size_t s = ups_.size(); s-- > 0;)
      g = ups_[s].backward(up_bns_[s].backward(up_relus_[s].backward(g), true, accum), true,
                           accum);
    for (size_t b = blocks_.size(); b-- > 0;) {
      Block& blk = blocks_[b];
      Tensor<T> gp = blk.c1.backward(
          blk.b1.backward(blk.r1.backward(blk.c2.backward(blk.b2.backward(g, true, accum), true,
                                                          accum)),
                          true, accum),
          true, accum);
      for (size_t k = 0; k < g.v.size(); ++k) g.v[k] += gp.v[k];
    }
    for (size_t s = downs_.size(); s-- > 0;)
      g = downs_[s].backward(down_bns_[s].backward(down_relus_[s].backward(g), true, accum), true,
                             accum);
    const bool last = need_gx;
    g = stem_.backward(stem_bn_.backward(stem_relu_.backward(g), true, accum), last, accum);
    if (!need_gx) return {};
    return pad_w_ ? crop_cols(g, in_w_) : g;
  }

  std::vector<Param<T>*> params() {
    std::vector<Param<T>*> out;
    auto add = [&out](std::vector<Param<T>*> ps) {
      out.insert(out.end(), ps.begin(), ps.end());
    };
    add(stem_.params());
    add(stem_bn_.params());
    for (size_t s = 0; s < downs_.size(); ++s) {
      add(downs_[s].params());
      add(down_bns_[s].params());
    }
    for (auto& b : blocks_) {
      add(b.c1.params());
      add(b.b1.params());
      add(b.c2.params());
      add(b.b2.params());
    }
    for (size_t s = 0; s < ups_.size(); ++s) {
      add(ups_[s].params());
      add(up_bns_[s].params());
    }
    add(head_.params());
    return out;
  }

 private:
  struct Block {
    Conv2d<T> c1;
    BatchNorm<T> b1;
    ReLU<T> r1;
    Conv2d<T> c2;
    BatchNorm<T> b2;
  };

  // Extends columns with zeros; the adjoint of the matching crop.
  static Tensor<T> pad_cols(const Tensor<T>& x, int pw) {
    Tensor<T> y(x.n, x.c, x.h, x.w + pw);
    for (int in = 0; in < x.n; ++in)
      for (int c = 0; c < x.c; ++c)
        for (int r = 0; r < x.h; ++r) {
          const T* src = x.plane(in, c) + static_cast<size_t>(r) * x.w;
          T* dst = y.plane(in, c) + static_cast<size_t>(r) * y.w;
          std::copy(src, src + x.w, dst);
        }
    return y;
  }

  static Tensor<T> crop_cols(const Tensor<T>& x, int w) {
    Tensor<T> y(x.n, x.c, x.h, w);
    for (int in = 0; in < x.n; ++in)
      for (int c = 0; c < x.c; ++c)
        for (int r = 0; r < x.h; ++r) {
          const T* src = x.plane(in, c) + static_cast<size_t>(r) * x.w;
          T* dst = y.plane(in, c) + static_cast<size_t>(r) * w;
          std::copy(src, src + w, dst);
        }
    return y;
  }

  GeneratorConfig cfg_;
  Conv2d<T> stem_, head_;
  BatchNorm<T> stem_bn_;
  ReLU<T> stem_relu_;
  std::vector<Conv2d<T>> downs_;
  std::vector<BatchNorm<T>> down_bns_;
  std::vector<ReLU<T>> down_relus_;
  std::vector<Block> blocks_;
  std::vector<ConvUp2<T>> ups_;
  std::vector<BatchNorm<T>> up_bns_;
  std::vector<ReLU<T>> up_relus_;
  Tanh<T> tanh_;
  int pad_w_ = 0, in_w_ = 0;
};

// PatchGAN discriminator: stride-2 k4 stages (first without normalization),
// one stride-1 stage, then a 1-channel k4 head emitting raw patch scores.
template <typename T>
class PatchDiscriminator {
 public:
  PatchDiscriminator() = default;
  explicit PatchDiscriminator(const DiscriminatorConfig& cfg, int in_channels = 1) : cfg_(cfg) {
    cfg.validate();
    int ch = in_channels;
    int feats = cfg.base_channels;
    for (int l = 0; l < cfg.layers; ++l) {
      convs_.emplace_back(Conv2d<T>::same(ch, feats, 4, 2, "d" + std::to_string(l)));
      if (l > 0) bns_.emplace_back(BatchNorm<T>(feats, "d" + std::to_string(l)));
      ch = feats;
      feats = std::min(feats * 2, cfg.base_channels * 8);
    }
    pre_ = Conv2d<T>::same(ch, feats, 4, 1, "pre");
    pre_bn_ = BatchNorm<T>(feats, "pre");
    head_ = Conv2d<T>::same(feats, 1, 4, 1, "head");
    lrelus_.assign(convs_.size(), LeakyReLU<T>(0.2));
  }

  void init(Rng& rng) {
    for (auto& c : convs_) c.init(rng);
    for (auto& b : bns_) b.init(rng);
    pre_.init(rng);
    pre_bn_.init(rng);
    head_.init(rng);
  }

  Tensor<T> forward(const Tensor<T>& x) {
    Tensor<T> h = x;
    for (size_t l = 0; l < convs_.size(); ++l) {
      h = convs_[l].forward(h);
      if (l > 0) h = bns_[l - 1].forward(h);
      h = lrelus_[l].forward(h);
    }
    h = pre_lrelu_.forward(pre_bn_.forward(pre_.forward(h)));
    return head_.forward(h);
  }

  Tensor<T> backward(const Tensor<T>& gy, bool need_gx, bool accum = true) {
    Tensor<T> g = head_.backward(gy, true, accum);
    g = pre_.backward(pre_bn_.backward(pre_lrelu_.backward(g), true, accum), true, accum);
    for (size_t l = convs_.size(); l-- > 0;) {
      g = lrelus_[l].backward(g);
      if (l > 0) g = bns_[l - 1].backward(g, true, accum);
      g = convs_[l].backward(g, need_gx || l > 0, accum);
    }
    return g;
  }

  std::vector<Param<T>*> params() {
    std::vector<Param<T>*> out;
    auto add = [&out](std::vector<Param<T>*> ps) {
      out.insert(out.end(), ps.begin(), ps.end());
    };
    for (auto& c : convs_) add(c.params());
    for (auto& b : bns_) add(b.params());
    add(pre_.params());
    add(pre_bn_.params());
    add(head_.params());
    return out;
  }

 private:
  DiscriminatorConfig cfg_;
  std::vector<Conv2d<T>> convs_;
  std::vector<BatchNorm<T>> bns_;
  std::vector<LeakyReLU<T>> lrelus_;
  Conv2d<T> pre_, head_;
  BatchNorm<T> pre_bn_;
  LeakyReLU<T> pre_lrelu_{0.2};
};

// U-Net segmenter: per level two 3x3 conv+BN+ReLU stages, features doubling
// downward, 2x2 max pooling, zero-stuff up-convolutions with skip
// concatenation, 1x1 logit head. Azimuth pads circularly, range pads with
// zeros; both crop back after the head.
template <typename T>
class UNetSegmenter {
 public:
  UNetSegmenter() = default;
  explicit UNetSegmenter(const SegmenterConfig& cfg, int in_channels = 1) : cfg_(cfg) {
    cfg.validate();
    int ch = in_channels;
    for (int l = 0; l < cfg.levels; ++l) {
      const int f = cfg.initial_features << l;
      enc_.push_back(DoubleConv(ch, f, "enc" + std::to_string(l)));
      ch = f;
    }
    for (int l = cfg.levels - 2; l >= 0; --l) {
      const int f = cfg.initial_features << l;
      ups_.emplace_back(ConvUp2<T>(f * 2, f, "unet_up" + std::to_string(l)));
      dec_.push_back(DoubleConv(f * 2, f, "dec" + std::to_string(l)));
    }
    head_ = Conv2d<T>(cfg.initial_features, cfg.classes, 1, 1, 1, 1, 0, 0, 0, 0, true, "seg_head");
    pools_.resize(cfg.levels - 1);
  }

  void init(Rng& rng) {
    for (auto& d : enc_) d.init(rng);
    for (auto& u : ups_) u.init(rng);
    for (auto& d : dec_) d.init(rng);
    head_.init(rng);
  }

  Tensor<T> forward(const Tensor<T>& x) {
    const int stride = 1 << (cfg_.levels - 1);
    in_h_ = x.h;
    in_w_ = x.w;
    pad_h_ = (stride - x.h % stride) % stride;
    pad_w_ = (stride - x.w % stride) % stride;
    if ((x.h + pad_h_) / stride < 1)
      throw std::invalid_argument("segmenter: input too small for level count");
    Tensor<T> h = (pad_h_ || pad_w_) ? pad_hw(x, pad_h_, pad_w_) : x;
    skips_.clear();
    for (int l = 0; l < cfg_.levels; ++l) {
      h = enc_[l].forward(h);
      if (l < cfg_.levels - 1) {
        skips_.push_back(h);
        h = pools_[l].forward(h);
      }
    }
    for (size_t k = 0; k < ups_.size(); ++k) {
      Tensor<T> up = ups_[k].forward(h);
      const Tensor<T>& skip = skips_[skips_.size() - 1 - k];
      Tensor<T> cat(up.n, up.c + skip.c, up.h, up.w);
      concat_into(cat, up, skip);
      h = dec_[k].forward(cat);
    }
    Tensor<T> y = head_.forward(h);
    return (pad_h_ || pad_w_) ? crop_hw(y, in_h_, in_w_) : y;
  }

  Tensor<T> backward(const Tensor<T>& gy_in, bool accum = true) {
    Tensor<T> g = (pad_h_ || pad_w_) ? zero_extend(gy_in, pad_h_, pad_w_) : gy_in;
    g = head_.backward(g, true, accum);
    std::vector<Tensor<T>> skip_grads(skips_.size());
    for (size_t k = ups_.size(); k-- > 0;) {
      Tensor<T> gcat = dec_[k].backward(g, true, accum);
      const size_t skip_idx = skips_.size() - 1 - k;
      const int up_c = gcat.c - skips_[skip_idx].c;
      Tensor<T> gup(gcat.n, up_c, gcat.h, gcat.w);
      Tensor<T> gskip(gcat.n, skips_[skip_idx].c, gcat.h, gcat.w);
      split_from(gcat, gup, gskip);
      skip_grads[skip_idx] = std::move(gskip);
      g = ups_[k].backward(gup, true, accum);
    }
    for (int l = cfg_.levels; l-- > 0;) {
      if (l < cfg_.levels - 1) {
        g = pools_[l].backward(g);
        for (size_t k = 0; k < g.v.size(); ++k) g.v[k] += skip_grads[l].v[k];
      }
      g = enc_[l].backward(g, l > 0, accum);
    }
    // Input gradient is rarely needed; fold padding when it is.
    if (g.numel() == 0) return g;
    return (pad_h_ || pad_w_) ? fold_pad(g, in_h_, in_w_) : g;
  }

  std::vector<Param<T>*> params() {
    std::vector<Param<T>*> out;
    auto add = [&out](std::vector<Param<T>*> ps) {
      out.insert(out.end(), ps.begin(), ps.end());
    };
    for (auto& d : enc_) add(d.params());
    for (auto& u : ups_) add(u.params());
    for (auto& d : dec_) add(d.params());
    add(head_.params());
    return out;
  }

 private:
  struct DoubleConv {
    Conv2d<T> c1, c2;
    BatchNorm<T> b1, b2;
    ReLU<T> r1, r2;

    DoubleConv(int in_c, int out_c, const std::string& nm)
        : c1(Conv2d<T>::same(in_c, out_c, 3, 1, nm + ".c1")),
          c2(Conv2d<T>::same(out_c, out_c, 3, 1, nm + ".c2")),
          b1(out_c, nm + ".c1"),
          b2(out_c, nm + ".c2") {}

    void init(Rng& rng) {
      c1.init(rng);
      b1.init(rng);
      c2.init(rng);
      b2.init(rng);
    }
    Tensor<T> forward(const Tensor<T>& x) {
      return r2.forward(b2.forward(c2.forward(r1.forward(b1.forward(c1.forward(x))))));
    }
    Tensor<T> backward(const Tensor<T>& gy, bool need_gx, bool accum) {
      Tensor<T> g = c2.backward(b2.backward(r2.backward(gy), true, accum), true, accum);
      return c1.backward(b1.backward(r1.backward(g), true, accum), need_gx, accum);
    }
    std::vector<Param<T>*> params() {
      std::vector<Param<T>*> out = c1.params();
      for (auto* p : b1.params()) out.push_back(p);
      for (auto* p : c2.params()) out.push_back(p);
      for (auto* p : b2.params()) out.push_back(p);
      return out;
    }
  };

  // Rows wrap circularly (azimuth), columns extend with zeros (range).
  static Tensor<T> pad_hw(const Tensor<T>& x, int ph, int pw) {
    Tensor<T> y(x.n, x.c, x.h + ph, x.w + pw);
    for (int in = 0; in < x.n; ++in)
      for (int c = 0; c < x.c; ++c)
        for (int r = 0; r < y.h; ++r) {
          const T* src = x.plane(in, c) + static_cast<size_t>(r % x.h) * x.w;
          T* dst = y.plane(in, c) + static_cast<size_t>(r) * y.w;
          std::copy(src, src + x.w, dst);
        }
    return y;
  }

  static Tensor<T> crop_hw(const Tensor<T>& x, int h, int w) {
    Tensor<T> y(x.n, x.c, h, w);
    for (int in = 0; in < x.n; ++in)
      for (int c = 0; c < x.c; ++c)
        for (int r = 0; r < h; ++r)
          std::copy(x.plane(in, c) + static_cast<size_t>(r) * x.w,
                    x.plane(in, c) + static_cast<size_t>(r) * x.w + w,
                    y.plane(in, c) + static_cast<size_t>(r) * w);
    return y;
  }

  static Tensor<T> zero_extend(const Tensor<T>& g, int ph, int pw) {
    Tensor<T> y(g.n, g.c, g.h + ph, g.w + pw);
    for (int in = 0; in < g.n; ++in)
      for (int c = 0; c < g.c; ++c)
        for (int r = 0; r < g.h; ++r)
          std::copy(g.plane(in, c) + static_cast<size_t>(r) * g.w,
                    g.plane(in, c) + static_cast<size_t>(r) * g.w + g.w,
                    y.plane(in, c) + static_cast<size_t>(r) * y.w);
    return y;
  }

  static Tensor<T> fold_pad(const Tensor<T>& g, int h, int w) {
    Tensor<T> y(g.n, g.c, h, w);
    for (int in = 0; in < g.n; ++in)
      for (int c = 0; c < g.c; ++c)
        for (int r = 0; r < g.h; ++r) {
          const T* src = g.plane(in, c) + static_cast<size_t>(r) * g.w;
          T* dst = y.plane(in, c) + static_cast<size_t>(r % h) * w;
          for (int x = 0; x < w; ++x) dst[x] += src[x];
        }
    return y;
  }

  static void concat_into(Tensor<T>& cat, const Tensor<T>& a, const Tensor<T>& b) {
    for (int in = 0; in < cat.n; ++in) {
      for (int c = 0; c < a.c; ++c)
        std::copy(a.plane(in, c), a.plane(in, c) + static_cast<size_t>(a.h) * a.w,
                  cat.plane(in, c));
      for (int c = 0; c < b.c; ++c)
        std::copy(b.plane(in, c), b.plane(in, c) + static_cast<size_t>(b.h) * b.w,
                  cat.plane(in, a.c + c));
    }
  }

  static void split_from(const Tensor<T>& gcat, Tensor<T>& ga, Tensor<T>& gb) {
    for (int in = 0; in < gcat.n; ++in) {
      for (int c = 0; c < ga.c; ++c)
        std::copy(gcat.plane(in, c), gcat.plane(in, c) + static_cast<size_t>(gcat.h) * gcat.w,
                  ga.plane(in, c));
      for (int c = 0; c < gb.c; ++c)
        std::copy(gcat.plane(in, ga.c + c),
                  gcat.plane(in, ga.c + c) + static_cast<size_t>(gcat.h) * gcat.w,
                  gb.plane(in, c));
    }
  }

  SegmenterConfig cfg_;
  std::vector<DoubleConv> enc_, dec_;
  std::vector<ConvUp2<T>> ups_;
  std::vector<MaxPool2<T>> pools_;
  Conv2d<T> head_;
  std::vector<Tensor<T>> skips_;
  int pad_h_ = 0, pad_w_ = 0, in_h_ = 0, in_w_ = 0;
};

}  // namespace nn

template <typename T>
inline size_t param_count(const std::vector<nn::Param<T>*>& ps) {
  size_t n = 0;
  for (const auto* p : ps) n += p->val.numel();
  return n;
}

// All five networks with their optimizer state. Parameter groups are
// physically disjoint (each network owns its tensors).
struct ModelParameters {
  GeneratorConfig gen_cfg;
  DiscriminatorConfig disc_cfg;
  SegmenterConfig seg_cfg;

  nn::ResNetGenerator<float> gx;   // theta_x: elevation -> radar
  nn::ResNetGenerator<float> gw;   // theta_w: radar -> elevation
  nn::PatchDiscriminator<float> dx;  // beta_x
  nn::PatchDiscriminator<float> dw;  // beta_w
  nn::UNetSegmenter<float> seg;      // alpha

  nn::AdamGroup adam_theta_x, adam_theta_w, adam_beta_x, adam_beta_w, adam_alpha;
  uint64_t step = 0;

  std::vector<nn::Param<float>*> theta_x() { return gx.params(); }
  std::vector<nn::Param<float>*> theta_w() { return gw.params(); }
  std::vector<nn::Param<float>*> beta_x() { return dx.params(); }
  std::vector<nn::Param<float>*> beta_w() { return dw.params(); }
  std::vector<nn::Param<float>*> alpha() { return seg.params(); }
};

inline ModelParameters init_parameters(const GeneratorConfig& gen, const DiscriminatorConfig& disc,
                                       const SegmenterConfig& seg, uint64_t seed) {
  nn::pin_blas_single_thread();
  ModelParameters m;
  m.gen_cfg = gen;
  m.disc_cfg = disc;
  m.seg_cfg = seg;
  m.gx = nn::ResNetGenerator<float>(gen);
  m.gw = nn::ResNetGenerator<float>(gen);
  m.dx = nn::PatchDiscriminator<float>(disc);
  m.dw = nn::PatchDiscriminator<float>(disc);
  m.seg = nn::UNetSegmenter<float>(seg);
  Rng r1 = Rng::stream(seed, "init-gx");
  Rng r2 = Rng::stream(seed, "init-gw");
  Rng r3 = Rng::stream(seed, "init-dx");
  Rng r4 = Rng::stream(seed, "init-dw");
  Rng r5 = Rng::stream(seed, "init-seg");
  m.gx.init(r1);
  m.gw.init(r2);
  m.dx.init(r3);
  m.dw.init(r4);
  m.seg.init(r5);
  m.step = 0;
  return m;
}

namespace detail {
inline nn::Tensor<float> stack2(const Grid& a, const Grid& b) {
  nn::Tensor<float> t(1, 2, a.rows, a.cols);
  std::copy(a.v.begin(), a.v.end(), t.plane(0, 0));
  std::copy(b.v.begin(), b.v.end(), t.plane(0, 1));
  return t;
}
inline Grid unstack1(const nn::Tensor<float>& t) {
  Grid g(t.h, t.w);
  std::copy(t.plane(0, 0), t.plane(0, 0) + g.size(), g.v.begin());
  return g;
}
}  // namespace detail

// x = g_theta_x(w, eps): stochastic forward observation model.
inline RadarFrame forward_generator(const ElevationMap& w, const LatentNoise& eps,
                                    nn::ResNetGenerator<float>& gx) {
  w.validate();
  if (eps.values.rows != w.heights.rows || eps.values.cols != w.heights.cols)
    throw std::invalid_argument("forward_generator: noise shape mismatch");
  RadarFrame out;
  out.grid = w.grid;
  out.power = detail::unstack1(gx.forward(detail::stack2(w.heights, eps.values)));
  return out;
}

// w = g_theta_w(x, kappa): stochastic backward elevation model.
inline ElevationMap backward_generator(const RadarFrame& x, const LatentNoise& kappa,
                                       nn::ResNetGenerator<float>& gw) {
  x.validate();
  if (kappa.values.rows != x.power.rows || kappa.values.cols != x.power.cols)
    throw std::invalid_argument("backward_generator: noise shape mismatch");
  ElevationMap out;
  out.grid = x.grid;
  out.heights = detail::unstack1(gw.forward(detail::stack2(x.power, kappa.values)));
  return out;
}

// Raw patch scores for a single-channel polar grid.
inline Grid discriminate(const Grid& t, nn::PatchDiscriminator<float>& d) {
  nn::Tensor<float> in(1, 1, t.rows, t.cols);
  std::copy(t.v.begin(), t.v.end(), in.plane(0, 0));
  nn::Tensor<float> s = d.forward(in);
  Grid out(s.h, s.w);
  std::copy(s.plane(0, 0), s.plane(0, 0) + out.size(), out.v.begin());
  return out;
}

// Per-cell 3-class logits for a radar frame.
inline nn::Tensor<float> segment(const RadarFrame& x, nn::UNetSegmenter<float>& seg) {
  x.validate();
  nn::Tensor<float> in(1, 1, x.power.rows, x.power.cols);
  std::copy(x.power.v.begin(), x.power.v.end(), in.plane(0, 0));
  return seg.forward(in);
}

// How evaluation draws the backward model's noise.
enum class KappaPolicy { pinned_single, average, zero_noise };

// Spatial dims of a patch discriminator's score grid; the stride-2 stages
// shrink each dim as floor((d-1)/2)+1 (exactly d/2^layers for divisible dims).
inline std::pair<int, int> discriminator_score_dims(const DiscriminatorConfig& cfg, int h, int w) {
  auto shrink = [](int d, int k, int s) { return (d + 3 - k) / s + 1; };
  for (int l = 0; l < cfg.layers; ++l) {
    h = shrink(h, 4, 2);
    w = shrink(w, 4, 2);
  }
  // stride-1 stages preserve dims under (1,2) padding
  return {h, w};
}

// Static shape validation: throws when a config cannot process the grid.
inline void validate_config_shapes(const PolarGridSpec& grid, const GeneratorConfig& gen,
                                   const DiscriminatorConfig& disc, const SegmenterConfig& seg) {
  gen.validate();
  disc.validate();
  seg.validate();
  const int h = grid.num_azimuths, w = grid.num_range_bins;
  const int gstride = 1 << gen.downsampling_stages;
  if (h % gstride != 0)
    throw std::invalid_argument("shape check: azimuth count not divisible by generator stride");
  const int sstride = 1 << (seg.levels - 1);
  const int ph = (h + sstride - 1) / sstride * sstride;
  const int pw = (w + sstride - 1) / sstride * sstride;
  if (ph / sstride < 1 || pw / sstride < 1)
    throw std::invalid_argument("shape check: grid too small for segmenter levels");
  auto [dh, dw] = discriminator_score_dims(disc, h, w);
  if (dh < 1 || dw < 1)
    throw std::invalid_argument("shape check: grid too small for discriminator");
}

}  // namespace radarsim
