#pragma once

#include <optional>
#include <vector>

#include "exstyle/fusion.hpp"
#include "exstyle/layers.hpp"

/// @file decoder.hpp Feature-to-image decoder: three residual blocks ahead of
/// fusion, two behind it, then three nearest-neighbor x2 upsampling stages
/// (512 -> 256 -> 128 -> 64) and a final convolution to RGB.

namespace exstyle {

template <typename Scalar>
class ResidualBlock {
 public:
  ResidualBlock() = default;
  ResidualBlock(const std::string& name, int channels)
      : conv1_(name + ".conv1", channels, channels),
        conv2_(name + ".conv2", channels, channels) {}

  void init(Rng& rng) {
    conv1_.init(rng);
    conv2_.init(rng);
  }

  struct Cache {
    FeatureMap<Scalar> x, r;  // input and inner relu output
  };

  FeatureMap<Scalar> forward(const FeatureMap<Scalar>& x, Cache* cache = nullptr) const {
    FeatureMap<Scalar> r = conv1_.forward(x);
    r.data = relu(r.data);
    FeatureMap<Scalar> y = conv2_.forward(r);
    y.data += x.data;
    if (cache) *cache = {x, std::move(r)};
    return y;
  }

  FeatureMap<Scalar> backward(const Cache& c, const FeatureMap<Scalar>& dy) {
    FeatureMap<Scalar> dr;
    conv2_.backward(c.r, dy, &dr);
    dr.data = relu_backward(c.r.data, dr.data);
    FeatureMap<Scalar> dx;
    conv1_.backward(c.x, dr, &dx);
    dx.data += dy.data;
    return dx;
  }

  void params(ParamRefs<Scalar>& out) {
    conv1_.params(out);
    conv2_.params(out);
  }

 private:
  Conv3x3<Scalar> conv1_, conv2_;
};

/// Post-fusion half of a decoder: residual blocks, upsampling stack, RGB head.
template <typename Scalar>
class DecoderTail {
 public:
  DecoderTail() = default;
  explicit DecoderTail(const std::string& name)
      : res_{ResidualBlock<Scalar>(name + ".post1", kFeatDim),
             ResidualBlock<Scalar>(name + ".post2", kFeatDim)},
        up_{Conv3x3<Scalar>(name + ".up1", 512, 256),
            Conv3x3<Scalar>(name + ".up2", 256, 128),
            Conv3x3<Scalar>(name + ".up3", 128, 64)},
        rgb_(name + ".rgb", 64, 3) {}

  void init(Rng& rng) {
    for (auto& r : res_) r.init(rng);
    for (auto& u : up_) u.init(rng);
    rgb_.init(rng);
    // start the output around mid-gray so the [0,1] clamp passes gradients
    rgb_.bias().value.setConstant(Scalar(0.5));
  }

  struct Cache {
    typename ResidualBlock<Scalar>::Cache res[2];
    FeatureMap<Scalar> up_in[3];   // upsampled grids (conv inputs)
    FeatureMap<Scalar> up_out[3];  // post-activation outputs
  };

  /// Emits the pre-clamp RGB map at 8x the fused grid resolution.
  FeatureMap<Scalar> forward(const FeatureMap<Scalar>& fused,
                             Cache* cache = nullptr) const {
    FeatureMap<Scalar> x = fused;
    for (int i = 0; i < 2; ++i)
      x = res_[i].forward(x, cache ? &cache->res[i] : nullptr);
    for (int i = 0; i < 3; ++i) {
      FeatureMap<Scalar> upsampled = UpsampleNearest2<Scalar>::forward(x);
      if (cache) cache->up_in[i] = upsampled;
      x = up_[i].forward(upsampled);
      x.data = relu(x.data);
      if (cache) cache->up_out[i] = x;
    }
    return rgb_.forward(x);
  }

  /// Gradient w.r.t. the fused map.
  FeatureMap<Scalar> backward(const Cache& c, const FeatureMap<Scalar>& dout) {
    FeatureMap<Scalar> d;
    rgb_.backward(c.up_out[2], dout, &d);
    for (int i = 2; i >= 0; --i) {
      d.data = relu_backward(c.up_out[i].data, d.data);
      FeatureMap<Scalar> dup;
      up_[i].backward(c.up_in[i], d, &dup);
      d = UpsampleNearest2<Scalar>::backward(c.up_in[i].grid_h / 2,
                                             c.up_in[i].grid_w / 2, dup);
    }
    for (int i = 1; i >= 0; --i) d = res_[i].backward(c.res[i], d);
    return d;
  }

  void params(ParamRefs<Scalar>& out) {
    for (auto& r : res_) r.params(out);
    for (auto& u : up_) u.params(out);
    rgb_.params(out);
  }

 private:
  ResidualBlock<Scalar> res_[2];
  Conv3x3<Scalar> up_[3];
  Conv3x3<Scalar> rgb_;
};

/// A full decoder branch. The pre-fusion blocks process the purified content
/// map once; the tail may then be run several times against different fusion
/// results (self and cross), which is how the four pair outputs share work.
template <typename Scalar>
class Decoder {
 public:
  Decoder() = default;
  Decoder(const std::string& name, FusionMode mode)
      : mode_(mode),
        pre_{ResidualBlock<Scalar>(name + ".pre1", kFeatDim),
             ResidualBlock<Scalar>(name + ".pre2", kFeatDim),
             ResidualBlock<Scalar>(name + ".pre3", kFeatDim)},
        tail_(name) {
    if (mode == FusionMode::kConcat)
      variant_head_ = Dense<Scalar>(name + ".concat_proj", 3 * kFeatDim, kFeatDim);
  }

  void init(Rng& rng) {
    for (auto& r : pre_) r.init(rng);
    tail_.init(rng);
    if (mode_ == FusionMode::kConcat) variant_head_->init(rng);
  }

  FusionMode mode() const { return mode_; }

  struct PreCache {
    typename ResidualBlock<Scalar>::Cache res[3];
  };

  FeatureMap<Scalar> pre_fusion(const FeatureMap<Scalar>& f_pur,
                                PreCache* cache = nullptr) const {
    FeatureMap<Scalar> x = f_pur;
    for (int i = 0; i < 3; ++i)
      x = pre_[i].forward(x, cache ? &cache->res[i] : nullptr);
    return x;
  }

  FeatureMap<Scalar> pre_fusion_backward(const PreCache& c,
                                         const FeatureMap<Scalar>& dout) {
    FeatureMap<Scalar> d = dout;
    for (int i = 2; i >= 0; --i) d = pre_[i].backward(c.res[i], d);
    return d;
  }

  struct FuseCache {
    FeatureMap<Scalar> concat_in;  // concat mode only
  };

  /// Applies this decoder's fusion mode and, for the concat mode, the
  /// 1536 -> 512 projection head, yielding the n x 512 map ready for blending.
  FeatureMap<Scalar> fuse_for_mode(const FeatureMap<Scalar>& h,
                                   const FusionVectors<Scalar>& v,
                                   FuseCache* cache = nullptr) const {
    switch (mode_) {
      case FusionMode::kCompressExpand:
        return fuse(h, v.v_c, v.v_r);
      case FusionMode::kAdain:
        return adain_fuse(h, v.v_c, v.v_r);
      case FusionMode::kConcat: {
        FeatureMap<Scalar> wide = concat_fuse(h, v.v_c, v.v_r);
        if (cache) cache->concat_in = wide;
        FeatureMap<Scalar> out(h.grid_h, h.grid_w, kFeatDim);
        out.data.noalias() = wide.data * variant_head_->weight().value;
        out.data.rowwise() += variant_head_->bias().value.col(0).transpose();
        return out;
      }
    }
    throw value_error("unknown fusion mode");
  }

  FuseGrads<Scalar> fuse_for_mode_backward(const FeatureMap<Scalar>& h,
                                           const FusionVectors<Scalar>& v,
                                           const FuseCache& cache,
                                           const FeatureMap<Scalar>& dout) {
    switch (mode_) {
      case FusionMode::kCompressExpand:
        return fuse_backward(h, v.v_c, v.v_r, dout);
      case FusionMode::kAdain:
        return adain_fuse_backward(h, v.v_c, v.v_r, dout);
      case FusionMode::kConcat: {
        variant_head_->weight().grad.noalias() +=
            cache.concat_in.data.transpose() * dout.data;
        variant_head_->bias().grad.col(0) +=
            dout.data.colwise().sum().transpose();
        FeatureMap<Scalar> dwide(h.grid_h, h.grid_w, 3 * kFeatDim);
        dwide.data.noalias() = dout.data * variant_head_->weight().value.transpose();
        return concat_fuse_backward(h, dwide);
      }
    }
    throw value_error("unknown fusion mode");
  }

  DecoderTail<Scalar>& tail() { return tail_; }
  const DecoderTail<Scalar>& tail() const { return tail_; }

  void params(ParamRefs<Scalar>& out) {
    for (auto& r : pre_) r.params(out);
    tail_.params(out);
    if (variant_head_) variant_head_->params(out);
  }

 private:
  FusionMode mode_ = FusionMode::kCompressExpand;
  ResidualBlock<Scalar> pre_[3];
  DecoderTail<Scalar> tail_;
  std::optional<Dense<Scalar>> variant_head_;
};

}  // namespace exstyle
