#pragma once

#include "exstyle/layers.hpp"

/// @file stylecodec.hpp Compression of the 512x512 covariance into a 256-D
/// style code, plus the initializers for the (common, unique, unique) triple
/// fed to the exchange chain.

namespace exstyle {

/// Four stride-2 rectified convolutions over the covariance treated as a
/// 1-channel grid, global average pooling, then a fully connected layer.
/// One instance serves both the content and style branches.
template <typename Scalar>
class CovCompressor {
 public:
  CovCompressor()
      : conv_{Conv3x3<Scalar>("codec.conv1", 1, 32, 2),
              Conv3x3<Scalar>("codec.conv2", 32, 64, 2),
              Conv3x3<Scalar>("codec.conv3", 64, 128, 2),
              Conv3x3<Scalar>("codec.conv4", 128, 256, 2)},
        fc_("codec.fc", kCodeDim, kCodeDim) {}

  void init(Rng& rng) {
    for (auto& c : conv_) c.init(rng);
    fc_.init(rng);
  }

  struct Cache {
    FeatureMap<Scalar> input;   // covariance as a grid
    FeatureMap<Scalar> act[4];  // post-activation conv outputs
    Vec<Scalar> pooled;
  };

  Vec<Scalar> forward(const Mat<Scalar>& cov, Cache* cache = nullptr) const {
    check_dim(cov.rows() == kFeatDim && cov.cols() == kFeatDim,
              "style compressor expects a 512x512 covariance");
    FeatureMap<Scalar> x(kFeatDim, kFeatDim, 1);
    // column-major covariance flattened in pixel-major grid order
    x.data.col(0) = Eigen::Map<const Vec<Scalar>>(cov.data(), cov.size());
    if (cache) cache->input = x;
    for (int i = 0; i < 4; ++i) {
      FeatureMap<Scalar> y = conv_[i].forward(x);
      y.data = relu(y.data);
      if (cache) cache->act[i] = y;
      x = std::move(y);
    }
    Vec<Scalar> pooled = global_avg_pool(x);
    if (cache) cache->pooled = pooled;
    return fc_.forward(pooled);
  }

  /// Returns the gradient w.r.t. the covariance entries.
  Mat<Scalar> backward(const Cache& cache, const Vec<Scalar>& dcode,
                       bool want_input_grad = false) {
    Vec<Scalar> dpool = fc_.backward(cache.pooled, dcode);
    FeatureMap<Scalar> d = global_avg_pool_backward(cache.act[3].grid_h,
                                                    cache.act[3].grid_w, dpool);
    for (int i = 3; i >= 0; --i) {
      d.data = relu_backward(cache.act[i].data, d.data);
      const FeatureMap<Scalar>& in = i == 0 ? cache.input : cache.act[i - 1];
      FeatureMap<Scalar> din;
      const bool need_din = i > 0 || want_input_grad;
      conv_[i].backward(in, d, need_din ? &din : nullptr);
      d = std::move(din);
    }
    if (!want_input_grad) return {};
    return Eigen::Map<const Mat<Scalar>>(d.data.col(0).data(), kFeatDim, kFeatDim);
  }

  void params(ParamRefs<Scalar>& out) {
    for (auto& c : conv_) c.params(out);
    fc_.params(out);
  }

 private:
  Conv3x3<Scalar> conv_[4];
  Dense<Scalar> fc_;
};

/// Two fully connected layers with a rectifier between them; each branch
/// (content / style) owns an independent instance.
template <typename Scalar>
class UniqueInit {
 public:
  UniqueInit() = default;
  explicit UniqueInit(const std::string& name)
      : fc1_(name + ".fc1", kCodeDim, kCodeDim), fc2_(name + ".fc2", kCodeDim, kCodeDim) {}

  void init(Rng& rng) {
    fc1_.init(rng);
    fc2_.init(rng);
  }

  struct Cache {
    Vec<Scalar> input, hidden;
  };

  Vec<Scalar> forward(const Vec<Scalar>& code, Cache* cache = nullptr) const {
    Vec<Scalar> h = relu(fc1_.forward(code));
    if (cache) {
      cache->input = code;
      cache->hidden = h;
    }
    return fc2_.forward(h);
  }

  Vec<Scalar> backward(const Cache& cache, const Vec<Scalar>& dout) {
    Vec<Scalar> dh = fc2_.backward(cache.hidden, dout);
    dh = relu_backward(cache.hidden, dh);
    return fc1_.backward(cache.input, dh);
  }

  void params(ParamRefs<Scalar>& out) {
    fc1_.params(out);
    fc2_.params(out);
  }

 private:
  Dense<Scalar> fc1_, fc2_;
};

/// Rectified affine map of the concatenated pair of codes.
template <typename Scalar>
class CommonInit {
 public:
  CommonInit() : fc_("init_common.fc", 2 * kCodeDim, kCodeDim) {}

  void init(Rng& rng) { fc_.init(rng); }

  struct Cache {
    Vec<Scalar> input, out;
  };

  Vec<Scalar> forward(const Vec<Scalar>& code_c, const Vec<Scalar>& code_s,
                      Cache* cache = nullptr) const {
    Vec<Scalar> x(2 * kCodeDim);
    x << code_c, code_s;
    Vec<Scalar> out = relu(fc_.forward(x));
    if (cache) {
      cache->input = x;
      cache->out = out;
    }
    return out;
  }

  /// Returns gradients for (code_c, code_s).
  std::pair<Vec<Scalar>, Vec<Scalar>> backward(const Cache& cache,
                                               const Vec<Scalar>& dout) {
    Vec<Scalar> d = relu_backward(cache.out, dout);
    Vec<Scalar> dx = fc_.backward(cache.input, d);
    return {dx.head(kCodeDim), dx.tail(kCodeDim)};
  }

  void params(ParamRefs<Scalar>& out) { fc_.params(out); }

 private:
  Dense<Scalar> fc_;
};

}  // namespace exstyle
