#pragma once

#include <array>
#include <vector>

#include "exstyle/layers.hpp"

/// @file encoder.hpp Fixed 19-layer-style convolutional encoder, cut after the
/// first convolution of the fourth scale. Taps are taken post-activation at
/// the first convolution of each scale; weights are frozen at load time and
/// never touched by the optimizer.

namespace exstyle {

template <typename Scalar>
class Encoder {
 public:
  /// Channel plan is {w, 2w, 4w, 8w} per scale; the production width is 64
  /// (512 channels at the deepest tap). Smaller widths exist for tests.
  explicit Encoder(int base_width = 64)
      : base_width_(base_width),
        means_{Scalar(0.485), Scalar(0.456), Scalar(0.406)} {
    const int w = base_width;
    conv_ = {Conv3x3<Scalar>("enc.conv1_1", 3, w),
             Conv3x3<Scalar>("enc.conv1_2", w, w),
             Conv3x3<Scalar>("enc.conv2_1", w, 2 * w),
             Conv3x3<Scalar>("enc.conv2_2", 2 * w, 2 * w),
             Conv3x3<Scalar>("enc.conv3_1", 2 * w, 4 * w),
             Conv3x3<Scalar>("enc.conv3_2", 4 * w, 4 * w),
             Conv3x3<Scalar>("enc.conv3_3", 4 * w, 4 * w),
             Conv3x3<Scalar>("enc.conv3_4", 4 * w, 4 * w),
             Conv3x3<Scalar>("enc.conv4_1", 4 * w, 8 * w)};
  }

  void init(Rng& rng) {
    for (auto& c : conv_) c.init(rng);
  }

  int base_width() const { return base_width_; }
  int deepest_channels() const { return 8 * base_width_; }
  const std::array<Scalar, 3>& channel_means() const { return means_; }

  /// Activations kept for the input-gradient pass (one per convolution,
  /// post-activation).
  struct Cache {
    int img_h = 0, img_w = 0;
    std::vector<FeatureMap<Scalar>> act;
  };

  /// All four taps, shallow to deep. Channel counts (w, 2w, 4w, 8w).
  std::array<FeatureMap<Scalar>, 4> forward_multi(const ImageTensor<Scalar>& img,
                                                  Cache* cache = nullptr) const {
    check_dim(std::min(img.height, img.width) >= 32,
              "image too small for the encoder (min dimension 32)");
    FeatureMap<Scalar> x(img.height, img.width, 3);
    x.data = img.data;
    for (int c = 0; c < 3; ++c) x.data.col(c).array() -= means_[c];

    if (cache) {
      cache->img_h = img.height;
      cache->img_w = img.width;
      cache->act.assign(kNumConv, {});
    }
    std::array<FeatureMap<Scalar>, 4> taps;
    for (int i = 0; i < kNumConv; ++i) {
      FeatureMap<Scalar> y = conv_[i].forward(x);
      y.data = relu(y.data);
      if (cache) cache->act[i] = y;
      for (int t = 0; t < 4; ++t)
        if (kTapConv[t] == i) taps[t] = y;
      if (is_pooled_after(i)) {
        x = MaxPool2<Scalar>::forward(y);
      } else {
        x = std::move(y);
      }
    }
    return taps;
  }

  /// Deepest tap only (8w channels, grid downscaled by the total stride).
  FeatureMap<Scalar> encode(const ImageTensor<Scalar>& img) const {
    return forward_multi(img)[3];
  }

  /// Propagates per-tap gradients back to the image. Weight gradients are
  /// never formed here; the encoder is frozen.
  Mat<Scalar> backward_to_input(const Cache& cache,
                                const std::array<FeatureMap<Scalar>, 4>& tap_grads) const {
    FeatureMap<Scalar> d;  // gradient w.r.t. current layer output
    for (int i = kNumConv - 1; i >= 0; --i) {
      const FeatureMap<Scalar>& out = cache.act[i];
      if (i == kNumConv - 1) {
        d = tap_grads[3];
      } else if (is_pooled_after(i)) {
        d = MaxPool2<Scalar>::backward(out, d);
      }
      for (int t = 0; t < 3; ++t)
        if (kTapConv[t] == i) d.data += tap_grads[t].data;
      d.data = relu_backward(out.data, d.data);
      const int in_h = out.grid_h, in_w = out.grid_w;  // stride-1 convs
      d = conv_[i].backward_data(d, in_h, in_w);
    }
    return d.data;  // mean subtraction has unit Jacobian
  }

  void params(ParamRefs<Scalar>& out) {
    for (auto& c : conv_) c.params(out);
  }

  std::uint64_t checksum() {
    ParamRefs<Scalar> p;
    params(p);
    return checksum_params(p);
  }

 private:
  static constexpr int kNumConv = 9;
  static constexpr std::array<int, 4> kTapConv{0, 2, 4, 8};
  static bool is_pooled_after(int conv_idx) {
    return conv_idx == 1 || conv_idx == 3 || conv_idx == 7;
  }

  int base_width_;
  std::array<Scalar, 3> means_;
  std::vector<Conv3x3<Scalar>> conv_;
};

// ---------------------------------------------------------------------------
// Second-order style statistics
// ---------------------------------------------------------------------------

/// Gram matrix G = F^T F / (n_pixels * n_channels); exactly symmetric.
template <typename Scalar>
Mat<Scalar> gram(const FeatureMap<Scalar>& f) {
  const Index n = f.n_pixels(), c = f.n_channels();
  check_arg(n >= 1, "gram needs at least one pixel");
  Mat<Scalar> g = Mat<Scalar>::Zero(c, c);
  g.template selfadjointView<Eigen::Lower>().rankUpdate(f.data.transpose(),
                                                        Scalar(1) / Scalar(n * c));
  g.template triangularView<Eigen::StrictlyUpper>() =
      g.transpose().template triangularView<Eigen::StrictlyUpper>();
  return g;
}

/// dL/dF for G = F^T F / (n c): F (dG + dG^T) / (n c).
template <typename Scalar>
Mat<Scalar> gram_backward(const FeatureMap<Scalar>& f, const Mat<Scalar>& dg) {
  const Scalar q = Scalar(1) / Scalar(f.n_pixels() * f.n_channels());
  return f.data * ((dg + dg.transpose()) * q);
}

/// Mean-subtracted channel covariance Cov = (F-mu)^T (F-mu) / n_pixels.
template <typename Scalar>
Mat<Scalar> covariance(const FeatureMap<Scalar>& f) {
  const Index n = f.n_pixels(), c = f.n_channels();
  if (n < 2) throw value_error("covariance needs at least 2 pixels (degenerate input)");
  Mat<Scalar> centered = f.data.rowwise() - f.data.colwise().mean();
  Mat<Scalar> cov = Mat<Scalar>::Zero(c, c);
  cov.template selfadjointView<Eigen::Lower>().rankUpdate(centered.transpose(),
                                                          Scalar(1) / Scalar(n));
  cov.template triangularView<Eigen::StrictlyUpper>() =
      cov.transpose().template triangularView<Eigen::StrictlyUpper>();
  return cov;
}

/// Covariance restricted to a pixel subset (region-masked style statistics).
template <typename Scalar>
Mat<Scalar> covariance_masked(const FeatureMap<Scalar>& f,
                              const std::vector<Index>& pixels) {
  if (pixels.size() < 2)
    throw mask_error("masked covariance needs at least 2 pixels in the region");
  FeatureMap<Scalar> sub(int(pixels.size()), 1, f.n_channels());
  for (std::size_t i = 0; i < pixels.size(); ++i)
    sub.data.row(Index(i)) = f.data.row(pixels[i]);
  return covariance(sub);
}

}  // namespace exstyle
