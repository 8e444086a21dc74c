#pragma once

#include <algorithm>
#include <cstring>

#include "exstyle/common.hpp"
#include "exstyle/rng.hpp"

/// @file layers.hpp Building-block layers with explicit forward/backward
/// passes. Convolutions run as tiled im2col + GEMM so peak memory stays
/// bounded at any resolution; backward recomputes the patch tiles instead
/// of caching them.

namespace exstyle {

inline int reflect_index(int i, int n) {
  // mirror without repeating the border pixel (n == 1 maps everything to 0)
  if (n == 1) return 0;
  if (i < 0) return -i;
  if (i >= n) return 2 * n - 2 - i;
  return i;
}

inline int conv_out_extent(int in, int stride) {
  // kernel 3, padding 1
  return (in + 2 - 3) / stride + 1;
}

// ---------------------------------------------------------------------------
// 3x3 convolution, reflection padding, stride 1 or 2
// ---------------------------------------------------------------------------

template <typename Scalar>
class Conv3x3 {
 public:
  Conv3x3() = default;
  Conv3x3(std::string name, int in_ch, int out_ch, int stride = 1)
      : in_ch_(in_ch), out_ch_(out_ch), stride_(stride) {
    weight_.name = name + ".w";
    bias_.name = name + ".b";
    weight_.resize(Index(9) * in_ch, out_ch);
    bias_.resize(out_ch, 1);
  }

  void init(Rng& rng) { he_init(weight_, Index(9) * in_ch_, rng); }

  FeatureMap<Scalar> forward(const FeatureMap<Scalar>& in) const {
    check_dim(in.n_channels() == in_ch_, "conv input channel mismatch");
    const int oh = conv_out_extent(in.grid_h, stride_);
    const int ow = conv_out_extent(in.grid_w, stride_);
    FeatureMap<Scalar> out(oh, ow, out_ch_);
    Mat<Scalar> patches;
    const Index n = Index(oh) * ow;
    for (Index r0 = 0; r0 < n; r0 += tile_rows(ow)) {
      const Index rows = std::min(tile_rows(ow), n - r0);
      im2col(in, oh, ow, r0, rows, patches);
      out.data.middleRows(r0, rows).noalias() = patches * weight_.value;
    }
    out.data.rowwise() += bias_.value.col(0).transpose();
    return out;
  }

  /// Accumulates weight gradients; writes the input gradient when din != nullptr.
  void backward(const FeatureMap<Scalar>& in, const FeatureMap<Scalar>& dout,
                FeatureMap<Scalar>* din, bool want_wgrad = true) {
    const int oh = dout.grid_h, ow = dout.grid_w;
    if (din) *din = FeatureMap<Scalar>::zeros(in.grid_h, in.grid_w, in_ch_);
    Mat<Scalar> patches, dpatches;
    const Index n = Index(oh) * ow;
    for (Index r0 = 0; r0 < n; r0 += tile_rows(ow)) {
      const Index rows = std::min(tile_rows(ow), n - r0);
      if (want_wgrad) {
        im2col(in, oh, ow, r0, rows, patches);
        weight_.grad.noalias() +=
            patches.transpose() * dout.data.middleRows(r0, rows);
      }
      if (din) {
        dpatches.noalias() = dout.data.middleRows(r0, rows) * weight_.value.transpose();
        col2im(*din, oh, ow, r0, rows, dpatches);
      }
    }
    if (want_wgrad) bias_.grad.col(0) += dout.data.colwise().sum().transpose();
  }

  /// Input gradient only, for frozen layers. Does not touch weight grads.
  FeatureMap<Scalar> backward_data(const FeatureMap<Scalar>& dout, int in_h,
                                   int in_w) const {
    FeatureMap<Scalar> din = FeatureMap<Scalar>::zeros(in_h, in_w, in_ch_);
    const int oh = dout.grid_h, ow = dout.grid_w;
    Mat<Scalar> dpatches;
    const Index n = Index(oh) * ow;
    for (Index r0 = 0; r0 < n; r0 += tile_rows(ow)) {
      const Index rows = std::min(tile_rows(ow), n - r0);
      dpatches.noalias() = dout.data.middleRows(r0, rows) * weight_.value.transpose();
      col2im(din, oh, ow, r0, rows, dpatches);
    }
    return din;
  }

  void params(ParamRefs<Scalar>& out) {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }

  Parameter<Scalar>& weight() { return weight_; }
  Parameter<Scalar>& bias() { return bias_; }
  const Parameter<Scalar>& weight() const { return weight_; }
  int stride() const { return stride_; }
  int in_channels() const { return in_ch_; }
  int out_channels() const { return out_ch_; }

 private:
  Index tile_rows(int ow) const {
    // keep a patches tile around 32 MB, in whole output rows
    const Index budget = Index(32) * 1024 * 1024 / (sizeof(Scalar) * 9 * in_ch_);
    const Index rows = std::max<Index>(budget / ow, 1) * ow;
    return rows;
  }

  void im2col(const FeatureMap<Scalar>& in, int oh, int ow, Index r0,
              Index rows, Mat<Scalar>& patches) const {
    patches.resize(rows, Index(9) * in_ch_);
    const int h = in.grid_h, w = in.grid_w;
#pragma omp parallel for schedule(static)
    for (int c = 0; c < in_ch_; ++c) {
      const Scalar* src = in.data.col(c).data();
      for (int k = 0; k < 9; ++k) {
        const int dy = k / 3 - 1, dx = k % 3 - 1;
        Scalar* dst = patches.col(Index(c) * 9 + k).data();
        for (Index r = 0; r < rows;) {
          const Index p = r0 + r;
          const int oy = int(p / ow), ox0 = int(p % ow);
          const int py = reflect_index(oy * stride_ + dy, h);
          const Scalar* srow = src + Index(py) * w;
          const Index count = std::min<Index>(ow - ox0, rows - r);
          if (stride_ == 1) {
            // interior of the row is a straight copy; ends reflect
            Index i = 0;
            for (; i < count; ++i) {
              const int px = ox0 + Index(i) + dx;
              if (px >= 0 && px < w) break;
              dst[r + i] = srow[reflect_index(px, w)];
            }
            Index j = count;
            for (; j > i; --j) {
              const int px = ox0 + int(j) - 1 + dx;
              if (px < w) break;
              dst[r + j - 1] = srow[reflect_index(px, w)];
            }
            if (j > i)
              std::memcpy(dst + r + i, srow + ox0 + i + dx,
                          sizeof(Scalar) * std::size_t(j - i));
          } else {
            for (Index i = 0; i < count; ++i) {
              const int px = reflect_index((ox0 + int(i)) * stride_ + dx, w);
              dst[r + i] = srow[px];
            }
          }
          r += count;
        }
      }
    }
  }

  void col2im(FeatureMap<Scalar>& din, int oh, int ow, Index r0, Index rows,
              const Mat<Scalar>& dpatches) const {
    const int h = din.grid_h, w = din.grid_w;
#pragma omp parallel for schedule(static)
    for (int c = 0; c < in_ch_; ++c) {
      Scalar* dst = din.data.col(c).data();
      for (int k = 0; k < 9; ++k) {
        const int dy = k / 3 - 1, dx = k % 3 - 1;
        const Scalar* src = dpatches.col(Index(c) * 9 + k).data();
        for (Index r = 0; r < rows; ++r) {
          const Index p = r0 + r;
          const int oy = int(p / ow), ox = int(p % ow);
          const int py = reflect_index(oy * stride_ + dy, h);
          const int px = reflect_index(ox * stride_ + dx, w);
          dst[Index(py) * w + px] += src[r];
        }
      }
    }
  }

  int in_ch_ = 0, out_ch_ = 0, stride_ = 1;
  Parameter<Scalar> weight_;
  Parameter<Scalar> bias_;
};

// ---------------------------------------------------------------------------
// 2x2 max pooling, stride 2
// ---------------------------------------------------------------------------

template <typename Scalar>
struct MaxPool2 {
  static FeatureMap<Scalar> forward(const FeatureMap<Scalar>& in) {
    const int oh = in.grid_h / 2, ow = in.grid_w / 2;
    const Index c = in.n_channels();
    FeatureMap<Scalar> out(oh, ow, c);
#pragma omp parallel for schedule(static)
    for (Index ch = 0; ch < c; ++ch) {
      const Scalar* src = in.data.col(ch).data();
      Scalar* dst = out.data.col(ch).data();
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          const Index base = Index(2 * oy) * in.grid_w + 2 * ox;
          const Scalar m0 = std::max(src[base], src[base + 1]);
          const Scalar m1 =
              std::max(src[base + in.grid_w], src[base + in.grid_w + 1]);
          dst[Index(oy) * ow + ox] = std::max(m0, m1);
        }
    }
    return out;
  }

  static FeatureMap<Scalar> backward(const FeatureMap<Scalar>& in,
                                     const FeatureMap<Scalar>& dout) {
    FeatureMap<Scalar> din =
        FeatureMap<Scalar>::zeros(in.grid_h, in.grid_w, in.n_channels());
    const int oh = dout.grid_h, ow = dout.grid_w;
#pragma omp parallel for schedule(static)
    for (Index ch = 0; ch < in.n_channels(); ++ch) {
      const Scalar* src = in.data.col(ch).data();
      const Scalar* g = dout.data.col(ch).data();
      Scalar* dst = din.data.col(ch).data();
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          const Index base = Index(2 * oy) * in.grid_w + 2 * ox;
          Index best = base;
          if (src[base + 1] > src[best]) best = base + 1;
          if (src[base + in.grid_w] > src[best]) best = base + in.grid_w;
          if (src[base + in.grid_w + 1] > src[best]) best = base + in.grid_w + 1;
          dst[best] += g[Index(oy) * ow + ox];
        }
    }
    return din;
  }
};

// ---------------------------------------------------------------------------
// Nearest-neighbor 2x upsampling
// ---------------------------------------------------------------------------

template <typename Scalar>
struct UpsampleNearest2 {
  static FeatureMap<Scalar> forward(const FeatureMap<Scalar>& in) {
    const int oh = in.grid_h * 2, ow = in.grid_w * 2;
    FeatureMap<Scalar> out(oh, ow, in.n_channels());
#pragma omp parallel for schedule(static)
    for (Index ch = 0; ch < in.n_channels(); ++ch) {
      const Scalar* src = in.data.col(ch).data();
      Scalar* dst = out.data.col(ch).data();
      for (int oy = 0; oy < oh; ++oy) {
        const Scalar* srow = src + Index(oy / 2) * in.grid_w;
        Scalar* drow = dst + Index(oy) * ow;
        for (int ox = 0; ox < ow; ++ox) drow[ox] = srow[ox / 2];
      }
    }
    return out;
  }

  static FeatureMap<Scalar> backward(int in_h, int in_w,
                                     const FeatureMap<Scalar>& dout) {
    FeatureMap<Scalar> din = FeatureMap<Scalar>::zeros(in_h, in_w, dout.n_channels());
#pragma omp parallel for schedule(static)
    for (Index ch = 0; ch < dout.n_channels(); ++ch) {
      const Scalar* g = dout.data.col(ch).data();
      Scalar* dst = din.data.col(ch).data();
      for (int oy = 0; oy < dout.grid_h; ++oy) {
        const Scalar* grow = g + Index(oy) * dout.grid_w;
        Scalar* drow = dst + Index(oy / 2) * in_w;
        for (int ox = 0; ox < dout.grid_w; ++ox) drow[ox / 2] += grow[ox];
      }
    }
    return din;
  }
};

// ---------------------------------------------------------------------------
// Fully connected layer on code vectors
// ---------------------------------------------------------------------------

template <typename Scalar>
class Dense {
 public:
  Dense() = default;
  Dense(std::string name, Index in, Index out) : in_(in), out_(out) {
    weight_.name = name + ".w";
    bias_.name = name + ".b";
    weight_.resize(in, out);
    bias_.resize(out, 1);
  }

  void init(Rng& rng) { he_init(weight_, in_, rng); }

  Vec<Scalar> forward(const Vec<Scalar>& x) const {
    check_dim(x.size() == in_, "dense input size mismatch");
    return weight_.value.transpose() * x + bias_.value.col(0);
  }

  Vec<Scalar> backward(const Vec<Scalar>& x, const Vec<Scalar>& dy) {
    weight_.grad.noalias() += x * dy.transpose();
    bias_.grad.col(0) += dy;
    return weight_.value * dy;
  }

  void params(ParamRefs<Scalar>& out) {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }

  Parameter<Scalar>& weight() { return weight_; }
  Parameter<Scalar>& bias() { return bias_; }
  const Parameter<Scalar>& weight() const { return weight_; }
  const Parameter<Scalar>& bias() const { return bias_; }

 private:
  Index in_ = 0, out_ = 0;
  Parameter<Scalar> weight_;
  Parameter<Scalar> bias_;
};

// ---------------------------------------------------------------------------
// Activations (element-wise, shape preserving)
// ---------------------------------------------------------------------------

template <typename Derived>
auto relu(const Eigen::MatrixBase<Derived>& x) {
  return x.cwiseMax(typename Derived::Scalar(0)).eval();
}

/// d(relu)/dx given the relu *output* (out > 0 iff pre-activation > 0).
template <typename A, typename B>
auto relu_backward(const Eigen::MatrixBase<A>& out, const Eigen::MatrixBase<B>& dout) {
  using S = typename A::Scalar;
  return (out.array() > S(0)).template cast<S>().matrix().cwiseProduct(dout).eval();
}

template <typename Derived>
auto sigmoid(const Eigen::MatrixBase<Derived>& x) {
  using S = typename Derived::Scalar;
  return x.unaryExpr([](S v) { return S(1) / (S(1) + std::exp(-v)); }).eval();
}

/// d(sigmoid)/dx given the sigmoid *output*.
template <typename A, typename B>
auto sigmoid_backward(const Eigen::MatrixBase<A>& out, const Eigen::MatrixBase<B>& dout) {
  using S = typename A::Scalar;
  return (out.array() * (S(1) - out.array()) * dout.array()).matrix().eval();
}

/// Mean over pixels, one value per channel.
template <typename Scalar>
Vec<Scalar> global_avg_pool(const FeatureMap<Scalar>& f) {
  return f.data.colwise().mean().transpose();
}

template <typename Scalar>
FeatureMap<Scalar> global_avg_pool_backward(int h, int w, const Vec<Scalar>& dout) {
  FeatureMap<Scalar> din(h, w, dout.size());
  const Scalar scale = Scalar(1) / Scalar(Index(h) * w);
  for (Index c = 0; c < dout.size(); ++c) din.data.col(c).setConstant(dout[c] * scale);
  return din;
}

}  // namespace exstyle
