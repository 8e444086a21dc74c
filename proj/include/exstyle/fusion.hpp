#pragma once

#include <string>
#include <vector>

#include "exstyle/layers.hpp"

/// @file fusion.hpp Purification weights and exchangeable style vectors, the
/// channel compression-expansion fusion, alpha blending, spatial-mask fusion
/// and the two ablation fusion modes.

namespace exstyle {

template <typename Scalar>
struct FusionVectors {
  Vec<Scalar> v_w;  // purification weights, in (0,1)
  Vec<Scalar> v_c;  // pooling (column) vector
  Vec<Scalar> v_r;  // expansion (row) vector
};

enum class FusionMode { kCompressExpand, kAdain, kConcat };

inline FusionMode fusion_mode_from_string(const std::string& s) {
  if (s == "compress-expand" || s == "compress_expand") return FusionMode::kCompressExpand;
  if (s == "adain") return FusionMode::kAdain;
  if (s == "concat") return FusionMode::kConcat;
  throw value_error("unknown fusion mode: " + s);
}

inline const char* to_string(FusionMode m) {
  switch (m) {
    case FusionMode::kCompressExpand: return "compress-expand";
    case FusionMode::kAdain: return "adain";
    default: return "concat";
  }
}

/// Three dedicated affine heads over [common ; code], shared between the
/// content and style branches. The weight head is squashed to (0,1) so
/// purification is bounded channel attention; the pooling/expansion heads
/// stay linear.
template <typename Scalar>
class FusionHeads {
 public:
  FusionHeads()
      : head_w_("heads.w", kFeatDim, kFeatDim),
        head_c_("heads.c", kFeatDim, kFeatDim),
        head_r_("heads.r", kFeatDim, kFeatDim) {}

  void init(Rng& rng) {
    head_w_.init(rng);
    head_c_.init(rng);
    head_r_.init(rng);
  }

  struct Cache {
    Vec<Scalar> input, v_w;
  };

  FusionVectors<Scalar> forward(const Vec<Scalar>& common, const Vec<Scalar>& code,
                                Cache* cache = nullptr) const {
    check_dim(common.size() == kCodeDim && code.size() == kCodeDim,
              "fusion heads expect two 256-D codes");
    Vec<Scalar> x(kFeatDim);
    x << common, code;
    FusionVectors<Scalar> v;
    v.v_w = sigmoid(head_w_.forward(x));
    v.v_c = head_c_.forward(x);
    v.v_r = head_r_.forward(x);
    if (cache) *cache = {x, v.v_w};
    return v;
  }

  /// Gradients w.r.t. (common, code).
  std::pair<Vec<Scalar>, Vec<Scalar>> backward(const Cache& c,
                                               const FusionVectors<Scalar>& dv) {
    Vec<Scalar> dx = head_w_.backward(c.input, sigmoid_backward(c.v_w, dv.v_w));
    dx += head_c_.backward(c.input, dv.v_c);
    dx += head_r_.backward(c.input, dv.v_r);
    return {dx.head(kCodeDim), dx.tail(kCodeDim)};
  }

  void params(ParamRefs<Scalar>& out) {
    head_w_.params(out);
    head_c_.params(out);
    head_r_.params(out);
  }

 private:
  Dense<Scalar> head_w_, head_c_, head_r_;
};

// ---------------------------------------------------------------------------
// Purification
// ---------------------------------------------------------------------------

/// Channel-wise attention: out[p,k] = v_w[k] * f[p,k].
template <typename Scalar>
FeatureMap<Scalar> purify(const FeatureMap<Scalar>& f_vgg, const Vec<Scalar>& v_w) {
  check_dim(f_vgg.n_channels() == v_w.size(), "purify weight length mismatch");
  FeatureMap<Scalar> out(f_vgg.grid_h, f_vgg.grid_w, f_vgg.n_channels());
  out.data = f_vgg.data.array().rowwise() * v_w.transpose().array();
  return out;
}

/// Gradient w.r.t. the weight vector; `df` optionally receives the gradient
/// w.r.t. the feature map (unused in training where the map is frozen).
template <typename Scalar>
Vec<Scalar> purify_backward(const FeatureMap<Scalar>& f_vgg, const Vec<Scalar>& v_w,
                            const FeatureMap<Scalar>& dout,
                            FeatureMap<Scalar>* df = nullptr) {
  Vec<Scalar> dv = (dout.data.cwiseProduct(f_vgg.data)).colwise().sum().transpose();
  if (df) {
    *df = FeatureMap<Scalar>(f_vgg.grid_h, f_vgg.grid_w, f_vgg.n_channels());
    df->data = dout.data.array().rowwise() * v_w.transpose().array();
  }
  return dv;
}

// ---------------------------------------------------------------------------
// Compression-expansion fusion
// ---------------------------------------------------------------------------

/// Style-aware content pooling followed by channel expansion:
///   pool[p] = sum_k f[p,k] v_c[k];   out[p,k] = pool[p] * v_r[k].
template <typename Scalar>
FeatureMap<Scalar> fuse(const FeatureMap<Scalar>& f_pur, const Vec<Scalar>& v_c,
                        const Vec<Scalar>& v_r) {
  check_dim(f_pur.n_channels() == v_c.size() && v_c.size() == v_r.size(),
            "fuse vector length mismatch");
  Vec<Scalar> pool = f_pur.data * v_c;
  FeatureMap<Scalar> out(f_pur.grid_h, f_pur.grid_w, f_pur.n_channels());
  out.data.noalias() = pool * v_r.transpose();
  return out;
}

template <typename Scalar>
struct FuseGrads {
  FeatureMap<Scalar> df;
  Vec<Scalar> dv_c, dv_r;
};

template <typename Scalar>
FuseGrads<Scalar> fuse_backward(const FeatureMap<Scalar>& f_pur,
                                const Vec<Scalar>& v_c, const Vec<Scalar>& v_r,
                                const FeatureMap<Scalar>& dout) {
  Vec<Scalar> pool = f_pur.data * v_c;
  Vec<Scalar> dpool = dout.data * v_r;
  FuseGrads<Scalar> g;
  g.dv_r = dout.data.transpose() * pool;
  g.dv_c = f_pur.data.transpose() * dpool;
  g.df = FeatureMap<Scalar>(f_pur.grid_h, f_pur.grid_w, f_pur.n_channels());
  g.df.data.noalias() = dpool * v_c.transpose();
  return g;
}

// ---------------------------------------------------------------------------
// Alpha blending
// ---------------------------------------------------------------------------

/// Convex combination (1-alpha) * self + alpha * target. Endpoints return the
/// inputs bit-exactly.
template <typename Scalar>
FeatureMap<Scalar> blend(const FeatureMap<Scalar>& r_self,
                         const FeatureMap<Scalar>& r_target, Scalar alpha) {
  check_arg(alpha >= Scalar(0) && alpha <= Scalar(1), "alpha must lie in [0,1]");
  check_dim(r_self.grid_h == r_target.grid_h && r_self.grid_w == r_target.grid_w &&
                r_self.n_channels() == r_target.n_channels(),
            "blend shape mismatch");
  if (alpha == Scalar(0)) return r_self;
  if (alpha == Scalar(1)) return r_target;
  FeatureMap<Scalar> out(r_self.grid_h, r_self.grid_w, r_self.n_channels());
  out.data = (Scalar(1) - alpha) * r_self.data + alpha * r_target.data;
  return out;
}

// ---------------------------------------------------------------------------
// Spatial masks
// ---------------------------------------------------------------------------

/// Pixel partition on the feature grid: region[p] in [0, n_regions).
struct RegionPartition {
  int n_regions = 0;
  std::vector<int> region;  // one entry per feature-grid pixel

  std::vector<Index> pixels_of(int r) const {
    std::vector<Index> out;
    for (std::size_t p = 0; p < region.size(); ++p)
      if (region[p] == r) out.push_back(Index(p));
    return out;
  }
};

/// Downsamples an image-resolution label map to the feature grid. Each cell
/// is claimed by the label covering most of its pixels (ties go to the lower
/// label), so the partition stays disjoint and covering.
inline RegionPartition pool_labels_to_grid(const std::vector<int>& labels, int img_h,
                                           int img_w, int grid_h, int grid_w,
                                           int n_regions) {
  check_arg(n_regions >= 1 && n_regions <= 8, "between 1 and 8 regions supported");
  RegionPartition part;
  part.n_regions = n_regions;
  part.region.resize(std::size_t(grid_h) * grid_w);
  const int by = img_h / grid_h, bx = img_w / grid_w;
  std::vector<int> count(static_cast<std::size_t>(n_regions), 0);
  for (int gy = 0; gy < grid_h; ++gy)
    for (int gx = 0; gx < grid_w; ++gx) {
      std::fill(count.begin(), count.end(), 0);
      for (int y = gy * by; y < (gy + 1) * by; ++y)
        for (int x = gx * bx; x < (gx + 1) * bx; ++x) {
          const int lbl = labels[std::size_t(y) * img_w + x];
          if (lbl < 0 || lbl >= n_regions)
            throw mask_error("mask label " + std::to_string(lbl) +
                             " outside region range");
          ++count[std::size_t(lbl)];
        }
      int best = 0;
      for (int r = 1; r < n_regions; ++r)
        if (count[std::size_t(r)] > count[std::size_t(best)]) best = r;
      part.region[std::size_t(gy) * grid_w + gx] = best;
    }
  return part;
}

inline void check_partition(const RegionPartition& part, Index n_pixels) {
  if (Index(part.region.size()) != n_pixels)
    throw mask_error("region partition does not cover the feature grid");
  for (int r : part.region)
    if (r < 0 || r >= part.n_regions) throw mask_error("region index out of range");
}

/// Per-region compression-expansion fusion: each region's pixel rows are
/// gathered, fused with that region's vectors and scattered back, so pixels
/// of region i are influenced only by region i's style vectors and the
/// degenerate one-region partition reproduces fuse() exactly.
template <typename Scalar>
FeatureMap<Scalar> fuse_masked(const FeatureMap<Scalar>& f_pur,
                               const RegionPartition& part,
                               const std::vector<FusionVectors<Scalar>>& styles) {
  check_partition(part, f_pur.n_pixels());
  check_arg(int(styles.size()) == part.n_regions,
            "one style vector set required per region");
  FeatureMap<Scalar> out(f_pur.grid_h, f_pur.grid_w, f_pur.n_channels());
  for (int r = 0; r < part.n_regions; ++r) {
    const std::vector<Index> px = part.pixels_of(r);
    if (px.empty()) continue;
    FeatureMap<Scalar> sub(int(px.size()), 1, f_pur.n_channels());
    for (std::size_t i = 0; i < px.size(); ++i)
      sub.data.row(Index(i)) = f_pur.data.row(px[i]);
    const auto& v = styles[std::size_t(r)];
    const FeatureMap<Scalar> fused = fuse(sub, v.v_c, v.v_r);
    for (std::size_t i = 0; i < px.size(); ++i)
      out.data.row(px[i]) = fused.data.row(Index(i));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Ablation fusion modes
// ---------------------------------------------------------------------------

/// Per-channel normalization of f_pur to zero mean / unit std over pixels,
/// then scale by v_r and shift by v_c ("target means and variances").
template <typename Scalar>
FeatureMap<Scalar> adain_fuse(const FeatureMap<Scalar>& f_pur, const Vec<Scalar>& v_c,
                              const Vec<Scalar>& v_r, Scalar eps = Scalar(1e-8)) {
  const Index n = f_pur.n_pixels();
  check_arg(n >= 2, "adain fusion needs at least 2 pixels");
  FeatureMap<Scalar> out(f_pur.grid_h, f_pur.grid_w, f_pur.n_channels());
  for (Index k = 0; k < f_pur.n_channels(); ++k) {
    const Scalar mu = f_pur.data.col(k).mean();
    const Scalar var = (f_pur.data.col(k).array() - mu).square().mean();
    const Scalar inv = Scalar(1) / std::sqrt(var + eps);
    out.data.col(k) = ((f_pur.data.col(k).array() - mu) * inv * v_r[k] + v_c[k]).matrix();
  }
  return out;
}

template <typename Scalar>
FuseGrads<Scalar> adain_fuse_backward(const FeatureMap<Scalar>& f_pur,
                                      const Vec<Scalar>& v_c, const Vec<Scalar>& v_r,
                                      const FeatureMap<Scalar>& dout,
                                      Scalar eps = Scalar(1e-8)) {
  const Index n = f_pur.n_pixels();
  FuseGrads<Scalar> g;
  g.dv_c.resize(v_c.size());
  g.dv_r.resize(v_r.size());
  g.df = FeatureMap<Scalar>(f_pur.grid_h, f_pur.grid_w, f_pur.n_channels());
  for (Index k = 0; k < f_pur.n_channels(); ++k) {
    const Scalar mu = f_pur.data.col(k).mean();
    const Scalar var = (f_pur.data.col(k).array() - mu).square().mean();
    const Scalar inv = Scalar(1) / std::sqrt(var + eps);
    const Vec<Scalar> xhat = ((f_pur.data.col(k).array() - mu) * inv).matrix();
    const Vec<Scalar> dy = dout.data.col(k);
    g.dv_c[k] = dy.sum();
    g.dv_r[k] = dy.dot(xhat);
    const Vec<Scalar> dxhat = dy * v_r[k];
    const Scalar m1 = dxhat.mean();
    const Scalar m2 = dxhat.cwiseProduct(xhat).mean();
    g.df.data.col(k) = ((dxhat.array() - m1 - xhat.array() * m2) * inv).matrix();
  }
  return g;
}

/// Expansion-concatenation: broadcast [v_c ; v_r] to every pixel and append to
/// f_pur, giving an n x 1536 map for the variant decoder head.
template <typename Scalar>
FeatureMap<Scalar> concat_fuse(const FeatureMap<Scalar>& f_pur, const Vec<Scalar>& v_c,
                               const Vec<Scalar>& v_r) {
  const Index c = f_pur.n_channels();
  FeatureMap<Scalar> out(f_pur.grid_h, f_pur.grid_w, 3 * c);
  out.data.leftCols(c) = f_pur.data;
  out.data.middleCols(c, c).rowwise() = v_c.transpose();
  out.data.rightCols(c).rowwise() = v_r.transpose();
  return out;
}

template <typename Scalar>
FuseGrads<Scalar> concat_fuse_backward(const FeatureMap<Scalar>& f_pur,
                                       const FeatureMap<Scalar>& dout) {
  const Index c = f_pur.n_channels();
  FuseGrads<Scalar> g;
  g.df = FeatureMap<Scalar>(f_pur.grid_h, f_pur.grid_w, c);
  g.df.data = dout.data.leftCols(c);
  g.dv_c = dout.data.middleCols(c, c).colwise().sum().transpose();
  g.dv_r = dout.data.rightCols(c).colwise().sum().transpose();
  return g;
}

/// Dispatcher over the three fusion modes (the ablation surface).
template <typename Scalar>
FeatureMap<Scalar> fuse_variant(FusionMode mode, const FeatureMap<Scalar>& f_pur,
                                const Vec<Scalar>& v_c, const Vec<Scalar>& v_r) {
  switch (mode) {
    case FusionMode::kCompressExpand: return fuse(f_pur, v_c, v_r);
    case FusionMode::kAdain: return adain_fuse(f_pur, v_c, v_r);
    case FusionMode::kConcat: return concat_fuse(f_pur, v_c, v_r);
  }
  throw value_error("unknown fusion mode");
}

}  // namespace exstyle
