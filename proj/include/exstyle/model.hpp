#pragma once

#include <vector>

#include "exstyle/decoder.hpp"
#include "exstyle/encoder.hpp"
#include "exstyle/exchange.hpp"
#include "exstyle/fusion.hpp"
#include "exstyle/image.hpp"
#include "exstyle/stylecodec.hpp"

/// @file model.hpp The end-to-end generator: joint pair analysis, purification,
/// fusion and the twin decoders. Decoder A serves the outputs whose content is
/// the style image (I_{c->s}, I_{s->s}); decoder B serves those whose content
/// is the content image (I_{c->c}, I_{s->c}).

namespace exstyle {

template <typename Scalar>
struct PairOutputs {
  ImageTensor<Scalar> stylized_c;  // I_{s->c}
  ImageTensor<Scalar> stylized_s;  // I_{c->s}
  ImageTensor<Scalar> recon_c;     // I_{c->c}
  ImageTensor<Scalar> recon_s;     // I_{s->s}
};

template <typename Scalar>
struct Model {
  struct Settings {
    FusionMode fusion_mode = FusionMode::kCompressExpand;
    int block_count = 3;
    bool shared_block = false;
  };

  explicit Model(Settings s = {})
      : settings(s),
        uniq_c("init_unique.c"),
        uniq_s("init_unique.s"),
        chain(s.block_count, s.shared_block),
        dec_a("dec_a", s.fusion_mode),
        dec_b("dec_b", s.fusion_mode),
        recon_head_c("recon.c", kCodeDim, kCodeDim),
        recon_head_s("recon.s", kCodeDim, kCodeDim) {}

  Settings settings;
  Encoder<Scalar> encoder;
  CovCompressor<Scalar> compressor;
  UniqueInit<Scalar> uniq_c, uniq_s;
  CommonInit<Scalar> common_init;
  ExchangeChain<Scalar> chain;
  FusionHeads<Scalar> heads;
  Decoder<Scalar> dec_a, dec_b;
  Dense<Scalar> recon_head_c, recon_head_s;  // training-only

  void init(std::uint64_t seed) {
    Rng enc_rng = Rng::derive(seed, 0);
    encoder.init(enc_rng);
    Rng rng = Rng::derive(seed, 1);
    compressor.init(rng);
    uniq_c.init(rng);
    uniq_s.init(rng);
    common_init.init(rng);
    chain.init(rng);
    heads.init(rng);
    dec_a.init(rng);
    dec_b.init(rng);
    recon_head_c.init(rng);
    recon_head_s.init(rng);
  }

  /// Everything the optimizer may touch: the frozen encoder is excluded.
  ParamRefs<Scalar> trainable_params() {
    ParamRefs<Scalar> p;
    compressor.params(p);
    uniq_c.params(p);
    uniq_s.params(p);
    common_init.params(p);
    chain.params(p);
    heads.params(p);
    dec_a.params(p);
    dec_b.params(p);
    recon_head_c.params(p);
    recon_head_s.params(p);
    return p;
  }

  /// Every parameter, encoder first (serialization order).
  ParamRefs<Scalar> all_params() {
    ParamRefs<Scalar> p;
    encoder.params(p);
    for (auto* q : trainable_params()) p.push_back(q);
    return p;
  }

  std::uint64_t encoder_checksum() { return encoder.checksum(); }

  // -------------------------------------------------------------------------
  // Joint analysis
  // -------------------------------------------------------------------------

  struct Analysis {
    FeatureMap<Scalar> f_vgg_c, f_vgg_s;
    Vec<Scalar> f_c, f_s;
    ExchangeTriple<Scalar> refined;
    FusionVectors<Scalar> heads_c, heads_s;
  };

  /// Full code path of the framework up to the fusion vectors. Inputs must
  /// already be stride-aligned (use stylize/stylize_pair for arbitrary sizes).
  Analysis analyze(const ImageTensor<Scalar>& I_c, const ImageTensor<Scalar>& I_s) const {
    Analysis a;
    a.f_vgg_c = encoder.encode(I_c);
    a.f_vgg_s = encoder.encode(I_s);
    a.f_c = compressor.forward(covariance(a.f_vgg_c));
    a.f_s = compressor.forward(covariance(a.f_vgg_s));
    ExchangeTriple<Scalar> t{common_init.forward(a.f_c, a.f_s),
                             uniq_c.forward(a.f_c), uniq_s.forward(a.f_s)};
    a.refined = chain.forward(t);
    a.heads_c = heads.forward(a.refined.common, a.f_c);
    a.heads_s = heads.forward(a.refined.common, a.f_s);
    return a;
  }

  // -------------------------------------------------------------------------
  // Decoding
  // -------------------------------------------------------------------------

  /// Fuses with the target heads, blends against the branch's own fusion map
  /// and decodes to an image clamped to [0,1]. `fused_debug`, when given,
  /// receives the pre-clamp blended fusion map.
  ImageTensor<Scalar> decode(const FeatureMap<Scalar>& f_pur,
                             const FusionVectors<Scalar>& heads_target,
                             const Decoder<Scalar>& dec, Scalar alpha,
                             const FusionVectors<Scalar>& heads_self,
                             FeatureMap<Scalar>* fused_debug = nullptr) const {
    FeatureMap<Scalar> h = dec.pre_fusion(f_pur);
    FeatureMap<Scalar> r_target = dec.fuse_for_mode(h, heads_target);
    FeatureMap<Scalar> r_self = dec.fuse_for_mode(h, heads_self);
    FeatureMap<Scalar> r = blend(r_self, r_target, alpha);
    if (fused_debug) *fused_debug = r;
    return to_image(dec.tail().forward(r));
  }

  /// The four outputs of the pair pipeline. `alpha` affects the two stylized
  /// outputs; reconstructions always take the pure self path.
  PairOutputs<Scalar> stylize_pair(const ImageTensor<Scalar>& I_c,
                                   const ImageTensor<Scalar>& I_s,
                                   Scalar alpha = Scalar(1)) const {
    const ImageTensor<Scalar> pc = pad_to_stride(I_c);
    const ImageTensor<Scalar> ps = pad_to_stride(I_s);
    const Analysis a = analyze(pc, ps);
    const FeatureMap<Scalar> pur_c = purify(a.f_vgg_c, a.heads_c.v_w);
    const FeatureMap<Scalar> pur_s = purify(a.f_vgg_s, a.heads_s.v_w);
    PairOutputs<Scalar> out;
    out.stylized_c = decode(pur_c, a.heads_s, dec_b, alpha, a.heads_c);
    out.recon_c = decode(pur_c, a.heads_s, dec_b, Scalar(0), a.heads_c);
    out.stylized_s = decode(pur_s, a.heads_c, dec_a, alpha, a.heads_s);
    out.recon_s = decode(pur_s, a.heads_c, dec_a, Scalar(0), a.heads_s);
    out.stylized_c = crop(out.stylized_c, 0, 0, I_c.height, I_c.width);
    out.recon_c = crop(out.recon_c, 0, 0, I_c.height, I_c.width);
    out.stylized_s = crop(out.stylized_s, 0, 0, I_s.height, I_s.width);
    out.recon_s = crop(out.recon_s, 0, 0, I_s.height, I_s.width);
    return out;
  }

  // -------------------------------------------------------------------------
  // Region-controlled stylization (the CLI path)
  // -------------------------------------------------------------------------

  /// Stylize `content` with one style per region. `labels`, when non-null, is
  /// an image-resolution label map (values 0..styles.size()-1) of the same
  /// size as `content`; null means a single region covering the image. Region
  /// style statistics come from a covariance restricted to that region.
  ImageTensor<Scalar> stylize(const ImageTensor<Scalar>& content,
                              const std::vector<ImageTensor<Scalar>>& styles,
                              Scalar alpha = Scalar(1),
                              const std::vector<int>* labels = nullptr) const {
    check_arg(!styles.empty(), "at least one style image required");
    check_arg(labels != nullptr || styles.size() == 1,
              "multiple styles require a region mask");
    const ImageTensor<Scalar> pc = pad_to_stride(content);
    const FeatureMap<Scalar> f_vgg_c = encoder.encode(pc);

    RegionPartition part;
    if (labels) {
      std::vector<int> padded = pad_labels(*labels, content.height, content.width,
                                           pc.height, pc.width);
      part = pool_labels_to_grid(padded, pc.height, pc.width, f_vgg_c.grid_h,
                                 f_vgg_c.grid_w, int(styles.size()));
    } else {
      part.n_regions = 1;
      part.region.assign(std::size_t(f_vgg_c.n_pixels()), 0);
    }

    // joint analysis per region, content statistics restricted to the region
    std::vector<FusionVectors<Scalar>> self_heads, target_heads;
    FeatureMap<Scalar> f_pur(f_vgg_c.grid_h, f_vgg_c.grid_w, f_vgg_c.n_channels());
    for (int r = 0; r < part.n_regions; ++r) {
      const std::vector<Index> px = part.pixels_of(r);
      if (px.empty()) throw mask_error("region " + std::to_string(r) +
                                       " covers no feature-grid cells");
      const Mat<Scalar> cov_c = covariance_masked(f_vgg_c, px);
      const ImageTensor<Scalar> ps = pad_to_stride(styles[std::size_t(r)]);
      const FeatureMap<Scalar> f_vgg_s = encoder.encode(ps);
      const Mat<Scalar> cov_s = covariance(f_vgg_s);
      const Vec<Scalar> f_c = compressor.forward(cov_c);
      const Vec<Scalar> f_s = compressor.forward(cov_s);
      ExchangeTriple<Scalar> t{common_init.forward(f_c, f_s), uniq_c.forward(f_c),
                               uniq_s.forward(f_s)};
      t = chain.forward(t);
      const FusionVectors<Scalar> hc = heads.forward(t.common, f_c);
      const FusionVectors<Scalar> hs = heads.forward(t.common, f_s);
      for (Index p : px)
        f_pur.data.row(p) =
            f_vgg_c.data.row(p).cwiseProduct(hc.v_w.transpose());
      self_heads.push_back(hc);
      target_heads.push_back(hs);
    }

    const FeatureMap<Scalar> h = dec_b.pre_fusion(f_pur);
    FeatureMap<Scalar> r_self, r_target;
    if (part.n_regions == 1) {
      r_self = dec_b.fuse_for_mode(h, self_heads[0]);
      r_target = dec_b.fuse_for_mode(h, target_heads[0]);
    } else {
      check_arg(settings.fusion_mode == FusionMode::kCompressExpand,
                "region masks require compress-expand fusion");
      r_self = fuse_masked(h, part, self_heads);
      r_target = fuse_masked(h, part, target_heads);
    }
    const FeatureMap<Scalar> r = blend(r_self, r_target, alpha);
    ImageTensor<Scalar> img = to_image(dec_b.tail().forward(r));
    return crop(img, 0, 0, content.height, content.width);
  }

  /// Stylize with precomputed fusion vectors (fixed exchangeable features,
  /// e.g. reused across video frames). Only the content encoding is redone.
  ImageTensor<Scalar> stylize_with_vectors(const ImageTensor<Scalar>& content,
                                           const FusionVectors<Scalar>& heads_self,
                                           const FusionVectors<Scalar>& heads_target,
                                           Scalar alpha = Scalar(1)) const {
    const ImageTensor<Scalar> pc = pad_to_stride(content);
    const FeatureMap<Scalar> f_vgg_c = encoder.encode(pc);
    const FeatureMap<Scalar> f_pur = purify(f_vgg_c, heads_self.v_w);
    const FeatureMap<Scalar> h = dec_b.pre_fusion(f_pur);
    const FeatureMap<Scalar> r = blend(dec_b.fuse_for_mode(h, heads_self),
                                       dec_b.fuse_for_mode(h, heads_target), alpha);
    ImageTensor<Scalar> img = to_image(dec_b.tail().forward(r));
    return crop(img, 0, 0, content.height, content.width);
  }

 private:
  static ImageTensor<Scalar> to_image(const FeatureMap<Scalar>& rgb) {
    ImageTensor<Scalar> img(rgb.grid_h, rgb.grid_w);
    img.data = rgb.data.cwiseMax(Scalar(0)).cwiseMin(Scalar(1));
    return img;
  }

  static std::vector<int> pad_labels(const std::vector<int>& labels, int h, int w,
                                     int ph, int pw) {
    check_arg(int(labels.size()) == h * w, "mask size must match the image");
    if (ph == h && pw == w) return labels;
    std::vector<int> out(std::size_t(ph) * pw);
    for (int y = 0; y < ph; ++y) {
      const int sy = y < h ? y : 2 * h - 2 - y;
      for (int x = 0; x < pw; ++x) {
        const int sx = x < w ? x : 2 * w - 2 - x;
        out[std::size_t(y) * pw + x] = labels[std::size_t(sy) * w + sx];
      }
    }
    return out;
  }
};

}  // namespace exstyle
