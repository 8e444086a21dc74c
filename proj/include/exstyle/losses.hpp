#pragma once

#include <array>
#include <cmath>

#include "exstyle/encoder.hpp"
#include "exstyle/layers.hpp"
#include "exstyle/model.hpp"

/// @file losses.hpp The four training loss terms and their weighted total.
/// Squared-norm terms are realized as mean squared differences and L1 terms
/// as mean absolute differences, so magnitudes are resolution-independent.

namespace exstyle {

template <typename Scalar>
struct LossWeights {
  Scalar lambda_pc = 1;
  Scalar lambda_ps = 2;
  Scalar lambda_rec = 5;
  Scalar lambda_com = 7;
};

struct LossBreakdown {
  double content = 0;
  double style = 0;
  double rec = 0;
  double com = 0;
  double total = 0;
  // diagnostics: the squared orthogonality terms alone, and the literal
  // (unsquared) dot-product form of the exchange loss
  double orth = 0;
  double com_raw = 0;
};

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <typename Scalar>
double mean_sq_diff(const Mat<Scalar>& a, const Mat<Scalar>& b) {
  check_dim(a.rows() == b.rows() && a.cols() == b.cols(), "loss shape mismatch");
  return (a - b).template cast<double>().array().square().mean();
}

template <typename Scalar>
double mean_abs_diff(const Mat<Scalar>& a, const Mat<Scalar>& b) {
  check_dim(a.rows() == b.rows() && a.cols() == b.cols(), "loss shape mismatch");
  return (a - b).template cast<double>().array().abs().mean();
}

/// d/da mean((a-b)^2)
template <typename Scalar>
Mat<Scalar> mean_sq_diff_backward(const Mat<Scalar>& a, const Mat<Scalar>& b,
                                  Scalar upstream) {
  return (a - b) * (Scalar(2) * upstream / Scalar(a.size()));
}

/// d/da mean(|a-b|)
template <typename Scalar>
Mat<Scalar> mean_abs_diff_backward(const Mat<Scalar>& a, const Mat<Scalar>& b,
                                   Scalar upstream) {
  const Scalar k = upstream / Scalar(a.size());
  return (a - b).unaryExpr([k](Scalar v) {
    return v > Scalar(0) ? k : (v < Scalar(0) ? -k : Scalar(0));
  });
}

// ---------------------------------------------------------------------------
// Perceptual losses on feature maps (testable without an encoder)
// ---------------------------------------------------------------------------

/// Content term between two deepest-tap maps.
template <typename Scalar>
double content_term(const FeatureMap<Scalar>& out, const FeatureMap<Scalar>& target) {
  return mean_sq_diff(out.data, target.data);
}

/// Style term between two tap sets: sum over taps of the Gram distance.
template <typename Scalar, std::size_t N>
double style_term(const std::array<FeatureMap<Scalar>, N>& out,
                  const std::array<FeatureMap<Scalar>, N>& target) {
  double s = 0;
  for (std::size_t i = 0; i < N; ++i)
    s += mean_sq_diff(gram(out[i]), gram(target[i]));
  return s;
}

/// Gradients of the style term w.r.t. the output tap features.
template <typename Scalar, std::size_t N>
std::array<FeatureMap<Scalar>, N> style_term_backward(
    const std::array<FeatureMap<Scalar>, N>& out,
    const std::array<FeatureMap<Scalar>, N>& target, Scalar upstream) {
  std::array<FeatureMap<Scalar>, N> grads;
  for (std::size_t i = 0; i < N; ++i) {
    const Mat<Scalar> dg =
        mean_sq_diff_backward(gram(out[i]), gram(target[i]), upstream);
    grads[i] = FeatureMap<Scalar>(out[i].grid_h, out[i].grid_w, out[i].n_channels());
    grads[i].data = gram_backward(out[i], dg);
  }
  return grads;
}

// ---------------------------------------------------------------------------
// Image-level losses (Eqs. with the frozen encoder)
// ---------------------------------------------------------------------------

/// Deepest-tap feature distance of each stylization to its content source.
template <typename Scalar>
double perceptual_content(const Encoder<Scalar>& enc, const PairOutputs<Scalar>& out,
                          const ImageTensor<Scalar>& I_c, const ImageTensor<Scalar>& I_s) {
  return content_term(enc.encode(out.stylized_c), enc.encode(I_c)) +
         content_term(enc.encode(out.stylized_s), enc.encode(I_s));
}

/// Multi-tap Gram distance of each stylization to its style source.
template <typename Scalar>
double perceptual_style(const Encoder<Scalar>& enc, const PairOutputs<Scalar>& out,
                        const ImageTensor<Scalar>& I_c, const ImageTensor<Scalar>& I_s) {
  return style_term(enc.forward_multi(out.stylized_c), enc.forward_multi(I_s)) +
         style_term(enc.forward_multi(out.stylized_s), enc.forward_multi(I_c));
}

/// L1 fidelity of the two reconstructions.
template <typename Scalar>
double reconstruction(const PairOutputs<Scalar>& out, const ImageTensor<Scalar>& I_c,
                      const ImageTensor<Scalar>& I_s) {
  return mean_abs_diff(out.recon_c.data, I_c.data) +
         mean_abs_diff(out.recon_s.data, I_s.data);
}

// ---------------------------------------------------------------------------
// Feature exchange loss
// ---------------------------------------------------------------------------

/// Orthogonality of the common code to both uniques (squared dot products, so
/// anti-alignment is penalized too) plus L1 reconstruction of the raw codes
/// from common + unique through the training-only heads. Evaluated on the
/// last exchange block's output only.
template <typename Scalar>
double feature_exchange_loss(const ExchangeTriple<Scalar>& t, const Vec<Scalar>& f_c,
                             const Vec<Scalar>& f_s, const Dense<Scalar>& head_c,
                             const Dense<Scalar>& head_s, double* orth_out = nullptr,
                             double* raw_out = nullptr) {
  const double dc = double(t.common.dot(t.unique_c));
  const double ds = double(t.common.dot(t.unique_s));
  const Vec<Scalar> fstar_c = head_c.forward(t.common + t.unique_c);
  const Vec<Scalar> fstar_s = head_s.forward(t.common + t.unique_s);
  const double rc = mean_abs_diff(Mat<Scalar>(f_c), Mat<Scalar>(fstar_c));
  const double rs = mean_abs_diff(Mat<Scalar>(f_s), Mat<Scalar>(fstar_s));
  if (orth_out) *orth_out = dc * dc + ds * ds;
  if (raw_out) *raw_out = dc + ds + rc + rs;
  return dc * dc + ds * ds + rc + rs;
}

/// Gradients of feature_exchange_loss. Head weight grads accumulate into the
/// heads; returns gradients w.r.t. (triple, f_c, f_s).
template <typename Scalar>
struct ExchangeLossGrads {
  ExchangeTriple<Scalar> dt;
  Vec<Scalar> df_c, df_s;
};

template <typename Scalar>
ExchangeLossGrads<Scalar> feature_exchange_loss_backward(
    const ExchangeTriple<Scalar>& t, const Vec<Scalar>& f_c, const Vec<Scalar>& f_s,
    Dense<Scalar>& head_c, Dense<Scalar>& head_s, Scalar upstream) {
  const Scalar dc = t.common.dot(t.unique_c);
  const Scalar ds = t.common.dot(t.unique_s);
  ExchangeLossGrads<Scalar> g;
  g.dt.common = upstream * Scalar(2) * (dc * t.unique_c + ds * t.unique_s);
  g.dt.unique_c = upstream * Scalar(2) * dc * t.common;
  g.dt.unique_s = upstream * Scalar(2) * ds * t.common;

  const Vec<Scalar> sum_c = t.common + t.unique_c;
  const Vec<Scalar> sum_s = t.common + t.unique_s;
  const Vec<Scalar> fstar_c = head_c.forward(sum_c);
  const Vec<Scalar> fstar_s = head_s.forward(sum_s);
  // d mean|f - f*|: +sign/n toward f, -sign/n toward f*
  g.df_c = mean_abs_diff_backward(Mat<Scalar>(f_c), Mat<Scalar>(fstar_c), upstream);
  g.df_s = mean_abs_diff_backward(Mat<Scalar>(f_s), Mat<Scalar>(fstar_s), upstream);
  const Vec<Scalar> dsum_c = head_c.backward(sum_c, Vec<Scalar>(-g.df_c));
  const Vec<Scalar> dsum_s = head_s.backward(sum_s, Vec<Scalar>(-g.df_s));
  g.dt.common += dsum_c + dsum_s;
  g.dt.unique_c += dsum_c;
  g.dt.unique_s += dsum_s;
  return g;
}

// ---------------------------------------------------------------------------
// Total
// ---------------------------------------------------------------------------

template <typename Scalar>
LossBreakdown total_loss(double content, double style, double rec, double com,
                         const LossWeights<Scalar>& w) {
  LossBreakdown b;
  b.content = content;
  b.style = style;
  b.rec = rec;
  b.com = com;
  b.total = double(w.lambda_pc) * content + double(w.lambda_ps) * style +
            double(w.lambda_rec) * rec + double(w.lambda_com) * com;
  if (!std::isfinite(b.total))
    throw training_abort("non-finite loss: content=" + std::to_string(content) +
                         " style=" + std::to_string(style) + " rec=" +
                         std::to_string(rec) + " com=" + std::to_string(com));
  return b;
}

}  // namespace exstyle
