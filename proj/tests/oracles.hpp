#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "exstyle/common.hpp"
#include "exstyle/rng.hpp"

/// Test-only reference implementations: straight-line scalar loops, kept
/// deliberately independent of the library's vectorized code paths, plus a
/// central-finite-difference harness for gradient checks.

namespace oracles {

using exstyle::FeatureMap;
using exstyle::Index;
using exstyle::Mat;
using exstyle::Vec;

inline int reflect(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) i = i < 0 ? -i : 2 * n - 2 - i;
  return i;
}

/// Naive 3x3 convolution with reflection padding.
inline FeatureMap<double> conv3x3(const FeatureMap<double>& in, const Mat<double>& w,
                                  const Vec<double>& b, int out_ch, int stride) {
  const int in_ch = int(in.n_channels());
  const int oh = (in.grid_h + 2 - 3) / stride + 1;
  const int ow = (in.grid_w + 2 - 3) / stride + 1;
  FeatureMap<double> out(oh, ow, out_ch);
  for (int oc = 0; oc < out_ch; ++oc)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        double acc = b[oc];
        for (int ic = 0; ic < in_ch; ++ic)
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
              const int py = reflect(oy * stride + ky - 1, in.grid_h);
              const int px = reflect(ox * stride + kx - 1, in.grid_w);
              acc += in.data(Index(py) * in.grid_w + px, ic) *
                     w(Index(ic) * 9 + ky * 3 + kx, oc);
            }
        out.data(Index(oy) * ow + ox, oc) = acc;
      }
  return out;
}

inline Mat<double> gram(const FeatureMap<double>& f) {
  const Index n = f.n_pixels(), c = f.n_channels();
  Mat<double> g = Mat<double>::Zero(c, c);
  for (Index i = 0; i < c; ++i)
    for (Index j = 0; j < c; ++j) {
      double acc = 0;
      for (Index p = 0; p < n; ++p) acc += f.data(p, i) * f.data(p, j);
      g(i, j) = acc / double(n * c);
    }
  return g;
}

inline Mat<double> covariance(const FeatureMap<double>& f) {
  const Index n = f.n_pixels(), c = f.n_channels();
  std::vector<double> mu(std::size_t(c), 0.0);
  for (Index i = 0; i < c; ++i) {
    for (Index p = 0; p < n; ++p) mu[std::size_t(i)] += f.data(p, i);
    mu[std::size_t(i)] /= double(n);
  }
  Mat<double> cov(c, c);
  for (Index i = 0; i < c; ++i)
    for (Index j = 0; j < c; ++j) {
      double acc = 0;
      for (Index p = 0; p < n; ++p)
        acc += (f.data(p, i) - mu[std::size_t(i)]) * (f.data(p, j) - mu[std::size_t(j)]);
      cov(i, j) = acc / double(n);
    }
  return cov;
}

inline FeatureMap<double> purify(const FeatureMap<double>& f, const Vec<double>& v_w) {
  FeatureMap<double> out(f.grid_h, f.grid_w, f.n_channels());
  for (Index p = 0; p < f.n_pixels(); ++p)
    for (Index k = 0; k < f.n_channels(); ++k) out.data(p, k) = v_w[k] * f.data(p, k);
  return out;
}

inline FeatureMap<double> fuse(const FeatureMap<double>& f, const Vec<double>& v_c,
                               const Vec<double>& v_r) {
  FeatureMap<double> out(f.grid_h, f.grid_w, f.n_channels());
  for (Index p = 0; p < f.n_pixels(); ++p) {
    double pool = 0;
    for (Index k = 0; k < f.n_channels(); ++k) pool += f.data(p, k) * v_c[k];
    for (Index k = 0; k < f.n_channels(); ++k) out.data(p, k) = pool * v_r[k];
  }
  return out;
}

inline FeatureMap<double> blend(const FeatureMap<double>& a, const FeatureMap<double>& b,
                                double alpha) {
  FeatureMap<double> out(a.grid_h, a.grid_w, a.n_channels());
  for (Index p = 0; p < a.n_pixels(); ++p)
    for (Index k = 0; k < a.n_channels(); ++k)
      out.data(p, k) = (1.0 - alpha) * a.data(p, k) + alpha * b.data(p, k);
  return out;
}

inline FeatureMap<double> adain(const FeatureMap<double>& f, const Vec<double>& v_c,
                                const Vec<double>& v_r, double eps) {
  const Index n = f.n_pixels();
  FeatureMap<double> out(f.grid_h, f.grid_w, f.n_channels());
  for (Index k = 0; k < f.n_channels(); ++k) {
    double mu = 0;
    for (Index p = 0; p < n; ++p) mu += f.data(p, k);
    mu /= double(n);
    double var = 0;
    for (Index p = 0; p < n; ++p) var += (f.data(p, k) - mu) * (f.data(p, k) - mu);
    var /= double(n);
    const double sd = std::sqrt(var + eps);
    for (Index p = 0; p < n; ++p)
      out.data(p, k) = (f.data(p, k) - mu) / sd * v_r[k] + v_c[k];
  }
  return out;
}

struct RmpuParams {
  Mat<double> w1, w2, w3, w4;
  Vec<double> b1, b2, b3, b4;
};

inline double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline std::pair<Vec<double>, Vec<double>> rmpu(const Vec<double>& x,
                                                const Vec<double>& y,
                                                const RmpuParams& p) {
  const Index n = x.size();
  Vec<double> s(n), rx(n), ry(n);
  for (Index i = 0; i < n; ++i) {
    double a1 = p.b1[i], a2 = p.b2[i];
    for (Index j = 0; j < n; ++j) {
      a1 += p.w1(j, i) * x[j];  // layers store weights as (in x out)
      a2 += p.w2(j, i) * y[j];
    }
    s[i] = std::max(0.0, a1) + std::max(0.0, a2);
  }
  for (Index i = 0; i < n; ++i) {
    double g1 = p.b3[i], g2 = p.b4[i];
    for (Index j = 0; j < n; ++j) {
      g1 += p.w3(j, i) * s[j];
      g2 += p.w4(j, i) * s[j];
    }
    rx[i] = sig(g1) * s[i];
    ry[i] = sig(g2) * s[i];
  }
  return {rx, ry};
}

inline double mean_sq_diff(const Mat<double>& a, const Mat<double>& b) {
  double acc = 0;
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j) {
      const double d = a(i, j) - b(i, j);
      acc += d * d;
    }
  return acc / double(a.size());
}

inline double mean_abs_diff(const Mat<double>& a, const Mat<double>& b) {
  double acc = 0;
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j) acc += std::abs(a(i, j) - b(i, j));
  return acc / double(a.size());
}

// ---------------------------------------------------------------------------
// Finite differences
// ---------------------------------------------------------------------------

/// Central finite difference of a scalar functional w.r.t. one coordinate.
inline double fd(const std::function<double()>& f, double* x, double eps = 1e-5) {
  const double x0 = *x;
  *x = x0 + eps;
  const double fp = f();
  *x = x0 - eps;
  const double fm = f();
  *x = x0;
  return (fp - fm) / (2 * eps);
}

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

/// Draws `count` distinct-ish probe coordinates from a matrix and verifies
/// the analytic gradient against central differences.
struct GradProbe {
  double analytic, numeric;
  double err() const { return rel_err(analytic, numeric); }
};

inline GradProbe probe_gradient(const std::function<double()>& loss, double* coord,
                                double analytic, double eps = 1e-5) {
  return {analytic, fd(loss, coord, eps)};
}

inline FeatureMap<double> random_map(exstyle::Rng& rng, int h, int w, Index c,
                                     double scale = 1.0) {
  FeatureMap<double> f(h, w, c);
  rng.fill_normal(f.data, scale);
  return f;
}

inline Vec<double> random_vec(exstyle::Rng& rng, Index n, double scale = 1.0) {
  Mat<double> m(n, 1);
  rng.fill_normal(m, scale);
  return m.col(0);
}

}  // namespace oracles
