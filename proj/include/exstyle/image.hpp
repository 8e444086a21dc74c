#pragma once

#include <algorithm>
#include <cmath>

#include "exstyle/common.hpp"

/// @file image.hpp Resolution plumbing for the pipeline: aspect-preserving
/// resize, the reflect-pad / crop rule for inputs that are not multiples of
/// the encoder stride, and PSNR.

namespace exstyle {

/// Bilinear resize with half-pixel center alignment.
template <typename Scalar>
ImageTensor<Scalar> resize_bilinear(const ImageTensor<Scalar>& img, int oh, int ow) {
  check_arg(oh >= 1 && ow >= 1, "resize target must be positive");
  if (oh == img.height && ow == img.width) return img;
  ImageTensor<Scalar> out(oh, ow);
  const double sy = double(img.height) / oh, sx = double(img.width) / ow;
  for (int c = 0; c < 3; ++c) {
    const Scalar* src = img.data.col(c).data();
    Scalar* dst = out.data.col(c).data();
    for (int y = 0; y < oh; ++y) {
      double fy = (y + 0.5) * sy - 0.5;
      fy = std::clamp(fy, 0.0, double(img.height - 1));
      const int y0 = int(fy);
      const int y1 = std::min(y0 + 1, img.height - 1);
      const double wy = fy - y0;
      for (int x = 0; x < ow; ++x) {
        double fx = (x + 0.5) * sx - 0.5;
        fx = std::clamp(fx, 0.0, double(img.width - 1));
        const int x0 = int(fx);
        const int x1 = std::min(x0 + 1, img.width - 1);
        const double wx = fx - x0;
        const double top = (1 - wx) * src[Index(y0) * img.width + x0] +
                           wx * src[Index(y0) * img.width + x1];
        const double bot = (1 - wx) * src[Index(y1) * img.width + x0] +
                           wx * src[Index(y1) * img.width + x1];
        dst[Index(y) * ow + x] = Scalar((1 - wy) * top + wy * bot);
      }
    }
  }
  return out;
}

/// Scale so the smaller dimension equals `target`, keeping the aspect ratio.
/// The other dimension rounds half up.
template <typename Scalar>
ImageTensor<Scalar> resize_smaller_dim(const ImageTensor<Scalar>& img, int target) {
  if (std::min(img.height, img.width) == target) return img;
  int oh, ow;
  if (img.height <= img.width) {
    oh = target;
    ow = int(std::floor(double(img.width) * target / img.height + 0.5));
  } else {
    ow = target;
    oh = int(std::floor(double(img.height) * target / img.width + 0.5));
  }
  return resize_bilinear(img, oh, ow);
}

/// Reflect-pad an image on the bottom/right up to the next multiples of 8 so
/// the encoder grid divides evenly; decode output is cropped back.
template <typename Scalar>
ImageTensor<Scalar> pad_to_stride(const ImageTensor<Scalar>& img) {
  const int ph = (img.height + kEncoderStride - 1) / kEncoderStride * kEncoderStride;
  const int pw = (img.width + kEncoderStride - 1) / kEncoderStride * kEncoderStride;
  if (ph == img.height && pw == img.width) return img;
  ImageTensor<Scalar> out(ph, pw);
  for (int c = 0; c < 3; ++c) {
    const Scalar* src = img.data.col(c).data();
    Scalar* dst = out.data.col(c).data();
    for (int y = 0; y < ph; ++y) {
      const int sy = y < img.height ? y : 2 * img.height - 2 - y;
      for (int x = 0; x < pw; ++x) {
        const int sx = x < img.width ? x : 2 * img.width - 2 - x;
        dst[Index(y) * pw + x] = src[Index(sy) * img.width + sx];
      }
    }
  }
  return out;
}

template <typename Scalar>
ImageTensor<Scalar> crop(const ImageTensor<Scalar>& img, int y0, int x0, int h, int w) {
  check_arg(y0 >= 0 && x0 >= 0 && y0 + h <= img.height && x0 + w <= img.width,
            "crop window out of bounds");
  ImageTensor<Scalar> out(h, w);
  for (int c = 0; c < 3; ++c) {
    const Scalar* src = img.data.col(c).data();
    Scalar* dst = out.data.col(c).data();
    for (int y = 0; y < h; ++y)
      std::copy_n(src + Index(y0 + y) * img.width + x0, w, dst + Index(y) * w);
  }
  return out;
}

template <typename Scalar>
double psnr(const ImageTensor<Scalar>& a, const ImageTensor<Scalar>& b) {
  check_dim(a.height == b.height && a.width == b.width, "psnr size mismatch");
  const double mse = (a.data - b.data).template cast<double>().array().square().mean();
  if (mse <= 0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

}  // namespace exstyle
