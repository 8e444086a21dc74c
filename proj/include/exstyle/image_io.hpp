#pragma once

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <filesystem>
#include <optional>
#include <string>

#include "exstyle/common.hpp"

/// @file image_io.hpp PNG/JPEG decode and lossless PNG encode via OpenCV.
/// Images are exchanged with the rest of the library in [0,1] float form;
/// grayscale sources are replicated to three channels.

namespace exstyle {

template <typename Scalar>
std::optional<ImageTensor<Scalar>> try_load_image(const std::string& path) {
  cv::Mat m = cv::imread(path, cv::IMREAD_UNCHANGED);
  if (m.empty()) return std::nullopt;
  if (m.depth() != CV_8U) m.convertTo(m, CV_8U, m.depth() == CV_16U ? 1.0 / 257 : 1.0);
  const int ch = m.channels();
  if (ch != 1 && ch != 3 && ch != 4) return std::nullopt;
  ImageTensor<Scalar> img(m.rows, m.cols);
  const Scalar k = Scalar(1) / Scalar(255);
  for (int y = 0; y < m.rows; ++y) {
    const auto* row = m.ptr<unsigned char>(y);
    for (int x = 0; x < m.cols; ++x) {
      const Index p = Index(y) * m.cols + x;
      if (ch == 1) {
        const Scalar v = Scalar(row[x]) * k;
        img.data(p, 0) = v;
        img.data(p, 1) = v;
        img.data(p, 2) = v;
      } else {
        const auto* px = row + std::size_t(x) * ch;  // BGR(A) -> RGB
        img.data(p, 0) = Scalar(px[2]) * k;
        img.data(p, 1) = Scalar(px[1]) * k;
        img.data(p, 2) = Scalar(px[0]) * k;
      }
    }
  }
  return img;
}

template <typename Scalar>
ImageTensor<Scalar> load_image(const std::string& path) {
  auto img = try_load_image<Scalar>(path);
  if (!img) throw data_error("cannot read image: " + path);
  return *img;
}

/// Quantize to 8-bit and write a PNG.
template <typename Scalar>
void save_png(const ImageTensor<Scalar>& img, const std::string& path) {
  cv::Mat m(img.height, img.width, CV_8UC3);
  for (int y = 0; y < img.height; ++y) {
    auto* row = m.ptr<cv::Vec3b>(y);
    for (int x = 0; x < img.width; ++x) {
      const Index p = Index(y) * img.width + x;
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(double(img.data(p, c)), 0.0, 1.0);
        row[x][2 - c] = static_cast<unsigned char>(std::lround(v * 255.0));
      }
    }
  }
  if (!cv::imwrite(path, m)) throw data_error("cannot write image: " + path);
}

/// Grayscale label map; pixel value = region index.
inline std::vector<int> load_label_mask(const std::string& path, int* h, int* w) {
  cv::Mat m = cv::imread(path, cv::IMREAD_GRAYSCALE);
  if (m.empty()) throw data_error("cannot read mask: " + path);
  *h = m.rows;
  *w = m.cols;
  std::vector<int> labels(std::size_t(m.rows) * m.cols);
  for (int y = 0; y < m.rows; ++y) {
    const auto* row = m.ptr<unsigned char>(y);
    for (int x = 0; x < m.cols; ++x) labels[std::size_t(y) * m.cols + x] = row[x];
  }
  return labels;
}

}  // namespace exstyle
