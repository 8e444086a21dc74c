#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

/// @file common.hpp Core aliases, the pixel-major feature map type, trainable
/// parameters and the error taxonomy shared by every module.

namespace exstyle {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Index = Eigen::Index;

/// Dimension of the compressed style codes (f_c, f_s, uniques, common).
inline constexpr int kCodeDim = 256;
/// Channel count of the deepest encoder tap and of the fusion vectors.
inline constexpr int kFeatDim = 512;
/// Total spatial stride of the encoder (three 2x2 poolings).
inline constexpr int kEncoderStride = 8;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

struct dimension_error : std::runtime_error {
  explicit dimension_error(const std::string& m) : std::runtime_error(m) {}
};
struct value_error : std::runtime_error {
  explicit value_error(const std::string& m) : std::runtime_error(m) {}
};
struct mask_error : std::runtime_error {
  explicit mask_error(const std::string& m) : std::runtime_error(m) {}
};
struct data_error : std::runtime_error {
  explicit data_error(const std::string& m) : std::runtime_error(m) {}
};
struct checkpoint_error : std::runtime_error {
  explicit checkpoint_error(const std::string& m) : std::runtime_error(m) {}
};
/// Raised when a training step produces a non-finite loss.
struct training_abort : std::runtime_error {
  explicit training_abort(const std::string& m) : std::runtime_error(m) {}
};

inline void check_dim(bool ok, const std::string& msg) {
  if (!ok) throw dimension_error(msg);
}
inline void check_arg(bool ok, const std::string& msg) {
  if (!ok) throw value_error(msg);
}

// ---------------------------------------------------------------------------
// FeatureMap / ImageTensor
// ---------------------------------------------------------------------------

/// A spatial activation grid stored as an n_pixels x n_channels matrix.
/// Pixels are row-major over the grid (p = y * grid_w + x) and the matrix is
/// column-major, so every channel is a contiguous plane.
template <typename Scalar>
struct FeatureMap {
  int grid_h = 0;
  int grid_w = 0;
  Mat<Scalar> data;  // (grid_h * grid_w) x n_channels

  FeatureMap() = default;
  FeatureMap(int h, int w, Index channels)
      : grid_h(h), grid_w(w), data(Index(h) * w, channels) {}

  Index n_pixels() const { return data.rows(); }
  Index n_channels() const { return data.cols(); }

  static FeatureMap zeros(int h, int w, Index channels) {
    FeatureMap f(h, w, channels);
    f.data.setZero();
    return f;
  }
};

/// An H x W x 3 color image with values in [0, 1], same storage convention
/// as FeatureMap (pixel-major rows, one column per channel).
template <typename Scalar>
struct ImageTensor {
  int height = 0;
  int width = 0;
  Mat<Scalar> data;  // (height * width) x 3

  ImageTensor() = default;
  ImageTensor(int h, int w) : height(h), width(w), data(Index(h) * w, 3) {}

  Index n_pixels() const { return data.rows(); }

  static ImageTensor constant(int h, int w, Scalar v) {
    ImageTensor img(h, w);
    img.data.setConstant(v);
    return img;
  }
};

template <typename Scalar>
void check_image(const ImageTensor<Scalar>& img) {
  check_dim(img.data.cols() == 3, "image must have 3 channels");
  check_dim(img.data.rows() == Index(img.height) * img.width,
            "image pixel count does not match its dimensions");
  check_arg(img.data.allFinite(), "image contains non-finite values");
  check_arg(img.data.minCoeff() >= Scalar(0) && img.data.maxCoeff() <= Scalar(1),
            "image values must lie in [0,1]");
}

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

/// A learnable matrix with its gradient accumulator.
template <typename Scalar>
struct Parameter {
  std::string name;
  Mat<Scalar> value;
  Mat<Scalar> grad;

  void resize(Index rows, Index cols) {
    value.setZero(rows, cols);
    grad.setZero(rows, cols);
  }
  void zero_grad() { grad.setZero(); }
  Index size() const { return value.size(); }
};

/// Flat view over a module's parameters, used by the optimizer and the
/// checkpoint container. Order is fixed by construction order.
template <typename Scalar>
using ParamRefs = std::vector<Parameter<Scalar>*>;

// ---------------------------------------------------------------------------
// Checksums
// ---------------------------------------------------------------------------

/// FNV-1a over raw bytes; used for frozen-weight checksums and data hashes.
inline std::uint64_t fnv1a64(const void* bytes, std::size_t n,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

template <typename Scalar>
std::uint64_t checksum_params(const ParamRefs<Scalar>& params) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto* p : params) {
    h = fnv1a64(p->value.data(), sizeof(Scalar) * std::size_t(p->value.size()), h);
  }
  return h;
}

/// CRC-32 (IEEE, reflected) for checkpoint integrity.
inline std::uint32_t crc32(const void* bytes, std::size_t n,
                           std::uint32_t crc = 0) {
  static const auto table = [] {
    std::vector<std::uint32_t> t(256);
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  const auto* p = static_cast<const unsigned char*>(bytes);
  crc = ~crc;
  for (std::size_t i = 0; i < n; ++i) crc = table[(crc ^ p[i]) & 0xffu] ^ (crc >> 8);
  return ~crc;
}

}  // namespace exstyle
