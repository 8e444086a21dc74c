#pragma once

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "exstyle/config.hpp"
#include "exstyle/image.hpp"
#include "exstyle/image_io.hpp"
#include "exstyle/rng.hpp"

/// @file dataset.hpp Deterministic patch sampling: each training step's batch
/// is a pure function of (seed, step). Unreadable images are skipped with a
/// logged warning; corrupt corpora therefore shift deterministically to the
/// next readable file.

namespace exstyle {

template <typename Scalar>
class ImageFolder {
 public:
  ImageFolder() = default;
  explicit ImageFolder(const std::string& dir) : dir_(dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw data_error("not a directory: " + dir);
    for (const auto& e : fs::directory_iterator(dir)) {
      if (!e.is_regular_file()) continue;
      std::string ext = e.path().extension().string();
      std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
      if (ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp")
        files_.push_back(e.path().string());
    }
    std::sort(files_.begin(), files_.end());
    if (files_.empty()) throw data_error("no images found in: " + dir);
  }

  std::size_t size() const { return files_.size(); }
  const std::string& path(std::size_t i) const { return files_[i]; }

  /// Decoded and aspect-preserving resized so min(H, W) == target. Failed
  /// decodes return nullopt (the sampler skips them). A small cache keeps
  /// desk-scale corpora out of the decoder entirely.
  std::optional<ImageTensor<Scalar>> load_resized(std::size_t i, int target) const {
    const std::string& p = files_[i];
    const auto key = std::make_pair(p, target);
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    auto img = try_load_image<Scalar>(p);
    if (!img) return std::nullopt;
    ImageTensor<Scalar> resized = resize_smaller_dim(*img, target);
    if (cache_.size() >= 64) cache_.clear();
    cache_.emplace(key, resized);
    return resized;
  }

 private:
  std::string dir_;
  std::vector<std::string> files_;
  mutable std::map<std::pair<std::string, int>, ImageTensor<Scalar>> cache_;
};

template <typename Scalar>
struct TrainPair {
  ImageTensor<Scalar> content, style;
  std::string content_path, style_path;
};

namespace detail {

/// Draws one image and a patch crop. Advances deterministically past
/// unreadable files.
template <typename Scalar>
ImageTensor<Scalar> sample_patch(const ImageFolder<Scalar>& set, const TrainConfig& cfg,
                                 Rng& rng, std::string* path_out) {
  std::size_t idx = std::size_t(rng.uniform_int(set.size()));
  for (std::size_t attempt = 0; attempt < set.size(); ++attempt) {
    const std::size_t i = (idx + attempt) % set.size();
    auto img = set.load_resized(i, cfg.resize_smaller_dim);
    if (!img) {
      std::cerr << "[exstyle] warning: skipping unreadable image " << set.path(i)
                << "\n";
      continue;
    }
    check_dim(img->height >= cfg.patch && img->width >= cfg.patch,
              "resized image smaller than the training patch");
    const int oy = int(rng.uniform_int(std::uint64_t(img->height - cfg.patch + 1)));
    const int ox = int(rng.uniform_int(std::uint64_t(img->width - cfg.patch + 1)));
    if (path_out) *path_out = set.path(i);
    return crop(*img, oy, ox, cfg.patch, cfg.patch);
  }
  throw data_error("no readable image in the dataset");
}

}  // namespace detail

/// One batch of independently drawn (content, style) pairs. The generator is
/// derived from (cfg.seed, step), so resumed runs replay the same data order.
template <typename Scalar>
std::vector<TrainPair<Scalar>> sample_batch(const ImageFolder<Scalar>& content_set,
                                            const ImageFolder<Scalar>& style_set,
                                            const TrainConfig& cfg, long long step) {
  Rng rng = Rng::derive(cfg.seed, std::uint64_t(step));
  std::vector<TrainPair<Scalar>> batch(std::size_t(cfg.batch_size));
  for (auto& pair : batch) {
    pair.content = detail::sample_patch(content_set, cfg, rng, &pair.content_path);
    pair.style = detail::sample_patch(style_set, cfg, rng, &pair.style_path);
  }
  return batch;
}

}  // namespace exstyle
