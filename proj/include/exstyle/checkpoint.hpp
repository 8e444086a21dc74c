#pragma once

#include <json.hpp>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "exstyle/model.hpp"
#include "exstyle/optimizer.hpp"

/// @file checkpoint.hpp Versioned binary container for model weights,
/// optimizer state and run metadata. Layout: 8-byte magic, u64 JSON length,
/// JSON metadata, raw tensor payload in directory order, trailing CRC-32.
/// Round-trips are bit-exact.

namespace exstyle {

inline constexpr char kCheckpointMagic[8] = {'E', 'X', 'S', 'T', 'C', 'K', 'P', '1'};
inline constexpr int kCheckpointVersion = 1;

namespace detail {

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}
inline std::uint64_t get_u64(const std::string& in, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t((unsigned char)in[at + i]) << (8 * i);
  return v;
}

}  // namespace detail

template <typename Scalar>
struct CheckpointExtras {
  Adam<Scalar>* optimizer = nullptr;  // moments stored when non-null
  long long iteration = 0;
  nlohmann::json config;  // run configuration snapshot, stored verbatim
};

template <typename Scalar>
std::string serialize_checkpoint(Model<Scalar>& model,
                                 const CheckpointExtras<Scalar>& extras) {
  nlohmann::json meta;
  meta["format_version"] = kCheckpointVersion;
  meta["scalar"] = sizeof(Scalar) == 4 ? "f32" : "f64";
  meta["iteration"] = extras.iteration;
  meta["model"] = {{"fusion_mode", to_string(model.settings.fusion_mode)},
                   {"block_count", model.settings.block_count},
                   {"shared_block", model.settings.shared_block}};
  meta["design"] = {
      {"taps", "post-activation conv1_1/conv2_1/conv3_1/conv4_1"},
      {"gating", "r = sigmoid(W_gate s) .* s"},
      {"gram_norm", "F^T F / (n_pixels * n_channels)"},
      {"cov_norm", "mean-subtracted, divided by n_pixels"},
      {"padding", "reflect"},
      {"preprocess_means", {0.485, 0.456, 0.406}},
      {"alpha_blend", "on fusion maps before the post-fusion blocks"},
      {"exchange_loss", "squared dot products, mean-abs code reconstruction"}};
  if (!extras.config.is_null()) meta["config"] = extras.config;

  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx",
                (unsigned long long)model.encoder_checksum());
  meta["encoder_checksum"] = buf;

  ParamRefs<Scalar> params = model.all_params();
  std::vector<const Mat<Scalar>*> payload;
  nlohmann::json dir = nlohmann::json::array();
  for (auto* p : params) {
    dir.push_back({{"name", p->name}, {"rows", p->value.rows()}, {"cols", p->value.cols()}});
    payload.push_back(&p->value);
  }
  if (extras.optimizer) {
    meta["optimizer"] = {{"kind", "adam"},
                         {"t", extras.optimizer->step_count()},
                         {"lr", extras.optimizer->learning_rate()}};
    ParamRefs<Scalar> train = model.trainable_params();
    const auto& m = extras.optimizer->first_moments();
    const auto& v = extras.optimizer->second_moments();
    check_arg(m.size() == train.size(), "optimizer state does not match model");
    for (std::size_t i = 0; i < train.size(); ++i) {
      dir.push_back({{"name", "adam.m:" + train[i]->name},
                     {"rows", m[i].rows()},
                     {"cols", m[i].cols()}});
      payload.push_back(&m[i]);
      dir.push_back({{"name", "adam.v:" + train[i]->name},
                     {"rows", v[i].rows()},
                     {"cols", v[i].cols()}});
      payload.push_back(&v[i]);
    }
  }
  meta["tensors"] = std::move(dir);

  std::string out(kCheckpointMagic, sizeof kCheckpointMagic);
  const std::string js = meta.dump();
  detail::put_u64(out, js.size());
  out += js;
  for (const auto* m : payload)
    out.append(reinterpret_cast<const char*>(m->data()), sizeof(Scalar) * std::size_t(m->size()));
  const std::uint32_t crc = crc32(out.data(), out.size());
  for (int i = 0; i < 4; ++i) out.push_back(char((crc >> (8 * i)) & 0xff));
  return out;
}

/// Writes atomically (temp file + rename) so an interrupted save never
/// clobbers the previous checkpoint.
template <typename Scalar>
void save_checkpoint(Model<Scalar>& model, const std::string& path,
                     const CheckpointExtras<Scalar>& extras = {}) {
  const std::string blob = serialize_checkpoint(model, extras);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw checkpoint_error("cannot open for write: " + tmp);
    f.write(blob.data(), std::streamsize(blob.size()));
    f.flush();
    if (!f) throw checkpoint_error("write failed (disk full?): " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw checkpoint_error("cannot move checkpoint into place: " + ec.message());
}

struct CheckpointInfo {
  nlohmann::json meta;
  long long iteration = 0;
};

namespace detail {

inline std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw checkpoint_error("cannot open checkpoint: " + path);
  std::string s((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return s;
}

inline nlohmann::json parse_and_verify(const std::string& blob, const std::string& path) {
  if (blob.size() < 20 || std::memcmp(blob.data(), kCheckpointMagic, 8) != 0)
    throw checkpoint_error("not a checkpoint file: " + path);
  const std::uint32_t stored =
      std::uint32_t((unsigned char)blob[blob.size() - 4]) |
      std::uint32_t((unsigned char)blob[blob.size() - 3]) << 8 |
      std::uint32_t((unsigned char)blob[blob.size() - 2]) << 16 |
      std::uint32_t((unsigned char)blob[blob.size() - 1]) << 24;
  if (crc32(blob.data(), blob.size() - 4) != stored)
    throw checkpoint_error("checkpoint integrity check failed: " + path);
  const std::uint64_t jlen = get_u64(blob, 8);
  if (16 + jlen > blob.size() - 4)
    throw checkpoint_error("truncated checkpoint: " + path);
  nlohmann::json meta = nlohmann::json::parse(blob.substr(16, jlen));
  const int ver = meta.at("format_version").get<int>();
  if (ver != kCheckpointVersion)
    throw checkpoint_error("checkpoint format version " + std::to_string(ver) +
                           " does not match supported version " +
                           std::to_string(kCheckpointVersion));
  return meta;
}

}  // namespace detail

/// Loads a checkpoint. The returned model is fully constructed from the
/// stored settings; on any error nothing is produced (no partial state).
template <typename Scalar>
Model<Scalar> load_checkpoint(const std::string& path, Adam<Scalar>* optimizer = nullptr,
                              CheckpointInfo* info = nullptr) {
  const std::string blob = detail::read_file(path);
  nlohmann::json meta = detail::parse_and_verify(blob, path);
  const std::string want = sizeof(Scalar) == 4 ? "f32" : "f64";
  if (meta.at("scalar").get<std::string>() != want)
    throw checkpoint_error("checkpoint scalar type " +
                           meta.at("scalar").get<std::string>() +
                           " does not match this build (" + want + ")");

  typename Model<Scalar>::Settings st;
  st.fusion_mode = fusion_mode_from_string(meta.at("model").at("fusion_mode"));
  st.block_count = meta.at("model").at("block_count").get<int>();
  st.shared_block = meta.at("model").at("shared_block").get<bool>();
  Model<Scalar> model(st);

  ParamRefs<Scalar> params = model.all_params();
  ParamRefs<Scalar> train = model.trainable_params();
  std::vector<Mat<Scalar>> adam_m(train.size()), adam_v(train.size());

  std::size_t off = 16 + std::size_t(detail::get_u64(blob, 8));
  std::size_t next = 0;
  for (const auto& entry : meta.at("tensors")) {
    const std::string name = entry.at("name");
    const Index rows = entry.at("rows"), cols = entry.at("cols");
    const std::size_t bytes = sizeof(Scalar) * std::size_t(rows * cols);
    if (off + bytes > blob.size() - 4)
      throw checkpoint_error("checkpoint payload shorter than directory: " + path);
    Mat<Scalar>* dst = nullptr;
    if (name.rfind("adam.m:", 0) == 0 || name.rfind("adam.v:", 0) == 0) {
      const std::string pname = name.substr(7);
      while (next < train.size() && train[next]->name != pname) ++next;
      if (next < train.size()) {
        auto& store = name[5] == 'm' ? adam_m : adam_v;
        store[next].resize(rows, cols);
        dst = &store[next];
      }
    } else {
      for (auto* p : params)
        if (p->name == name) {
          check_dim(p->value.rows() == rows && p->value.cols() == cols,
                    "checkpoint tensor shape mismatch for " + name);
          dst = &p->value;
          break;
        }
      if (!dst) throw checkpoint_error("unknown tensor in checkpoint: " + name);
    }
    if (dst)
      std::memcpy(dst->data(), blob.data() + off, bytes);
    off += bytes;
  }

  if (optimizer) {
    if (!meta.contains("optimizer"))
      throw checkpoint_error("checkpoint has no optimizer state: " + path);
    optimizer->restore(meta.at("optimizer").at("lr").get<double>(),
                       meta.at("optimizer").at("t").get<long long>(),
                       std::move(adam_m), std::move(adam_v));
  }
  if (info) {
    info->iteration = meta.value("iteration", 0LL);
    info->meta = std::move(meta);
  }
  return model;
}

/// Copies only the frozen-encoder weights out of another checkpoint.
template <typename Scalar>
void load_encoder_weights(const std::string& path, Model<Scalar>& model) {
  const std::string blob = detail::read_file(path);
  nlohmann::json meta = detail::parse_and_verify(blob, path);
  ParamRefs<Scalar> enc;
  model.encoder.params(enc);
  std::size_t off = 16 + std::size_t(detail::get_u64(blob, 8));
  std::size_t found = 0;
  for (const auto& entry : meta.at("tensors")) {
    const std::string name = entry.at("name");
    const Index rows = entry.at("rows"), cols = entry.at("cols");
    const std::size_t bytes = sizeof(Scalar) * std::size_t(rows * cols);
    for (auto* p : enc)
      if (p->name == name) {
        check_dim(p->value.rows() == rows && p->value.cols() == cols,
                  "encoder tensor shape mismatch for " + name);
        std::memcpy(p->value.data(), blob.data() + off, bytes);
        ++found;
      }
    off += bytes;
  }
  if (found != enc.size())
    throw checkpoint_error("file does not contain a full encoder: " + path);
}

}  // namespace exstyle
