#pragma once

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "exstyle/fusion.hpp"

/// @file config.hpp Training configuration, parsed from a key-value text file
/// (key = value per line, # comments) with CLI overrides applied on top.

namespace exstyle {

struct TrainConfig {
  std::string content_dir;
  std::string style_dir;
  std::string checkpoint_dir = "checkpoints";
  std::string log_file;  // default: <checkpoint_dir>/train_log.csv
  std::string encoder_weights;  // optional: checkpoint to copy encoder from
  std::string resume;           // optional: checkpoint to resume training from
  int batch_size = 4;
  double learning_rate = 1e-4;
  long long iterations = 350000;
  int patch = 256;
  int resize_smaller_dim = 512;
  std::uint64_t seed = 1;
  int block_count = 3;
  bool shared_block = false;
  std::string fusion_mode = "compress-expand";
  double lambda_pc = 1, lambda_ps = 2, lambda_rec = 5, lambda_com = 7;
  long long checkpoint_every = 0;  // 0 = only the final checkpoint

  void validate() const {
    check_arg(!content_dir.empty(), "content_dir must be set");
    check_arg(!style_dir.empty(), "style_dir must be set");
    check_arg(batch_size >= 1, "batch_size must be >= 1");
    check_arg(iterations >= 0, "iterations must be >= 0");
    check_arg(patch >= 32, "patch must be >= 32");
    check_arg(patch <= resize_smaller_dim, "patch must be <= resize_smaller_dim");
    check_arg(block_count >= 0, "block_count must be >= 0");
    check_arg(lambda_pc >= 0 && lambda_ps >= 0 && lambda_rec >= 0 && lambda_com >= 0,
              "loss weights must be >= 0");
    fusion_mode_from_string(fusion_mode);  // throws on unknown mode
  }

  nlohmann::json to_json() const {
    return {{"content_dir", content_dir},
            {"style_dir", style_dir},
            {"checkpoint_dir", checkpoint_dir},
            {"log_file", log_file},
            {"encoder_weights", encoder_weights},
            {"batch_size", batch_size},
            {"learning_rate", learning_rate},
            {"iterations", iterations},
            {"patch", patch},
            {"resize_smaller_dim", resize_smaller_dim},
            {"seed", seed},
            {"block_count", block_count},
            {"shared_block", shared_block},
            {"fusion_mode", fusion_mode},
            {"lambda_pc", lambda_pc},
            {"lambda_ps", lambda_ps},
            {"lambda_rec", lambda_rec},
            {"lambda_com", lambda_com},
            {"checkpoint_every", checkpoint_every}};
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

inline std::string unquote(std::string v) {
  if (v.size() >= 2 && ((v.front() == '"' && v.back() == '"') ||
                        (v.front() == '\'' && v.back() == '\'')))
    return v.substr(1, v.size() - 2);
  return v;
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  std::istringstream in(v);
  T out;
  in >> out;
  if (in.fail() || !in.eof())
    throw value_error("config key '" + key + "': cannot parse number from '" + v + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw value_error("config key '" + key + "': expected a boolean, got '" + v + "'");
}

}  // namespace detail

/// Applies one key=value assignment; throws value_error on unknown keys.
inline void apply_config_entry(TrainConfig& cfg, const std::string& key,
                               const std::string& raw) {
  using namespace detail;
  const std::string v = unquote(trim(raw));
  if (key == "content_dir") cfg.content_dir = v;
  else if (key == "style_dir") cfg.style_dir = v;
  else if (key == "checkpoint_dir") cfg.checkpoint_dir = v;
  else if (key == "log_file") cfg.log_file = v;
  else if (key == "encoder_weights") cfg.encoder_weights = v;
  else if (key == "resume") cfg.resume = v;
  else if (key == "batch_size") cfg.batch_size = parse_number<int>(key, v);
  else if (key == "learning_rate") cfg.learning_rate = parse_number<double>(key, v);
  else if (key == "iterations") cfg.iterations = parse_number<long long>(key, v);
  else if (key == "patch") cfg.patch = parse_number<int>(key, v);
  else if (key == "resize_smaller_dim") cfg.resize_smaller_dim = parse_number<int>(key, v);
  else if (key == "seed") cfg.seed = parse_number<std::uint64_t>(key, v);
  else if (key == "block_count") cfg.block_count = parse_number<int>(key, v);
  else if (key == "shared_block") cfg.shared_block = parse_bool(key, v);
  else if (key == "fusion_mode") cfg.fusion_mode = v;
  else if (key == "lambda_pc") cfg.lambda_pc = parse_number<double>(key, v);
  else if (key == "lambda_ps") cfg.lambda_ps = parse_number<double>(key, v);
  else if (key == "lambda_rec") cfg.lambda_rec = parse_number<double>(key, v);
  else if (key == "lambda_com") cfg.lambda_com = parse_number<double>(key, v);
  else if (key == "checkpoint_every") cfg.checkpoint_every = parse_number<long long>(key, v);
  else throw value_error("unknown config key: " + key);
}

inline TrainConfig parse_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw data_error("cannot open config file: " + path);
  TrainConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw value_error("config line " + std::to_string(lineno) +
                        ": expected key = value");
    apply_config_entry(cfg, detail::trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return cfg;
}

inline TrainConfig config_from_json(const nlohmann::json& j) {
  TrainConfig cfg;
  for (auto it = j.begin(); it != j.end(); ++it) {
    std::string v;
    if (it.value().is_string()) v = it.value().get<std::string>();
    else v = it.value().dump();
    apply_config_entry(cfg, it.key(), v);
  }
  return cfg;
}

}  // namespace exstyle
