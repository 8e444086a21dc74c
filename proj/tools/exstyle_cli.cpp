// Command-line surface of the style transfer toolkit:
//   train | stylize | video | evaluate | bench
// Exit codes: 0 success, 2 usage/validation error, 1 runtime failure.

#include <CLI11.hpp>
#include <json.hpp>
#include <omp.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>

#include "exstyle/exstyle.hpp"

namespace fs = std::filesystem;
using namespace exstyle;
using Scalar = float;

namespace {

std::string default_checkpoint(const std::string& given) {
  if (!given.empty()) return given;
  if (const char* env = std::getenv("EXSTYLE_CHECKPOINT")) return env;
  throw value_error("no checkpoint given (use --checkpoint or EXSTYLE_CHECKPOINT)");
}

Model<Scalar> load_model(const std::string& path) {
  return load_checkpoint<Scalar>(default_checkpoint(path));
}

std::string with_suffix(const std::string& path, const std::string& suffix) {
  const fs::path p(path);
  fs::path out = p.parent_path() / p.stem();
  return out.string() + suffix + p.extension().string();
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

int cmd_train(const std::string& config_path,
              const std::vector<std::pair<std::string, std::string>>& overrides) {
  TrainConfig cfg;
  if (!config_path.empty()) cfg = parse_config_file(config_path);
  for (const auto& [key, value] : overrides) apply_config_entry(cfg, key, value);
  cfg.validate();
  const TrainResult res = train_loop<Scalar>(cfg);
  std::printf("trained %lld step(s); final checkpoint: %s\n", res.steps_run,
              res.checkpoint_path.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// stylize
// ---------------------------------------------------------------------------

struct StylizeArgs {
  std::string content_path;
  std::vector<std::string> style_paths;
  std::string checkpoint;
  double alpha = 1.0;
  std::string mask_path;
  std::string output = "stylized.png";
  bool all_outputs = false;
};

int cmd_stylize(const StylizeArgs& a) {
  check_arg(a.alpha >= 0.0 && a.alpha <= 1.0, "alpha must lie in [0,1]");
  check_arg(!a.style_paths.empty(), "at least one --style required");
  check_arg(a.style_paths.size() == 1 || !a.mask_path.empty(),
            "multiple styles require --mask");
  check_arg(!a.all_outputs || a.style_paths.size() == 1,
            "--all-outputs expects a single style");

  Model<Scalar> model = load_model(a.checkpoint);
  ImageTensor<Scalar> content = load_image<Scalar>(a.content_path);
  std::vector<ImageTensor<Scalar>> styles;
  for (const auto& p : a.style_paths) styles.push_back(load_image<Scalar>(p));

  std::vector<int> labels;
  const std::vector<int>* labels_ptr = nullptr;
  if (!a.mask_path.empty()) {
    int mh = 0, mw = 0;
    labels = load_label_mask(a.mask_path, &mh, &mw);
    if (mh != content.height || mw != content.width)
      throw mask_error("mask size does not match the content image");
    int max_label = 0;
    for (int v : labels) max_label = std::max(max_label, v);
    if (max_label + 1 != int(a.style_paths.size()))
      throw mask_error("mask region count " + std::to_string(max_label + 1) +
                       " does not match style count " +
                       std::to_string(a.style_paths.size()));
    labels_ptr = &labels;
  }

  if (a.all_outputs) {
    const PairOutputs<Scalar> out =
        model.stylize_pair(content, styles[0], Scalar(a.alpha));
    save_png(out.stylized_c, with_suffix(a.output, "_sc"));
    save_png(out.stylized_s, with_suffix(a.output, "_cs"));
    save_png(out.recon_c, with_suffix(a.output, "_cc"));
    save_png(out.recon_s, with_suffix(a.output, "_ss"));
  }
  const ImageTensor<Scalar> img =
      model.stylize(content, styles, Scalar(a.alpha), labels_ptr);
  save_png(img, a.output);
  std::printf("wrote %s\n", a.output.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// video
// ---------------------------------------------------------------------------

struct VideoArgs {
  std::string frames_dir, style_path, checkpoint, out_dir;
  double alpha = 1.0;
  bool first_frame_codes = false;
};

int cmd_video(const VideoArgs& a) {
  check_arg(a.alpha >= 0.0 && a.alpha <= 1.0, "alpha must lie in [0,1]");
  std::vector<std::string> frames;
  if (!fs::is_directory(a.frames_dir))
    throw value_error("not a directory: " + a.frames_dir);
  for (const auto& e : fs::directory_iterator(a.frames_dir))
    if (e.is_regular_file()) frames.push_back(e.path().string());
  std::sort(frames.begin(), frames.end());
  check_arg(!frames.empty(), "no frames found in " + a.frames_dir);

  Model<Scalar> model = load_model(a.checkpoint);
  ImageTensor<Scalar> style = load_image<Scalar>(a.style_path);
  fs::create_directories(a.out_dir);

  std::optional<std::pair<FusionVectors<Scalar>, FusionVectors<Scalar>>> fixed;
  for (const auto& frame_path : frames) {
    auto frame = try_load_image<Scalar>(frame_path);
    if (!frame) throw data_error("unreadable frame: " + frame_path);
    ImageTensor<Scalar> out;
    if (a.first_frame_codes) {
      // exchangeable vectors from (first frame, style), reused for all frames
      if (!fixed) {
        const auto analysis =
            model.analyze(pad_to_stride(*frame), pad_to_stride(style));
        fixed = {analysis.heads_c, analysis.heads_s};
      }
      out = model.stylize_with_vectors(*frame, fixed->first, fixed->second,
                                       Scalar(a.alpha));
    } else {
      out = model.stylize(*frame, {style}, Scalar(a.alpha), nullptr);
    }
    const std::string name = fs::path(frame_path).filename().string();
    save_png(out, (fs::path(a.out_dir) / name).string());
  }
  std::printf("wrote %zu frame(s) to %s\n", frames.size(), a.out_dir.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

int cmd_evaluate(const std::string& pairs_path, const std::string& checkpoint,
                 bool json_out) {
  std::ifstream f(pairs_path);
  if (!f) throw value_error("cannot open pairs list: " + pairs_path);
  std::vector<std::pair<std::string, std::string>> pairs;
  std::string line;
  while (std::getline(f, line)) {
    std::istringstream in(line);
    std::string c, s;
    if (in >> c >> s) pairs.emplace_back(c, s);
  }
  check_arg(!pairs.empty(), "pairs list is empty");

  Model<Scalar> model = load_model(checkpoint);
  double content_sum = 0, style_sum = 0;
  for (const auto& [cp, sp] : pairs) {
    const ImageTensor<Scalar> I_c = load_image<Scalar>(cp);
    const ImageTensor<Scalar> I_s = load_image<Scalar>(sp);
    const ImageTensor<Scalar> out = model.stylize(I_c, {I_s});
    content_sum +=
        content_term(model.encoder.encode(pad_to_stride(out)),
                     model.encoder.encode(pad_to_stride(I_c)));
    style_sum += style_term(model.encoder.forward_multi(pad_to_stride(out)),
                            model.encoder.forward_multi(pad_to_stride(I_s)));
  }
  const double content = content_sum / double(pairs.size());
  const double style = style_sum / double(pairs.size());
  const double overall = content + style;
  if (json_out) {
    nlohmann::json j{{"pairs", pairs.size()},
                     {"content", content},
                     {"style", style},
                     {"overall", overall}};
    std::printf("%s\n", j.dump(2).c_str());
  } else {
    std::printf("Perceptual (content and style) loss over %zu test image(s)\n",
                pairs.size());
    std::printf("%-12s %-12s %-12s %s\n", "Loss", "Content", "Style",
                "Overall Perception");
    std::printf("%-12s %-12.4f %-12.4f %.4f\n", "Ours", content, style, overall);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

int cmd_bench(const std::string& checkpoint, std::vector<int> sizes, int repeats,
              bool json_out) {
  check_arg(repeats >= 1, "repeats must be >= 1");
  check_arg(!sizes.empty(), "at least one size required");
  for (int s : sizes) check_arg(s >= 32, "bench sizes must be >= 32");

  Model<Scalar> model = load_model(checkpoint);  // load excluded from timing
  Rng rng(20240);
  std::vector<double> seconds;
  for (int size : sizes) {
    ImageTensor<Scalar> content(size, size), style(size, size);
    rng.fill_uniform(content.data, 0.0, 1.0);
    rng.fill_uniform(style.data, 0.0, 1.0);
    volatile Scalar sink = model.stylize(content, {style}).data(0, 0);  // warm-up
    (void)sink;
    const auto t0 = std::chrono::steady_clock::now();
    for (int r = 0; r < repeats; ++r) {
      volatile Scalar v = model.stylize(content, {style}).data(0, 0);
      (void)v;
    }
    const double s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() /
        repeats;
    seconds.push_back(s);
  }

  const bool monotonic = std::is_sorted(seconds.begin(), seconds.end());
  if (json_out) {
    nlohmann::json j{{"sizes", sizes},
                     {"seconds", seconds},
                     {"repeats", repeats},
                     {"monotonic", monotonic}};
    std::printf("%s\n", j.dump(2).c_str());
    return 0;
  }
  std::printf("Running time (in seconds), averaged over %d run(s)\n", repeats);
  std::printf("%-22s", "Image Size");
  for (int s : sizes) std::printf(" %dx%-9d", s, s);
  std::printf("\n%-22s", "Ours");
  for (double s : seconds) std::printf(" %-12.3f", s);
  std::printf("\n");
  if (sizes == std::vector<int>{256, 512, 1024}) {
    // published GPU timings for the same pipeline, for context only
    std::printf("%-22s %-12.3f %-12.3f %-12.3f\n", "Titan Xp reference", 0.031,
                0.066, 0.21);
  }
  if (!monotonic)
    std::printf("note: timings are not monotonically nondecreasing with image area\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pairwise exchangeable style transfer toolkit"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "openmp thread count (0 = runtime default)");

  // train
  auto* train = app.add_subcommand("train", "train a model");
  std::string config_path;
  train->add_option("--config", config_path, "key-value config file");
  std::vector<std::pair<std::string, std::string>> overrides;
  const auto add_override = [&](CLI::App* cmd, const std::string& flag,
                                const std::string& key) {
    cmd->add_option_function<std::string>(
        flag, [&overrides, key](const std::string& v) { overrides.emplace_back(key, v); });
  };
  add_override(train, "--content-dir", "content_dir");
  add_override(train, "--style-dir", "style_dir");
  add_override(train, "--checkpoint-dir", "checkpoint_dir");
  add_override(train, "--log-file", "log_file");
  add_override(train, "--encoder-weights", "encoder_weights");
  add_override(train, "--resume", "resume");
  add_override(train, "--batch-size", "batch_size");
  add_override(train, "--learning-rate", "learning_rate");
  add_override(train, "--iterations", "iterations");
  add_override(train, "--patch", "patch");
  add_override(train, "--resize-smaller-dim", "resize_smaller_dim");
  add_override(train, "--seed", "seed");
  add_override(train, "--block-count", "block_count");
  add_override(train, "--shared-block", "shared_block");
  add_override(train, "--fusion-mode", "fusion_mode");
  add_override(train, "--lambda-pc", "lambda_pc");
  add_override(train, "--lambda-ps", "lambda_ps");
  add_override(train, "--lambda-rec", "lambda_rec");
  add_override(train, "--lambda-com", "lambda_com");
  add_override(train, "--checkpoint-every", "checkpoint_every");

  // stylize
  StylizeArgs sa;
  auto* stylize = app.add_subcommand("stylize", "stylize one content image");
  stylize->add_option("--content", sa.content_path)->required();
  stylize->add_option("--style", sa.style_paths)->required();
  stylize->add_option("--checkpoint", sa.checkpoint);
  stylize->add_option("--alpha", sa.alpha);
  stylize->add_option("--mask", sa.mask_path);
  stylize->add_option("--output", sa.output);
  stylize->add_flag("--all-outputs", sa.all_outputs);

  // video
  VideoArgs va;
  auto* video = app.add_subcommand("video", "stylize a directory of frames");
  video->add_option("--frames", va.frames_dir)->required();
  video->add_option("--style", va.style_path)->required();
  video->add_option("--checkpoint", va.checkpoint);
  video->add_option("--out-dir", va.out_dir)->required();
  video->add_option("--alpha", va.alpha);
  bool per_frame = false;
  video->add_flag("--per-frame-codes", per_frame,
                  "recompute exchangeable features per frame (default)");
  video->add_flag("--first-frame-codes", va.first_frame_codes,
                  "compute exchangeable features once from the first frame");

  // evaluate
  std::string pairs_path, eval_ckpt;
  bool eval_json = false;
  auto* evaluate = app.add_subcommand("evaluate", "perceptual-loss report");
  evaluate->add_option("--pairs", pairs_path)->required();
  evaluate->add_option("--checkpoint", eval_ckpt);
  evaluate->add_flag("--json", eval_json);

  // bench
  std::string bench_ckpt;
  std::vector<int> bench_sizes{256, 512, 1024};
  int bench_repeats = 3;
  bool bench_json = false;
  auto* bench = app.add_subcommand("bench", "runtime report");
  bench->add_option("--checkpoint", bench_ckpt);
  bench->add_option("--sizes", bench_sizes)->delimiter(',');
  bench->add_option("--repeats", bench_repeats);
  bench->add_flag("--json", bench_json);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (threads > 0) {
      omp_set_num_threads(threads);
      Eigen::setNbThreads(threads);
    }
    if (train->parsed()) return cmd_train(config_path, overrides);
    if (stylize->parsed()) return cmd_stylize(sa);
    if (video->parsed()) return cmd_video(va);
    if (evaluate->parsed()) return cmd_evaluate(pairs_path, eval_ckpt, eval_json);
    if (bench->parsed())
      return cmd_bench(bench_ckpt, bench_sizes, bench_repeats, bench_json);
  } catch (const value_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const mask_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const dimension_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
