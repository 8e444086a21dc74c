#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>

#include "exstyle/checkpoint.hpp"
#include "exstyle/dataset.hpp"
#include "exstyle/losses.hpp"
#include "exstyle/model.hpp"
#include "exstyle/optimizer.hpp"

/// @file training.hpp The optimization loop: per-pair forward graph with all
/// caches, hand-wired backward pass, Adam updates, logging and periodic
/// checkpointing. Gradients never flow into the frozen encoder weights; the
/// perceptual terms only propagate through it back to the generated images.

namespace exstyle {

template <typename Scalar>
struct PairState {
  // analysis
  std::array<FeatureMap<Scalar>, 4> taps_c, taps_s;  // targets; [3] is f_vgg
  typename CovCompressor<Scalar>::Cache comp_c, comp_s;
  Vec<Scalar> f_c, f_s;
  typename UniqueInit<Scalar>::Cache uc_cache, us_cache;
  typename CommonInit<Scalar>::Cache ci_cache;
  typename ExchangeChain<Scalar>::Cache chain_cache;
  ExchangeTriple<Scalar> refined;
  typename FusionHeads<Scalar>::Cache hc_cache, hs_cache;
  FusionVectors<Scalar> heads_c, heads_s;
  FeatureMap<Scalar> pur_c, pur_s;
  // branch B (content = I_c) and branch A (content = I_s)
  typename Decoder<Scalar>::PreCache pre_b, pre_a;
  FeatureMap<Scalar> h_c, h_s;
  typename Decoder<Scalar>::FuseCache fc_sc, fc_cc, fc_cs, fc_ss;
  FeatureMap<Scalar> R_sc, R_cc, R_cs, R_ss;
  typename DecoderTail<Scalar>::Cache tail_sc, tail_cc, tail_cs, tail_ss;
  FeatureMap<Scalar> rgb_sc, rgb_cc, rgb_cs, rgb_ss;  // pre-clamp
  ImageTensor<Scalar> img_sc, img_cc, img_cs, img_ss;
  // perceptual encodes of the stylized outputs
  typename Encoder<Scalar>::Cache enc_sc, enc_cs;
  std::array<FeatureMap<Scalar>, 4> taps_sc, taps_cs;
  LossBreakdown parts;  // unweighted per-pair terms
};

namespace detail {

template <typename Scalar>
ImageTensor<Scalar> clamp_unit(const FeatureMap<Scalar>& rgb) {
  ImageTensor<Scalar> img(rgb.grid_h, rgb.grid_w);
  img.data = rgb.data.cwiseMax(Scalar(0)).cwiseMin(Scalar(1));
  return img;
}

/// Gradient gate of the [0,1] clamp.
template <typename Scalar>
FeatureMap<Scalar> clamp_backward(const FeatureMap<Scalar>& rgb, const Mat<Scalar>& dimg) {
  FeatureMap<Scalar> d(rgb.grid_h, rgb.grid_w, 3);
  d.data = ((rgb.data.array() >= Scalar(0)) && (rgb.data.array() <= Scalar(1)))
               .template cast<Scalar>() *
           dimg.array();
  return d;
}

}  // namespace detail

/// Forward pass of the whole pair pipeline with caches for backward.
template <typename Scalar>
void forward_pair(Model<Scalar>& model, const ImageTensor<Scalar>& I_c,
                  const ImageTensor<Scalar>& I_s, PairState<Scalar>& st) {
  check_dim(I_c.height % kEncoderStride == 0 && I_c.width % kEncoderStride == 0 &&
                I_s.height % kEncoderStride == 0 && I_s.width % kEncoderStride == 0,
            "training patches must be multiples of the encoder stride");
  st.taps_c = model.encoder.forward_multi(I_c);
  st.taps_s = model.encoder.forward_multi(I_s);
  const FeatureMap<Scalar>& f_vgg_c = st.taps_c[3];
  const FeatureMap<Scalar>& f_vgg_s = st.taps_s[3];

  st.f_c = model.compressor.forward(covariance(f_vgg_c), &st.comp_c);
  st.f_s = model.compressor.forward(covariance(f_vgg_s), &st.comp_s);
  ExchangeTriple<Scalar> t0{model.common_init.forward(st.f_c, st.f_s, &st.ci_cache),
                            model.uniq_c.forward(st.f_c, &st.uc_cache),
                            model.uniq_s.forward(st.f_s, &st.us_cache)};
  st.refined = model.chain.forward(t0, &st.chain_cache);
  st.heads_c = model.heads.forward(st.refined.common, st.f_c, &st.hc_cache);
  st.heads_s = model.heads.forward(st.refined.common, st.f_s, &st.hs_cache);
  st.pur_c = purify(f_vgg_c, st.heads_c.v_w);
  st.pur_s = purify(f_vgg_s, st.heads_s.v_w);

  st.h_c = model.dec_b.pre_fusion(st.pur_c, &st.pre_b);
  st.R_sc = model.dec_b.fuse_for_mode(st.h_c, st.heads_s, &st.fc_sc);
  st.R_cc = model.dec_b.fuse_for_mode(st.h_c, st.heads_c, &st.fc_cc);
  st.rgb_sc = model.dec_b.tail().forward(st.R_sc, &st.tail_sc);
  st.rgb_cc = model.dec_b.tail().forward(st.R_cc, &st.tail_cc);
  st.img_sc = detail::clamp_unit(st.rgb_sc);
  st.img_cc = detail::clamp_unit(st.rgb_cc);

  st.h_s = model.dec_a.pre_fusion(st.pur_s, &st.pre_a);
  st.R_cs = model.dec_a.fuse_for_mode(st.h_s, st.heads_c, &st.fc_cs);
  st.R_ss = model.dec_a.fuse_for_mode(st.h_s, st.heads_s, &st.fc_ss);
  st.rgb_cs = model.dec_a.tail().forward(st.R_cs, &st.tail_cs);
  st.rgb_ss = model.dec_a.tail().forward(st.R_ss, &st.tail_ss);
  st.img_cs = detail::clamp_unit(st.rgb_cs);
  st.img_ss = detail::clamp_unit(st.rgb_ss);

  st.taps_sc = model.encoder.forward_multi(st.img_sc, &st.enc_sc);
  st.taps_cs = model.encoder.forward_multi(st.img_cs, &st.enc_cs);

  st.parts = LossBreakdown{};
  st.parts.content = content_term(st.taps_sc[3], st.taps_c[3]) +
                     content_term(st.taps_cs[3], st.taps_s[3]);
  st.parts.style =
      style_term(st.taps_sc, st.taps_s) + style_term(st.taps_cs, st.taps_c);
  st.parts.rec = mean_abs_diff(st.img_cc.data, I_c.data) +
                 mean_abs_diff(st.img_ss.data, I_s.data);
  st.parts.com =
      feature_exchange_loss(st.refined, st.f_c, st.f_s, model.recon_head_c,
                            model.recon_head_s, &st.parts.orth, &st.parts.com_raw);
}

/// Backward pass; `inv_batch` folds the batch mean into every seed gradient.
template <typename Scalar>
void backward_pair(Model<Scalar>& model, const ImageTensor<Scalar>& I_c,
                   const ImageTensor<Scalar>& I_s, PairState<Scalar>& st,
                   const LossWeights<Scalar>& w, Scalar inv_batch) {
  const Scalar u_pc = w.lambda_pc * inv_batch;
  const Scalar u_ps = w.lambda_ps * inv_batch;
  const Scalar u_rec = w.lambda_rec * inv_batch;
  const Scalar u_com = w.lambda_com * inv_batch;
  const FeatureMap<Scalar>& f_vgg_c = st.taps_c[3];
  const FeatureMap<Scalar>& f_vgg_s = st.taps_s[3];

  // perceptual terms -> gradients w.r.t. the two stylized images
  auto dtaps_sc = style_term_backward(st.taps_sc, st.taps_s, u_ps);
  dtaps_sc[3].data += mean_sq_diff_backward(st.taps_sc[3].data, st.taps_c[3].data, u_pc);
  FeatureMap<Scalar> d_rgb_sc =
      detail::clamp_backward(st.rgb_sc, model.encoder.backward_to_input(st.enc_sc, dtaps_sc));

  auto dtaps_cs = style_term_backward(st.taps_cs, st.taps_c, u_ps);
  dtaps_cs[3].data += mean_sq_diff_backward(st.taps_cs[3].data, st.taps_s[3].data, u_pc);
  FeatureMap<Scalar> d_rgb_cs =
      detail::clamp_backward(st.rgb_cs, model.encoder.backward_to_input(st.enc_cs, dtaps_cs));

  // reconstruction terms -> gradients w.r.t. the two reconstructions
  FeatureMap<Scalar> d_rgb_cc = detail::clamp_backward(
      st.rgb_cc, mean_abs_diff_backward(st.img_cc.data, I_c.data, u_rec));
  FeatureMap<Scalar> d_rgb_ss = detail::clamp_backward(
      st.rgb_ss, mean_abs_diff_backward(st.img_ss.data, I_s.data, u_rec));

  // branch B (content = I_c)
  FeatureMap<Scalar> dR_sc = model.dec_b.tail().backward(st.tail_sc, d_rgb_sc);
  FeatureMap<Scalar> dR_cc = model.dec_b.tail().backward(st.tail_cc, d_rgb_cc);
  FuseGrads<Scalar> g_sc =
      model.dec_b.fuse_for_mode_backward(st.h_c, st.heads_s, st.fc_sc, dR_sc);
  FuseGrads<Scalar> g_cc =
      model.dec_b.fuse_for_mode_backward(st.h_c, st.heads_c, st.fc_cc, dR_cc);
  FeatureMap<Scalar> dh_c = std::move(g_sc.df);
  dh_c.data += g_cc.df.data;
  FeatureMap<Scalar> dpur_c = model.dec_b.pre_fusion_backward(st.pre_b, dh_c);
  Vec<Scalar> dvw_c = purify_backward(f_vgg_c, st.heads_c.v_w, dpur_c);

  // branch A (content = I_s)
  FeatureMap<Scalar> dR_cs = model.dec_a.tail().backward(st.tail_cs, d_rgb_cs);
  FeatureMap<Scalar> dR_ss = model.dec_a.tail().backward(st.tail_ss, d_rgb_ss);
  FuseGrads<Scalar> g_cs =
      model.dec_a.fuse_for_mode_backward(st.h_s, st.heads_c, st.fc_cs, dR_cs);
  FuseGrads<Scalar> g_ss =
      model.dec_a.fuse_for_mode_backward(st.h_s, st.heads_s, st.fc_ss, dR_ss);
  FeatureMap<Scalar> dh_s = std::move(g_cs.df);
  dh_s.data += g_ss.df.data;
  FeatureMap<Scalar> dpur_s = model.dec_a.pre_fusion_backward(st.pre_a, dh_s);
  Vec<Scalar> dvw_s = purify_backward(f_vgg_s, st.heads_s.v_w, dpur_s);

  // fusion heads: v_w from purification, v_c/v_r from every fuse that used them
  FusionVectors<Scalar> dheads_c{dvw_c, g_cc.dv_c + g_cs.dv_c, g_cc.dv_r + g_cs.dv_r};
  auto [dcom_c, dfc_heads] = model.heads.backward(st.hc_cache, dheads_c);
  FusionVectors<Scalar> dheads_s{dvw_s, g_ss.dv_c + g_sc.dv_c, g_ss.dv_r + g_sc.dv_r};
  auto [dcom_s, dfs_heads] = model.heads.backward(st.hs_cache, dheads_s);

  // feature exchange loss on the last block's output
  ExchangeLossGrads<Scalar> gx = feature_exchange_loss_backward(
      st.refined, st.f_c, st.f_s, model.recon_head_c, model.recon_head_s, u_com);
  ExchangeTriple<Scalar> dtN = std::move(gx.dt);
  dtN.common += dcom_c + dcom_s;
  ExchangeTriple<Scalar> dt0 = model.chain.backward(st.chain_cache, dtN);

  Vec<Scalar> df_c = dfc_heads + gx.df_c + model.uniq_c.backward(st.uc_cache, dt0.unique_c);
  Vec<Scalar> df_s = dfs_heads + gx.df_s + model.uniq_s.backward(st.us_cache, dt0.unique_s);
  auto [dfc_ci, dfs_ci] = model.common_init.backward(st.ci_cache, dt0.common);
  df_c += dfc_ci;
  df_s += dfs_ci;
  model.compressor.backward(st.comp_c, df_c);
  model.compressor.backward(st.comp_s, df_s);
}

/// One optimizer step over a batch: mean loss, accumulated gradients, one
/// adaptive-moment update. Encoder weights are untouched.
template <typename Scalar>
LossBreakdown train_step(Model<Scalar>& model, const std::vector<TrainPair<Scalar>>& batch,
                         Adam<Scalar>& optimizer, const LossWeights<Scalar>& w) {
  check_arg(!batch.empty(), "empty batch");
  ParamRefs<Scalar> params = model.trainable_params();
  for (auto* p : params) p->zero_grad();

  const Scalar inv_batch = Scalar(1) / Scalar(batch.size());
  double content = 0, style = 0, rec = 0, com = 0, orth = 0, raw = 0;
  PairState<Scalar> st;
  for (const auto& pair : batch) {
    forward_pair(model, pair.content, pair.style, st);
    const LossBreakdown& p = st.parts;
    if (!std::isfinite(p.content + p.style + p.rec + p.com))
      throw training_abort(
          "non-finite loss on pair (" + pair.content_path + ", " + pair.style_path +
          "): content=" + std::to_string(p.content) + " style=" + std::to_string(p.style) +
          " rec=" + std::to_string(p.rec) + " com=" + std::to_string(p.com));
    content += p.content;
    style += p.style;
    rec += p.rec;
    com += p.com;
    orth += p.orth;
    raw += p.com_raw;
    backward_pair(model, pair.content, pair.style, st, w, inv_batch);
  }
  const double n = double(batch.size());
  LossBreakdown b = total_loss(content / n, style / n, rec / n, com / n, w);
  b.orth = orth / n;
  b.com_raw = raw / n;
  optimizer.step(params);
  return b;
}

// ---------------------------------------------------------------------------
// Logging
// ---------------------------------------------------------------------------

/// Step log, CSV by default or JSONL when the path ends in .jsonl.
class TrainLogger {
 public:
  TrainLogger(const std::string& path, bool append) : path_(path) {
    jsonl_ = path.size() >= 6 && path.substr(path.size() - 6) == ".jsonl";
    const bool existed = std::filesystem::exists(path);
    out_.open(path, append ? std::ios::app : std::ios::trunc);
    if (!out_) throw data_error("cannot open training log: " + path);
    if (!jsonl_ && (!append || !existed))
      out_ << "step,content,style,rec,com,total,wall_ms,orth,com_raw\n";
  }

  void log(long long step, const LossBreakdown& b, double wall_ms) {
    char line[512];
    if (jsonl_) {
      std::snprintf(line, sizeof line,
                    "{\"step\":%lld,\"content\":%.9g,\"style\":%.9g,\"rec\":%.9g,"
                    "\"com\":%.9g,\"total\":%.9g,\"wall_ms\":%.3f,\"orth\":%.9g,"
                    "\"com_raw\":%.9g}\n",
                    step, b.content, b.style, b.rec, b.com, b.total, wall_ms, b.orth,
                    b.com_raw);
    } else {
      std::snprintf(line, sizeof line, "%lld,%.9g,%.9g,%.9g,%.9g,%.9g,%.3f,%.9g,%.9g\n",
                    step, b.content, b.style, b.rec, b.com, b.total, wall_ms, b.orth,
                    b.com_raw);
    }
    out_ << line;
    out_.flush();
  }

 private:
  std::string path_;
  std::ofstream out_;
  bool jsonl_ = false;
};

// ---------------------------------------------------------------------------
// Loop
// ---------------------------------------------------------------------------

struct TrainResult {
  std::string checkpoint_path;
  LossBreakdown last;
  long long steps_run = 0;
};

/// Runs (or resumes) training per the config and leaves a final checkpoint.
/// The loss trajectory is reproducible for a fixed seed; interrupting and
/// resuming from a checkpoint replays the identical batch sequence.
template <typename Scalar>
TrainResult train_loop(const TrainConfig& cfg,
                       std::function<void(long long, const LossBreakdown&)> on_step = {}) {
  cfg.validate();
  check_arg(cfg.patch % kEncoderStride == 0,
            "patch size must be a multiple of the encoder stride (8)");
  std::filesystem::create_directories(cfg.checkpoint_dir);
  ImageFolder<Scalar> content_set(cfg.content_dir);
  ImageFolder<Scalar> style_set(cfg.style_dir);

  typename Model<Scalar>::Settings settings;
  settings.fusion_mode = fusion_mode_from_string(cfg.fusion_mode);
  settings.block_count = cfg.block_count;
  settings.shared_block = cfg.shared_block;

  Adam<Scalar> optimizer(cfg.learning_rate);
  long long start = 0;
  Model<Scalar> model(settings);
  if (!cfg.resume.empty()) {
    CheckpointInfo info;
    model = load_checkpoint<Scalar>(cfg.resume, &optimizer, &info);
    start = info.iteration;
  } else {
    model.init(cfg.seed);
    if (!cfg.encoder_weights.empty()) load_encoder_weights(cfg.encoder_weights, model);
  }
  optimizer.attach(model.trainable_params());

  const std::uint64_t enc_sum = model.encoder_checksum();
  const std::string log_path =
      cfg.log_file.empty() ? cfg.checkpoint_dir + "/train_log.csv" : cfg.log_file;
  TrainLogger logger(log_path, /*append=*/start > 0);

  const LossWeights<Scalar> w{Scalar(cfg.lambda_pc), Scalar(cfg.lambda_ps),
                              Scalar(cfg.lambda_rec), Scalar(cfg.lambda_com)};
  TrainResult result;
  for (long long step = start + 1; step <= cfg.iterations; ++step) {
    const auto batch = sample_batch(content_set, style_set, cfg, step);
    const auto t0 = std::chrono::steady_clock::now();
    result.last = train_step(model, batch, optimizer, w);
    const double wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
            .count();
    logger.log(step, result.last, wall_ms);
    if (on_step) on_step(step, result.last);
    ++result.steps_run;
    if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 &&
        step != cfg.iterations) {
      char name[64];
      std::snprintf(name, sizeof name, "/checkpoint_%08lld.exst", step);
      CheckpointExtras<Scalar> extras{&optimizer, step, cfg.to_json()};
      save_checkpoint(model, cfg.checkpoint_dir + name, extras);
    }
  }
  if (model.encoder_checksum() != enc_sum)
    throw training_abort("frozen encoder weights changed during training");
  CheckpointExtras<Scalar> extras{&optimizer, cfg.iterations, cfg.to_json()};
  result.checkpoint_path = cfg.checkpoint_dir + "/checkpoint_final.exst";
  save_checkpoint(model, result.checkpoint_path, extras);
  return result;
}

}  // namespace exstyle
