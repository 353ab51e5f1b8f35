// seqvc/inference.hpp
//
// Conversion: the autoregressive recursion, its forward-attention variant
// (per-column windows around the previous attention peak), the sliding
// real-time path with identity attention, and output moment matching.

// Copyright 2026  seqvc authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef SEQVC_INFERENCE_HPP_
#define SEQVC_INFERENCE_HPP_

#include "seqvc/model.hpp"
#include "seqvc/trainer.hpp"

namespace seqvc {

// Backward/forward windows in reduced frames, from 160 ms and 320 ms at
// the model's reduced frame period (round half up).
struct ForwardAttentionConfig {
  int n0 = 7;
  int n1 = 13;

  ForwardAttentionConfig() = default;
  explicit ForwardAttentionConfig(double reduced_period_ms) {
    n0 = std::max(1, static_cast<int>(std::llround(160.0 / reduced_period_ms)));
    n1 = std::max(1, static_cast<int>(std::llround(320.0 / reduced_period_ms)));
  }
};

struct ConvertOptions {
  int max_steps = 0;              // 0: ceil(1.5 N) + 10
  int stop_patience = 5;          // stop after the peak rests on the last frame
  bool forward_attention = false;
  ForwardAttentionConfig fa;
};

struct ConversionResult {
  // Normalized stacked feature space, no position encodings.
  FeatureSequence y_dec;      // decoder route, one frame per step
  FeatureSequence y_rec;      // reconstructor route (initial slot dropped)
  std::vector<real> attention;  // N x M, column per step (column-stochastic)
  int attn_rows = 0, attn_cols = 0;
  std::vector<int> peaks;     // attention argmax per step
};

namespace detail {

inline void add_position_encoding_column(std::vector<real> &col, int pos) {
  const int dim = static_cast<int>(col.size());
  for (int c = 0; c < dim; ++c) col[static_cast<std::size_t>(c)] += position_encoding_value(pos, c, dim);
}

}  // namespace detail

// Autoregressive conversion. x is the normalized, stacked,
// position-encoded source; speakers are mode-dependent (empty in pairwise
// and for the any-to-many source side). Runs in eval mode and leaves all
// parameters untouched.
inline ConversionResult convert(Model &model, const FeatureSequence &x, const Speakers &src_spk,
                                const Speakers &trg_spk, const ConvertOptions &opts = {}) {
  require(x.length >= 1, "convert: empty input");
  require_shape(x.dim == model.cfg.feature_dim_stacked(), "convert: feature dim mismatch");
  NoGradScope ng;
  Rng rng(0);  // eval mode draws nothing
  const int n_src = x.length;
  const int d = x.dim;
  const int max_steps = opts.max_steps > 0
                            ? opts.max_steps
                            : static_cast<int>(std::ceil(1.5 * n_src)) + 10;

  auto xt = make_tensor({1, d, n_src});
  for (int i = 0; i < d; ++i)
    std::memcpy(&xt->v[static_cast<std::size_t>(i) * n_src],
                &x.data[static_cast<std::size_t>(i) * n_src],
                sizeof(real) * static_cast<std::size_t>(n_src));
  auto [kb, vb] = model.encode_source(xt, src_spk, false, rng);
  auto k2 = item_window(kb, 0, 0, n_src);
  auto v2 = item_window(vb, 0, 0, n_src);

  // generated prefix, raw (no position encodings); starts with the
  // all-zero initial frame
  std::vector<std::vector<real>> prefix{std::vector<real>(static_cast<std::size_t>(d), real(0))};
  std::vector<real> a_cols;  // masked attention, column-major growth
  std::vector<int> peaks;
  ConversionResult out;
  int rest = 0;
  int steps = 0;

  for (int m = 1; m <= max_steps; ++m) {
    const int plen = static_cast<int>(prefix.size());
    auto yt = make_tensor({1, d, plen});
    for (int t = 0; t < plen; ++t) {
      auto col = prefix[static_cast<std::size_t>(t)];
      detail::add_position_encoding_column(col, t);
      for (int i = 0; i < d; ++i) yt->v[static_cast<std::size_t>(i) * plen + t] = col[static_cast<std::size_t>(i)];
    }
    auto q = model.encode_target(yt, trg_spk, false, rng);
    auto a_full = attend(k2, item_window(q, 0, 0, plen));
    // fresh column for this step (causal Q keeps earlier columns stable)
    std::vector<real> col(static_cast<std::size_t>(n_src));
    for (int n = 0; n < n_src; ++n)
      col[static_cast<std::size_t>(n)] = a_full->v[static_cast<std::size_t>(n) * plen + (plen - 1)];
    if (opts.forward_attention && m > 1) {
      const int peak = peaks.back();
      // zero up to max(1, peak1b - N0) and from min(peak1b + N1, N), both
      // 1-based inclusive per the recursion's masking rule
      const int lo_hi = std::max(0, std::max(1, peak + 1 - opts.fa.n0) - 1);
      const int hi_lo = std::min(peak + 1 + opts.fa.n1, n_src) - 1;
      for (int n = 0; n <= lo_hi; ++n) col[static_cast<std::size_t>(n)] = 0;
      for (int n = hi_lo; n < n_src; ++n) col[static_cast<std::size_t>(n)] = 0;
      real sum = 0;
      for (real c : col) sum += c;
      if (!(sum > 0)) throw NumericError("convert: forward attention window degenerated");
      for (auto &c : col) c /= sum;
    }
    int peak = 0;
    for (int n = 1; n < n_src; ++n)
      if (col[static_cast<std::size_t>(n)] > col[static_cast<std::size_t>(peak)]) peak = n;
    peaks.push_back(peak);
    a_cols.insert(a_cols.end(), col.begin(), col.end());
    ++steps;

    // R = V A over the masked matrix accumulated so far
    auto a_mat = make_tensor({n_src, steps});
    for (int n = 0; n < n_src; ++n)
      for (int mm = 0; mm < steps; ++mm)
        a_mat->v[static_cast<std::size_t>(n) * steps + mm] =
            a_cols[static_cast<std::size_t>(mm) * n_src + n];
    auto r = warp(v2, a_mat);
    auto y = model.decode(stack_items({r}, steps), trg_spk, false, rng);
    prefix.emplace_back(static_cast<std::size_t>(d), real(0));
    for (int i = 0; i < d; ++i)
      prefix.back()[static_cast<std::size_t>(i)] =
          y->v[static_cast<std::size_t>(i) * steps + (steps - 1)];

    if (peak == n_src - 1) {
      if (++rest >= opts.stop_patience) break;
    } else {
      rest = 0;
    }
  }

  // final attention matrix and reconstructor output
  auto a_mat = make_tensor({n_src, steps});
  for (int n = 0; n < n_src; ++n)
    for (int mm = 0; mm < steps; ++mm)
      a_mat->v[static_cast<std::size_t>(n) * steps + mm] =
          a_cols[static_cast<std::size_t>(mm) * n_src + n];
  auto r = warp(v2, a_mat);
  auto y_rec = model.reconstruct(stack_items({r}, steps), trg_spk, false, rng);

  out.attn_rows = n_src;
  out.attn_cols = steps;
  out.attention.assign(static_cast<std::size_t>(n_src) * steps, 0);
  for (int n = 0; n < n_src; ++n)
    for (int mm = 0; mm < steps; ++mm)
      out.attention[static_cast<std::size_t>(n) * steps + mm] =
          a_cols[static_cast<std::size_t>(mm) * n_src + n];
  out.peaks = peaks;

  out.y_dec = FeatureSequence(d, steps, x.frame_period_ms);
  out.y_dec.reduced = true;
  for (int t = 0; t < steps; ++t)
    for (int i = 0; i < d; ++i)
      out.y_dec.at(i, t) = prefix[static_cast<std::size_t>(t) + 1][static_cast<std::size_t>(i)];
  // reconstructor output column 0 rebuilds the all-zero initial slot; the
  // content frames follow it
  const int rec_len = std::max(1, steps - 1);
  out.y_rec = FeatureSequence(d, rec_len, x.frame_period_ms);
  out.y_rec.reduced = true;
  for (int t = 0; t < rec_len; ++t)
    for (int i = 0; i < d; ++i)
      out.y_rec.at(i, t) = y_rec->v[static_cast<std::size_t>(i) * steps + std::min(t + 1, steps - 1)];
  return out;
}

inline ConversionResult convert_forward(Model &model, const FeatureSequence &x,
                                        const Speakers &src_spk, const Speakers &trg_spk,
                                        const ForwardAttentionConfig &fa, int max_steps = 0) {
  ConvertOptions opts;
  opts.forward_attention = true;
  opts.fa = fa;
  opts.max_steps = max_steps;
  return convert(model, x, src_spk, trg_spk, opts);
}

// Real-time conversion: identity attention, so R = V and the whole pass is
// one causal sweep. Output length equals input length.
inline ConversionResult convert_realtime(Model &model, const FeatureSequence &x,
                                         const Speakers &src_spk, const Speakers &trg_spk) {
  if (model.cfg.mode != ModelMode::kRealtime)
    throw ModeError("convert_realtime: model not trained in real-time configuration");
  require(x.length >= 1, "convert_realtime: empty input");
  NoGradScope ng;
  Rng rng(0);
  const int n = x.length, d = x.dim;
  auto xt = make_tensor({1, d, n});
  for (int i = 0; i < d; ++i)
    std::memcpy(&xt->v[static_cast<std::size_t>(i) * n], &x.data[static_cast<std::size_t>(i) * n],
                sizeof(real) * static_cast<std::size_t>(n));
  auto [kb, vb] = model.encode_source(xt, src_spk, false, rng);
  auto y_dec = model.decode(vb, trg_spk, false, rng);
  auto y_rec = model.reconstruct(vb, trg_spk, false, rng);
  ConversionResult out;
  out.y_dec = FeatureSequence(d, n, x.frame_period_ms);
  out.y_rec = FeatureSequence(d, n, x.frame_period_ms);
  out.y_dec.reduced = out.y_rec.reduced = true;
  for (int i = 0; i < d; ++i)
    for (int t = 0; t < n; ++t) {
      out.y_dec.at(i, t) = y_dec->v[static_cast<std::size_t>(i) * n + t];
      out.y_rec.at(i, t) = y_rec->v[static_cast<std::size_t>(i) * n + t];
    }
  out.attn_rows = out.attn_cols = n;
  out.attention.assign(static_cast<std::size_t>(n) * n, 0);
  for (int i = 0; i < n; ++i) out.attention[static_cast<std::size_t>(i) * n + i] = 1;
  out.peaks.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out.peaks[static_cast<std::size_t>(i)] = i;
  return out;
}

// ---------------------------------------------------------------------------
// Moment matching: affine-rescale each MCC/log-F0 channel so voiced-frame
// statistics match the target profile, then denormalize. Expects unstacked
// frames in normalized space; the output V/UV channel is binarized.

inline FeatureSequence moment_match(const FeatureSequence &y, const SpeakerProfile &profile,
                                    int num_mcc) {
  require_shape(y.dim == feature_dim(num_mcc), "moment_match: dim mismatch");
  std::vector<int> voiced;
  for (int n = 0; n < y.length; ++n)
    if (frame_is_voiced(y, num_mcc, n)) voiced.push_back(n);
  if (voiced.empty()) throw DataError("moment_match: no voiced frames detected");
  FeatureSequence rescaled = y;
  for (int i = 0; i <= num_mcc; ++i) {
    double mean = 0;
    for (int n : voiced) mean += y.at(i, n);
    mean /= static_cast<double>(voiced.size());
    double var = 0;
    for (int n : voiced) var += (y.at(i, n) - mean) * (y.at(i, n) - mean);
    const double sd = std::max(std::sqrt(var / static_cast<double>(voiced.size())), 1e-6);
    for (int n = 0; n < y.length; ++n)
      rescaled.at(i, n) = static_cast<real>((y.at(i, n) - mean) / sd);
  }
  auto out = denormalize(rescaled, profile, num_mcc);
  for (int n = 0; n < out.length; ++n)
    out.at(vuv_channel(num_mcc), n) = out.at(vuv_channel(num_mcc), n) > real(0.5) ? 1 : 0;
  return out;
}

// ---------------------------------------------------------------------------
// Whole-utterance pipeline helpers

enum class OutputRoute { kAuto, kReconstructor, kDecoder };

// Normalizes, stacks, and position-encodes a raw utterance for the source
// encoder.
inline FeatureSequence prepare_source(const FeatureSequence &raw, const SpeakerProfile &profile,
                                      int num_mcc, int reduction) {
  auto interp = interpolate_logf0(raw, num_mcc);
  auto norm = normalize(interp, profile, num_mcc);
  return add_position_encoding(stack_reduce(norm, reduction));
}

struct UtteranceConversion {
  ConversionResult raw;        // normalized stacked space
  FeatureSequence converted;   // unstacked, moment-matched, denormalized
  OutputRoute route_used = OutputRoute::kReconstructor;
};

// Full conversion of one raw utterance. src_name empty (any-to-many mode)
// normalizes by the utterance's own voiced-frame statistics.
inline UtteranceConversion convert_utterance(Model &model, const FeatureSequence &raw_src,
                                             const std::string &src_name,
                                             const std::string &trg_name,
                                             const ConvertOptions &opts = {},
                                             OutputRoute route = OutputRoute::kAuto) {
  const int num_mcc = model.cfg.num_mcc;
  int src_idx = -1, trg_idx = -1;
  for (std::size_t i = 0; i < model.profiles.size(); ++i) {
    if (model.profiles[i].name == src_name) src_idx = static_cast<int>(i);
    if (model.profiles[i].name == trg_name) trg_idx = static_cast<int>(i);
  }
  require(trg_idx >= 0, "convert_utterance: unknown target speaker '" + trg_name + "'");
  SpeakerProfile src_profile;
  if (model.cfg.mode == ModelMode::kAnyToMany && src_name.empty()) {
    auto interp = interpolate_logf0(raw_src, num_mcc);
    src_profile = compute_speaker_stats({&interp}, num_mcc);
  } else {
    require(src_idx >= 0, "convert_utterance: unknown source speaker '" + src_name + "'");
    src_profile = model.profiles[static_cast<std::size_t>(src_idx)];
  }
  auto x = prepare_source(raw_src, src_profile, num_mcc, model.cfg.reduction);

  Speakers src_spk, trg_spk;
  switch (model.cfg.mode) {
    case ModelMode::kPairwise:
      break;
    case ModelMode::kAnyToMany:
      trg_spk = {trg_idx};
      break;
    case ModelMode::kManyToMany:
    case ModelMode::kRealtime:
      require(src_idx >= 0, "convert_utterance: source speaker required");
      src_spk = {src_idx};
      trg_spk = {trg_idx};
      break;
  }

  UtteranceConversion out;
  out.raw = model.cfg.mode == ModelMode::kRealtime
                ? convert_realtime(model, x, src_spk, trg_spk)
                : convert(model, x, src_spk, trg_spk, opts);
  OutputRoute used = route;
  if (used == OutputRoute::kAuto)
    used = model.rec_trained ? OutputRoute::kReconstructor : OutputRoute::kDecoder;
  out.route_used = used;
  const FeatureSequence &sel =
      used == OutputRoute::kReconstructor ? out.raw.y_rec : out.raw.y_dec;
  auto unstacked = unstack(sel, model.cfg.reduction, sel.length * model.cfg.reduction);
  out.converted = moment_match(unstacked, model.profiles[static_cast<std::size_t>(trg_idx)], num_mcc);
  return out;
}

}  // namespace seqvc

#endif  // SEQVC_INFERENCE_HPP_
