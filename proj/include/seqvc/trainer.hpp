// seqvc/trainer.hpp
//
// Training: corpus preparation (normalize, stack, position-encode, prepend
// the all-zero initial target frame), length-bucketed mini-batching of
// variable-length parallel utterances, bias-corrected Adam with global
// gradient clipping, the training loop, and bit-exact checkpointing.

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

#ifndef SEQVC_TRAINER_HPP_
#define SEQVC_TRAINER_HPP_

#include <map>
#include <sstream>

#include "seqvc/corpus.hpp"
#include "seqvc/losses.hpp"

namespace seqvc {

struct TrainConfig {
  int batch_size = 16;
  long iterations = 2000;  // desk-scale; the full-size regime runs 25000
  real learning_rate = real(1.5e-4);
  real beta1 = real(0.9);
  real beta2 = real(0.999);
  real adam_eps = real(1e-8);
  real grad_clip = real(5.0);
  std::uint64_t seed = 1;
  long checkpoint_every = 500;
  double bucket_tolerance = 0.25;  // batch items within +-25% of anchor length
  std::string src_speaker, trg_speaker;  // pairwise mode data selection
  LossWeights weights;

  void validate() const {
    require(batch_size >= 1, "train config: batch size must be positive");
    require(iterations >= 0, "train config: negative iterations");
    require(learning_rate > 0, "train config: learning rate must be positive");
    weights.validate();
  }
};

// ---------------------------------------------------------------------------
// Corpus preparation

inline FeatureSequence prepend_zero_frame(const FeatureSequence &s) {
  FeatureSequence out(s.dim, s.length + 1, s.frame_period_ms);
  out.reduced = s.reduced;
  out.orig_length = s.orig_length;
  for (int i = 0; i < s.dim; ++i)
    for (int n = 0; n < s.length; ++n) out.at(i, n + 1) = s.at(i, n);
  return out;
}

struct PreparedUtterance {
  FeatureSequence src_in;   // normalized, stacked, position-encoded
  FeatureSequence trg_in;   // zero frame prepended, then position-encoded
  FeatureSequence trg_ref;  // zero frame prepended, no position encoding
};

struct PreparedCorpus {
  Manifest manifest;
  std::vector<SpeakerProfile> profiles;  // indexed like manifest.speakers
  std::map<std::pair<std::string, int>, PreparedUtterance> items;
  std::vector<std::string> train_sentences, eval_sentences;
  std::map<std::string, int> sentence_mean_len;  // reduced frames
  int num_mcc = 28;
  int reduction = 3;

  const PreparedUtterance &item(const std::string &sentence, int speaker) const {
    auto it = items.find({sentence, speaker});
    if (it == items.end())
      throw DataError("no utterance for sentence " + sentence + " speaker " +
                      manifest.speakers[static_cast<std::size_t>(speaker)]);
    return it->second;
  }
};

// Loads every manifest utterance, computes per-speaker voiced-frame
// statistics over the train split, and caches model-ready streams.
inline PreparedCorpus prepare_corpus(const Manifest &manifest, int num_mcc, int reduction) {
  PreparedCorpus pc;
  pc.manifest = manifest;
  pc.num_mcc = num_mcc;
  pc.reduction = reduction;
  require(!manifest.speakers.empty(), "prepare_corpus: no speakers");

  std::map<std::pair<std::string, int>, FeatureSequence> raw;
  for (const auto &e : manifest.entries) {
    const int spk = manifest.speaker_index(e.speaker);
    raw.emplace(std::make_pair(e.sentence, spk),
                interpolate_logf0(read_fseq(manifest.resolve(e.path)), num_mcc));
  }
  for (std::size_t k = 0; k < manifest.speakers.size(); ++k) {
    std::vector<const FeatureSequence *> slice;
    for (const auto &e : manifest.entries)
      if (e.split == "train" && manifest.speaker_index(e.speaker) == static_cast<int>(k))
        slice.push_back(&raw.at({e.sentence, static_cast<int>(k)}));
    require(!slice.empty(),
            "prepare_corpus: speaker " + manifest.speakers[k] + " has no training data");
    pc.profiles.push_back(compute_speaker_stats(slice, num_mcc, static_cast<int>(k),
                                                manifest.speakers[k]));
  }
  std::map<std::string, std::pair<long, int>> len_acc;
  for (const auto &e : manifest.entries) {
    const int spk = manifest.speaker_index(e.speaker);
    const auto &r = raw.at({e.sentence, spk});
    auto norm = normalize(r, pc.profiles[static_cast<std::size_t>(spk)], num_mcc);
    auto stacked = stack_reduce(norm, reduction);
    PreparedUtterance u;
    u.src_in = add_position_encoding(stacked);
    auto shifted = prepend_zero_frame(stacked);
    u.trg_in = add_position_encoding(shifted);
    u.trg_ref = shifted;
    pc.items.emplace(std::make_pair(e.sentence, spk), std::move(u));
    auto &acc = len_acc[e.sentence];
    acc.first += stacked.length;
    acc.second += 1;
  }
  for (const auto &[sid, acc] : len_acc)
    pc.sentence_mean_len[sid] = static_cast<int>(acc.first / acc.second);
  pc.train_sentences = manifest.sentences("train");
  pc.eval_sentences = manifest.sentences("eval");
  return pc;
}

// ---------------------------------------------------------------------------
// Batching

namespace detail {

inline void copy_into_batch(const FeatureSequence &s, const TensorPtr &dst, int item) {
  const int d = dst->dim(1), t_max = dst->dim(2);
  require_shape(s.dim == d && s.length <= t_max, "copy_into_batch: shape mismatch");
  for (int i = 0; i < d; ++i)
    std::memcpy(&dst->v[(static_cast<std::size_t>(item) * d + i) * t_max],
                &s.data[static_cast<std::size_t>(i) * s.length],
                sizeof(real) * static_cast<std::size_t>(s.length));
}

}  // namespace detail

// Samples B sentences within the length bucket of a uniformly drawn anchor
// plus an ordered speaker pair per item (uniform over K^2 in the
// multi-speaker modes, so k == k' appears with probability 1/K).
inline TrainBatch make_batch(const PreparedCorpus &pc, const ModelConfig &mcfg,
                             const TrainConfig &tcfg, Rng &rng) {
  require(!pc.train_sentences.empty(), "make_batch: no training sentences");
  const int b_count = tcfg.batch_size;
  std::uniform_int_distribution<std::size_t> pick(0, pc.train_sentences.size() - 1);
  const std::string anchor = pc.train_sentences[pick(rng)];
  const int anchor_len = pc.sentence_mean_len.at(anchor);
  std::vector<std::string> bucket;
  for (const auto &sid : pc.train_sentences)
    if (std::abs(pc.sentence_mean_len.at(sid) - anchor_len) <=
        tcfg.bucket_tolerance * anchor_len)
      bucket.push_back(sid);

  struct Draw {
    const PreparedUtterance *src, *trg;
    int k, k2;
  };
  std::vector<Draw> draws;
  std::uniform_int_distribution<std::size_t> pick_bucket(0, bucket.size() - 1);
  const int num_speakers = static_cast<int>(pc.manifest.speakers.size());
  std::uniform_int_distribution<int> pick_speaker(0, num_speakers - 1);
  for (int b = 0; b < b_count; ++b) {
    const std::string sid = b == 0 ? anchor : bucket[pick_bucket(rng)];
    int k, k2;
    if (mcfg.mode == ModelMode::kPairwise) {
      k = pc.manifest.speaker_index(tcfg.src_speaker);
      k2 = pc.manifest.speaker_index(tcfg.trg_speaker);
    } else {
      k = pick_speaker(rng);
      k2 = pick_speaker(rng);
    }
    draws.push_back({&pc.item(sid, k), &pc.item(sid, k2), k, k2});
  }

  int ns_max = 1, nt_max = 1;
  for (const auto &d : draws) {
    ns_max = std::max(ns_max, d.src->src_in.length);
    nt_max = std::max(nt_max, d.trg->trg_in.length);
  }
  TrainBatch batch;
  const int dfeat = mcfg.feature_dim_stacked();
  batch.src = make_tensor({b_count, dfeat, ns_max});
  batch.trg_in = make_tensor({b_count, dfeat, nt_max});
  batch.trg_ref = make_tensor({b_count, dfeat, nt_max});
  for (int b = 0; b < b_count; ++b) {
    const auto &d = draws[static_cast<std::size_t>(b)];
    detail::copy_into_batch(d.src->src_in, batch.src, b);
    detail::copy_into_batch(d.trg->trg_in, batch.trg_in, b);
    detail::copy_into_batch(d.trg->trg_ref, batch.trg_ref, b);
    batch.src_lens.push_back(d.src->src_in.length);
    batch.trg_lens.push_back(d.trg->trg_in.length);
    batch.identity_pair.push_back(d.k == d.k2 ? 1 : 0);
    if (mcfg.mode == ModelMode::kManyToMany || mcfg.mode == ModelMode::kRealtime)
      batch.src_speakers.push_back(d.k);
    if (mcfg.multi_speaker()) batch.trg_speakers.push_back(d.k2);
  }
  return batch;
}

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
  std::vector<std::vector<real>> m, v;
  long step = 0;

  void match(const std::vector<TensorPtr> &params) {
    if (m.size() == params.size()) return;
    m.clear();
    v.clear();
    for (const auto &p : params) {
      m.emplace_back(p->size(), real(0));
      v.emplace_back(p->size(), real(0));
    }
  }
};

// Bias-corrected Adam preceded by global-norm gradient clipping. Raises
// on non-finite gradients before touching any state.
inline void adam_step(const std::vector<TensorPtr> &params, AdamState &state,
                      const TrainConfig &cfg) {
  state.match(params);
  double norm_sq = 0;
  for (const auto &p : params) {
    p->ensure_grad();
    if (!all_finite(p->g)) throw NumericError("adam_step: non-finite gradient");
    for (real g : p->g) norm_sq += static_cast<double>(g) * g;
  }
  real scale = 1;
  const double norm = std::sqrt(norm_sq);
  if (cfg.grad_clip > 0 && norm > static_cast<double>(cfg.grad_clip))
    scale = static_cast<real>(static_cast<double>(cfg.grad_clip) / norm);
  state.step += 1;
  const real bc1 = real(1) - std::pow(cfg.beta1, static_cast<real>(state.step));
  const real bc2 = real(1) - std::pow(cfg.beta2, static_cast<real>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto &p = *params[i];
    auto &m = state.m[i];
    auto &v = state.v[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      const real g = p.g[j] * scale;
      m[j] = cfg.beta1 * m[j] + (real(1) - cfg.beta1) * g;
      v[j] = cfg.beta2 * v[j] + (real(1) - cfg.beta2) * g * g;
      const real mhat = m[j] / bc1;
      const real vhat = v[j] / bc2;
      p.v[j] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_eps);
    }
  }
}

// ---------------------------------------------------------------------------
// Checkpoints: binary container that round-trips bit-exactly and embeds
// the config hash; loading refuses a mismatched hash unless forced.

namespace detail {

inline void put_u32(std::ostream &os, std::uint32_t x) {
  os.write(reinterpret_cast<const char *>(&x), 4);
}
inline void put_u64(std::ostream &os, std::uint64_t x) {
  os.write(reinterpret_cast<const char *>(&x), 8);
}
inline void put_f64(std::ostream &os, double x) {
  os.write(reinterpret_cast<const char *>(&x), 8);
}
inline void put_string(std::ostream &os, const std::string &s) {
  put_u64(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}
inline void put_reals(std::ostream &os, const std::vector<real> &v) {
  put_u64(os, v.size());
  for (real x : v) put_f64(os, static_cast<double>(x));
}
inline std::uint32_t get_u32(std::istream &is) {
  std::uint32_t x = 0;
  is.read(reinterpret_cast<char *>(&x), 4);
  if (!is) throw IoError("checkpoint: truncated");
  return x;
}
inline std::uint64_t get_u64(std::istream &is) {
  std::uint64_t x = 0;
  is.read(reinterpret_cast<char *>(&x), 8);
  if (!is) throw IoError("checkpoint: truncated");
  return x;
}
inline double get_f64(std::istream &is) {
  double x = 0;
  is.read(reinterpret_cast<char *>(&x), 8);
  if (!is) throw IoError("checkpoint: truncated");
  return x;
}
inline std::string get_string(std::istream &is) {
  const std::uint64_t n = get_u64(is);
  if (n > (1ull << 30)) throw IoError("checkpoint: oversized string");
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  if (!is) throw IoError("checkpoint: truncated");
  return s;
}
inline std::vector<real> get_reals(std::istream &is) {
  const std::uint64_t n = get_u64(is);
  if (n > (1ull << 32)) throw IoError("checkpoint: oversized tensor");
  std::vector<real> v(n);
  for (auto &x : v) x = static_cast<real>(get_f64(is));
  return v;
}

inline void put_model_config(std::ostream &os, const ModelConfig &c) {
  put_u32(os, static_cast<std::uint32_t>(c.mode));
  put_u32(os, static_cast<std::uint32_t>(c.num_mcc));
  put_u32(os, static_cast<std::uint32_t>(c.reduction));
  put_f64(os, c.frame_period_ms);
  put_u32(os, static_cast<std::uint32_t>(c.num_speakers));
  put_u32(os, static_cast<std::uint32_t>(c.hidden));
  put_u32(os, static_cast<std::uint32_t>(c.embed_dim));
  put_u32(os, static_cast<std::uint32_t>(c.norm));
  put_f64(os, static_cast<double>(c.dropout_ratio));
  put_u32(os, static_cast<std::uint32_t>(c.groups));
  put_u32(os, static_cast<std::uint32_t>(c.blocks_per_group));
  put_u32(os, static_cast<std::uint32_t>(c.kernel_regular));
  put_u32(os, static_cast<std::uint32_t>(c.kernel_causal));
}

inline ModelConfig get_model_config(std::istream &is) {
  ModelConfig c;
  c.mode = static_cast<ModelMode>(get_u32(is));
  c.num_mcc = static_cast<int>(get_u32(is));
  c.reduction = static_cast<int>(get_u32(is));
  c.frame_period_ms = get_f64(is);
  c.num_speakers = static_cast<int>(get_u32(is));
  c.hidden = static_cast<int>(get_u32(is));
  c.embed_dim = static_cast<int>(get_u32(is));
  c.norm = static_cast<NormMode>(get_u32(is));
  c.dropout_ratio = static_cast<real>(get_f64(is));
  c.groups = static_cast<int>(get_u32(is));
  c.blocks_per_group = static_cast<int>(get_u32(is));
  c.kernel_regular = static_cast<int>(get_u32(is));
  c.kernel_causal = static_cast<int>(get_u32(is));
  return c;
}

}  // namespace detail

constexpr std::uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(std::ostream &os, Model &model, const AdamState &adam,
                            long iteration, const Rng &rng, std::uint64_t config_hash) {
  os.write("SVCK", 4);
  detail::put_u32(os, kCheckpointVersion);
  detail::put_u64(os, config_hash);
  detail::put_u64(os, static_cast<std::uint64_t>(iteration));
  detail::put_u64(os, static_cast<std::uint64_t>(adam.step));
  std::ostringstream rng_text;
  rng_text << rng;
  detail::put_string(os, rng_text.str());
  detail::put_model_config(os, model.cfg);
  detail::put_u32(os, model.rec_trained ? 1 : 0);

  auto params = model.parameters();
  detail::put_u64(os, params.size());
  for (const auto &p : params) detail::put_reals(os, p->v);
  detail::put_u64(os, adam.m.size());
  for (std::size_t i = 0; i < adam.m.size(); ++i) {
    detail::put_reals(os, adam.m[i]);
    detail::put_reals(os, adam.v[i]);
  }
  auto norms = model.norm_layers();
  detail::put_u64(os, norms.size());
  for (const NormParams *n : norms) {
    detail::put_reals(os, n->running_mean);
    detail::put_reals(os, n->running_var);
    detail::put_u64(os, static_cast<std::uint64_t>(n->updates));
  }
  detail::put_u64(os, model.profiles.size());
  for (const auto &p : model.profiles) {
    detail::put_u64(os, static_cast<std::uint64_t>(p.id));
    detail::put_string(os, p.name);
    detail::put_reals(os, p.mean);
    detail::put_reals(os, p.std);
  }
  if (!os) throw IoError("checkpoint: write failed");
}

inline void save_checkpoint_file(const std::string &path, Model &model, const AdamState &adam,
                                 long iteration, const Rng &rng, std::uint64_t config_hash) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path);
  save_checkpoint(f, model, adam, iteration, rng, config_hash);
}

struct LoadedCheckpoint {
  Model model;
  AdamState adam;
  long iteration = 0;
  Rng rng;
  std::uint64_t config_hash = 0;
};

inline LoadedCheckpoint load_checkpoint(std::istream &is, std::uint64_t expected_hash,
                                        bool force = false) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "SVCK") throw IoError("checkpoint: bad magic");
  const auto version = detail::get_u32(is);
  if (version != kCheckpointVersion) throw IoError("checkpoint: unsupported version");
  LoadedCheckpoint out;
  out.config_hash = detail::get_u64(is);
  if (expected_hash != 0 && out.config_hash != expected_hash && !force)
    throw ConfigError("checkpoint: config hash mismatch (use force to override)");
  out.iteration = static_cast<long>(detail::get_u64(is));
  out.adam.step = static_cast<long>(detail::get_u64(is));
  std::istringstream rng_text(detail::get_string(is));
  rng_text >> out.rng;
  out.model = Model(detail::get_model_config(is));
  out.model.rec_trained = detail::get_u32(is) != 0;

  auto params = out.model.parameters();
  const auto n_params = detail::get_u64(is);
  require(n_params == params.size(), "checkpoint: parameter count mismatch");
  for (auto &p : params) {
    auto vals = detail::get_reals(is);
    require_shape(vals.size() == p->size(), "checkpoint: parameter size mismatch");
    p->v = std::move(vals);
  }
  const auto n_moments = detail::get_u64(is);
  require(n_moments == params.size() || n_moments == 0, "checkpoint: moment count mismatch");
  for (std::uint64_t i = 0; i < n_moments; ++i) {
    out.adam.m.push_back(detail::get_reals(is));
    out.adam.v.push_back(detail::get_reals(is));
  }
  auto norms = out.model.norm_layers();
  const auto n_norms = detail::get_u64(is);
  require(n_norms == norms.size(), "checkpoint: norm layer count mismatch");
  for (NormParams *n : norms) {
    n->running_mean = detail::get_reals(is);
    n->running_var = detail::get_reals(is);
    n->updates = static_cast<long>(detail::get_u64(is));
    for (real v : n->running_var)
      if (!(v > 0)) throw NumericError("checkpoint: running variance not strictly positive");
  }
  const auto n_profiles = detail::get_u64(is);
  for (std::uint64_t i = 0; i < n_profiles; ++i) {
    SpeakerProfile p;
    p.id = static_cast<int>(detail::get_u64(is));
    p.name = detail::get_string(is);
    p.mean = detail::get_reals(is);
    p.std = detail::get_reals(is);
    out.model.profiles.push_back(std::move(p));
  }
  return out;
}

inline LoadedCheckpoint load_checkpoint_file(const std::string &path,
                                             std::uint64_t expected_hash, bool force = false) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read " + path);
  return load_checkpoint(f, expected_hash, force);
}

// Canonical config text hashed into checkpoints.
inline std::string canonical_config_string(const ModelConfig &m, const TrainConfig &t) {
  std::ostringstream os;
  os << "mode=" << mode_name(m.mode) << ";mcc=" << m.num_mcc << ";r=" << m.reduction
     << ";period=" << m.frame_period_ms << ";speakers=" << m.num_speakers
     << ";hidden=" << m.hidden << ";embed=" << m.embed_dim
     << ";norm=" << static_cast<int>(m.norm) << ";dropout=" << m.dropout_ratio
     << ";groups=" << m.groups << ";blocks=" << m.blocks_per_group
     << ";kr=" << m.kernel_regular << ";kc=" << m.kernel_causal
     << ";batch=" << t.batch_size << ";iters=" << t.iterations << ";lr=" << t.learning_rate
     << ";b1=" << t.beta1 << ";b2=" << t.beta2 << ";clip=" << t.grad_clip
     << ";seed=" << t.seed << ";lr_w=" << t.weights.lambda_r << ";ld_w=" << t.weights.lambda_d
     << ";lo_w=" << t.weights.lambda_o << ";li_w=" << t.weights.lambda_i
     << ";nu=" << t.weights.nu << ";rho=" << t.weights.rho;
  return os.str();
}

// ---------------------------------------------------------------------------
// Training loop

struct TrainResult {
  long iterations_run = 0;
  bool diverged = false;
  std::vector<double> history_total, history_dec, history_rec, history_dal, history_oal;
  std::string checkpoint_path;  // final (or last good, after divergence)
};

struct TrainSession {
  Model model;
  AdamState adam;
  Rng rng;
  long iteration = 0;

  TrainSession() = default;
  TrainSession(const ModelConfig &mcfg, const TrainConfig &tcfg) : model(mcfg) {
    Rng init_rng(derive_seed(tcfg.seed, 1));
    init_parameters(model, init_rng);
    rng.seed(derive_seed(tcfg.seed, 2));
  }

  static TrainSession resume(const LoadedCheckpoint &ck) {
    TrainSession s;
    s.model = ck.model;
    s.adam = ck.adam;
    s.rng = ck.rng;
    s.iteration = ck.iteration;
    return s;
  }
};

// Runs up to tcfg.iterations steps (continuing from session.iteration).
// Divergence (non-finite loss or gradients) aborts the run and restores
// the last good checkpoint into the session.
inline TrainResult train(TrainSession &session, const PreparedCorpus &corpus,
                         const ModelConfig &mcfg, const TrainConfig &tcfg,
                         const std::string &checkpoint_dir = "") {
  tcfg.validate();
  session.model.profiles = corpus.profiles;
  session.model.rec_trained = tcfg.weights.lambda_r > 0;
  const std::uint64_t cfg_hash = fnv1a(canonical_config_string(mcfg, tcfg));
  TrainResult result;
  auto params = session.model.parameters();

  std::ostringstream last_good;
  save_checkpoint(last_good, session.model, session.adam, session.iteration, session.rng,
                  cfg_hash);
  auto write_periodic = [&](long iter) {
    if (checkpoint_dir.empty()) return std::string();
    char name[64];
    std::snprintf(name, sizeof(name), "checkpoint_%06ld.svck", iter);
    const auto path = (std::filesystem::path(checkpoint_dir) / name).string();
    std::filesystem::create_directories(checkpoint_dir);
    save_checkpoint_file(path, session.model, session.adam, iter, session.rng, cfg_hash);
    return path;
  };

  while (session.iteration < tcfg.iterations) {
    try {
      auto batch = make_batch(corpus, mcfg, tcfg, session.rng);
      for (auto &p : params) {
        p->ensure_grad();
        p->zero_grad();
      }
      TapeScope scope;
      auto breakdown = total_loss(session.model, batch, tcfg.weights, true, session.rng);
      if (!std::isfinite(breakdown.total_value)) throw NumericError("train: loss diverged");
      scope.tape().backward(breakdown.total);
      {
        NoGradScope ng;
        adam_step(params, session.adam, tcfg);
      }
      session.iteration += 1;
      result.iterations_run += 1;
      result.history_total.push_back(breakdown.total_value);
      result.history_dec.push_back(breakdown.dec);
      result.history_rec.push_back(breakdown.rec);
      result.history_dal.push_back(breakdown.dal);
      result.history_oal.push_back(breakdown.oal);
    } catch (const NumericError &) {
      // restore the last good state
      std::istringstream snap(last_good.str());
      auto ck = load_checkpoint(snap, cfg_hash);
      session.model = ck.model;
      session.adam = ck.adam;
      session.rng = ck.rng;
      session.iteration = ck.iteration;
      session.model.profiles = corpus.profiles;
      result.diverged = true;
      result.checkpoint_path = write_periodic(session.iteration);
      return result;
    }
    if (tcfg.checkpoint_every > 0 && session.iteration % tcfg.checkpoint_every == 0) {
      last_good.str("");
      last_good.clear();
      save_checkpoint(last_good, session.model, session.adam, session.iteration, session.rng,
                      cfg_hash);
      result.checkpoint_path = write_periodic(session.iteration);
    }
  }
  result.checkpoint_path = write_periodic(session.iteration);
  return result;
}

}  // namespace seqvc

#endif  // SEQVC_TRAINER_HPP_
