// seqvc/model.hpp
//
// The conversion model: source/target encoders, target decoder, and target
// reconstructor, assembled from a declarative layer chain. Each network is
// an input dropout, an optional embedding append, a 1x1 input convolution,
// a normalization layer, three groups of four GLU blocks at dilations
// 3^0..3^3, and a 1x1 output convolution; conditional variants append a
// broadcast speaker embedding before every convolution.

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

#ifndef SEQVC_MODEL_HPP_
#define SEQVC_MODEL_HPP_

#include "seqvc/features.hpp"
#include "seqvc/nn.hpp"

namespace seqvc {

enum class ModelMode { kPairwise, kManyToMany, kAnyToMany, kRealtime };

inline const char *mode_name(ModelMode m) {
  switch (m) {
    case ModelMode::kPairwise: return "pairwise";
    case ModelMode::kManyToMany: return "many2many";
    case ModelMode::kAnyToMany: return "any2many";
    case ModelMode::kRealtime: return "realtime";
  }
  return "?";
}

inline ModelMode mode_from_name(const std::string &s) {
  if (s == "pairwise") return ModelMode::kPairwise;
  if (s == "many2many") return ModelMode::kManyToMany;
  if (s == "any2many") return ModelMode::kAnyToMany;
  if (s == "realtime") return ModelMode::kRealtime;
  throw ConfigError("unknown mode '" + s + "'");
}

struct ModelConfig {
  ModelMode mode = ModelMode::kPairwise;
  int num_mcc = 28;
  int reduction = 3;
  double frame_period_ms = 8.0;
  int num_speakers = 2;
  int hidden = 64;     // hidden channels and D' (96 for the multi-speaker modes)
  int embed_dim = 32;  // speaker embedding width (multi-speaker modes)
  NormMode norm = NormMode::kBatch;
  real dropout_ratio = real(0.1);
  int groups = 3;
  int blocks_per_group = 4;
  int kernel_regular = 5;
  int kernel_causal = 3;

  int feature_dim_stacked() const { return feature_dim(num_mcc) * reduction; }
  bool multi_speaker() const { return mode != ModelMode::kPairwise; }
  double reduced_period_ms() const { return frame_period_ms * reduction; }

  void validate() const {
    require(num_mcc >= 1 && reduction >= 1 && hidden >= 1, "config: bad dims");
    require(groups >= 1 && blocks_per_group >= 1, "config: bad block counts");
    require(num_speakers >= (multi_speaker() ? 2 : 1), "config: need speakers");
    if (!multi_speaker())
      require(!norm_is_conditional(norm), "config: pairwise mode cannot use conditional norm");
  }
};

// ---------------------------------------------------------------------------
// Layer chain

struct LayerSpec {
  enum Kind { kDropout, kAppendEmbedding, kConv1x1, kNorm, kGlu } kind = kConv1x1;
  int in_ch = 0, out_ch = 0;
  int kernel = 1, dilation = 1;
  bool causal = false;
  NormMode norm = NormMode::kOff;
};

struct NetworkSpec {
  std::string name;
  std::vector<LayerSpec> layers;
  int input_channels = 0;
  int output_channels = 0;
  bool has_embedding = false;
  bool causal = false;
};

// Parameter element count implied by the chain (embedding table excluded).
inline std::size_t expected_parameter_count(const NetworkSpec &spec, int num_speakers) {
  std::size_t n = 0;
  auto norm_params = [&](NormMode m, int ch) -> std::size_t {
    if (m == NormMode::kOff) return 0;
    const std::size_t rows = norm_is_conditional(m) ? static_cast<std::size_t>(num_speakers) : 1;
    return 2 * rows * static_cast<std::size_t>(ch);
  };
  for (const auto &l : spec.layers) {
    switch (l.kind) {
      case LayerSpec::kConv1x1:
        n += static_cast<std::size_t>(l.out_ch) * l.in_ch * l.kernel + l.out_ch;
        break;
      case LayerSpec::kGlu:
        n += 2 * (static_cast<std::size_t>(l.out_ch) * l.in_ch * l.kernel + l.out_ch);
        n += 2 * norm_params(l.norm, l.out_ch);
        break;
      case LayerSpec::kNorm:
        n += norm_params(l.norm, l.out_ch);
        break;
      default:
        break;
    }
  }
  return n;
}

enum class NetworkRole { kSrcEnc, kTrgEnc, kTrgDec, kTrgRec };

inline NetworkSpec make_network_spec(NetworkRole role, const ModelConfig &cfg) {
  NetworkSpec spec;
  const int d_feat = cfg.feature_dim_stacked();
  const int h = cfg.hidden;
  bool causal = false, embedded = cfg.multi_speaker();
  NormMode norm = cfg.multi_speaker() ? cfg.norm
                                      : (norm_is_conditional(cfg.norm) ? NormMode::kBatch : cfg.norm);
  int in_ch = d_feat, out_ch = h;
  switch (role) {
    case NetworkRole::kSrcEnc:
      spec.name = "src_enc";
      causal = cfg.mode == ModelMode::kRealtime;
      out_ch = 2 * h;  // [K; V]
      if (cfg.mode == ModelMode::kAnyToMany) {
        embedded = false;  // source speaker never supplied
        if (norm_is_conditional(norm))
          norm = norm == NormMode::kCondBatch ? NormMode::kBatch : NormMode::kInstance;
      }
      break;
    case NetworkRole::kTrgEnc:
      spec.name = "trg_enc";
      causal = true;
      out_ch = h;
      break;
    case NetworkRole::kTrgDec:
      spec.name = "trg_dec";
      causal = true;
      in_ch = h;
      out_ch = d_feat;
      break;
    case NetworkRole::kTrgRec:
      spec.name = "trg_rec";
      causal = cfg.mode == ModelMode::kRealtime;
      in_ch = h;
      out_ch = d_feat;
      break;
  }
  spec.input_channels = in_ch;
  spec.output_channels = out_ch;
  spec.has_embedding = embedded;
  spec.causal = causal;
  const int e = embedded ? cfg.embed_dim : 0;
  const int kernel = causal ? cfg.kernel_causal : cfg.kernel_regular;

  auto append = [&](LayerSpec l) { spec.layers.push_back(l); };
  append({LayerSpec::kDropout, 0, 0, 1, 1, causal, NormMode::kOff});
  if (embedded) append({LayerSpec::kAppendEmbedding, in_ch, in_ch + e, 1, 1, causal, NormMode::kOff});
  append({LayerSpec::kConv1x1, in_ch + e, h, 1, 1, causal, NormMode::kOff});
  append({LayerSpec::kNorm, h, h, 1, 1, causal, norm});
  for (int g = 0; g < cfg.groups; ++g)
    for (int l = 0; l < cfg.blocks_per_group; ++l) {
      int dil = 1;
      for (int p = 0; p < l; ++p) dil *= 3;
      if (embedded) append({LayerSpec::kAppendEmbedding, h, h + e, 1, 1, causal, NormMode::kOff});
      append({LayerSpec::kGlu, h + e, h, kernel, dil, causal, norm});
    }
  if (embedded) append({LayerSpec::kAppendEmbedding, h, h + e, 1, 1, causal, NormMode::kOff});
  append({LayerSpec::kConv1x1, h + e, out_ch, 1, 1, causal, NormMode::kOff});
  return spec;
}

// ---------------------------------------------------------------------------
// Network: parameters for a chain plus its forward pass.

struct Network {
  NetworkSpec spec;
  std::vector<TensorPtr> conv_weights, conv_biases;  // one per kConv1x1
  std::vector<NormParams> norms;                     // one per kNorm
  std::vector<GluBlockParams> blocks;                // one per kGlu
  real dropout_ratio = real(0.1);

  Network() = default;
  Network(const NetworkSpec &s, int num_speakers, real dropout) : spec(s), dropout_ratio(dropout) {
    for (const auto &l : spec.layers) {
      switch (l.kind) {
        case LayerSpec::kConv1x1:
          conv_weights.push_back(make_tensor({l.out_ch, l.in_ch, 1}, true));
          conv_biases.push_back(make_tensor({l.out_ch}, true));
          break;
        case LayerSpec::kNorm:
          norms.emplace_back(l.norm, l.out_ch, num_speakers);
          break;
        case LayerSpec::kGlu:
          blocks.emplace_back(l.in_ch, l.out_ch, l.kernel, l.dilation, l.causal, l.norm,
                              num_speakers);
          break;
        default:
          break;
      }
    }
  }

  // z: per-item embedding rows {B,E} (null when the chain has no appends).
  TensorPtr forward(const TensorPtr &x, const TensorPtr &z, const Speakers &speakers,
                    bool training, Rng &rng, const Lengths *lengths = nullptr) {
    require_shape(x->shape.size() == 3 && x->dim(1) == spec.input_channels,
                  spec.name + ": input channel mismatch");
    if (spec.has_embedding) require(z != nullptr, spec.name + ": embedding rows required");
    TensorPtr h = x;
    std::size_t ci = 0, ni = 0, gi = 0;
    for (const auto &l : spec.layers) {
      switch (l.kind) {
        case LayerSpec::kDropout:
          h = dropout(h, training ? dropout_ratio : real(0), rng, training);
          break;
        case LayerSpec::kAppendEmbedding:
          h = append_channels(h, z, lengths);
          break;
        case LayerSpec::kConv1x1:
          h = conv1d(h, conv_weights[ci], conv_biases[ci], 1, l.causal, lengths);
          ++ci;
          break;
        case LayerSpec::kNorm:
          h = batch_norm(h, norms[ni], speakers, training, lengths);
          ++ni;
          break;
        case LayerSpec::kGlu:
          h = glu_block(h, blocks[gi], speakers, training, lengths);
          ++gi;
          break;
      }
    }
    return h;
  }

  void collect_parameters(std::vector<TensorPtr> &out) {
    for (std::size_t i = 0; i < conv_weights.size(); ++i) {
      out.push_back(conv_weights[i]);
      out.push_back(conv_biases[i]);
    }
    auto push_norm = [&out](NormParams &n) {
      if (n.mode == NormMode::kOff) return;
      out.push_back(n.gamma);
      out.push_back(n.beta);
    };
    for (auto &n : norms) push_norm(n);
    for (auto &b : blocks) {
      out.push_back(b.conv1_weight);
      out.push_back(b.conv1_bias);
      out.push_back(b.conv2_weight);
      out.push_back(b.conv2_bias);
      push_norm(b.norm1);
      push_norm(b.norm2);
    }
  }

  void collect_norms(std::vector<NormParams *> &out) {
    for (auto &n : norms)
      if (n.mode != NormMode::kOff) out.push_back(&n);
    for (auto &b : blocks) {
      if (b.norm1.mode != NormMode::kOff) out.push_back(&b.norm1);
      if (b.norm2.mode != NormMode::kOff) out.push_back(&b.norm2);
    }
  }
};

// ---------------------------------------------------------------------------
// Attention: A = softmax_columns(K^T Q / sqrt(D')) and R = V A.

inline TensorPtr attend(const TensorPtr &k, const TensorPtr &q) {
  require_shape(k->shape.size() == 2 && q->shape.size() == 2 && k->dim(0) == q->dim(0),
                "attend: internal dimension mismatch");
  const real scale = real(1) / std::sqrt(static_cast<real>(k->dim(0)));
  return softmax_columns(matmul_tn(k, q, scale));
}

inline TensorPtr warp(const TensorPtr &v, const TensorPtr &a) {
  require_shape(v->shape.size() == 2 && a->shape.size() == 2 && v->dim(1) == a->dim(0),
                "warp: shape mismatch");
  return matmul_nn(v, a);
}

// ---------------------------------------------------------------------------
// Model: the four networks plus the shared speaker embedding table.

struct Model {
  ModelConfig cfg;
  Network src_enc, trg_enc, trg_dec, trg_rec;
  TensorPtr embedding;  // {K, embed_dim} in multi-speaker modes
  std::vector<SpeakerProfile> profiles;  // one per speaker, set by the trainer
  bool rec_trained = true;  // false when trained with zero reconstruction weight

  Model() = default;
  explicit Model(const ModelConfig &c) : cfg(c) {
    cfg.validate();
    src_enc = Network(make_network_spec(NetworkRole::kSrcEnc, cfg), cfg.num_speakers,
                      cfg.dropout_ratio);
    trg_enc = Network(make_network_spec(NetworkRole::kTrgEnc, cfg), cfg.num_speakers,
                      cfg.dropout_ratio);
    trg_dec = Network(make_network_spec(NetworkRole::kTrgDec, cfg), cfg.num_speakers,
                      cfg.dropout_ratio);
    trg_rec = Network(make_network_spec(NetworkRole::kTrgRec, cfg), cfg.num_speakers,
                      cfg.dropout_ratio);
    if (cfg.multi_speaker()) embedding = make_tensor({cfg.num_speakers, cfg.embed_dim}, true);
  }

  int internal_dim() const { return cfg.hidden; }

  void check_speakers(const Speakers &spk, bool wanted, int batch, const char *who) const {
    if (wanted) {
      if (static_cast<int>(spk.size()) != batch)
        throw ModeError(std::string(who) + ": speaker index per item required in " +
                        mode_name(cfg.mode) + " mode");
      for (int s : spk)
        if (s < 0 || s >= cfg.num_speakers) throw ModeError(std::string(who) + ": speaker out of range");
    } else if (!spk.empty()) {
      throw ModeError(std::string(who) + ": speaker must not be given in " +
                      mode_name(cfg.mode) + " mode");
    }
  }

  TensorPtr rows_for(const Speakers &spk) {
    return embedding ? embed_rows(embedding, spk) : nullptr;
  }

  // SrcEnc: {B,D,T} -> (K, V) each {B,D',T}
  std::pair<TensorPtr, TensorPtr> encode_source(const TensorPtr &x, const Speakers &spk,
                                                bool training, Rng &rng,
                                                const Lengths *lengths = nullptr) {
    check_speakers(spk, src_enc.spec.has_embedding, x->dim(0), "src_encode");
    auto z = src_enc.spec.has_embedding ? rows_for(spk) : nullptr;
    auto kv = src_enc.forward(x, z, spk, training, rng, lengths);
    auto k = slice_channels(kv, 0, cfg.hidden);
    auto v = slice_channels(kv, cfg.hidden, 2 * cfg.hidden);
    return {k, v};
  }

  TensorPtr encode_target(const TensorPtr &y, const Speakers &spk, bool training, Rng &rng,
                          const Lengths *lengths = nullptr) {
    check_speakers(spk, trg_enc.spec.has_embedding, y->dim(0), "trg_encode");
    return trg_enc.forward(y, trg_enc.spec.has_embedding ? rows_for(spk) : nullptr, spk,
                           training, rng, lengths);
  }

  TensorPtr decode(const TensorPtr &r, const Speakers &spk, bool training, Rng &rng,
                   const Lengths *lengths = nullptr) {
    check_speakers(spk, trg_dec.spec.has_embedding, r->dim(0), "trg_decode");
    return trg_dec.forward(r, trg_dec.spec.has_embedding ? rows_for(spk) : nullptr, spk,
                           training, rng, lengths);
  }

  TensorPtr reconstruct(const TensorPtr &r, const Speakers &spk, bool training, Rng &rng,
                        const Lengths *lengths = nullptr) {
    check_speakers(spk, trg_rec.spec.has_embedding, r->dim(0), "trg_reconstruct");
    return trg_rec.forward(r, trg_rec.spec.has_embedding ? rows_for(spk) : nullptr, spk,
                           training, rng, lengths);
  }

  std::vector<TensorPtr> parameters() {
    std::vector<TensorPtr> out;
    src_enc.collect_parameters(out);
    trg_enc.collect_parameters(out);
    trg_dec.collect_parameters(out);
    trg_rec.collect_parameters(out);
    if (embedding) out.push_back(embedding);
    return out;
  }

  std::vector<NormParams *> norm_layers() {
    std::vector<NormParams *> out;
    src_enc.collect_norms(out);
    trg_enc.collect_norms(out);
    trg_dec.collect_norms(out);
    trg_rec.collect_norms(out);
    return out;
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    for (const auto &p : parameters()) n += p->size();
    return n;
  }
};

// Uniform conv weights scaled by 1/sqrt(fan_in * kernel); embeddings
// 0.01 * standard normal; biases zero and norm affines at identity.
inline void init_parameters(Model &m, Rng &rng) {
  auto init_conv = [&rng](const TensorPtr &w) {
    const real bound = real(1) / std::sqrt(static_cast<real>(w->dim(1)) * w->dim(2));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (auto &v : w->v) v = static_cast<real>(u(rng));
  };
  for (Network *net : {&m.src_enc, &m.trg_enc, &m.trg_dec, &m.trg_rec}) {
    for (auto &w : net->conv_weights) init_conv(w);
    for (auto &b : net->blocks) {
      init_conv(b.conv1_weight);
      init_conv(b.conv2_weight);
    }
  }
  if (m.embedding) {
    std::normal_distribution<double> g(0.0, 1.0);
    for (auto &v : m.embedding->v) v = static_cast<real>(0.01 * g(rng));
  }
}

}  // namespace seqvc

#endif  // SEQVC_MODEL_HPP_
