// seqvc/features.hpp
//
// Acoustic feature sequences: FSEQ file I/O, per-speaker voiced-frame
// normalization, log-F0 interpolation, reduction-factor stacking, and
// sinusoidal position encodings.
//
// Unstacked frames hold I mel-cepstral coefficients followed by log F0,
// coded aperiodicity, and the voiced/unvoiced indicator (I+3 channels).

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

#ifndef SEQVC_FEATURES_HPP_
#define SEQVC_FEATURES_HPP_

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "seqvc/common.hpp"

namespace seqvc {

struct FeatureSequence {
  int dim = 0;
  int length = 0;
  double frame_period_ms = 8.0;  // period of this sequence's own frames
  std::vector<real> data;       // channel-major: data[i*length + n]
  bool reduced = false;
  int orig_length = 0;  // pre-stacking frame count (0 when not stacked)

  FeatureSequence() = default;
  FeatureSequence(int d, int n, double period = 8.0)
      : dim(d), length(n), frame_period_ms(period),
        data(static_cast<std::size_t>(d) * static_cast<std::size_t>(n), real(0)) {
    require_shape(d >= 1 && n >= 0, "FeatureSequence: bad dims");
  }

  real &at(int i, int n) { return data[static_cast<std::size_t>(i) * length + n]; }
  real at(int i, int n) const { return data[static_cast<std::size_t>(i) * length + n]; }
};

// Fixed channel roles for unstacked frames.
inline int logf0_channel(int num_mcc) { return num_mcc; }
inline int aperiodicity_channel(int num_mcc) { return num_mcc + 1; }
inline int vuv_channel(int num_mcc) { return num_mcc + 2; }
inline int feature_dim(int num_mcc) { return num_mcc + 3; }

inline bool frame_is_voiced(const FeatureSequence &s, int num_mcc, int n) {
  return s.at(vuv_channel(num_mcc), n) > real(0.5);
}

struct SpeakerProfile {
  int id = -1;
  std::string name;
  std::vector<real> mean;  // size I+1: MCCs then log F0
  std::vector<real> std;   // same, strictly positive
};

// ---------------------------------------------------------------------------
// FSEQ binary format: "FSQ1", u32 dim, u32 length, f64 frame_period_ms,
// then dim*length little-endian f32 in frame-major order.

inline void write_fseq(const std::string &path, const FeatureSequence &s) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path);
  f.write("FSQ1", 4);
  const std::uint32_t dim = static_cast<std::uint32_t>(s.dim);
  const std::uint32_t len = static_cast<std::uint32_t>(s.length);
  f.write(reinterpret_cast<const char *>(&dim), 4);
  f.write(reinterpret_cast<const char *>(&len), 4);
  f.write(reinterpret_cast<const char *>(&s.frame_period_ms), 8);
  std::vector<float> buf(static_cast<std::size_t>(s.dim) * s.length);
  for (int n = 0; n < s.length; ++n)
    for (int i = 0; i < s.dim; ++i)
      buf[static_cast<std::size_t>(n) * s.dim + i] = static_cast<float>(s.at(i, n));
  f.write(reinterpret_cast<const char *>(buf.data()),
          static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!f) throw IoError("short write to " + path);
}

inline FeatureSequence read_fseq(const std::string &path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::string(magic, 4) != "FSQ1") throw IoError("malformed FSEQ (bad magic): " + path);
  std::uint32_t dim = 0, len = 0;
  double period = 0;
  f.read(reinterpret_cast<char *>(&dim), 4);
  f.read(reinterpret_cast<char *>(&len), 4);
  f.read(reinterpret_cast<char *>(&period), 8);
  if (!f || dim == 0 || dim > (1u << 20) || len > (1u << 24))
    throw IoError("malformed FSEQ (bad header): " + path);
  FeatureSequence s(static_cast<int>(dim), static_cast<int>(len), period);
  std::vector<float> buf(static_cast<std::size_t>(dim) * len);
  f.read(reinterpret_cast<char *>(buf.data()),
         static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!f) throw IoError("malformed FSEQ (truncated data): " + path);
  for (int n = 0; n < s.length; ++n)
    for (int i = 0; i < s.dim; ++i)
      s.at(i, n) = static_cast<real>(buf[static_cast<std::size_t>(n) * dim + i]);
  return s;
}

// ---------------------------------------------------------------------------
// Log-F0 interpolation: unvoiced gaps filled linearly between neighboring
// voiced values, edges held at the nearest voiced value. Voiced frames and
// the V/UV channel are untouched.

inline FeatureSequence interpolate_logf0(const FeatureSequence &seq, int num_mcc) {
  require_shape(seq.dim == feature_dim(num_mcc), "interpolate_logf0: dim mismatch");
  const int f0 = logf0_channel(num_mcc);
  std::vector<int> voiced;
  for (int n = 0; n < seq.length; ++n)
    if (frame_is_voiced(seq, num_mcc, n)) voiced.push_back(n);
  if (voiced.empty()) throw DataError("interpolate_logf0: all frames unvoiced");
  FeatureSequence out = seq;
  // leading and trailing runs
  for (int n = 0; n < voiced.front(); ++n) out.at(f0, n) = seq.at(f0, voiced.front());
  for (int n = voiced.back() + 1; n < seq.length; ++n) out.at(f0, n) = seq.at(f0, voiced.back());
  for (std::size_t j = 0; j + 1 < voiced.size(); ++j) {
    const int a = voiced[j], b = voiced[j + 1];
    if (b == a + 1) continue;
    const real va = seq.at(f0, a), vb = seq.at(f0, b);
    for (int n = a + 1; n < b; ++n) {
      const real u = static_cast<real>(n - a) / static_cast<real>(b - a);
      out.at(f0, n) = va + u * (vb - va);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Per-speaker normalization of the MCC and log-F0 channels. Aperiodicity
// and V/UV pass through.

inline FeatureSequence normalize(const FeatureSequence &seq, const SpeakerProfile &p, int num_mcc) {
  require_shape(seq.dim == feature_dim(num_mcc), "normalize: dim mismatch");
  require_shape(static_cast<int>(p.mean.size()) == num_mcc + 1 &&
                    p.std.size() == p.mean.size(),
                "normalize: profile dim mismatch");
  for (real s : p.std) require(s > 0, "normalize: profile std must be positive");
  FeatureSequence out = seq;
  for (int i = 0; i <= num_mcc; ++i)
    for (int n = 0; n < seq.length; ++n)
      out.at(i, n) = (seq.at(i, n) - p.mean[static_cast<std::size_t>(i)]) /
                     p.std[static_cast<std::size_t>(i)];
  return out;
}

inline FeatureSequence denormalize(const FeatureSequence &seq, const SpeakerProfile &p, int num_mcc) {
  require_shape(seq.dim == feature_dim(num_mcc), "denormalize: dim mismatch");
  require_shape(static_cast<int>(p.mean.size()) == num_mcc + 1 &&
                    p.std.size() == p.mean.size(),
                "denormalize: profile dim mismatch");
  FeatureSequence out = seq;
  for (int i = 0; i <= num_mcc; ++i)
    for (int n = 0; n < seq.length; ++n)
      out.at(i, n) = seq.at(i, n) * p.std[static_cast<std::size_t>(i)] +
                     p.mean[static_cast<std::size_t>(i)];
  return out;
}

// ---------------------------------------------------------------------------
// Reduction-factor stacking: non-overlapping groups of r frames become one
// frame of dimension D*r (zero frames pad the tail). Sub-frame j of stacked
// frame m occupies channels [j*D, (j+1)*D).

inline FeatureSequence stack_reduce(const FeatureSequence &seq, int r) {
  require(r >= 1, "stack_reduce: r must be positive");
  const int groups = (seq.length + r - 1) / r;
  FeatureSequence out(seq.dim * r, groups, seq.frame_period_ms * r);
  for (int m = 0; m < groups; ++m)
    for (int j = 0; j < r; ++j) {
      const int n = m * r + j;
      if (n >= seq.length) break;  // zero tail padding
      for (int i = 0; i < seq.dim; ++i) out.at(j * seq.dim + i, m) = seq.at(i, n);
    }
  out.reduced = true;
  out.orig_length = seq.length;
  return out;
}

// Inverts stack_reduce. n_out trims the zero tail; pass 0 to use the
// recorded original length (or the full r*length when unknown).
inline FeatureSequence unstack(const FeatureSequence &seq, int r, int n_out = 0) {
  require(r >= 1, "unstack: r must be positive");
  require_shape(seq.dim % r == 0, "unstack: dim not divisible by r");
  const int d = seq.dim / r;
  int total = seq.length * r;
  if (n_out == 0) n_out = seq.orig_length > 0 ? seq.orig_length : total;
  require_shape(n_out <= total, "unstack: requested length too long");
  FeatureSequence out(d, n_out, seq.frame_period_ms / r);
  for (int n = 0; n < n_out; ++n) {
    const int m = n / r, j = n % r;
    for (int i = 0; i < d; ++i) out.at(i, n) = seq.at(j * d + i, m);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sinusoidal position encodings, added in place over all channels:
//   PE(pos, 2i)   = sin(pos / 10000^(2i/D))
//   PE(pos, 2i+1) = cos(pos / 10000^(2i/D))

inline real position_encoding_value(int pos, int channel, int dim) {
  const double exponent = 2.0 * (channel / 2) / static_cast<double>(dim);
  const double angle = pos / std::pow(10000.0, exponent);
  return static_cast<real>(channel % 2 == 0 ? std::sin(angle) : std::cos(angle));
}

inline FeatureSequence add_position_encoding(const FeatureSequence &seq) {
  FeatureSequence out = seq;
  for (int i = 0; i < seq.dim; ++i)
    for (int n = 0; n < seq.length; ++n)
      out.at(i, n) += position_encoding_value(n, i, seq.dim);
  return out;
}

// ---------------------------------------------------------------------------
// Speaker statistics over voiced frames of a corpus slice (population
// standard deviation, floored at 1e-6).

inline SpeakerProfile compute_speaker_stats(const std::vector<const FeatureSequence *> &slice,
                                            int num_mcc, int id = -1,
                                            const std::string &name = "") {
  require(!slice.empty(), "compute_speaker_stats: empty slice");
  SpeakerProfile p;
  p.id = id;
  p.name = name;
  const int nfeat = num_mcc + 1;
  p.mean.assign(static_cast<std::size_t>(nfeat), real(0));
  p.std.assign(static_cast<std::size_t>(nfeat), real(0));
  std::size_t count = 0;
  for (const FeatureSequence *s : slice) {
    require_shape(s->dim == feature_dim(num_mcc), "compute_speaker_stats: dim mismatch");
    for (int n = 0; n < s->length; ++n) {
      if (!frame_is_voiced(*s, num_mcc, n)) continue;
      ++count;
      for (int i = 0; i < nfeat; ++i) p.mean[static_cast<std::size_t>(i)] += s->at(i, n);
    }
  }
  require(count > 0, "compute_speaker_stats: no voiced frames");
  for (auto &m : p.mean) m /= static_cast<real>(count);
  for (const FeatureSequence *s : slice)
    for (int n = 0; n < s->length; ++n) {
      if (!frame_is_voiced(*s, num_mcc, n)) continue;
      for (int i = 0; i < nfeat; ++i) {
        const real d = s->at(i, n) - p.mean[static_cast<std::size_t>(i)];
        p.std[static_cast<std::size_t>(i)] += d * d;
      }
    }
  for (auto &v : p.std) v = std::max(std::sqrt(v / static_cast<real>(count)), real(1e-6));
  return p;
}

// ---------------------------------------------------------------------------
// Weighted-L1 feature weights: 1/I per MCC, 1/10 for log F0, 1/50 for
// aperiodicity and V/UV, each repeated per stacked sub-frame with a 1/r
// factor.

inline std::vector<real> feature_weights(int num_mcc, int r) {
  std::vector<real> w;
  w.reserve(static_cast<std::size_t>(feature_dim(num_mcc)) * r);
  for (int j = 0; j < r; ++j) {
    for (int i = 0; i < num_mcc; ++i) w.push_back(real(1) / num_mcc / r);
    w.push_back(real(1) / 10 / r);
    w.push_back(real(1) / 50 / r);
    w.push_back(real(1) / 50 / r);
  }
  return w;
}

// ---------------------------------------------------------------------------
// Profile text files

inline void write_profile(const std::string &path, const SpeakerProfile &p) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path);
  f << "# seqvc speaker profile\n";
  f << "speaker " << p.id << " " << p.name << "\n";
  f << "features " << p.mean.size() << "\n";
  char buf[128];
  for (std::size_t i = 0; i < p.mean.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "stat %zu %.17g %.17g\n", i,
                  static_cast<double>(p.mean[i]), static_cast<double>(p.std[i]));
    f << buf;
  }
  if (!f) throw IoError("short write to " + path);
}

inline SpeakerProfile read_profile(const std::string &path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read " + path);
  SpeakerProfile p;
  std::string line;
  std::size_t nfeat = 0;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string key;
    ss >> key;
    if (key == "speaker") {
      ss >> p.id >> p.name;
    } else if (key == "features") {
      ss >> nfeat;
      p.mean.assign(nfeat, real(0));
      p.std.assign(nfeat, real(0));
    } else if (key == "stat") {
      std::size_t i;
      double m, s;
      ss >> i >> m >> s;
      if (i >= nfeat) throw IoError("profile index out of range: " + path);
      p.mean[i] = static_cast<real>(m);
      p.std[i] = static_cast<real>(s);
    } else {
      throw IoError("unknown profile key '" + key + "' in " + path);
    }
  }
  if (nfeat == 0) throw IoError("profile missing features line: " + path);
  return p;
}

}  // namespace seqvc

#endif  // SEQVC_FEATURES_HPP_
