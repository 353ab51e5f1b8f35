// seqvc/corpus.hpp
//
// Synthetic parallel corpora with known ground truth: shared latent
// content trajectories rendered per speaker through affine transforms,
// speaker-specific log-F0 ranges and tempo factors, plus oracle warps
// between every speaker pair. Also: manifests and dataset splitting.

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

#ifndef SEQVC_CORPUS_HPP_
#define SEQVC_CORPUS_HPP_

#include <filesystem>
#include <map>

#include "seqvc/metrics.hpp"

namespace seqvc {

struct SyntheticSpec {
  int num_speakers = 3;
  int sentences = 16;
  int min_frames = 50;
  int max_frames = 90;
  int latent_dim = 8;
  int num_mcc = 28;
  double tempo_min = 0.9;   // rendition length factor per speaker
  double tempo_max = 1.1;
  std::vector<double> tempos;  // optional explicit per-speaker factors
  double speaker_strength = 1.0;  // scales inter-speaker transform contrast
  double noise = 0.05;
  double frame_period_ms = 8.0;
  std::uint64_t seed = 1;
  bool identical_speakers = false;  // all speakers share transform and tempo

  void validate() const {
    require(num_speakers >= 1 && sentences >= 1, "synthetic spec: need speakers and sentences");
    require(min_frames >= 8 && max_frames >= min_frames, "synthetic spec: bad frame range");
    require(latent_dim >= 1 && num_mcc >= 1, "synthetic spec: bad dims");
    require(tempo_min > 0 && tempo_max >= tempo_min, "synthetic spec: tempo factors must be positive");
    require(tempos.empty() || static_cast<int>(tempos.size()) == num_speakers,
            "synthetic spec: tempos must match speaker count");
    for (double t : tempos) require(t > 0, "synthetic spec: tempo factors must be positive");
    require(noise >= 0, "synthetic spec: negative noise");
  }
};

struct ManifestEntry {
  std::string sentence, speaker, split, path;
};

struct Manifest {
  std::vector<std::string> speakers;
  std::vector<ManifestEntry> entries;
  struct WarpRef {
    std::string src, trg, sentence, path;
  };
  std::vector<WarpRef> warps;
  std::string root;  // directory entries' relative paths resolve against

  int speaker_index(const std::string &name) const {
    for (std::size_t i = 0; i < speakers.size(); ++i)
      if (speakers[i] == name) return static_cast<int>(i);
    throw DataError("unknown speaker '" + name + "'");
  }

  const ManifestEntry *find(const std::string &sentence, const std::string &speaker) const {
    for (const auto &e : entries)
      if (e.sentence == sentence && e.speaker == speaker) return &e;
    return nullptr;
  }

  std::vector<std::string> sentences(const std::string &split = "") const {
    std::vector<std::string> out;
    for (const auto &e : entries) {
      if (!split.empty() && e.split != split) continue;
      if (std::find(out.begin(), out.end(), e.sentence) == out.end()) out.push_back(e.sentence);
    }
    return out;
  }

  std::string resolve(const std::string &rel) const {
    return (std::filesystem::path(root) / rel).string();
  }

  const WarpRef *find_warp(const std::string &src, const std::string &trg,
                           const std::string &sentence) const {
    for (const auto &w : warps)
      if (w.src == src && w.trg == trg && w.sentence == sentence) return &w;
    return nullptr;
  }
};

// ---------------------------------------------------------------------------
// Manifest and warp text files

inline void write_manifest(const std::string &path, const Manifest &m) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path);
  f << "# seqvc corpus manifest\n";
  for (const auto &s : m.speakers) f << "speaker " << s << "\n";
  for (const auto &e : m.entries)
    f << "entry " << e.sentence << " " << e.speaker << " " << e.split << " " << e.path << "\n";
  for (const auto &w : m.warps)
    f << "warp " << w.src << " " << w.trg << " " << w.sentence << " " << w.path << "\n";
  if (!f) throw IoError("short write to " + path);
}

inline Manifest read_manifest(const std::string &path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read " + path);
  Manifest m;
  m.root = std::filesystem::path(path).parent_path().string();
  if (m.root.empty()) m.root = ".";
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string key;
    ss >> key;
    if (key == "speaker") {
      std::string name;
      ss >> name;
      m.speakers.push_back(name);
    } else if (key == "entry") {
      ManifestEntry e;
      ss >> e.sentence >> e.speaker >> e.split >> e.path;
      for (const auto &prev : m.entries)
        if (prev.sentence == e.sentence && prev.speaker == e.speaker)
          throw DataError("duplicate manifest entry " + e.sentence + "/" + e.speaker);
      m.entries.push_back(e);
    } else if (key == "warp") {
      Manifest::WarpRef w;
      ss >> w.src >> w.trg >> w.sentence >> w.path;
      m.warps.push_back(w);
    } else {
      throw IoError("unknown manifest key '" + key + "' in " + path);
    }
  }
  return m;
}

// Oracle warps: monotone index-pair lists, 0-based, source index then
// target index per line.
inline void write_warp(const std::string &path, const std::vector<DtwPath::Pair> &points) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path);
  f << "# seqvc warp (source_index target_index, 0-based)\n";
  f << "points " << points.size() << "\n";
  for (const auto &p : points) f << p.a << " " << p.b << "\n";
  if (!f) throw IoError("short write to " + path);
}

inline std::vector<DtwPath::Pair> read_warp(const std::string &path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read " + path);
  std::vector<DtwPath::Pair> out;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string key;
    if (line.rfind("points", 0) == 0) continue;
    DtwPath::Pair p;
    std::istringstream ps(line);
    if (!(ps >> p.a >> p.b)) throw IoError("malformed warp line in " + path);
    out.push_back(p);
  }
  if (out.empty()) throw IoError("empty warp file " + path);
  return out;
}

// ---------------------------------------------------------------------------
// Generation

namespace detail {

struct SpeakerRender {
  std::vector<real> transform;  // num_mcc x latent_dim, row-major
  std::vector<real> offset;     // num_mcc
  real f0_base = real(4.8);
  real f0_amp = real(0.2);
  real aperiodicity = real(-2);
  double tempo = 1.0;
};

struct LatentSentence {
  // 4 sinusoidal components per latent channel, periods >= 20 base frames
  std::vector<real> amp, period, phase;  // latent_dim x 4 each
  real gate_period = 40, gate_phase = 0;
  int base_frames = 0;

  real value(int channel, double u) const {
    real acc = 0;
    for (int h = 0; h < 4; ++h) {
      const std::size_t i = static_cast<std::size_t>(channel) * 4 + h;
      acc += amp[i] * static_cast<real>(
                          std::sin(2.0 * 3.14159265358979323846 * u / period[i] + phase[i]));
    }
    return acc;
  }
  bool voiced(double u) const {
    return std::sin(2.0 * 3.14159265358979323846 * u / gate_period + gate_phase) > -0.3;
  }
};

inline SpeakerRender make_speaker(const SyntheticSpec &spec, int k) {
  Rng rng(derive_seed(spec.seed, 1000 + static_cast<std::uint64_t>(spec.identical_speakers ? 0 : k)));
  SpeakerRender r;
  std::uniform_real_distribution<double> u(-1, 1);
  const int I = spec.num_mcc, L = spec.latent_dim;
  r.transform.assign(static_cast<std::size_t>(I) * L, 0);
  // well-conditioned deviation from a padded identity
  const double spread = 0.45 * spec.speaker_strength;
  for (int i = 0; i < I; ++i)
    for (int l = 0; l < L; ++l)
      r.transform[static_cast<std::size_t>(i) * L + l] =
          static_cast<real>((i % L == l ? 1.0 : 0.0) + spread * u(rng));
  r.offset.resize(static_cast<std::size_t>(I));
  for (auto &o : r.offset) o = static_cast<real>(0.8 * spec.speaker_strength * u(rng));
  std::uniform_real_distribution<double> fb(4.3, 5.5), fa(0.15, 0.3), ap(-2.5, -1.5);
  r.f0_base = static_cast<real>(fb(rng));
  r.f0_amp = static_cast<real>(fa(rng));
  r.aperiodicity = static_cast<real>(ap(rng));
  if (!spec.tempos.empty()) {
    r.tempo = spec.tempos[static_cast<std::size_t>(k)];
  } else if (spec.identical_speakers) {
    r.tempo = 0.5 * (spec.tempo_min + spec.tempo_max);
  } else {
    std::uniform_real_distribution<double> tempo(spec.tempo_min, spec.tempo_max);
    r.tempo = tempo(rng);
  }
  return r;
}

inline LatentSentence make_sentence(const SyntheticSpec &spec, int s, int attempt = 0) {
  Rng rng(derive_seed(spec.seed,
                      2000 + static_cast<std::uint64_t>(s) * 64 + static_cast<std::uint64_t>(attempt)));
  LatentSentence ls;
  std::uniform_int_distribution<int> frames(spec.min_frames, spec.max_frames);
  ls.base_frames = frames(rng);
  const int L = spec.latent_dim;
  ls.amp.resize(static_cast<std::size_t>(L) * 4);
  ls.period.resize(ls.amp.size());
  ls.phase.resize(ls.amp.size());
  std::uniform_real_distribution<double> amp(0.6, 1.0), period(20.0, 50.0),
      phase(0.0, 2.0 * 3.14159265358979323846);
  for (std::size_t i = 0; i < ls.amp.size(); ++i) {
    ls.amp[i] = static_cast<real>(amp(rng));
    ls.period[i] = static_cast<real>(period(rng));
    ls.phase[i] = static_cast<real>(phase(rng));
  }
  std::uniform_real_distribution<double> gp(24.0, 60.0);
  ls.gate_period = static_cast<real>(gp(rng));
  ls.gate_phase = static_cast<real>(phase(rng));
  return ls;
}

inline int rendition_frames(const LatentSentence &ls, const SpeakerRender &r) {
  return std::max(8, static_cast<int>(std::llround(ls.base_frames * r.tempo)));
}

inline FeatureSequence render(const SyntheticSpec &spec, const LatentSentence &ls,
                              const SpeakerRender &r, std::uint64_t noise_seed) {
  const int I = spec.num_mcc, L = spec.latent_dim;
  const int n_frames = rendition_frames(ls, r);
  FeatureSequence out(feature_dim(I), n_frames, spec.frame_period_ms);
  Rng rng(noise_seed);
  std::normal_distribution<double> g(0, 1);
  const double scale = n_frames > 1 ? static_cast<double>(ls.base_frames - 1) / (n_frames - 1) : 0;
  bool any_voiced = false;
  for (int n = 0; n < n_frames; ++n) {
    const double u = n * scale;  // content clock in base frames
    std::vector<real> c(static_cast<std::size_t>(L));
    for (int l = 0; l < L; ++l) c[static_cast<std::size_t>(l)] = ls.value(l, u);
    for (int i = 0; i < I; ++i) {
      real acc = r.offset[static_cast<std::size_t>(i)];
      for (int l = 0; l < L; ++l)
        acc += r.transform[static_cast<std::size_t>(i) * L + l] * c[static_cast<std::size_t>(l)];
      out.at(i, n) = acc + static_cast<real>(spec.noise * g(rng));
    }
    const bool voiced = ls.voiced(u);
    any_voiced = any_voiced || voiced;
    out.at(vuv_channel(I), n) = voiced ? real(1) : real(0);
    out.at(logf0_channel(I), n) =
        voiced ? r.f0_base + r.f0_amp * c[0] + static_cast<real>(0.5 * spec.noise * g(rng))
               : real(0);
    out.at(aperiodicity_channel(I), n) = r.aperiodicity;
  }
  if (!any_voiced) {  // force a voiced frame so stats and interpolation exist
    out.at(vuv_channel(I), 0) = 1;
    out.at(logf0_channel(I), 0) = r.f0_base;
  }
  return out;
}

// Largest distance from any DTW path point to the oracle b-range of its
// source frame; used by the generator's recoverability check.
inline int warp_recovery_deviation(const FeatureSequence &a, const FeatureSequence &b,
                                   const std::vector<DtwPath::Pair> &oracle, int num_mcc) {
  auto p = dtw_align(a, b, num_mcc);
  std::vector<int> lo(static_cast<std::size_t>(a.length), b.length);
  std::vector<int> hi(static_cast<std::size_t>(a.length), -1);
  for (const auto &pt : oracle) {
    lo[static_cast<std::size_t>(pt.a)] = std::min(lo[static_cast<std::size_t>(pt.a)], pt.b);
    hi[static_cast<std::size_t>(pt.a)] = std::max(hi[static_cast<std::size_t>(pt.a)], pt.b);
  }
  int worst = 0;
  for (const auto &pt : p.points) {
    const int d = pt.b < lo[static_cast<std::size_t>(pt.a)]
                      ? lo[static_cast<std::size_t>(pt.a)] - pt.b
                      : std::max(0, pt.b - hi[static_cast<std::size_t>(pt.a)]);
    worst = std::max(worst, d);
  }
  return worst;
}

// Monotone staircase matching the shared content clock of two renditions.
inline std::vector<DtwPath::Pair> oracle_warp(int n_src, int n_trg) {
  std::vector<DtwPath::Pair> path;
  auto map_to_trg = [&](int n) {
    return n_src > 1 ? static_cast<int>(std::llround(
                           static_cast<double>(n) * (n_trg - 1) / (n_src - 1)))
                     : 0;
  };
  path.push_back({0, 0});
  int b = 0;
  for (int a = 1; a < n_src; ++a) {
    const int bt = map_to_trg(a);
    if (bt > b) {
      path.push_back({a, ++b});       // diagonal step
      while (b < bt) path.push_back({a, ++b});
    } else {
      path.push_back({a, b});
    }
  }
  while (b < n_trg - 1) path.push_back({n_src - 1, ++b});
  return path;
}

}  // namespace detail

// Renders the whole corpus under `dir` and returns the manifest (also
// written to dir/manifest.txt, all entries tagged train until split).
inline Manifest generate_corpus(const SyntheticSpec &spec, const std::string &dir) {
  spec.validate();
  namespace fs = std::filesystem;
  Manifest m;
  m.root = dir;
  fs::create_directories(dir);
  std::vector<detail::SpeakerRender> speakers;
  for (int k = 0; k < spec.num_speakers; ++k) {
    speakers.push_back(detail::make_speaker(spec, k));
    m.speakers.push_back(std::string("spk_") + static_cast<char>('a' + k));
    fs::create_directories(fs::path(dir) / m.speakers.back());
  }
  char sid[32];
  for (int s = 0; s < spec.sentences; ++s) {
    std::snprintf(sid, sizeof(sid), "s%04d", s);
    // Redraw the latent until noise-free renditions are DTW-recoverable
    // against the oracle warp within +-2 frames (deterministic chain).
    detail::LatentSentence ls;
    int best_dev = std::numeric_limits<int>::max();
    for (int attempt = 0; attempt < 32 && best_dev > 2; ++attempt) {
      auto candidate = detail::make_sentence(spec, s, attempt);
      SyntheticSpec clean = spec;
      clean.noise = 0;
      std::vector<FeatureSequence> probe;
      for (int k = 0; k < spec.num_speakers; ++k)
        probe.push_back(detail::render(clean, candidate, speakers[static_cast<std::size_t>(k)], 0));
      int dev = 0;
      for (int k = 0; k < spec.num_speakers; ++k)
        for (int k2 = 0; k2 < spec.num_speakers; ++k2) {
          if (k == k2) continue;
          const auto oracle =
              detail::oracle_warp(probe[static_cast<std::size_t>(k)].length,
                                  probe[static_cast<std::size_t>(k2)].length);
          dev = std::max(dev, detail::warp_recovery_deviation(
                                  probe[static_cast<std::size_t>(k)],
                                  probe[static_cast<std::size_t>(k2)], oracle, spec.num_mcc));
        }
      if (dev < best_dev) {
        best_dev = dev;
        ls = candidate;
      }
    }
    std::vector<int> lengths;
    for (int k = 0; k < spec.num_speakers; ++k) {
      const auto seq = detail::render(
          spec, ls, speakers[static_cast<std::size_t>(k)],
          derive_seed(spec.seed, 3000 + static_cast<std::uint64_t>(s) * 64 + k));
      lengths.push_back(seq.length);
      const std::string rel = m.speakers[static_cast<std::size_t>(k)] + "/" + sid + ".fsq";
      write_fseq((fs::path(dir) / rel).string(), seq);
      m.entries.push_back({sid, m.speakers[static_cast<std::size_t>(k)], "train", rel});
    }
    for (int k = 0; k < spec.num_speakers; ++k)
      for (int k2 = 0; k2 < spec.num_speakers; ++k2) {
        if (k == k2) continue;
        const auto path = detail::oracle_warp(lengths[static_cast<std::size_t>(k)],
                                              lengths[static_cast<std::size_t>(k2)]);
        const std::string rel = std::string("warps/") + m.speakers[static_cast<std::size_t>(k)] +
                                "__" + m.speakers[static_cast<std::size_t>(k2)] + "/" + sid +
                                ".warp";
        fs::create_directories((fs::path(dir) / rel).parent_path());
        write_warp((fs::path(dir) / rel).string(), path);
        m.warps.push_back({m.speakers[static_cast<std::size_t>(k)],
                           m.speakers[static_cast<std::size_t>(k2)], sid, rel});
      }
  }
  write_manifest((fs::path(dir) / "manifest.txt").string(), m);
  return m;
}

// Sentence-level split: every speaker's rendition of a sentence lands in
// the same subset.
inline Manifest split_manifest(const Manifest &m, double train_fraction, std::uint64_t seed) {
  require(train_fraction > 0 && train_fraction < 1, "split: fraction must be in (0,1)");
  auto ids = m.sentences();
  require(ids.size() >= 2, "split: need at least 2 sentences");
  std::vector<std::size_t> order(ids.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t n_train = static_cast<std::size_t>(std::llround(train_fraction * ids.size()));
  n_train = std::min(std::max<std::size_t>(n_train, 1), ids.size() - 1);
  std::map<std::string, std::string> tag;
  for (std::size_t i = 0; i < order.size(); ++i)
    tag[ids[order[i]]] = i < n_train ? "train" : "eval";
  Manifest out = m;
  for (auto &e : out.entries) e.split = tag[e.sentence];
  return out;
}

}  // namespace seqvc

#endif  // SEQVC_CORPUS_HPP_
