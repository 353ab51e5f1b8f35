// seqvc/metrics.hpp
//
// Objective evaluation: dynamic time warping on MCC sequences, mel-cepstral
// distortion, log-F0 correlation, and local duration ratio, plus the
// evaluation report writer.

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

#ifndef SEQVC_METRICS_HPP_
#define SEQVC_METRICS_HPP_

#include <optional>

#include "seqvc/features.hpp"

namespace seqvc {

// Monotone alignment between two sequences. Steps are (1,0), (0,1), (1,1)
// over 0-based indices (a_idx into the first sequence, b_idx into the
// second); the path runs (0,0) .. (N-1,M-1).
struct DtwPath {
  struct Pair {
    int a = 0;
    int b = 0;
  };
  std::vector<Pair> points;
  double cost = 0;
};

namespace detail {

inline double frame_distance(const FeatureSequence &a, const FeatureSequence &b, int dim,
                             int na, int nb) {
  double acc = 0;
  for (int i = 0; i < dim; ++i) {
    const double d = static_cast<double>(a.at(i, na)) - static_cast<double>(b.at(i, nb));
    acc += d * d;
  }
  return std::sqrt(acc);
}

}  // namespace detail

// Globally minimal cumulative cost under the unweighted step set; local
// cost is the Euclidean distance between frames of the first `dim`
// channels. Ties during backtracking prefer the diagonal step, then (1,0).
inline DtwPath dtw_align(const FeatureSequence &a, const FeatureSequence &b, int dim) {
  require_shape(a.dim >= dim && b.dim >= dim, "dtw_align: too few channels");
  require(a.length >= 1 && b.length >= 1, "dtw_align: empty sequence");
  const int n = a.length, m = b.length;
  std::vector<double> cost(static_cast<std::size_t>(n) * m);
  auto at = [&](int i, int j) -> double & { return cost[static_cast<std::size_t>(i) * m + j]; };
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) {
      const double local = detail::frame_distance(a, b, dim, i, j);
      double best;
      if (i == 0 && j == 0)
        best = 0;
      else if (i == 0)
        best = at(0, j - 1);
      else if (j == 0)
        best = at(i - 1, 0);
      else
        best = std::min({at(i - 1, j - 1), at(i - 1, j), at(i, j - 1)});
      at(i, j) = local + best;
    }
  DtwPath path;
  path.cost = at(n - 1, m - 1);
  int i = n - 1, j = m - 1;
  path.points.push_back({i, j});
  while (i > 0 || j > 0) {
    if (i == 0)
      --j;
    else if (j == 0)
      --i;
    else {
      const double diag = at(i - 1, j - 1), up = at(i - 1, j), left = at(i, j - 1);
      if (diag <= up && diag <= left) {
        --i;
        --j;
      } else if (up <= left) {
        --i;
      } else {
        --j;
      }
    }
    path.points.push_back({i, j});
  }
  std::reverse(path.points.begin(), path.points.end());
  return path;
}

// Mel-cepstral distortion in dB between two 28-coefficient frames; the
// first coefficient is excluded by the summation bounds.
inline double mcd_db(const std::vector<double> &converted, const std::vector<double> &reference) {
  require_shape(converted.size() == reference.size() && converted.size() >= 2,
                "mcd_db: need matching MCC vectors");
  double acc = 0;
  for (std::size_t i = 1; i < converted.size(); ++i) {
    const double d = converted[i] - reference[i];
    acc += d * d;
  }
  return 10.0 / std::log(10.0) * std::sqrt(2.0 * acc);
}

// Mean MCD along the DTW path between converted and reference MCCs.
inline double utterance_mcd(const FeatureSequence &converted, const FeatureSequence &reference,
                            int num_mcc) {
  auto path = dtw_align(converted, reference, num_mcc);
  double acc = 0;
  std::vector<double> xa(static_cast<std::size_t>(num_mcc)), xb(xa);
  for (const auto &p : path.points) {
    for (int i = 0; i < num_mcc; ++i) {
      xa[static_cast<std::size_t>(i)] = static_cast<double>(converted.at(i, p.a));
      xb[static_cast<std::size_t>(i)] = static_cast<double>(reference.at(i, p.b));
    }
    acc += mcd_db(xa, xb);
  }
  return acc / static_cast<double>(path.points.size());
}

// Log-F0 correlation: warp the converted contour onto reference frames
// along the MCC DTW path (averaging log F0 and AND-ing the voicing flags
// over many-to-one mappings), keep jointly voiced frames, and correlate.
inline double lfc(const FeatureSequence &converted, const FeatureSequence &reference, int num_mcc) {
  require_shape(converted.dim == feature_dim(num_mcc) && reference.dim == feature_dim(num_mcc),
                "lfc: dim mismatch");
  auto path = dtw_align(converted, reference, num_mcc);
  const int m = reference.length;
  std::vector<double> warped_f0(static_cast<std::size_t>(m), 0);
  std::vector<int> counts(static_cast<std::size_t>(m), 0);
  std::vector<char> warped_voiced(static_cast<std::size_t>(m), 1);
  const int f0 = logf0_channel(num_mcc);
  for (const auto &p : path.points) {
    warped_f0[static_cast<std::size_t>(p.b)] += static_cast<double>(converted.at(f0, p.a));
    counts[static_cast<std::size_t>(p.b)] += 1;
    warped_voiced[static_cast<std::size_t>(p.b)] =
        warped_voiced[static_cast<std::size_t>(p.b)] && frame_is_voiced(converted, num_mcc, p.a);
  }
  std::vector<double> x, y;
  for (int j = 0; j < m; ++j) {
    if (counts[static_cast<std::size_t>(j)] == 0) continue;
    if (!warped_voiced[static_cast<std::size_t>(j)]) continue;
    if (!frame_is_voiced(reference, num_mcc, j)) continue;
    x.push_back(warped_f0[static_cast<std::size_t>(j)] / counts[static_cast<std::size_t>(j)]);
    y.push_back(static_cast<double>(reference.at(f0, j)));
  }
  if (x.size() < 2) throw DataError("lfc: fewer than 2 jointly voiced frames");
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0 || syy == 0) throw DataError("lfc: constant contour");
  return sxy / (std::sqrt(sxx) * std::sqrt(syy));
}

// Local duration ratio: regression slope of converted-vs-reference path
// indices over 33-point windows. Returns the per-utterance median slope
// (empty when the path is shorter than a full window).
struct LdrResult {
  double median_slope = 0;
  double deviation_pct = 0;  // |median - 1| * 100
  std::size_t windows = 0;
};

inline std::optional<LdrResult> ldr(const FeatureSequence &converted,
                                    const FeatureSequence &reference, int num_mcc) {
  auto path = dtw_align(converted, reference, num_mcc);
  const int j_total = static_cast<int>(path.points.size());
  const int half = 16;
  if (j_total < 2 * half + 1) return std::nullopt;  // caller reports the skip
  std::vector<double> slopes;
  for (int j = half; j + half < j_total; ++j) {
    double pbar = 0, qbar = 0;
    for (int j2 = j - half; j2 <= j + half; ++j2) {
      pbar += path.points[static_cast<std::size_t>(j2)].b;  // reference index
      qbar += path.points[static_cast<std::size_t>(j2)].a;  // converted index
    }
    pbar /= (2 * half + 1);
    qbar /= (2 * half + 1);
    double num = 0, den = 0;
    for (int j2 = j - half; j2 <= j + half; ++j2) {
      const double dp = path.points[static_cast<std::size_t>(j2)].b - pbar;
      const double dq = path.points[static_cast<std::size_t>(j2)].a - qbar;
      num += dp * dq;
      den += dp * dp;
    }
    if (den == 0) continue;  // window without reference progress
    slopes.push_back(num / den);
  }
  if (slopes.empty()) return std::nullopt;
  std::sort(slopes.begin(), slopes.end());
  LdrResult out;
  const std::size_t mid = slopes.size() / 2;
  out.median_slope = slopes.size() % 2 == 1 ? slopes[mid] : 0.5 * (slopes[mid - 1] + slopes[mid]);
  out.deviation_pct = std::abs(out.median_slope - 1.0) * 100.0;
  out.windows = slopes.size();
  return out;
}

// ---------------------------------------------------------------------------
// Sequence comparison helpers

// Mean per-frame weighted L1 distance between equal-length sequences.
inline double weighted_l1_distance(const FeatureSequence &a, const FeatureSequence &b,
                                   const std::vector<real> &row_w) {
  require_shape(a.dim == b.dim && a.length == b.length, "weighted_l1_distance: shape mismatch");
  require_shape(static_cast<int>(row_w.size()) == a.dim, "weighted_l1_distance: weight mismatch");
  double acc = 0;
  for (int i = 0; i < a.dim; ++i)
    for (int n = 0; n < a.length; ++n)
      acc += static_cast<double>(row_w[static_cast<std::size_t>(i)]) *
             std::abs(static_cast<double>(a.at(i, n)) - static_cast<double>(b.at(i, n)));
  return acc / static_cast<double>(a.length);
}

// Maps a source sequence onto the target time axis using an oracle warp:
// each target frame averages the source frames the warp assigns to it.
inline FeatureSequence resample_by_warp(const FeatureSequence &src,
                                        const std::vector<DtwPath::Pair> &warp, int trg_len) {
  FeatureSequence out(src.dim, trg_len, src.frame_period_ms);
  std::vector<int> counts(static_cast<std::size_t>(trg_len), 0);
  for (const auto &p : warp) {
    require_shape(p.a >= 0 && p.a < src.length && p.b >= 0 && p.b < trg_len,
                  "resample_by_warp: warp index out of range");
    for (int i = 0; i < src.dim; ++i) out.at(i, p.b) += src.at(i, p.a);
    counts[static_cast<std::size_t>(p.b)] += 1;
  }
  for (int n = 0; n < trg_len; ++n) {
    require(counts[static_cast<std::size_t>(n)] > 0, "resample_by_warp: uncovered target frame");
    for (int i = 0; i < src.dim; ++i)
      out.at(i, n) /= static_cast<real>(counts[static_cast<std::size_t>(n)]);
  }
  return out;
}

// Linear time-rescaling to a new length (frame-wise interpolation).
inline FeatureSequence resample_linear(const FeatureSequence &s, int new_len) {
  require(new_len >= 1 && s.length >= 1, "resample_linear: empty");
  FeatureSequence out(s.dim, new_len, s.frame_period_ms);
  for (int n = 0; n < new_len; ++n) {
    const double u = new_len > 1
                         ? static_cast<double>(n) * (s.length - 1) / (new_len - 1)
                         : 0.0;
    const int lo = static_cast<int>(u);
    const int hi = std::min(lo + 1, s.length - 1);
    const real fr = static_cast<real>(u - lo);
    for (int i = 0; i < s.dim; ++i)
      out.at(i, n) = (real(1) - fr) * s.at(i, lo) + fr * s.at(i, hi);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation report: per-utterance rows plus corpus means with normal
// 95% confidence intervals. Fixed formatting so identical runs produce
// byte-identical reports.

struct UtteranceEval {
  std::string sentence, source, target;
  double mcd = 0;
  double lfc_value = 0;
  bool lfc_valid = false;
  std::optional<LdrResult> ldr_value;
};

struct SummaryStat {
  double mean = 0, ci95 = 0;
  std::size_t n = 0;
};

inline SummaryStat summarize(const std::vector<double> &xs) {
  SummaryStat s;
  s.n = xs.size();
  if (xs.empty()) return s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  if (xs.size() >= 2) {
    double ss = 0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    const double sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
    s.ci95 = 1.96 * sd / std::sqrt(static_cast<double>(xs.size()));
  }
  return s;
}

inline void write_evaluation_report(std::ostream &os, const std::vector<UtteranceEval> &rows) {
  char buf[256];
  os << "# seqvc evaluation report\n";
  std::vector<double> mcds, lfcs, ldrs;
  for (const auto &r : rows) {
    std::string ldr_text = "skipped";
    if (r.ldr_value) {
      std::snprintf(buf, sizeof(buf), "%.6f dev %.6f", r.ldr_value->median_slope,
                    r.ldr_value->deviation_pct);
      ldr_text = buf;
      ldrs.push_back(r.ldr_value->deviation_pct);
    }
    std::string lfc_text = "skipped";
    if (r.lfc_valid) {
      std::snprintf(buf, sizeof(buf), "%.6f", r.lfc_value);
      lfc_text = buf;
      lfcs.push_back(r.lfc_value);
    }
    mcds.push_back(r.mcd);
    std::snprintf(buf, sizeof(buf), "utterance %s %s %s mcd_db %.6f lfc %s ldr %s\n",
                  r.sentence.c_str(), r.source.c_str(), r.target.c_str(), r.mcd,
                  lfc_text.c_str(), ldr_text.c_str());
    os << buf;
  }
  auto line = [&](const char *name, const SummaryStat &s) {
    std::snprintf(buf, sizeof(buf), "summary %s mean %.6f ci95 %.6f n %zu\n", name, s.mean,
                  s.ci95, s.n);
    os << buf;
  };
  line("mcd_db", summarize(mcds));
  line("lfc", summarize(lfcs));
  line("ldr_dev_pct", summarize(ldrs));
}

}  // namespace seqvc

#endif  // SEQVC_METRICS_HPP_
