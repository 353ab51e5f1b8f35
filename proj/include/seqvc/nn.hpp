// seqvc/nn.hpp
//
// Differentiable network building blocks: dilated 1-D convolutions (causal
// and same-padded), batch/instance normalization with optional per-speaker
// affine parameters, gated linear unit blocks, dropout, and speaker
// embedding lookup/append.
//
// All length-sensitive ops accept optional per-item valid lengths; output
// frames past an item's length are forced to zero and contribute no
// gradient, so a padded batch computes exactly what the unpadded items
// would.

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

#ifndef SEQVC_NN_HPP_
#define SEQVC_NN_HPP_

#include <memory>
#include <optional>
#include <utility>

#include "seqvc/tensor.hpp"

namespace seqvc {

using Lengths = std::vector<int>;  // per-item valid frame counts

namespace detail {

inline int valid_len(const Lengths *lengths, int item, int t_full) {
  if (lengths == nullptr) return t_full;
  int len = (*lengths)[static_cast<std::size_t>(item)];
  require_shape(len >= 0 && len <= t_full, "length exceeds tensor extent");
  return len;
}

// Fixed-width vector lane for the convolution tiles (gcc/clang extension;
// lowers to whatever SIMD the target has).
typedef real vreal __attribute__((vector_size(64)));
constexpr int kLanes = static_cast<int>(sizeof(vreal) / sizeof(real));

inline vreal vload(const real *p) {
  vreal v;
  std::memcpy(&v, p, sizeof(vreal));
  return v;
}

inline real vsum(const vreal &v) {
  real acc = 0;
  for (int l = 0; l < kLanes; ++l) acc += v[l];
  return acc;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// conv1d
//
// Causal mode pads δ(κ-1) zeros on the left so output frame t sees inputs
// at frames <= t only. Same mode needs odd κ and pads δ(κ-1)/2 per side.
// Output length always equals input length.

inline TensorPtr conv1d(const TensorPtr &x, const TensorPtr &w, const TensorPtr &bias,
                        int dilation, bool causal, const Lengths *lengths = nullptr) {
  require_shape(x->shape.size() == 3, "conv1d: input must be {B,C,T}");
  require_shape(w->shape.size() == 3, "conv1d: weight must be {O,I,K}");
  const int B = x->dim(0), I = x->dim(1), T = x->dim(2);
  const int O = w->dim(0), K = w->dim(2);
  require_shape(w->dim(1) == I, "conv1d: channel mismatch");
  require_shape(T >= 1, "conv1d: zero-length input");
  require_shape(dilation >= 1 && K >= 1 && K <= 8, "conv1d: bad kernel/dilation");
  require_shape(bias->shape.size() == 1 && bias->dim(0) == O, "conv1d: bias mismatch");
  if (!causal) require_shape(K % 2 == 1, "conv1d: same-padding needs odd kernel");
  const int base = causal ? dilation * (K - 1) : dilation * (K - 1) / 2;

  auto out = make_tensor({B, O, T});
  const int span = dilation * (K - 1);
  const int Tp = T + span;
  {
    using detail::kLanes;
    using detail::vreal;
    real *yp = out->v.data();
    const real *xp = x->v.data();
    const real *wp = w->v.data();
    const real *bp = bias->v.data();
#pragma omp parallel
    {
      std::vector<real> xpad(static_cast<std::size_t>(I) * Tp);
#pragma omp for schedule(static)
      for (int b = 0; b < B; ++b) {
        const int len = detail::valid_len(lengths, b, T);
        for (int i = 0; i < I; ++i) {
          real *r = &xpad[static_cast<std::size_t>(i) * Tp];
          std::memset(r, 0, sizeof(real) * static_cast<std::size_t>(base));
          std::memcpy(r + base, xp + (static_cast<std::size_t>(b) * I + i) * T,
                      sizeof(real) * static_cast<std::size_t>(len));
          std::memset(r + base + len, 0, sizeof(real) * static_cast<std::size_t>(Tp - base - len));
        }
        for (int ob = 0; ob < O; ob += 4) {
          const int nu = std::min(4, O - ob);
          const int r1 = std::min(ob + 1, O - 1), r2 = std::min(ob + 2, O - 1),
                    r3 = std::min(ob + 3, O - 1);
          // Full-sum tiles are pure overwrites, so the last tile may overlap.
          int tb = 0;
          for (; tb + kLanes <= len; tb = (tb + 2 * kLanes <= len || tb + kLanes == len)
                                              ? tb + kLanes
                                              : len - kLanes) {
            vreal a0{}, a1{}, a2{}, a3{};
            for (int i = 0; i < I; ++i) {
              const real *xr = &xpad[static_cast<std::size_t>(i) * Tp + tb];
              const real *w0 = wp + (static_cast<std::size_t>(ob) * I + i) * K;
              const real *w1 = wp + (static_cast<std::size_t>(r1) * I + i) * K;
              const real *w2 = wp + (static_cast<std::size_t>(r2) * I + i) * K;
              const real *w3 = wp + (static_cast<std::size_t>(r3) * I + i) * K;
              for (int k = 0; k < K; ++k) {
                const vreal xv = detail::vload(xr + dilation * k);
                a0 += w0[k] * xv;
                a1 += w1[k] * xv;
                a2 += w2[k] * xv;
                a3 += w3[k] * xv;
              }
            }
            const vreal accs[4] = {a0, a1, a2, a3};
            for (int u = 0; u < nu; ++u) {
              real *yy = yp + (static_cast<std::size_t>(b) * O + ob + u) * T + tb;
              const real bv = bp[ob + u];
              for (int l = 0; l < kLanes; ++l) yy[l] = accs[u][l] + bv;
            }
          }
          for (; tb < len; ++tb) {
            for (int u = 0; u < nu; ++u) {
              real acc = bp[ob + u];
              for (int i = 0; i < I; ++i) {
                const real *xr = &xpad[static_cast<std::size_t>(i) * Tp + tb];
                const real *ww = wp + (static_cast<std::size_t>(ob + u) * I + i) * K;
                for (int k = 0; k < K; ++k) acc += ww[k] * xr[dilation * k];
              }
              yp[(static_cast<std::size_t>(b) * O + ob + u) * T + tb] = acc;
            }
          }
          // frames past the item's true length stay zero
        }
      }
    }
  }
  check_finite(*out, "conv1d");

  if (detail::want_grad({&x, &w, &bias})) {
    out->requires_grad = true;
    auto lens = lengths ? std::make_shared<Lengths>(*lengths) : nullptr;
    active_tape()->record(out, [x, w, bias, out, dilation, base, span, Tp, B, I, O, T, K, lens]() {
      using detail::kLanes;
      using detail::vreal;
      const Lengths *lp = lens ? lens.get() : nullptr;
      if (x->requires_grad) {
        x->ensure_grad();
        real *gxp = x->g.data();
        const real *gyp = out->g.data();
        const real *wp = w->v.data();
        // dL/dx[s] = sum_{o,k} w[o,i,k] * gy[o, s + base - d k]; padding gy
        // rows by (span-base | base) turns every tap into a plain shift.
#pragma omp parallel
        {
          std::vector<real> gypad(static_cast<std::size_t>(O) * Tp);
#pragma omp for schedule(static)
          for (int b = 0; b < B; ++b) {
            const int len = detail::valid_len(lp, b, T);
            for (int o = 0; o < O; ++o) {
              real *r = &gypad[static_cast<std::size_t>(o) * Tp];
              std::memset(r, 0, sizeof(real) * static_cast<std::size_t>(span - base));
              std::memcpy(r + (span - base), gyp + (static_cast<std::size_t>(b) * O + o) * T,
                          sizeof(real) * static_cast<std::size_t>(len));
              std::memset(r + (span - base) + len, 0,
                          sizeof(real) * static_cast<std::size_t>(Tp - (span - base) - len));
            }
            for (int ib = 0; ib < I; ib += 4) {
              const int nu = std::min(4, I - ib);
              const int r1 = std::min(ib + 1, I - 1), r2 = std::min(ib + 2, I - 1),
                        r3 = std::min(ib + 3, I - 1);
              int tb = 0;
              for (; tb + kLanes <= len; tb += kLanes) {
                vreal a0{}, a1{}, a2{}, a3{};
                for (int o = 0; o < O; ++o) {
                  const real *gr = &gypad[static_cast<std::size_t>(o) * Tp + tb];
                  const real *w0 = wp + (static_cast<std::size_t>(o) * I + ib) * K;
                  const real *w1 = wp + (static_cast<std::size_t>(o) * I + r1) * K;
                  const real *w2 = wp + (static_cast<std::size_t>(o) * I + r2) * K;
                  const real *w3 = wp + (static_cast<std::size_t>(o) * I + r3) * K;
                  for (int k = 0; k < K; ++k) {
                    const vreal gv = detail::vload(gr + span - dilation * k);
                    a0 += w0[k] * gv;
                    a1 += w1[k] * gv;
                    a2 += w2[k] * gv;
                    a3 += w3[k] * gv;
                  }
                }
                const vreal accs[4] = {a0, a1, a2, a3};
                for (int u = 0; u < nu; ++u) {
                  real *gx = gxp + (static_cast<std::size_t>(b) * I + ib + u) * T + tb;
                  for (int l = 0; l < kLanes; ++l) gx[l] += accs[u][l];
                }
              }
              for (; tb < len; ++tb) {
                for (int u = 0; u < nu; ++u) {
                  real acc = 0;
                  for (int o = 0; o < O; ++o) {
                    const real *gr = &gypad[static_cast<std::size_t>(o) * Tp + tb];
                    const real *ww = wp + (static_cast<std::size_t>(o) * I + ib + u) * K;
                    for (int k = 0; k < K; ++k) acc += ww[k] * gr[span - dilation * k];
                  }
                  gxp[(static_cast<std::size_t>(b) * I + ib + u) * T + tb] += acc;
                }
              }
            }
          }
        }
      }
      if (w->requires_grad) {
        w->ensure_grad();
        real *gwp = w->g.data();
        const real *gyp = out->g.data();
        const real *xp = x->v.data();
        // Shared padded input; each (o,i,k) slot is then a plain dot.
        std::vector<real> xpad(static_cast<std::size_t>(B) * I * Tp, real(0));
#pragma omp parallel for schedule(static)
        for (int b = 0; b < B; ++b) {
          const int len = detail::valid_len(lp, b, T);
          for (int i = 0; i < I; ++i)
            std::memcpy(&xpad[(static_cast<std::size_t>(b) * I + i) * Tp + base],
                        xp + (static_cast<std::size_t>(b) * I + i) * T,
                        sizeof(real) * static_cast<std::size_t>(len));
        }
#pragma omp parallel for collapse(2) schedule(static)
        for (int o = 0; o < O; ++o)
          for (int i = 0; i < I; ++i) {
            vreal acc[8] = {};
            real tailacc[8] = {};
            for (int b = 0; b < B; ++b) {
              const int len = detail::valid_len(lp, b, T);
              const real *gy = gyp + (static_cast<std::size_t>(b) * O + o) * T;
              const real *xr = &xpad[(static_cast<std::size_t>(b) * I + i) * Tp];
              int tb = 0;
              for (; tb + kLanes <= len; tb += kLanes) {
                const vreal gv = detail::vload(gy + tb);
                for (int k = 0; k < K; ++k)
                  acc[k] += gv * detail::vload(xr + tb + dilation * k);
              }
              for (; tb < len; ++tb) {
                const real gv = gy[tb];
                for (int k = 0; k < K; ++k) tailacc[k] += gv * xr[tb + dilation * k];
              }
            }
            real *gw = gwp + (static_cast<std::size_t>(o) * I + i) * K;
            for (int k = 0; k < K; ++k) gw[k] += detail::vsum(acc[k]) + tailacc[k];
          }
      }
      if (bias->requires_grad) {
        bias->ensure_grad();
        real *gbp = bias->g.data();
        const real *gyp = out->g.data();
#pragma omp parallel for schedule(static)
        for (int o = 0; o < O; ++o) {
          real acc = 0;
          for (int b = 0; b < B; ++b) {
            const int len = detail::valid_len(lp, b, T);
            const real *gy = gyp + (static_cast<std::size_t>(b) * O + o) * T;
            for (int t = 0; t < len; ++t) acc += gy[t];
          }
          gbp[o] += acc;
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Normalization

enum class NormMode {
  kBatch,
  kCondBatch,
  kInstance,
  kCondInstance,
  kOff,  // weight-norm configurations run with normalization layers removed
};

inline bool norm_is_conditional(NormMode m) {
  return m == NormMode::kCondBatch || m == NormMode::kCondInstance;
}
inline bool norm_is_batch(NormMode m) {
  return m == NormMode::kBatch || m == NormMode::kCondBatch;
}

// Affine parameters: one row per speaker in conditional modes, single row
// otherwise. Running statistics are shared across speakers.
struct NormParams {
  NormMode mode = NormMode::kBatch;
  TensorPtr gamma;  // {rows, C}
  TensorPtr beta;   // {rows, C}
  std::vector<real> running_mean;  // size C (batch modes only)
  std::vector<real> running_var;   // size C, strictly positive
  long updates = 0;                // training updates applied so far
  static constexpr real kMomentum = real(0.1);
  static constexpr real kEps = real(1e-5);

  NormParams() = default;
  NormParams(NormMode m, int channels, int speakers) : mode(m) {
    if (m == NormMode::kOff) return;
    const int rows = norm_is_conditional(m) ? speakers : 1;
    require_shape(rows >= 1 && channels >= 1, "NormParams: bad dims");
    gamma = make_tensor({rows, channels}, true);
    beta = make_tensor({rows, channels}, true);
    std::fill(gamma->v.begin(), gamma->v.end(), real(1));
    running_mean.assign(static_cast<std::size_t>(channels), real(0));
    running_var.assign(static_cast<std::size_t>(channels), real(1));
  }
  int channels() const { return gamma ? gamma->dim(1) : 0; }
};

// Speaker index per batch item; empty for unconditional layers.
using Speakers = std::vector<int>;

inline TensorPtr batch_norm(const TensorPtr &x, NormParams &p, const Speakers &speakers,
                            bool training, const Lengths *lengths = nullptr) {
  if (p.mode == NormMode::kOff) return x;
  require_shape(x->shape.size() == 3, "norm: input must be {B,C,T}");
  const int B = x->dim(0), C = x->dim(1), T = x->dim(2);
  require_shape(p.channels() == C, "norm: channel mismatch");
  const bool cond = norm_is_conditional(p.mode);
  if (cond) {
    require(static_cast<int>(speakers.size()) == B, "conditional norm needs a speaker per item");
    for (int s : speakers) require_shape(s >= 0 && s < p.gamma->dim(0), "speaker index out of range");
  }
  const bool batch_mode = norm_is_batch(p.mode);
  if (batch_mode && !training) {
    require(p.running_mean.size() == static_cast<std::size_t>(C) &&
                p.running_var.size() == static_cast<std::size_t>(C),
            "norm: eval mode before any training update (no running statistics)");
    for (real v : p.running_var)
      if (!(v > 0)) throw NumericError("norm: running variance not strictly positive");
  }

  auto out = make_tensor({B, C, T});
  // Saved statistics for backward: per channel (batch modes) or per (b,c)
  // (instance modes).
  const std::size_t nstats = batch_mode ? static_cast<std::size_t>(C)
                                        : static_cast<std::size_t>(B) * C;
  auto mean = std::make_shared<std::vector<real>>(nstats, real(0));
  auto inv_std = std::make_shared<std::vector<real>>(nstats, real(0));

  if (batch_mode) {
    if (training) {
      std::vector<real> new_mean(static_cast<std::size_t>(C)), new_var(static_cast<std::size_t>(C));
#pragma omp parallel for schedule(static)
      for (int c = 0; c < C; ++c) {
        real s1 = 0, s2 = 0;
        std::size_t cnt = 0;
        for (int b = 0; b < B; ++b) {
          const int len = detail::valid_len(lengths, b, T);
          const real *xx = &x->v[(static_cast<std::size_t>(b) * C + c) * T];
          for (int t = 0; t < len; ++t) {
            s1 += xx[t];
            s2 += xx[t] * xx[t];
          }
          cnt += static_cast<std::size_t>(len);
        }
        require(cnt > 0, "norm: no valid frames");
        const real mu = s1 / static_cast<real>(cnt);
        const real var = std::max(real(0), s2 / static_cast<real>(cnt) - mu * mu);
        (*mean)[static_cast<std::size_t>(c)] = mu;
        (*inv_std)[static_cast<std::size_t>(c)] = real(1) / std::sqrt(var + NormParams::kEps);
        new_mean[static_cast<std::size_t>(c)] = mu;
        new_var[static_cast<std::size_t>(c)] = var;
      }
      for (int c = 0; c < C; ++c) {
        p.running_mean[static_cast<std::size_t>(c)] =
            (real(1) - NormParams::kMomentum) * p.running_mean[static_cast<std::size_t>(c)] +
            NormParams::kMomentum * new_mean[static_cast<std::size_t>(c)];
        p.running_var[static_cast<std::size_t>(c)] =
            (real(1) - NormParams::kMomentum) * p.running_var[static_cast<std::size_t>(c)] +
            NormParams::kMomentum * new_var[static_cast<std::size_t>(c)];
      }
      p.updates += 1;
    } else {
      for (int c = 0; c < C; ++c) {
        (*mean)[static_cast<std::size_t>(c)] = p.running_mean[static_cast<std::size_t>(c)];
        (*inv_std)[static_cast<std::size_t>(c)] =
            real(1) / std::sqrt(p.running_var[static_cast<std::size_t>(c)] + NormParams::kEps);
      }
    }
  } else {  // instance modes: stats per (b,c) over time, in train and eval
#pragma omp parallel for collapse(2) schedule(static)
    for (int b = 0; b < B; ++b)
      for (int c = 0; c < C; ++c) {
        const int len = detail::valid_len(lengths, b, T);
        require(len > 0, "norm: no valid frames");
        const real *xx = &x->v[(static_cast<std::size_t>(b) * C + c) * T];
        real s1 = 0, s2 = 0;
        for (int t = 0; t < len; ++t) {
          s1 += xx[t];
          s2 += xx[t] * xx[t];
        }
        const real mu = s1 / static_cast<real>(len);
        const real var = std::max(real(0), s2 / static_cast<real>(len) - mu * mu);
        (*mean)[static_cast<std::size_t>(b) * C + c] = mu;
        (*inv_std)[static_cast<std::size_t>(b) * C + c] = real(1) / std::sqrt(var + NormParams::kEps);
      }
  }

#pragma omp parallel for collapse(2) schedule(static)
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      const int len = detail::valid_len(lengths, b, T);
      const std::size_t si = batch_mode ? static_cast<std::size_t>(c)
                                        : static_cast<std::size_t>(b) * C + c;
      const int row = cond ? speakers[static_cast<std::size_t>(b)] : 0;
      const real ga = p.gamma->v[static_cast<std::size_t>(row) * C + c];
      const real be = p.beta->v[static_cast<std::size_t>(row) * C + c];
      const real mu = (*mean)[si];
      const real is = (*inv_std)[si];
      const real *xx = &x->v[(static_cast<std::size_t>(b) * C + c) * T];
      real *yy = &out->v[(static_cast<std::size_t>(b) * C + c) * T];
      for (int t = 0; t < len; ++t) yy[t] = ga * (xx[t] - mu) * is + be;
    }
  check_finite(*out, "norm");

  if (detail::want_grad({&x, &p.gamma, &p.beta})) {
    out->requires_grad = true;
    auto gamma = p.gamma;
    auto beta = p.beta;
    auto lens = lengths ? std::make_shared<Lengths>(*lengths) : nullptr;
    auto spk = std::make_shared<Speakers>(speakers);
    const bool train_stats = training && batch_mode;
    const bool instance = !batch_mode;
    active_tape()->record(out, [x, gamma, beta, out, mean, inv_std, lens, spk, cond,
                                train_stats, instance, B, C, T]() {
      const Lengths *lp = lens ? lens.get() : nullptr;
      if (gamma->requires_grad || beta->requires_grad) {
        gamma->ensure_grad();
        beta->ensure_grad();
        // Sequential over items so same-speaker rows accumulate deterministically.
        for (int b = 0; b < B; ++b) {
          const int len = detail::valid_len(lp, b, T);
          const int row = cond ? (*spk)[static_cast<std::size_t>(b)] : 0;
          for (int c = 0; c < C; ++c) {
            const std::size_t si = instance ? static_cast<std::size_t>(b) * C + c
                                            : static_cast<std::size_t>(c);
            const real mu = (*mean)[si];
            const real is = (*inv_std)[si];
            const real *xx = &x->v[(static_cast<std::size_t>(b) * C + c) * T];
            const real *gy = &out->g[(static_cast<std::size_t>(b) * C + c) * T];
            real gg = 0, gb = 0;
            for (int t = 0; t < len; ++t) {
              gg += gy[t] * (xx[t] - mu) * is;
              gb += gy[t];
            }
            gamma->g[static_cast<std::size_t>(row) * C + c] += gg;
            beta->g[static_cast<std::size_t>(row) * C + c] += gb;
          }
        }
      }
      if (!x->requires_grad) return;
      x->ensure_grad();
      if (instance || train_stats) {
        // Statistics are part of the graph: the standard normalization
        // backward over each statistic's support set.
        if (instance) {
#pragma omp parallel for collapse(2) schedule(static)
          for (int b = 0; b < B; ++b)
            for (int c = 0; c < C; ++c) {
              const int len = detail::valid_len(lp, b, T);
              const int row = cond ? (*spk)[static_cast<std::size_t>(b)] : 0;
              const real ga = gamma->v[static_cast<std::size_t>(row) * C + c];
              const std::size_t si = static_cast<std::size_t>(b) * C + c;
              const real mu = (*mean)[si];
              const real is = (*inv_std)[si];
              const real *xx = &x->v[si * T];
              const real *gy = &out->g[si * T];
              real s1 = 0, s2 = 0;
              for (int t = 0; t < len; ++t) {
                const real gxh = gy[t] * ga;
                const real xh = (xx[t] - mu) * is;
                s1 += gxh;
                s2 += gxh * xh;
              }
              const real n = static_cast<real>(len);
              real *gx = &x->g[si * T];
              for (int t = 0; t < len; ++t) {
                const real gxh = gy[t] * ga;
                const real xh = (xx[t] - mu) * is;
                gx[t] += is * (gxh - s1 / n - xh * s2 / n);
              }
            }
        } else {
#pragma omp parallel for schedule(static)
          for (int c = 0; c < C; ++c) {
            const real mu = (*mean)[static_cast<std::size_t>(c)];
            const real is = (*inv_std)[static_cast<std::size_t>(c)];
            real s1 = 0, s2 = 0;
            std::size_t cnt = 0;
            for (int b = 0; b < B; ++b) {
              const int len = detail::valid_len(lp, b, T);
              const int row = cond ? (*spk)[static_cast<std::size_t>(b)] : 0;
              const real ga = gamma->v[static_cast<std::size_t>(row) * C + c];
              const real *xx = &x->v[(static_cast<std::size_t>(b) * C + c) * T];
              const real *gy = &out->g[(static_cast<std::size_t>(b) * C + c) * T];
              for (int t = 0; t < len; ++t) {
                const real gxh = gy[t] * ga;
                s1 += gxh;
                s2 += gxh * (xx[t] - mu) * is;
              }
              cnt += static_cast<std::size_t>(len);
            }
            const real n = static_cast<real>(cnt);
            for (int b = 0; b < B; ++b) {
              const int len = detail::valid_len(lp, b, T);
              const int row = cond ? (*spk)[static_cast<std::size_t>(b)] : 0;
              const real ga = gamma->v[static_cast<std::size_t>(row) * C + c];
              const real *xx = &x->v[(static_cast<std::size_t>(b) * C + c) * T];
              const real *gy = &out->g[(static_cast<std::size_t>(b) * C + c) * T];
              real *gx = &x->g[(static_cast<std::size_t>(b) * C + c) * T];
              for (int t = 0; t < len; ++t) {
                const real gxh = gy[t] * ga;
                const real xh = (xx[t] - mu) * is;
                gx[t] += is * (gxh - s1 / n - xh * s2 / n);
              }
            }
          }
        }
      } else {
        // Eval-mode batch norm: running statistics are constants.
#pragma omp parallel for collapse(2) schedule(static)
        for (int b = 0; b < B; ++b)
          for (int c = 0; c < C; ++c) {
            const int len = detail::valid_len(lp, b, T);
            const int row = cond ? (*spk)[static_cast<std::size_t>(b)] : 0;
            const real ga = gamma->v[static_cast<std::size_t>(row) * C + c];
            const real is = (*inv_std)[static_cast<std::size_t>(c)];
            const real *gy = &out->g[(static_cast<std::size_t>(b) * C + c) * T];
            real *gx = &x->g[(static_cast<std::size_t>(b) * C + c) * T];
            for (int t = 0; t < len; ++t) gx[t] += gy[t] * ga * is;
          }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dropout (training only; inverted scaling so eval is the identity)

inline TensorPtr dropout(const TensorPtr &x, real ratio, Rng &rng, bool training) {
  require(ratio >= 0 && ratio < 1, "dropout: ratio must be in [0,1)");
  if (!training || ratio == real(0)) return x;
  auto keep = std::make_shared<std::vector<unsigned char>>(x->size());
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t i = 0; i < x->size(); ++i) (*keep)[i] = u(rng) >= ratio ? 1 : 0;
  const real inv = real(1) / (real(1) - ratio);
  auto out = make_tensor(x->shape);
  for (std::size_t i = 0; i < x->size(); ++i)
    out->v[i] = (*keep)[i] ? x->v[i] * inv : real(0);
  if (detail::want_grad({&x})) {
    out->requires_grad = true;
    active_tape()->record(out, [x, out, keep, inv]() {
      x->ensure_grad();
      for (std::size_t i = 0; i < out->g.size(); ++i)
        if ((*keep)[i]) x->g[i] += out->g[i] * inv;
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Speaker embeddings

// Gathers rows of a {K,E} table -> {B,E}.
inline TensorPtr embed_rows(const TensorPtr &table, const Speakers &ids) {
  require_shape(table->shape.size() == 2, "embed_rows: table must be {K,E}");
  const int K = table->dim(0), E = table->dim(1);
  const int B = static_cast<int>(ids.size());
  require(B >= 1, "embed_rows: no ids");
  for (int id : ids) require_shape(id >= 0 && id < K, "embed_rows: id out of range");
  auto out = make_tensor({B, E});
  for (int b = 0; b < B; ++b)
    std::memcpy(&out->v[static_cast<std::size_t>(b) * E],
                &table->v[static_cast<std::size_t>(ids[static_cast<std::size_t>(b)]) * E],
                sizeof(real) * static_cast<std::size_t>(E));
  if (detail::want_grad({&table})) {
    out->requires_grad = true;
    auto idk = std::make_shared<Speakers>(ids);
    active_tape()->record(out, [table, out, idk, B, E]() {
      table->ensure_grad();
      for (int b = 0; b < B; ++b) {
        real *gt = &table->g[static_cast<std::size_t>((*idk)[static_cast<std::size_t>(b)]) * E];
        const real *go = &out->g[static_cast<std::size_t>(b) * E];
        for (int e = 0; e < E; ++e) gt[e] += go[e];
      }
    });
  }
  return out;
}

// Appends a per-item vector {B,E}, broadcast along time, to a {B,C,T}
// tensor -> {B,C+E,T}. Padded frames stay zero.
inline TensorPtr append_channels(const TensorPtr &x, const TensorPtr &z,
                                 const Lengths *lengths = nullptr) {
  require_shape(x->shape.size() == 3 && z->shape.size() == 2, "append_channels: bad ranks");
  const int B = x->dim(0), C = x->dim(1), T = x->dim(2), E = z->dim(1);
  require_shape(z->dim(0) == B, "append_channels: batch mismatch");
  auto out = make_tensor({B, C + E, T});
  for (int b = 0; b < B; ++b) {
    const int len = detail::valid_len(lengths, b, T);
    std::memcpy(&out->v[static_cast<std::size_t>(b) * (C + E) * T],
                &x->v[static_cast<std::size_t>(b) * C * T],
                sizeof(real) * static_cast<std::size_t>(C) * T);
    for (int e = 0; e < E; ++e) {
      const real zv = z->v[static_cast<std::size_t>(b) * E + e];
      real *yy = &out->v[(static_cast<std::size_t>(b) * (C + E) + C + e) * T];
      for (int t = 0; t < len; ++t) yy[t] = zv;
    }
  }
  if (detail::want_grad({&x, &z})) {
    out->requires_grad = true;
    auto lens = lengths ? std::make_shared<Lengths>(*lengths) : nullptr;
    active_tape()->record(out, [x, z, out, lens, B, C, T, E]() {
      const Lengths *lp = lens ? lens.get() : nullptr;
      if (x->requires_grad) {
        x->ensure_grad();
        for (int b = 0; b < B; ++b) {
          const real *go = &out->g[static_cast<std::size_t>(b) * (C + E) * T];
          real *gx = &x->g[static_cast<std::size_t>(b) * C * T];
          for (std::size_t i = 0; i < static_cast<std::size_t>(C) * T; ++i) gx[i] += go[i];
        }
      }
      if (z->requires_grad) {
        z->ensure_grad();
        for (int b = 0; b < B; ++b) {
          const int len = detail::valid_len(lp, b, T);
          for (int e = 0; e < E; ++e) {
            const real *go = &out->g[(static_cast<std::size_t>(b) * (C + E) + C + e) * T];
            real acc = 0;
            for (int t = 0; t < len; ++t) acc += go[t];
            z->g[static_cast<std::size_t>(b) * E + e] += acc;
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Gated linear unit block with residual connection:
//   out = B1(L1(x)) ⊙ sigmoid(B2(L2(x))) + x[1:o,:]

struct GluBlockParams {
  TensorPtr conv1_weight, conv1_bias;
  TensorPtr conv2_weight, conv2_bias;
  NormParams norm1, norm2;
  int kernel = 3;
  int dilation = 1;
  bool causal = false;
  int in_channels = 0;
  int out_channels = 0;

  GluBlockParams() = default;
  GluBlockParams(int in_ch, int out_ch, int k, int dil, bool is_causal, NormMode nm, int speakers)
      : kernel(k), dilation(dil), causal(is_causal), in_channels(in_ch), out_channels(out_ch) {
    require_shape(out_ch <= in_ch, "GluBlockParams: residual needs out_channels <= in_channels");
    require_shape(k >= 1 && dil >= 1, "GluBlockParams: bad kernel/dilation");
    if (!is_causal) require_shape(k % 2 == 1, "GluBlockParams: non-causal kernel must be odd");
    conv1_weight = make_tensor({out_ch, in_ch, k}, true);
    conv1_bias = make_tensor({out_ch}, true);
    conv2_weight = make_tensor({out_ch, in_ch, k}, true);
    conv2_bias = make_tensor({out_ch}, true);
    norm1 = NormParams(nm, out_ch, speakers);
    norm2 = NormParams(nm, out_ch, speakers);
  }
};

inline TensorPtr glu_block(const TensorPtr &x, GluBlockParams &p, const Speakers &speakers,
                           bool training, const Lengths *lengths = nullptr) {
  require_shape(x->shape.size() == 3 && x->dim(1) == p.in_channels, "glu_block: channel mismatch");
  if (norm_is_conditional(p.norm1.mode))
    require(!speakers.empty(), "glu_block: conditional norm without speaker index");
  auto lin = conv1d(x, p.conv1_weight, p.conv1_bias, p.dilation, p.causal, lengths);
  lin = batch_norm(lin, p.norm1, speakers, training, lengths);
  auto gate = conv1d(x, p.conv2_weight, p.conv2_bias, p.dilation, p.causal, lengths);
  gate = batch_norm(gate, p.norm2, speakers, training, lengths);
  auto gated = mul(lin, sigmoid(gate));
  auto res = slice_channels(x, 0, p.out_channels);
  return add(gated, res);
}

}  // namespace seqvc

#endif  // SEQVC_NN_HPP_
