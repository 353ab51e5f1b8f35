// seqvc/losses.hpp
//
// Training losses: next-frame decoder loss, context preservation loss,
// diagonal and orthogonal attention losses, and their weighted totals for
// the pairwise and multi-speaker objectives.

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

#ifndef SEQVC_LOSSES_HPP_
#define SEQVC_LOSSES_HPP_

#include "seqvc/model.hpp"

namespace seqvc {

struct LossWeights {
  real lambda_r = 1;      // context preservation
  real lambda_d = 2000;   // diagonal attention
  real lambda_o = 2000;   // orthogonal attention
  real lambda_i = 1;      // identity mapping (multi-speaker modes)
  real nu = real(0.3);
  real rho = real(0.3);

  void validate() const {
    require(lambda_r >= 0 && lambda_d >= 0 && lambda_o >= 0 && lambda_i >= 0,
            "loss weights must be nonnegative");
    require(nu > 0 && rho > 0, "nu and rho must be positive");
  }
};

// w_{n,m} = 1 - exp(-(n/N - m/M)^2 / (2 nu^2)) with 1-based n and m, so
// w_{N,M} = 0 exactly. Row-major N x M.
inline std::vector<real> guided_weight_matrix(int n_rows, int m_cols, real nu) {
  require(n_rows >= 1 && m_cols >= 1, "guided_weight_matrix: empty");
  require(nu > 0, "guided_weight_matrix: nu must be positive");
  std::vector<real> w(static_cast<std::size_t>(n_rows) * m_cols);
  const real inv2nu2 = real(1) / (2 * nu * nu);
  for (int n = 0; n < n_rows; ++n) {
    const real rn = static_cast<real>(n + 1) / n_rows;
    for (int m = 0; m < m_cols; ++m) {
      const real rm = static_cast<real>(m + 1) / m_cols;
      const real d = rn - rm;
      w[static_cast<std::size_t>(n) * m_cols + m] = real(1) - std::exp(-d * d * inv2nu2);
    }
  }
  return w;
}

// L_dal = (1/NM) || W(nu) ⊙ A ||_1
inline TensorPtr dal(const TensorPtr &a, real nu) {
  require_shape(a->shape.size() == 2, "dal: need {N,M}");
  const int n = a->dim(0), m = a->dim(1);
  return weighted_abs_sum(a, guided_weight_matrix(n, m, nu),
                          real(1) / (static_cast<real>(n) * m));
}

// L_oal = (1/N^2) || W_{NxN}(rho) ⊙ (A A^T) ||_1
inline TensorPtr oal(const TensorPtr &a, real rho) {
  require_shape(a->shape.size() == 2, "oal: need {N,M}");
  const int n = a->dim(0);
  auto gram = matmul_nt(a, a);
  return weighted_abs_sum(gram, guided_weight_matrix(n, n, rho),
                          real(1) / (static_cast<real>(n) * n));
}

// L_dec = (1/M) || Y[:,1:M-1] - X[:,2:M] ||_1 (weighted norm): column m of
// the decoder output predicts frame m+1.
inline TensorPtr dec_loss(const TensorPtr &y, const TensorPtr &x, const std::vector<real> &feat_w) {
  require_shape(y->shape == x->shape && y->shape.size() == 2, "dec_loss: shape mismatch");
  const int m = y->dim(1);
  if (m < 2) return scalar_tensor(0);
  return weighted_l1(slice_cols(y, 0, m - 1), slice_cols(x, 1, m), feat_w,
                     real(1) / static_cast<real>(m));
}

// L_rec = (1/M) || Y~ - X ||_1 (weighted norm), in place.
inline TensorPtr rec_loss(const TensorPtr &y_rec, const TensorPtr &x, const std::vector<real> &feat_w) {
  require_shape(y_rec->shape == x->shape && y_rec->shape.size() == 2, "rec_loss: shape mismatch");
  return weighted_l1(y_rec, x, feat_w, real(1) / static_cast<real>(x->dim(1)));
}

// ---------------------------------------------------------------------------
// Batched training loss

// One training batch: padded source and target streams plus per-item truth.
// trg_in carries the all-zero initial frame and position encodings (encoder
// food); trg_ref carries the all-zero initial frame only (loss target).
struct TrainBatch {
  TensorPtr src;      // {B, D, Ns_max}
  TensorPtr trg_in;   // {B, D, Nt_max}
  TensorPtr trg_ref;  // {B, D, Nt_max}
  Lengths src_lens, trg_lens;
  Speakers src_speakers, trg_speakers;  // per item; src side empty when the mode forbids it
  std::vector<char> identity_pair;      // k == k' flags, one per item

  int size() const { return src ? src->dim(0) : 0; }
};

struct LossBreakdown {
  TensorPtr total;  // scalar, differentiable
  double dec = 0, rec = 0, dal = 0, oal = 0;  // per-batch means, unweighted
  double total_value = 0;
};

// Per item b:  L_b = L_dec + λ_r L_rec + λ_d L_dal + λ_o L_oal, weighted by
// λ_i when the item is a same-speaker pair; the total is the batch mean.
inline LossBreakdown total_loss(Model &model, const TrainBatch &batch, const LossWeights &w,
                                bool training, Rng &rng) {
  w.validate();
  const int b_count = batch.size();
  require(b_count >= 1, "total_loss: empty batch");
  require(batch.identity_pair.size() == static_cast<std::size_t>(b_count),
          "total_loss: identity flags missing");
  const auto feat_w = feature_weights(model.cfg.num_mcc, model.cfg.reduction);

  auto [k_all, v_all] = model.encode_source(batch.src, batch.src_speakers, training, rng,
                                            &batch.src_lens);
  auto q_all = model.encode_target(batch.trg_in, batch.trg_speakers, training, rng,
                                   &batch.trg_lens);

  std::vector<TensorPtr> r_items, dal_terms, oal_terms;
  for (int b = 0; b < b_count; ++b) {
    const int ns = batch.src_lens[static_cast<std::size_t>(b)];
    const int nt = batch.trg_lens[static_cast<std::size_t>(b)];
    auto kw = item_window(k_all, b, 0, ns);
    auto vw = item_window(v_all, b, 0, ns);
    auto qw = item_window(q_all, b, 0, nt);
    auto a = attend(kw, qw);
    dal_terms.push_back(dal(a, w.nu));
    oal_terms.push_back(oal(a, w.rho));
    r_items.push_back(warp(vw, a));
  }
  auto r_all = stack_items(r_items, batch.trg_in->dim(2));
  auto y_dec = model.decode(r_all, batch.trg_speakers, training, rng, &batch.trg_lens);
  auto y_rec = model.reconstruct(r_all, batch.trg_speakers, training, rng, &batch.trg_lens);

  std::vector<TensorPtr> terms;
  std::vector<real> coeffs;
  LossBreakdown out;
  for (int b = 0; b < b_count; ++b) {
    const int nt = batch.trg_lens[static_cast<std::size_t>(b)];
    auto yw = item_window(y_dec, b, 0, nt);
    auto rw = item_window(y_rec, b, 0, nt);
    auto xw = item_window(batch.trg_ref, b, 0, nt);
    auto dec_b = dec_loss(yw, xw, feat_w);
    auto rec_b = rec_loss(rw, xw, feat_w);
    const real item_w = batch.identity_pair[static_cast<std::size_t>(b)] ? w.lambda_i : real(1);
    const real inv_b = real(1) / b_count;
    terms.insert(terms.end(), {dec_b, rec_b, dal_terms[static_cast<std::size_t>(b)],
                               oal_terms[static_cast<std::size_t>(b)]});
    coeffs.insert(coeffs.end(),
                  {item_w * inv_b, item_w * w.lambda_r * inv_b, item_w * w.lambda_d * inv_b,
                   item_w * w.lambda_o * inv_b});
    out.dec += static_cast<double>(dec_b->v[0]) / b_count;
    out.rec += static_cast<double>(rec_b->v[0]) / b_count;
    out.dal += static_cast<double>(dal_terms[static_cast<std::size_t>(b)]->v[0]) / b_count;
    out.oal += static_cast<double>(oal_terms[static_cast<std::size_t>(b)]->v[0]) / b_count;
  }
  out.total = add_scalars(terms, coeffs);
  out.total_value = static_cast<double>(out.total->v[0]);
  return out;
}

}  // namespace seqvc

#endif  // SEQVC_LOSSES_HPP_
