// tests/test_losses.cpp

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

#include <catch2/catch_amalgamated.hpp>

#include "seqvc/gradcheck.hpp"
#include "seqvc/losses.hpp"

using namespace seqvc;

namespace {

ModelConfig micro_config(ModelMode mode, int speakers = 2) {
  ModelConfig cfg;
  cfg.mode = mode;
  cfg.num_mcc = 28;
  cfg.reduction = 1;
  cfg.num_speakers = speakers;
  cfg.hidden = 6;
  cfg.embed_dim = 3;
  cfg.groups = 1;
  cfg.blocks_per_group = 2;
  cfg.dropout_ratio = 0;
  cfg.norm = mode == ModelMode::kPairwise ? NormMode::kOff : NormMode::kCondBatch;
  return cfg;
}

TensorPtr random_matrix(int r, int c, Rng &rng, double lo = -1, double hi = 1) {
  auto x = make_tensor({r, c});
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto &v : x->v) v = static_cast<real>(u(rng));
  return x;
}

TensorPtr column_stochastic(int n, int m, Rng &rng) {
  auto a = make_tensor({n, m});
  std::uniform_real_distribution<double> u(0.01, 1.0);
  for (int j = 0; j < m; ++j) {
    double z = 0;
    for (int i = 0; i < n; ++i) {
      const double e = u(rng);
      a->v[static_cast<std::size_t>(i) * m + j] = static_cast<real>(e);
      z += e;
    }
    for (int i = 0; i < n; ++i) a->v[static_cast<std::size_t>(i) * m + j] /= static_cast<real>(z);
  }
  return a;
}

TrainBatch micro_batch(const ModelConfig &cfg, Rng &rng, const Lengths &src_lens,
                       const Lengths &trg_lens, const Speakers &src_spk, const Speakers &trg_spk,
                       const std::vector<char> &identity) {
  const int b = static_cast<int>(src_lens.size());
  const int d = cfg.feature_dim_stacked();
  const int ns = *std::max_element(src_lens.begin(), src_lens.end());
  const int nt = *std::max_element(trg_lens.begin(), trg_lens.end());
  TrainBatch batch;
  batch.src = make_tensor({b, d, ns});
  batch.trg_in = make_tensor({b, d, nt});
  batch.trg_ref = make_tensor({b, d, nt});
  std::uniform_real_distribution<double> u(-1, 1);
  for (int i = 0; i < b; ++i)
    for (int c = 0; c < d; ++c) {
      for (int t = 0; t < src_lens[static_cast<std::size_t>(i)]; ++t)
        batch.src->v[(static_cast<std::size_t>(i) * d + c) * ns + t] = static_cast<real>(u(rng));
      for (int t = 0; t < trg_lens[static_cast<std::size_t>(i)]; ++t) {
        batch.trg_in->v[(static_cast<std::size_t>(i) * d + c) * nt + t] = static_cast<real>(u(rng));
        batch.trg_ref->v[(static_cast<std::size_t>(i) * d + c) * nt + t] = static_cast<real>(u(rng));
      }
    }
  batch.src_lens = src_lens;
  batch.trg_lens = trg_lens;
  batch.src_speakers = src_spk;
  batch.trg_speakers = trg_spk;
  batch.identity_pair = identity;
  return batch;
}

}  // namespace

TEST_CASE("guided weight matrix") {
  SECTION("zero where n/N = m/M") {
    auto w = guided_weight_matrix(4, 4, real(0.3));
    for (int n = 0; n < 4; ++n) REQUIRE(w[static_cast<std::size_t>(n) * 4 + n] == 0);
    for (real v : w) {
      REQUIRE(v >= 0);
      REQUIRE(v < 1);
    }
  }
  SECTION("closed-form value at offset 0.3 with nu=0.3") {
    // N=10, M=10: n=4, m=1 gives n/N - m/M = 0.3
    auto w = guided_weight_matrix(10, 10, real(0.3));
    const double expect = 1.0 - std::exp(-0.5);
    REQUIRE(std::abs(static_cast<double>(w[3 * 10 + 0]) - expect) < 1e-12);
  }
  SECTION("huge nu flattens the matrix") {
    auto w = guided_weight_matrix(6, 5, real(1000));
    for (real v : w) REQUIRE(v < 1e-5);
  }
}

TEST_CASE("diagonal attention loss") {
  SECTION("identity attention scores zero") {
    const int n = 5;
    auto a = make_tensor({n, n});
    for (int i = 0; i < n; ++i) a->v[static_cast<std::size_t>(i) * n + i] = 1;
    REQUIRE(dal(a, real(0.3))->v[0] == 0);
  }
  SECTION("uniform attention equals mean(W)/N, matching a reference loop") {
    const int n = 6, m = 4;
    auto a = full_tensor({n, m}, real(1) / n);
    auto w = guided_weight_matrix(n, m, real(0.3));
    double ref = 0;
    for (std::size_t i = 0; i < w.size(); ++i) ref += w[i] * (1.0 / n);
    ref /= static_cast<double>(n) * m;
    REQUIRE(static_cast<double>(dal(a, real(0.3))->v[0]) == Catch::Approx(ref).margin(1e-12));
  }
  SECTION("anti-diagonal one-hot attention scores strictly higher than diagonal") {
    const int n = 8;
    auto diag = make_tensor({n, n});
    auto anti = make_tensor({n, n});
    for (int i = 0; i < n; ++i) {
      diag->v[static_cast<std::size_t>(i) * n + i] = 1;
      anti->v[static_cast<std::size_t>(n - 1 - i) * n + i] = 1;
    }
    REQUIRE(dal(anti, real(0.3))->v[0] > dal(diag, real(0.3))->v[0]);
  }
  SECTION("transpose symmetry for square symmetric A") {
    Rng rng(11);
    const int n = 5;
    auto a = make_tensor({n, n});
    std::uniform_real_distribution<double> u(0, 1);
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j) {
        const real v = static_cast<real>(u(rng));
        a->v[static_cast<std::size_t>(i) * n + j] = v;
        a->v[static_cast<std::size_t>(j) * n + i] = v;
      }
    auto at = make_tensor({n, n});
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        at->v[static_cast<std::size_t>(i) * n + j] = a->v[static_cast<std::size_t>(j) * n + i];
    REQUIRE(dal(a, real(0.3))->v[0] == Catch::Approx(dal(at, real(0.3))->v[0]).margin(1e-15));
  }
}

TEST_CASE("orthogonal attention loss") {
  SECTION("identity attention scores zero") {
    const int n = 5;
    auto a = make_tensor({n, n});
    for (int i = 0; i < n; ++i) a->v[static_cast<std::size_t>(i) * n + i] = 1;
    REQUIRE(oal(a, real(0.3))->v[0] == 0);
  }
  SECTION("columns correlating distant source rows score positive") {
    // A A^T picks up off-diagonal mass at (0,7)/(7,0) when a column puts
    // weight on two distant source frames; identical strictly one-hot
    // columns only grow the (unpenalized) diagonal.
    const int n = 8, m = 2;
    auto c = make_tensor({n, m});
    c->v[0 * m + 0] = real(0.5);
    c->v[static_cast<std::size_t>(7) * m + 0] = real(0.5);
    c->v[0 * m + 1] = real(0.5);
    c->v[static_cast<std::size_t>(7) * m + 1] = real(0.5);
    REQUIRE(oal(c, real(0.3))->v[0] > 0);
    auto onehot = make_tensor({n, m});
    onehot->v[0 * m + 0] = 1;
    onehot->v[0 * m + 1] = 1;
    REQUIRE(oal(onehot, real(0.3))->v[0] == 0);
  }
  SECTION("random attention matches a reference triple loop") {
    Rng rng(12);
    const int n = 6, m = 5;
    auto a = column_stochastic(n, m, rng);
    auto w = guided_weight_matrix(n, n, real(0.4));
    double ref = 0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        double g = 0;
        for (int k = 0; k < m; ++k)
          g += a->v[static_cast<std::size_t>(i) * m + k] * a->v[static_cast<std::size_t>(j) * m + k];
        ref += w[static_cast<std::size_t>(i) * n + j] * std::abs(g);
      }
    ref /= static_cast<double>(n) * n;
    REQUIRE(static_cast<double>(oal(a, real(0.4))->v[0]) == Catch::Approx(ref).margin(1e-12));
  }
}

TEST_CASE("decoder and reconstruction losses") {
  const auto w = feature_weights(28, 1);
  Rng rng(13);
  SECTION("left-shifted prediction gives zero decoder loss") {
    const int d = 31, m = 6;
    auto x = random_matrix(d, m, rng);
    auto y = make_tensor({d, m});
    for (int i = 0; i < d; ++i)
      for (int t = 0; t + 1 < m; ++t)
        y->v[static_cast<std::size_t>(i) * m + t] = x->v[static_cast<std::size_t>(i) * m + t + 1];
    REQUIRE(dec_loss(y, x, w)->v[0] == 0);
  }
  SECTION("exact reconstruction gives zero") {
    auto x = random_matrix(31, 5, rng);
    auto y = std::make_shared<Tensor>(*x);
    REQUIRE(rec_loss(y, x, w)->v[0] == 0);
  }
  SECTION("random tensors match reference loops with the weighted norm") {
    const int d = 31, m = 7;
    auto y = random_matrix(d, m, rng);
    auto x = random_matrix(d, m, rng);
    double ref_dec = 0, ref_rec = 0;
    for (int i = 0; i < d; ++i)
      for (int t = 0; t < m; ++t) {
        if (t + 1 < m)
          ref_dec += w[static_cast<std::size_t>(i)] *
                     std::abs(y->v[static_cast<std::size_t>(i) * m + t] -
                              x->v[static_cast<std::size_t>(i) * m + t + 1]);
        ref_rec += w[static_cast<std::size_t>(i)] *
                   std::abs(y->v[static_cast<std::size_t>(i) * m + t] -
                            x->v[static_cast<std::size_t>(i) * m + t]);
      }
    ref_dec /= m;
    ref_rec /= m;
    REQUIRE(static_cast<double>(dec_loss(y, x, w)->v[0]) == Catch::Approx(ref_dec).margin(1e-12));
    REQUIRE(static_cast<double>(rec_loss(y, x, w)->v[0]) == Catch::Approx(ref_rec).margin(1e-12));
  }
}

TEST_CASE("total loss composition") {
  Rng rng(14);
  SECTION("all lambda zero leaves the mean decoder loss") {
    auto cfg = micro_config(ModelMode::kPairwise);
    Model model(cfg);
    Rng ir(1);
    init_parameters(model, ir);
    auto batch = micro_batch(cfg, rng, {6, 4}, {5, 7}, {}, {}, {0, 0});
    LossWeights w;
    w.lambda_r = w.lambda_d = w.lambda_o = 0;
    Rng fr(2);
    auto out = total_loss(model, batch, w, true, fr);
    REQUIRE(out.total_value == Catch::Approx(out.dec).margin(1e-12));
  }
  SECTION("identity pairs contribute nothing when lambda_i is zero") {
    auto cfg = micro_config(ModelMode::kManyToMany, 3);
    Model model(cfg);
    Rng ir(3);
    init_parameters(model, ir);
    auto batch = micro_batch(cfg, rng, {5, 5}, {6, 6}, {1, 2}, {1, 0}, {1, 0});
    LossWeights w;
    w.lambda_i = 0;
    Rng f1(4), f2(4);
    auto full = total_loss(model, batch, w, true, f1);
    // doubling only the identity item's content must not change the total
    auto batch2 = batch;
    batch2.trg_ref = std::make_shared<Tensor>(*batch.trg_ref);
    const int d = cfg.feature_dim_stacked();
    const int nt = batch.trg_in->dim(2);
    for (int c = 0; c < d; ++c)
      for (int t = 0; t < nt; ++t)
        batch2.trg_ref->v[static_cast<std::size_t>(c) * nt + t] += 3;  // item 0 = identity pair
    auto full2 = total_loss(model, batch2, w, true, f2);
    REQUIRE(full.total_value == Catch::Approx(full2.total_value).margin(1e-12));
  }
  SECTION("two-pair micro-batch matches a hand-composed sum") {
    auto cfg = micro_config(ModelMode::kPairwise);
    Model model(cfg);
    Rng ir(5);
    init_parameters(model, ir);
    auto batch = micro_batch(cfg, rng, {6, 4}, {5, 7}, {}, {}, {0, 0});
    LossWeights w;
    w.lambda_r = real(0.7);
    w.lambda_d = 11;
    w.lambda_o = 3;
    Rng fr(6);
    auto out = total_loss(model, batch, w, true, fr);
    // hand composition: run each item alone through the model ops
    const auto feat_w = feature_weights(cfg.num_mcc, cfg.reduction);
    double ref = 0;
    for (int b = 0; b < 2; ++b) {
      const int ns = batch.src_lens[static_cast<std::size_t>(b)];
      const int nt = batch.trg_lens[static_cast<std::size_t>(b)];
      const int d = cfg.feature_dim_stacked();
      auto xs = make_tensor({1, d, ns});
      auto xt_in = make_tensor({1, d, nt});
      auto xt_ref = make_tensor({1, d, nt});
      for (int c = 0; c < d; ++c)
        for (int t = 0; t < ns; ++t)
          xs->v[static_cast<std::size_t>(c) * ns + t] =
              batch.src->v[(static_cast<std::size_t>(b) * d + c) * batch.src->dim(2) + t];
      for (int c = 0; c < d; ++c)
        for (int t = 0; t < nt; ++t) {
          xt_in->v[static_cast<std::size_t>(c) * nt + t] =
              batch.trg_in->v[(static_cast<std::size_t>(b) * d + c) * batch.trg_in->dim(2) + t];
          xt_ref->v[static_cast<std::size_t>(c) * nt + t] =
              batch.trg_ref->v[(static_cast<std::size_t>(b) * d + c) * batch.trg_ref->dim(2) + t];
        }
      Rng r1(7);
      auto [kk, vv] = model.encode_source(xs, {}, true, r1);
      auto qq = model.encode_target(xt_in, {}, true, r1);
      auto a = attend(item_window(kk, 0, 0, ns), item_window(qq, 0, 0, nt));
      auto r = warp(item_window(vv, 0, 0, ns), a);
      auto rb = stack_items({r}, nt);
      auto yd = model.decode(rb, {}, true, r1);
      auto yr = model.reconstruct(rb, {}, true, r1);
      auto xt_ref2d = item_window(xt_ref, 0, 0, nt);
      const double l = static_cast<double>(dec_loss(item_window(yd, 0, 0, nt), xt_ref2d, feat_w)->v[0]) +
                       w.lambda_r * static_cast<double>(rec_loss(item_window(yr, 0, 0, nt), xt_ref2d, feat_w)->v[0]) +
                       w.lambda_d * static_cast<double>(dal(a, w.nu)->v[0]) +
                       w.lambda_o * static_cast<double>(oal(a, w.rho)->v[0]);
      ref += l / 2;
    }
    REQUIRE(out.total_value == Catch::Approx(ref).margin(1e-9));
  }
  SECTION("total is linear in each lambda") {
    auto cfg = micro_config(ModelMode::kManyToMany, 3);
    Model model(cfg);
    Rng ir(8);
    init_parameters(model, ir);
    auto batch = micro_batch(cfg, rng, {5, 6}, {6, 5}, {0, 2}, {2, 2}, {0, 1});
    auto eval_at = [&](real lr, real ld, real lo, real li) {
      LossWeights w;
      w.lambda_r = lr;
      w.lambda_d = ld;
      w.lambda_o = lo;
      w.lambda_i = li;
      Rng fr(9);
      return total_loss(model, batch, w, true, fr).total_value;
    };
    const double base = eval_at(0, 5, 3, real(0.5));
    const double once = eval_at(2, 5, 3, real(0.5));
    const double twice = eval_at(4, 5, 3, real(0.5));
    REQUIRE(twice - once == Catch::Approx(once - base).margin(1e-9));
    const double d0 = eval_at(1, 0, 3, real(0.5));
    const double d1 = eval_at(1, 7, 3, real(0.5));
    const double d2 = eval_at(1, 14, 3, real(0.5));
    REQUIRE(d2 - d1 == Catch::Approx(d1 - d0).margin(1e-9));
  }
}

TEST_CASE("losses are nonnegative and the full loss passes gradcheck") {
  Rng rng(15);
  auto cfg = micro_config(ModelMode::kPairwise);
  cfg.norm = NormMode::kBatch;
  Model model(cfg);
  Rng ir(16);
  init_parameters(model, ir);
  auto batch = micro_batch(cfg, rng, {5, 4}, {4, 6}, {}, {}, {0, 0});
  LossWeights w;
  w.lambda_r = 1;
  w.lambda_d = 20;
  w.lambda_o = 20;
  Rng fr(17);
  auto out = total_loss(model, batch, w, true, fr);
  REQUIRE(out.total_value >= 0);
  REQUIRE(out.dec >= 0);
  REQUIRE(out.rec >= 0);
  REQUIRE(out.dal >= 0);
  REQUIRE(out.oal >= 0);
  auto params = model.parameters();
  GradCheckOptions opts;
  opts.max_coords_per_tensor = 6;
  auto rep = grad_check(
      [&]() {
        Rng r(18);
        return total_loss(model, batch, w, true, r).total;
      },
      params, opts);
  REQUIRE(rep.max_rel_err < 1e-4);
}
