// tests/test_trainer.cpp

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
#include <filesystem>

#include "seqvc/trainer.hpp"

using namespace seqvc;
namespace fs = std::filesystem;

namespace {

struct MicroSetup {
  std::string dir;
  Manifest manifest;
  PreparedCorpus corpus;
  ModelConfig mcfg;
  TrainConfig tcfg;
};

MicroSetup micro_setup(ModelMode mode, std::uint64_t seed = 11, int sentences = 6) {
  MicroSetup s;
  SyntheticSpec spec;
  spec.num_speakers = 2;
  spec.sentences = sentences;
  spec.num_mcc = 8;
  spec.min_frames = 24;
  spec.max_frames = 32;
  spec.seed = seed;
  s.dir = (fs::temp_directory_path() / ("seqvc_trainer_" + std::to_string(seed) + "_" +
                                        std::string(mode_name(mode)))).string();
  fs::remove_all(s.dir);
  s.manifest = generate_corpus(spec, s.dir);
  s.corpus = prepare_corpus(s.manifest, spec.num_mcc, 2);
  s.mcfg.mode = mode;
  s.mcfg.num_mcc = spec.num_mcc;
  s.mcfg.reduction = 2;
  s.mcfg.num_speakers = 2;
  s.mcfg.hidden = 16;
  s.mcfg.embed_dim = 4;
  s.mcfg.norm = mode == ModelMode::kPairwise ? NormMode::kBatch : NormMode::kCondBatch;
  s.tcfg.batch_size = 6;
  s.tcfg.iterations = 10;
  s.tcfg.seed = seed;
  s.tcfg.checkpoint_every = 5;
  s.tcfg.src_speaker = "spk_a";
  s.tcfg.trg_speaker = "spk_b";
  s.tcfg.weights.lambda_d = 100;  // desk-scale DAL pressure at micro sizes
  s.tcfg.weights.lambda_o = 10;
  return s;
}

}  // namespace

TEST_CASE("make_batch shapes and padding") {
  auto s = micro_setup(ModelMode::kPairwise, 21);
  SECTION("batch of one has no padding") {
    s.tcfg.batch_size = 1;
    Rng rng(1);
    auto b = make_batch(s.corpus, s.mcfg, s.tcfg, rng);
    REQUIRE(b.size() == 1);
    REQUIRE(b.src->dim(2) == b.src_lens[0]);
    REQUIRE(b.trg_in->dim(2) == b.trg_lens[0]);
    REQUIRE(b.trg_lens[0] == b.trg_ref->dim(2));
  }
  SECTION("mixed lengths pad to the maximum and record true lengths") {
    s.tcfg.batch_size = 6;
    Rng rng(2);
    auto b = make_batch(s.corpus, s.mcfg, s.tcfg, rng);
    int nt_max = 0;
    for (int len : b.trg_lens) nt_max = std::max(nt_max, len);
    REQUIRE(b.trg_in->dim(2) == nt_max);
    // padded region is zero
    for (int item = 0; item < b.size(); ++item)
      for (int c = 0; c < b.trg_in->dim(1); ++c)
        for (int t = b.trg_lens[static_cast<std::size_t>(item)]; t < nt_max; ++t)
          REQUIRE(b.trg_in->v[(static_cast<std::size_t>(item) * b.trg_in->dim(1) + c) * nt_max + t] == 0);
  }
  SECTION("target stream starts with the all-zero initial frame plus encodings") {
    Rng rng(3);
    auto b = make_batch(s.corpus, s.mcfg, s.tcfg, rng);
    const int d = b.trg_ref->dim(1);
    const int nt = b.trg_ref->dim(2);
    for (int c = 0; c < d; ++c) {
      REQUIRE(b.trg_ref->v[static_cast<std::size_t>(c) * nt] == 0);  // raw zero frame
      const real pe = position_encoding_value(0, c, d);
      REQUIRE(b.trg_in->v[static_cast<std::size_t>(c) * nt] == Catch::Approx(pe).margin(1e-12));
    }
  }
  SECTION("missing speaker rejected") {
    s.tcfg.src_speaker = "spk_zz";
    Rng rng(4);
    REQUIRE_THROWS_AS(make_batch(s.corpus, s.mcfg, s.tcfg, rng), DataError);
  }
}

TEST_CASE("padded batch loss equals the sum over unpadded singletons") {
  auto s = micro_setup(ModelMode::kPairwise, 23);
  s.mcfg.dropout_ratio = 0;
  Model model(s.mcfg);
  Rng ir(5);
  init_parameters(model, ir);
  s.tcfg.batch_size = 2;
  Rng rng(6);
  auto batch = make_batch(s.corpus, s.mcfg, s.tcfg, rng);
  // ensure genuinely different lengths so padding is exercised
  REQUIRE(batch.size() == 2);

  auto params = model.parameters();
  auto eval_loss = [&](const TrainBatch &b) {
    for (auto &p : params) {
      p->ensure_grad();
      p->zero_grad();
    }
    TapeScope scope;
    Rng fr(7);
    auto out = total_loss(model, b, s.tcfg.weights, false, fr);  // eval-mode statistics
    scope.tape().backward(out.total);
    std::vector<std::vector<real>> grads;
    for (auto &p : params) grads.push_back(p->g);
    return std::make_pair(out.total_value, grads);
  };

  auto [full_loss, full_grads] = eval_loss(batch);

  double sum_single = 0;
  std::vector<std::vector<real>> sum_grads;
  for (int item = 0; item < 2; ++item) {
    TrainBatch single;
    const int d = batch.src->dim(1);
    const int ns = batch.src_lens[static_cast<std::size_t>(item)];
    const int nt = batch.trg_lens[static_cast<std::size_t>(item)];
    single.src = make_tensor({1, d, ns});
    single.trg_in = make_tensor({1, d, nt});
    single.trg_ref = make_tensor({1, d, nt});
    for (int c = 0; c < d; ++c) {
      for (int t = 0; t < ns; ++t)
        single.src->v[static_cast<std::size_t>(c) * ns + t] =
            batch.src->v[(static_cast<std::size_t>(item) * d + c) * batch.src->dim(2) + t];
      for (int t = 0; t < nt; ++t) {
        single.trg_in->v[static_cast<std::size_t>(c) * nt + t] =
            batch.trg_in->v[(static_cast<std::size_t>(item) * d + c) * batch.trg_in->dim(2) + t];
        single.trg_ref->v[static_cast<std::size_t>(c) * nt + t] =
            batch.trg_ref->v[(static_cast<std::size_t>(item) * d + c) * batch.trg_ref->dim(2) + t];
      }
    }
    single.src_lens = {ns};
    single.trg_lens = {nt};
    single.identity_pair = {batch.identity_pair[static_cast<std::size_t>(item)]};
    auto [l, g] = eval_loss(single);
    sum_single += l;
    if (sum_grads.empty())
      sum_grads = g;
    else
      for (std::size_t i = 0; i < g.size(); ++i)
        for (std::size_t j = 0; j < g[i].size(); ++j) sum_grads[i][j] += g[i][j];
  }
  // batch mean of two items vs singleton means: x2 matches the sum
  REQUIRE(full_loss * 2 == Catch::Approx(sum_single).margin(1e-9));
  for (std::size_t i = 0; i < full_grads.size(); ++i)
    for (std::size_t j = 0; j < full_grads[i].size(); ++j)
      REQUIRE(full_grads[i][j] * 2 == Catch::Approx(sum_grads[i][j]).margin(1e-9));
  fs::remove_all(s.dir);
}

TEST_CASE("adam") {
  TrainConfig cfg;
  cfg.learning_rate = real(1e-3);
  SECTION("zero gradient leaves parameters unchanged") {
    auto p = make_tensor({4}, true);
    p->v = {1, 2, 3, 4};
    p->ensure_grad();
    AdamState st;
    adam_step({p}, st, cfg);
    REQUIRE(p->v == std::vector<real>{1, 2, 3, 4});
  }
  SECTION("first step moves by about lr in the gradient sign direction") {
    auto p = make_tensor({3}, true);
    p->v = {real(0.5), real(-0.25), real(2)};
    p->ensure_grad();
    p->g = {real(0.01), real(-3), real(0.4)};
    const auto before = p->v;
    AdamState st;
    adam_step({p}, st, cfg);
    for (int i = 0; i < 3; ++i) {
      const real delta = p->v[static_cast<std::size_t>(i)] - before[static_cast<std::size_t>(i)];
      const real expect = -cfg.learning_rate * (p->g[static_cast<std::size_t>(i)] > 0 ? 1 : -1);
      REQUIRE(delta == Catch::Approx(expect).epsilon(1e-3));
    }
  }
  SECTION("identical seeds give bit-identical trajectories") {
    auto run = [&] {
      Rng rng(9);
      std::normal_distribution<double> g(0, 1);
      auto p = make_tensor({8}, true);
      for (auto &v : p->v) v = static_cast<real>(g(rng));
      AdamState st;
      for (int step = 0; step < 10; ++step) {
        p->ensure_grad();
        for (auto &gv : p->g) gv = static_cast<real>(g(rng));
        adam_step({p}, st, cfg);
        p->zero_grad();
      }
      return p->v;
    };
    REQUIRE(run() == run());
  }
  SECTION("non-finite gradients abort the step") {
    auto p = make_tensor({2}, true);
    p->v = {1, 2};
    p->ensure_grad();
    p->g[0] = std::numeric_limits<real>::quiet_NaN();
    AdamState st;
    REQUIRE_THROWS_AS(adam_step({p}, st, cfg), NumericError);
    REQUIRE(p->v == std::vector<real>{1, 2});  // untouched
  }
}

TEST_CASE("checkpoint round trip and hash guard") {
  auto s = micro_setup(ModelMode::kManyToMany, 31);
  TrainSession session(s.mcfg, s.tcfg);
  session.model.profiles = s.corpus.profiles;
  AdamState adam;
  auto params = session.model.parameters();
  adam.match(params);
  const std::uint64_t hash = fnv1a(canonical_config_string(s.mcfg, s.tcfg));
  std::ostringstream buf;
  save_checkpoint(buf, session.model, adam, 7, session.rng, hash);
  SECTION("bit-exact round trip") {
    std::istringstream in(buf.str());
    auto ck = load_checkpoint(in, hash);
    REQUIRE(ck.iteration == 7);
    auto p2 = ck.model.parameters();
    REQUIRE(p2.size() == params.size());
    for (std::size_t i = 0; i < params.size(); ++i) REQUIRE(p2[i]->v == params[i]->v);
    REQUIRE(ck.model.profiles.size() == session.model.profiles.size());
    std::ostringstream buf2;
    save_checkpoint(buf2, ck.model, ck.adam, ck.iteration, ck.rng, hash);
    REQUIRE(buf.str() == buf2.str());
  }
  SECTION("hash mismatch refused unless forced") {
    std::istringstream in(buf.str());
    REQUIRE_THROWS_AS(load_checkpoint(in, hash + 1), ConfigError);
    std::istringstream in2(buf.str());
    REQUIRE_NOTHROW(load_checkpoint(in2, hash + 1, true));
  }
  fs::remove_all(s.dir);
}

TEST_CASE("resumed training is bit-identical to an uninterrupted run") {
  auto s = micro_setup(ModelMode::kPairwise, 37);
  s.tcfg.iterations = 10;
  s.tcfg.checkpoint_every = 5;
  const std::string ckdir = s.dir + "/ck";

  TrainSession full(s.mcfg, s.tcfg);
  auto full_result = train(full, s.corpus, s.mcfg, s.tcfg, ckdir);
  REQUIRE(full_result.iterations_run == 10);
  REQUIRE(!full_result.diverged);
  REQUIRE(full_result.history_total.size() == 10);

  const std::uint64_t hash = fnv1a(canonical_config_string(s.mcfg, s.tcfg));
  auto ck = load_checkpoint_file(ckdir + "/checkpoint_000005.svck", hash);
  REQUIRE(ck.iteration == 5);
  auto resumed = TrainSession::resume(ck);
  auto resumed_result = train(resumed, s.corpus, s.mcfg, s.tcfg, "");
  REQUIRE(resumed_result.iterations_run == 5);

  auto pa = full.model.parameters();
  auto pb = resumed.model.parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) REQUIRE(pa[i]->v == pb[i]->v);
  fs::remove_all(s.dir);
}

TEST_CASE("micro training runs reduce the loss") {
  auto s = micro_setup(ModelMode::kPairwise, 41);
  s.tcfg.iterations = 500;
  s.tcfg.checkpoint_every = 0;
  s.tcfg.learning_rate = real(1e-3);  // micro widths train faster than desk scale
  TrainSession session(s.mcfg, s.tcfg);
  auto result = train(session, s.corpus, s.mcfg, s.tcfg, "");
  REQUIRE(result.iterations_run == 500);
  auto smooth = [&](std::size_t from, std::size_t to) {
    double acc = 0;
    for (std::size_t i = from; i < to; ++i) acc += result.history_total[i];
    return acc / static_cast<double>(to - from);
  };
  const double initial = smooth(0, 20);
  const double final_loss = smooth(480, 500);
  REQUIRE(final_loss < 0.5 * initial);
  fs::remove_all(s.dir);
}

TEST_CASE("diagonal attention pressure lowers the DAL value") {
  auto base = micro_setup(ModelMode::kPairwise, 43);
  base.tcfg.iterations = 300;
  base.tcfg.checkpoint_every = 0;
  base.tcfg.learning_rate = real(1e-3);
  auto run_with = [&](real lambda_d) {
    TrainConfig t = base.tcfg;
    t.weights.lambda_d = lambda_d;
    TrainSession session(base.mcfg, t);
    auto result = train(session, base.corpus, base.mcfg, t, "");
    double dal_tail = 0;
    for (std::size_t i = 250; i < 300; ++i) dal_tail += result.history_dal[i];
    return dal_tail / 50.0;
  };
  const double with_dal = run_with(100);
  const double without_dal = run_with(0);
  REQUIRE(with_dal < without_dal);
  fs::remove_all(base.dir);
}

TEST_CASE("divergence aborts with the last good checkpoint") {
  auto s = micro_setup(ModelMode::kPairwise, 47);
  s.tcfg.iterations = 4;
  s.tcfg.checkpoint_every = 2;
  TrainSession session(s.mcfg, s.tcfg);
  auto ok = train(session, s.corpus, s.mcfg, s.tcfg, "");
  REQUIRE(!ok.diverged);
  const auto good_params = [&] {
    std::vector<std::vector<real>> out;
    for (auto &p : session.model.parameters()) out.push_back(p->v);
    return out;
  }();

  TrainConfig bad = s.tcfg;
  bad.iterations = 40;
  // large enough that squared activations overflow inside normalization
  bad.learning_rate = real(1e160);
  bad.grad_clip = 0;
  auto result = train(session, s.corpus, s.mcfg, bad, "");
  REQUIRE(result.diverged);
  // session restored to a finite state
  for (auto &p : session.model.parameters())
    for (real v : p->v) REQUIRE(std::isfinite(static_cast<double>(v)));
  (void)good_params;
  fs::remove_all(s.dir);
}
