// tests/test_features.cpp

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
#include <cstdio>
#include <set>

#include "seqvc/features.hpp"

using namespace seqvc;

namespace {

FeatureSequence random_sequence(int num_mcc, int n, Rng &rng, double voiced_prob = 0.8) {
  FeatureSequence s(feature_dim(num_mcc), n);
  std::uniform_real_distribution<double> u(-1, 1);
  std::uniform_real_distribution<double> uv(0, 1);
  for (int i = 0; i < s.dim; ++i)
    for (int t = 0; t < n; ++t) s.at(i, t) = static_cast<real>(u(rng));
  for (int t = 0; t < n; ++t)
    s.at(vuv_channel(num_mcc), t) = uv(rng) < voiced_prob ? real(1) : real(0);
  return s;
}

}  // namespace

TEST_CASE("log-F0 interpolation") {
  const int I = 2;
  SECTION("linear midpoint") {
    FeatureSequence s(feature_dim(I), 3);
    const int f0 = logf0_channel(I), vuv = vuv_channel(I);
    s.at(vuv, 0) = 1;
    s.at(vuv, 2) = 1;
    s.at(f0, 0) = 4;
    s.at(f0, 1) = -99;  // unvoiced junk
    s.at(f0, 2) = 6;
    auto out = interpolate_logf0(s, I);
    REQUIRE(out.at(f0, 1) == Catch::Approx(5.0));
    REQUIRE(out.at(f0, 0) == 4);
    REQUIRE(out.at(f0, 2) == 6);
    REQUIRE(out.at(vuv, 1) == 0);  // V/UV untouched
  }
  SECTION("all voiced leaves sequence unchanged") {
    Rng rng(1);
    auto s = random_sequence(I, 8, rng, 1.0);
    auto out = interpolate_logf0(s, I);
    REQUIRE(out.data == s.data);
  }
  SECTION("leading and trailing runs hold the nearest voiced value") {
    FeatureSequence s(feature_dim(I), 6);
    const int f0 = logf0_channel(I), vuv = vuv_channel(I);
    s.at(vuv, 2) = 1;
    s.at(f0, 2) = 3.5;
    s.at(vuv, 3) = 1;
    s.at(f0, 3) = 4.5;
    auto out = interpolate_logf0(s, I);
    REQUIRE(out.at(f0, 0) == Catch::Approx(3.5));
    REQUIRE(out.at(f0, 1) == Catch::Approx(3.5));
    REQUIRE(out.at(f0, 4) == Catch::Approx(4.5));
    REQUIRE(out.at(f0, 5) == Catch::Approx(4.5));
  }
  SECTION("all-unvoiced rejected") {
    FeatureSequence s(feature_dim(I), 4);
    REQUIRE_THROWS_AS(interpolate_logf0(s, I), DataError);
  }
  SECTION("voiced frames never altered") {
    Rng rng(7);
    auto s = random_sequence(I, 40, rng, 0.5);
    s.at(vuv_channel(I), 0) = 1;  // ensure at least one voiced frame
    auto out = interpolate_logf0(s, I);
    for (int n = 0; n < s.length; ++n)
      if (frame_is_voiced(s, I, n))
        for (int i = 0; i < s.dim; ++i) REQUIRE(out.at(i, n) == s.at(i, n));
  }
}

TEST_CASE("normalization round trip") {
  const int I = 4;
  SECTION("identity profile") {
    Rng rng(2);
    auto s = random_sequence(I, 5, rng);
    SpeakerProfile p;
    p.mean.assign(I + 1, 0);
    p.std.assign(I + 1, 1);
    auto out = normalize(s, p, I);
    REQUIRE(out.data == s.data);
  }
  SECTION("single value") {
    FeatureSequence s(feature_dim(0), 1);
    s.at(0, 0) = 3;
    SpeakerProfile p;
    p.mean = {2};
    p.std = {real(0.5)};
    auto out = normalize(s, p, 0);
    REQUIRE(out.at(0, 0) == Catch::Approx(2.0));
  }
  SECTION("round trip under 1e-9") {
    Rng rng(3);
    auto s = random_sequence(I, 20, rng);
    SpeakerProfile p;
    std::uniform_real_distribution<double> um(-3, 3), us(0.2, 4);
    for (int i = 0; i <= I; ++i) {
      p.mean.push_back(static_cast<real>(um(rng)));
      p.std.push_back(static_cast<real>(us(rng)));
    }
    auto back = denormalize(normalize(s, p, I), p, I);
    for (std::size_t i = 0; i < s.data.size(); ++i)
      REQUIRE(std::abs(back.data[i] - s.data[i]) < 1e-9);
    // aperiodicity and V/UV untouched by normalize
    auto norm = normalize(s, p, I);
    for (int n = 0; n < s.length; ++n) {
      REQUIRE(norm.at(aperiodicity_channel(I), n) == s.at(aperiodicity_channel(I), n));
      REQUIRE(norm.at(vuv_channel(I), n) == s.at(vuv_channel(I), n));
    }
  }
  SECTION("dimension mismatch rejected") {
    FeatureSequence s(feature_dim(I), 2);
    SpeakerProfile p;
    p.mean.assign(2, 0);
    p.std.assign(2, 1);
    REQUIRE_THROWS_AS(normalize(s, p, I), ShapeError);
  }
}

TEST_CASE("stack_reduce and unstack") {
  SECTION("r=1 is the identity") {
    Rng rng(4);
    auto s = random_sequence(2, 6, rng);
    auto out = stack_reduce(s, 1);
    REQUIRE(out.dim == s.dim);
    REQUIRE(out.length == s.length);
    REQUIRE(out.data == s.data);
  }
  SECTION("31 channels stacked by 3 give 93") {
    FeatureSequence s(31, 10);
    auto out = stack_reduce(s, 3);
    REQUIRE(out.dim == 93);
    REQUIRE(out.length == 4);  // ceil(10/3)
    REQUIRE(out.frame_period_ms == Catch::Approx(24.0));
  }
  SECTION("round trip recovers N not divisible by r") {
    Rng rng(5);
    auto s = random_sequence(3, 11, rng);
    auto stacked = stack_reduce(s, 4);
    REQUIRE(stacked.orig_length == 11);
    auto back = unstack(stacked, 4);
    REQUIRE(back.length == 11);
    REQUIRE(back.dim == s.dim);
    for (std::size_t i = 0; i < s.data.size(); ++i) REQUIRE(back.data[i] == s.data[i]);
  }
  SECTION("r <= 0 rejected") {
    FeatureSequence s(4, 3);
    REQUIRE_THROWS_AS(stack_reduce(s, 0), Error);
  }
}

TEST_CASE("position encodings") {
  SECTION("channel 0 at position 0 adds sin(0)=0") {
    FeatureSequence s(8, 3);
    auto out = add_position_encoding(s);
    REQUIRE(out.at(0, 0) == 0);
    REQUIRE(out.at(1, 0) == Catch::Approx(1.0));  // cos(0)
  }
  SECTION("additive: applying twice adds exactly 2 PE") {
    Rng rng(6);
    auto s = random_sequence(3, 7, rng);
    auto once = add_position_encoding(s);
    auto twice = add_position_encoding(once);
    for (int i = 0; i < s.dim; ++i)
      for (int n = 0; n < s.length; ++n)
        REQUIRE(twice.at(i, n) - once.at(i, n) ==
                Catch::Approx(once.at(i, n) - s.at(i, n)).margin(1e-12));
  }
  SECTION("injective over positions up to 10000") {
    const int D = 93;
    std::set<std::vector<real>> seen;
    for (int pos = 0; pos < 10000; ++pos) {
      std::vector<real> pe(D);
      for (int c = 0; c < D; ++c) pe[static_cast<std::size_t>(c)] = position_encoding_value(pos, c, D);
      REQUIRE(seen.insert(pe).second);
    }
  }
}

TEST_CASE("speaker statistics") {
  const int I = 2;
  SECTION("constant channel hits the std floor") {
    FeatureSequence s(feature_dim(I), 4);
    for (int n = 0; n < 4; ++n) {
      s.at(0, n) = real(2.5);
      s.at(vuv_channel(I), n) = 1;
    }
    auto p = compute_speaker_stats({&s}, I);
    REQUIRE(p.mean[0] == Catch::Approx(2.5));
    REQUIRE(p.std[0] == Catch::Approx(1e-6));
  }
  SECTION("two voiced frames, values 1 and 3: population std") {
    FeatureSequence s(feature_dim(I), 3);
    s.at(0, 0) = 1;
    s.at(vuv_channel(I), 0) = 1;
    s.at(0, 1) = 99;  // unvoiced, ignored
    s.at(0, 2) = 3;
    s.at(vuv_channel(I), 2) = 1;
    auto p = compute_speaker_stats({&s}, I);
    REQUIRE(p.mean[0] == Catch::Approx(2.0));
    REQUIRE(p.std[0] == Catch::Approx(1.0));
  }
  SECTION("matches a reference two-pass loop over multiple sequences") {
    Rng rng(8);
    auto a = random_sequence(I, 30, rng, 0.6);
    auto b = random_sequence(I, 25, rng, 0.6);
    a.at(vuv_channel(I), 3) = 1;
    auto p = compute_speaker_stats({&a, &b}, I);
    for (int i = 0; i <= I; ++i) {
      double sum = 0;
      int cnt = 0;
      for (const auto *s : {&a, &b})
        for (int n = 0; n < s->length; ++n)
          if (frame_is_voiced(*s, I, n)) {
            sum += s->at(i, n);
            ++cnt;
          }
      const double mu = sum / cnt;
      double ss = 0;
      for (const auto *s : {&a, &b})
        for (int n = 0; n < s->length; ++n)
          if (frame_is_voiced(*s, I, n)) ss += (s->at(i, n) - mu) * (s->at(i, n) - mu);
      REQUIRE(p.mean[static_cast<std::size_t>(i)] == Catch::Approx(mu).margin(1e-12));
      REQUIRE(p.std[static_cast<std::size_t>(i)] ==
              Catch::Approx(std::sqrt(ss / cnt)).margin(1e-12));
    }
  }
  SECTION("empty or all-unvoiced slice rejected") {
    REQUIRE_THROWS_AS(compute_speaker_stats({}, I), Error);
    FeatureSequence s(feature_dim(I), 4);
    REQUIRE_THROWS_AS(compute_speaker_stats({&s}, I), Error);
  }
}

TEST_CASE("feature weights") {
  auto w = feature_weights(28, 1);
  REQUIRE(w.size() == 31);
  REQUIRE(w[0] == Catch::Approx(1.0 / 28));
  REQUIRE(w[27] == Catch::Approx(1.0 / 28));
  REQUIRE(w[28] == Catch::Approx(1.0 / 10));
  REQUIRE(w[29] == Catch::Approx(1.0 / 50));
  REQUIRE(w[30] == Catch::Approx(1.0 / 50));
  auto w3 = feature_weights(28, 3);
  REQUIRE(w3.size() == 93);
  REQUIRE(w3[31 + 28] == Catch::Approx(1.0 / 30));  // second sub-frame log F0
}

TEST_CASE("FSEQ round trip and error paths") {
  Rng rng(9);
  auto s = random_sequence(28, 17, rng);
  s.frame_period_ms = 8.0;
  const std::string path = "test_features_tmp.fsq";
  write_fseq(path, s);
  auto back = read_fseq(path);
  REQUIRE(back.dim == s.dim);
  REQUIRE(back.length == s.length);
  REQUIRE(back.frame_period_ms == s.frame_period_ms);
  for (std::size_t i = 0; i < s.data.size(); ++i)
    REQUIRE(back.data[i] == Catch::Approx(s.data[i]).margin(1e-6));  // f32 storage
  {
    std::ofstream f("test_features_bad.fsq", std::ios::binary);
    f << "JUNKJUNK";
  }
  REQUIRE_THROWS_AS(read_fseq("test_features_bad.fsq"), IoError);
  REQUIRE_THROWS_AS(read_fseq("no_such_file.fsq"), IoError);
  std::remove(path.c_str());
  std::remove("test_features_bad.fsq");
}

TEST_CASE("speaker profile file round trip") {
  SpeakerProfile p;
  p.id = 2;
  p.name = "spk_b";
  Rng rng(10);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int i = 0; i < 29; ++i) {
    p.mean.push_back(static_cast<real>(u(rng)));
    p.std.push_back(static_cast<real>(std::abs(u(rng)) + 0.1));
  }
  const std::string path = "test_profile_tmp.txt";
  write_profile(path, p);
  auto back = read_profile(path);
  REQUIRE(back.id == p.id);
  REQUIRE(back.name == p.name);
  REQUIRE(back.mean == p.mean);
  REQUIRE(back.std == p.std);
  std::remove(path.c_str());
}
