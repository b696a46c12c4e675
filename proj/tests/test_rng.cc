// w2vs/test_rng.cc

// Copyright 2026  The w2vs authors

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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>
#include <vector>

#include "w2vs/rng.h"

using namespace w2vs;

// Reference vectors for the core block function, fixed for all time. If
// these move, every checkpoint and transcript in existence silently changes
// meaning.
TEST_CASE("philox block function matches reference vectors") {
  {
    auto out = philox4x32({0, 0, 0, 0}, {0, 0});
    CHECK(out[0] == 0x6627e8d5u);
    CHECK(out[1] == 0xe169c58du);
    CHECK(out[2] == 0xbc57ac4cu);
    CHECK(out[3] == 0x9b00dbd8u);
  }
  {
    auto out = philox4x32({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                          {0xffffffffu, 0xffffffffu});
    CHECK(out[0] == 0x408f276du);
    CHECK(out[1] == 0x41c83b0eu);
    CHECK(out[2] == 0xa20bc7c6u);
    CHECK(out[3] == 0x6d5451fdu);
  }
  {
    auto out = philox4x32({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                          {0xa4093822u, 0x299f31d0u});
    CHECK(out[0] == 0xd16cfe09u);
    CHECK(out[1] == 0x94fdccebu);
    CHECK(out[2] == 0x5001e420u);
    CHECK(out[3] == 0x24126ea1u);
  }
}

TEST_CASE("same (seed, stream, counter) replays the same sequence") {
  RngStream a(1234, 7);
  RngStream b(1234, 7);
  for (int i = 0; i < 100; i++) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("save then restore replays draws bit for bit") {
  RngStream s(42, 3);
  for (int i = 0; i < 17; i++) s.next_u64();
  auto snap = s.save();
  std::vector<uint64_t> first;
  for (int i = 0; i < 50; i++) first.push_back(s.next_u64());
  s.restore(snap);
  for (int i = 0; i < 50; i++) CHECK(s.next_u64() == first[size_t(i)]);
}

TEST_CASE("restore is idempotent") {
  RngStream s(42, 3);
  s.next_u64();
  auto snap = s.save();
  s.restore(snap);
  s.restore(snap);
  uint64_t v1 = s.next_u64();
  s.restore(snap);
  uint64_t v2 = s.next_u64();
  CHECK(v1 == v2);
}

TEST_CASE("restoring a snapshot from another stream is an error") {
  RngStream a(42, 3);
  RngStream b(42, 4);
  auto snap = a.save();
  CHECK_THROWS_AS(b.restore(snap), std::invalid_argument);
  RngStream c(43, 3);
  CHECK_THROWS_AS(c.restore(snap), std::invalid_argument);
}

TEST_CASE("draws from one stream do not move another") {
  RngStream a(99, 1);
  RngStream b(99, 2);
  uint64_t b0 = RngStream(99, 2).next_u64();
  for (int i = 0; i < 1000; i++) a.next_u64();
  CHECK(b.next_u64() == b0);
}

TEST_CASE("distinct stream ids give uncorrelated sequences") {
  // Sample correlation of uniforms across streams stays near zero.
  const int n = 100000;
  RngStream a(7, 1);
  RngStream b(7, 2);
  double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
  for (int i = 0; i < n; i++) {
    double x = a.next_double();
    double y = b.next_double();
    sa += x;
    sb += y;
    saa += x * x;
    sbb += y * y;
    sab += x * y;
  }
  double ma = sa / n, mb = sb / n;
  double corr = (sab / n - ma * mb) /
                std::sqrt((saa / n - ma * ma) * (sbb / n - mb * mb));
  CHECK(std::abs(corr) < 0.01);
}

TEST_CASE("uniform doubles live in [0, 1) and fill it") {
  RngStream s(5, 1);
  double mn = 1, mx = 0, sum = 0;
  const int n = 100000;
  for (int i = 0; i < n; i++) {
    double u = s.next_double();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    mn = std::min(mn, u);
    mx = std::max(mx, u);
    sum += u;
  }
  CHECK(mn < 0.001);
  CHECK(mx > 0.999);
  CHECK(std::abs(sum / n - 0.5) < 0.005);
}

TEST_CASE("next_below is in range and roughly uniform") {
  RngStream s(11, 1);
  const uint64_t n = 10;
  std::vector<int> counts(n, 0);
  const int draws = 100000;
  for (int i = 0; i < draws; i++) {
    uint64_t v = s.next_below(n);
    CHECK(v < n);
    counts[size_t(v)]++;
  }
  for (uint64_t k = 0; k < n; k++) {
    CHECK(std::abs(counts[size_t(k)] - draws / double(n)) < 5 * std::sqrt(draws / double(n)));
  }
  CHECK_THROWS_AS(s.next_below(0), std::invalid_argument);
}

TEST_CASE("shuffled_indices is a permutation and is deterministic") {
  RngStream s(21, 1);
  auto p = s.shuffled_indices(100);
  std::set<int64_t> seen(p.begin(), p.end());
  CHECK(seen.size() == 100);
  CHECK(*seen.begin() == 0);
  CHECK(*seen.rbegin() == 99);
  RngStream s2(21, 1);
  CHECK(s2.shuffled_indices(100) == p);
}

TEST_CASE("gumbel noise has the right location and scale") {
  RngStream s(31, 1);
  const int n = 200000;
  double sum = 0, sumsq = 0;
  for (int i = 0; i < n; i++) {
    double g = s.gumbel();
    sum += g;
    sumsq += g * g;
  }
  double mean = sum / n;
  double var = sumsq / n - mean * mean;
  const double euler = 0.5772156649015329;
  CHECK(std::abs(mean - euler) < 0.02);
  CHECK(std::abs(var - M_PI * M_PI / 6.0) < 0.05);
}

TEST_CASE("paired_forward replays switched-on families for the second half") {
  StreamSet streams(1000);
  PairingMode mode;  // everything on
  auto draw_all = [](Half, StreamSet& ss) {
    std::vector<uint64_t> out;
    for (int f = 0; f < kNumFamilies; f++) {
      for (int i = 0; i < 5; i++) out.push_back(ss.stream(Family(f)).next_u64());
    }
    return out;
  };
  auto [orig, noisy] = paired_forward(streams, mode, draw_all);
  CHECK(orig == noisy);
}

TEST_CASE("families switched off draw fresh values for the second half") {
  StreamSet streams(1000);
  PairingMode mode;
  mode.dropout_masks = false;
  auto draw_all = [](Half, StreamSet& ss) {
    std::vector<std::vector<uint64_t>> out(kNumFamilies);
    for (int f = 0; f < kNumFamilies; f++) {
      for (int i = 0; i < 5; i++)
        out[size_t(f)].push_back(ss.stream(Family(f)).next_u64());
    }
    return out;
  };
  auto [orig, noisy] = paired_forward(streams, mode, draw_all);
  CHECK(orig[0] == noisy[0]);
  CHECK(orig[1] != noisy[1]);
  CHECK(orig[2] == noisy[2]);
  CHECK(orig[3] == noisy[3]);
}

TEST_CASE("recorders observe identical transcripts when pairing is on") {
  StreamSet streams(77);
  std::array<DrawRecorder, kNumFamilies> rec_orig, rec_noisy;
  PairingMode mode;
  auto run_half = [&](Half h, StreamSet& ss) {
    ss.set_recorders(h == Half::kOriginal ? &rec_orig : &rec_noisy);
    for (int f = 0; f < kNumFamilies; f++) {
      for (int i = 0; i < 9; i++) ss.stream(Family(f)).next_u64();
    }
    return 0;
  };
  paired_forward(streams, mode, run_half);
  for (int f = 0; f < kNumFamilies; f++) {
    CHECK(rec_orig[size_t(f)].count == 9);
    CHECK(rec_orig[size_t(f)] == rec_noisy[size_t(f)]);
  }
}

TEST_CASE("using an undeclared family is an error") {
  StreamSet streams(5);
  streams.declare({Family::kMaskPositions, Family::kGumbelNoise});
  CHECK_NOTHROW(streams.stream(Family::kMaskPositions).next_u64());
  CHECK_THROWS_AS(streams.stream(Family::kDropoutMasks),
                  std::invalid_argument);
  streams.declare_all();
  CHECK_NOTHROW(streams.stream(Family::kDropoutMasks).next_u64());
}

TEST_CASE("family names round trip and reject junk") {
  for (int f = 0; f < kNumFamilies; f++) {
    CHECK(family_from_name(family_name(Family(f))) == Family(f));
  }
  CHECK_THROWS_AS(family_from_name("masks"), std::invalid_argument);
}

TEST_CASE("derived streams differ across purpose and indices") {
  std::set<uint64_t> ids;
  for (uint64_t a = 0; a < 20; a++) {
    for (uint64_t b = 0; b < 5; b++) {
      ids.insert(derived_stream(9, "noise", a, b).stream_id());
      ids.insert(derived_stream(9, "crop", a, b).stream_id());
    }
  }
  CHECK(ids.size() == 200);
  // Derived ids never collide with the fixed per-run ids.
  for (uint64_t id : ids) CHECK(id > 256);
  // Same inputs, same stream.
  CHECK(derived_stream(9, "noise", 3, 1).stream_id() ==
        derived_stream(9, "noise", 3, 1).stream_id());
}
