// tests/test_encoder.cc

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
#include "doctest.h"

#include <cmath>
#include <cstdint>
#include <vector>

#include "w2vs/encoder.h"
#include "w2vs/gradcheck.h"
#include "w2vs/rng.h"
#include "w2vs/tensor.h"
#include "testutil.h"

using namespace w2vs;

namespace {

EncoderConfig desk_config() {
  EncoderConfig cfg;
  cfg.layers = {{64, 10, 5}, {64, 8, 4}, {64, 4, 2}};
  cfg.activation = EncoderActivation::kGelu;
  cfg.norm_groups = 16;
  return cfg;
}

}  // namespace

TEST_CASE("output_length identity for kernel 1 stride 1") {
  EncoderConfig cfg;
  cfg.layers = {{3, 1, 1}, {5, 1, 1}, {2, 1, 1}};
  for (int64_t t : {1, 7, 100, 999}) {
    CHECK(output_length(t, cfg) == t);
  }
}

TEST_CASE("output_length single strided layer") {
  EncoderConfig cfg;
  cfg.layers = {{4, 10, 5}};
  CHECK(output_length(1000, cfg) == 199);
}

TEST_CASE("output_length desk stack") {
  CHECK(output_length(1000, desk_config()) == 23);
}

TEST_CASE("output_length rejects inputs below the receptive field") {
  EncoderConfig cfg = desk_config();
  int64_t need = min_input_length(cfg);
  CHECK(output_length(need, cfg) == 1);
  CHECK_THROWS_WITH_AS(output_length(need - 1, cfg),
                       doctest::Contains(cat("minimum ", need).c_str()),
                       std::domain_error);
}

TEST_CASE("config validation rejects bad layers") {
  EncoderConfig cfg;
  CHECK_THROWS_AS(validate_encoder_config(cfg), std::invalid_argument);
  cfg.layers = {{4, 2, 3}};  // stride > kernel
  CHECK_THROWS_AS(validate_encoder_config(cfg), std::invalid_argument);
  cfg.layers = {{0, 3, 1}};
  CHECK_THROWS_AS(validate_encoder_config(cfg), std::invalid_argument);
  cfg.layers = {{4, 3, 1}};
  cfg.norm_groups = 3;  // does not divide 4
  CHECK_THROWS_AS(validate_encoder_config(cfg), std::invalid_argument);
}

TEST_CASE("shape contract holds over random configs") {
  RngStream rng(41, 7);
  for (int trial = 0; trial < 120; trial++) {
    EncoderConfig cfg;
    int64_t depth = 1 + int64_t(rng.next_below(3));
    for (int64_t i = 0; i < depth; i++) {
      ConvLayerSpec l;
      l.channels = 1 + int64_t(rng.next_below(4));
      l.kernel = 1 + int64_t(rng.next_below(5));
      l.stride = 1 + int64_t(rng.next_below(uint64_t(l.kernel)));
      cfg.layers.push_back(l);
    }
    cfg.activation = trial % 2 == 0 ? EncoderActivation::kGelu
                                    : EncoderActivation::kIdentity;
    cfg.norm_groups = trial % 3 == 0 ? cfg.layers[0].channels : 0;
    int64_t t = min_input_length(cfg) + int64_t(rng.next_below(40));
    auto p = init_encoder<double>(cfg, rng);
    auto x = test::rand_const<double>({2, t}, rng);
    auto out = encode(x, cfg, p);
    CHECK(out.shape() == Shape{2, output_length(t, cfg), cfg.out_dim()});
  }
}

TEST_CASE("desk config maps (2, 1000) to (2, 23, 64)") {
  EncoderConfig cfg = desk_config();
  RngStream rng(3, 1);
  auto p = init_encoder<double>(cfg, rng);
  auto x = test::rand_const<double>({2, 1000}, rng);
  auto out = encode(x, cfg, p);
  CHECK(out.shape() == Shape{2, 23, 64});
  for (double v : *out.data_ptr()) CHECK(std::isfinite(v));

  SUBCASE("same input twice is bit-identical") {
    auto out2 = encode(x, cfg, p);
    CHECK(*out.data_ptr() == *out2.data_ptr());
  }
}

TEST_CASE("identity configuration broadcasts the input over channels") {
  EncoderConfig cfg;
  cfg.layers = {{3, 1, 1}};
  cfg.activation = EncoderActivation::kIdentity;
  cfg.norm_groups = 0;
  EncoderParams<double> p;
  p.w.push_back(Tensor<double>::param({3, 1, 1},
                                      std::vector<double>(3, 1.0)));
  p.b.push_back(Tensor<double>::param({3}, std::vector<double>(3, 0.0)));
  RngStream rng(5, 1);
  auto x = test::rand_const<double>({2, 9}, rng);
  auto out = encode(x, cfg, p);
  REQUIRE(out.shape() == Shape{2, 9, 3});
  const auto& xd = *x.data_ptr();
  const auto& od = *out.data_ptr();
  for (int64_t b = 0; b < 2; b++) {
    for (int64_t t = 0; t < 9; t++) {
      for (int64_t c = 0; c < 3; c++) {
        CHECK(od[size_t((b * 9 + t) * 3 + c)] == xd[size_t(b * 9 + t)]);
      }
    }
  }
}

TEST_CASE("shifting the input by one full hop shifts output frames by one") {
  EncoderConfig cfg;
  cfg.layers = {{4, 10, 5}, {4, 8, 4}, {3, 4, 2}};
  cfg.activation = EncoderActivation::kGelu;
  cfg.norm_groups = 0;  // norm mixes time steps, so keep the map frame-local
  int64_t hop = cfg.total_stride();
  REQUIRE(hop == 40);
  RngStream rng(17, 2);
  auto p = init_encoder<double>(cfg, rng);
  int64_t t = 1000;
  auto x = test::rand_const<double>({1, t}, rng);
  const auto& xd = *x.data_ptr();
  std::vector<double> shifted(xd.begin() + size_t(hop), xd.end());
  auto x2 = Tensor<double>::from_data({1, t - hop}, std::move(shifted));

  auto out = encode(x, cfg, p);
  auto out2 = encode(x2, cfg, p);
  int64_t f1 = out.dim(1), f2 = out2.dim(1), d = out.dim(2);
  int64_t overlap = std::min(f2, f1 - 1);
  REQUIRE(overlap >= 20);
  const auto& a = *out.data_ptr();
  const auto& b = *out2.data_ptr();
  double max_diff = 0;
  for (int64_t f = 0; f < overlap; f++) {
    for (int64_t c = 0; c < d; c++) {
      max_diff = std::max(max_diff, std::abs(b[size_t(f * d + c)] -
                                             a[size_t((f + 1) * d + c)]));
    }
  }
  CHECK(max_diff < 1e-12);
}

TEST_CASE("scalar head over encode passes the finite difference check") {
  EncoderConfig cfg;
  cfg.layers = {{3, 4, 2}, {2, 3, 2}};
  cfg.activation = EncoderActivation::kGelu;
  // One group of three channels: with one group per channel the bias would
  // be a pure shift that the norm removes, leaving an exactly-zero gradient
  // that the relative error metric cannot score.
  cfg.norm_groups = 1;
  RngStream rng(29, 4);
  auto p = init_encoder<double>(cfg, rng);
  auto x = test::rand_param<double>({2, 20}, rng);
  auto head = test::rand_const<double>({2, output_length(20, cfg),
                                        cfg.out_dim()}, rng);
  std::vector<Tensor<double>> params = {x, p.w[0], p.b[0], p.w[1], p.b[1],
                                        p.norm_gamma, p.norm_beta};
  auto fn = [&]() { return sum_all(mul(encode(x, cfg, p), head)); };
  auto res = finite_difference_check<double>(fn, params, 1e-5);
  INFO("worst ", res.worst_param, "[", res.worst_index, "] analytic ",
       res.worst_analytic, " numeric ", res.worst_numeric);
  CHECK(res.max_rel_error < 1e-4);
}

TEST_CASE("encode rejects malformed inputs") {
  EncoderConfig cfg = desk_config();
  RngStream rng(11, 1);
  auto p = init_encoder<double>(cfg, rng);
  auto bad_rank = test::rand_const<double>({2, 1, 1000}, rng);
  CHECK_THROWS_AS(encode(bad_rank, cfg, p), std::invalid_argument);
  auto short_input = test::rand_const<double>({1, 50}, rng);
  CHECK_THROWS_AS(encode(short_input, cfg, p), std::domain_error);
  EncoderParams<double> empty;
  auto x = test::rand_const<double>({1, 1000}, rng);
  CHECK_THROWS_AS(encode(x, cfg, empty), std::invalid_argument);
}
