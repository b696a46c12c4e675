// tests/test_checkpoint.cc

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
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "doctest.h"
#include "w2vs/checkpoint.h"

namespace w2vs {
namespace {

std::string tmp_path(const std::string& leaf) {
  auto dir = std::filesystem::temp_directory_path() / "w2vs_ckpt_test";
  std::filesystem::create_directories(dir);
  return (dir / leaf).string();
}

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(bool(is));
  return std::string(std::istreambuf_iterator<char>(is),
                     std::istreambuf_iterator<char>());
}

Checkpoint sample_checkpoint() {
  Checkpoint ck;
  ck.step = 41;
  CheckpointTensor w;
  w.name = "encoder.conv0.w";
  w.dtype = DType::kFloat64;
  w.dims = {2, 3};
  w.f64 = {0.5, -1.25, 3.0, 1e-300, -0.0, 7.5};
  ck.params.push_back(w);
  CheckpointTensor f;
  f.name = "half.precision";
  f.dtype = DType::kFloat32;
  f.dims = {3};
  f.f32 = {1.5f, -2.0f, 0.25f};
  ck.params.push_back(f);
  CheckpointTensor m = w;
  m.name = "adam.m.encoder.conv0.w";
  ck.opt.push_back(m);
  CheckpointTensor r;
  r.name = "rng.mask";
  r.dtype = DType::kUint64;
  r.dims = {3};
  r.u64 = {7, 1, 900};
  ck.rng.push_back(r);
  CheckpointTensor best;
  best.name = "meta.best_val_loss";
  best.dtype = DType::kFloat64;
  best.f64 = {2.5};
  ck.meta.push_back(best);
  return ck;
}

TEST_CASE("checkpoint round trip preserves every field") {
  auto ck = sample_checkpoint();
  auto path = tmp_path("rt.ckpt");
  save_checkpoint(ck, path);
  auto back = load_checkpoint(path);
  CHECK(back == ck);
  CHECK(back.params[0].f64[4] == 0.0);
  CHECK(std::signbit(back.params[0].f64[4]));  // -0.0 survives
}

TEST_CASE("save, load, save produces byte-identical files") {
  auto ck = sample_checkpoint();
  auto p1 = tmp_path("a.ckpt");
  auto p2 = tmp_path("b.ckpt");
  save_checkpoint(ck, p1);
  save_checkpoint(load_checkpoint(p1), p2);
  CHECK(slurp(p1) == slurp(p2));
}

TEST_CASE("the file starts with the W2VS magic and version") {
  auto path = tmp_path("magic.ckpt");
  save_checkpoint(sample_checkpoint(), path);
  auto bytes = slurp(path);
  REQUIRE(bytes.size() > 16);
  CHECK(bytes.substr(0, 4) == "W2VS");
  CHECK(uint8_t(bytes[4]) == 1);  // u32 LE version
  CHECK(uint8_t(bytes[5]) == 0);
  CHECK(uint8_t(bytes[8]) == 41);  // u64 LE step, low byte first
  CHECK(uint8_t(bytes[12]) == 0);
}

TEST_CASE("wrong magic is a format error") {
  auto path = tmp_path("bad_magic.ckpt");
  std::ofstream(path, std::ios::binary) << "NOPE and then some bytes";
  CHECK_THROWS_WITH_AS(load_checkpoint(path),
                       doctest::Contains("magic"), std::runtime_error);
}

TEST_CASE("unsupported version is a format error") {
  auto good = tmp_path("ver_good.ckpt");
  save_checkpoint(sample_checkpoint(), good);
  auto bytes = slurp(good);
  bytes[4] = 9;
  auto path = tmp_path("ver_bad.ckpt");
  std::ofstream(path, std::ios::binary) << bytes;
  CHECK_THROWS_WITH_AS(load_checkpoint(path),
                       doctest::Contains("version"), std::runtime_error);
}

TEST_CASE("truncation anywhere is a format error") {
  auto good = tmp_path("trunc_good.ckpt");
  save_checkpoint(sample_checkpoint(), good);
  auto bytes = slurp(good);
  for (size_t cut : {size_t(2), size_t(9), size_t(20), bytes.size() - 3}) {
    auto path = tmp_path("trunc.ckpt");
    std::ofstream(path, std::ios::binary) << bytes.substr(0, cut);
    CHECK_THROWS_AS(load_checkpoint(path), std::runtime_error);
  }
}

TEST_CASE("trailing bytes are a format error") {
  auto good = tmp_path("trail_good.ckpt");
  save_checkpoint(sample_checkpoint(), good);
  auto bytes = slurp(good) + "x";
  auto path = tmp_path("trail.ckpt");
  std::ofstream(path, std::ios::binary) << bytes;
  CHECK_THROWS_WITH_AS(load_checkpoint(path),
                       doctest::Contains("trailing"), std::runtime_error);
}

TEST_CASE("a missing file and a scalar-count mismatch are errors") {
  CHECK_THROWS_AS(load_checkpoint(tmp_path("absent.ckpt")),
                  std::runtime_error);
  Checkpoint ck = sample_checkpoint();
  ck.params[0].f64.pop_back();
  CHECK_THROWS_WITH_AS(save_checkpoint(ck, tmp_path("short.ckpt")),
                       doctest::Contains("declares"), std::runtime_error);
}

TEST_CASE("rank-0 tensors hold exactly one scalar") {
  Checkpoint ck;
  CheckpointTensor t;
  t.name = "meta.best_val_loss";
  t.dtype = DType::kFloat64;
  t.f64 = {1.5};
  ck.meta.push_back(t);
  auto path = tmp_path("rank0.ckpt");
  save_checkpoint(ck, path);
  auto back = load_checkpoint(path);
  REQUIRE(back.meta.size() == 1);
  CHECK(back.meta[0].dims.empty());
  CHECK(back.meta[0].f64 == std::vector<double>{1.5});
  CHECK(back.meta[0].numel() == 1);
}

}  // namespace
}  // namespace w2vs
