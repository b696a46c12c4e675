// w2vs/checkpoint.h

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

// Binary training-state snapshots. Layout, all little endian:
//   magic "W2VS", u32 version, u64 step,
//   four sections (parameters, optimizer, rng, meta), each a u32 tensor
//   count followed by that many tensors:
//     u16 name length, UTF-8 name, u8 dtype (0 f32, 1 f64, 2 u64),
//     u8 rank, rank x u64 dims, raw scalars.
// Save, load and save again produces a byte-identical file.

#ifndef W2VS_CHECKPOINT_H_
#define W2VS_CHECKPOINT_H_

#include <cstdint>
#include <string>
#include <vector>

#include "w2vs/common.h"

namespace w2vs {

constexpr uint32_t kCheckpointVersion = 1;

struct CheckpointTensor {
  std::string name;
  DType dtype = DType::kFloat64;
  std::vector<int64_t> dims;
  // Exactly one payload is populated, matching `dtype`, so a round trip
  // never rewrites scalars in a different width.
  std::vector<float> f32;
  std::vector<double> f64;
  std::vector<uint64_t> u64;

  int64_t numel() const;
  bool operator==(const CheckpointTensor&) const = default;
};

struct Checkpoint {
  uint32_t version = kCheckpointVersion;
  uint64_t step = 0;
  std::vector<CheckpointTensor> params;
  std::vector<CheckpointTensor> opt;
  std::vector<CheckpointTensor> rng;
  std::vector<CheckpointTensor> meta;

  bool operator==(const Checkpoint&) const = default;
};

// I/O failures, bad magic, unsupported versions, truncation, and trailing
// bytes all surface as std::runtime_error.
void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace w2vs

#endif  // W2VS_CHECKPOINT_H_
