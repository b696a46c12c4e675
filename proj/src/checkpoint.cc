// src/checkpoint.cc

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

#include "w2vs/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace w2vs {
namespace {

constexpr char kMagic[4] = {'W', '2', 'V', 'S'};

void put_bytes(std::ostream& os, const void* p, size_t n) {
  os.write(static_cast<const char*>(p), std::streamsize(n));
}

template <typename U>
void put_le(std::ostream& os, U v) {
  unsigned char b[sizeof(U)];
  for (size_t i = 0; i < sizeof(U); i++) {
    b[i] = static_cast<unsigned char>(v >> (8 * i));
  }
  put_bytes(os, b, sizeof(U));
}

void get_bytes(std::istream& is, void* p, size_t n, const char* what) {
  is.read(static_cast<char*>(p), std::streamsize(n));
  if (size_t(is.gcount()) != n) {
    throw std::runtime_error(cat("checkpoint: truncated while reading ",
                                 what));
  }
}

template <typename U>
U get_le(std::istream& is, const char* what) {
  unsigned char b[sizeof(U)];
  get_bytes(is, b, sizeof(U), what);
  U v = 0;
  for (size_t i = 0; i < sizeof(U); i++) {
    v |= U(b[i]) << (8 * i);
  }
  return v;
}

void put_tensor(std::ostream& os, const CheckpointTensor& t) {
  if (t.name.size() > std::numeric_limits<uint16_t>::max()) {
    throw std::runtime_error(cat("checkpoint: tensor name of ",
                                 t.name.size(), " bytes does not fit u16"));
  }
  put_le<uint16_t>(os, uint16_t(t.name.size()));
  put_bytes(os, t.name.data(), t.name.size());
  put_le<uint8_t>(os, uint8_t(t.dtype));
  if (t.dims.size() > 255) {
    throw std::runtime_error(cat("checkpoint: rank ", t.dims.size(),
                                 " does not fit u8"));
  }
  put_le<uint8_t>(os, uint8_t(t.dims.size()));
  int64_t n = 1;
  for (int64_t d : t.dims) {
    if (d < 0) {
      throw std::runtime_error(cat("checkpoint: negative dim in \"", t.name,
                                   "\""));
    }
    put_le<uint64_t>(os, uint64_t(d));
    n *= d;
  }
  auto expect = [&](size_t have) {
    if (int64_t(have) != n) {
      throw std::runtime_error(cat("checkpoint: tensor \"", t.name,
                                   "\" declares ", n, " scalars but holds ",
                                   have));
    }
  };
  switch (t.dtype) {
    case DType::kFloat32:
      expect(t.f32.size());
      for (float v : t.f32) put_le<uint32_t>(os, std::bit_cast<uint32_t>(v));
      break;
    case DType::kFloat64:
      expect(t.f64.size());
      for (double v : t.f64) put_le<uint64_t>(os, std::bit_cast<uint64_t>(v));
      break;
    case DType::kUint64:
      expect(t.u64.size());
      for (uint64_t v : t.u64) put_le<uint64_t>(os, v);
      break;
    default:
      throw std::runtime_error(cat("checkpoint: tensor \"", t.name,
                                   "\" has unknown dtype ", int(t.dtype)));
  }
}

CheckpointTensor get_tensor(std::istream& is) {
  CheckpointTensor t;
  auto name_len = get_le<uint16_t>(is, "tensor name length");
  t.name.resize(name_len);
  if (name_len > 0) get_bytes(is, t.name.data(), name_len, "tensor name");
  auto dtype = get_le<uint8_t>(is, "tensor dtype");
  if (dtype > 2) {
    throw std::runtime_error(cat("checkpoint: tensor \"", t.name,
                                 "\" has unknown dtype code ", int(dtype)));
  }
  t.dtype = DType(dtype);
  auto rank = get_le<uint8_t>(is, "tensor rank");
  int64_t n = 1;
  for (int i = 0; i < int(rank); i++) {
    auto d = get_le<uint64_t>(is, "tensor dim");
    if (d > (uint64_t(1) << 48)) {
      throw std::runtime_error(cat("checkpoint: tensor \"", t.name,
                                   "\" has implausible dim ", d));
    }
    t.dims.push_back(int64_t(d));
    n *= int64_t(d);
  }
  switch (t.dtype) {
    case DType::kFloat32:
      t.f32.resize(size_t(n));
      for (auto& v : t.f32) {
        v = std::bit_cast<float>(get_le<uint32_t>(is, "f32 scalar"));
      }
      break;
    case DType::kFloat64:
      t.f64.resize(size_t(n));
      for (auto& v : t.f64) {
        v = std::bit_cast<double>(get_le<uint64_t>(is, "f64 scalar"));
      }
      break;
    case DType::kUint64:
      t.u64.resize(size_t(n));
      for (auto& v : t.u64) v = get_le<uint64_t>(is, "u64 scalar");
      break;
  }
  return t;
}

void put_section(std::ostream& os, const std::vector<CheckpointTensor>& ts,
                 const char* what) {
  if (ts.size() > std::numeric_limits<uint32_t>::max()) {
    throw std::runtime_error(cat("checkpoint: ", what, " section overflow"));
  }
  put_le<uint32_t>(os, uint32_t(ts.size()));
  for (const auto& t : ts) put_tensor(os, t);
}

std::vector<CheckpointTensor> get_section(std::istream& is) {
  auto count = get_le<uint32_t>(is, "section tensor count");
  std::vector<CheckpointTensor> ts;
  ts.reserve(count);
  for (uint32_t i = 0; i < count; i++) ts.push_back(get_tensor(is));
  return ts;
}

}  // namespace

int64_t CheckpointTensor::numel() const {
  int64_t n = 1;
  for (int64_t d : dims) n *= d;
  return n;
}

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) {
    throw std::runtime_error(cat("checkpoint: cannot open \"", path,
                                 "\" for writing"));
  }
  put_bytes(os, kMagic, sizeof(kMagic));
  put_le<uint32_t>(os, ck.version);
  put_le<uint64_t>(os, ck.step);
  put_section(os, ck.params, "parameter");
  put_section(os, ck.opt, "optimizer");
  put_section(os, ck.rng, "rng");
  put_section(os, ck.meta, "meta");
  os.flush();
  if (!os) {
    throw std::runtime_error(cat("checkpoint: write to \"", path,
                                 "\" failed"));
  }
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw std::runtime_error(cat("checkpoint: cannot open \"", path, "\""));
  }
  char magic[4];
  get_bytes(is, magic, sizeof(magic), "magic");
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error(cat("checkpoint: \"", path,
                                 "\" does not start with the W2VS magic"));
  }
  Checkpoint ck;
  ck.version = get_le<uint32_t>(is, "version");
  if (ck.version != kCheckpointVersion) {
    throw std::runtime_error(cat("checkpoint: version ", ck.version,
                                 " is not supported (expected ",
                                 kCheckpointVersion, ")"));
  }
  ck.step = get_le<uint64_t>(is, "step");
  ck.params = get_section(is);
  ck.opt = get_section(is);
  ck.rng = get_section(is);
  ck.meta = get_section(is);
  is.peek();
  if (!is.eof()) {
    throw std::runtime_error(cat("checkpoint: \"", path,
                                 "\" carries trailing bytes"));
  }
  return ck;
}

}  // namespace w2vs
