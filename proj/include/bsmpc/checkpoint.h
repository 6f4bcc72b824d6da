// Copyright 2026 The bsmpc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef BSMPC_CHECKPOINT_H_
#define BSMPC_CHECKPOINT_H_

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bsmpc/param_store.h"
#include "bsmpc/tensor.h"

namespace bsmpc {

// Self-describing binary container:
//
//   "BSMPCCK1"                       8-byte magic
//   u64 length, bytes                UTF-8 JSON metadata
//   u64 count                        number of arrays
//   per array:
//     u64 length, bytes              name
//     u64 rank, u64 dims[rank]       shape
//     f64 data[prod(dims)]           row-major values
//
// Integers and doubles are written in host byte order (little-endian on all
// supported targets). Doubles are stored bit-exact, so a save/load round trip
// is lossless.
struct Checkpoint {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, DenseArray>> arrays;

  const DenseArray& at(const std::string& name) const;
  bool contains(const std::string& name) const;

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);
};

// Stores values, both Adam moments and the step counter under `prefix`.
void write_param_store(Checkpoint& ck, const std::string& prefix,
                       const ParamStore& store);
// The store must already have the same parameter names and shapes.
void read_param_store(const Checkpoint& ck, const std::string& prefix,
                      ParamStore& store);

std::string rng_state(const Rng& rng);
void set_rng_state(Rng& rng, const std::string& state);

}  // namespace bsmpc

#endif  // BSMPC_CHECKPOINT_H_
