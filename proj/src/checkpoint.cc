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

#include "bsmpc/checkpoint.h"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace bsmpc {
namespace {

constexpr char kMagic[8] = {'B', 'S', 'M', 'P', 'C', 'C', 'K', '1'};

void put_u64(std::ostream& os, std::uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void put_string(std::ostream& os, const std::string& s) {
  put_u64(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint64_t get_u64(std::istream& is) {
  std::uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

std::string get_string(std::istream& is) {
  const std::uint64_t n = get_u64(is);
  if (n > (1ull << 32)) throw std::runtime_error("checkpoint: corrupt length");
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return s;
}

}  // namespace

const DenseArray& Checkpoint::at(const std::string& name) const {
  for (const auto& [n, a] : arrays) {
    if (n == name) return a;
  }
  throw std::runtime_error("checkpoint: missing array '" + name + "'");
}

bool Checkpoint::contains(const std::string& name) const {
  for (const auto& entry : arrays) {
    if (entry.first == name) return true;
  }
  return false;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("checkpoint: cannot write " + path.string());
  os.write(kMagic, sizeof(kMagic));
  put_string(os, meta.dump());
  put_u64(os, arrays.size());
  for (const auto& [name, a] : arrays) {
    put_string(os, name);
    put_u64(os, a.shape().size());
    for (std::size_t d : a.shape()) put_u64(os, d);
    os.write(reinterpret_cast<const char*>(a.data().data()),
             static_cast<std::streamsize>(a.size() * sizeof(double)));
  }
  if (!os) throw std::runtime_error("checkpoint: write failed " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path.string());
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("checkpoint: bad magic in " + path.string());
  }
  Checkpoint ck;
  ck.meta = nlohmann::json::parse(get_string(is));
  const std::uint64_t count = get_u64(is);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = get_string(is);
    const std::uint64_t rank = get_u64(is);
    if (rank == 0 || rank > 8) throw std::runtime_error("checkpoint: bad rank");
    std::vector<std::size_t> shape(rank);
    std::size_t n = 1;
    for (auto& d : shape) {
      d = get_u64(is);
      n *= d;
    }
    std::vector<double> data(n);
    is.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
    if (!is) throw std::runtime_error("checkpoint: truncated array " + name);
    ck.arrays.emplace_back(std::move(name),
                           DenseArray(std::move(shape), std::move(data)));
  }
  return ck;
}

void write_param_store(Checkpoint& ck, const std::string& prefix,
                       const ParamStore& store) {
  for (std::size_t i = 0; i < store.size(); ++i) {
    const std::string base = prefix + "/" + store.name(i);
    ck.arrays.emplace_back(base, DenseArray::from_matrix(store.value(i)));
    ck.arrays.emplace_back(base + "#m",
                           DenseArray::from_matrix(store.first_moment(i)));
    ck.arrays.emplace_back(base + "#v",
                           DenseArray::from_matrix(store.second_moment(i)));
  }
  ck.meta["steps"][prefix] = store.step();
}

void read_param_store(const Checkpoint& ck, const std::string& prefix,
                      ParamStore& store) {
  for (std::size_t i = 0; i < store.size(); ++i) {
    const std::string base = prefix + "/" + store.name(i);
    store.restore_state(i, ck.at(base).to_matrix(),
                        ck.at(base + "#m").to_matrix(),
                        ck.at(base + "#v").to_matrix());
  }
  store.set_step(ck.meta.at("steps").at(prefix).get<std::int64_t>());
}

std::string rng_state(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

void set_rng_state(Rng& rng, const std::string& state) {
  std::istringstream is(state);
  is >> rng;
  if (!is) throw std::runtime_error("checkpoint: bad RNG state");
}

}  // namespace bsmpc
