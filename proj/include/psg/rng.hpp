// Copyright 2026 The PSG Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef PSG_RNG_HPP_
#define PSG_RNG_HPP_

#include <cstdint>
#include <random>
#include <string_view>

namespace psg {

using Rng = std::mt19937_64;

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// FNV-1a; only used to turn stream names into seed material.
inline uint64_t hash_name(std::string_view name) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Derives the seed of a named substream (e.g. "dp-noise", "theta-init" with
// index = run number) from the master seed. Streams with different names or
// indices are decorrelated, so the draw order inside one stream never
// depends on how the others are consumed.
inline uint64_t derive_seed(uint64_t master, std::string_view name,
                            uint64_t index = 0) {
  return splitmix64(splitmix64(master ^ hash_name(name)) + index);
}

inline Rng make_stream(uint64_t master, std::string_view name,
                       uint64_t index = 0) {
  return Rng(derive_seed(master, name, index));
}

}  // namespace psg

#endif  // PSG_RNG_HPP_
