// seqvc/common.hpp

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

#ifndef SEQVC_COMMON_HPP_
#define SEQVC_COMMON_HPP_

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace seqvc {

#if defined(SEQVC_SINGLE_PRECISION)
using real = float;
#else
using real = double;
#endif

// Error taxonomy. The CLI maps each category to a distinct exit code.
struct Error : std::runtime_error {
  explicit Error(const std::string &msg) : std::runtime_error(msg) {}
};
struct ShapeError : Error {
  explicit ShapeError(const std::string &msg) : Error("shape: " + msg) {}
};
struct IoError : Error {
  explicit IoError(const std::string &msg) : Error("io: " + msg) {}
};
struct ConfigError : Error {
  explicit ConfigError(const std::string &msg) : Error("config: " + msg) {}
};
struct ModeError : Error {
  explicit ModeError(const std::string &msg) : Error("mode: " + msg) {}
};
struct NumericError : Error {
  explicit NumericError(const std::string &msg) : Error("numeric: " + msg) {}
};
struct DataError : Error {
  explicit DataError(const std::string &msg) : Error("data: " + msg) {}
};

inline void require(bool cond, const std::string &msg) {
  if (!cond) throw Error(msg);
}
inline void require_shape(bool cond, const std::string &msg) {
  if (!cond) throw ShapeError(msg);
}

using Rng = std::mt19937_64;

// Splitmix64 step, used to derive independent seeds from a master seed.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag) {
  return mix64(base ^ mix64(tag));
}

// FNV-1a, used for config hashes embedded in checkpoints.
inline std::uint64_t fnv1a(const std::string &s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

// A plain sum is non-finite iff some entry is non-finite (Inf-Inf yields
// NaN), so one vectorizable pass suffices.
inline bool all_finite(const std::vector<real> &v) {
  real acc = 0;
  for (real x : v) acc += x;
  return std::isfinite(acc);
}

}  // namespace seqvc

#endif  // SEQVC_COMMON_HPP_
