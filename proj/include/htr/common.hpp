/*
 * Copyright 2026 The HTR Toolkit Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace htr {

// Error taxonomy. `category()` is stable and machine-readable; the CLI maps
// it to exit codes.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
  virtual const char* category() const noexcept { return "internal"; }
};

struct ShapeError : Error {
  using Error::Error;
  const char* category() const noexcept override { return "shape"; }
};

struct ConfigError : Error {
  using Error::Error;
  const char* category() const noexcept override { return "config"; }
};

struct IoError : Error {
  using Error::Error;
  const char* category() const noexcept override { return "io"; }
};

struct VocabError : Error {
  using Error::Error;
  const char* category() const noexcept override { return "vocab"; }
};

// Label cannot be aligned to the frame count (CTC repeat/blank rule).
struct UnalignableError : Error {
  using Error::Error;
  const char* category() const noexcept override { return "unalignable"; }
};

struct StateError : Error {
  using Error::Error;
  const char* category() const noexcept override { return "state"; }
};

// Deterministic RNG (xoshiro256++ seeded via splitmix64). All randomness in
// the toolkit flows through this so identical seeds give identical runs on
// any platform, independent of the standard library's distributions.
class Rng {
 public:
  explicit Rng(uint64_t seed);

  uint64_t next_u64();
  // [0, 1)
  double uniform();
  double uniform(double lo, double hi);
  // inclusive bounds
  int64_t uniform_int(int64_t lo, int64_t hi);
  // Box-Muller
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (int64_t i = static_cast<int64_t>(v.size()) - 1; i > 0; --i) {
      std::swap(v[i], v[uniform_int(0, i)]);
    }
  }

 private:
  uint64_t s_[4];
  double cached_ = 0.0;
  bool has_cached_ = false;
};

// Derives a child seed, e.g. per-sample seeds from a run seed.
uint64_t hash_combine(uint64_t a, uint64_t b);
uint64_t hash_str(const std::string& s);

std::vector<uint32_t> utf8_decode(const std::string& s);
std::string utf8_encode(const std::vector<uint32_t>& codepoints);

}  // namespace htr
