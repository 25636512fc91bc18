// Copyright 2026 The Phaselocal Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include "phaselocal/util.hpp"

namespace phaselocal {

// Deterministic random source. std::mt19937 output is specified by the
// standard; the value mappings below are our own, so a (seed, call sequence)
// pair produces identical results on every platform. The std::*_distribution
// classes are implementation-defined and therefore not used.
class Rng {
 public:
  explicit Rng(std::uint64_t seed)
      : eng_(static_cast<std::uint32_t>(seed ^ (seed >> 32))) {}

  std::uint32_t next_u32() { return eng_(); }

  // Unbiased integer in [0, n); n must be > 0.
  std::uint64_t below(std::uint64_t n) {
    check(n > 0, "Rng::below requires n > 0");
    if (n == 1) return 0;
    const std::uint64_t span = (~std::uint64_t{0} / n) * n;
    while (true) {
      std::uint64_t r = (static_cast<std::uint64_t>(next_u32()) << 32) | next_u32();
      if (r < span) return r % n;
    }
  }

  long range_long(long lo, long hi_inclusive) {
    check(lo <= hi_inclusive, "Rng::range_long requires lo <= hi");
    return lo + static_cast<long>(below(static_cast<std::uint64_t>(hi_inclusive - lo) + 1));
  }

  // Uniform in [0, 1) with 53 random bits.
  double unit() {
    const std::uint64_t hi = next_u32();
    const std::uint64_t lo = next_u32();
    const std::uint64_t bits = ((hi << 32) | lo) >> 11;
    return static_cast<double>(bits) * (1.0 / 9007199254740992.0);
  }

  double uniform(double a, double b) { return a + (b - a) * unit(); }

  bool bernoulli(double p) { return unit() < p; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937 eng_;
};

// Derives an independent stream seed from a base seed plus a context tag.
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag,
                                 std::uint64_t a = 0, std::uint64_t b = 0) {
  std::uint64_t h = fnv1a(&base, sizeof(base));
  h = fnv1a(tag.data(), tag.size(), h);
  h = fnv1a(&a, sizeof(a), h);
  h = fnv1a(&b, sizeof(b), h);
  return h;
}

inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag,
                                 std::string_view name, std::uint64_t b = 0) {
  std::uint64_t h = fnv1a(&base, sizeof(base));
  h = fnv1a(tag.data(), tag.size(), h);
  h = fnv1a(name.data(), name.size(), h);
  h = fnv1a(&b, sizeof(b), h);
  return h;
}

}  // namespace phaselocal
