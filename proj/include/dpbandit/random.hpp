//
// Copyright 2026 The dpbandit Authors
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
//

// Counter-based random streams.
//
// Every draw is a pure function of (seed, index, lane), so a value can be
// recomputed on demand without replaying earlier draws. This is what lets the
// online and tableau interaction drivers see bit-identical rewards, and lets
// replications run in any order or on any thread.

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace dpbandit {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives an independent child seed; used for per-replication, per-arm and
// per-purpose streams.
constexpr std::uint64_t derive_seed(std::uint64_t parent,
                                    std::uint64_t tag) noexcept {
  return splitmix64(parent ^ splitmix64(tag + 0x632be59bd9b4e019ULL));
}

// Well-known stream tags.
namespace stream_tag {
inline constexpr std::uint64_t kRewards = 1;
inline constexpr std::uint64_t kContexts = 2;
inline constexpr std::uint64_t kParameters = 3;
inline constexpr std::uint64_t kPolicy = 4;
}  // namespace stream_tag

class CounterStream {
 public:
  constexpr explicit CounterStream(std::uint64_t seed = 0) noexcept
      : seed_(seed) {}

  constexpr std::uint64_t seed() const noexcept { return seed_; }

  constexpr std::uint64_t bits(std::uint64_t index,
                               std::uint64_t lane = 0) const noexcept {
    std::uint64_t h = splitmix64(seed_ ^ splitmix64(index));
    return splitmix64(h + 0xd1b54a32d192ed03ULL * (lane + 1));
  }

  // Uniform on the open interval (0, 1); 53 bits of resolution.
  double uniform(std::uint64_t index, std::uint64_t lane = 0) const noexcept {
    return (static_cast<double>(bits(index, lane) >> 11) + 0.5) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; consumes lanes 2*pair and 2*pair+1.
  double normal(std::uint64_t index, std::uint64_t pair = 0) const noexcept {
    const double u1 = uniform(index, 2 * pair);
    const double u2 = uniform(index, 2 * pair + 1);
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::uint64_t seed_;
};

// Sequential adaptor over a CounterStream, for code that just wants "the next"
// draw (parameter sampling, uniform-random policies).
class SequentialStream {
 public:
  explicit SequentialStream(std::uint64_t seed) noexcept : stream_(seed) {}

  double uniform() noexcept { return stream_.uniform(next_++); }
  double normal() noexcept { return stream_.normal(next_++); }
  std::uint64_t bits() noexcept { return stream_.bits(next_++); }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) noexcept {
    return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) %
           n;
  }

 private:
  CounterStream stream_;
  std::uint64_t next_ = 0;
};

}  // namespace dpbandit
