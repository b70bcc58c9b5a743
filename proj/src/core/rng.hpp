// Copyright 2026 The dpkl Authors
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

#ifndef DPKL_CORE_RNG_HPP_
#define DPKL_CORE_RNG_HPP_

#include <cstdint>
#include <span>

namespace dpkl {

// Deterministic pseudo-random stream (xoshiro256++ seeded via splitmix64).
// Every draw is fully defined by the seed and the call order, independent of
// platform or standard-library implementation; std::normal_distribution is
// deliberately avoided for this reason. Not cryptographically secure --
// statistical randomness only.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  // Uniform in [0, 1) with 53 bits of mantissa.
  double next_unit();

  // Zero-mean Gaussian via Box-Muller (two uniforms per draw, no pair
  // caching so call order alone determines the stream). sigma == 0 returns
  // exactly 0 without consuming entropy.
  double next_gaussian(double sigma);

  void fill_gaussian(std::span<double> out, double sigma);

  // Stable seed derivation for independent parallel streams, e.g.
  // derive(master_seed, cell_index, trial_index).
  static std::uint64_t derive(std::uint64_t master, std::uint64_t a,
                              std::uint64_t b);

 private:
  std::uint64_t s_[4];
};

}  // namespace dpkl

#endif  // DPKL_CORE_RNG_HPP_
