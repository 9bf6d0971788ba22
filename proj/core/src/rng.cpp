// Copyright 2026 the blidar authors
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

#include "blidar/rng.hpp"

#include <cmath>

namespace blidar {

double Rng::normal() {
  // Box-Muller; u1 kept away from 0 so log() stays finite.
  double u1 = uniform();
  if (u1 < 0x1.0p-53) u1 = 0x1.0p-53;
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

long Rng::poisson(double mean) {
  if (mean <= 0.0) return 0;
  // Knuth's product method, chunked so exp(-mean) never underflows.
  long total = 0;
  while (mean > 400.0) {
    mean -= 400.0;
    total += poisson(400.0);
  }
  const double limit = std::exp(-mean);
  double product = uniform();
  long count = 0;
  while (product > limit) {
    ++count;
    product *= uniform();
  }
  total += count;
  return total;
}

std::uint64_t Rng::derive(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 over seed ^ golden-ratio-scrambled stream index.
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace blidar
