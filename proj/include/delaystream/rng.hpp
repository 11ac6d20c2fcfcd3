/*
Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    https://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/
#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>

namespace delaystream {

/// 64-bit FNV-1a over raw bytes. Stable across platforms and builds.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t hash = 0xcbf29ce484222325ULL);

/// Sub-seed for a named component: stable hash of (master_seed, component).
std::uint64_t derive_seed(std::uint64_t master_seed, std::string_view component);
std::uint64_t derive_seed(std::uint64_t master_seed, std::string_view component, std::uint64_t index);

/// Seeded random source.
///
/// Only the raw engine output of std::mt19937_64 is fixed by the standard, so
/// the distributions are implemented here to keep sample sequences identical
/// across standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1) with 53 bits of resolution.
    double uniform();

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, bound). bound must be > 0.
    std::size_t index(std::size_t bound);

    /// Standard normal via Box-Muller (one variate per call, no cached state).
    double normal();

private:
    std::mt19937_64 engine_;
};

} // namespace delaystream
