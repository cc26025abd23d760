// Copyright 2026 The crackloss Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <span>
#include <utility>

namespace crackloss {

/// Deterministic generator: xoshiro256** seeded through SplitMix64.
///
/// The stream is fully specified so ports in other languages can reproduce it:
///   * state words s0..s3 are four consecutive SplitMix64 outputs starting at `seed`;
///   * uniform() = (next() >> 11) * 2^-53, in [0, 1);
///   * uniform_int(n) uses rejection on the top bits (no modulo bias);
///   * normal() is Box-Muller on (1 - uniform(), uniform()), both outputs of a
///     pair are consumed in order.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed = 0);

    std::uint64_t seed() const noexcept { return seed_; }

    std::uint64_t next() noexcept;
    double uniform() noexcept;
    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
    /// Uniform on [0, n). n must be positive.
    std::uint64_t uniform_int(std::uint64_t n) noexcept;
    double normal() noexcept;
    double normal(double mean, double stddev) noexcept { return mean + stddev * normal(); }

    /// Independent generator derived from this seed and a stream id; does not
    /// advance this generator.
    SeededRng fork(std::uint64_t stream) const noexcept;

    template <class T>
    void shuffle(std::span<T> items) noexcept
    {
        for (std::size_t i = items.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(uniform_int(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::uint64_t seed_;
    std::uint64_t s_[4];
    double spare_ = 0.0;
    bool has_spare_ = false;
};

std::uint64_t splitmix64(std::uint64_t& state) noexcept;

} // namespace crackloss
