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

#include <doctest.h>

#include "crackloss/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

using crackloss::SeededRng;

TEST_CASE("same seed, same stream")
{
    SeededRng a(42), b(42), c(43);
    bool differs = false;
    for (int i = 0; i < 100; ++i) {
        const auto x = a.next();
        CHECK(x == b.next());
        differs = differs || x != c.next();
    }
    CHECK(differs);
}

TEST_CASE("uniform lies in [0, 1) with the right mean")
{
    SeededRng r(1);
    double s = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const double u = r.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        s += u;
    }
    CHECK(s / n == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("normal has unit variance")
{
    SeededRng r(2);
    const int n = 200000;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double z = r.normal();
        s += z;
        s2 += z * z;
    }
    const double mean = s / n;
    CHECK(std::abs(mean) < 0.01);
    CHECK(s2 / n - mean * mean == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("uniform_int covers its range evenly")
{
    SeededRng r(3);
    std::vector<int> hist(7, 0);
    for (int i = 0; i < 70000; ++i)
        ++hist[r.uniform_int(7)];
    for (const int h : hist)
        CHECK(std::abs(h - 10000) < 500);
}

TEST_CASE("forks are deterministic and distinct")
{
    const SeededRng root(9);
    SeededRng a = root.fork(1), b = root.fork(1), c = root.fork(2);
    CHECK(a.next() == b.next());
    CHECK(a.next() != c.next());
}

TEST_CASE("shuffle is a permutation")
{
    SeededRng r(4);
    std::vector<int> v(50);
    std::iota(v.begin(), v.end(), 0);
    auto w = v;
    r.shuffle(std::span<int>(w));
    CHECK(w != v);
    std::sort(w.begin(), w.end());
    CHECK(w == v);
}
