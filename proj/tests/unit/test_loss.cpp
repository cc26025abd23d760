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

#include "fd.hpp"

#include "crackloss/errors.hpp"
#include "crackloss/loss.hpp"
#include "crackloss/rng.hpp"

#include <cmath>

using namespace crackloss;
using namespace crackloss::loss;

namespace {

Tensor t1(std::vector<double> v)
{
    const std::size_t n = v.size();
    return Tensor({n}, std::move(v));
}

Tensor random_logits(Shape s, SeededRng& rng, double sigma = 2.0)
{
    Tensor t(std::move(s));
    for (double& v : t.values())
        v = rng.normal(0.0, sigma);
    return t;
}

Tensor random_mask(Shape s, SeededRng& rng, double rate = 0.3)
{
    Tensor t(std::move(s));
    for (double& v : t.values())
        v = rng.uniform() < rate ? 1.0 : 0.0;
    return t;
}

WeightSpec spec_of(Family f, double eps = 1.0) { return WeightSpec{f, eps}; }

} // namespace

TEST_CASE("compute_alpha examples")
{
    std::vector<double> m(100, 0.0);
    m[17] = 1.0;
    const auto s = compute_alpha(t1(m), 0.0);
    CHECK(s.alpha == doctest::Approx(0.99).epsilon(1e-15));
    CHECK(s.pos_count == 1);
    CHECK(s.neg_count == 99);
    CHECK(compute_alpha(Tensor({4, 4}, 1.0), 0.0).alpha == 0.0);

    // 1.11% crack pixels.
    std::vector<double> cf(10000, 0.0);
    for (int i = 0; i < 111; ++i)
        cf[i * 90] = 1.0;
    CHECK(compute_alpha(t1(cf), 0.0).alpha == doctest::Approx(0.9889).epsilon(1e-12));
}

TEST_CASE("compute_alpha smoothing keeps alpha inside (0, 1)")
{
    CHECK(compute_alpha(Tensor({8}), 1.0).alpha == doctest::Approx(9.0 / 10.0));
    CHECK(compute_alpha(Tensor({8}, 1.0), 1.0).alpha == doctest::Approx(1.0 / 10.0));
}

TEST_CASE("compute_alpha rejects non-binary masks with value and index")
{
    try {
        (void)compute_alpha(t1({0, 1, 0.5}), 1.0);
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("0.5") != std::string::npos);
        CHECK(msg.find("index 2") != std::string::npos);
    }
}

TEST_CASE("weight_q examples")
{
    CHECK(weight_q(spec_of(Xie{}), 0.96) == doctest::Approx(24.0).epsilon(1e-12));
    CHECK(weight_q(spec_of(Exp{1.0, 10.0, 1.0}), 1.0) == doctest::Approx(10.0).epsilon(1e-15));
    CHECK(weight_q(spec_of(Exp{1.0, 10.0, 1.0}), 0.5) == 1.0);
    CHECK(weight_q(spec_of(Power{1.0, 1.0}), 0.9) == doctest::Approx(9.0).epsilon(1e-12));
    CHECK(weight_q(spec_of(Power{1.0, 1.0}), 0.9) == weight_q(spec_of(Xie{}), 0.9));
    CHECK(weight_q(spec_of(Log{1.0}), 0.9) == doctest::Approx(std::log(9.0)));
    CHECK(weight_q(spec_of(Constant{3.0}), 0.2) == 3.0);
}

TEST_CASE("weight_q error paths")
{
    CHECK_THROWS_AS(weight_q(spec_of(Xie{}, 0.0), 1.0), NumericalError);
    CHECK_THROWS_AS(weight_q(spec_of(Power{0.5, 0.5}, 0.0), 1.0), NumericalError);
    CHECK_THROWS_AS(weight_q(spec_of(Log{1.0}), 0.5), ValidationError);
    CHECK_THROWS_AS(weight_q(spec_of(Log{1.0}), 0.3), ValidationError);
    CHECK_THROWS_AS(weight_q(spec_of(Xie{}), 1.5), ValidationError);
    try {
        (void)weight_q(spec_of(Xie{}, 0.0), 1.0);
    } catch (const NumericalError& e) {
        CHECK(std::string(e.what()).find("count_smoothing") != std::string::npos);
    }
}

TEST_CASE("weight spec validation")
{
    CHECK_THROWS_AS(spec_of(Exp{1.5}).validate(), ConfigError);
    CHECK_THROWS_AS(spec_of(Exp{0.5, 1.0}).validate(), ConfigError);
    CHECK_THROWS_AS(spec_of(Power{0.5, 2.0}).validate(), ConfigError);
    CHECK_THROWS_AS(spec_of(Log{0.0}).validate(), ConfigError);
    CHECK_THROWS_AS(spec_of(Constant{0.0}).validate(), ConfigError);
    CHECK_THROWS_AS(spec_of(Xie{}, -1.0).validate(), ConfigError);
    CHECK_NOTHROW(spec_of(Exp{0.75}).validate());
    CHECK_THROWS_AS((HolisticConfig{0.0, 0.0, 1.0}.validate()), ConfigError);
    CHECK_THROWS_AS((HolisticConfig{1.0, 1.0, 0.0}.validate()), ConfigError);
}

TEST_CASE("exp penalty is increasing in alpha and capped at 10 beta")
{
    SeededRng rng(5);
    for (int i = 0; i < 1000; ++i) {
        const double beta = rng.uniform(1e-6, 1.0);
        const WeightSpec s = spec_of(Exp{beta, 10.0, 1.0});
        const double a1 = rng.uniform(), a2 = rng.uniform();
        const double q1 = weight_q(s, std::min(a1, a2)), q2 = weight_q(s, std::max(a1, a2));
        CHECK(q1 <= q2);
        CHECK(q2 <= 10.0 * beta);
    }
}

TEST_CASE("wce_forward examples")
{
    CHECK(wce_forward(t1({30.0}), t1({1.0}), 5.0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(wce_forward(t1({0.0}), t1({0.0}), 7.0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(wce_forward(t1({0.0, 0.0}), t1({1.0, 0.0}), 2.0) == doctest::Approx(3 * std::log(2.0)).epsilon(1e-15));
    CHECK(wce_forward(t1({0.0, 0.0}), t1({1.0, 0.0}), 2.0, Reduction::MeanPerPixel) ==
          doctest::Approx(1.5 * std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("wce is finite for extreme logits")
{
    const Tensor z = t1({-1000.0, 1000.0, -1000.0, 1000.0});
    const Tensor y = t1({1.0, 0.0, 0.0, 1.0});
    const double v = wce_forward(z, y, 3.0);
    CHECK(std::isfinite(v));
    CHECK(v == doctest::Approx(3000.0 + 1000.0));
    CHECK(num::all_finite(wce_grad_logits(z, y, 3.0).values()));
}

TEST_CASE("wce_grad_logits examples and finite differences")
{
    CHECK(wce_grad_logits(t1({40.0}), t1({1.0}), 3.0)[0] == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(wce_grad_logits(t1({0.0}), t1({0.0}), 3.0)[0] == 0.5);

    SeededRng rng(11);
    for (int k = 0; k < 20; ++k) {
        Tensor z = random_logits({4, 4}, rng);
        const Tensor y = random_mask({4, 4}, rng);
        const Tensor g = wce_grad_logits(z, y, 3.0);
        CHECK(fd::rel_error(g, fd::grad(z, [&] { return wce_forward(z, y, 3.0); })) < 1e-6);
    }
}

TEST_CASE("balanced form equals (1 - alpha) times WCE with q = alpha / (1 - alpha)")
{
    SeededRng rng(12);
    for (int k = 0; k < 20; ++k) {
        const Tensor z = random_logits({2, 1, 6, 6}, rng);
        const Tensor y = random_mask(z.shape(), rng, 0.1);
        const double alpha = compute_alpha(y, 1.0).alpha;
        const double q = alpha / (1.0 - alpha);
        CHECK(balanced_bce_forward(z, y, alpha) == doctest::Approx((1.0 - alpha) * wce_forward(z, y, q)).epsilon(1e-12));
    }
}

TEST_CASE("wce shape and mask errors")
{
    CHECK_THROWS_AS(wce_forward(Tensor({2}), Tensor({3}), 1.0), ShapeError);
    CHECK_THROWS_AS(wce_forward(Tensor({2}), t1({0, 2}), 1.0), ValidationError);
    CHECK_THROWS_AS(wce_grad_logits(Tensor({2}), Tensor({3}), 1.0), ShapeError);
    CHECK_THROWS_AS(wce_forward(Tensor({2}), Tensor({2}), -1.0), ValidationError);
}

TEST_CASE("soft_jaccard examples")
{
    const Tensor m = t1({1, 0, 1, 1});
    CHECK(soft_jaccard(m, m, 1.0) == 1.0);
    CHECK(soft_jaccard(Tensor({5}), Tensor({5}), 0.3) == 1.0);
    CHECK(soft_jaccard(t1({0.5, 0.5}), t1({1, 0}), 1.0) == doctest::Approx(0.6).epsilon(1e-15));
}

TEST_CASE("soft_jaccard lies in (0, 1]")
{
    SeededRng rng(13);
    for (int k = 0; k < 200; ++k) {
        Tensor p({3, 3});
        for (double& v : p.values())
            v = rng.uniform();
        const double j = soft_jaccard(p, random_mask({3, 3}, rng), rng.uniform(0.01, 2.0));
        CHECK(j > 0.0);
        CHECK(j <= 1.0);
    }
}

TEST_CASE("soft_jaccard rejects probabilities outside [0, 1]")
{
    CHECK_THROWS_AS(soft_jaccard(t1({1.1}), t1({1}), 1.0), ValidationError);
    CHECK_THROWS_AS(soft_jaccard(t1({-0.1}), t1({1}), 1.0), ValidationError);
    CHECK_NOTHROW(soft_jaccard(t1({1.0 + 1e-10}), t1({1}), 1.0));
    CHECK_THROWS_AS(soft_jaccard(t1({0.5}), t1({1}), 0.0), ValidationError);
    CHECK_THROWS_AS(jaccard_distance_grad(t1({0.5}), t1({1, 0}), 1.0), ShapeError);
}

TEST_CASE("jaccard_distance_grad examples and finite differences")
{
    const double lambda = 0.7;
    CHECK(jaccard_distance_grad(t1({0.0}), t1({0.0}), lambda)[0] == doctest::Approx(1.0 / lambda));

    Tensor exact = t1({0.999, 0.001, 0.999, 0.001, 0.001});
    const Tensor y = t1({1, 0, 1, 0, 0});
    const Tensor g = jaccard_distance_grad(exact, y, 1.0);
    CHECK(fd::rel_error(g, fd::grad(exact, [&] { return 1.0 - soft_jaccard(exact, y, 1.0); })) < 1e-6);

    SeededRng rng(14);
    for (int k = 0; k < 20; ++k) {
        Tensor p({4, 4});
        for (double& v : p.values())
            v = rng.uniform(0.01, 0.99);
        const Tensor m = random_mask({4, 4}, rng);
        const Tensor ga = jaccard_distance_grad(p, m, 1.0);
        CHECK(fd::rel_error(ga, fd::grad(p, [&] { return 1.0 - soft_jaccard(p, m, 1.0); })) < 1e-6);
    }
}

TEST_CASE("holistic examples")
{
    SeededRng rng(15);
    const Tensor z = random_logits({2, 1, 8, 8}, rng);
    const Tensor y = random_mask(z.shape(), rng, 0.1);
    const WeightSpec spec = spec_of(Exp{0.75});
    const double q = weight_q(spec, compute_alpha(y, 1.0).alpha);

    const auto plain = holistic(z, y, spec, {1.0, 0.0, 1.0});
    CHECK(plain.value == wce_forward(z, y, q));
    CHECK(plain.grad_logits == wce_grad_logits(z, y, q));

    const auto mix = holistic(z, y, spec, {20.0, 1.0, 1.0});
    const double expect = 20.0 * wce_forward(z, y, q) + (1.0 - soft_jaccard(clamped_probs(z), y, 1.0));
    CHECK(std::abs(mix.value - expect) <= 1e-12 * std::abs(expect));

    Tensor perfect(y.shape());
    for (std::size_t i = 0; i < y.size(); ++i)
        perfect[i] = y[i] == 1.0 ? 60.0 : -60.0;
    CHECK(holistic(perfect, y, spec, {0.0, 1.0, 1.0}).value == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("holistic gradient matches finite differences")
{
    SeededRng rng(16);
    for (int k = 0; k < 20; ++k) {
        Tensor z = random_logits({1, 1, 5, 5}, rng);
        const Tensor y = random_mask(z.shape(), rng, 0.2);
        const WeightSpec spec = spec_of(k % 2 ? Family{Exp{0.75}} : Family{Xie{}});
        const HolisticConfig hc{20.0, 1.0, 1.0};
        const auto red = k % 3 ? Reduction::Sum : Reduction::MeanPerPixel;
        const Tensor g = holistic(z, y, spec, hc, red).grad_logits;
        CHECK(fd::rel_error(g, fd::grad(z, [&] { return holistic(z, y, spec, hc, red).value; })) < 1e-6);
    }
}

TEST_CASE("labels")
{
    CHECK(spec_of(Xie{}).label() == "wce_xie");
    CHECK(spec_of(Exp{0.75}).label() == "0.75_exp");
    CHECK(spec_of(Constant{1.0}).label() == "const_1");
}
