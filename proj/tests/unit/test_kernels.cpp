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
#include "crackloss/kernels.hpp"
#include "crackloss/reference.hpp"
#include "crackloss/rng.hpp"

#include <cmath>

using namespace crackloss;

namespace {

Tensor normal(Shape s, SeededRng& rng)
{
    Tensor t(std::move(s));
    for (double& v : t.values())
        v = rng.normal();
    return t;
}

// The parallel kernels sum in a different order from the reference.
void check_close(const Tensor& a, const Tensor& b, double tol = 1e-12)
{
    REQUIRE(a.shape() == b.shape());
    double scale = 1.0;
    for (const double v : b.values())
        scale = std::max(scale, std::abs(v));
    for (std::size_t i = 0; i < a.size(); ++i)
        REQUIRE(std::abs(a[i] - b[i]) <= tol * scale);
}

struct ThreadGuard {
    explicit ThreadGuard(int n) { kernels::set_num_threads(n); }
    ~ThreadGuard() { kernels::set_num_threads(1); }
};

} // namespace

TEST_CASE("conv2d simple cases")
{
    SeededRng rng(31);
    const Tensor zeros({1, 1, 3, 3});
    const Tensor w = normal({2, 1, 3, 3}, rng);
    CHECK(kernels::conv2d_forward(zeros, w, Tensor({2})) == Tensor({1, 2, 3, 3}));

    Tensor identity({1, 1, 3, 3});
    identity[4] = 1.0;
    const Tensor x = normal({2, 1, 5, 6}, rng);
    CHECK(kernels::conv2d_forward(x, identity, Tensor({1})) == x);
}

TEST_CASE("parallel kernels match the serial reference")
{
    SeededRng rng(32);
    for (const int threads : {1, 3}) {
        ThreadGuard guard(threads);
        for (int k = 0; k < 30; ++k) {
            const std::size_t N = 1 + rng.uniform_int(3), C = 1 + rng.uniform_int(6), O = 1 + rng.uniform_int(9);
            const std::size_t H = 2 * (1 + rng.uniform_int(6)), W = 2 * (1 + rng.uniform_int(12));
            const std::size_t K = 1 + 2 * rng.uniform_int(4); // 1, 3, 5, 7
            const Tensor x = normal({N, C, H, W}, rng);
            const Tensor w = normal({O, C, K, K}, rng);
            const Tensor b = normal({O}, rng);
            const Tensor g = normal({N, O, H, W}, rng);
            check_close(kernels::conv2d_forward(x, w, b), reference::conv2d_forward(x, w, b));
            const auto fast = kernels::conv2d_backward(x, w, g);
            const auto slow = reference::conv2d_backward(x, w, g);
            check_close(fast.input, slow.input);
            check_close(fast.kernels, slow.kernels);
            check_close(fast.biases, slow.biases);

            CHECK(kernels::relu_forward(x) == reference::relu_forward(x));
            CHECK(kernels::relu_backward(x, x) == reference::relu_backward(x, x));

            const auto pf = kernels::maxpool2x2_forward(x);
            const auto pr = reference::maxpool2x2_forward(x);
            CHECK(pf.output == pr.output);
            CHECK(pf.argmax == pr.argmax);
            CHECK(kernels::maxpool2x2_backward(x.shape(), pf.argmax, pf.output) ==
                  reference::maxpool2x2_backward(x.shape(), pr.argmax, pr.output));

            const Tensor wd = normal({O, C, 2, 2}, rng);
            const Tensor gd = normal({N, O, 2 * H, 2 * W}, rng);
            check_close(kernels::deconv2x2s2_forward(x, wd, b), reference::deconv2x2s2_forward(x, wd, b));
            const auto df = kernels::deconv2x2s2_backward(x, wd, gd);
            const auto dr = reference::deconv2x2s2_backward(x, wd, gd);
            check_close(df.input, dr.input);
            check_close(df.kernels, dr.kernels);
            check_close(df.biases, dr.biases);

            const Tensor y = normal({N, O, H, W}, rng);
            const Tensor cat = kernels::concat_channels(x, y);
            CHECK(cat == reference::concat_channels(x, y));
            const auto [sa, sb] = kernels::split_channels(cat, C);
            CHECK(sa == x);
            CHECK(sb == y);
        }
    }
}

TEST_CASE("kernel results do not depend on the thread count")
{
    SeededRng rng(33);
    const Tensor x = normal({2, 4, 16, 16}, rng);
    const Tensor w = normal({6, 4, 3, 3}, rng);
    const Tensor b = normal({6}, rng);
    const Tensor g = normal({2, 6, 16, 16}, rng);
    kernels::set_num_threads(1);
    const Tensor f1 = kernels::conv2d_forward(x, w, b);
    const auto b1 = kernels::conv2d_backward(x, w, g);
    ThreadGuard guard(4);
    CHECK(kernels::conv2d_forward(x, w, b) == f1);
    const auto b4 = kernels::conv2d_backward(x, w, g);
    CHECK(b4.input == b1.input);
    CHECK(b4.kernels == b1.kernels);
    CHECK(b4.biases == b1.biases);
}

TEST_CASE("relu and maxpool rules")
{
    const Tensor neg({1, 1, 2, 2}, std::vector<double>{-1, -2, -0.5, -3});
    CHECK(kernels::relu_forward(neg) == Tensor({1, 1, 2, 2}));

    // Ties route to the first element of each window in row-major order.
    const Tensor flat({1, 1, 4, 4}, 2.0);
    const auto p = kernels::maxpool2x2_forward(flat);
    CHECK(p.argmax == std::vector<std::uint32_t>{0, 2, 8, 10});
    const Tensor g = kernels::maxpool2x2_backward(flat.shape(), p.argmax, Tensor({1, 1, 2, 2}, 1.0));
    CHECK(g[0] == 1.0);
    CHECK(g[1] == 0.0);
    CHECK(g[5] == 0.0);
    CHECK(num::sum(g) == 4.0);
}

TEST_CASE("layer gradients match finite differences")
{
    SeededRng rng(34);
    for (int k = 0; k < 10; ++k) {
        Tensor x = normal({2, 2, 5, 5}, rng);
        Tensor w = normal({3, 2, 3, 3}, rng);
        Tensor b = normal({3}, rng);
        const Tensor r = normal({2, 3, 5, 5}, rng);
        auto loss = [&] {
            const Tensor y = kernels::conv2d_forward(x, w, b);
            double s = 0.0;
            for (std::size_t i = 0; i < y.size(); ++i)
                s += y[i] * r[i];
            return s;
        };
        const auto g = kernels::conv2d_backward(x, w, r);
        CHECK(fd::rel_error(g.input, fd::grad(x, loss)) < 1e-6);
        CHECK(fd::rel_error(g.kernels, fd::grad(w, loss)) < 1e-6);
        CHECK(fd::rel_error(g.biases, fd::grad(b, loss)) < 1e-6);
    }
}

TEST_CASE("shape errors")
{
    CHECK_THROWS_AS(kernels::conv2d_forward(Tensor({1, 2, 4, 4}), Tensor({1, 3, 3, 3}), Tensor({1})), ShapeError);
    CHECK_THROWS_AS(kernels::conv2d_forward(Tensor({1, 1, 4, 4}), Tensor({1, 1, 2, 2}), Tensor({1})), ShapeError);
    CHECK_THROWS_AS(kernels::conv2d_forward(Tensor({1, 1, 4, 4}), Tensor({2, 1, 3, 3}), Tensor({1})), ShapeError);
    CHECK_THROWS_AS(kernels::conv2d_forward(Tensor({4, 4}), Tensor({1, 1, 3, 3}), Tensor({1})), ShapeError);
    CHECK_THROWS_AS(kernels::conv2d_backward(Tensor({1, 1, 4, 4}), Tensor({1, 1, 3, 3}), Tensor({1, 1, 4, 5})),
                    ShapeError);
    CHECK_THROWS_AS(kernels::maxpool2x2_forward(Tensor({1, 1, 3, 4})), ShapeError);
    CHECK_THROWS_AS(kernels::deconv2x2s2_forward(Tensor({1, 1, 2, 2}), Tensor({1, 1, 3, 3}), Tensor({1})),
                    ShapeError);
    CHECK_THROWS_AS(kernels::deconv2x2s2_backward(Tensor({1, 1, 2, 2}), Tensor({1, 1, 2, 2}), Tensor({1, 1, 2, 2})),
                    ShapeError);
    CHECK_THROWS_AS(kernels::concat_channels(Tensor({1, 1, 2, 2}), Tensor({1, 1, 2, 3})), ShapeError);
    CHECK_THROWS_AS(kernels::split_channels(Tensor({1, 2, 2, 2}), 2), ShapeError);
    CHECK_THROWS_AS(kernels::relu_backward(Tensor({2}), Tensor({3})), ShapeError);
}

TEST_CASE("deconv doubles the spatial size")
{
    SeededRng rng(35);
    const Tensor x = normal({1, 3, 4, 5}, rng);
    const Tensor y = kernels::deconv2x2s2_forward(x, normal({2, 3, 2, 2}, rng), Tensor({2}));
    CHECK(y.shape() == Shape{1, 2, 8, 10});
}
