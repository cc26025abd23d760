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

#include "crackloss/errors.hpp"
#include "crackloss/loss.hpp"
#include "crackloss/model.hpp"

#include <cmath>
#include <filesystem>

using namespace crackloss;
using namespace crackloss::model;

namespace {

Tensor normal(Shape s, SeededRng& rng)
{
    Tensor t(std::move(s));
    for (double& v : t.values())
        v = rng.normal();
    return t;
}

double logit_loss(const Tensor& logits, const Tensor& r)
{
    double s = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i)
        s += logits[i] * r[i];
    return s;
}

} // namespace

TEST_CASE("layer layout of the default network")
{
    const UNetParams p = zero_params(UNetConfig{});
    std::vector<std::string> names;
    for (const auto& l : p)
        names.push_back(l.name);
    CHECK(names == std::vector<std::string>{"enc0.conv1", "enc0.conv2", "enc1.conv1", "enc1.conv2", "bottom.conv1",
                                            "bottom.conv2", "dec1.up", "dec1.conv1", "dec1.conv2", "dec0.up",
                                            "dec0.conv1", "dec0.conv2", "head"});
    CHECK(p[6].params.kernels.shape() == Shape{16, 32, 2, 2});
    CHECK(p[10].params.kernels.shape() == Shape{8, 16, 3, 3});
    CHECK(p.back().params.kernels.shape() == Shape{1, 8, 3, 3});
    CHECK(parameter_count(p) == 29385);
    CHECK(fan_in(p[1]) == 72);
    CHECK(fan_in(p[6]) == 32);
}

TEST_CASE("zero parameters give zero logits")
{
    UNet net(UNetConfig{}, zero_params(UNetConfig{}));
    SeededRng rng(41);
    const Tensor logits = net.forward(normal({2, 1, 16, 16}, rng));
    CHECK(logits.shape() == Shape{2, 1, 16, 16});
    CHECK(logits == Tensor({2, 1, 16, 16}));
    CHECK(num::sigmoid(logits) == Tensor({2, 1, 16, 16}, 0.5));
}

TEST_CASE("forward is deterministic and matches predict")
{
    const UNetConfig cfg;
    SeededRng rng(42);
    UNet net(cfg, he_init(cfg, rng));
    const Tensor x = normal({1, 1, 8, 8}, rng);
    const Tensor a = net.forward(x);
    CHECK(net.forward(x) == a);
    CHECK(net.predict(x) == a);
}

TEST_CASE("he_init statistics and reproducibility")
{
    const UNetConfig cfg{2, 32, 1};
    SeededRng r1(7), r2(7);
    const UNetParams a = he_init(cfg, r1), b = he_init(cfg, r2);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].params.kernels == b[i].params.kernels);
        CHECK(a[i].params.biases == Tensor(a[i].params.biases.shape()));
    }
    // bottom.conv2 is 128 x 128 x 3 x 3 = 147456 draws.
    const NamedLayer& l = a[5];
    REQUIRE(l.params.kernels.size() >= 10000);
    double s2 = 0.0;
    for (const double w : l.params.kernels.values())
        s2 += w * w;
    const double var = s2 / static_cast<double>(l.params.kernels.size());
    CHECK(std::abs(var / (2.0 / static_cast<double>(fan_in(l))) - 1.0) < 0.1);
}

TEST_CASE("full-network gradient matches finite differences")
{
    const UNetConfig cfg{1, 1, 1};
    SeededRng rng(43);
    int checked = 0;
    for (int attempt = 0; attempt < 50 && checked < 5; ++attempt) {
        UNetParams params = he_init(cfg, rng);
        for (auto& l : params)
            for (double& v : l.params.biases.values())
                v = rng.normal(0.0, 0.1);
        const Tensor x = normal({1, 1, 4, 4}, rng);
        const Tensor r = normal({1, 1, 4, 4}, rng);
        UNet net(cfg, params);
        (void)net.forward(x);
        if (net.kink_margin() < 1e-3) {
            (void)net.backward(r);
            continue;
        }
        const UNetParams grads = net.backward(r);
        UNet probe(cfg, params);
        double diff = 0.0, scale = 0.0;
        for (std::size_t l = 0; l < params.size(); ++l)
            for (int which = 0; which < 2; ++which) {
                Tensor& t = which ? probe.params()[l].params.biases : probe.params()[l].params.kernels;
                const Tensor& g = which ? grads[l].params.biases : grads[l].params.kernels;
                for (std::size_t i = 0; i < t.size(); ++i) {
                    const double keep = t[i], h = 1e-5;
                    t[i] = keep + h;
                    const double up = logit_loss(probe.predict(x), r);
                    t[i] = keep - h;
                    const double down = logit_loss(probe.predict(x), r);
                    t[i] = keep;
                    const double num = (up - down) / (2 * h);
                    diff = std::max(diff, std::abs(num - g[i]));
                    scale = std::max({scale, std::abs(num), std::abs(g[i])});
                }
            }
        CHECK(diff / scale < 1e-5);
        ++checked;
    }
    CHECK(checked == 5);
}

TEST_CASE("backward needs a forward pass")
{
    const UNetConfig cfg{1, 2, 1};
    SeededRng rng(44);
    UNet net(cfg, he_init(cfg, rng));
    CHECK_THROWS_AS(net.backward(Tensor({1, 1, 4, 4})), StateError);
    (void)net.forward(normal({1, 1, 4, 4}, rng));
    CHECK_THROWS_AS(net.backward(Tensor({1, 1, 4, 2})), ShapeError);
    (void)net.forward(normal({1, 1, 4, 4}, rng));
    (void)net.backward(Tensor({1, 1, 4, 4}));
    CHECK_THROWS_AS(net.backward(Tensor({1, 1, 4, 4})), StateError);
    CHECK_THROWS_AS(net.kink_margin(), StateError);
}

TEST_CASE("input validation")
{
    const UNetConfig cfg;
    UNet net(cfg, zero_params(cfg));
    CHECK_THROWS_AS(net.forward(Tensor({1, 1, 6, 8})), ShapeError);
    CHECK_THROWS_AS(net.forward(Tensor({1, 2, 8, 8})), ShapeError);
    CHECK_THROWS_AS(UNet(cfg, zero_params(UNetConfig{1, 8, 1})), ShapeError);
    CHECK_THROWS_AS(zero_params(UNetConfig{0, 8, 1}), ConfigError);
}

TEST_CASE("adam")
{
    const UNetConfig cfg{1, 2, 1};
    SeededRng rng(45);
    UNetParams p = he_init(cfg, rng);
    const UNetParams before = p;
    AdamState st = make_adam_state(p);
    adam_step(p, zero_params(cfg), st, 0.1);
    for (std::size_t l = 0; l < p.size(); ++l)
        CHECK(p[l].params.kernels == before[l].params.kernels);

    // First step moves every weight by lr * sign(g).
    UNetParams g = zero_params(cfg);
    for (auto& l : g)
        for (double& v : l.params.kernels.values())
            v = rng.uniform() < 0.5 ? -3.0 : 2.0;
    UNetParams q = before;
    AdamState st2 = make_adam_state(q);
    adam_step(q, g, st2, 1e-3);
    for (std::size_t l = 0; l < q.size(); ++l)
        for (std::size_t i = 0; i < q[l].params.kernels.size(); ++i) {
            const double step = q[l].params.kernels[i] - before[l].params.kernels[i];
            const double expect = g[l].params.kernels[i] > 0 ? -1e-3 : 1e-3;
            CHECK(step == doctest::Approx(expect).epsilon(1e-6));
        }
    CHECK(st2.step_count == 1);
}

TEST_CASE("identical training runs give identical parameters")
{
    const UNetConfig cfg{1, 2, 1};
    auto run = [&] {
        SeededRng rng(46);
        UNet net(cfg, he_init(cfg, rng));
        AdamState st = make_adam_state(net.params());
        Tensor mask({2, 1, 8, 8});
        for (std::size_t i = 0; i < mask.size(); i += 7)
            mask[i] = 1.0;
        for (int step = 0; step < 5; ++step) {
            const Tensor x = normal({2, 1, 8, 8}, rng);
            const auto out = loss::holistic(net.forward(x), mask, {}, {});
            adam_step(net.params(), net.backward(out.grad_logits), st, 1e-2);
        }
        return net.params();
    };
    const UNetParams a = run(), b = run();
    for (std::size_t l = 0; l < a.size(); ++l)
        CHECK(a[l].params.kernels == b[l].params.kernels);
}

TEST_CASE("checkpoint round trip and corruption")
{
    const UNetConfig cfg{2, 4, 1};
    SeededRng rng(47);
    const UNetParams p = he_init(cfg, rng);
    const auto bytes = encode_checkpoint(cfg, p);
    const Checkpoint c = decode_checkpoint(bytes);
    CHECK(c.config == cfg);
    REQUIRE(c.params.size() == p.size());
    for (std::size_t l = 0; l < p.size(); ++l) {
        CHECK(c.params[l].name == p[l].name);
        CHECK(c.params[l].params.kernels == p[l].params.kernels);
        CHECK(c.params[l].params.biases == p[l].params.biases);
    }

    auto truncated = bytes;
    truncated.resize(bytes.size() - 3);
    CHECK_THROWS_AS(decode_checkpoint(truncated), ParseError);
    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    CHECK_THROWS_AS(decode_checkpoint(bad_magic), ParseError);

    const auto dir = std::filesystem::temp_directory_path() / "crackloss_model_test";
    std::filesystem::create_directories(dir);
    save_checkpoint(dir / "m.ckpt", cfg, p);
    CHECK(load_checkpoint(dir / "m.ckpt").params[3].params.kernels == p[3].params.kernels);
    CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), IoError);
    std::filesystem::remove_all(dir);
}
