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

#include "crackloss/gradcheck.hpp"

#include "crackloss/kernels.hpp"
#include "crackloss/loss.hpp"
#include "crackloss/model.hpp"
#include "crackloss/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>

namespace crackloss::gradcheck {
namespace {

constexpr double kLayerTol = 1e-6;
constexpr double kNetworkTol = 1e-5;
// Instances closer than this to a ReLU or pooling kink are redrawn.
constexpr double kMinKinkMargin = 1e-3;

Tensor normal_tensor(Shape shape, SeededRng& rng, double sigma = 1.0)
{
    Tensor t(std::move(shape));
    for (double& v : t.values())
        v = rng.normal(0.0, sigma);
    return t;
}

Tensor random_mask(Shape shape, SeededRng& rng, double rate)
{
    Tensor t(std::move(shape));
    for (double& v : t.values())
        v = rng.uniform() < rate ? 1.0 : 0.0;
    return t;
}

/// Central differences of f over every element of x.
std::vector<double> numeric_grad(Tensor& x, double h, const std::function<double()>& f)
{
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + h;
        const double up = f();
        x[i] = keep - h;
        const double down = f();
        x[i] = keep;
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

double weighted_sum(const Tensor& t, const Tensor& r)
{
    double s = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i)
        s += t[i] * r[i];
    return s;
}

class Suite {
public:
    Suite(std::string name, const Options& opt, double tol) : start_(std::chrono::steady_clock::now())
    {
        r_.name = std::move(name);
        r_.tolerance = tol;
        r_.instances = opt.instances;
    }
    void add(const std::vector<double>& analytic, const std::vector<double>& numeric)
    {
        r_.max_rel_error = std::max(r_.max_rel_error, relative_error(analytic, numeric));
    }
    void add(const Tensor& analytic, const std::vector<double>& numeric)
    {
        add(std::vector<double>(analytic.values().begin(), analytic.values().end()), numeric);
    }
    SuiteResult finish()
    {
        r_.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        return r_;
    }

private:
    SuiteResult r_;
    std::chrono::steady_clock::time_point start_;
};

Shape small_nchw(SeededRng& rng, std::size_t channels)
{
    return {1 + rng.uniform_int(2), channels, 2 + rng.uniform_int(6), 2 + rng.uniform_int(6)};
}

} // namespace

double relative_error(std::span<const double> analytic, std::span<const double> numeric)
{
    double diff = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < analytic.size() && i < numeric.size(); ++i) {
        diff = std::max(diff, std::abs(analytic[i] - numeric[i]));
        scale = std::max({scale, std::abs(analytic[i]), std::abs(numeric[i])});
    }
    if (analytic.size() != numeric.size())
        return std::numeric_limits<double>::infinity();
    return scale == 0.0 ? 0.0 : diff / scale;
}

SuiteResult check_wce(const Options& opt)
{
    Suite suite("wce_grad_logits", opt, kLayerTol);
    SeededRng rng = SeededRng(opt.seed).fork(1);
    for (std::size_t k = 0; k < opt.instances; ++k) {
        Tensor logits = normal_tensor(small_nchw(rng, 1), rng, 3.0);
        const Tensor mask = random_mask(logits.shape(), rng, 0.3);
        const double q = rng.uniform(0.0, 20.0);
        const auto red = k % 2 ? loss::Reduction::MeanPerPixel : loss::Reduction::Sum;
        const Tensor g = loss::wce_grad_logits(logits, mask, q, red);
        suite.add(g, numeric_grad(logits, opt.step, [&] { return loss::wce_forward(logits, mask, q, red); }));
    }
    return suite.finish();
}

SuiteResult check_jaccard(const Options& opt)
{
    Suite suite("jaccard_distance_grad", opt, kLayerTol);
    SeededRng rng = SeededRng(opt.seed).fork(2);
    for (std::size_t k = 0; k < opt.instances; ++k) {
        const Shape shape = small_nchw(rng, 1);
        Tensor probs(shape);
        for (double& v : probs.values())
            v = rng.uniform(0.01, 0.99);
        const Tensor mask = random_mask(shape, rng, 0.3);
        const double lambda = rng.uniform(0.1, 2.0);
        const Tensor g = loss::jaccard_distance_grad(probs, mask, lambda);
        suite.add(g, numeric_grad(probs, opt.step, [&] { return 1.0 - loss::soft_jaccard(probs, mask, lambda); }));
    }
    return suite.finish();
}

SuiteResult check_holistic(const Options& opt)
{
    Suite suite("holistic", opt, kLayerTol);
    SeededRng rng = SeededRng(opt.seed).fork(3);
    for (std::size_t k = 0; k < opt.instances; ++k) {
        Tensor logits = normal_tensor(small_nchw(rng, 1), rng, 2.0);
        const Tensor mask = random_mask(logits.shape(), rng, 0.2);
        loss::WeightSpec spec;
        if (k % 2)
            spec.family = loss::Exp{rng.uniform(0.1, 1.0), 10.0, 1.0};
        const loss::HolisticConfig hc{rng.uniform(0.1, 20.0), rng.uniform(0.0, 2.0), rng.uniform(0.1, 2.0)};
        const auto red = k % 3 ? loss::Reduction::Sum : loss::Reduction::MeanPerPixel;
        const auto out = loss::holistic(logits, mask, spec, hc, red);
        suite.add(out.grad_logits,
                  numeric_grad(logits, opt.step, [&] { return loss::holistic(logits, mask, spec, hc, red).value; }));
    }
    return suite.finish();
}

SuiteResult check_conv(const Options& opt)
{
    Suite suite("conv2d", opt, kLayerTol);
    SeededRng rng = SeededRng(opt.seed).fork(4);
    for (std::size_t k = 0; k < opt.instances; ++k) {
        const std::size_t C = 1 + rng.uniform_int(3), O = 1 + rng.uniform_int(3), K = 1 + 2 * rng.uniform_int(3);
        Tensor in = normal_tensor(small_nchw(rng, C), rng);
        Tensor w = normal_tensor({O, C, K, K}, rng);
        Tensor b = normal_tensor({O}, rng);
        const Tensor r = normal_tensor({in.dim(0), O, in.dim(2), in.dim(3)}, rng);
        const auto g = kernels::conv2d_backward(in, w, r);
        auto f = [&] { return weighted_sum(kernels::conv2d_forward(in, w, b), r); };
        suite.add(g.input, numeric_grad(in, opt.step, f));
        suite.add(g.kernels, numeric_grad(w, opt.step, f));
        suite.add(g.biases, numeric_grad(b, opt.step, f));
    }
    return suite.finish();
}

SuiteResult check_relu(const Options& opt)
{
    Suite suite("relu", opt, kLayerTol);
    SeededRng rng = SeededRng(opt.seed).fork(5);
    for (std::size_t k = 0; k < opt.instances; ++k) {
        Tensor in = normal_tensor(small_nchw(rng, 1 + rng.uniform_int(3)), rng);
        for (double& v : in.values())
            if (std::abs(v) < kMinKinkMargin)
                v = v < 0.0 ? -kMinKinkMargin : kMinKinkMargin;
        const Tensor r = normal_tensor(in.shape(), rng);
        const Tensor g = kernels::relu_backward(in, r);
        suite.add(g, numeric_grad(in, opt.step, [&] { return weighted_sum(kernels::relu_forward(in), r); }));
    }
    return suite.finish();
}

SuiteResult check_maxpool(const Options& opt)
{
    Suite suite("maxpool2x2", opt, kLayerTol);
    SeededRng rng = SeededRng(opt.seed).fork(6);
    for (std::size_t k = 0; k < opt.instances; ++k) {
        const Shape shape{1 + rng.uniform_int(2), 1 + rng.uniform_int(3), 2 * (1 + rng.uniform_int(3)),
                          2 * (1 + rng.uniform_int(3))};
        // A shuffled grid of well-separated values keeps every window tie-free.
        Tensor in(shape);
        std::vector<double> vals(in.size());
        for (std::size_t i = 0; i < vals.size(); ++i)
            vals[i] = 0.01 * static_cast<double>(i) - 1.0;
        rng.shuffle(std::span<double>(vals));
        std::copy(vals.begin(), vals.end(), in.values().begin());
        const auto fwd = kernels::maxpool2x2_forward(in);
        const Tensor r = normal_tensor(fwd.output.shape(), rng);
        const Tensor g = kernels::maxpool2x2_backward(in.shape(), fwd.argmax, r);
        suite.add(g, numeric_grad(in, opt.step,
                                  [&] { return weighted_sum(kernels::maxpool2x2_forward(in).output, r); }));
    }
    return suite.finish();
}

SuiteResult check_deconv(const Options& opt)
{
    Suite suite("deconv2x2s2", opt, kLayerTol);
    SeededRng rng = SeededRng(opt.seed).fork(7);
    for (std::size_t k = 0; k < opt.instances; ++k) {
        const std::size_t C = 1 + rng.uniform_int(3), O = 1 + rng.uniform_int(3);
        Tensor in = normal_tensor(small_nchw(rng, C), rng);
        Tensor w = normal_tensor({O, C, 2, 2}, rng);
        Tensor b = normal_tensor({O}, rng);
        const Tensor r = normal_tensor({in.dim(0), O, 2 * in.dim(2), 2 * in.dim(3)}, rng);
        const auto g = kernels::deconv2x2s2_backward(in, w, r);
        auto f = [&] { return weighted_sum(kernels::deconv2x2s2_forward(in, w, b), r); };
        suite.add(g.input, numeric_grad(in, opt.step, f));
        suite.add(g.kernels, numeric_grad(w, opt.step, f));
        suite.add(g.biases, numeric_grad(b, opt.step, f));
    }
    return suite.finish();
}

SuiteResult check_concat(const Options& opt)
{
    Suite suite("concat_channels", opt, kLayerTol);
    SeededRng rng = SeededRng(opt.seed).fork(8);
    for (std::size_t k = 0; k < opt.instances; ++k) {
        Tensor a = normal_tensor(small_nchw(rng, 1 + rng.uniform_int(3)), rng);
        Tensor b = normal_tensor({a.dim(0), 1 + rng.uniform_int(3), a.dim(2), a.dim(3)}, rng);
        const Tensor r = normal_tensor({a.dim(0), a.dim(1) + b.dim(1), a.dim(2), a.dim(3)}, rng);
        const auto [ga, gb] = kernels::split_channels(r, a.dim(1));
        auto f = [&] { return weighted_sum(kernels::concat_channels(a, b), r); };
        suite.add(ga, numeric_grad(a, opt.step, f));
        suite.add(gb, numeric_grad(b, opt.step, f));
    }
    return suite.finish();
}

SuiteResult check_network(const Options& opt)
{
    Suite suite("unet_depth1", opt, kNetworkTol);
    SeededRng rng = SeededRng(opt.seed).fork(9);
    const model::UNetConfig cfg{1, 2, 1};
    loss::WeightSpec spec;
    spec.family = loss::Exp{0.75, 10.0, 1.0};
    const loss::HolisticConfig hc{1.0, 1.0, 1.0};
    for (std::size_t k = 0; k < opt.instances; ++k) {
        model::UNetParams params;
        Tensor images, masks;
        model::UNetParams grads;
        for (;;) {
            params = model::he_init(cfg, rng);
            // Non-zero biases so the check also covers them.
            for (auto& layer : params)
                for (double& v : layer.params.biases.values())
                    v = rng.normal(0.0, 0.1);
            images = normal_tensor({2, 1, 8, 8}, rng);
            masks = random_mask(images.shape(), rng, 0.15);
            model::UNet net(cfg, params);
            const Tensor logits = net.forward(images);
            if (net.kink_margin() < kMinKinkMargin)
                continue;
            grads = net.backward(loss::holistic(logits, masks, spec, hc).grad_logits);
            break;
        }
        model::UNet probe(cfg, params);
        std::vector<double> analytic, numeric;
        for (std::size_t l = 0; l < params.size(); ++l) {
            for (Tensor* t : {&probe.params()[l].params.kernels, &probe.params()[l].params.biases}) {
                const auto g = numeric_grad(
                    *t, opt.step, [&] { return loss::holistic(probe.predict(images), masks, spec, hc).value; });
                numeric.insert(numeric.end(), g.begin(), g.end());
            }
            const auto& gk = grads[l].params.kernels.values();
            const auto& gb = grads[l].params.biases.values();
            analytic.insert(analytic.end(), gk.begin(), gk.end());
            analytic.insert(analytic.end(), gb.begin(), gb.end());
        }
        suite.add(analytic, numeric);
    }
    return suite.finish();
}

std::vector<SuiteResult> run_all(const Options& opt)
{
    return {check_wce(opt),     check_jaccard(opt), check_holistic(opt), check_conv(opt),    check_relu(opt),
            check_maxpool(opt), check_deconv(opt),  check_concat(opt),   check_network(opt)};
}

} // namespace crackloss::gradcheck
