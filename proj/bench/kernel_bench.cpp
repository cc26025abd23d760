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

// Times the OpenMP kernels against the serial reference at the layer sizes of
// the default network, then a full training step.
//
//   kernel_bench [--threads N] [--reps R] [--skip-reference]

#include "crackloss/bench.hpp"
#include "crackloss/kernels.hpp"
#include "crackloss/loss.hpp"
#include "crackloss/model.hpp"
#include "crackloss/reference.hpp"
#include "crackloss/rng.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>

using namespace crackloss;

namespace {

Tensor random_tensor(Shape shape, SeededRng& rng)
{
    Tensor t(std::move(shape));
    for (double& v : t.values())
        v = rng.normal();
    return t;
}

double time_ms(int reps, const std::function<void()>& fn)
{
    fn(); // warm-up
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < reps; ++i)
        fn();
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count() / reps;
}

struct ConvCase {
    const char* name;
    std::size_t n, cin, cout, size;
};

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"crackloss kernel benchmark"};
    int threads = bench::threads_from_env();
    int reps = 20;
    bool skip_reference = false;
    app.add_option("--threads", threads, "OpenMP threads for the parallel kernels");
    app.add_option("--reps", reps, "repetitions per measurement");
    app.add_flag("--skip-reference", skip_reference, "only time the parallel kernels");
    CLI11_PARSE(app, argc, argv);

    kernels::set_num_threads(threads);
    SeededRng rng(42);

    // Layers of the depth-2, width-8 network at 64x64 with batch 2.
    const ConvCase cases[] = {
        {"enc0.conv1", 2, 1, 8, 64},    {"enc0.conv2", 2, 8, 8, 64},    {"enc1.conv1", 2, 8, 16, 32},
        {"enc1.conv2", 2, 16, 16, 32},  {"bottom.conv1", 2, 16, 32, 16}, {"bottom.conv2", 2, 32, 32, 16},
        {"dec1.conv1", 2, 32, 16, 32},  {"dec0.conv1", 2, 16, 8, 64},   {"head", 2, 8, 1, 64},
    };

    std::printf("threads=%d reps=%d\n", threads, reps);
    std::printf("%-14s %12s %12s %12s %12s %8s\n", "layer", "ref fwd ms", "omp fwd ms", "ref bwd ms", "omp bwd ms",
                "speedup");
    for (const auto& c : cases) {
        const Tensor in = random_tensor({c.n, c.cin, c.size, c.size}, rng);
        const Tensor w = random_tensor({c.cout, c.cin, 3, 3}, rng);
        const Tensor b = random_tensor({c.cout}, rng);
        const Tensor g = random_tensor({c.n, c.cout, c.size, c.size}, rng);
        const double fast_f = time_ms(reps, [&] { (void)kernels::conv2d_forward(in, w, b); });
        const double fast_b = time_ms(reps, [&] { (void)kernels::conv2d_backward(in, w, g); });
        double ref_f = 0.0, ref_b = 0.0;
        if (!skip_reference) {
            ref_f = time_ms(std::max(1, reps / 5), [&] { (void)reference::conv2d_forward(in, w, b); });
            ref_b = time_ms(std::max(1, reps / 5), [&] { (void)reference::conv2d_backward(in, w, g); });
        }
        std::printf("%-14s %12.3f %12.3f %12.3f %12.3f %8.2f\n", c.name, ref_f, fast_f, ref_b, fast_b,
                    skip_reference ? 0.0 : (ref_f + ref_b) / (fast_f + fast_b));
    }

    {
        const Tensor in = random_tensor({2, 32, 16, 16}, rng);
        const Tensor w = random_tensor({16, 32, 2, 2}, rng);
        const Tensor b = random_tensor({16}, rng);
        const Tensor g = random_tensor({2, 16, 32, 32}, rng);
        const double fast = time_ms(reps, [&] {
            (void)kernels::deconv2x2s2_forward(in, w, b);
            (void)kernels::deconv2x2s2_backward(in, w, g);
        });
        double ref = 0.0;
        if (!skip_reference)
            ref = time_ms(std::max(1, reps / 5), [&] {
                (void)reference::deconv2x2s2_forward(in, w, b);
                (void)reference::deconv2x2s2_backward(in, w, g);
            });
        std::printf("%-14s %12s %12.3f %12s %12s %8.2f\n", "dec1.up f+b", "", fast, "", "",
                    skip_reference ? 0.0 : ref / fast);
    }

    // One full training step on a 2 x 1 x 64 x 64 batch.
    model::UNetConfig cfg;
    SeededRng init(1);
    model::UNet net(cfg, model::he_init(cfg, init));
    auto adam = model::make_adam_state(net.params());
    const Tensor images = random_tensor({2, 1, 64, 64}, rng);
    Tensor masks({2, 1, 64, 64});
    for (std::size_t i = 0; i < masks.size(); i += 97)
        masks[i] = 1.0;
    loss::WeightSpec spec;
    spec.family = loss::Exp{};
    const double step = time_ms(reps, [&] {
        const Tensor logits = net.forward(images);
        const auto out = loss::holistic(logits, masks, spec, {1.0, 0.0, 1.0});
        model::adam_step(net.params(), net.backward(out.grad_logits), adam, 3e-4);
    });
    const double predict = time_ms(reps, [&] { (void)net.predict(images); });
    std::printf("train step (batch 2): %.3f ms, predict (batch 2): %.3f ms, params: %zu\n", step, predict,
                model::parameter_count(net.params()));
    return 0;
}
