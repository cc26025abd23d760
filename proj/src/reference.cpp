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

#include "crackloss/reference.hpp"

#include "crackloss/errors.hpp"

namespace crackloss::reference {

Tensor conv2d_forward(const Tensor& in, const Tensor& w, const Tensor& b)
{
    kernels::check_conv_shapes(in, w, &b, "conv2d_forward");
    const std::size_t N = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
    const std::size_t O = w.dim(0), K = w.dim(2);
    const auto pad = static_cast<std::ptrdiff_t>(K / 2);
    Tensor out({N, O, H, W});
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t o = 0; o < O; ++o)
            for (std::size_t y = 0; y < H; ++y)
                for (std::size_t x = 0; x < W; ++x) {
                    double acc = b[o];
                    for (std::size_t c = 0; c < C; ++c)
                        for (std::size_t ky = 0; ky < K; ++ky)
                            for (std::size_t kx = 0; kx < K; ++kx) {
                                const auto sy = static_cast<std::ptrdiff_t>(y + ky) - pad;
                                const auto sx = static_cast<std::ptrdiff_t>(x + kx) - pad;
                                if (sy < 0 || sx < 0 || sy >= static_cast<std::ptrdiff_t>(H) ||
                                    sx >= static_cast<std::ptrdiff_t>(W))
                                    continue;
                                acc += w.at(o, c, ky, kx) * in.at(n, c, sy, sx);
                            }
                    out.at(n, o, y, x) = acc;
                }
    return out;
}

ConvGrads conv2d_backward(const Tensor& in, const Tensor& w, const Tensor& gout)
{
    kernels::check_conv_shapes(in, w, nullptr, "conv2d_backward");
    const std::size_t N = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
    const std::size_t O = w.dim(0), K = w.dim(2);
    if (gout.shape() != Shape{N, O, H, W})
        throw ShapeError("conv2d_backward: grad_output " + shape_string(gout.shape()) + " does not match output " +
                         shape_string({N, O, H, W}));
    const auto pad = static_cast<std::ptrdiff_t>(K / 2);
    ConvGrads g{Tensor(in.shape()), Tensor(w.shape()), Tensor({O})};
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t o = 0; o < O; ++o)
            for (std::size_t y = 0; y < H; ++y)
                for (std::size_t x = 0; x < W; ++x) {
                    const double go = gout.at(n, o, y, x);
                    g.biases[o] += go;
                    for (std::size_t c = 0; c < C; ++c)
                        for (std::size_t ky = 0; ky < K; ++ky)
                            for (std::size_t kx = 0; kx < K; ++kx) {
                                const auto sy = static_cast<std::ptrdiff_t>(y + ky) - pad;
                                const auto sx = static_cast<std::ptrdiff_t>(x + kx) - pad;
                                if (sy < 0 || sx < 0 || sy >= static_cast<std::ptrdiff_t>(H) ||
                                    sx >= static_cast<std::ptrdiff_t>(W))
                                    continue;
                                g.kernels.at(o, c, ky, kx) += go * in.at(n, c, sy, sx);
                                g.input.at(n, c, sy, sx) += go * w.at(o, c, ky, kx);
                            }
                }
    return g;
}

Tensor relu_forward(const Tensor& in)
{
    Tensor out(in.shape());
    for (std::size_t i = 0; i < in.size(); ++i)
        out[i] = in[i] > 0.0 ? in[i] : 0.0;
    return out;
}

Tensor relu_backward(const Tensor& in, const Tensor& gout)
{
    require_same_shape(in, gout, "relu_backward");
    Tensor g(in.shape());
    for (std::size_t i = 0; i < in.size(); ++i)
        g[i] = in[i] > 0.0 ? gout[i] : 0.0;
    return g;
}

PoolResult maxpool2x2_forward(const Tensor& in)
{
    kernels::check_rank4(in, "maxpool2x2_forward");
    const std::size_t N = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
    if (H % 2 || W % 2)
        throw ShapeError("maxpool2x2_forward: spatial size " + shape_string(in.shape()) + " is not even");
    PoolResult r{Tensor({N, C, H / 2, W / 2}), {}};
    r.argmax.resize(r.output.size());
    std::size_t k = 0;
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t y = 0; y < H / 2; ++y)
                for (std::size_t x = 0; x < W / 2; ++x, ++k) {
                    std::size_t best = ((n * C + c) * H + 2 * y) * W + 2 * x;
                    for (std::size_t dy = 0; dy < 2; ++dy)
                        for (std::size_t dx = 0; dx < 2; ++dx) {
                            const std::size_t idx = ((n * C + c) * H + 2 * y + dy) * W + 2 * x + dx;
                            if (in[idx] > in[best])
                                best = idx;
                        }
                    r.output[k] = in[best];
                    r.argmax[k] = static_cast<std::uint32_t>(best);
                }
    return r;
}

Tensor maxpool2x2_backward(const Shape& in_shape, const std::vector<std::uint32_t>& argmax, const Tensor& gout)
{
    if (argmax.size() != gout.size())
        throw ShapeError("maxpool2x2_backward: routing table does not match grad_output");
    Tensor g(in_shape);
    for (std::size_t k = 0; k < gout.size(); ++k)
        g[argmax[k]] += gout[k];
    return g;
}

Tensor deconv2x2s2_forward(const Tensor& in, const Tensor& w, const Tensor& b)
{
    kernels::check_deconv_shapes(in, w, &b, "deconv2x2s2_forward");
    const std::size_t N = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3), O = w.dim(0);
    Tensor out({N, O, 2 * H, 2 * W});
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t o = 0; o < O; ++o)
            for (std::size_t y = 0; y < 2 * H; ++y)
                for (std::size_t x = 0; x < 2 * W; ++x) {
                    double acc = b[o];
                    for (std::size_t c = 0; c < C; ++c)
                        acc += w.at(o, c, y % 2, x % 2) * in.at(n, c, y / 2, x / 2);
                    out.at(n, o, y, x) = acc;
                }
    return out;
}

ConvGrads deconv2x2s2_backward(const Tensor& in, const Tensor& w, const Tensor& gout)
{
    kernels::check_deconv_shapes(in, w, nullptr, "deconv2x2s2_backward");
    const std::size_t N = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3), O = w.dim(0);
    if (gout.shape() != Shape{N, O, 2 * H, 2 * W})
        throw ShapeError("deconv2x2s2_backward: grad_output " + shape_string(gout.shape()) +
                         " does not match output " + shape_string({N, O, 2 * H, 2 * W}));
    ConvGrads g{Tensor(in.shape()), Tensor(w.shape()), Tensor({O})};
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t o = 0; o < O; ++o)
            for (std::size_t y = 0; y < 2 * H; ++y)
                for (std::size_t x = 0; x < 2 * W; ++x) {
                    const double go = gout.at(n, o, y, x);
                    g.biases[o] += go;
                    for (std::size_t c = 0; c < C; ++c) {
                        g.kernels.at(o, c, y % 2, x % 2) += go * in.at(n, c, y / 2, x / 2);
                        g.input.at(n, c, y / 2, x / 2) += go * w.at(o, c, y % 2, x % 2);
                    }
                }
    return g;
}

Tensor concat_channels(const Tensor& a, const Tensor& b)
{
    kernels::check_rank4(a, "concat_channels");
    kernels::check_rank4(b, "concat_channels");
    const std::size_t N = a.dim(0), Ca = a.dim(1), Cb = b.dim(1), H = a.dim(2), W = a.dim(3);
    if (b.dim(0) != N || b.dim(2) != H || b.dim(3) != W)
        throw ShapeError("concat_channels: shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
    Tensor out({N, Ca + Cb, H, W});
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < Ca + Cb; ++c)
            for (std::size_t y = 0; y < H; ++y)
                for (std::size_t x = 0; x < W; ++x)
                    out.at(n, c, y, x) = c < Ca ? a.at(n, c, y, x) : b.at(n, c - Ca, y, x);
    return out;
}

std::pair<Tensor, Tensor> split_channels(const Tensor& grad, std::size_t ca)
{
    kernels::check_rank4(grad, "split_channels");
    const std::size_t N = grad.dim(0), C = grad.dim(1), H = grad.dim(2), W = grad.dim(3);
    if (ca == 0 || ca >= C)
        throw ShapeError("split_channels: cannot split " + std::to_string(C) + " channels at " +
                         std::to_string(ca));
    Tensor a({N, ca, H, W}), b({N, C - ca, H, W});
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t y = 0; y < H; ++y)
                for (std::size_t x = 0; x < W; ++x) {
                    if (c < ca)
                        a.at(n, c, y, x) = grad.at(n, c, y, x);
                    else
                        b.at(n, c - ca, y, x) = grad.at(n, c, y, x);
                }
    return {std::move(a), std::move(b)};
}

} // namespace crackloss::reference
