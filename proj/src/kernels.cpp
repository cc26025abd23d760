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

#include "crackloss/kernels.hpp"

#include "crackloss/errors.hpp"

#include <algorithm>
#include <cstring>

namespace crackloss::kernels {
namespace {

thread_local int tl_threads = 1;

using index_t = std::ptrdiff_t;

// Copies every N x C plane into a zero-bordered buffer of (H + 2p) x (W + 2p).
std::vector<double> pad_planes(const Tensor& t, std::size_t pad)
{
    const std::size_t planes = t.dim(0) * t.dim(1), H = t.dim(2), W = t.dim(3);
    const std::size_t Hp = H + 2 * pad, Wp = W + 2 * pad;
    std::vector<double> out(planes * Hp * Wp, 0.0);
    const int nt = tl_threads;
#pragma omp parallel for num_threads(nt) if (nt > 1) schedule(static)
    for (index_t p = 0; p < static_cast<index_t>(planes); ++p) {
        const double* src = t.data() + p * H * W;
        double* dst = out.data() + p * Hp * Wp + pad * Wp + pad;
        for (std::size_t y = 0; y < H; ++y)
            std::memcpy(dst + y * Wp, src + y * W, W * sizeof(double));
    }
    return out;
}

// acc[j] += w * src[j] for j < len; the caller arranges strides so the flat
// loop covers whole rows of a padded plane.
inline void axpy(double* __restrict acc, const double* __restrict src, double w, std::size_t len) noexcept
{
    for (std::size_t j = 0; j < len; ++j)
        acc[j] += w * src[j];
}

inline double dot(const double* __restrict a, const double* __restrict b, std::size_t len) noexcept
{
    double s = 0.0;
    for (std::size_t j = 0; j < len; ++j)
        s += a[j] * b[j];
    return s;
}

} // namespace

void set_num_threads(int n) noexcept { tl_threads = std::max(1, n); }
int num_threads() noexcept { return tl_threads; }

void check_rank4(const Tensor& t, const char* what)
{
    if (t.rank() != 4)
        throw ShapeError(std::string(what) + ": expected an NCHW tensor, got " + shape_string(t.shape()));
}

void check_conv_shapes(const Tensor& in, const Tensor& w, const Tensor* b, const char* what)
{
    check_rank4(in, what);
    check_rank4(w, what);
    if (w.dim(1) != in.dim(1))
        throw ShapeError(std::string(what) + ": kernel " + shape_string(w.shape()) + " expects " +
                         std::to_string(w.dim(1)) + " input channels, input is " + shape_string(in.shape()));
    if (w.dim(2) != w.dim(3) || w.dim(2) % 2 == 0)
        throw ShapeError(std::string(what) + ": kernel must be square with odd size, got " +
                         shape_string(w.shape()));
    if (b && (b->rank() != 1 || b->dim(0) != w.dim(0)))
        throw ShapeError(std::string(what) + ": bias " + shape_string(b->shape()) + " does not match kernel " +
                         shape_string(w.shape()));
}

void check_deconv_shapes(const Tensor& in, const Tensor& w, const Tensor* b, const char* what)
{
    check_rank4(in, what);
    check_rank4(w, what);
    if (w.dim(1) != in.dim(1))
        throw ShapeError(std::string(what) + ": kernel " + shape_string(w.shape()) + " expects " +
                         std::to_string(w.dim(1)) + " input channels, input is " + shape_string(in.shape()));
    if (w.dim(2) != 2 || w.dim(3) != 2)
        throw ShapeError(std::string(what) + ": kernel must be 2x2, got " + shape_string(w.shape()));
    if (b && (b->rank() != 1 || b->dim(0) != w.dim(0)))
        throw ShapeError(std::string(what) + ": bias " + shape_string(b->shape()) + " does not match kernel " +
                         shape_string(w.shape()));
}

namespace {

constexpr std::size_t kOutBlock = 4;
constexpr std::size_t kGradLanes = 8;

// Correlates S padded source planes with a K x K kernel per (output, source)
// pair and adds the result into OB output planes of H x W. Weights are read as
// wts[ob * w_ostride + s * K * K + tap].
template <std::size_t K, std::size_t OB>
void correlate_block(const double* __restrict planes, std::size_t S, std::size_t Hp, std::size_t Wp, std::size_t H,
                     std::size_t W, const double* wts, std::size_t w_ostride, double* __restrict out)
{
    constexpr std::size_t KK = K * K;
    for (std::size_t s = 0; s < S; ++s) {
        const double* __restrict p = planes + s * Hp * Wp;
        double wv[OB][KK];
        for (std::size_t ob = 0; ob < OB; ++ob)
            for (std::size_t t = 0; t < KK; ++t)
                wv[ob][t] = wts[ob * w_ostride + s * KK + t];
        for (std::size_t y = 0; y < H; ++y) {
            const double* __restrict row = p + y * Wp;
            double* __restrict o = out + y * W;
#pragma GCC ivdep
            for (std::size_t x = 0; x < W; ++x) {
                double a[OB] = {};
                for (std::size_t ky = 0; ky < K; ++ky)
                    for (std::size_t kx = 0; kx < K; ++kx) {
                        const double v = row[ky * Wp + x + kx];
                        for (std::size_t ob = 0; ob < OB; ++ob)
                            a[ob] += wv[ob][ky * K + kx] * v;
                    }
                for (std::size_t ob = 0; ob < OB; ++ob)
                    o[ob * H * W + x] += a[ob];
            }
        }
    }
}

// Fallback for kernel sizes without a specialisation.
void correlate_generic(const double* planes, std::size_t S, std::size_t K, std::size_t Hp, std::size_t Wp,
                       std::size_t H, std::size_t W, const double* wts, double* out)
{
    const std::size_t len = (H - 1) * Wp + W;
    std::vector<double> acc(H * Wp, 0.0);
    for (std::size_t s = 0; s < S; ++s)
        for (std::size_t ky = 0; ky < K; ++ky)
            for (std::size_t kx = 0; kx < K; ++kx)
                axpy(acc.data(), planes + s * Hp * Wp + ky * Wp + kx, wts[s * K * K + ky * K + kx], len);
    for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x)
            out[y * W + x] += acc[y * Wp + x];
}

template <std::size_t K>
void correlate_dispatch(const double* planes, std::size_t S, std::size_t Hp, std::size_t Wp, std::size_t H,
                        std::size_t W, const double* wts, std::size_t w_ostride, std::size_t count, double* out)
{
    std::size_t ob = 0;
    for (; ob + kOutBlock <= count; ob += kOutBlock)
        correlate_block<K, kOutBlock>(planes, S, Hp, Wp, H, W, wts + ob * w_ostride, w_ostride, out + ob * H * W);
    for (; ob < count; ++ob)
        correlate_block<K, 1>(planes, S, Hp, Wp, H, W, wts + ob * w_ostride, w_ostride, out + ob * H * W);
}

// out[t] (H x W, t < count) += sum_s corr(planes[s], wts[t][s]).
void correlate(const double* planes, std::size_t S, std::size_t K, std::size_t Hp, std::size_t Wp, std::size_t H,
               std::size_t W, const double* wts, std::size_t w_ostride, std::size_t count, double* out)
{
    switch (K) {
    case 1: correlate_dispatch<1>(planes, S, Hp, Wp, H, W, wts, w_ostride, count, out); return;
    case 3: correlate_dispatch<3>(planes, S, Hp, Wp, H, W, wts, w_ostride, count, out); return;
    case 5: correlate_dispatch<5>(planes, S, Hp, Wp, H, W, wts, w_ostride, count, out); return;
    default:
        for (std::size_t t = 0; t < count; ++t)
            correlate_generic(planes, S, K, Hp, Wp, H, W, wts + t * w_ostride, out + t * H * W);
    }
}

// Runs jobs over (image, block of output planes) and fills out[n][t] for all t.
void correlate_all(const std::vector<double>& padded, std::size_t N, std::size_t S, std::size_t K, std::size_t H,
                   std::size_t W, const double* wts, std::size_t T, double* out)
{
    const std::size_t pad = K / 2, Hp = H + 2 * pad, Wp = W + 2 * pad;
    const std::size_t blocks = (T + kOutBlock - 1) / kOutBlock;
    const int nt = tl_threads;
#pragma omp parallel for num_threads(nt) if (nt > 1) schedule(static)
    for (index_t job = 0; job < static_cast<index_t>(N * blocks); ++job) {
        const std::size_t n = job / blocks, t0 = (job % blocks) * kOutBlock;
        const std::size_t count = std::min(kOutBlock, T - t0);
        correlate(padded.data() + n * S * Hp * Wp, S, K, Hp, Wp, H, W, wts + t0 * S * K * K, S * K * K, count,
                  out + (n * T + t0) * H * W);
    }
}

// gw[tap] += sum over valid (y, x) of g[y, x] * plane[y + ky, x + kx], with
// plane on the padded stride Wp.
template <std::size_t K>
void weight_grad_plane(const double* __restrict g, const double* __restrict plane, std::size_t H, std::size_t W,
                       std::size_t Wp, double* gw)
{
    constexpr std::size_t KK = K * K;
    constexpr std::size_t L = kGradLanes;
    double acc[KK][L] = {};
    double tail[KK] = {};
    const std::size_t Wv = W - W % L;
    for (std::size_t y = 0; y < H; ++y) {
        const double* __restrict gr = g + y * W;
        const double* __restrict pr = plane + y * Wp;
        for (std::size_t x = 0; x < Wv; x += L)
            for (std::size_t ky = 0; ky < K; ++ky)
                for (std::size_t kx = 0; kx < K; ++kx)
                    for (std::size_t j = 0; j < L; ++j)
                        acc[ky * K + kx][j] += gr[x + j] * pr[ky * Wp + x + kx + j];
        for (std::size_t x = Wv; x < W; ++x)
            for (std::size_t ky = 0; ky < K; ++ky)
                for (std::size_t kx = 0; kx < K; ++kx)
                    tail[ky * K + kx] += gr[x] * pr[ky * Wp + x + kx];
    }
    for (std::size_t t = 0; t < KK; ++t) {
        double s = tail[t];
        for (std::size_t j = 0; j < L; ++j)
            s += acc[t][j];
        gw[t] += s;
    }
}

void weight_grad_generic(const double* g, const double* plane, std::size_t K, std::size_t H, std::size_t W,
                         std::size_t Wp, double* gw)
{
    for (std::size_t ky = 0; ky < K; ++ky)
        for (std::size_t kx = 0; kx < K; ++kx) {
            double s = 0.0;
            for (std::size_t y = 0; y < H; ++y)
                s += dot(g + y * W, plane + (y + ky) * Wp + kx, W);
            gw[ky * K + kx] += s;
        }
}

} // namespace

Tensor conv2d_forward(const Tensor& in, const Tensor& w, const Tensor& b)
{
    check_conv_shapes(in, w, &b, "conv2d_forward");
    const std::size_t N = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
    const std::size_t O = w.dim(0), K = w.dim(2);
    const std::vector<double> padded = pad_planes(in, K / 2);

    Tensor out({N, O, H, W});
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t o = 0; o < O; ++o)
            std::fill_n(out.data() + (n * O + o) * H * W, H * W, b[o]);
    correlate_all(padded, N, C, K, H, W, w.data(), O, out.data());
    return out;
}

ConvGrads conv2d_backward(const Tensor& in, const Tensor& w, const Tensor& gout)
{
    check_conv_shapes(in, w, nullptr, "conv2d_backward");
    const std::size_t N = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
    const std::size_t O = w.dim(0), K = w.dim(2), pad = K / 2, KK = K * K;
    if (gout.shape() != Shape{N, O, H, W})
        throw ShapeError("conv2d_backward: grad_output " + shape_string(gout.shape()) + " does not match output " +
                         shape_string({N, O, H, W}));
    const std::size_t Wp = W + 2 * pad;
    ConvGrads g{Tensor(in.shape()), Tensor(w.shape()), Tensor({O})};

    // Input gradient: correlation of the padded output gradient with the
    // kernel transposed over channels and flipped in space.
    {
        std::vector<double> flipped(C * O * KK);
        for (std::size_t o = 0; o < O; ++o)
            for (std::size_t c = 0; c < C; ++c)
                for (std::size_t t = 0; t < KK; ++t)
                    flipped[(c * O + o) * KK + t] = w[(o * C + c) * KK + (KK - 1 - t)];
        const std::vector<double> padded_gout = pad_planes(gout, pad);
        correlate_all(padded_gout, N, O, K, H, W, flipped.data(), C, g.input.data());
    }

    // Kernel and bias gradients, one job per (output, input) channel pair.
    const std::vector<double> padded_in = pad_planes(in, pad);
    const int nt = tl_threads;
#pragma omp parallel for num_threads(nt) if (nt > 1) schedule(static)
    for (index_t job = 0; job < static_cast<index_t>(O * C); ++job) {
        const std::size_t o = job / C, c = job % C;
        double* gw = g.kernels.data() + (o * C + c) * KK;
        for (std::size_t n = 0; n < N; ++n) {
            const double* gp = gout.data() + (n * O + o) * H * W;
            const double* plane = padded_in.data() + (n * C + c) * (H + 2 * pad) * Wp;
            switch (K) {
            case 1: weight_grad_plane<1>(gp, plane, H, W, Wp, gw); break;
            case 3: weight_grad_plane<3>(gp, plane, H, W, Wp, gw); break;
            case 5: weight_grad_plane<5>(gp, plane, H, W, Wp, gw); break;
            default: weight_grad_generic(gp, plane, K, H, W, Wp, gw);
            }
        }
    }
    for (std::size_t o = 0; o < O; ++o) {
        double gb = 0.0;
        for (std::size_t n = 0; n < N; ++n) {
            const double* gp = gout.data() + (n * O + o) * H * W;
            for (std::size_t i = 0; i < H * W; ++i)
                gb += gp[i];
        }
        g.biases[o] = gb;
    }
    return g;
}

Tensor relu_forward(const Tensor& in)
{
    Tensor out(in.shape());
    const double* src = in.data();
    double* dst = out.data();
    for (std::size_t i = 0; i < in.size(); ++i)
        dst[i] = src[i] > 0.0 ? src[i] : 0.0;
    return out;
}

Tensor relu_backward(const Tensor& in, const Tensor& gout)
{
    require_same_shape(in, gout, "relu_backward");
    Tensor g(in.shape());
    const double* src = in.data();
    const double* go = gout.data();
    double* dst = g.data();
    for (std::size_t i = 0; i < in.size(); ++i)
        dst[i] = src[i] > 0.0 ? go[i] : 0.0;
    return g;
}

PoolResult maxpool2x2_forward(const Tensor& in)
{
    check_rank4(in, "maxpool2x2_forward");
    const std::size_t N = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
    if (H % 2 || W % 2)
        throw ShapeError("maxpool2x2_forward: spatial size " + shape_string(in.shape()) + " is not even");
    const std::size_t Ho = H / 2, Wo = W / 2;
    PoolResult r{Tensor({N, C, Ho, Wo}), std::vector<std::uint32_t>(N * C * Ho * Wo)};
    const int nt = tl_threads;
#pragma omp parallel for num_threads(nt) if (nt > 1) schedule(static)
    for (index_t p = 0; p < static_cast<index_t>(N * C); ++p) {
        const std::size_t base = p * H * W;
        for (std::size_t y = 0; y < Ho; ++y)
            for (std::size_t x = 0; x < Wo; ++x) {
                const std::size_t i0 = base + 2 * y * W + 2 * x;
                const std::size_t cand[4] = {i0, i0 + 1, i0 + W, i0 + W + 1};
                std::size_t best = cand[0];
                for (int k = 1; k < 4; ++k)
                    if (in[cand[k]] > in[best])
                        best = cand[k];
                const std::size_t k = p * Ho * Wo + y * Wo + x;
                r.output[k] = in[best];
                r.argmax[k] = static_cast<std::uint32_t>(best);
            }
    }
    return r;
}

Tensor maxpool2x2_backward(const Shape& in_shape, const std::vector<std::uint32_t>& argmax, const Tensor& gout)
{
    if (argmax.size() != gout.size())
        throw ShapeError("maxpool2x2_backward: routing table does not match grad_output");
    Tensor g(in_shape);
    // Windows do not overlap, so every input receives at most one contribution.
    for (std::size_t k = 0; k < gout.size(); ++k)
        g[argmax[k]] += gout[k];
    return g;
}

Tensor deconv2x2s2_forward(const Tensor& in, const Tensor& w, const Tensor& b)
{
    check_deconv_shapes(in, w, &b, "deconv2x2s2_forward");
    const std::size_t N = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3), O = w.dim(0);
    const std::size_t W2 = 2 * W;
    Tensor out({N, O, 2 * H, W2});
    const int nt = tl_threads;
#pragma omp parallel for num_threads(nt) if (nt > 1) schedule(static)
    for (index_t job = 0; job < static_cast<index_t>(N * O); ++job) {
        const std::size_t n = job / O, o = job % O;
        double* dst = out.data() + (n * O + o) * 4 * H * W;
        std::fill(dst, dst + 4 * H * W, b[o]);
        for (std::size_t c = 0; c < C; ++c) {
            const double* src = in.data() + (n * C + c) * H * W;
            const double* wk = w.data() + (o * C + c) * 4;
            for (std::size_t y = 0; y < H; ++y) {
                double* r0 = dst + 2 * y * W2;
                double* r1 = r0 + W2;
                const double* s = src + y * W;
                for (std::size_t x = 0; x < W; ++x) {
                    const double v = s[x];
                    r0[2 * x] += wk[0] * v;
                    r0[2 * x + 1] += wk[1] * v;
                    r1[2 * x] += wk[2] * v;
                    r1[2 * x + 1] += wk[3] * v;
                }
            }
        }
    }
    return out;
}

ConvGrads deconv2x2s2_backward(const Tensor& in, const Tensor& w, const Tensor& gout)
{
    check_deconv_shapes(in, w, nullptr, "deconv2x2s2_backward");
    const std::size_t N = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3), O = w.dim(0);
    const std::size_t W2 = 2 * W;
    if (gout.shape() != Shape{N, O, 2 * H, W2})
        throw ShapeError("deconv2x2s2_backward: grad_output " + shape_string(gout.shape()) +
                         " does not match output " + shape_string({N, O, 2 * H, W2}));
    ConvGrads g{Tensor(in.shape()), Tensor(w.shape()), Tensor({O})};
    const int nt = tl_threads;

#pragma omp parallel for num_threads(nt) if (nt > 1) schedule(static)
    for (index_t job = 0; job < static_cast<index_t>(N * C); ++job) {
        const std::size_t n = job / C, c = job % C;
        double* dst = g.input.data() + (n * C + c) * H * W;
        for (std::size_t o = 0; o < O; ++o) {
            const double* src = gout.data() + (n * O + o) * 4 * H * W;
            const double* wk = w.data() + (o * C + c) * 4;
            for (std::size_t y = 0; y < H; ++y) {
                const double* r0 = src + 2 * y * W2;
                const double* r1 = r0 + W2;
                for (std::size_t x = 0; x < W; ++x)
                    dst[y * W + x] += wk[0] * r0[2 * x] + wk[1] * r0[2 * x + 1] + wk[2] * r1[2 * x] +
                                      wk[3] * r1[2 * x + 1];
            }
        }
    }

#pragma omp parallel for num_threads(nt) if (nt > 1) schedule(static)
    for (index_t oi = 0; oi < static_cast<index_t>(O); ++oi) {
        const auto o = static_cast<std::size_t>(oi);
        double gb = 0.0;
        for (std::size_t n = 0; n < N; ++n) {
            const double* src = gout.data() + (n * O + o) * 4 * H * W;
            for (std::size_t i = 0; i < 4 * H * W; ++i)
                gb += src[i];
            for (std::size_t c = 0; c < C; ++c) {
                const double* act = in.data() + (n * C + c) * H * W;
                double* gw = g.kernels.data() + (o * C + c) * 4;
                double s[4] = {0.0, 0.0, 0.0, 0.0};
                for (std::size_t y = 0; y < H; ++y) {
                    const double* r0 = src + 2 * y * W2;
                    const double* r1 = r0 + W2;
                    for (std::size_t x = 0; x < W; ++x) {
                        const double v = act[y * W + x];
                        s[0] += r0[2 * x] * v;
                        s[1] += r0[2 * x + 1] * v;
                        s[2] += r1[2 * x] * v;
                        s[3] += r1[2 * x + 1] * v;
                    }
                }
                for (int k = 0; k < 4; ++k)
                    gw[k] += s[k];
            }
        }
        g.biases[o] = gb;
    }
    return g;
}

Tensor concat_channels(const Tensor& a, const Tensor& b)
{
    check_rank4(a, "concat_channels");
    check_rank4(b, "concat_channels");
    const std::size_t N = a.dim(0), Ca = a.dim(1), Cb = b.dim(1), H = a.dim(2), W = a.dim(3);
    if (b.dim(0) != N || b.dim(2) != H || b.dim(3) != W)
        throw ShapeError("concat_channels: shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
    Tensor out({N, Ca + Cb, H, W});
    const std::size_t plane = H * W;
    for (std::size_t n = 0; n < N; ++n) {
        std::memcpy(out.data() + n * (Ca + Cb) * plane, a.data() + n * Ca * plane, Ca * plane * sizeof(double));
        std::memcpy(out.data() + (n * (Ca + Cb) + Ca) * plane, b.data() + n * Cb * plane,
                    Cb * plane * sizeof(double));
    }
    return out;
}

std::pair<Tensor, Tensor> split_channels(const Tensor& grad, std::size_t ca)
{
    check_rank4(grad, "split_channels");
    const std::size_t N = grad.dim(0), C = grad.dim(1), H = grad.dim(2), W = grad.dim(3);
    if (ca == 0 || ca >= C)
        throw ShapeError("split_channels: cannot split " + std::to_string(C) + " channels at " +
                         std::to_string(ca));
    const std::size_t cb = C - ca, plane = H * W;
    Tensor a({N, ca, H, W}), b({N, cb, H, W});
    for (std::size_t n = 0; n < N; ++n) {
        std::memcpy(a.data() + n * ca * plane, grad.data() + n * C * plane, ca * plane * sizeof(double));
        std::memcpy(b.data() + n * cb * plane, grad.data() + (n * C + ca) * plane, cb * plane * sizeof(double));
    }
    return {std::move(a), std::move(b)};
}

} // namespace crackloss::kernels
