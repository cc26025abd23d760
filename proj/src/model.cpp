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

#include "crackloss/model.hpp"

#include "crackloss/errors.hpp"
#include "crackloss/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>

namespace crackloss::model {
namespace {

std::size_t channels_at(const UNetConfig& cfg, std::size_t level) { return cfg.base_channels << level; }

// Layer indices; see zero_params for the order.
std::size_t enc_layer(std::size_t level) { return 2 * level; }
std::size_t bottom_layer(const UNetConfig& cfg) { return 2 * cfg.depth; }
std::size_t dec_layer(const UNetConfig& cfg, std::size_t level)
{
    return 2 * cfg.depth + 2 + 3 * (cfg.depth - 1 - level);
}
std::size_t head_layer(const UNetConfig& cfg) { return 5 * cfg.depth + 2; }

NamedLayer make_layer(std::string name, LayerKind kind, std::size_t out, std::size_t in)
{
    const std::size_t k = kind == LayerKind::Conv3x3 ? 3 : 2;
    return {std::move(name), kind, {Tensor({out, in, k, k}), Tensor({out})}};
}

} // namespace

void UNetConfig::validate() const
{
    if (depth == 0 || depth > 8)
        throw ConfigError("unet depth must be in [1, 8]");
    if (base_channels == 0 || base_channels > 1024)
        throw ConfigError("unet base_channels must be in [1, 1024]");
    if (input_channels == 0)
        throw ConfigError("unet input_channels must be positive");
}

UNetParams zero_params(const UNetConfig& cfg)
{
    cfg.validate();
    UNetParams p;
    for (std::size_t l = 0; l < cfg.depth; ++l) {
        const std::size_t in = l == 0 ? cfg.input_channels : channels_at(cfg, l - 1);
        const std::size_t out = channels_at(cfg, l);
        p.push_back(make_layer("enc" + std::to_string(l) + ".conv1", LayerKind::Conv3x3, out, in));
        p.push_back(make_layer("enc" + std::to_string(l) + ".conv2", LayerKind::Conv3x3, out, out));
    }
    const std::size_t bc = channels_at(cfg, cfg.depth);
    p.push_back(make_layer("bottom.conv1", LayerKind::Conv3x3, bc, channels_at(cfg, cfg.depth - 1)));
    p.push_back(make_layer("bottom.conv2", LayerKind::Conv3x3, bc, bc));
    for (std::size_t s = 0; s < cfg.depth; ++s) {
        const std::size_t l = cfg.depth - 1 - s;
        const std::size_t c = channels_at(cfg, l);
        const std::string prefix = "dec" + std::to_string(l);
        p.push_back(make_layer(prefix + ".up", LayerKind::Deconv2x2, c, channels_at(cfg, l + 1)));
        p.push_back(make_layer(prefix + ".conv1", LayerKind::Conv3x3, c, 2 * c));
        p.push_back(make_layer(prefix + ".conv2", LayerKind::Conv3x3, c, c));
    }
    p.push_back(make_layer("head", LayerKind::Conv3x3, 1, cfg.base_channels));
    return p;
}

std::size_t parameter_count(const UNetParams& params)
{
    std::size_t n = 0;
    for (const auto& l : params)
        n += l.params.kernels.size() + l.params.biases.size();
    return n;
}

std::size_t fan_in(const NamedLayer& layer)
{
    const Tensor& k = layer.params.kernels;
    return layer.kind == LayerKind::Conv3x3 ? k.dim(1) * k.dim(2) * k.dim(3) : k.dim(1);
}

UNetParams he_init(const UNetConfig& cfg, SeededRng& rng)
{
    UNetParams p = zero_params(cfg);
    for (auto& layer : p) {
        const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in(layer)));
        for (double& w : layer.params.kernels.values())
            w = rng.normal(0.0, stddev);
    }
    return p;
}

UNet::UNet(UNetConfig cfg, UNetParams params) : cfg_(cfg), params_(std::move(params))
{
    const UNetParams expected = zero_params(cfg_);
    if (params_.size() != expected.size())
        throw ShapeError("unet parameters have " + std::to_string(params_.size()) + " layers, config needs " +
                         std::to_string(expected.size()));
    for (std::size_t i = 0; i < expected.size(); ++i) {
        const auto& want = expected[i];
        const auto& got = params_[i];
        if (got.kind != want.kind || got.params.kernels.shape() != want.params.kernels.shape() ||
            got.params.biases.shape() != want.params.biases.shape())
            throw ShapeError("unet layer " + want.name + " expects kernels " +
                             shape_string(want.params.kernels.shape()) + ", got " +
                             shape_string(got.params.kernels.shape()));
    }
    grads_ = expected;
}

Tensor UNet::block_forward(const Tensor& in, std::size_t first, Block& b) const
{
    const auto& c1 = params_[first].params;
    const auto& c2 = params_[first + 1].params;
    b.in = in;
    b.pre1 = kernels::conv2d_forward(b.in, c1.kernels, c1.biases);
    b.act1 = kernels::relu_forward(b.pre1);
    b.pre2 = kernels::conv2d_forward(b.act1, c2.kernels, c2.biases);
    b.act2 = kernels::relu_forward(b.pre2);
    return b.act2;
}

Tensor UNet::run(const Tensor& images, Cache& cache) const
{
    kernels::check_rank4(images, "unet forward");
    if (images.dim(1) != cfg_.input_channels)
        throw ShapeError("unet forward: expected " + std::to_string(cfg_.input_channels) + " input channels, got " +
                         shape_string(images.shape()));
    const std::size_t m = cfg_.size_multiple();
    if (images.dim(2) % m || images.dim(3) % m)
        throw ShapeError("unet forward: height and width must be multiples of " + std::to_string(m) + ", got " +
                         shape_string(images.shape()));

    cache.enc.assign(cfg_.depth, {});
    cache.dec.assign(cfg_.depth, {});
    Tensor x = images;
    for (std::size_t l = 0; l < cfg_.depth; ++l) {
        Level& lv = cache.enc[l];
        const Tensor skip = block_forward(x, enc_layer(l), lv.block);
        auto pooled = kernels::maxpool2x2_forward(skip);
        lv.pool_argmax = std::move(pooled.argmax);
        x = std::move(pooled.output);
    }
    x = block_forward(x, bottom_layer(cfg_), cache.bottom);
    for (std::size_t s = 0; s < cfg_.depth; ++s) {
        const std::size_t l = cfg_.depth - 1 - s;
        Level& lv = cache.dec[l];
        const std::size_t first = dec_layer(cfg_, l);
        const auto& up = params_[first].params;
        lv.up_in = std::move(x);
        lv.up_out = kernels::deconv2x2s2_forward(lv.up_in, up.kernels, up.biases);
        const Tensor cat = kernels::concat_channels(cache.enc[l].block.act2, lv.up_out);
        x = block_forward(cat, first + 1, lv.block);
    }
    const auto& head = params_[head_layer(cfg_)].params;
    cache.head_in = std::move(x);
    Tensor logits = kernels::conv2d_forward(cache.head_in, head.kernels, head.biases);
    cache.logits_shape = logits.shape();
    return logits;
}

Tensor UNet::forward(const Tensor& images)
{
    cached_ = false;
    Tensor logits = run(images, cache_);
    cached_ = true;
    return logits;
}

Tensor UNet::predict(const Tensor& images) const
{
    Cache scratch;
    return run(images, scratch);
}

void UNet::accumulate(std::size_t layer, kernels::ConvGrads&& g)
{
    grads_[layer].params.kernels = std::move(g.kernels);
    grads_[layer].params.biases = std::move(g.biases);
}

Tensor UNet::block_backward(const Block& b, std::size_t first, const Tensor& grad)
{
    Tensor g = kernels::relu_backward(b.pre2, grad);
    auto g2 = kernels::conv2d_backward(b.act1, params_[first + 1].params.kernels, g);
    g = kernels::relu_backward(b.pre1, g2.input);
    accumulate(first + 1, std::move(g2));
    auto g1 = kernels::conv2d_backward(b.in, params_[first].params.kernels, g);
    Tensor gin = std::move(g1.input);
    accumulate(first, std::move(g1));
    return gin;
}

const UNetParams& UNet::backward(const Tensor& grad_logits)
{
    if (!cached_)
        throw StateError("unet backward called without a preceding forward pass");
    if (grad_logits.size() != shape_volume(cache_.logits_shape))
        throw ShapeError("unet backward: gradient " + shape_string(grad_logits.shape()) +
                         " does not match logits " + shape_string(cache_.logits_shape));
    cached_ = false;
    const Tensor g_logits = grad_logits.reshaped(cache_.logits_shape);

    auto gh = kernels::conv2d_backward(cache_.head_in, params_[head_layer(cfg_)].params.kernels, g_logits);
    Tensor g = std::move(gh.input);
    accumulate(head_layer(cfg_), std::move(gh));

    std::vector<Tensor> skip_grads(cfg_.depth);
    for (std::size_t l = 0; l < cfg_.depth; ++l) {
        const Level& lv = cache_.dec[l];
        const std::size_t first = dec_layer(cfg_, l);
        const Tensor g_cat = block_backward(lv.block, first + 1, g);
        auto [g_skip, g_up] = kernels::split_channels(g_cat, cache_.enc[l].block.act2.dim(1));
        skip_grads[l] = std::move(g_skip);
        auto gu = kernels::deconv2x2s2_backward(lv.up_in, params_[first].params.kernels, g_up);
        g = std::move(gu.input);
        accumulate(first, std::move(gu));
    }
    g = block_backward(cache_.bottom, bottom_layer(cfg_), g);
    for (std::size_t s = 0; s < cfg_.depth; ++s) {
        const std::size_t l = cfg_.depth - 1 - s;
        const Level& lv = cache_.enc[l];
        Tensor g_act = kernels::maxpool2x2_backward(lv.block.act2.shape(), lv.pool_argmax, g);
        const Tensor& sg = skip_grads[l];
        for (std::size_t i = 0; i < g_act.size(); ++i)
            g_act[i] += sg[i];
        g = block_backward(lv.block, enc_layer(l), g_act);
    }
    cache_ = Cache{};
    return grads_;
}

double UNet::kink_margin() const
{
    if (!cached_)
        throw StateError("unet kink_margin called without a preceding forward pass");
    double m = std::numeric_limits<double>::infinity();
    auto relu_margin = [&m](const Block& b) {
        for (const double v : b.pre1.values())
            m = std::min(m, std::abs(v));
        for (const double v : b.pre2.values())
            m = std::min(m, std::abs(v));
    };
    for (const Level& lv : cache_.enc) {
        relu_margin(lv.block);
        const Tensor& a = lv.block.act2;
        const std::size_t planes = a.dim(0) * a.dim(1), H = a.dim(2), W = a.dim(3);
        for (std::size_t p = 0; p < planes; ++p)
            for (std::size_t y = 0; y < H; y += 2)
                for (std::size_t x = 0; x < W; x += 2) {
                    const std::size_t i0 = p * H * W + y * W + x;
                    double w[4] = {a[i0], a[i0 + 1], a[i0 + W], a[i0 + W + 1]};
                    std::sort(w, w + 4);
                    if (w[3] > 0.0)
                        m = std::min(m, w[3] - w[2]);
                }
    }
    relu_margin(cache_.bottom);
    for (const Level& lv : cache_.dec)
        relu_margin(lv.block);
    return m;
}

AdamState make_adam_state(const UNetParams& params)
{
    AdamState s;
    for (const auto& l : params) {
        s.first_moment.push_back({Tensor(l.params.kernels.shape()), Tensor(l.params.biases.shape())});
        s.second_moment.push_back({Tensor(l.params.kernels.shape()), Tensor(l.params.biases.shape())});
    }
    return s;
}

namespace {

void adam_tensor(Tensor& w, const Tensor& g, Tensor& m, Tensor& v, const AdamState& s, double lr, double c1,
                 double c2)
{
    if (w.shape() != g.shape() || w.shape() != m.shape() || w.shape() != v.shape())
        throw ShapeError("adam_step: parameter " + shape_string(w.shape()) + ", gradient " +
                         shape_string(g.shape()) + " and moments " + shape_string(m.shape()) + " must match");
    for (std::size_t i = 0; i < w.size(); ++i) {
        m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * g[i];
        v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * g[i] * g[i];
        const double mhat = m[i] / c1;
        const double vhat = v[i] / c2;
        w[i] -= lr * mhat / (std::sqrt(vhat) + s.epsilon);
    }
}

} // namespace

void adam_step(UNetParams& params, const UNetParams& grads, AdamState& state, double lr)
{
    if (params.size() != grads.size() || params.size() != state.first_moment.size() ||
        params.size() != state.second_moment.size())
        throw ShapeError("adam_step: parameter, gradient and moment lists differ in length");
    state.step_count += 1;
    const double t = static_cast<double>(state.step_count);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        adam_tensor(params[i].params.kernels, grads[i].params.kernels, state.first_moment[i].kernels,
                    state.second_moment[i].kernels, state, lr, c1, c2);
        adam_tensor(params[i].params.biases, grads[i].params.biases, state.first_moment[i].biases,
                    state.second_moment[i].biases, state, lr, c1, c2);
    }
}

// ---- checkpoints ----

namespace {

constexpr char kMagic[8] = {'C', 'R', 'K', 'L', 'C', 'K', 'P', 'T'};

template <class T>
void put(std::vector<std::uint8_t>& out, T v)
{
    static_assert(std::is_trivially_copyable_v<T>);
    std::uint8_t buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big)
        std::reverse(buf, buf + sizeof(T));
    out.insert(out.end(), buf, buf + sizeof(T));
}

class Reader {
public:
    explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

    template <class T>
    T get(const char* field)
    {
        need(sizeof(T), field);
        std::uint8_t buf[sizeof(T)];
        std::memcpy(buf, bytes_.data() + pos_, sizeof(T));
        if constexpr (std::endian::native == std::endian::big)
            std::reverse(buf, buf + sizeof(T));
        pos_ += sizeof(T);
        T v;
        std::memcpy(&v, buf, sizeof(T));
        return v;
    }

    std::string bytes(std::size_t n, const char* field)
    {
        need(n, field);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }

    std::size_t pos() const noexcept { return pos_; }
    bool done() const noexcept { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n, const char* field) const
    {
        if (bytes_.size() - pos_ < n)
            throw ParseError(std::string("checkpoint truncated while reading ") + field, pos_);
    }

    const std::vector<std::uint8_t>& bytes_;
    std::size_t pos_ = 0;
};

void put_tensor(std::vector<std::uint8_t>& out, const std::string& name, const Tensor& t)
{
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape())
        put<std::uint64_t>(out, d);
    for (double v : t.values())
        put<double>(out, v);
}

} // namespace

std::vector<std::uint8_t> encode_checkpoint(const UNetConfig& cfg, const UNetParams& params)
{
    std::vector<std::uint8_t> out(kMagic, kMagic + 8);
    put<std::uint32_t>(out, kCheckpointVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(cfg.depth));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(cfg.base_channels));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(cfg.input_channels));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(2 * params.size()));
    for (const auto& l : params) {
        put_tensor(out, l.name + ".kernels", l.params.kernels);
        put_tensor(out, l.name + ".biases", l.params.biases);
    }
    return out;
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes)
{
    Reader r(bytes);
    if (r.bytes(8, "magic") != std::string(kMagic, 8))
        throw ParseError("not a crackloss checkpoint (bad magic)", 0);
    const auto version = r.get<std::uint32_t>("version");
    if (version != kCheckpointVersion)
        throw ParseError("unsupported checkpoint version " + std::to_string(version), 8);
    Checkpoint ck;
    ck.config.depth = r.get<std::uint32_t>("depth");
    ck.config.base_channels = r.get<std::uint32_t>("base_channels");
    ck.config.input_channels = r.get<std::uint32_t>("input_channels");
    try {
        ck.params = zero_params(ck.config);
    } catch (const ConfigError& e) {
        throw ParseError(std::string("invalid checkpoint config: ") + e.what(), r.pos());
    }
    const auto count = r.get<std::uint32_t>("tensor count");
    if (count != 2 * ck.params.size())
        throw ParseError("checkpoint holds " + std::to_string(count) + " tensors, config needs " +
                         std::to_string(2 * ck.params.size()),
                         r.pos());
    for (std::size_t i = 0; i < count; ++i) {
        auto& layer = ck.params[i / 2];
        Tensor& dst = i % 2 == 0 ? layer.params.kernels : layer.params.biases;
        const std::string want = layer.name + (i % 2 == 0 ? ".kernels" : ".biases");
        const std::size_t at = r.pos();
        const auto name_len = r.get<std::uint32_t>("name length");
        const std::string name = r.bytes(name_len, "name");
        if (name != want)
            throw ParseError("expected tensor " + want + ", found " + name, at);
        const auto rank = r.get<std::uint32_t>("rank");
        Shape shape(rank);
        for (auto& d : shape)
            d = static_cast<std::size_t>(r.get<std::uint64_t>("dims"));
        if (shape != dst.shape())
            throw ParseError("tensor " + name + " has shape " + shape_string(shape) + ", expected " +
                             shape_string(dst.shape()),
                             at);
        for (double& v : dst.values()) {
            v = r.get<double>("values");
            if (!std::isfinite(v))
                throw ParseError("non-finite value in tensor " + name, r.pos() - 8);
        }
    }
    if (!r.done())
        throw ParseError("trailing bytes after checkpoint", r.pos());
    return ck;
}

void save_checkpoint(const std::filesystem::path& path, const UNetConfig& cfg, const UNetParams& params)
{
    io::write_file_atomic(path, encode_checkpoint(cfg, params));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(io::read_file_bytes(path)); }

} // namespace crackloss::model
