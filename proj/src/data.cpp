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

#include "crackloss/data.hpp"

#include "crackloss/errors.hpp"
#include "crackloss/io.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <numeric>

namespace crackloss::data {

void SynthConfig::validate(std::size_t size_multiple) const
{
    if (width == 0 || height == 0)
        throw ConfigError("synth width and height must be positive");
    if (size_multiple > 1 && (width % size_multiple || height % size_multiple))
        throw ConfigError("synth width and height must be multiples of " + std::to_string(size_multiple) +
                          " for the configured network depth");
    if (!(target_pos_rate > 0.0 && target_pos_rate <= 0.1))
        throw ConfigError("target_pos_rate must lie in (0, 0.1]");
    if (target_pos_rate * static_cast<double>(width * height) < 1.0)
        throw ConfigError("target_pos_rate " + std::to_string(target_pos_rate) + " is unattainable at " +
                          std::to_string(width) + "x" + std::to_string(height) + " (less than one crack pixel)");
    if (n_cracks_min == 0 || n_cracks_max < n_cracks_min)
        throw ConfigError("crack count range must satisfy 1 <= n_cracks_min <= n_cracks_max");
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma))
        throw ConfigError("noise_sigma must be >= 0");
    if (!(background >= 0.0 && background <= 1.0))
        throw ConfigError("background must lie in [0, 1]");
    if (!std::isfinite(crack_intensity_delta) || std::abs(crack_intensity_delta) > 1.0)
        throw ConfigError("crack_intensity_delta must lie in [-1, 1]");
}

namespace {

// Draws one crack as a wandering polyline until it has marked `budget` new
// pixels. Leaving the frame restarts the walk at a fresh point.
std::size_t draw_crack(std::vector<std::uint8_t>& mask, std::size_t W, std::size_t H, std::size_t budget,
                       SeededRng& rng)
{
    constexpr double kPi = 3.14159265358979323846;
    const bool wide = rng.uniform() < 0.5;
    std::size_t marked = 0;
    const std::size_t max_steps = 50 * budget + 100;
    double x = 0, y = 0, heading = 0;
    bool inside = false;
    auto mark = [&](long px, long py) {
        if (px < 0 || py < 0 || px >= static_cast<long>(W) || py >= static_cast<long>(H))
            return;
        auto& m = mask[static_cast<std::size_t>(py) * W + static_cast<std::size_t>(px)];
        if (!m) {
            m = 1;
            ++marked;
        }
    };
    for (std::size_t step = 0; step < max_steps && marked < budget; ++step) {
        if (!inside) {
            x = rng.uniform(0.0, static_cast<double>(W));
            y = rng.uniform(0.0, static_cast<double>(H));
            heading = rng.uniform(0.0, 2.0 * kPi);
            inside = true;
        }
        const long px = std::lround(std::floor(x));
        const long py = std::lround(std::floor(y));
        mark(px, py);
        if (wide) {
            if (std::abs(std::cos(heading)) > std::abs(std::sin(heading)))
                mark(px, py + 1);
            else
                mark(px + 1, py);
        }
        heading += rng.normal(0.0, 0.3);
        x += std::cos(heading);
        y += std::sin(heading);
        inside = x >= 0.0 && y >= 0.0 && x < static_cast<double>(W) && y < static_cast<double>(H);
    }
    return marked;
}

Sample synth_one(const SynthConfig& cfg, SeededRng rng)
{
    const std::size_t W = cfg.width, H = cfg.height;
    const double expected = cfg.target_pos_rate * static_cast<double>(W * H);
    const auto budget = static_cast<std::size_t>(std::max(1.0, std::round(expected * rng.uniform(0.5, 1.5))));
    const std::size_t cracks =
        cfg.n_cracks_min + static_cast<std::size_t>(rng.uniform_int(cfg.n_cracks_max - cfg.n_cracks_min + 1));

    std::vector<std::uint8_t> mask(W * H, 0);
    std::size_t total = 0;
    for (std::size_t k = 0; k < cracks && total < budget; ++k) {
        const std::size_t share = k + 1 == cracks ? budget - total : std::max<std::size_t>(1, budget / cracks);
        total += draw_crack(mask, W, H, std::min(share, budget - total), rng);
    }

    Sample s{Tensor({1, H, W}), Tensor({H, W})};
    for (std::size_t i = 0; i < W * H; ++i) {
        double v = cfg.background - (mask[i] ? cfg.crack_intensity_delta : 0.0);
        if (cfg.noise_sigma > 0.0)
            v += rng.normal(0.0, cfg.noise_sigma);
        s.image[i] = std::clamp(v, 0.0, 1.0);
        s.mask[i] = mask[i];
    }
    return s;
}

} // namespace

std::vector<Sample> synth_generate(const SynthConfig& cfg, std::size_t count)
{
    cfg.validate();
    const SeededRng root(cfg.seed);
    std::vector<Sample> out(count);
    for (std::size_t i = 0; i < count; ++i)
        out[i] = synth_one(cfg, root.fork(i));
    return out;
}

double positive_rate(std::span<const Sample> samples)
{
    double pos = 0.0, total = 0.0;
    for (const auto& s : samples) {
        for (double v : s.mask.values())
            pos += v;
        total += static_cast<double>(s.mask.size());
    }
    return total > 0.0 ? pos / total : 0.0;
}

Sample gaussian_noise_augment(const Sample& sample, double sigma, SeededRng& rng)
{
    if (!(sigma >= 0.0))
        throw ValidationError("noise sigma must be >= 0");
    Sample out = sample;
    if (sigma == 0.0)
        return out;
    for (double& v : out.image.values())
        v = std::clamp(v + rng.normal(0.0, sigma), 0.0, 1.0);
    return out;
}

namespace {

// Remaps an H x W plane; `src_of(y, x)` gives the source coordinate of output (y, x).
template <class F>
void remap_plane(const double* src, double* dst, std::size_t H, std::size_t W, std::size_t outH, std::size_t outW,
                 F src_of)
{
    for (std::size_t y = 0; y < outH; ++y)
        for (std::size_t x = 0; x < outW; ++x) {
            const auto [sy, sx] = src_of(y, x);
            dst[y * outW + x] = src[sy * W + sx];
        }
    (void)H;
}

} // namespace

Sample flip_rotate_augment(const Sample& sample, GeomOp op)
{
    const std::size_t H = sample.mask.dim(0), W = sample.mask.dim(1);
    if (sample.image.rank() != 3 || sample.image.dim(1) != H || sample.image.dim(2) != W)
        throw ShapeError("sample image " + shape_string(sample.image.shape()) + " does not match mask " +
                         shape_string(sample.mask.shape()));
    const bool rotation = op == GeomOp::Rot90 || op == GeomOp::Rot270;
    if ((rotation || op == GeomOp::Rot180) && H != W)
        throw ShapeError("rotation needs a square sample, got " + shape_string(sample.mask.shape()));
    using P = std::pair<std::size_t, std::size_t>;
    auto src_of = [&](std::size_t y, std::size_t x) -> P {
        switch (op) {
        case GeomOp::FlipH:
            return {y, W - 1 - x};
        case GeomOp::FlipV:
            return {H - 1 - y, x};
        case GeomOp::Rot90: // counter-clockwise
            return {x, W - 1 - y};
        case GeomOp::Rot180:
            return {H - 1 - y, W - 1 - x};
        case GeomOp::Rot270:
            return {H - 1 - x, y};
        }
        return {y, x};
    };
    const std::size_t C = sample.image.dim(0);
    Sample out{Tensor(sample.image.shape()), Tensor(sample.mask.shape())};
    for (std::size_t c = 0; c < C; ++c)
        remap_plane(sample.image.data() + c * H * W, out.image.data() + c * H * W, H, W, H, W, src_of);
    remap_plane(sample.mask.data(), out.mask.data(), H, W, H, W, src_of);
    return out;
}

// ---- PGM ----

namespace {

class PgmCursor {
public:
    explicit PgmCursor(std::span<const std::uint8_t> bytes) : b_(bytes) {}

    std::size_t pos() const noexcept { return pos_; }
    bool at_end() const noexcept { return pos_ >= b_.size(); }
    std::uint8_t peek() const noexcept { return b_[pos_]; }
    void advance(std::size_t n = 1) noexcept { pos_ += n; }
    std::size_t remaining() const noexcept { return b_.size() - pos_; }
    const std::uint8_t* here() const noexcept { return b_.data() + pos_; }

    static bool space(std::uint8_t c) noexcept
    {
        return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
    }

    void skip_space_and_comments()
    {
        while (!at_end()) {
            if (space(peek())) {
                advance();
            } else if (peek() == '#') {
                while (!at_end() && peek() != '\n' && peek() != '\r')
                    advance();
            } else {
                break;
            }
        }
    }

    std::uint32_t read_uint(const char* field)
    {
        skip_space_and_comments();
        if (at_end())
            throw ParseError(std::string("PGM truncated before ") + field, pos_);
        if (peek() < '0' || peek() > '9')
            throw ParseError(std::string("PGM expected a number for ") + field, pos_);
        const std::size_t start = last_start_ = pos_;
        std::uint64_t v = 0;
        while (!at_end() && peek() >= '0' && peek() <= '9') {
            v = v * 10 + (peek() - '0');
            if (v > 0xFFFFFFFFull)
                throw ParseError(std::string("PGM ") + field + " is too large", start);
            advance();
        }
        if (!at_end() && !space(peek()) && peek() != '#')
            throw ParseError(std::string("PGM unexpected character after ") + field, pos_);
        return static_cast<std::uint32_t>(v);
    }

    /// Offset of the most recent number.
    std::size_t last_start() const noexcept { return last_start_; }

private:
    std::span<const std::uint8_t> b_;
    std::size_t pos_ = 0;
    std::size_t last_start_ = 0;
};

} // namespace

Graymap parse_pgm(std::span<const std::uint8_t> bytes)
{
    PgmCursor cur(bytes);
    if (bytes.size() < 2)
        throw ParseError("PGM truncated before magic number", 0);
    if (bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '2'))
        throw ParseError("not a PGM file (magic must be P2 or P5)", 0);
    const bool binary = bytes[1] == '5';
    cur.advance(2);
    if (cur.at_end())
        throw ParseError("PGM truncated after magic number", cur.pos());
    if (!PgmCursor::space(cur.peek()) && cur.peek() != '#')
        throw ParseError("PGM magic number must be followed by whitespace", cur.pos());

    Graymap img;
    img.width = cur.read_uint("width");
    if (img.width == 0 || img.width > 65536)
        throw ParseError("PGM width must be in [1, 65536]", cur.last_start());
    img.height = cur.read_uint("height");
    if (img.height == 0 || img.height > 65536)
        throw ParseError("PGM height must be in [1, 65536]", cur.last_start());
    img.maxval = cur.read_uint("maxval");
    if (img.maxval == 0 || img.maxval > 255)
        throw ParseError("unsupported PGM maxval " + std::to_string(img.maxval) + " (need 1..255)", cur.last_start());

    const std::size_t n = img.width * img.height;
    img.pixels.resize(n);
    if (binary) {
        if (cur.at_end())
            throw ParseError("PGM truncated before raster", cur.pos());
        if (!PgmCursor::space(cur.peek()))
            throw ParseError("PGM maxval must be followed by a single whitespace byte", cur.pos());
        cur.advance();
        if (cur.remaining() < n)
            throw ParseError("PGM raster truncated: need " + std::to_string(n) + " bytes, have " +
                                 std::to_string(cur.remaining()),
                             cur.pos());
        for (std::size_t i = 0; i < n; ++i) {
            const std::uint8_t v = cur.here()[i];
            if (v > img.maxval)
                throw ParseError("PGM pixel " + std::to_string(v) + " exceeds maxval", cur.pos() + i);
            img.pixels[i] = v;
        }
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            const std::uint32_t v = cur.read_uint("pixel");
            if (v > img.maxval)
                throw ParseError("PGM pixel " + std::to_string(v) + " exceeds maxval", cur.last_start());
            img.pixels[i] = static_cast<std::uint8_t>(v);
        }
    }
    return img;
}

std::vector<std::uint8_t> encode_pgm(const Graymap& img)
{
    if (img.pixels.size() != img.width * img.height)
        throw ShapeError("graymap pixel count does not match its size");
    const std::string header =
        "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n" + std::to_string(img.maxval) + "\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), img.pixels.begin(), img.pixels.end());
    return out;
}

Graymap to_graymap(const Tensor& image)
{
    Tensor plane = image;
    if (image.rank() == 3 && image.dim(0) == 1)
        plane = image.reshaped({image.dim(1), image.dim(2)});
    if (plane.rank() != 2)
        throw ShapeError("PGM output needs an H x W tensor, got " + shape_string(image.shape()));
    Graymap g;
    g.height = plane.dim(0);
    g.width = plane.dim(1);
    g.maxval = 255;
    g.pixels.resize(plane.size());
    for (std::size_t i = 0; i < plane.size(); ++i)
        g.pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(plane[i], 0.0, 1.0) * 255.0));
    return g;
}

Tensor load_pgm(const std::filesystem::path& path)
{
    const auto bytes = io::read_file_bytes(path);
    Graymap g;
    try {
        g = parse_pgm(bytes);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what(), e.offset());
    }
    Tensor t({g.height, g.width});
    for (std::size_t i = 0; i < t.size(); ++i)
        t[i] = static_cast<double>(g.pixels[i]) / static_cast<double>(g.maxval);
    return t;
}

void write_pgm(const std::filesystem::path& path, const Tensor& image)
{
    io::write_file_atomic(path, encode_pgm(to_graymap(image)));
}

Tensor binarize_gt(const Tensor& t, double threshold)
{
    Tensor out(t.shape());
    for (std::size_t i = 0; i < t.size(); ++i)
        out[i] = t[i] > threshold ? 1.0 : 0.0;
    return out;
}

// ---- manifests ----

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path)
{
    const std::string text = io::read_file_text(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(path.string() + ": invalid manifest JSON: " + e.what(), e.byte);
    }
    if (!j.is_array())
        throw ParseError(path.string() + ": manifest must be a JSON array", 0);
    std::vector<ManifestEntry> out;
    for (const auto& item : j) {
        if (!item.is_object() || !item.contains("image_path") || !item.contains("mask_path") ||
            !item["image_path"].is_string() || !item["mask_path"].is_string())
            throw ParseError(path.string() + ": manifest entry " + std::to_string(out.size()) +
                                 " needs string image_path and mask_path",
                             0);
        out.push_back({item["image_path"].get<std::string>(), item["mask_path"].get<std::string>()});
    }
    return out;
}

void write_manifest(const std::filesystem::path& path, std::span<const ManifestEntry> entries)
{
    nlohmann::ordered_json j = nlohmann::ordered_json::array();
    for (const auto& e : entries)
        j.push_back({{"image_path", e.image_path}, {"mask_path", e.mask_path}});
    io::write_file_atomic(path, j.dump(2) + "\n");
}

std::vector<Sample> load_dataset(const std::filesystem::path& manifest_path, double gt_threshold)
{
    const auto entries = read_manifest(manifest_path);
    const auto base = manifest_path.parent_path();
    auto resolve = [&](const std::string& p) {
        const std::filesystem::path fp(p);
        return fp.is_absolute() ? fp : base / fp;
    };
    std::vector<Sample> out;
    for (const auto& e : entries) {
        Tensor image = load_pgm(resolve(e.image_path));
        Tensor mask = binarize_gt(load_pgm(resolve(e.mask_path)), gt_threshold);
        if (image.shape() != mask.shape())
            throw ShapeError("image " + e.image_path + " and mask " + e.mask_path + " differ in size");
        out.push_back({image.reshaped({1, image.dim(0), image.dim(1)}), std::move(mask)});
    }
    return out;
}

// ---- batching ----

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t count, std::size_t batch_size, SeededRng& rng)
{
    if (count == 0)
        throw ValidationError("cannot batch an empty dataset");
    if (batch_size == 0)
        throw ConfigError("batch_size must be >= 1");
    std::vector<std::size_t> order(count);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(order));
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t i = 0; i < count; i += batch_size)
        batches.emplace_back(order.begin() + i, order.begin() + std::min(count, i + batch_size));
    return batches;
}

BatchStream::BatchStream(std::size_t count, std::size_t batch_size, SeededRng rng)
    : count_(count), batch_size_(batch_size), rng_(std::move(rng))
{
    if (count == 0)
        throw ValidationError("cannot batch an empty dataset");
    if (batch_size == 0)
        throw ConfigError("batch_size must be >= 1");
}

std::vector<std::size_t> BatchStream::next()
{
    if (cursor_ == pass_.size()) {
        pass_ = epoch_batches(count_, batch_size_, rng_);
        cursor_ = 0;
        ++passes_;
    }
    return pass_[cursor_++];
}

Batch stack_batch(std::span<const Sample> samples, std::span<const std::size_t> indices)
{
    if (indices.empty())
        throw ValidationError("cannot stack an empty batch");
    const Sample& first = samples[indices[0]];
    const std::size_t C = first.image.dim(0), H = first.mask.dim(0), W = first.mask.dim(1);
    const std::size_t N = indices.size();
    Batch b{Tensor({N, C, H, W}), Tensor({N, 1, H, W})};
    for (std::size_t k = 0; k < N; ++k) {
        const Sample& s = samples[indices[k]];
        if (s.image.shape() != first.image.shape() || s.mask.shape() != first.mask.shape())
            throw ShapeError("batch samples differ in size: " + shape_string(s.image.shape()) + " vs " +
                             shape_string(first.image.shape()));
        std::copy(s.image.values().begin(), s.image.values().end(), b.images.data() + k * C * H * W);
        std::copy(s.mask.values().begin(), s.mask.values().end(), b.masks.data() + k * H * W);
    }
    return b;
}

} // namespace crackloss::data
