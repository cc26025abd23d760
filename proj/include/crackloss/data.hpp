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

#pragma once

#include "crackloss/rng.hpp"
#include "crackloss/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace crackloss::data {

struct SynthConfig {
    std::size_t width = 64;
    std::size_t height = 64;
    double target_pos_rate = 0.011; ///< crack-pixel fraction over the dataset
    std::size_t n_cracks_min = 1;
    std::size_t n_cracks_max = 3;
    double noise_sigma = 0.05;
    double crack_intensity_delta = 0.3;
    double background = 0.5;
    std::uint64_t seed = 7;

    /// Throws ConfigError; `size_multiple` is the model's 2^depth.
    void validate(std::size_t size_multiple = 1) const;
};

struct Sample {
    Tensor image; ///< 1 x H x W, values in [0, 1]
    Tensor mask;  ///< H x W, binary
};

/// Noisy flat background with dark random-walk cracks 1-2 px wide. Sample i
/// depends only on (seed, i).
std::vector<Sample> synth_generate(const SynthConfig& cfg, std::size_t count);

/// Fraction of positive mask pixels over all samples.
double positive_rate(std::span<const Sample> samples);

/// image += Normal(0, sigma), clamped to [0, 1]; mask untouched.
Sample gaussian_noise_augment(const Sample& sample, double sigma, SeededRng& rng);

enum class GeomOp { FlipH, FlipV, Rot90, Rot180, Rot270 };
/// Applies the same pixel permutation to image and mask. Rotations need a
/// square sample.
Sample flip_rotate_augment(const Sample& sample, GeomOp op);

// ---- Netpbm graymaps ----

struct Graymap {
    std::size_t width = 0;
    std::size_t height = 0;
    std::uint32_t maxval = 255;
    std::vector<std::uint8_t> pixels; ///< row-major
};

/// P2 (ASCII) or P5 (binary) with maxval in [1, 255]. Throws ParseError with
/// the byte offset of the problem.
Graymap parse_pgm(std::span<const std::uint8_t> bytes);
/// Binary P5 encoding.
std::vector<std::uint8_t> encode_pgm(const Graymap& image);

/// H x W tensor scaled to [0, 1] by maxval.
Tensor load_pgm(const std::filesystem::path& path);
/// Quantises [0, 1] values to 8 bits and writes a P5 file atomically.
void write_pgm(const std::filesystem::path& path, const Tensor& image);
Graymap to_graymap(const Tensor& image);

/// 1 where value > threshold.
Tensor binarize_gt(const Tensor& t, double threshold = 0.5);

// ---- manifests ----

struct ManifestEntry {
    std::string image_path;
    std::string mask_path;
};

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, std::span<const ManifestEntry> entries);
/// Loads every pair; relative paths resolve against the manifest's directory.
std::vector<Sample> load_dataset(const std::filesystem::path& manifest_path, double gt_threshold = 0.5);

// ---- batching ----

/// One pass over `count` samples in a fresh seeded order; the final short
/// batch is kept.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t count, std::size_t batch_size, SeededRng& rng);

/// Endless batch source: reshuffles each time a pass is exhausted.
class BatchStream {
public:
    BatchStream(std::size_t count, std::size_t batch_size, SeededRng rng);
    std::vector<std::size_t> next();
    std::uint64_t passes() const noexcept { return passes_; }

private:
    std::size_t count_;
    std::size_t batch_size_;
    SeededRng rng_;
    std::vector<std::vector<std::size_t>> pass_;
    std::size_t cursor_ = 0;
    std::uint64_t passes_ = 0;
};

struct Batch {
    Tensor images; ///< N x 1 x H x W
    Tensor masks;  ///< N x 1 x H x W
};

Batch stack_batch(std::span<const Sample> samples, std::span<const std::size_t> indices);

} // namespace crackloss::data
