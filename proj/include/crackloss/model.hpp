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

#include "crackloss/kernels.hpp"
#include "crackloss/rng.hpp"
#include "crackloss/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace crackloss::model {

struct UNetConfig {
    std::size_t depth = 2;         ///< number of 2x down-samplings
    std::size_t base_channels = 8; ///< channels at full resolution; doubled per level
    std::size_t input_channels = 1;

    void validate() const;
    /// Input height and width must be multiples of this.
    std::size_t size_multiple() const noexcept { return std::size_t{1} << depth; }
    bool operator==(const UNetConfig&) const = default;
};

enum class LayerKind : std::uint8_t { Conv3x3, Deconv2x2 };

struct LayerParams {
    Tensor kernels; ///< out x in x kh x kw
    Tensor biases;  ///< out
};

struct NamedLayer {
    std::string name;
    LayerKind kind;
    LayerParams params;
};

using UNetParams = std::vector<NamedLayer>;

/// Layer list for a configuration with every tensor zero-filled.
UNetParams zero_params(const UNetConfig& cfg);
std::size_t parameter_count(const UNetParams& params);
/// Fan-in used for initialisation: in * kh * kw for convolutions, in for the
/// stride-2 deconvolution (each output pixel sees a single tap per channel).
std::size_t fan_in(const NamedLayer& layer);

/// Kernels ~ Normal(0, sqrt(2 / fan_in)), biases zero. Layers draw in order.
UNetParams he_init(const UNetConfig& cfg, SeededRng& rng);

/// Encoder-decoder with same-padded 3x3 conv + ReLU pairs, 2x2 max pooling,
/// 2x2 stride-2 deconvolution and skip concatenation, ending in a 3x3 conv to
/// one logit channel.
class UNet {
public:
    UNet(UNetConfig cfg, UNetParams params);

    const UNetConfig& config() const noexcept { return cfg_; }
    UNetParams& params() noexcept { return params_; }
    const UNetParams& params() const noexcept { return params_; }

    /// images: N x C x H x W; returns N x 1 x H x W logits and caches
    /// activations for backward().
    Tensor forward(const Tensor& images);
    /// Forward pass without touching the cache.
    Tensor predict(const Tensor& images) const;
    /// Parameter gradients (summed over the batch) of the most recent forward.
    /// Throws StateError when no forward pass is cached; the cache is consumed.
    const UNetParams& backward(const Tensor& grad_logits);

    const UNetParams& grads() const noexcept { return grads_; }

    /// Smallest distance of the cached forward pass from a non-differentiable
    /// point: |ReLU input| and, for pooling windows with a positive maximum,
    /// the gap to the runner-up. Throws StateError without a cached forward.
    double kink_margin() const;

private:
    struct Block {
        Tensor in, pre1, act1, pre2, act2;
    };
    struct Level {
        Block block;
        std::vector<std::uint32_t> pool_argmax; // encoder only
        Tensor up_in, up_out;                   // decoder only
    };
    struct Cache {
        std::vector<Level> enc, dec;
        Block bottom;
        Tensor head_in;
        Shape logits_shape;
    };

    Tensor run(const Tensor& images, Cache& cache) const;
    Tensor block_forward(const Tensor& in, std::size_t first_layer, Block& block) const;
    Tensor block_backward(const Block& block, std::size_t first_layer, const Tensor& grad);
    void accumulate(std::size_t layer, kernels::ConvGrads&& g);

    UNetConfig cfg_;
    UNetParams params_;
    UNetParams grads_;
    Cache cache_;
    bool cached_ = false;
};

struct AdamState {
    std::vector<LayerParams> first_moment;
    std::vector<LayerParams> second_moment;
    std::uint64_t step_count = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

AdamState make_adam_state(const UNetParams& params);

/// One bias-corrected Adam update in place.
void adam_step(UNetParams& params, const UNetParams& grads, AdamState& state, double lr);

// Checkpoints: "CRKLCKPT", u32 version, u32 depth, u32 base_channels,
// u32 input_channels, u32 tensor count, then per tensor: u32 name length,
// name bytes, u32 rank, u64 dims, raw float64 values. All little-endian.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    UNetConfig config;
    UNetParams params;
};

std::vector<std::uint8_t> encode_checkpoint(const UNetConfig& cfg, const UNetParams& params);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);
void save_checkpoint(const std::filesystem::path& path, const UNetConfig& cfg, const UNetParams& params);
Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace crackloss::model
