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

// Layer kernels over NCHW tensors. The parallel versions split work over
// independent output planes, so results do not depend on the thread count.
// crackloss/reference.hpp holds straightforward serial versions with the same
// signatures; tests compare the two.

#include "crackloss/tensor.hpp"

#include <cstdint>
#include <utility>
#include <vector>

namespace crackloss::kernels {

/// Threads used by kernels called from the current thread (default 1).
void set_num_threads(int n) noexcept;
int num_threads() noexcept;

struct ConvGrads {
    Tensor input;
    Tensor kernels;
    Tensor biases;
};

struct PoolResult {
    Tensor output;
    /// Flat index into the input of the element each output was taken from.
    std::vector<std::uint32_t> argmax;
};

/// Cross-correlation with zero "same" padding. kernels: O x C x k x k, k odd; biases: O.
Tensor conv2d_forward(const Tensor& input, const Tensor& kernels, const Tensor& biases);
ConvGrads conv2d_backward(const Tensor& input, const Tensor& kernels, const Tensor& grad_output);

Tensor relu_forward(const Tensor& input);
Tensor relu_backward(const Tensor& input, const Tensor& grad_output);

/// 2x2 stride-2 max pooling; ties go to the first element in row-major order.
PoolResult maxpool2x2_forward(const Tensor& input);
Tensor maxpool2x2_backward(const Shape& input_shape, const std::vector<std::uint32_t>& argmax,
                           const Tensor& grad_output);

/// Transposed convolution, 2x2 kernel, stride 2. kernels: O x C x 2 x 2; output is 2H x 2W.
Tensor deconv2x2s2_forward(const Tensor& input, const Tensor& kernels, const Tensor& biases);
ConvGrads deconv2x2s2_backward(const Tensor& input, const Tensor& kernels, const Tensor& grad_output);

/// Channel concatenation [a, b] and its adjoint.
Tensor concat_channels(const Tensor& a, const Tensor& b);
std::pair<Tensor, Tensor> split_channels(const Tensor& grad, std::size_t channels_a);

// Shape validation shared with the reference kernels.
void check_conv_shapes(const Tensor& input, const Tensor& kernels, const Tensor* biases, const char* what);
void check_deconv_shapes(const Tensor& input, const Tensor& kernels, const Tensor* biases, const char* what);
void check_rank4(const Tensor& t, const char* what);

} // namespace crackloss::kernels
