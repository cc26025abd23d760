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

// Serial, direct-loop versions of the layer kernels. Slow; kept as the
// baseline for tests and benchmarks.

#include "crackloss/kernels.hpp"

namespace crackloss::reference {

using kernels::ConvGrads;
using kernels::PoolResult;

Tensor conv2d_forward(const Tensor& input, const Tensor& kernels, const Tensor& biases);
ConvGrads conv2d_backward(const Tensor& input, const Tensor& kernels, const Tensor& grad_output);

Tensor relu_forward(const Tensor& input);
Tensor relu_backward(const Tensor& input, const Tensor& grad_output);

PoolResult maxpool2x2_forward(const Tensor& input);
Tensor maxpool2x2_backward(const Shape& input_shape, const std::vector<std::uint32_t>& argmax,
                           const Tensor& grad_output);

Tensor deconv2x2s2_forward(const Tensor& input, const Tensor& kernels, const Tensor& biases);
ConvGrads deconv2x2s2_backward(const Tensor& input, const Tensor& kernels, const Tensor& grad_output);

Tensor concat_channels(const Tensor& a, const Tensor& b);
std::pair<Tensor, Tensor> split_channels(const Tensor& grad, std::size_t channels_a);

} // namespace crackloss::reference
