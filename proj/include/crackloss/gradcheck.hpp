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

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace crackloss::gradcheck {

/// Central-difference checks of every analytic gradient in the library.
struct Options {
    std::size_t instances = 100;
    double step = 1e-5;
    std::uint64_t seed = 20260101;
};

struct SuiteResult {
    std::string name;
    std::size_t instances = 0;
    double max_rel_error = 0.0; ///< worst instance
    double tolerance = 0.0;
    double seconds = 0.0;

    bool passed() const noexcept { return max_rel_error <= tolerance; }
};

/// ||analytic - numeric||_inf / max(||analytic||_inf, ||numeric||_inf); 0 when
/// both are zero.
double relative_error(std::span<const double> analytic, std::span<const double> numeric);

SuiteResult check_wce(const Options& opt = {});
SuiteResult check_jaccard(const Options& opt = {});
SuiteResult check_holistic(const Options& opt = {});
SuiteResult check_conv(const Options& opt = {});
SuiteResult check_relu(const Options& opt = {});
SuiteResult check_maxpool(const Options& opt = {});
SuiteResult check_deconv(const Options& opt = {});
SuiteResult check_concat(const Options& opt = {});
/// Depth-1 network, all parameters, holistic loss.
SuiteResult check_network(const Options& opt = {});

std::vector<SuiteResult> run_all(const Options& opt = {});

} // namespace crackloss::gradcheck
