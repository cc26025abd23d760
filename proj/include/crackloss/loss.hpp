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

#include "crackloss/tensor.hpp"

#include <cstdint>
#include <string>
#include <variant>

namespace crackloss::loss {

// Penalty families for the minority (crack) class. alpha is the fraction of
// negative pixels in the batch.

/// q = alpha / (1 - alpha)
struct Xie {};
/// q = beta * (alpha / (1 - alpha))^gamma, 0 < beta, gamma <= 1
struct Power {
    double beta = 1.0;
    double gamma = 1.0;
};
/// q = beta * ln(alpha / (1 - alpha)), 0 < beta <= 1
struct Log {
    double beta = 1.0;
};
/// q = beta * base^(gamma * (2 alpha - 1)), 0 < beta <= 1, base > 1, 0 <= gamma <= 1
struct Exp {
    double beta = 1.0;
    double base = 10.0;
    double gamma = 1.0;
};
/// Fixed penalty, independent of alpha.
struct Constant {
    double q = 1.0;
};

using Family = std::variant<Xie, Power, Log, Exp, Constant>;

struct WeightSpec {
    Family family = Xie{};
    /// Additive smoothing on both pixel counts when computing alpha.
    double count_smoothing = 1.0;

    /// Throws ConfigError naming the violated constraint.
    void validate() const;
    /// Short identifier such as "wce_xie", "0.75_exp" or "0.5_power_0.5".
    std::string label() const;
    std::string family_name() const;
};

struct BatchStats {
    std::uint64_t neg_count = 0;
    std::uint64_t pos_count = 0;
    double alpha = 0.0;
};

struct HolisticConfig {
    double a = 1.0;
    double b = 0.0;
    double lambda = 1.0;

    void validate() const;
};

enum class Reduction { Sum, MeanPerPixel };

struct LossOutput {
    double value = 0.0;
    Tensor grad_logits;
    // Constituents, kept for reporting.
    double wce = 0.0;
    double jaccard = 0.0;
    double alpha = 0.0;
    double q = 0.0;
};

/// Logits are clamped to this range wherever raw probabilities are needed.
inline constexpr double kLogitClamp = 30.0;

/// Throws ValidationError naming the first value that is neither 0 nor 1.
void require_binary(const Tensor& mask, const char* what);

/// Counts over the whole batch (not per image).
BatchStats compute_alpha(const Tensor& masks, double count_smoothing);

double weight_q(const WeightSpec& spec, double alpha);

/// -sum_j [q y_j log p_j + (1 - y_j) log(1 - p_j)] with p = sigmoid(logits).
double wce_forward(const Tensor& logits, const Tensor& mask, double q, Reduction reduction = Reduction::Sum);
/// p_j for negatives, -q (1 - p_j) for positives; scaled by 1/N under MeanPerPixel.
Tensor wce_grad_logits(const Tensor& logits, const Tensor& mask, double q, Reduction reduction = Reduction::Sum);

/// Class-balanced form -sum_j [alpha y_j log p_j + (1 - alpha)(1 - y_j) log(1 - p_j)].
/// Equal to (1 - alpha) * wce_forward(q = alpha / (1 - alpha)).
double balanced_bce_forward(const Tensor& logits, const Tensor& mask, double alpha,
                            Reduction reduction = Reduction::Sum);

/// Smoothed Jaccard index (sum yp + lambda) / (sum y + sum p - sum yp + lambda), in (0, 1].
double soft_jaccard(const Tensor& probs, const Tensor& mask, double lambda);
/// Gradient of the Jaccard distance 1 - soft_jaccard with respect to probs.
Tensor jaccard_distance_grad(const Tensor& probs, const Tensor& mask, double lambda);

/// a * WCE + b * (1 - soft_jaccard), with alpha computed from the mask batch.
/// grad_logits is the exact derivative of value with respect to logits.
LossOutput holistic(const Tensor& logits, const Tensor& mask, const WeightSpec& spec, const HolisticConfig& cfg,
                    Reduction reduction = Reduction::Sum);

/// Probabilities from logits clamped to +-kLogitClamp.
Tensor clamped_probs(const Tensor& logits);

} // namespace crackloss::loss
