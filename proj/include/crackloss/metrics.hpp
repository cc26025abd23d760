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
#include <span>
#include <string>
#include <vector>

namespace crackloss::metrics {

struct ConfusionCounts {
    std::uint64_t tp = 0;
    std::uint64_t fp = 0;
    std::uint64_t fn = 0;
    std::uint64_t tn = 0;

    std::uint64_t total() const noexcept { return tp + fp + fn + tn; }
    ConfusionCounts& operator+=(const ConfusionCounts& o) noexcept
    {
        tp += o.tp;
        fp += o.fp;
        fn += o.fn;
        tn += o.tn;
        return *this;
    }
    bool operator==(const ConfusionCounts&) const = default;
};

struct Prf {
    double p = 0.0;
    double r = 0.0;
    double f1 = 0.0;
};

struct OdsResult {
    double threshold = 0.0;
    double p = 0.0;
    double r = 0.0;
    double f1 = 0.0;
    ConfusionCounts counts;
};

struct ImageBest {
    double best_threshold = 0.0;
    double f1 = 0.0;
};

struct OisResult {
    double mean_threshold = 0.0;
    double p = 0.0;
    double r = 0.0;
    double f1 = 0.0;
    ConfusionCounts counts;
    std::vector<ImageBest> per_image;
};

struct EvalReport {
    OdsResult ods;
    OisResult ois;
};

ConfusionCounts confusion(const Tensor& pred_binary, const Tensor& mask);

/// Precision, recall and F1. Empty-vs-empty scores (1, 1, 1); a 0/0 precision
/// or recall is 1; F1 is 0 whenever tp == 0 and fp + fn > 0.
Prf prf1(const ConfusionCounts& c) noexcept;

/// 1 where prob > t (strict), else 0.
Tensor threshold(const Tensor& probs, double t);

/// {0.01, 0.02, ..., 0.99}
std::vector<double> default_grid(std::size_t steps = 99);

/// Confusion counts of one image at every grid threshold. The grid must be
/// sorted ascending.
std::vector<ConfusionCounts> sweep_counts(const Tensor& probs, const Tensor& mask, std::span<const double> grid);

/// Single dataset-wide threshold maximising pooled F1; ties go to the smallest threshold.
OdsResult evaluate_ods(std::span<const Tensor> probs, std::span<const Tensor> masks, std::span<const double> grid);

/// Per-image best threshold (smallest on ties); counts are pooled across
/// images at their own thresholds.
OisResult evaluate_ois(std::span<const Tensor> probs, std::span<const Tensor> masks, std::span<const double> grid);

/// Both protocols from one sweep.
EvalReport evaluate(std::span<const Tensor> probs, std::span<const Tensor> masks, std::span<const double> grid);

/// Identifies the run a report belongs to in the tabular output.
struct ReportTag {
    std::string method;
    std::string beta;
    std::string gamma;
    std::string epoch;
};

/// Both return a complete line including the newline.
std::string csv_header();
/// method,beta,gamma,epoch,ods_p,ods_r,ods_f1,ois_p,ois_r,ois_f1
std::string csv_row(const EvalReport& report, const ReportTag& tag);
std::string to_json(const EvalReport& report, const ReportTag& tag);

} // namespace crackloss::metrics
