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

#include "crackloss/metrics.hpp"

#include "crackloss/errors.hpp"
#include "crackloss/loss.hpp"

#include <algorithm>
#include <cstdio>
#include <json.hpp>

namespace crackloss::metrics {
namespace {

void check_inputs(std::span<const Tensor> probs, std::span<const Tensor> masks, std::span<const double> grid)
{
    if (probs.empty() || masks.empty())
        throw ValidationError("evaluation needs at least one image");
    if (probs.size() != masks.size())
        throw ShapeError("evaluation got " + std::to_string(probs.size()) + " probability maps and " +
                         std::to_string(masks.size()) + " masks");
    if (grid.empty())
        throw ValidationError("threshold grid is empty");
    if (!std::is_sorted(grid.begin(), grid.end()))
        throw ValidationError("threshold grid must be sorted ascending");
}

std::vector<std::vector<ConfusionCounts>> sweep_all(std::span<const Tensor> probs, std::span<const Tensor> masks,
                                                    std::span<const double> grid)
{
    check_inputs(probs, masks, grid);
    std::vector<std::vector<ConfusionCounts>> table(probs.size());
    const auto n = static_cast<std::ptrdiff_t>(probs.size());
    // Each image writes its own slot; merging happens afterwards in index order.
    std::exception_ptr failure;
#pragma omp parallel for schedule(static) if (n > 8)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        try {
            table[i] = sweep_counts(probs[i], masks[i], grid);
        } catch (...) {
#pragma omp critical
            if (!failure)
                failure = std::current_exception();
        }
    }
    if (failure)
        std::rethrow_exception(failure);
    return table;
}

std::size_t best_index(std::span<const ConfusionCounts> counts, double& best_f1)
{
    std::size_t best = 0;
    best_f1 = -1.0;
    for (std::size_t g = 0; g < counts.size(); ++g) {
        const double f = prf1(counts[g]).f1;
        if (f > best_f1) {
            best_f1 = f;
            best = g;
        }
    }
    return best;
}

OdsResult ods_from(const std::vector<std::vector<ConfusionCounts>>& table, std::span<const double> grid)
{
    std::vector<ConfusionCounts> pooled(grid.size());
    for (const auto& image : table)
        for (std::size_t g = 0; g < grid.size(); ++g)
            pooled[g] += image[g];
    double f1 = 0.0;
    const std::size_t g = best_index(pooled, f1);
    const Prf m = prf1(pooled[g]);
    return {grid[g], m.p, m.r, m.f1, pooled[g]};
}

OisResult ois_from(const std::vector<std::vector<ConfusionCounts>>& table, std::span<const double> grid)
{
    OisResult out;
    double threshold_sum = 0.0;
    for (const auto& image : table) {
        double f1 = 0.0;
        const std::size_t g = best_index(image, f1);
        out.per_image.push_back({grid[g], f1});
        out.counts += image[g];
        threshold_sum += grid[g];
    }
    const Prf m = prf1(out.counts);
    out.p = m.p;
    out.r = m.r;
    out.f1 = m.f1;
    out.mean_threshold = threshold_sum / static_cast<double>(table.size());
    return out;
}

std::string num(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

} // namespace

ConfusionCounts confusion(const Tensor& pred_binary, const Tensor& mask)
{
    require_same_shape(pred_binary, mask, "confusion");
    loss::require_binary(pred_binary, "confusion (prediction)");
    loss::require_binary(mask, "confusion (mask)");
    ConfusionCounts c;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        const bool p = pred_binary[i] == 1.0;
        const bool y = mask[i] == 1.0;
        if (p && y)
            ++c.tp;
        else if (p)
            ++c.fp;
        else if (y)
            ++c.fn;
        else
            ++c.tn;
    }
    return c;
}

Prf prf1(const ConfusionCounts& c) noexcept
{
    if (c.tp + c.fp + c.fn == 0)
        return {1.0, 1.0, 1.0};
    const double tp = static_cast<double>(c.tp);
    const double p = c.tp + c.fp == 0 ? 1.0 : tp / static_cast<double>(c.tp + c.fp);
    const double r = c.tp + c.fn == 0 ? 1.0 : tp / static_cast<double>(c.tp + c.fn);
    const double f1 = c.tp == 0 ? 0.0 : 2.0 * p * r / (p + r);
    return {p, r, f1};
}

Tensor threshold(const Tensor& probs, double t)
{
    Tensor out(probs.shape());
    for (std::size_t i = 0; i < probs.size(); ++i)
        out[i] = probs[i] > t ? 1.0 : 0.0;
    return out;
}

std::vector<double> default_grid(std::size_t steps)
{
    std::vector<double> grid(steps);
    for (std::size_t i = 0; i < steps; ++i)
        grid[i] = static_cast<double>(i + 1) / static_cast<double>(steps + 1);
    return grid;
}

std::vector<ConfusionCounts> sweep_counts(const Tensor& probs, const Tensor& mask, std::span<const double> grid)
{
    require_same_shape(probs, mask, "sweep_counts");
    loss::require_binary(mask, "sweep_counts (mask)");
    // A pixel with k grid values strictly below it is positive at thresholds 0..k-1.
    const std::size_t G = grid.size();
    std::vector<std::uint64_t> pos_hist(G + 1, 0), neg_hist(G + 1, 0);
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const auto k = static_cast<std::size_t>(std::lower_bound(grid.begin(), grid.end(), probs[i]) - grid.begin());
        (mask[i] == 1.0 ? pos_hist : neg_hist)[k] += 1;
    }
    std::uint64_t pos_total = 0, neg_total = 0;
    for (std::size_t k = 0; k <= G; ++k) {
        pos_total += pos_hist[k];
        neg_total += neg_hist[k];
    }
    std::vector<ConfusionCounts> out(G);
    std::uint64_t pos_above = 0, neg_above = 0;
    for (std::size_t g = G; g-- > 0;) {
        pos_above += pos_hist[g + 1];
        neg_above += neg_hist[g + 1];
        out[g] = {pos_above, neg_above, pos_total - pos_above, neg_total - neg_above};
    }
    return out;
}

OdsResult evaluate_ods(std::span<const Tensor> probs, std::span<const Tensor> masks, std::span<const double> grid)
{
    return ods_from(sweep_all(probs, masks, grid), grid);
}

OisResult evaluate_ois(std::span<const Tensor> probs, std::span<const Tensor> masks, std::span<const double> grid)
{
    return ois_from(sweep_all(probs, masks, grid), grid);
}

EvalReport evaluate(std::span<const Tensor> probs, std::span<const Tensor> masks, std::span<const double> grid)
{
    const auto table = sweep_all(probs, masks, grid);
    return {ods_from(table, grid), ois_from(table, grid)};
}

std::string csv_header() { return "method,beta,gamma,epoch,ods_p,ods_r,ods_f1,ois_p,ois_r,ois_f1\n"; }

std::string csv_row(const EvalReport& r, const ReportTag& tag)
{
    return tag.method + "," + tag.beta + "," + tag.gamma + "," + tag.epoch + "," + num(r.ods.p) + "," +
           num(r.ods.r) + "," + num(r.ods.f1) + "," + num(r.ois.p) + "," + num(r.ois.r) + "," + num(r.ois.f1) + "\n";
}

std::string to_json(const EvalReport& r, const ReportTag& tag)
{
    nlohmann::ordered_json j;
    j["method"] = tag.method;
    j["beta"] = tag.beta;
    j["gamma"] = tag.gamma;
    j["epoch"] = tag.epoch;
    j["ods"] = {{"threshold", r.ods.threshold}, {"p", r.ods.p}, {"r", r.ods.r}, {"f1", r.ods.f1}};
    j["ois"] = {{"mean_threshold", r.ois.mean_threshold}, {"p", r.ois.p}, {"r", r.ois.r}, {"f1", r.ois.f1}};
    auto& per = j["per_image"] = nlohmann::ordered_json::array();
    for (const auto& im : r.ois.per_image)
        per.push_back({{"best_threshold", im.best_threshold}, {"f1", im.f1}});
    return j.dump(2) + "\n";
}

} // namespace crackloss::metrics
