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

#include "crackloss/loss.hpp"

#include "crackloss/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace crackloss::loss {
namespace {

std::string fmt(double v)
{
    std::ostringstream os;
    os << v;
    return os.str();
}

double pixel_scale(const Tensor& t, Reduction reduction)
{
    return reduction == Reduction::MeanPerPixel ? 1.0 / static_cast<double>(t.size()) : 1.0;
}

void check_penalty(double q)
{
    if (!(q >= 0.0) || !std::isfinite(q))
        throw ValidationError("penalty q must be finite and non-negative, got " + fmt(q));
}

void check_probs(const Tensor& probs)
{
    constexpr double tol = 1e-9;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const double p = probs[i];
        if (!(p >= -tol && p <= 1.0 + tol))
            throw ValidationError("probability " + fmt(p) + " at index " + std::to_string(i) + " is outside [0, 1]");
    }
}

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};

} // namespace

void require_binary(const Tensor& mask, const char* what)
{
    for (std::size_t i = 0; i < mask.size(); ++i) {
        const double v = mask[i];
        if (v != 0.0 && v != 1.0)
            throw ValidationError(std::string(what) + ": non-binary value " + fmt(v) + " at index " +
                                  std::to_string(i));
    }
}

void WeightSpec::validate() const
{
    if (!(count_smoothing >= 0.0) || !std::isfinite(count_smoothing))
        throw ConfigError("count_smoothing must be >= 0");
    auto in_unit = [](double v) { return v > 0.0 && v <= 1.0; };
    std::visit(overloaded{
                   [](const Xie&) {},
                   [&](const Power& p) {
                       if (!in_unit(p.beta) || !in_unit(p.gamma))
                           throw ConfigError("power family needs 0 < beta <= 1 and 0 < gamma <= 1");
                   },
                   [&](const Log& l) {
                       if (!in_unit(l.beta))
                           throw ConfigError("log family needs 0 < beta <= 1");
                   },
                   [&](const Exp& e) {
                       if (!in_unit(e.beta))
                           throw ConfigError("exp family needs 0 < beta <= 1");
                       if (!(e.base > 1.0) || !std::isfinite(e.base))
                           throw ConfigError("exp family needs base > 1");
                       if (!(e.gamma >= 0.0 && e.gamma <= 1.0))
                           throw ConfigError("exp family needs 0 <= gamma <= 1");
                   },
                   [](const Constant& c) {
                       if (!(c.q > 0.0) || !std::isfinite(c.q))
                           throw ConfigError("constant family needs q > 0");
                   },
               },
               family);
}

std::string WeightSpec::family_name() const
{
    return std::visit(overloaded{
                          [](const Xie&) { return std::string("xie"); },
                          [](const Power&) { return std::string("power"); },
                          [](const Log&) { return std::string("log"); },
                          [](const Exp&) { return std::string("exp"); },
                          [](const Constant&) { return std::string("constant"); },
                      },
                      family);
}

std::string WeightSpec::label() const
{
    return std::visit(overloaded{
                          [](const Xie&) { return std::string("wce_xie"); },
                          [](const Power& p) { return fmt(p.beta) + "_power_" + fmt(p.gamma); },
                          [](const Log& l) { return fmt(l.beta) + "_log"; },
                          [](const Exp& e) {
                              std::string s = fmt(e.beta) + "_exp";
                              if (e.base != 10.0 || e.gamma != 1.0)
                                  s += "_" + fmt(e.base) + "_" + fmt(e.gamma);
                              return s;
                          },
                          [](const Constant& c) { return "const_" + fmt(c.q); },
                      },
                      family);
}

void HolisticConfig::validate() const
{
    if (!(a >= 0.0) || !(b >= 0.0) || !std::isfinite(a) || !std::isfinite(b))
        throw ConfigError("holistic coefficients a and b must be finite and >= 0");
    if (!(a + b > 0.0))
        throw ConfigError("holistic coefficients need a + b > 0");
    if (!(lambda > 0.0) || !std::isfinite(lambda))
        throw ConfigError("jaccard smoothing lambda must be > 0");
}

BatchStats compute_alpha(const Tensor& masks, double count_smoothing)
{
    if (!(count_smoothing >= 0.0))
        throw ConfigError("count_smoothing must be >= 0");
    require_binary(masks, "compute_alpha");
    BatchStats s;
    for (double v : masks.values())
        (v == 1.0 ? s.pos_count : s.neg_count) += 1;
    const double neg = static_cast<double>(s.neg_count);
    const double total = static_cast<double>(s.neg_count + s.pos_count);
    s.alpha = (neg + count_smoothing) / (total + 2.0 * count_smoothing);
    return s;
}

double weight_q(const WeightSpec& spec, double alpha)
{
    if (!(alpha >= 0.0 && alpha <= 1.0))
        throw ValidationError("alpha must lie in [0, 1], got " + fmt(alpha));
    auto ratio = [&](const char* family) {
        if (alpha == 1.0)
            throw NumericalError(std::string(family) +
                                 " penalty is singular at alpha = 1 (batch without crack pixels); "
                                 "set count_smoothing > 0");
        return alpha / (1.0 - alpha);
    };
    return std::visit(overloaded{
                          [&](const Xie&) { return ratio("xie"); },
                          [&](const Power& p) { return p.beta * std::pow(ratio("power"), p.gamma); },
                          [&](const Log& l) {
                              if (alpha <= 0.5)
                                  throw ValidationError("log penalty needs alpha > 0.5 (got " + fmt(alpha) +
                                                        "); it is non-positive otherwise");
                              return l.beta * std::log(ratio("log"));
                          },
                          [&](const Exp& e) { return e.beta * std::pow(e.base, e.gamma * (2.0 * alpha - 1.0)); },
                          [](const Constant& c) { return c.q; },
                      },
                      spec.family);
}

double wce_forward(const Tensor& logits, const Tensor& mask, double q, Reduction reduction)
{
    require_same_shape(logits, mask, "wce_forward");
    require_binary(mask, "wce_forward");
    check_penalty(q);
    double acc = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const double z = logits[i];
        acc += mask[i] == 1.0 ? q * num::softplus(-z) : num::softplus(z);
    }
    return acc * pixel_scale(logits, reduction);
}

Tensor wce_grad_logits(const Tensor& logits, const Tensor& mask, double q, Reduction reduction)
{
    require_same_shape(logits, mask, "wce_grad_logits");
    require_binary(mask, "wce_grad_logits");
    check_penalty(q);
    const double s = pixel_scale(logits, reduction);
    Tensor grad(logits.shape());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const double z = logits[i];
        // 1 - sigmoid(z) == sigmoid(-z), exact for large z
        grad[i] = s * (mask[i] == 1.0 ? -q * num::sigmoid(-z) : num::sigmoid(z));
    }
    return grad;
}

double balanced_bce_forward(const Tensor& logits, const Tensor& mask, double alpha, Reduction reduction)
{
    require_same_shape(logits, mask, "balanced_bce_forward");
    require_binary(mask, "balanced_bce_forward");
    if (!(alpha >= 0.0 && alpha <= 1.0))
        throw ValidationError("alpha must lie in [0, 1], got " + fmt(alpha));
    double acc = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const double z = logits[i];
        acc += mask[i] == 1.0 ? alpha * num::softplus(-z) : (1.0 - alpha) * num::softplus(z);
    }
    return acc * pixel_scale(logits, reduction);
}

namespace {

struct JaccardSums {
    double inter; // sum y p + lambda
    double uni;   // sum y + sum p - sum y p + lambda
};

JaccardSums jaccard_sums(const Tensor& probs, const Tensor& mask, double lambda, const char* what)
{
    require_same_shape(probs, mask, what);
    require_binary(mask, what);
    check_probs(probs);
    if (!(lambda > 0.0))
        throw ValidationError(std::string(what) + ": lambda must be > 0");
    double sy = 0.0, sp = 0.0, syp = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        sy += mask[i];
        sp += probs[i];
        syp += mask[i] * probs[i];
    }
    return {syp + lambda, sy + sp - syp + lambda};
}

} // namespace

double soft_jaccard(const Tensor& probs, const Tensor& mask, double lambda)
{
    const auto s = jaccard_sums(probs, mask, lambda, "soft_jaccard");
    return s.inter / s.uni;
}

Tensor jaccard_distance_grad(const Tensor& probs, const Tensor& mask, double lambda)
{
    const auto s = jaccard_sums(probs, mask, lambda, "jaccard_distance_grad");
    const double u2 = s.uni * s.uni;
    Tensor grad(probs.shape());
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const double y = mask[i];
        grad[i] = -(y * s.uni - (1.0 - y) * s.inter) / u2;
    }
    return grad;
}

Tensor clamped_probs(const Tensor& logits)
{
    Tensor p(logits.shape());
    for (std::size_t i = 0; i < logits.size(); ++i)
        p[i] = num::sigmoid(std::clamp(logits[i], -kLogitClamp, kLogitClamp));
    return p;
}

LossOutput holistic(const Tensor& logits, const Tensor& mask, const WeightSpec& spec, const HolisticConfig& cfg,
                    Reduction reduction)
{
    spec.validate();
    cfg.validate();
    require_same_shape(logits, mask, "holistic");

    LossOutput out;
    const BatchStats stats = compute_alpha(mask, spec.count_smoothing);
    out.alpha = stats.alpha;
    out.q = weight_q(spec, stats.alpha);
    out.wce = wce_forward(logits, mask, out.q, reduction);

    Tensor grad = wce_grad_logits(logits, mask, out.q, reduction);
    for (double& g : grad.values())
        g *= cfg.a;

    const Tensor probs = clamped_probs(logits);
    out.jaccard = soft_jaccard(probs, mask, cfg.lambda);
    if (cfg.b != 0.0) {
        const Tensor dp = jaccard_distance_grad(probs, mask, cfg.lambda);
        for (std::size_t i = 0; i < grad.size(); ++i) {
            const double z = logits[i];
            if (z >= -kLogitClamp && z <= kLogitClamp)
                grad[i] += cfg.b * dp[i] * probs[i] * (1.0 - probs[i]);
        }
    }
    out.value = cfg.a * out.wce + cfg.b * (1.0 - out.jaccard);
    out.grad_logits = std::move(grad);
    return out;
}

} // namespace crackloss::loss
