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

#include "crackloss/tensor.hpp"

#include "crackloss/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace crackloss {

std::string shape_string(const Shape& shape)
{
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i)
            os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

std::size_t shape_volume(const Shape& shape)
{
    std::size_t v = 1;
    for (auto d : shape)
        v *= d;
    return v;
}

static void check_extents(const Shape& shape)
{
    if (shape.empty())
        throw ShapeError("tensor shape must have at least one axis");
    for (auto d : shape)
        if (d == 0)
            throw ShapeError("tensor extents must be positive, got " + shape_string(shape));
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape))
{
    check_extents(shape_);
    data_.assign(shape_volume(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), data_(std::move(values))
{
    check_extents(shape_);
    if (shape_volume(shape_) != data_.size())
        throw ShapeError("shape " + shape_string(shape_) + " needs " + std::to_string(shape_volume(shape_)) +
                         " values, got " + std::to_string(data_.size()));
    if (!num::all_finite(data_))
        throw ValidationError("tensor values must be finite");
}

Tensor Tensor::reshaped(Shape shape) const
{
    check_extents(shape);
    if (shape_volume(shape) != data_.size())
        throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    Tensor out;
    out.shape_ = std::move(shape);
    out.data_ = data_;
    return out;
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

void require_same_shape(const Tensor& a, const Tensor& b, const char* what)
{
    if (a.shape() != b.shape())
        throw ShapeError(std::string(what) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
}

namespace num {

double sigmoid(double z) noexcept
{
    if (z < 0.0) {
        const double e = std::exp(z);
        return e / (1.0 + e);
    }
    return 1.0 / (1.0 + std::exp(-z));
}

double softplus(double z) noexcept
{
    // log(1 + e^z) = max(z, 0) + log1p(e^-|z|)
    return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
}

double log_sigmoid(double z) noexcept { return -softplus(-z); }

template <class F>
static Tensor map(const Tensor& t, F f)
{
    Tensor out(t.shape());
    auto src = t.values();
    auto dst = out.values();
    for (std::size_t i = 0; i < src.size(); ++i)
        dst[i] = f(src[i]);
    return out;
}

template <class F>
static Tensor zip(const Tensor& a, const Tensor& b, const char* what, F f)
{
    require_same_shape(a, b, what);
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i)
        out[i] = f(a[i], b[i]);
    return out;
}

Tensor sigmoid(const Tensor& z)
{
    return map(z, [](double v) { return sigmoid(v); });
}

Tensor log_sigmoid(const Tensor& z)
{
    return map(z, [](double v) { return log_sigmoid(v); });
}

Tensor add(const Tensor& a, const Tensor& b)
{
    return zip(a, b, "add", [](double x, double y) { return x + y; });
}

Tensor mul(const Tensor& a, const Tensor& b)
{
    return zip(a, b, "mul", [](double x, double y) { return x * y; });
}

Tensor scale(const Tensor& a, double factor)
{
    return map(a, [factor](double v) { return v * factor; });
}

Tensor clamp(const Tensor& t, double lo, double hi)
{
    if (lo > hi)
        throw ValidationError("clamp: lo > hi");
    return map(t, [lo, hi](double v) { return std::clamp(v, lo, hi); });
}

double sum(const Tensor& t) noexcept
{
    double acc = 0.0;
    for (double v : t.values())
        acc += v;
    return acc;
}

double mean(const Tensor& t)
{
    if (t.empty())
        throw ShapeError("mean of an empty tensor");
    return sum(t) / static_cast<double>(t.size());
}

double max(const Tensor& t)
{
    if (t.empty())
        throw ShapeError("max of an empty tensor");
    double m = t[0];
    for (double v : t.values())
        m = std::max(m, v);
    return m;
}

bool all_finite(std::span<const double> values) noexcept
{
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

} // namespace num
} // namespace crackloss
