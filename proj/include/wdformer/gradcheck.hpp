/*
 * Copyright 2026 The WDformer Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "wdformer/errors.hpp"

namespace wdformer {

using ScalarFunction = std::function<double(std::span<const double>)>;

/// Largest per-coordinate disagreement between an analytic gradient and a
/// central difference, measured as |a - n| / max(1, |a|, |n|).
inline double grad_check(const ScalarFunction& f, std::span<const double> analytic, std::span<const double> point,
                         double step = 1e-5) {
    if (analytic.size() != point.size()) throw DimensionError("grad_check: gradient and point sizes differ");
    if (!(step > 0.0)) throw PreconditionError("grad_check: step must be positive");
    std::vector<double> x(point.begin(), point.end());
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double saved = x[i];
        x[i] = saved + step;
        const double up = f(x);
        x[i] = saved - step;
        const double down = f(x);
        x[i] = saved;
        const double numeric = (up - down) / (2.0 * step);
        const double denom = std::max({1.0, std::abs(analytic[i]), std::abs(numeric)});
        worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
    }
    return worst;
}

}  // namespace wdformer
