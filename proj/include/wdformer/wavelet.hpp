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
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "wdformer/errors.hpp"

/// Periodic orthonormal discrete wavelet transform.
///
/// Analysis correlates with the filter pair and keeps even offsets:
///   approx[i] = sum_k g[k] x[(2i + k) mod T]
///   detail[i] = sum_k h[k] x[(2i + k) mod T]
/// Synthesis is the exact transpose of analysis, which for orthonormal
/// filters is also its inverse. Multi-level coefficients are stored as
/// [approx_L, detail_L, detail_{L-1}, ..., detail_1].
namespace wdformer::wavelet {

enum class Family { haar, db2 };

struct Filter {
    std::string name;
    std::vector<double> lowpass;
    std::vector<double> highpass;

    std::size_t length() const noexcept { return lowpass.size(); }
};

/// Highpass from lowpass by the quadrature-mirror rule h[k] = (-1)^k g[len-1-k].
inline std::vector<double> quadrature_mirror(const std::vector<double>& g) {
    std::vector<double> h(g.size());
    for (std::size_t k = 0; k < g.size(); ++k) {
        h[k] = (k % 2 == 0 ? 1.0 : -1.0) * g[g.size() - 1 - k];
    }
    return h;
}

inline Filter make_filter(Family family) {
    std::vector<double> g;
    std::string name;
    switch (family) {
        case Family::haar:
            name = "haar";
            g = {(1.0 / std::numbers::sqrt2), (1.0 / std::numbers::sqrt2)};
            break;
        case Family::db2: {
            name = "db2";
            const double s3 = std::numbers::sqrt3;
            const double norm = 4.0 * std::numbers::sqrt2;
            g = {(1.0 + s3) / norm, (3.0 + s3) / norm, (3.0 - s3) / norm, (1.0 - s3) / norm};
            break;
        }
    }
    auto h = quadrature_mirror(g);
    return Filter{std::move(name), std::move(g), std::move(h)};
}

inline Family parse_family(std::string_view name) {
    if (name == "haar") return Family::haar;
    if (name == "db2") return Family::db2;
    throw ConfigError("wavelet: unknown family '" + std::string(name) + "' (expected haar or db2)");
}

inline std::string_view family_name(Family f) { return f == Family::haar ? "haar" : "db2"; }

struct Coefficients {
    std::size_t levels = 0;
    std::vector<std::vector<double>> sets;  // [approx_L, detail_L, ..., detail_1]
    std::size_t original_length = 0;

    const std::vector<double>& approx() const { return sets.front(); }
    double energy() const {
        double e = 0.0;
        for (const auto& s : sets)
            for (double v : s) e += v * v;
        return e;
    }
};

/// Per-set lengths for a length-T signal at L levels: [T/2^L, T/2^L, T/2^(L-1), ..., T/2].
inline std::vector<std::size_t> set_lengths(std::size_t length, std::size_t levels) {
    if (levels == 0) throw PreconditionError("wavelet: levels must be >= 1");
    const std::size_t block = std::size_t{1} << levels;
    if (length == 0 || length % block != 0) {
        throw PreconditionError("wavelet: length " + std::to_string(length) + " is not divisible by 2^" +
                                std::to_string(levels) + " = " + std::to_string(block));
    }
    std::vector<std::size_t> lengths{length >> levels};
    for (std::size_t lvl = levels; lvl >= 1; --lvl) lengths.push_back(length >> lvl);
    return lengths;
}

inline void validate(const Coefficients& c) {
    if (c.sets.size() != c.levels + 1) {
        throw PreconditionError("wavelet: structure error, expected " + std::to_string(c.levels + 1) +
                                " coefficient sets, got " + std::to_string(c.sets.size()));
    }
    const auto expected = set_lengths(c.original_length, c.levels);
    for (std::size_t i = 0; i < expected.size(); ++i) {
        if (c.sets[i].size() != expected[i]) {
            throw PreconditionError("wavelet: structure error, set " + std::to_string(i) + " has length " +
                                    std::to_string(c.sets[i].size()) + ", expected " + std::to_string(expected[i]));
        }
    }
}

namespace detail {

inline void analysis_step(std::span<const double> x, const Filter& f, std::span<double> approx,
                          std::span<double> detail) {
    const std::size_t n = x.size();
    const std::size_t half = n / 2;
    const std::size_t len = f.length();
    for (std::size_t i = 0; i < half; ++i) {
        double a = 0.0, d = 0.0;
        for (std::size_t k = 0; k < len; ++k) {
            const double v = x[(2 * i + k) % n];
            a += f.lowpass[k] * v;
            d += f.highpass[k] * v;
        }
        approx[i] = a;
        detail[i] = d;
    }
}

inline void synthesis_step(std::span<const double> approx, std::span<const double> detail, const Filter& f,
                           std::span<double> out) {
    const std::size_t n = out.size();
    const std::size_t len = f.length();
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t i = 0; i < approx.size(); ++i) {
        for (std::size_t k = 0; k < len; ++k) {
            out[(2 * i + k) % n] += f.lowpass[k] * approx[i] + f.highpass[k] * detail[i];
        }
    }
}

inline void check_analysis_length(std::size_t n, const Filter& f) {
    if (n % 2 != 0) throw PreconditionError("dwt: signal length " + std::to_string(n) + " is odd");
    if (n < f.length()) {
        throw PreconditionError("dwt: signal length " + std::to_string(n) + " is shorter than the " + f.name +
                                " filter (" + std::to_string(f.length()) + ")");
    }
}

}  // namespace detail

inline std::pair<std::vector<double>, std::vector<double>> dwt_single_level(std::span<const double> x,
                                                                            const Filter& f) {
    detail::check_analysis_length(x.size(), f);
    std::vector<double> a(x.size() / 2), d(x.size() / 2);
    detail::analysis_step(x, f, a, d);
    return {std::move(a), std::move(d)};
}

inline std::vector<double> idwt_single_level(std::span<const double> approx, std::span<const double> detail,
                                             const Filter& f) {
    if (approx.size() != detail.size()) {
        throw PreconditionError("idwt: approximation length " + std::to_string(approx.size()) +
                                " differs from detail length " + std::to_string(detail.size()));
    }
    std::vector<double> out(2 * approx.size());
    detail::synthesis_step(approx, detail, f, out);
    return out;
}

/// Multi-level analysis written into a flat buffer in coefficient order.
inline void dwt_flat(std::span<const double> x, std::size_t levels, const Filter& f, std::span<double> out) {
    const std::size_t n = x.size();
    set_lengths(n, levels);
    if (out.size() != n) throw DimensionError("dwt: output buffer must have the signal length");
    std::vector<double> current(x.begin(), x.end());
    std::vector<double> approx, det;
    // Details fill the buffer from the back: detail_1 occupies the last n/2 slots.
    std::size_t end = n;
    for (std::size_t lvl = 1; lvl <= levels; ++lvl) {
        detail::check_analysis_length(current.size(), f);
        const std::size_t half = current.size() / 2;
        approx.assign(half, 0.0);
        det.assign(half, 0.0);
        detail::analysis_step(current, f, approx, det);
        std::copy(det.begin(), det.end(), out.begin() + static_cast<std::ptrdiff_t>(end - half));
        end -= half;
        current.swap(approx);
    }
    std::copy(current.begin(), current.end(), out.begin());
}

/// Transpose of dwt_flat; for orthonormal filters also its inverse.
inline void idwt_flat(std::span<const double> flat, std::size_t levels, const Filter& f, std::span<double> out) {
    const std::size_t n = flat.size();
    const auto lengths = set_lengths(n, levels);
    if (out.size() != n) throw DimensionError("idwt: output buffer must have the coefficient length");
    std::vector<double> current(flat.begin(), flat.begin() + static_cast<std::ptrdiff_t>(lengths[0]));
    std::vector<double> next;
    std::size_t offset = lengths[0];
    for (std::size_t i = 1; i < lengths.size(); ++i) {
        const auto det = flat.subspan(offset, lengths[i]);
        next.assign(2 * lengths[i], 0.0);
        detail::synthesis_step(current, det, f, next);
        offset += lengths[i];
        current.swap(next);
    }
    std::copy(current.begin(), current.end(), out.begin());
}

inline Coefficients dwt_multilevel(std::span<const double> x, std::size_t levels, const Filter& f) {
    const auto lengths = set_lengths(x.size(), levels);
    std::vector<double> flat(x.size());
    dwt_flat(x, levels, f, flat);
    Coefficients c{levels, {}, x.size()};
    std::size_t off = 0;
    for (std::size_t len : lengths) {
        c.sets.emplace_back(flat.begin() + static_cast<std::ptrdiff_t>(off),
                            flat.begin() + static_cast<std::ptrdiff_t>(off + len));
        off += len;
    }
    return c;
}

inline std::vector<double> concat(const Coefficients& c) {
    std::vector<double> flat;
    flat.reserve(c.original_length);
    for (const auto& s : c.sets) flat.insert(flat.end(), s.begin(), s.end());
    return flat;
}

inline std::vector<double> idwt_multilevel(const Coefficients& c, const Filter& f) {
    validate(c);
    const auto flat = concat(c);
    std::vector<double> out(flat.size());
    idwt_flat(flat, c.levels, f, out);
    return out;
}

/// Partitions a flat length-F prediction into coefficient sets.
inline Coefficients split_wave(std::span<const double> flat, std::size_t horizon, std::size_t levels) {
    const auto lengths = set_lengths(horizon, levels);
    if (flat.size() != horizon) {
        throw DimensionError("split_wave: input has " + std::to_string(flat.size()) + " values, expected " +
                             std::to_string(horizon));
    }
    Coefficients c{levels, {}, horizon};
    std::size_t off = 0;
    for (std::size_t len : lengths) {
        c.sets.emplace_back(flat.begin() + static_cast<std::ptrdiff_t>(off),
                            flat.begin() + static_cast<std::ptrdiff_t>(off + len));
        off += len;
    }
    return c;
}

}  // namespace wdformer::wavelet
