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
#include <cstddef>
#include <string>

#include "wdformer/errors.hpp"
#include "wdformer/tensor.hpp"

namespace wdformer::data {

struct PadInfo {
    std::size_t original_length = 0;
    std::size_t padded_length = 0;

    bool padded() const noexcept { return padded_length != original_length; }
};

/// Next multiple of 2^levels at or above `length`.
inline PadInfo pad_to_divisible(std::size_t length, std::size_t levels) {
    const std::size_t block = std::size_t{1} << levels;
    const std::size_t padded = (length + block - 1) / block * block;
    return PadInfo{length, padded};
}

/// Right-pads every row by repeating its last value.
inline Tensor pad_rows(const Tensor& x, const PadInfo& info) {
    if (x.cols() != info.original_length) {
        throw DimensionError("pad_rows: rows have length " + std::to_string(x.cols()) + ", expected " +
                             std::to_string(info.original_length));
    }
    if (!info.padded()) return x;
    Tensor out = Tensor::matrix(x.rows(), info.padded_length);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        for (std::size_t c = 0; c < info.padded_length; ++c) {
            out(r, c) = x(r, std::min(c, info.original_length - 1));
        }
    }
    return out;
}

/// Keeps the first `info.original_length` columns of each row.
inline Tensor truncate_rows(const Tensor& y, const PadInfo& info) {
    if (y.cols() != info.padded_length) {
        throw DimensionError("truncate_rows: rows have length " + std::to_string(y.cols()) + ", expected " +
                             std::to_string(info.padded_length));
    }
    if (!info.padded()) return y;
    Tensor out = Tensor::matrix(y.rows(), info.original_length);
    for (std::size_t r = 0; r < y.rows(); ++r)
        for (std::size_t c = 0; c < info.original_length; ++c) out(r, c) = y(r, c);
    return out;
}

}  // namespace wdformer::data
