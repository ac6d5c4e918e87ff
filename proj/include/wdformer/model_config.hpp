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

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "wdformer/errors.hpp"
#include "wdformer/io.hpp"
#include "wdformer/padding.hpp"
#include "wdformer/wavelet.hpp"

namespace wdformer {

/// Architecture variants compared in the ablation study.
enum class Variant { full, no_wave, no_diff, neither };

inline constexpr Variant kAllVariants[] = {Variant::full, Variant::no_wave, Variant::no_diff, Variant::neither};

inline std::string_view variant_name(Variant v) {
    switch (v) {
        case Variant::full: return "full";
        case Variant::no_wave: return "no_wave";
        case Variant::no_diff: return "no_diff";
        case Variant::neither: return "neither";
    }
    return "full";
}

inline Variant parse_variant(std::string_view s) {
    for (Variant v : kAllVariants)
        if (variant_name(v) == s) return v;
    throw ConfigError("unknown variant '" + std::string(s) + "' (expected full, no_wave, no_diff or neither)");
}

inline bool uses_wavelets(Variant v) { return v == Variant::full || v == Variant::no_diff; }
inline bool uses_diff_attention(Variant v) { return v == Variant::full || v == Variant::no_wave; }

struct ModelConfig {
    std::size_t lookback = 96;  // K
    std::size_t horizon = 96;   // F
    std::size_t variates = 1;   // N
    std::size_t levels = 1;     // L
    std::size_t d_model = 64;
    std::size_t heads = 4;
    std::size_t e_layers = 2;
    std::size_t d_ff = 128;
    double dropout = 0.1;
    wavelet::Family wavelet = wavelet::Family::haar;
    bool instance_norm = true;
    bool pad = true;  // edge-pad K and F up to a multiple of 2^L
    std::uint64_t seed = 2024;
    Variant variant = Variant::full;

    std::size_t head_dim() const { return d_model / heads; }
    data::PadInfo lookback_padding() const { return data::pad_to_divisible(lookback, levels); }
    data::PadInfo horizon_padding() const { return data::pad_to_divisible(horizon, levels); }

    /// Every violated invariant, one message each.
    std::vector<std::string> violations() const {
        std::vector<std::string> v;
        if (lookback == 0) v.emplace_back("model.K must be >= 1");
        if (horizon == 0) v.emplace_back("model.F must be >= 1");
        if (variates == 0) v.emplace_back("model.N must be >= 1");
        if (levels == 0) v.emplace_back("model.L must be >= 1");
        if (e_layers == 0) v.emplace_back("model.e_layers must be >= 1");
        if (d_ff == 0) v.emplace_back("model.d_ff must be >= 1");
        if (heads == 0 || d_model % heads != 0) {
            v.emplace_back("model.d=" + std::to_string(d_model) + " must be divisible by model.h=" +
                           std::to_string(heads));
        } else if (d_model / heads < 2) {
            v.emplace_back("model.d/model.h must be >= 2");
        }
        if (levels > 0 && d_model < levels + 1) {
            v.emplace_back("model.d must be >= model.L + 1 so every coefficient set gets an embedding width");
        }
        if (!(dropout >= 0.0 && dropout < 1.0)) v.emplace_back("model.dropout must lie in [0, 1)");
        if (levels > 0 && levels < 20 && !pad && uses_wavelets(variant)) {
            const std::size_t block = std::size_t{1} << levels;
            if (lookback % block != 0) {
                v.emplace_back("model.K=" + std::to_string(lookback) + " is not divisible by 2^L=" +
                               std::to_string(block) + " and padding is disabled");
            }
            if (horizon % block != 0) {
                v.emplace_back("model.F=" + std::to_string(horizon) + " is not divisible by 2^L=" +
                               std::to_string(block) + " and padding is disabled");
            }
        }
        if (levels >= 20) v.emplace_back("model.L is unreasonably large");
        if (levels > 0 && levels < 20 && lookback > 0 && horizon > 0) {
            // The coarsest analysis step must still cover the filter.
            const std::size_t filter_len = wavelet::make_filter(wavelet).length();
            const std::size_t coarsest_k = lookback_padding().padded_length >> (levels - 1);
            const std::size_t coarsest_f = horizon_padding().padded_length >> (levels - 1);
            if (uses_wavelets(variant) && (coarsest_k < filter_len || coarsest_f < filter_len)) {
                v.emplace_back("model.L=" + std::to_string(levels) + " is too deep for the " +
                               std::string(wavelet::family_name(wavelet)) + " filter at this K/F");
            }
        }
        return v;
    }

    void validate() const {
        const auto v = violations();
        if (v.empty()) return;
        std::string msg = "invalid model config:";
        for (const auto& s : v) msg += " " + s + ";";
        throw ConfigError(msg);
    }

    std::vector<std::pair<std::string, std::string>> to_key_values() const {
        return {
            {"model.K", std::to_string(lookback)},
            {"model.F", std::to_string(horizon)},
            {"model.N", std::to_string(variates)},
            {"model.L", std::to_string(levels)},
            {"model.d", std::to_string(d_model)},
            {"model.h", std::to_string(heads)},
            {"model.e_layers", std::to_string(e_layers)},
            {"model.d_ff", std::to_string(d_ff)},
            {"model.dropout", io::format_double(dropout)},
            {"model.wavelet", std::string(wavelet::family_name(wavelet))},
            {"model.instance_norm", instance_norm ? "true" : "false"},
            {"model.pad", pad ? "true" : "false"},
            {"model.seed", std::to_string(seed)},
            {"model.variant", std::string(variant_name(variant))},
        };
    }

    /// Applies one `model.*` key. Returns false for keys it does not own;
    /// malformed values are appended to `errors`.
    bool set(std::string_view key, std::string_view value, std::vector<std::string>& errors) {
        auto size_field = [&](std::size_t& field) {
            const auto n = io::parse_int(value);
            if (!n || *n < 0) {
                errors.push_back(std::string(key) + ": expected a non-negative integer, got '" + std::string(value) + "'");
            } else {
                field = static_cast<std::size_t>(*n);
            }
        };
        auto bool_field = [&](bool& field) {
            const auto b = io::parse_bool(value);
            if (!b) errors.push_back(std::string(key) + ": expected true/false, got '" + std::string(value) + "'");
            else field = *b;
        };
        if (key == "model.K") size_field(lookback);
        else if (key == "model.F") size_field(horizon);
        else if (key == "model.N") size_field(variates);
        else if (key == "model.L") size_field(levels);
        else if (key == "model.d") size_field(d_model);
        else if (key == "model.h") size_field(heads);
        else if (key == "model.e_layers") size_field(e_layers);
        else if (key == "model.d_ff") size_field(d_ff);
        else if (key == "model.dropout") {
            const auto d = io::parse_double(value);
            if (!d) errors.push_back("model.dropout: expected a number, got '" + std::string(value) + "'");
            else dropout = *d;
        } else if (key == "model.wavelet") {
            try {
                wavelet = wavelet::parse_family(value);
            } catch (const ConfigError& e) {
                errors.emplace_back(e.what());
            }
        } else if (key == "model.instance_norm") bool_field(instance_norm);
        else if (key == "model.pad") bool_field(pad);
        else if (key == "model.seed") {
            const auto n = io::parse_int(value);
            if (!n || *n < 0) errors.push_back("model.seed: expected a non-negative integer, got '" + std::string(value) + "'");
            else seed = static_cast<std::uint64_t>(*n);
        } else if (key == "model.variant") {
            try {
                variant = parse_variant(value);
            } catch (const ConfigError& e) {
                errors.emplace_back(e.what());
            }
        } else {
            return false;
        }
        return true;
    }

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

}  // namespace wdformer
