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
#include <fstream>
#include <istream>
#include <string>
#include <string_view>
#include <vector>

#include "wdformer/data.hpp"
#include "wdformer/errors.hpp"
#include "wdformer/io.hpp"
#include "wdformer/model_config.hpp"
#include "wdformer/training.hpp"

namespace wdformer {

struct KeyValue {
    std::string key;
    std::string value;
    std::string origin;  // "file:line" or "flag --name"
};

/// Flat `key = value` lines; '#' starts a comment. Malformed lines are
/// collected into `errors`.
inline std::vector<KeyValue> parse_key_values(std::istream& in, const std::string& source,
                                              std::vector<std::string>& errors) {
    std::vector<KeyValue> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string_view l = line;
        if (const auto hash = l.find('#'); hash != std::string_view::npos) l = l.substr(0, hash);
        l = io::trim(l);
        if (l.empty()) continue;
        const std::string where = source + ":" + std::to_string(lineno);
        const auto eq = l.find('=');
        if (eq == std::string_view::npos) {
            errors.push_back(where + ": expected 'key = value', got '" + std::string(l) + "'");
            continue;
        }
        const auto key = io::trim(l.substr(0, eq));
        if (key.empty()) {
            errors.push_back(where + ": empty key");
            continue;
        }
        out.push_back({std::string(key), std::string(io::trim(l.substr(eq + 1))), where});
    }
    return out;
}

/// Parses a `key=value` command-line override.
inline KeyValue parse_override(std::string_view text, std::vector<std::string>& errors) {
    const auto eq = text.find('=');
    if (eq == std::string_view::npos || io::trim(text.substr(0, eq)).empty()) {
        errors.push_back("--set: expected key=value, got '" + std::string(text) + "'");
        return {};
    }
    return {std::string(io::trim(text.substr(0, eq))), std::string(io::trim(text.substr(eq + 1))), "flag --set"};
}

/// Merged model, training, data and output settings.
struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    std::string data_path;
    data::CsvOptions csv;
    std::string out_dir = "wdformer-out";
    std::vector<std::size_t> ablate_horizons;  // empty: model.F only

    /// Applies one key; unknown keys and malformed values go to `errors`.
    void set(const KeyValue& kv, std::vector<std::string>& errors) {
        std::vector<std::string> local;
        const std::string_view key = kv.key, value = kv.value;
        auto detect = [&](data::Detect& field) {
            if (value == "auto") field = data::Detect::automatic;
            else if (const auto b = io::parse_bool(value)) field = *b ? data::Detect::yes : data::Detect::no;
            else local.push_back(kv.key + ": expected auto/true/false, got '" + kv.value + "'");
        };
        if (model.set(key, value, local) || train.set(key, value, local)) {
            // handled
        } else if (key == "data.path") {
            data_path = kv.value;
        } else if (key == "data.header") {
            detect(csv.header);
        } else if (key == "data.timestamp") {
            detect(csv.timestamp);
        } else if (key == "data.nan") {
            if (value == "drop") csv.nan_policy = data::NanPolicy::drop;
            else if (value == "fail") csv.nan_policy = data::NanPolicy::fail;
            else local.push_back("data.nan: expected drop or fail, got '" + kv.value + "'");
        } else if (key == "out.dir") {
            if (value.empty()) local.emplace_back("out.dir must not be empty");
            else out_dir = kv.value;
        } else if (key == "ablate.horizons") {
            ablate_horizons.clear();
            for (auto tok : io::split(value, ',')) {
                const auto n = io::parse_int(io::trim(tok));
                if (!n || *n < 1) {
                    local.push_back("ablate.horizons: expected comma-separated positive integers, got '" + kv.value + "'");
                    break;
                }
                ablate_horizons.push_back(static_cast<std::size_t>(*n));
            }
        } else {
            local.push_back("unknown key '" + kv.key + "'");
        }
        for (auto& e : local) errors.push_back(kv.origin.empty() ? e : kv.origin + ": " + e);
    }

    std::vector<std::string> violations() const {
        auto v = model.violations();
        for (auto& s : train.violations()) v.push_back(std::move(s));
        for (std::size_t f : ablate_horizons) {
            ModelConfig m = model;
            m.horizon = f;
            for (auto& s : m.violations()) v.push_back("ablate.horizons F=" + std::to_string(f) + ": " + s);
        }
        return v;
    }
};

/// Applies layers in order (later wins) and validates the result. All
/// problems are reported together in one ConfigError.
inline RunConfig assemble_config(const std::vector<std::vector<KeyValue>>& layers, std::vector<std::string> errors = {}) {
    RunConfig cfg;
    for (const auto& layer : layers) {
        for (const auto& kv : layer) cfg.set(kv, errors);
    }
    for (auto& v : cfg.violations()) errors.push_back(std::move(v));
    if (!errors.empty()) {
        std::string msg = "invalid configuration (" + std::to_string(errors.size()) + " problem" +
                          (errors.size() == 1 ? "" : "s") + "):";
        for (const auto& e : errors) msg += " " + e + ";";
        throw ConfigError(msg);
    }
    return cfg;
}

/// Reads a config file into key/value pairs; unreadable files are config errors.
inline std::vector<KeyValue> read_config_file(const std::string& path, std::vector<std::string>& errors) {
    std::ifstream in(path);
    if (!in) {
        errors.push_back("cannot read config file '" + path + "'");
        return {};
    }
    return parse_key_values(in, path, errors);
}

}  // namespace wdformer
