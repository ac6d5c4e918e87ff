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
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "wdformer/data.hpp"
#include "wdformer/errors.hpp"
#include "wdformer/io.hpp"
#include "wdformer/model.hpp"
#include "wdformer/model_config.hpp"
#include "wdformer/training.hpp"

namespace wdformer {

inline constexpr std::string_view kCheckpointMagic = "wdformer-checkpoint 1";

/// Everything needed to forecast: configuration, parameters and the
/// training-segment scaler.
struct Checkpoint {
    ModelConfig model;
    TrainConfig train;
    WDformerParameters params;
    data::Scaler scaler;
    std::vector<std::string> variate_names;
};

/// Line-oriented text. Numbers use the shortest decimal form that parses
/// back to the same double, so a save/load cycle is bitwise exact.
inline void write_checkpoint(std::ostream& out, const Checkpoint& c) {
    out << kCheckpointMagic << "\n";
    for (const auto& [k, v] : c.model.to_key_values()) out << "config " << k << " " << v << "\n";
    for (const auto& [k, v] : c.train.to_key_values()) out << "config " << k << " " << v << "\n";
    for (const auto& n : c.variate_names) out << "variate " << n << "\n";
    auto vec = [&](std::string_view label, const std::vector<double>& v) {
        out << label << " " << v.size();
        for (double x : v) out << " " << io::format_double(x);
        out << "\n";
    };
    vec("scaler.mean", c.scaler.mean);
    vec("scaler.stddev", c.scaler.stddev);
    for (const auto& [name, t] : named_parameters(c.params)) {
        out << "tensor " << name << " " << t->rank();
        for (std::size_t d : t->shape()) out << " " << d;
        out << "\n";
        for (std::size_t i = 0; i < t->size(); ++i) out << (i ? " " : "") << io::format_double((*t)[i]);
        out << "\n";
    }
    out << "end\n";
}

inline std::string checkpoint_string(const Checkpoint& c) {
    std::ostringstream o;
    write_checkpoint(o, c);
    return o.str();
}

inline Checkpoint read_checkpoint(std::istream& in, const std::string& source) {
    auto fail = [&](std::size_t line, const std::string& what) -> DataError {
        return DataError(source + ":" + std::to_string(line) + ": " + what);
    };
    std::string line;
    std::size_t lineno = 1;
    if (!std::getline(in, line) || io::trim(line) != kCheckpointMagic) throw fail(1, "not a wdformer checkpoint");

    Checkpoint c;
    std::vector<std::string> errors;
    std::unordered_map<std::string, std::vector<double>> tensors;
    std::unordered_map<std::string, Shape> shapes;
    bool ended = false;
    auto numbers = [&](std::istringstream& s, std::size_t count, std::size_t ln) {
        std::vector<double> v(count);
        std::string tok;
        for (std::size_t i = 0; i < count; ++i) {
            if (!(s >> tok)) throw fail(ln, "expected " + std::to_string(count) + " values");
            const auto d = io::parse_double(tok);
            if (!d) throw fail(ln, "malformed number '" + tok + "'");
            v[i] = *d;
        }
        if (s >> tok) throw fail(ln, "trailing data '" + tok + "'");
        return v;
    };
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream s(line);
        std::string kind;
        if (!(s >> kind)) continue;
        if (kind == "end") {
            ended = true;
            break;
        }
        if (kind == "config") {
            std::string key, value;
            s >> key;
            std::getline(s, value);
            const std::string v(io::trim(value));
            if (!c.model.set(key, v, errors) && !c.train.set(key, v, errors)) throw fail(lineno, "unknown config key '" + key + "'");
        } else if (kind == "variate") {
            std::string name;
            std::getline(s, name);
            c.variate_names.emplace_back(io::trim(name));
        } else if (kind == "scaler.mean" || kind == "scaler.stddev") {
            std::size_t n = 0;
            if (!(s >> n)) throw fail(lineno, "missing count");
            (kind == "scaler.mean" ? c.scaler.mean : c.scaler.stddev) = numbers(s, n, lineno);
        } else if (kind == "tensor") {
            std::string name;
            std::size_t rank = 0;
            if (!(s >> name >> rank) || rank == 0) throw fail(lineno, "malformed tensor header");
            Shape shape(rank);
            for (auto& d : shape) {
                if (!(s >> d)) throw fail(lineno, "malformed tensor shape");
            }
            std::string body;
            if (!std::getline(in, body)) throw fail(lineno, "missing values for " + name);
            ++lineno;
            std::istringstream bs(body);
            tensors[name] = numbers(bs, shape_size(shape), lineno);
            shapes[name] = std::move(shape);
        } else {
            throw fail(lineno, "unknown record '" + kind + "'");
        }
    }
    if (!ended) throw fail(lineno, "truncated checkpoint (no end marker)");
    if (!errors.empty()) throw fail(1, errors.front());
    if (c.scaler.mean.size() != c.model.variates || c.scaler.stddev.size() != c.model.variates) {
        throw fail(lineno, "scaler does not cover N=" + std::to_string(c.model.variates) + " variates");
    }
    c.model.validate();
    c.params = init_parameters(c.model);
    for (auto& [name, t] : named_parameters(c.params)) {
        auto it = tensors.find(name);
        if (it == tensors.end()) throw fail(lineno, "missing tensor " + name);
        if (shapes[name] != t->shape()) {
            throw fail(lineno, "tensor " + name + " has shape " + shape_string(shapes[name]) + ", config implies " +
                                   shape_string(t->shape()));
        }
        *t = Tensor(t->shape(), std::move(it->second));
        tensors.erase(it);
    }
    if (!tensors.empty()) throw fail(lineno, "unexpected tensor " + tensors.begin()->first);
    return c;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& c) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint '" + path + "'");
    write_checkpoint(out, c);
    if (!out) throw DataError("failed writing checkpoint '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint '" + path + "'");
    return read_checkpoint(in, path);
}

}  // namespace wdformer
