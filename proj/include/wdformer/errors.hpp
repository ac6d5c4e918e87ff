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

#include <stdexcept>
#include <string>

namespace wdformer {

// Error taxonomy. The CLI maps each family onto a fixed exit code.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad configuration or violated precondition (exit 1).
class ConfigError : public Error {
public:
    using Error::Error;
};

// Tensor shapes that do not line up.
class DimensionError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

class PreconditionError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

// Missing files, unparseable cells, degenerate columns (exit 2).
class DataError : public Error {
public:
    using Error::Error;
};

// NaN/Inf or divergence during optimization (exit 3).
class NumericalError : public Error {
public:
    using Error::Error;
};

}  // namespace wdformer
