// Copyright 2026-present the vqcomm authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace vqcomm {

/// Root of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand dimensions do not agree.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A configuration value violates a constraint. Raised before any compute starts.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// An object was used in the wrong state (e.g. backward without a forward cache).
class StateError : public Error {
public:
    using Error::Error;
};

/// NaN or infinity where a finite value is required.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// An operation was called with arguments outside its contract.
class UsageError : public Error {
public:
    using Error::Error;
};

/// Malformed input file. The message carries the byte offset.
class ParseError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace vqcomm
