// Copyright (C) 2026 The OED Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace oed {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad arguments, malformed configs, violated preconditions.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// NaN/Inf produced by a numeric op, or a non-finite loss.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// File system and codec failures.
class IoError : public Error {
public:
    using Error::Error;
};

// CLI exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitNumerical = 2;
inline constexpr int kExitIo = 3;

inline void require(bool cond, const std::string& what) {
    if (!cond) throw ValidationError(what);
}

}  // namespace oed
