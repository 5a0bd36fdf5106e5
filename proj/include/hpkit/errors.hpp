// Copyright (c) 2026 The hpkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace hpkit {

// Base for everything thrown by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape disagreement between tensors (matmul inner dims, residual adds, ...).
struct DimensionError : Error {
    using Error::Error;
};

// A caller-supplied value is out of contract (even kernel size, bad range, ...).
struct ParameterError : Error {
    using Error::Error;
};

// Cross-field inconsistency in a config or a missing config entry.
struct ConfigError : Error {
    using Error::Error;
};

// Lookup outside a table or sequence.
struct IndexError : Error {
    using Error::Error;
};

// Degenerate geometry (all landmarks coincide, zero face scale).
struct GeometryError : Error {
    using Error::Error;
};

// Retargeting preconditions not met (missing nose, no common valid edge).
struct RetargetError : Error {
    using Error::Error;
};

// File reading/writing and format violations.
struct IoError : Error {
    using Error::Error;
};

// Autodiff misuse: non-scalar loss, detached graph, double backward.
struct TapeError : Error {
    using Error::Error;
};

}  // namespace hpkit
