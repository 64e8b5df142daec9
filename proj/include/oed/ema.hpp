// Copyright (C) 2026 The OED Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Teacher weights as an exponential moving average of the student:
//   teacher <- tau * teacher + (1 - tau) * student
// with tau rising from tau0 to 1 on a half-cosine over the run:
//   tau(t) = 1 - (1 - tau0) * (cos(pi t / T) + 1) / 2

#include <cstddef>

#include "oed/params.hpp"

namespace oed::ema {

inline constexpr double kDefaultDecayStart = 0.996;

double tau_at(std::size_t step, std::size_t total, double decay_start = kDefaultDecayStart);

struct EmaState {
    ParamSet teacher;
    double decay_start = kDefaultDecayStart;
    double decay_end = 1.0;
    std::size_t total_steps = 1;
    std::size_t step = 0;
    /// When set, tau is this constant instead of the schedule (0 copies the
    /// student each step, 1 freezes the teacher).
    bool fixed_tau = false;
    double tau = 0.0;

    double current_tau() const;
};

/// Blends with the current tau and advances the step counter.
EmaState ema_update(EmaState state, const ParamSet& student);
/// In-place form used by the training loop.
void ema_update_inplace(EmaState& state, const ParamSet& student);

}  // namespace oed::ema
