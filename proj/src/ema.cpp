// Copyright (C) 2026 The OED Authors
// SPDX-License-Identifier: Apache-2.0
#include "oed/ema.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "oed/errors.hpp"

namespace oed::ema {

double tau_at(std::size_t step, std::size_t total, double decay_start) {
    require(total >= 1, "tau_at: total steps must be >= 1");
    require(step <= total, "tau_at: step out of range");
    require(decay_start >= 0.0 && decay_start <= 1.0, "tau_at: decay start outside [0, 1]");
    if (step == total) return 1.0;
    const double phase = std::numbers::pi * static_cast<double>(step) / static_cast<double>(total);
    return 1.0 - (1.0 - decay_start) * (std::cos(phase) + 1.0) / 2.0;
}

double EmaState::current_tau() const {
    if (fixed_tau) return tau;
    return tau_at(std::min(step, total_steps), total_steps, decay_start);
}

void ema_update_inplace(EmaState& state, const ParamSet& student) {
    state.teacher.require_same_layout(student);
    const double tau = state.current_tau();
    for (std::size_t i = 0; i < student.size(); ++i) {
        auto t = state.teacher.tensors[i].data();
        const auto s = student.tensors[i].data();
        if (tau == 1.0) continue;
        // t + (1 - tau)(s - t): exact when t == s; the clamp keeps rounding
        // from stepping outside [t, s].
        const double alpha = 1.0 - tau;
        for (std::size_t j = 0; j < t.size(); ++j) {
            const double blended = t[j] + alpha * (s[j] - t[j]);
            t[j] = std::clamp(blended, std::min(t[j], s[j]), std::max(t[j], s[j]));
        }
    }
    ++state.step;
}

EmaState ema_update(EmaState state, const ParamSet& student) {
    ema_update_inplace(state, student);
    return state;
}

}  // namespace oed::ema
