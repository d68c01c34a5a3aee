/*
 * Copyright (c) The atombench authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <chrono>
#include <cstdint>
#include <string>

#include "atombench/types.hpp"

#if defined(__x86_64__)
#include <x86intrin.h>
#endif

namespace atombench {

enum class ClockSource { Tsc, Monotonic };

template <>
struct EnumNames<ClockSource> {
    static constexpr std::array<std::pair<ClockSource, std::string_view>, 2> table{{
        {ClockSource::Tsc, "tsc"},
        {ClockSource::Monotonic, "monotonic"},
    }};
};

namespace detail {
bool select_tsc();

inline bool use_tsc() noexcept {
    static const bool tsc = select_tsc();
    return tsc;
}
} // namespace detail

/// Clock used by now(): the invariant TSC when the CPU has one, otherwise the
/// OS monotonic clock in nanoseconds.
inline ClockSource clock_source() noexcept {
    return detail::use_tsc() ? ClockSource::Tsc : ClockSource::Monotonic;
}

/// Serialized timestamp. The fences keep the read from drifting across the
/// measured instructions in either direction.
inline Ticks now() noexcept {
#if defined(__x86_64__)
    if (detail::use_tsc()) {
        _mm_lfence();
        const Ticks t = __rdtsc();
        _mm_lfence();
        return t;
    }
#endif
    return static_cast<Ticks>(
        std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now().time_since_epoch())
            .count());
}

struct TimerCalibration {
    // ticks_per_ns is kept as the ratio of the two calibration windows.
    std::int64_t window_ticks = 1;
    std::int64_t window_ns = 1;
    Ticks read_overhead_ticks = 0;
    double calibration_wall_span_ns = 0.0;
    ClockSource source = ClockSource::Monotonic;

    double ticks_per_ns() const { return static_cast<double>(window_ticks) / static_cast<double>(window_ns); }

    double to_ns(Ticks ticks) const {
        return static_cast<double>(static_cast<long double>(ticks) * window_ns / window_ticks);
    }

    Ticks from_ns(double ns) const { return static_cast<Ticks>(ns * ticks_per_ns()); }

    /// max(0, raw - overhead) in nanoseconds.
    double duration_ns(Ticks raw) const {
        return raw > read_overhead_ticks ? to_ns(raw - read_overhead_ticks) : 0.0;
    }

    bool low_resolution() const { return source == ClockSource::Monotonic; }

    void validate() const;

    /// A calibration with one tick per nanosecond and no overhead; handy for
    /// arithmetic tests and offline processing.
    static TimerCalibration identity();
};

/// Measures the counter rate against the wall clock over at least `min_span`
/// (which must be >= 10 ms), twice, and the median back-to-back read cost.
/// Throws PreconditionError or UnstableClock.
TimerCalibration calibrate(std::chrono::nanoseconds min_span = std::chrono::milliseconds(20));

/// Median delta of `trials` back-to-back now() pairs.
Ticks measure_read_overhead(int trials = 1000);

/// Frequency-related settings that user space can observe but not change.
struct FrequencyEnvironment {
    std::string governor = "unavailable";
    std::string turbo = "unavailable";
    bool invariant_tsc = false;
};

FrequencyEnvironment read_frequency_environment();

/// Operator checklist printed before measurement runs.
std::string preflight_checklist(const FrequencyEnvironment& env);

} // namespace atombench
