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

#include "atombench/timing.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>
#include <vector>

#include "atombench/platform.hpp"

namespace atombench {

namespace detail {
bool select_tsc() { return platform::is_x86_64() && platform::has_invariant_tsc(); }
} // namespace detail

namespace {

struct RateSample {
    std::int64_t ticks;
    std::int64_t ns;
};

RateSample measure_rate(std::chrono::nanoseconds span) {
    using clock = std::chrono::steady_clock;
    const auto w0 = clock::now();
    const Ticks t0 = now();
    std::this_thread::sleep_for(span);
    while (clock::now() - w0 < span) {
    }
    const Ticks t1 = now();
    const auto w1 = clock::now();
    return {static_cast<std::int64_t>(t1 - t0),
            std::chrono::duration_cast<std::chrono::nanoseconds>(w1 - w0).count()};
}

std::string read_line(const char* path) {
    std::ifstream in(path);
    std::string s;
    if (!in || !std::getline(in, s)) return "unavailable";
    return s;
}

} // namespace

void TimerCalibration::validate() const {
    if (window_ticks <= 0 || window_ns <= 0) throw ValidationError("ticks_per_ns must be positive");
    if (read_overhead_ticks >= 10000) throw ValidationError("read overhead above the 10000-tick sanity bound");
}

TimerCalibration TimerCalibration::identity() { return TimerCalibration{}; }

Ticks measure_read_overhead(int trials) {
    std::vector<Ticks> deltas(static_cast<std::size_t>(std::max(trials, 1)));
    for (auto& d : deltas) {
        const Ticks a = now();
        const Ticks b = now();
        d = b - a;
    }
    std::nth_element(deltas.begin(), deltas.begin() + deltas.size() / 2, deltas.end());
    return deltas[deltas.size() / 2];
}

TimerCalibration calibrate(std::chrono::nanoseconds min_span) {
    if (min_span < std::chrono::milliseconds(10))
        throw PreconditionError("calibration span must be at least 10 ms");

    constexpr int kAttempts = 3;
    double last_a = 0, last_b = 0;
    for (int attempt = 0; attempt < kAttempts; ++attempt) {
        const RateSample a = measure_rate(min_span);
        const RateSample b = measure_rate(min_span);
        last_a = static_cast<double>(a.ticks) / a.ns;
        last_b = static_cast<double>(b.ticks) / b.ns;
        if (std::abs(last_a - last_b) <= 0.01 * last_a) {
            TimerCalibration cal;
            cal.window_ticks = a.ticks + b.ticks;
            cal.window_ns = a.ns + b.ns;
            cal.calibration_wall_span_ns = static_cast<double>(a.ns + b.ns);
            cal.source = clock_source();
            cal.read_overhead_ticks = measure_read_overhead(1000);
            cal.validate();
            return cal;
        }
    }
    std::ostringstream os;
    os << "consecutive rates " << last_a << " and " << last_b << " ticks/ns differ by more than 1%";
    throw UnstableClock(os.str());
}

FrequencyEnvironment read_frequency_environment() {
    FrequencyEnvironment env;
    env.governor = read_line("/sys/devices/system/cpu/cpu0/cpufreq/scaling_governor");
    const auto no_turbo = read_line("/sys/devices/system/cpu/intel_pstate/no_turbo");
    if (no_turbo != "unavailable") {
        env.turbo = no_turbo == "1" ? "disabled" : "enabled";
    } else {
        const auto boost = read_line("/sys/devices/system/cpu/cpufreq/boost");
        if (boost != "unavailable") env.turbo = boost == "0" ? "disabled" : "enabled";
    }
    env.invariant_tsc = platform::has_invariant_tsc();
    return env;
}

std::string preflight_checklist(const FrequencyEnvironment& env) {
    std::ostringstream os;
    os << "pre-flight checklist (settings user space cannot change):\n"
       << "  [ ] Turbo Boost / core boost disabled in firmware   (observed: " << env.turbo << ")\n"
       << "  [ ] EIST / SpeedStep disabled, governor=performance (observed: " << env.governor << ")\n"
       << "  [ ] deep C-states disabled\n"
       << "  [ ] hardware and adjacent-line prefetchers disabled (else use --min-stride)\n"
       << "  [ ] SMT disabled so every visible core is a physical core\n"
       << "  [ ] hugepages reserved (vm.nr_hugepages) for TLB-stable buffers\n"
       << "  invariant TSC: " << (env.invariant_tsc ? "yes" : "no (results marked low-resolution)") << "\n";
    return os.str();
}

} // namespace atombench
