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

#include <cstddef>
#include <exception>
#include <string>
#include <thread>
#include <utility>

#include "atombench/types.hpp"

namespace atombench::platform {

unsigned online_cores();

/// Pins the calling thread to one core. Throws PinFailure.
void pin_current_thread(CoreId core);

bool has_invariant_tsc();
bool has_cmpxchg16b();
bool has_clflush();
bool is_x86_64();
std::string cpu_vendor();

void flush_line(const void* p) noexcept;
void full_fence() noexcept;

/// Runs `fn` on a short-lived thread pinned to `core` and waits for it.
/// Exceptions thrown by `fn` (and pin failures) propagate to the caller.
template <typename Fn>
void run_on_core(CoreId core, Fn&& fn) {
    std::exception_ptr err;
    std::thread t([&] {
        try {
            pin_current_thread(core);
            fn();
        } catch (...) {
            err = std::current_exception();
        }
    });
    t.join();
    if (err) std::rethrow_exception(err);
}

} // namespace atombench::platform
