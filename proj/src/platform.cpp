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

#include "atombench/platform.hpp"

#include <pthread.h>
#include <sched.h>
#include <unistd.h>

#include <atomic>
#include <cstring>

#if defined(__x86_64__)
#include <cpuid.h>
#include <immintrin.h>
#endif

namespace atombench::platform {

unsigned online_cores() {
    const long n = ::sysconf(_SC_NPROCESSORS_ONLN);
    return n > 0 ? static_cast<unsigned>(n) : 1u;
}

void pin_current_thread(CoreId core) {
    if (core >= CPU_SETSIZE) throw PinFailure("core " + std::to_string(core) + " out of range");
    cpu_set_t set;
    CPU_ZERO(&set);
    CPU_SET(core, &set);
    const int rc = pthread_setaffinity_np(pthread_self(), sizeof(set), &set);
    if (rc != 0)
        throw PinFailure("cannot pin to core " + std::to_string(core) + ": " + std::strerror(rc));
}

bool is_x86_64() {
#if defined(__x86_64__)
    return true;
#else
    return false;
#endif
}

bool has_invariant_tsc() {
#if defined(__x86_64__)
    unsigned a = 0, b = 0, c = 0, d = 0;
    if (__get_cpuid_max(0x80000000, nullptr) < 0x80000007) return false;
    __cpuid(0x80000007, a, b, c, d);
    return (d >> 8) & 1u;
#else
    return false;
#endif
}

bool has_cmpxchg16b() {
#if defined(__x86_64__)
    unsigned a = 0, b = 0, c = 0, d = 0;
    if (!__get_cpuid(1, &a, &b, &c, &d)) return false;
    return (c >> 13) & 1u;
#else
    return false;
#endif
}

bool has_clflush() {
#if defined(__x86_64__)
    unsigned a = 0, b = 0, c = 0, d = 0;
    if (!__get_cpuid(1, &a, &b, &c, &d)) return false;
    return (d >> 19) & 1u;
#else
    return false;
#endif
}

std::string cpu_vendor() {
#if defined(__x86_64__)
    unsigned a = 0, b = 0, c = 0, d = 0;
    __cpuid(0, a, b, c, d);
    char v[13] = {};
    std::memcpy(v, &b, 4);
    std::memcpy(v + 4, &d, 4);
    std::memcpy(v + 8, &c, 4);
    return v;
#else
    return "unknown";
#endif
}

void flush_line(const void* p) noexcept {
#if defined(__x86_64__)
    _mm_clflush(p);
#else
    (void)p;
#endif
}

void full_fence() noexcept { std::atomic_thread_fence(std::memory_order_seq_cst); }

} // namespace atombench::platform
