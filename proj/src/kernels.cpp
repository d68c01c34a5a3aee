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

#include "atombench/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cstring>
#include <numeric>
#include <random>

#include "atombench/error.hpp"
#include "atombench/platform.hpp"
#include "atombench/timing.hpp"

namespace atombench {
namespace {

using Ref = std::atomic_ref<std::uint64_t>;

std::uint64_t* word_at(std::byte* base, std::size_t offset) {
    return reinterpret_cast<std::uint64_t*>(base + offset);
}

template <typename T>
void keep(const T& v) {
    asm volatile("" : : "r"(v) : "memory");
}

void check_index(std::uint64_t idx, std::size_t slots) {
    if (idx >= slots) throw PreconditionError("chase buffer does not hold a valid chase");
}

void check_fits(std::span<std::byte> buf, const ChasePattern& p, std::size_t extra = 0) {
    if (p.slots * p.slot_bytes + extra > buf.size())
        throw PreconditionError("buffer smaller than the chase pattern");
}

#if defined(__x86_64__)
bool cas16(void* ptr, std::uint64_t& lo, std::uint64_t& hi, std::uint64_t new_lo, std::uint64_t new_hi) {
    bool ok;
    asm volatile("lock cmpxchg16b %1"
                 : "=@ccz"(ok), "+m"(*static_cast<unsigned __int128*>(ptr)), "+a"(lo), "+d"(hi)
                 : "b"(new_lo), "c"(new_hi)
                 : "memory");
    return ok;
}

// Raw lock-prefixed forms; these tolerate addresses that straddle lines.
bool cas_raw(void* ptr, std::uint64_t& expected, std::uint64_t desired) {
    bool ok;
    asm volatile("lock cmpxchgq %3, %1"
                 : "=@ccz"(ok), "+m"(*static_cast<std::uint64_t*>(ptr)), "+a"(expected)
                 : "r"(desired)
                 : "memory");
    return ok;
}

std::uint64_t xadd_raw(void* ptr, std::uint64_t v) {
    asm volatile("lock xaddq %0, %1" : "+r"(v), "+m"(*static_cast<std::uint64_t*>(ptr)) : : "memory");
    return v;
}

std::uint64_t xchg_raw(void* ptr, std::uint64_t v) {
    asm volatile("xchgq %0, %1" : "+r"(v), "+m"(*static_cast<std::uint64_t*>(ptr)) : : "memory");
    return v;
}
#endif

std::size_t lines_touched(std::size_t ops, std::size_t stride, std::size_t line) {
    if (ops == 0) return 0;
    if (stride >= line) return ops;
    return ((ops - 1) * stride) / line + 1;
}

} // namespace

std::vector<std::uint32_t> ChasePattern::successors() const {
    std::vector<std::uint32_t> next(slots);
    for (std::size_t i = 0; i < order.size(); ++i) next[order[i]] = order[(i + 1) % order.size()];
    return next;
}

ChasePattern gen_chase(std::size_t slots, std::size_t min_stride, std::size_t slot_bytes, std::uint64_t seed) {
    if (slots < 2) throw InfeasibleStride("a chase needs at least 2 slots");
    if (slot_bytes == 0) throw InfeasibleStride("slot size must be positive");
    const std::size_t k = std::max<std::size_t>(1, (min_stride + slot_bytes - 1) / slot_bytes);
    if (slots > UINT32_MAX) throw InfeasibleStride("too many slots");
    if (k >= 2 && slots < 2 * k + 1)
        throw InfeasibleStride(std::to_string(slots) + " slots cannot keep consecutive visits " +
                               std::to_string(min_stride) + " bytes apart");

    ChasePattern p;
    p.slots = slots;
    p.slot_bytes = slot_bytes;
    p.min_stride = min_stride;
    p.order.resize(slots);
    std::iota(p.order.begin(), p.order.end(), 0u);

    std::mt19937_64 rng(seed);
    for (std::size_t i = slots - 1; i > 0; --i) std::swap(p.order[i], p.order[rng() % (i + 1)]);
    if (k == 1) return p;

    auto& o = p.order;
    const std::size_t n = slots;
    auto bad = [&](std::size_t i) {
        const auto a = o[i % n], b = o[(i + 1) % n];
        return static_cast<std::size_t>(a > b ? a - b : b - a) < k;
    };
    auto local = [&](std::size_t a, std::size_t b) {
        std::size_t edges[4] = {(a + n - 1) % n, a, (b + n - 1) % n, b};
        std::sort(edges, edges + 4);
        auto end = std::unique(edges, edges + 4);
        int v = 0;
        for (auto* e = edges; e != end; ++e) v += bad(*e);
        return v;
    };
    for (int pass = 0; pass < 200; ++pass) {
        bool clean = true;
        for (std::size_t i = 0; i < n; ++i) {
            if (!bad(i)) continue;
            clean = false;
            const std::size_t a = (i + 1) % n;
            for (int attempt = 0; attempt < 256 && bad(i); ++attempt) {
                const std::size_t b = rng() % n;
                if (b == a) continue;
                const int before = local(a, b);
                std::swap(o[a], o[b]);
                if (local(a, b) >= before) std::swap(o[a], o[b]);
            }
        }
        if (clean) return p;
    }
    // Local search stalled (tiny instances); fall back to a coprime step walk.
    for (std::size_t s = k; s + k <= n; ++s) {
        if (std::gcd(s, n) != 1) continue;
        for (std::size_t i = 0; i < n; ++i) o[i] = static_cast<std::uint32_t>((i * s) % n);
        return p;
    }
    throw InfeasibleStride("no cycle found for " + std::to_string(slots) + " slots at stride " +
                           std::to_string(min_stride));
}

ChasePattern gen_chunked(std::size_t chunks, std::size_t chunk_size, std::size_t min_stride, std::uint64_t seed) {
    auto p = gen_chase(chunks, min_stride, chunk_size, seed);
    p.chunked = true;
    p.chunk_size = chunk_size;
    return p;
}

void fill_zeros(std::span<std::byte> buf) { std::memset(buf.data(), 0, buf.size()); }

void fill_incrementing_bytes(std::span<std::byte> buf) {
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<std::byte>(i & 0xff);
}

void write_chase(std::span<std::byte> buf, const ChasePattern& p) {
    check_fits(buf, p);
    const auto next = p.successors();
    for (std::size_t s = 0; s < p.slots; ++s) *word_at(buf.data(), s * p.slot_bytes) = next[s];
}

void write_chase128(std::span<std::byte> buf, const ChasePattern& p) {
    if (p.slot_bytes < 16 || p.slot_bytes % 16 != 0) throw PreconditionError("128-bit slots must be 16-byte multiples");
    write_chase(buf, p);
    for (std::size_t s = 0; s < p.slots; ++s) *word_at(buf.data(), s * p.slot_bytes + 8) = 0;
}

void write_unaligned_chase(std::span<std::byte> buf, const ChasePattern& p, std::size_t line_size) {
    check_fits(buf, p, line_size);
    const auto next = p.successors();
    for (std::size_t s = 0; s < p.slots; ++s) {
        const std::uint64_t v = next[s];
        std::memcpy(buf.data() + s * p.slot_bytes + line_size - 4, &v, sizeof v);
    }
}

void write_two_operand_chase(std::span<std::byte> buf, const ChasePattern& p) {
    const std::size_t half = buf.size() / 2;
    check_fits(buf.subspan(0, half), p);
    const auto next = p.successors();
    for (std::size_t s = 0; s < p.slots; ++s) {
        *word_at(buf.data(), s * p.slot_bytes) = next[s];
        *word_at(buf.data() + half, s * p.slot_bytes) = next[s] ^ (1ULL << 63);
    }
}

KernelResult latency_kernel(Operation op, std::span<std::byte> buf, const ChasePattern& p) {
    check_fits(buf, p);
    KernelResult r;
    std::byte* base = buf.data();
    const std::size_t n = p.slots;
    const std::size_t sb = p.slot_bytes;

    switch (op) {
    case Operation::Read: {
        std::uint64_t cur = p.order[0];
        for (std::size_t i = 0; i < n; ++i) {
            cur = *reinterpret_cast<volatile const std::uint64_t*>(base + cur * sb);
            check_index(cur, n);
        }
        keep(cur);
        break;
    }
    case Operation::CasFail: {
        std::uint64_t cur = p.order[0];
        for (std::size_t i = 0; i < n; ++i) {
            std::uint64_t expected = cur;  // never equals the stored successor
            if (Ref(*word_at(base, cur * sb)).compare_exchange_strong(expected, ~0ULL)) ++r.successes;
            else ++r.failures;
            cur = expected;
            check_index(cur, n);
        }
        keep(cur);
        break;
    }
    case Operation::Faa: {
        std::uint64_t cur = p.order[0];
        for (std::size_t i = 0; i < n; ++i) {
            cur = Ref(*word_at(base, cur * sb)).fetch_add(0);
            check_index(cur, n);
        }
        keep(cur);
        break;
    }
    case Operation::Swp: {
        std::uint64_t cur = p.order[0];
        for (std::size_t i = 0; i < n; ++i) {
            cur = Ref(*word_at(base, cur * sb)).exchange(cur | (1ULL << 62));
            check_index(cur, n);
        }
        keep(cur);
        break;
    }
    case Operation::CasSucceed: {
        if (!p.chunked) throw PreconditionError("CAS-succeed latency needs a chunked pattern over a zeroed buffer");
        // The register carried between operations is always 0, yet every
        // address depends on it, so the CASes cannot overlap.
        std::uint64_t carry = 0;
        const std::uint32_t* order = p.order.data();
        for (std::size_t i = 0; i < n; ++i) {
            std::uint64_t expected = carry;
            if (Ref(*word_at(base, order[i] * sb + carry)).compare_exchange_strong(expected, 0)) ++r.successes;
            else ++r.failures;
            carry = expected;
        }
        keep(carry);
        break;
    }
    case Operation::Write: throw PreconditionError("plain writes have no dependent chase form");
    }
    r.ops = n;
    return r;
}

KernelResult bandwidth_kernel(Operation op, std::span<std::byte> buf, std::size_t stride, std::size_t line_size,
                              std::uint64_t addend, std::uint64_t swap_base) {
    if (stride < 8 || stride % 8 != 0) throw PreconditionError("stride must be a multiple of the 8-byte operand");
    KernelResult r;
    std::byte* base = buf.data();
    const std::size_t n = buf.size() / stride;

    switch (op) {
    case Operation::Read: {
        std::uint64_t sum = 0;
        for (std::size_t i = 0; i < n; ++i) sum += *reinterpret_cast<volatile const std::uint64_t*>(base + i * stride);
        keep(sum);
        break;
    }
    case Operation::Write:
        for (std::size_t i = 0; i < n; ++i) *reinterpret_cast<volatile std::uint64_t*>(base + i * stride) = i;
        break;
    case Operation::Faa:
        for (std::size_t i = 0; i < n; ++i) Ref(*word_at(base, i * stride)).fetch_add(addend);
        break;
    case Operation::Swp:
        for (std::size_t i = 0; i < n; ++i) Ref(*word_at(base, i * stride)).exchange(swap_base + i);
        break;
    case Operation::CasSucceed:
        for (std::size_t i = 0; i < n; ++i) {
            std::uint64_t expected = 0;
            if (Ref(*word_at(base, i * stride)).compare_exchange_strong(expected, 0)) ++r.successes;
            else ++r.failures;
        }
        break;
    case Operation::CasFail: {
        // On failure the register picks up *mem, which differs from the next word.
        std::uint64_t expected = n ? ~*word_at(base, 0) : 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (Ref(*word_at(base, i * stride)).compare_exchange_strong(expected, expected)) ++r.successes;
            else ++r.failures;
        }
        keep(expected);
        break;
    }
    }
    r.ops = n;
    r.bytes_counted = lines_touched(n, stride, line_size) * line_size;
    return r;
}

KernelResult contention_kernel(Operation op, std::uint64_t* word, Ticks deadline, std::size_t line_size) {
    KernelResult r;
    Ref ref(*word);
    constexpr int kBatch = 64;
    std::uint64_t mine = ref.load();
    std::uint64_t sink = 0;
    do {
        for (int k = 0; k < kBatch; ++k) {
            switch (op) {
            case Operation::Faa: ref.fetch_add(1); break;
            case Operation::Swp: sink += ref.exchange(r.ops); break;
            case Operation::CasSucceed:
            case Operation::CasFail: {
                std::uint64_t expected = mine;
                if (ref.compare_exchange_strong(expected, mine + 1)) {
                    ++r.successes;
                    mine = mine + 1;
                } else {
                    ++r.failures;
                    mine = expected;
                }
                break;
            }
            case Operation::Write: *reinterpret_cast<volatile std::uint64_t*>(word) = r.ops; break;
            case Operation::Read: sink += *reinterpret_cast<volatile const std::uint64_t*>(word); break;
            }
            ++r.ops;
        }
    } while (now() < deadline);
    keep(sink);
    r.bytes_counted = r.ops * line_size;
    return r;
}

bool cas128_supported() { return platform::has_cmpxchg16b(); }

KernelResult operand128_kernel(Operation op, std::span<std::byte> buf, const ChasePattern& p) {
    if (!cas128_supported()) throw CapabilityMissing("double-width CAS (cmpxchg16b) not available");
#if defined(__x86_64__)
    check_fits(buf, p);
    KernelResult r;
    std::byte* base = buf.data();
    const std::size_t n = p.slots, sb = p.slot_bytes;
    if (op == Operation::CasFail) {
        std::uint64_t cur = p.order[0];
        for (std::size_t i = 0; i < n; ++i) {
            std::uint64_t lo = cur, hi = 0;
            if (cas16(base + cur * sb, lo, hi, ~0ULL, ~0ULL)) ++r.successes;
            else ++r.failures;
            cur = lo;
            check_index(cur, n);
        }
        keep(cur);
    } else if (op == Operation::CasSucceed) {
        if (!p.chunked) throw PreconditionError("CAS-succeed latency needs a chunked pattern over a zeroed buffer");
        std::uint64_t carry = 0;
        for (std::size_t i = 0; i < n; ++i) {
            std::uint64_t lo = carry, hi = 0;
            if (cas16(base + p.order[i] * sb + carry, lo, hi, 0, 0)) ++r.successes;
            else ++r.failures;
            carry = lo;
        }
        keep(carry);
    } else {
        throw PreconditionError("128-bit operands exist only for CAS");
    }
    r.ops = n;
    return r;
#else
    (void)op, (void)buf, (void)p;
    throw CapabilityMissing("double-width CAS needs x86-64");
#endif
}

KernelResult unaligned_kernel(Operation op, std::span<std::byte> buf, const ChasePattern& p, std::size_t line_size) {
#if defined(__x86_64__)
    check_fits(buf, p, line_size);
    KernelResult r;
    std::byte* base = buf.data() + line_size - 4;
    const std::size_t n = p.slots, sb = p.slot_bytes;
    std::uint64_t cur = p.order[0];
    for (std::size_t i = 0; i < n; ++i) {
        std::byte* addr = base + cur * sb;
        switch (op) {
        case Operation::Read: {
            std::uint64_t v;
            std::memcpy(&v, addr, sizeof v);
            asm volatile("" : "+r"(v));
            cur = v;
            break;
        }
        case Operation::CasFail:
            if (cas_raw(addr, cur, ~0ULL)) ++r.successes;
            else ++r.failures;
            break;
        case Operation::Faa: cur = xadd_raw(addr, 0); break;
        case Operation::Swp: cur = xchg_raw(addr, cur | (1ULL << 62)); break;
        default: throw PreconditionError("unaligned chase supports read, CAS-fail, FAA and SWP");
        }
        check_index(cur, n);
    }
    keep(cur);
    r.ops = n;
    return r;
#else
    (void)op, (void)buf, (void)p, (void)line_size;
    throw CapabilityMissing("line-straddling atomics need x86-64");
#endif
}

KernelResult two_operand_cas_kernel(std::span<std::byte> buf, const ChasePattern& p) {
    const std::size_t half = buf.size() / 2;
    check_fits(buf.subspan(0, half), p);
    KernelResult r;
    std::byte* targets = buf.data();
    std::byte* compares = buf.data() + half;
    const std::size_t n = p.slots, sb = p.slot_bytes;
    std::uint64_t cur = p.order[0];
    for (std::size_t i = 0; i < n; ++i) {
        std::uint64_t expected = *reinterpret_cast<volatile const std::uint64_t*>(compares + cur * sb);
        if (Ref(*word_at(targets, cur * sb)).compare_exchange_strong(expected, ~0ULL)) ++r.successes;
        else ++r.failures;
        cur = expected;
        check_index(cur, n);
    }
    keep(cur);
    r.ops = n;
    return r;
}

} // namespace atombench
