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
#include <cstdint>
#include <span>
#include <vector>

#include "atombench/types.hpp"

namespace atombench {

enum class KernelId { LatChase, LatCasSucceed, BwSweep, Contend, Operand128, Unaligned, TwoOpCas };

template <>
struct EnumNames<KernelId> {
    static constexpr std::array<std::pair<KernelId, std::string_view>, 7> table{{
        {KernelId::LatChase, "lat-chase"},
        {KernelId::LatCasSucceed, "lat-cas-succeed"},
        {KernelId::BwSweep, "bw-sweep"},
        {KernelId::Contend, "contend"},
        {KernelId::Operand128, "operand128"},
        {KernelId::Unaligned, "unaligned"},
        {KernelId::TwoOpCas, "two-op-cas"},
    }};
};

/// A single cycle over `slots` equally spaced slots. `order` is the visit
/// sequence; the walk returns from order.back() to order.front().
struct ChasePattern {
    std::size_t slots = 0;
    std::size_t slot_bytes = 0;
    std::size_t min_stride = 0;
    bool chunked = false;
    std::size_t chunk_size = 0;
    std::vector<std::uint32_t> order;

    /// next[s] is the slot visited after s.
    std::vector<std::uint32_t> successors() const;
};

/// Deterministic for a given seed. Consecutive visited slots, including the
/// closing pair, are at least `min_stride` bytes apart. Throws
/// InfeasibleStride when no such cycle exists.
ChasePattern gen_chase(std::size_t slots, std::size_t min_stride, std::size_t slot_bytes, std::uint64_t seed);

/// Chase over chunk starts for the CAS-succeed latency kernel.
ChasePattern gen_chunked(std::size_t chunks, std::size_t chunk_size, std::size_t min_stride, std::uint64_t seed);

struct KernelResult {
    std::uint64_t ops = 0;
    std::uint64_t successes = 0;  // CAS only
    std::uint64_t failures = 0;   // CAS only
    std::uint64_t bytes_counted = 0;
};

// Buffer fills. Chase fills store, in each slot, the index of the next slot.
void fill_zeros(std::span<std::byte> buf);
void fill_incrementing_bytes(std::span<std::byte> buf);
void write_chase(std::span<std::byte> buf, const ChasePattern& p);
void write_chase128(std::span<std::byte> buf, const ChasePattern& p);
/// Chase words sit at `line_size - 4`, straddling two lines. The buffer needs
/// one spare line after the last slot.
void write_unaligned_chase(std::span<std::byte> buf, const ChasePattern& p, std::size_t line_size);
/// First half of `buf` holds targets, second half the compare operands.
void write_two_operand_chase(std::span<std::byte> buf, const ChasePattern& p);

/// One serialized pass over the cycle. Each result feeds the next address.
/// Read/FAA(+0)/SWP/CAS-fail follow `write_chase` fills; CAS-succeed needs a
/// zeroed buffer and a chunked pattern.
KernelResult latency_kernel(Operation op, std::span<std::byte> buf, const ChasePattern& p);

/// One sequential pass at `stride` with no dependencies between operations.
/// FAA adds `addend`; SWP stores `swap_base + i` for the i-th operation.
KernelResult bandwidth_kernel(Operation op, std::span<std::byte> buf, std::size_t stride, std::size_t line_size,
                              std::uint64_t addend = 1, std::uint64_t swap_base = 0x5A5A000000000000ULL);

/// Hammers a single shared word until `deadline_ticks` (now() clock).
/// bytes_counted uses the per-operation convention: ops * line_size.
KernelResult contention_kernel(Operation op, std::uint64_t* word, Ticks deadline_ticks, std::size_t line_size);

bool cas128_supported();

/// 128-bit CAS chase (CAS-fail over write_chase128, CAS-succeed over a
/// zeroed chunked buffer). Throws CapabilityMissing without cmpxchg16b.
KernelResult operand128_kernel(Operation op, std::span<std::byte> buf, const ChasePattern& p);

/// Line-straddling chase over write_unaligned_chase fills (read, CAS-fail,
/// FAA(+0), SWP).
KernelResult unaligned_kernel(Operation op, std::span<std::byte> buf, const ChasePattern& p, std::size_t line_size);

/// CAS-fail chase where the compare value is fetched from memory too.
KernelResult two_operand_cas_kernel(std::span<std::byte> buf, const ChasePattern& p);

} // namespace atombench
