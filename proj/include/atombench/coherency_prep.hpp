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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "atombench/timing.hpp"
#include "atombench/topology.hpp"
#include "atombench/types.hpp"

namespace atombench {

/// Where a benchmark finds its data: coherency state, cache level of the
/// owner's copy, and who holds it.
struct Placement {
    CoherencyState state = CoherencyState::E;
    CacheLevel level = CacheLevel::L1;
    CoreId owner = 0;
    std::vector<CoreId> sharers;  // nonempty iff state is S or O
    LocalityClass locality = LocalityClass::SameCore;  // owner relative to the measuring core

    bool operator==(const Placement&) const = default;
};

/// Throws PlacementUnsupported (e.g. O on a non-MOESI machine) or
/// ValidationError (malformed placement).
void validate_placement(const Placement& p, const MachineDescription& desc);

/// Builds a placement for `measuring_core` with the locality filled in.
Placement make_placement(CoherencyState state, CacheLevel level, CoreId owner, std::vector<CoreId> sharers,
                         CoreId measuring_core, const MachineDescription& desc);

enum class Fill { Zeros, IncrementingBytes, ChasePermutation };

template <>
struct EnumNames<Fill> {
    static constexpr std::array<std::pair<Fill, std::string_view>, 3> table{{
        {Fill::Zeros, "zeros"},
        {Fill::IncrementingBytes, "incrementing-bytes"},
        {Fill::ChasePermutation, "chase-permutation"},
    }};
};

/// Page-aligned anonymous mapping. Tries explicit hugepages first when asked
/// and falls back to transparent-hugepage advice.
class AlignedBuffer {
public:
    AlignedBuffer() = default;
    AlignedBuffer(std::size_t size, bool want_hugepages, std::size_t hugepage_size);
    ~AlignedBuffer();
    AlignedBuffer(AlignedBuffer&& other) noexcept;
    AlignedBuffer& operator=(AlignedBuffer&& other) noexcept;
    AlignedBuffer(const AlignedBuffer&) = delete;
    AlignedBuffer& operator=(const AlignedBuffer&) = delete;

    std::byte* data() noexcept { return data_; }
    const std::byte* data() const noexcept { return data_; }
    std::size_t size() const noexcept { return size_; }
    bool hugepages() const noexcept { return hugepages_; }
    std::size_t page_size() const noexcept { return page_size_; }
    std::span<std::byte> bytes() noexcept { return {data_, size_}; }

private:
    void release() noexcept;

    std::byte* data_ = nullptr;
    std::size_t size_ = 0;
    std::size_t mapped_ = 0;
    std::size_t page_size_ = 4096;
    bool hugepages_ = false;
};

enum class RecipeAction { TlbWarm, Flush, Read, Write, EvictSweep };

template <>
struct EnumNames<RecipeAction> {
    static constexpr std::array<std::pair<RecipeAction, std::string_view>, 5> table{{
        {RecipeAction::TlbWarm, "tlb-warm"},
        {RecipeAction::Flush, "flush"},
        {RecipeAction::Read, "read"},
        {RecipeAction::Write, "write"},
        {RecipeAction::EvictSweep, "evict-sweep"},
    }};
};

struct RecipeStep {
    CoreId core = 0;
    RecipeAction action = RecipeAction::Read;
    std::size_t offset = 0;  // into the target buffer (eviction sweeps use their own buffer)
    std::size_t length = 0;
    std::string note;

    bool operator==(const RecipeStep&) const = default;
};

using RecipeTrace = std::vector<RecipeStep>;

struct PrepOptions {
    double eviction_factor = 1.5;
    bool want_hugepages = true;
    bool reserve_probe_tail = true;
    bool use_flush = true;  // false forces eviction sweeps for state I
};

struct PlacementCheck {
    bool performed = false;
    bool verified = false;
    double probe_median_ns = 0.0;
    double expected_ns = 0.0;
    std::string note;
};

struct PreparedBuffer {
    AlignedBuffer storage;
    std::size_t size = 0;  // payload bytes; the probe tail follows it
    std::size_t probe_tail = 0;
    Placement placement;
    Fill fill = Fill::Zeros;
    RecipeTrace trace;
    PlacementCheck check;

    std::byte* base() noexcept { return storage.data(); }
    std::span<std::byte> payload() noexcept { return {storage.data(), size}; }
    bool hugepages() const noexcept { return storage.hugepages(); }
};

constexpr std::size_t kProbeLines = 64;
// Probe lines sit two lines apart so an adjacent-line prefetch never serves one.
constexpr std::size_t kProbeSpacing = 2;

/// Allocates `payload` bytes (rounded up to whole lines) plus the probe tail.
AlignedBuffer allocate_buffer(std::size_t payload, const MachineDescription& desc, const PrepOptions& opt);

/// Touches one byte per page on the calling core. Returns the number of touches.
std::size_t warm_tlb(std::span<const std::byte> region, std::size_t page_size);

/// The ordered steps that drive a region of `region_bytes` into the placement.
RecipeTrace plan_recipe(const Placement& p, const MachineDescription& desc, std::size_t region_bytes,
                        CoreId measuring_core, std::size_t page_size, const PrepOptions& opt = {});

/// Executes a recipe. Every step runs on a helper pinned to the step's core
/// and completes before the next starts; no helper outlives the call.
void execute_recipe(const RecipeTrace& steps, std::span<std::byte> region, const MachineDescription& desc,
                    std::size_t page_size);

/// Fills nothing: the caller owns the fill. Places the whole storage
/// (payload and tail) and records the recipe.
PreparedBuffer prepare(AlignedBuffer storage, std::size_t payload, Fill fill, const Placement& p,
                       const MachineDescription& desc, CoreId measuring_core, const PrepOptions& opt = {});

/// Latency-signature probe over the sacrificial tail: median of individually
/// timed loads on the measuring core, compared to `expected_ns` within 30%.
PlacementCheck verify_placement(PreparedBuffer& buf, CoreId measuring_core, double expected_ns,
                                const TimerCalibration& cal, const MachineDescription& desc);

} // namespace atombench
