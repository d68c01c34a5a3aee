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

#include "atombench/coherency_prep.hpp"

#include <sys/mman.h>
#include <unistd.h>

#include <algorithm>
#include <cstring>

#include "atombench/platform.hpp"

namespace atombench {
namespace {

std::size_t round_up(std::size_t v, std::size_t m) { return m ? (v + m - 1) / m * m : v; }

std::uint64_t level_capacity(const MachineDescription& d, int lvl) {
    const auto* lv = d.level(lvl);
    return lv ? lv->capacity : 0;
}

void read_lines(std::span<std::byte> r, std::size_t line) {
    std::uint64_t sink = 0;
    for (std::size_t off = 0; off < r.size(); off += line) {
        sink += *reinterpret_cast<volatile const std::uint8_t*>(r.data() + off);
    }
    asm volatile("" : : "r"(sink) : "memory");
}

// Stores back the value already there, so the line turns dirty but the fill survives.
void write_lines(std::span<std::byte> r, std::size_t line) {
    for (std::size_t off = 0; off < r.size(); off += line) {
        auto* p = reinterpret_cast<volatile std::uint8_t*>(r.data() + off);
        *p = *p;
    }
}

void flush_lines(std::span<std::byte> r, std::size_t line) {
    for (std::size_t off = 0; off < r.size(); off += line) platform::flush_line(r.data() + off);
    platform::full_fence();
}

void evict_sweep(std::size_t bytes, std::size_t line) {
    AlignedBuffer ev(bytes, false, 0);
    for (std::size_t off = 0; off < ev.size(); off += line) {
        *reinterpret_cast<volatile std::uint8_t*>(ev.data() + off) = static_cast<std::uint8_t>(off);
    }
    read_lines(ev.bytes(), line);
}

} // namespace

void validate_placement(const Placement& p, const MachineDescription& d) {
    if (!d.contains(p.owner)) throw UnknownCore("placement owner " + std::to_string(p.owner));
    for (CoreId s : p.sharers) {
        if (!d.contains(s)) throw UnknownCore("placement sharer " + std::to_string(s));
        if (s == p.owner) throw ValidationError("sharers-distinct: owner listed as sharer");
    }
    const bool shared = p.state == CoherencyState::S || p.state == CoherencyState::O;
    if (shared != !p.sharers.empty())
        throw ValidationError("sharers-iff-shared: sharers must be nonempty exactly for S and O");
    if (p.state == CoherencyState::O && d.protocol != Protocol::MOESI)
        throw PlacementUnsupported("state O needs a MOESI machine, this one is " + to_string(d.protocol));
    if ((p.level == CacheLevel::Memory) != (p.state == CoherencyState::I))
        throw PlacementUnsupported("state I and level memory go together");
    if (p.level == CacheLevel::L3 && !d.has_l3()) throw PlacementUnsupported("machine has no L3");
    if (p.level == CacheLevel::L2 && !d.level(2)) throw PlacementUnsupported("machine has no L2");
}

Placement make_placement(CoherencyState state, CacheLevel level, CoreId owner, std::vector<CoreId> sharers,
                         CoreId measuring_core, const MachineDescription& desc) {
    Placement p;
    p.state = state;
    p.level = level;
    p.owner = owner;
    p.sharers = std::move(sharers);
    p.locality = classify(measuring_core, owner, desc);
    validate_placement(p, desc);
    return p;
}

AlignedBuffer::AlignedBuffer(std::size_t size, bool want_hugepages, std::size_t hugepage_size) : size_(size) {
    if (size == 0) return;
    const auto sys_page = static_cast<std::size_t>(::sysconf(_SC_PAGESIZE));
    void* p = MAP_FAILED;
    if (want_hugepages && hugepage_size > 0) {
        mapped_ = round_up(size, hugepage_size);
        p = ::mmap(nullptr, mapped_, PROT_READ | PROT_WRITE, MAP_PRIVATE | MAP_ANONYMOUS | MAP_HUGETLB, -1, 0);
        if (p != MAP_FAILED) {
            hugepages_ = true;
            page_size_ = hugepage_size;
        }
    }
    if (p == MAP_FAILED) {
        mapped_ = round_up(size, sys_page);
        p = ::mmap(nullptr, mapped_, PROT_READ | PROT_WRITE, MAP_PRIVATE | MAP_ANONYMOUS, -1, 0);
        if (p == MAP_FAILED) throw std::bad_alloc();
        if (want_hugepages) ::madvise(p, mapped_, MADV_HUGEPAGE);
        page_size_ = sys_page;
    }
    data_ = static_cast<std::byte*>(p);
}

AlignedBuffer::~AlignedBuffer() { release(); }

AlignedBuffer::AlignedBuffer(AlignedBuffer&& o) noexcept
    : data_(std::exchange(o.data_, nullptr)),
      size_(std::exchange(o.size_, 0)),
      mapped_(std::exchange(o.mapped_, 0)),
      page_size_(o.page_size_),
      hugepages_(o.hugepages_) {}

AlignedBuffer& AlignedBuffer::operator=(AlignedBuffer&& o) noexcept {
    if (this != &o) {
        release();
        data_ = std::exchange(o.data_, nullptr);
        size_ = std::exchange(o.size_, 0);
        mapped_ = std::exchange(o.mapped_, 0);
        page_size_ = o.page_size_;
        hugepages_ = o.hugepages_;
    }
    return *this;
}

void AlignedBuffer::release() noexcept {
    if (data_) ::munmap(data_, mapped_);
    data_ = nullptr;
}

AlignedBuffer allocate_buffer(std::size_t payload, const MachineDescription& desc, const PrepOptions& opt) {
    const std::size_t line = desc.line_size;
    const std::size_t tail = opt.reserve_probe_tail ? kProbeLines * kProbeSpacing * line : 0;
    return AlignedBuffer(round_up(payload, line) + tail, opt.want_hugepages, desc.hugepage_size);
}

std::size_t warm_tlb(std::span<const std::byte> region, std::size_t page_size) {
    std::size_t touches = 0;
    std::uint64_t sink = 0;
    for (std::size_t off = 0; off < region.size(); off += page_size) {
        sink += *reinterpret_cast<volatile const std::uint8_t*>(region.data() + off);
        ++touches;
    }
    asm volatile("" : : "r"(sink) : "memory");
    return touches;
}

RecipeTrace plan_recipe(const Placement& p, const MachineDescription& d, std::size_t bytes, CoreId measuring,
                        std::size_t page_size, const PrepOptions& opt) {
    validate_placement(p, d);
    RecipeTrace steps;
    const auto whole = [&](CoreId core, RecipeAction a, std::string note = {}) {
        steps.push_back({core, a, 0, bytes, std::move(note)});
    };
    // Warming reads from the measuring core; do it first whenever such a read
    // could disturb the placed state or level.
    const bool warm_is_neutral = measuring == p.owner && p.level == CacheLevel::L1 &&
                                 (p.state == CoherencyState::E || p.state == CoherencyState::M);
    const std::string warm_note = "page=" + std::to_string(page_size);
    if (!warm_is_neutral) whole(measuring, RecipeAction::TlbWarm, warm_note);

    const bool can_flush = opt.use_flush && platform::has_clflush();
    std::uint64_t all_caches = 0;
    for (const auto& lv : d.levels) all_caches += lv.capacity;
    const auto sweep = [&](CoreId core, std::uint64_t capacity, std::string note) {
        steps.push_back({core, RecipeAction::EvictSweep, 0,
                         static_cast<std::size_t>(static_cast<double>(capacity) * opt.eviction_factor),
                         std::move(note)});
    };
    const auto invalidate = [&](CoreId core) {
        if (can_flush) whole(core, RecipeAction::Flush);
        else sweep(core, all_caches, "flush unavailable, evicting every level");
    };

    switch (p.state) {
    case CoherencyState::I: invalidate(p.owner); break;
    case CoherencyState::E:
        invalidate(p.owner);
        whole(p.owner, RecipeAction::Read);
        break;
    case CoherencyState::M:
        whole(p.owner, RecipeAction::Write,
              d.l1_write_through() && p.level == CacheLevel::L1 ? "write-through L1: dirty copy lands in L2" : "");
        break;
    case CoherencyState::S:
        invalidate(p.owner);
        whole(p.owner, RecipeAction::Read);
        for (CoreId s : p.sharers) whole(s, RecipeAction::Read);
        break;
    case CoherencyState::O:
        whole(p.owner, RecipeAction::Write);
        for (CoreId s : p.sharers) whole(s, RecipeAction::Read);
        break;
    }

    switch (p.level) {
    case CacheLevel::L2: sweep(p.owner, level_capacity(d, 1), "evict L1"); break;
    case CacheLevel::L3: sweep(p.owner, level_capacity(d, 1) + level_capacity(d, 2), "evict L1+L2"); break;
    default: break;
    }

    if (warm_is_neutral) whole(measuring, RecipeAction::TlbWarm, warm_note);
    return steps;
}

void execute_recipe(const RecipeTrace& steps, std::span<std::byte> region, const MachineDescription& desc,
                    std::size_t page_size) {
    const std::size_t line = desc.line_size;
    for (const auto& s : steps) {
        platform::run_on_core(s.core, [&] {
            auto r = s.action == RecipeAction::EvictSweep ? std::span<std::byte>{}
                                                          : region.subspan(s.offset, std::min(s.length, region.size() - s.offset));
            switch (s.action) {
            case RecipeAction::TlbWarm: warm_tlb(r, page_size); break;
            case RecipeAction::Flush: flush_lines(r, line); break;
            case RecipeAction::Read: read_lines(r, line); break;
            case RecipeAction::Write: write_lines(r, line); break;
            case RecipeAction::EvictSweep: evict_sweep(s.length, line); break;
            }
        });
    }
}

PreparedBuffer prepare(AlignedBuffer storage, std::size_t payload, Fill fill, const Placement& p,
                       const MachineDescription& desc, CoreId measuring_core, const PrepOptions& opt) {
    PreparedBuffer out;
    out.size = std::min(payload, storage.size());
    out.probe_tail = storage.size() - out.size;
    out.placement = p;
    out.fill = fill;
    // Written so the tail is backed by real frames, not the shared zero page.
    if (out.probe_tail) std::memset(storage.data() + out.size, 0, out.probe_tail);
    out.trace = plan_recipe(p, desc, storage.size(), measuring_core, storage.page_size(), opt);
    execute_recipe(out.trace, storage.bytes(), desc, storage.page_size());
    out.storage = std::move(storage);
    return out;
}

PlacementCheck verify_placement(PreparedBuffer& buf, CoreId measuring_core, double expected_ns,
                                const TimerCalibration& cal, const MachineDescription& desc) {
    PlacementCheck check;
    check.expected_ns = expected_ns;
    const std::size_t line = desc.line_size;
    const std::size_t lines = std::min(buf.probe_tail / line / kProbeSpacing, kProbeLines);
    if (lines == 0) {
        check.note = "no probe tail reserved";
        return check;
    }
    // A fixed odd multiplier scatters the visiting order so stream prefetchers see no direction.
    std::vector<std::size_t> order(lines);
    for (std::size_t i = 0; i < lines; ++i) order[i] = (i * 37 + 11) % lines;
    std::vector<double> samples(lines);
    std::byte* tail = buf.base() + buf.size;
    platform::run_on_core(measuring_core, [&] {
        for (std::size_t i = 0; i < lines; ++i) {
            std::byte* at = tail + order[i] * kProbeSpacing * line;
            const Ticks t0 = now();
            [[maybe_unused]] auto v = *reinterpret_cast<volatile const std::uint64_t*>(at);
            const Ticks t1 = now();
            samples[i] = cal.duration_ns(t1 - t0);
        }
    });
    std::nth_element(samples.begin(), samples.begin() + samples.size() / 2, samples.end());
    check.performed = true;
    check.probe_median_ns = samples[samples.size() / 2];
    check.verified = std::abs(check.probe_median_ns - expected_ns) <= 0.3 * expected_ns;
    check.note = check.verified ? "signature within 30%" : "placement-unverified";
    buf.check = check;
    return check;
}

} // namespace atombench
