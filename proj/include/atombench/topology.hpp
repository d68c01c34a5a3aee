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

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "atombench/types.hpp"

namespace atombench {

enum class UpdatePolicy { WriteBack, WriteThrough };
enum class Inclusivity { Inclusive, Exclusive, Neither };

template <>
struct EnumNames<UpdatePolicy> {
    static constexpr std::array<std::pair<UpdatePolicy, std::string_view>, 2> table{{
        {UpdatePolicy::WriteBack, "write-back"},
        {UpdatePolicy::WriteThrough, "write-through"},
    }};
};

template <>
struct EnumNames<Inclusivity> {
    static constexpr std::array<std::pair<Inclusivity, std::string_view>, 3> table{{
        {Inclusivity::Inclusive, "inclusive"},
        {Inclusivity::Exclusive, "exclusive"},
        {Inclusivity::Neither, "neither"},
    }};
};

using CoreGroup = std::vector<CoreId>;

struct CacheLevelInfo {
    int level = 1;               // 1..3
    std::uint64_t capacity = 0;  // bytes, per cache instance
    std::vector<CoreGroup> groups;
    UpdatePolicy policy = UpdatePolicy::WriteBack;
    Inclusivity inclusivity = Inclusivity::Neither;

    bool operator==(const CacheLevelInfo&) const = default;
};

/// Static description of a shared-memory machine: which cores share which
/// caches, dies and sockets. Immutable once validated; safe to share.
struct MachineDescription {
    std::string name;
    std::vector<CoreId> cores;
    std::uint32_t line_size = 64;
    std::vector<CacheLevelInfo> levels;  // sorted by level index
    std::vector<CoreGroup> dies;
    std::vector<std::vector<std::uint32_t>> sockets;  // die indices
    Protocol protocol = Protocol::Unknown;
    std::uint32_t memory_channels = 0;  // 0 = unknown
    std::uint64_t hugepage_size = 0;
    bool dies_defaulted = false;  // die boundaries were not exported by the OS

    bool operator==(const MachineDescription&) const = default;

    /// Throws ValidationError naming the first violated invariant.
    void validate() const;

    const CacheLevelInfo* level(int index) const;
    bool has_l3() const { return level(3) != nullptr; }
    bool l2_shared() const;
    bool l1_write_through() const;
    bool contains(CoreId core) const;

    std::size_t die_of(CoreId core) const;
    std::size_t socket_of(CoreId core) const;
    /// Index of the group containing `core` at `level`, or -1.
    long group_of(int level, CoreId core) const;

    /// Stable FNV-1a hash of the canonical text, as 16 hex digits.
    std::string hash() const;
};

/// Reads the OS topology. `sysfs_cpu_root` defaults to the Linux CPU tree;
/// tests point it at a fabricated directory.
MachineDescription detect(const std::filesystem::path& sysfs_cpu_root = "/sys/devices/system/cpu",
                          const std::filesystem::path& cpuinfo = "/proc/cpuinfo",
                          const std::filesystem::path& meminfo = "/proc/meminfo");

MachineDescription load(const std::filesystem::path& path);
MachineDescription parse_description(std::string_view json_text);

/// Canonical text form; load(save(d)) == d and the text round-trips byte for byte.
std::string to_text(const MachineDescription& desc);
void save(const MachineDescription& desc, const std::filesystem::path& path);

LocalityClass classify(CoreId requester, CoreId owner, const MachineDescription& desc);

/// Parses a Linux cpulist such as "0-3,8,10-11".
std::vector<CoreId> parse_cpu_list(std::string_view text);

} // namespace atombench
