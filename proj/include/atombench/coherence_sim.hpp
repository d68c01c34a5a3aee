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
#include <map>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "atombench/types.hpp"

namespace atombench::sim {

enum class SimProtocol { MESI, MESIF, MOESI, MOESI_OLSL, MOESI_HTAssist };

enum class LineStateKind : std::uint8_t { I, S, E, M, O, F, OL, SL };

enum class TraceOp { Read, Write, Atomic, Evict };

} // namespace atombench::sim

namespace atombench {

template <>
struct EnumNames<sim::SimProtocol> {
    static constexpr std::array<std::pair<sim::SimProtocol, std::string_view>, 5> table{{
        {sim::SimProtocol::MESI, "MESI"},
        {sim::SimProtocol::MESIF, "MESIF"},
        {sim::SimProtocol::MOESI, "MOESI"},
        {sim::SimProtocol::MOESI_OLSL, "MOESI+OLSL"},
        {sim::SimProtocol::MOESI_HTAssist, "MOESI+HTAssistFilter"},
    }};
};

template <>
struct EnumNames<sim::LineStateKind> {
    static constexpr std::array<std::pair<sim::LineStateKind, std::string_view>, 8> table{{
        {sim::LineStateKind::I, "I"},
        {sim::LineStateKind::S, "S"},
        {sim::LineStateKind::E, "E"},
        {sim::LineStateKind::M, "M"},
        {sim::LineStateKind::O, "O"},
        {sim::LineStateKind::F, "F"},
        {sim::LineStateKind::OL, "OL"},
        {sim::LineStateKind::SL, "SL"},
    }};
};

template <>
struct EnumNames<sim::TraceOp> {
    static constexpr std::array<std::pair<sim::TraceOp, std::string_view>, 4> table{{
        {sim::TraceOp::Read, "read"},
        {sim::TraceOp::Write, "write"},
        {sim::TraceOp::Atomic, "atomic"},
        {sim::TraceOp::Evict, "evict"},
    }};
};

} // namespace atombench

namespace atombench::sim {

struct SimConfig {
    SimProtocol protocol = SimProtocol::MOESI;
    unsigned dies = 2;
    unsigned cores_per_die = 2;
    std::size_t directory_capacity = 64;  // HT-Assist filter entries

    unsigned cores() const { return dies * cores_per_die; }
    unsigned die_of(unsigned core) const { return core / cores_per_die; }
    void validate() const;  // ValidationError
};

struct LineState {
    std::vector<LineStateKind> state;    // per core
    std::vector<std::uint64_t> value;    // per core copy; meaningful when state != I
    std::uint64_t memory = 0;
};

struct TraceEvent {
    unsigned core = 0;
    TraceOp op = TraceOp::Read;
    std::uint64_t line = 0;

    bool operator==(const TraceEvent&) const = default;
};

struct Message {
    unsigned target_die = 0;
    bool remote = false;     // target die differs from the requester's
    bool broadcast = false;  // sent without knowing the holders
    int target_core = -1;    // -1 for die-level messages
};

struct StepResult {
    std::vector<Message> messages;
    std::uint64_t observed = 0;  // value seen by reads and atomics
    unsigned transitions = 0;
    unsigned writebacks = 0;
};

struct SimStats {
    std::uint64_t events = 0;
    std::uint64_t remote_die_invalidations = 0;
    std::uint64_t local_invalidations = 0;
    std::uint64_t state_transitions = 0;
    std::uint64_t writebacks = 0;
    std::uint64_t broadcasts = 0;
    std::uint64_t directory_evictions = 0;

    bool operator==(const SimStats&) const = default;
};

std::string stats_to_json(const SimStats& s, const SimConfig& cfg);

/// Deterministic replay engine. Every step checks the line invariants and the
/// last-written-value property, throwing ProtocolViolation on any breach.
class Simulator {
public:
    explicit Simulator(SimConfig cfg);

    StepResult step(const TraceEvent& ev);
    const SimStats& stats() const { return stats_; }
    const SimConfig& config() const { return cfg_; }
    /// Current state of a line (all I when never touched).
    LineState line(std::uint64_t id) const;
    bool tracked(std::uint64_t id) const { return dir_stamp_.count(id) != 0; }
    std::size_t directory_size() const { return dir_stamp_.size(); }

    void check_invariants(std::uint64_t id) const;

private:
    LineState& touch(std::uint64_t id);
    void read(unsigned c, LineState& ls, StepResult& r);
    void write(unsigned c, LineState& ls, std::uint64_t id, StepResult& r);
    void evict(unsigned c, LineState& ls, StepResult& r);
    void set(LineState& ls, unsigned core, LineStateKind s, StepResult& r);
    void invalidate_others(unsigned c, LineState& ls, std::uint64_t id, StepResult& r);
    void update_directory(std::uint64_t id, const LineState& ls);

    SimConfig cfg_;
    SimStats stats_;
    std::unordered_map<std::uint64_t, LineState> lines_;
    std::unordered_map<std::uint64_t, std::uint64_t> last_written_;
    std::uint64_t next_tag_ = 1;
    // HT-Assist directory: line -> last transition stamp, ordered by stamp.
    std::unordered_map<std::uint64_t, std::uint64_t> dir_stamp_;
    std::set<std::pair<std::uint64_t, std::uint64_t>> dir_order_;
    std::uint64_t clock_ = 0;
};

SimStats replay(std::span<const TraceEvent> trace, const SimConfig& cfg);

/// `core op line` per line; '#' starts a comment. Throws ParseError with the
/// line number.
std::vector<TraceEvent> parse_trace(const std::string& text);
std::vector<TraceEvent> load_trace(const std::filesystem::path& path);
std::string trace_to_text(std::span<const TraceEvent> trace);

/// Two producer/consumer pairs, each confined to its own die, 100 events.
std::vector<TraceEvent> die_local_producer_consumer_trace();

/// Uniformly random events over `lines` lines (seeded).
std::vector<TraceEvent> random_trace(const SimConfig& cfg, std::size_t events, std::uint64_t lines, std::uint64_t seed);

} // namespace atombench::sim
