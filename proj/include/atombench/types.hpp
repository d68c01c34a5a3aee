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

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include "atombench/error.hpp"

namespace atombench {

using CoreId = std::uint32_t;
using Ticks = std::uint64_t;

/// Benchmarked operation. CAS is split by its intended outcome because the
/// two outcomes need different buffer fills.
enum class Operation { CasSucceed, CasFail, Faa, Swp, Read, Write };

/// Operation as seen by the performance model (CAS outcome is irrelevant).
enum class ModelOp { Cas, Faa, Swp, Read, Write };

enum class CoherencyState { M, E, S, O, I };

enum class CacheLevel { L1, L2, L3, Memory };

/// Where the owner of a line sits relative to the requesting core.
/// Ordered from closest to farthest.
enum class LocalityClass { SameCore, SameL2Group, SameDie, SameSocketOtherDie, OtherSocket };

enum class Protocol { MESIF, MOESI, MESI_GOLS, MESI, Unknown };

template <typename E>
struct EnumNames;

template <>
struct EnumNames<Operation> {
    static constexpr std::array<std::pair<Operation, std::string_view>, 6> table{{
        {Operation::CasSucceed, "CAS-succeed"},
        {Operation::CasFail, "CAS-fail"},
        {Operation::Faa, "FAA"},
        {Operation::Swp, "SWP"},
        {Operation::Read, "read"},
        {Operation::Write, "write"},
    }};
};

template <>
struct EnumNames<ModelOp> {
    static constexpr std::array<std::pair<ModelOp, std::string_view>, 5> table{{
        {ModelOp::Cas, "CAS"},
        {ModelOp::Faa, "FAA"},
        {ModelOp::Swp, "SWP"},
        {ModelOp::Read, "read"},
        {ModelOp::Write, "write"},
    }};
};

template <>
struct EnumNames<CoherencyState> {
    static constexpr std::array<std::pair<CoherencyState, std::string_view>, 5> table{{
        {CoherencyState::M, "M"},
        {CoherencyState::E, "E"},
        {CoherencyState::S, "S"},
        {CoherencyState::O, "O"},
        {CoherencyState::I, "I"},
    }};
};

template <>
struct EnumNames<CacheLevel> {
    static constexpr std::array<std::pair<CacheLevel, std::string_view>, 4> table{{
        {CacheLevel::L1, "L1"},
        {CacheLevel::L2, "L2"},
        {CacheLevel::L3, "L3"},
        {CacheLevel::Memory, "memory"},
    }};
};

template <>
struct EnumNames<LocalityClass> {
    static constexpr std::array<std::pair<LocalityClass, std::string_view>, 5> table{{
        {LocalityClass::SameCore, "same-core"},
        {LocalityClass::SameL2Group, "same-L2-group"},
        {LocalityClass::SameDie, "same-die"},
        {LocalityClass::SameSocketOtherDie, "same-socket-other-die"},
        {LocalityClass::OtherSocket, "other-socket"},
    }};
};

template <>
struct EnumNames<Protocol> {
    static constexpr std::array<std::pair<Protocol, std::string_view>, 5> table{{
        {Protocol::MESIF, "MESIF"},
        {Protocol::MOESI, "MOESI"},
        {Protocol::MESI_GOLS, "MESI-GOLS"},
        {Protocol::MESI, "MESI"},
        {Protocol::Unknown, "unknown"},
    }};
};

template <typename E>
std::string to_string(E value) {
    for (const auto& [v, name] : EnumNames<E>::table) {
        if (v == value) return std::string(name);
    }
    return "?";
}

template <typename E>
std::optional<E> try_parse(std::string_view text) {
    for (const auto& [v, name] : EnumNames<E>::table) {
        if (name == text) return v;
    }
    return std::nullopt;
}

template <typename E>
E parse(std::string_view text) {
    if (auto v = try_parse<E>(text)) return *v;
    throw ParseError("unrecognized value '" + std::string(text) + "'");
}

inline ModelOp model_op(Operation op) {
    switch (op) {
    case Operation::CasSucceed:
    case Operation::CasFail: return ModelOp::Cas;
    case Operation::Faa: return ModelOp::Faa;
    case Operation::Swp: return ModelOp::Swp;
    case Operation::Read: return ModelOp::Read;
    case Operation::Write: return ModelOp::Write;
    }
    return ModelOp::Read;
}

inline bool is_atomic(ModelOp op) {
    return op == ModelOp::Cas || op == ModelOp::Faa || op == ModelOp::Swp;
}

inline bool is_atomic(Operation op) { return is_atomic(model_op(op)); }

inline bool is_off_die(LocalityClass loc) {
    return loc == LocalityClass::SameSocketOtherDie || loc == LocalityClass::OtherSocket;
}

} // namespace atombench
