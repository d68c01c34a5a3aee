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

#include <compare>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "atombench/topology.hpp"
#include "atombench/types.hpp"

namespace atombench {

enum class AccessPattern { OnePerLine, Sequential };

template <>
struct EnumNames<AccessPattern> {
    static constexpr std::array<std::pair<AccessPattern, std::string_view>, 2> table{{
        {AccessPattern::OnePerLine, "one-op-per-line"},
        {AccessPattern::Sequential, "sequential"},
    }};
};

/// Key of a residual overhead entry. An empty `op` matches every operation.
struct OKey {
    std::optional<ModelOp> op;
    CoherencyState state = CoherencyState::E;
    LocalityClass locality = LocalityClass::SameCore;
    CacheLevel level = CacheLevel::L1;

    auto operator<=>(const OKey&) const = default;
};

std::string to_string(const OKey& k);

using OTable = std::map<OKey, double>;

struct ModelParams {
    std::string name;
    double R_L1_l = 0.0;
    double R_L2_l = 0.0;
    std::optional<double> R_L3_l;
    double H = 0.0;
    double M = 0.0;
    std::map<ModelOp, double> E;
    OTable O;
    std::size_t line_size = 64;

    bool operator==(const ModelParams&) const = default;

    /// Throws ValidationError.
    void validate() const;
    /// Exact op match first, then the op wildcard, then 0.
    double o(ModelOp op, CoherencyState s, LocalityClass loc, CacheLevel level) const;
    double e(ModelOp op) const;
};

ModelParams parse_params(const std::string& json_text);
ModelParams load_params(const std::filesystem::path& path);
std::string params_to_json(const ModelParams& p);
void save_params(const ModelParams& p, const std::filesystem::path& path);

struct ModelQuery {
    ModelOp op = ModelOp::Read;
    CoherencyState state = CoherencyState::E;
    CacheLevel level = CacheLevel::L1;
    LocalityClass locality = LocalityClass::SameCore;  // owner relative to the requester
    std::vector<LocalityClass> sharers;  // each sharer relative to the requester
    unsigned operand_bits = 64;
    AccessPattern pattern = AccessPattern::OnePerLine;
};

struct ModelOptions {
    unsigned other_socket_hops = 1;  // H is charged this many times for other-socket paths
    bool include_o = true;
};

struct Term {
    std::string name;
    double value = 0.0;
};

struct Prediction {
    double value = 0.0;
    std::string unit;  // "ns" or "bytes/s"
    std::vector<Term> terms;
    bool extrapolated = false;
};

/// R / R_O for the query. Throws InconsistentQuery.
Prediction read_latency(const ModelQuery& q, const ModelParams& p, const MachineDescription& desc,
                        const ModelOptions& opt = {});

/// read_latency + E[A] + O. Plain reads carry neither term.
Prediction latency(const ModelQuery& q, const ModelParams& p, const MachineDescription& desc,
                   const ModelOptions& opt = {});

/// bytes/s for the query's access pattern.
Prediction bandwidth(const ModelQuery& q, const ModelParams& p, const MachineDescription& desc,
                     const ModelOptions& opt = {});

std::string format_prediction(const Prediction& pr);

} // namespace atombench
