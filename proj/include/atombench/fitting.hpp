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
#include <map>
#include <span>
#include <string>
#include <vector>

#include "atombench/perf_model.hpp"
#include "atombench/topology.hpp"

namespace atombench {

/// One measured latency with the model query that describes it.
struct Observation {
    ModelQuery query;
    double latency_ns = 0.0;
};

struct FitOptions {
    double nrmse_threshold = 0.10;
    std::size_t min_group_size = 5;  // smaller groups are reported but never flagged
    ModelOptions model;
};

struct FitReport {
    ModelParams params;  // params.O == o_table
    OTable o_table;
    std::map<std::string, double> nrmse_by_group;
    std::map<std::string, std::size_t> group_sizes;
    std::vector<std::string> flagged;
    double overall_nrmse = 0.0;
    std::vector<std::string> clamped;  // parameters raised to 0
    std::vector<std::string> notes;
};

/// Normalized root mean square error. Throws EmptyInput, ZeroMean, and
/// ValidationError on length mismatch.
double nrmse(std::span<const double> predictions, std::span<const double> observations);

/// Median extraction of R, H, M and E. `clamped` (optional) receives the names
/// of parameters that came out negative. Throws MissingCoverage.
ModelParams fit_base_params(std::span<const Observation> obs, const MachineDescription& desc,
                            const ModelOptions& opt = {}, std::vector<std::string>* clamped = nullptr,
                            std::vector<std::string>* notes = nullptr);

/// Per (op, state, locality, level) group of atomic observations: median of
/// measured minus modeled-without-O. Throws MissingCoverage.
OTable fit_o_table(std::span<const Observation> obs, const ModelParams& params, const MachineDescription& desc,
                   const ModelOptions& opt = {});

FitReport fit(std::span<const Observation> obs, const MachineDescription& desc, const FitOptions& opt = {});

std::string group_key(const ModelQuery& q);

double median(std::vector<double> v);

} // namespace atombench
