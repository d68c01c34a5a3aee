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

#include <stdexcept>
#include <string>

namespace atombench {

/// Base of every error the library throws. `kind()` is a stable identifier
/// that tests and the CLI match on.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(kind + ": " + what), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

#define ATOMBENCH_DEFINE_ERROR(Name)                                       \
    class Name : public Error {                                            \
    public:                                                                \
        explicit Name(const std::string& what) : Error(#Name, what) {}     \
    }

// topology
ATOMBENCH_DEFINE_ERROR(TopologyUnavailable);
ATOMBENCH_DEFINE_ERROR(ParseError);
ATOMBENCH_DEFINE_ERROR(ValidationError);
ATOMBENCH_DEFINE_ERROR(UnknownCore);
// timing
ATOMBENCH_DEFINE_ERROR(PreconditionError);
ATOMBENCH_DEFINE_ERROR(UnstableClock);
// coherency_prep / harness / kernels
ATOMBENCH_DEFINE_ERROR(PlacementUnsupported);
ATOMBENCH_DEFINE_ERROR(PinFailure);
ATOMBENCH_DEFINE_ERROR(RendezvousTimeout);
ATOMBENCH_DEFINE_ERROR(HeterogeneousSpecs);
ATOMBENCH_DEFINE_ERROR(InfeasibleStride);
ATOMBENCH_DEFINE_ERROR(CapabilityMissing);
// perf_model / fitting
ATOMBENCH_DEFINE_ERROR(InconsistentQuery);
ATOMBENCH_DEFINE_ERROR(EmptyInput);
ATOMBENCH_DEFINE_ERROR(ZeroMean);
ATOMBENCH_DEFINE_ERROR(MissingCoverage);
// coherence_sim
ATOMBENCH_DEFINE_ERROR(ProtocolViolation);
// reporting
ATOMBENCH_DEFINE_ERROR(IoError);
ATOMBENCH_DEFINE_ERROR(NoOverlap);
ATOMBENCH_DEFINE_ERROR(UnknownFacetKey);
// bfs
ATOMBENCH_DEFINE_ERROR(InvalidRoot);

#undef ATOMBENCH_DEFINE_ERROR

} // namespace atombench
