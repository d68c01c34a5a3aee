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

#include "atombench/coherency_prep.hpp"
#include "atombench/kernels.hpp"
#include "atombench/timing.hpp"
#include "atombench/topology.hpp"

namespace atombench {

enum class Unit { NsPerOp, BytesPerSecond };

template <>
struct EnumNames<Unit> {
    static constexpr std::array<std::pair<Unit, std::string_view>, 2> table{{
        {Unit::NsPerOp, "ns/op"},
        {Unit::BytesPerSecond, "bytes/s"},
    }};
};

struct BenchmarkSpec {
    KernelId kernel = KernelId::LatChase;
    Operation operation = Operation::Read;
    Placement placement;
    std::size_t buffer_size = 64 * 1024;  // per thread
    unsigned operand_bits = 64;
    std::vector<CoreId> threads{0};
    unsigned repetitions = 31;
    std::size_t min_stride = 64;
    bool unaligned = false;
    bool two_operands = false;

    std::size_t stride = 0;          // bandwidth sweeps; 0 = operand size
    std::size_t chunk_size = 4096;   // CAS-succeed latency chunks
    double contention_ms = 10.0;     // contend duration, >= 10 ms
    std::uint64_t seed = 1;

    bool operator==(const BenchmarkSpec&) const = default;

    /// Throws ValidationError (or PlacementUnsupported) when inconsistent.
    void validate(const MachineDescription& desc) const;
    Unit unit() const { return kernel == KernelId::BwSweep || kernel == KernelId::Contend ? Unit::BytesPerSecond : Unit::NsPerOp; }
};

/// Default min_stride: two lines on AMD hosts (their prefetchers pull line
/// pairs), one line elsewhere.
std::size_t default_min_stride(const MachineDescription& desc, const std::string& vendor);

struct Sample {
    CoreId thread = 0;
    Ticks t_start = 0;
    Ticks t_end = 0;
    std::uint64_t ops = 0;
    std::uint64_t bytes_counted = 0;
    std::uint64_t successes = 0;
    std::uint64_t failures = 0;
};

struct RunMetadata {
    TimerCalibration calibration;
    RecipeTrace recipe;
    PlacementCheck check;
    std::string host_hash;
    std::vector<std::string> flags;
    unsigned repetition = 0;
    unsigned warmup = 0;
    Ticks deadline = 0;
    std::string accounting;  // byte-accounting convention for bandwidth rows
    std::optional<std::uint64_t> final_word;  // contend: shared word after the run

    bool has_flag(const std::string& f) const;
};

struct Measurement {
    BenchmarkSpec spec;
    std::vector<Sample> samples;
    double total_ns = 0.0;
    double derived = 0.0;  // ns/op or bytes/s, see unit
    Unit unit = Unit::NsPerOp;
    RunMetadata metadata;
};

struct Summary {
    double median = 0.0;
    double min = 0.0;
    double max = 0.0;
    double iqr = 0.0;
    std::size_t count = 0;
    Unit unit = Unit::NsPerOp;
};

struct RunResult {
    std::vector<Measurement> measurements;
    Summary summary;
};

struct HarnessOptions {
    unsigned warmup = 3;  // discarded repetitions
    double rendezvous_lead_ms = 5.0;
    int max_retries = 3;
    double ready_timeout_ms = 5000.0;
    std::optional<double> expected_probe_ns;  // enables the latency-signature probe
    PrepOptions prep;
};

/// max(t_end) - min(t_start), overhead-corrected, in ns.
double total_ns(std::span<const Sample> samples, const TimerCalibration& cal);

/// The derived metric of one run.
double derive_metric(KernelId kernel, std::span<const Sample> samples, double total_ns);

/// Median/min/max/IQR of plain values (linear-interpolated quartiles).
Summary summarize_values(std::vector<double> values, Unit unit);

/// Throws HeterogeneousSpecs when the runs do not share one spec, EmptyInput
/// when there are none.
Summary summarize(std::span<const Measurement> measurements);

/// Four-phase run: prepare, rendezvous, measure, collect. Produces
/// `spec.repetitions` measurements after `opt.warmup` discarded ones.
RunResult run(const BenchmarkSpec& spec, const MachineDescription& desc, const TimerCalibration& cal,
              const HarnessOptions& opt = {});

} // namespace atombench
