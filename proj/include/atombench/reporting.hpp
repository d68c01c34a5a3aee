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

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "atombench/fitting.hpp"
#include "atombench/harness.hpp"
#include "atombench/perf_model.hpp"
#include "atombench/topology.hpp"

namespace atombench {

constexpr int kSchemaVersion = 1;

/// A flattened BenchmarkSpec plus its summary. `kernel` and `operation` are
/// free strings so application rows (bfs) fit the same file.
struct ResultRow {
    std::string kernel = "lat-chase";
    std::string operation = "read";
    CoherencyState state = CoherencyState::E;
    CacheLevel level = CacheLevel::L1;
    CoreId owner = 0;
    std::vector<CoreId> sharers;
    LocalityClass locality = LocalityClass::SameCore;
    std::uint64_t buffer_size = 0;
    unsigned operand_bits = 64;
    std::vector<CoreId> threads;
    unsigned repetitions = 0;
    std::uint64_t min_stride = 0;
    bool unaligned = false;
    bool two_operands = false;
    std::uint64_t stride = 0;
    std::uint64_t chunk_size = 0;
    double contention_ms = 0.0;
    std::uint64_t seed = 0;
    double median = 0.0;
    double min = 0.0;
    double max = 0.0;
    double iqr = 0.0;
    std::uint64_t count = 0;
    std::string unit = "ns/op";
    bool placement_verified = false;
    std::string metadata_hash;
    std::vector<std::string> flags;
    std::string accounting;

    bool operator==(const ResultRow&) const = default;
};

/// CSV column order (frozen for schema version 1).
const std::vector<std::string>& result_columns();
std::vector<std::string> row_fields(const ResultRow& row);
std::string row_field(const ResultRow& row, const std::string& column);  // UnknownFacetKey

ResultRow make_row(const RunResult& result);

struct ResultHeader {
    int schema_version = kSchemaVersion;
    std::string host_hash;
    std::string calibration;  // one-line description
    std::vector<std::string> notes;

    bool operator==(const ResultHeader&) const = default;
};

std::string describe(const TimerCalibration& cal);

enum class OutputFormat { Csv, Json };

template <>
struct EnumNames<OutputFormat> {
    static constexpr std::array<std::pair<OutputFormat, std::string_view>, 2> table{{
        {OutputFormat::Csv, "csv"},
        {OutputFormat::Json, "json"},
    }};
};

std::string emit_text(std::span<const ResultRow> rows, OutputFormat fmt, const ResultHeader& header);
/// Throws IoError.
void emit(std::span<const ResultRow> rows, OutputFormat fmt, const std::filesystem::path& path,
          const ResultHeader& header);

struct ParsedResults {
    ResultHeader header;
    std::vector<ResultRow> rows;
};

/// Detects the format from the first character. Throws ParseError.
ParsedResults parse_results(const std::string& text);
ParsedResults load_results(const std::filesystem::path& path);

/// Latency rows as fitting observations (median per row).
std::vector<Observation> observations_from_rows(std::span<const ResultRow> rows, const MachineDescription& desc);

struct GroupComparison {
    std::string key;
    std::string unit;
    std::size_t n = 0;
    double predicted = 0.0;        // median prediction over the group
    double measured = 0.0;         // median measurement
    double nrmse = 0.0;
    bool flagged = false;
};

struct ComparisonReport {
    double threshold = 0.10;
    std::vector<GroupComparison> groups;
    std::vector<std::string> flagged;
    std::vector<std::string> skipped;  // rows with no model counterpart
};

/// Throws NoOverlap when no row maps to a model query.
ComparisonReport compare(std::span<const ResultRow> rows, const ModelParams& params, const MachineDescription& desc,
                         double threshold = 0.10, const ModelOptions& opt = {});
std::string format_report(const ComparisonReport& r);

/// Series per facet combination. x is the thread count for contend rows and
/// the buffer size otherwise; y is the median. Throws UnknownFacetKey.
std::map<std::string, std::vector<std::pair<double, double>>> plot_series(std::span<const ResultRow> rows,
                                                                           const std::vector<std::string>& facets);
/// Writes one whitespace-separated file per series into `dir`; returns the paths.
std::vector<std::filesystem::path> plotdata(std::span<const ResultRow> rows, const std::vector<std::string>& facets,
                                            const std::filesystem::path& dir);

} // namespace atombench
