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

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "atombench/error.hpp"
#include "atombench/reporting.hpp"

using namespace atombench;
namespace fs = std::filesystem;
using LC = LocalityClass;

namespace {

MachineDescription machine(const std::string& name) {
    return load(fs::path(ATOMBENCH_DATA_DIR) / "machines" / (name + ".json"));
}

ModelParams params(const std::string& name) {
    return load_params(fs::path(ATOMBENCH_DATA_DIR) / "params" / (name + ".json"));
}

ResultRow random_row(std::mt19937_64& rng, const std::string& unit = "ns/op") {
    std::uniform_int_distribution<int> pick(0, 1000000);
    std::uniform_real_distribution<double> real(0.0, 1e4);
    ResultRow r;
    const char* kernels[] = {"lat-chase", "bw-sweep", "contend", "bfs"};
    const char* ops[] = {"read", "CAS-fail", "FAA", "SWP", "write"};
    r.kernel = kernels[pick(rng) % 4];
    r.operation = ops[pick(rng) % 5];
    r.state = static_cast<CoherencyState>(pick(rng) % 5);
    r.level = static_cast<CacheLevel>(pick(rng) % 4);
    r.owner = static_cast<CoreId>(pick(rng) % 64);
    for (int i = pick(rng) % 4; i > 0; --i) r.sharers.push_back(static_cast<CoreId>(pick(rng) % 64));
    r.locality = static_cast<LC>(pick(rng) % 4);
    r.buffer_size = static_cast<std::uint64_t>(pick(rng)) << 12;
    r.operand_bits = pick(rng) % 2 ? 64 : 128;
    for (int i = 1 + pick(rng) % 3; i > 0; --i) r.threads.push_back(static_cast<CoreId>(pick(rng) % 64));
    r.repetitions = static_cast<unsigned>(pick(rng) % 100);
    r.min_stride = 64u << (pick(rng) % 4);
    r.unaligned = pick(rng) % 2;
    r.two_operands = pick(rng) % 2;
    r.stride = static_cast<std::uint64_t>(pick(rng) % 512);
    r.chunk_size = static_cast<std::uint64_t>(pick(rng) % 4096);
    r.contention_ms = real(rng) / 7.0;
    r.seed = (static_cast<std::uint64_t>(pick(rng)) << 40) | 12345u;
    r.min = real(rng) / 3.0;
    r.median = r.min + real(rng) / 11.0;
    r.max = r.median + real(rng);
    r.iqr = real(rng) / 13.0;
    r.count = static_cast<std::uint64_t>(pick(rng));
    r.unit = unit;
    r.placement_verified = pick(rng) % 2;
    r.metadata_hash = "h" + std::to_string(pick(rng));
    if (pick(rng) % 2) r.flags = {"oversubscribed", "placement-unverified"};
    r.accounting = pick(rng) % 2 ? "" : "bytes = lines * 64, \"quoted\"";
    return r;
}

void expect_rows_equal(const ResultRow& a, const ResultRow& b) {
    ResultRow x = a, y = b;
    for (double ResultRow::*f : {&ResultRow::median, &ResultRow::min, &ResultRow::max, &ResultRow::iqr,
                                 &ResultRow::contention_ms}) {
        EXPECT_NEAR(x.*f, y.*f, 1e-9 * std::max(1.0, std::abs(y.*f)));
        x.*f = y.*f = 0.0;
    }
    EXPECT_EQ(x, y);
}

ResultRow latency_row(ModelOp op, CoherencyState s, CacheLevel lv, LC loc, std::vector<CoreId> sharers, double v) {
    ResultRow r;
    r.kernel = op == ModelOp::Cas ? "lat-cas-succeed" : "lat-chase";
    r.operation = op == ModelOp::Read ? "read" : op == ModelOp::Cas ? "CAS-succeed" : op == ModelOp::Faa ? "FAA" : "SWP";
    r.state = s;
    r.level = lv;
    r.locality = loc;
    r.sharers = std::move(sharers);
    r.threads = {0};
    r.median = v;
    return r;
}

} // namespace

TEST(Emit, CsvAndJsonRoundTripEveryField) {
    std::mt19937_64 rng(11);
    std::vector<ResultRow> rows;
    for (int i = 0; i < 200; ++i) rows.push_back(random_row(rng, i < 100 ? "ns/op" : "bytes/s"));
    ResultHeader h;
    h.host_hash = "abc123";
    h.calibration = "ticks/ns 2.1, overhead 60 ticks";
    h.notes = {"first note", "second, with comma"};
    for (auto fmt : {OutputFormat::Csv, OutputFormat::Json})
        for (std::size_t half : {0u, 100u}) {
            SCOPED_TRACE(to_string(fmt));
            const std::span<const ResultRow> part(rows.data() + half, 100);
            const auto parsed = parse_results(emit_text(part, fmt, h));
            EXPECT_EQ(parsed.header, h);
            ASSERT_EQ(parsed.rows.size(), part.size());
            for (std::size_t i = 0; i < part.size(); ++i) expect_rows_equal(parsed.rows[i], part[i]);
        }
    EXPECT_THROW(emit_text(rows, OutputFormat::Csv, h), ValidationError);
}

TEST(Emit, ZeroRowsGiveHeaderOnly) {
    ResultHeader h;
    h.host_hash = "x";
    const auto text = emit_text({}, OutputFormat::Csv, h);
    std::istringstream in(text);
    std::string line;
    int data_lines = 0;
    std::string header_line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (header_line.empty()) header_line = line;
        else ++data_lines;
    }
    EXPECT_EQ(data_lines, 0);
    EXPECT_EQ(header_line.rfind(result_columns().front(), 0), 0u);
    EXPECT_TRUE(parse_results(text).rows.empty());
    EXPECT_TRUE(parse_results(emit_text({}, OutputFormat::Json, h)).rows.empty());
}

TEST(Emit, LatencyRowCarriesUnit) {
    ResultRow r;
    r.threads = {0};
    r.median = 1.5;
    const auto text = emit_text(std::vector<ResultRow>{r}, OutputFormat::Csv, {});
    EXPECT_NE(text.find("ns/op"), std::string::npos);
    EXPECT_NE(text.find("schema_version"), std::string::npos);
}

TEST(Emit, FileRoundTripAndIoError) {
    std::mt19937_64 rng(3);
    std::vector<ResultRow> rows{random_row(rng), random_row(rng)};
    const auto dir = fs::temp_directory_path() / "atombench_emit_test";
    fs::create_directories(dir);
    emit(rows, OutputFormat::Json, dir / "r.json", {});
    const auto back = load_results(dir / "r.json");
    ASSERT_EQ(back.rows.size(), 2u);
    expect_rows_equal(back.rows[1], rows[1]);
    EXPECT_THROW(emit(rows, OutputFormat::Csv, "/nonexistent-dir/x.csv", {}), IoError);
    EXPECT_THROW(load_results(dir / "missing.csv"), IoError);
    fs::remove_all(dir);
}

TEST(Parse, RejectsMalformedInput) {
    EXPECT_THROW(parse_results("kernel,operation\nlat-chase\n"), ParseError);
    EXPECT_THROW(parse_results("{not json"), ParseError);
    std::mt19937_64 rng(5);
    auto text = emit_text(std::vector<ResultRow>{random_row(rng)}, OutputFormat::Csv, {});
    text += "lat-chase,read\n";
    EXPECT_THROW(parse_results(text), ParseError);
}

TEST(Compare, ModelGeneratedMeasurementsScoreZero) {
    const auto desc = machine("haswell");
    const auto p = params("haswell");
    std::vector<ResultRow> rows;
    for (auto op : {ModelOp::Read, ModelOp::Cas, ModelOp::Faa, ModelOp::Swp})
        for (auto lv : {CacheLevel::L1, CacheLevel::L2, CacheLevel::L3})
            for (auto loc : {LC::SameCore, LC::SameDie})
                for (auto s : {CoherencyState::E, CoherencyState::M, CoherencyState::S}) {
                    if (op == ModelOp::Read && s != CoherencyState::E) continue;
                    ModelQuery q;
                    q.op = op;
                    q.state = s;
                    q.level = lv;
                    q.locality = loc;
                    std::vector<CoreId> sharers;
                    if (s == CoherencyState::S) {
                        q.sharers = {LC::SameDie};
                        sharers = {2};
                    }
                    rows.push_back(latency_row(op, s, lv, loc, sharers, latency(q, p, desc).value));
                }
    ModelQuery bq;
    bq.op = ModelOp::Faa;
    bq.pattern = AccessPattern::OnePerLine;
    ResultRow bw = latency_row(ModelOp::Faa, CoherencyState::E, CacheLevel::L1, LC::SameCore, {}, 0);
    bw.kernel = "bw-sweep";
    bw.unit = "bytes/s";
    bw.stride = 64;
    bw.median = bandwidth(bq, p, desc).value;
    rows.push_back(bw);
    ResultRow contend = rows.front();
    contend.kernel = "contend";
    rows.push_back(contend);

    const auto before = rows;
    const auto rep = compare(rows, p, desc);
    EXPECT_EQ(rows, before);
    EXPECT_FALSE(rep.groups.empty());
    EXPECT_TRUE(rep.flagged.empty());
    for (const auto& g : rep.groups) EXPECT_NEAR(g.nrmse, 0.0, 1e-12) << g.key;
    EXPECT_EQ(rep.skipped.size(), 1u);
    EXPECT_EQ(format_report(rep), format_report(compare(rows, p, desc)));
}

TEST(Compare, FlagsGroupsAboveThreshold) {
    const auto desc = machine("haswell");
    const auto p = params("haswell");
    ModelQuery q;
    q.level = CacheLevel::L2;
    const double v = latency(q, p, desc).value;
    std::vector<ResultRow> rows{
        latency_row(ModelOp::Read, CoherencyState::E, CacheLevel::L2, LC::SameCore, {}, v * 1.5),
        latency_row(ModelOp::Read, CoherencyState::E, CacheLevel::L2, LC::SameCore, {}, v * 1.5)};
    const auto rep = compare(rows, p, desc, 0.10);
    ASSERT_EQ(rep.groups.size(), 1u);
    EXPECT_NEAR(rep.groups[0].nrmse, nrmse(std::vector<double>{v, v}, std::vector<double>{1.5 * v, 1.5 * v}), 1e-12);
    EXPECT_TRUE(rep.groups[0].flagged);
    EXPECT_EQ(rep.flagged.size(), 1u);
    EXPECT_NE(format_report(rep).find("FLAGGED"), std::string::npos);
}

TEST(Compare, NoOverlapThrows) {
    ResultRow r;
    r.kernel = "bfs";
    r.operation = "CAS";
    r.unit = "edges/s";
    r.threads = {0};
    EXPECT_THROW(compare(std::vector<ResultRow>{r}, params("haswell"), machine("haswell")), NoOverlap);
    EXPECT_THROW(compare({}, params("haswell"), machine("haswell")), NoOverlap);
}

TEST(Plot, OneSeriesPerFacetValue) {
    std::vector<ResultRow> rows;
    for (const char* op : {"read", "FAA", "SWP"})
        for (std::uint64_t size : {4096u, 65536u, 1024u}) {
            ResultRow r;
            r.operation = op;
            r.buffer_size = size;
            r.threads = {0};
            r.median = static_cast<double>(size) / 1000.0;
            rows.push_back(r);
        }
    const auto series = plot_series(rows, {"operation"});
    ASSERT_EQ(series.size(), 3u);
    for (const auto& [k, pts] : series) {
        ASSERT_EQ(pts.size(), 3u);
        EXPECT_EQ(pts[0].first, 1024.0);
        EXPECT_EQ(pts[2].first, 65536.0);
        EXPECT_DOUBLE_EQ(pts[2].second, 65.536);
    }
    EXPECT_EQ(plot_series(rows, {}).size(), 1u);
}

TEST(Plot, ContentionSeriesUseThreadCount) {
    std::vector<ResultRow> rows;
    for (const char* op : {"CAS-succeed", "FAA", "write"})
        for (unsigned t = 1; t <= 4; ++t) {
            ResultRow r;
            r.kernel = "contend";
            r.operation = op;
            r.unit = "bytes/s";
            for (unsigned i = 0; i < t; ++i) r.threads.push_back(i);
            r.median = 1e9 / t;
            rows.push_back(r);
        }
    const auto dir = fs::temp_directory_path() / "atombench_plot_test";
    fs::remove_all(dir);
    const auto files = plotdata(rows, {"operation"}, dir);
    ASSERT_EQ(files.size(), 3u);
    for (const auto& f : files) {
        std::ifstream in(f);
        std::string header;
        std::getline(in, header);
        EXPECT_EQ(header[0], '#');
        double x = 0, y = 0;
        unsigned n = 0;
        while (in >> x >> y) {
            ++n;
            EXPECT_EQ(x, n);
            EXPECT_NEAR(y, 1e9 / n, 1e-3);
        }
        EXPECT_EQ(n, 4u);
    }
    fs::remove_all(dir);
}

TEST(Plot, UnknownFacetKeyThrows) {
    EXPECT_THROW(plot_series({}, {"colour"}), UnknownFacetKey);
    ResultRow r;
    EXPECT_THROW(row_field(r, "nope"), UnknownFacetKey);
    EXPECT_EQ(row_field(r, "operation"), "read");
}
