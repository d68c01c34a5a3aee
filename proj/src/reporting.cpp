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

#include "atombench/reporting.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "atombench/error.hpp"

namespace atombench {
namespace {

using ojson = nlohmann::ordered_json;

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

template <typename T>
std::string join(const std::vector<T>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ';';
        if constexpr (std::is_same_v<T, std::string>) out += v[i];
        else out += std::to_string(v[i]);
    }
    return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    if (s.empty()) return out;
    std::size_t start = 0;
    for (;;) {
        auto pos = s.find(sep, start);
        out.push_back(s.substr(start, pos - start));
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    return out;
}

std::uint64_t to_u64(const std::string& s, const std::string& col) {
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) throw ParseError("column " + col + ": bad integer '" + s + "'");
    return v;
}

double to_double(const std::string& s, const std::string& col) {
    try {
        std::size_t used = 0;
        double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::logic_error&) {
        throw ParseError("column " + col + ": bad number '" + s + "'");
    }
}

bool to_bool(const std::string& s, const std::string& col) {
    if (s == "true") return true;
    if (s == "false") return false;
    throw ParseError("column " + col + ": bad boolean '" + s + "'");
}

std::vector<CoreId> to_cores(const std::string& s, const std::string& col) {
    std::vector<CoreId> out;
    for (const auto& p : split(s, ';')) out.push_back(static_cast<CoreId>(to_u64(p, col)));
    return out;
}

template <typename E>
E to_enum(const std::string& s, const std::string& col) {
    auto v = try_parse<E>(s);
    if (!v) throw ParseError("column " + col + ": bad value '" + s + "'");
    return *v;
}

ResultRow row_from_fields(const std::vector<std::string>& f) {
    const auto& c = result_columns();
    if (f.size() != c.size())
        throw ParseError("expected " + std::to_string(c.size()) + " fields, got " + std::to_string(f.size()));
    ResultRow r;
    std::size_t i = 0;
    auto next = [&]() -> std::pair<const std::string&, const std::string&> {
        const std::size_t k = i++;
        return {f[k], c[k]};
    };
    auto s = [&] { return next().first; };
    auto u = [&] { auto [v, n] = next(); return to_u64(v, n); };
    auto d = [&] { auto [v, n] = next(); return to_double(v, n); };
    auto b = [&] { auto [v, n] = next(); return to_bool(v, n); };
    r.kernel = s();
    r.operation = s();
    { auto [v, n] = next(); r.state = to_enum<CoherencyState>(v, n); }
    { auto [v, n] = next(); r.level = to_enum<CacheLevel>(v, n); }
    r.owner = static_cast<CoreId>(u());
    { auto [v, n] = next(); r.sharers = to_cores(v, n); }
    { auto [v, n] = next(); r.locality = to_enum<LocalityClass>(v, n); }
    r.buffer_size = u();
    r.operand_bits = static_cast<unsigned>(u());
    { auto [v, n] = next(); r.threads = to_cores(v, n); }
    r.repetitions = static_cast<unsigned>(u());
    r.min_stride = u();
    r.unaligned = b();
    r.two_operands = b();
    r.stride = u();
    r.chunk_size = u();
    r.contention_ms = d();
    r.seed = u();
    r.median = d();
    r.min = d();
    r.max = d();
    r.iqr = d();
    r.count = u();
    r.unit = s();
    r.placement_verified = b();
    r.metadata_hash = s();
    r.flags = split(s(), ';');
    r.accounting = s();
    return r;
}

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out += '"';
        out += ch;
    }
    return out + "\"";
}

std::vector<std::string> csv_split(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (ch == '"') {
                quoted = false;
            } else {
                cur += ch;
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += ch;
        }
    }
    if (quoted) throw ParseError("unterminated quote");
    out.push_back(std::move(cur));
    return out;
}

std::string fnv_hex(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

ojson row_to_json(const ResultRow& r) {
    ojson j;
    const auto& c = result_columns();
    const auto f = row_fields(r);
    for (std::size_t i = 0; i < c.size(); ++i) j[c[i]] = f[i];
    return j;
}

} // namespace

const std::vector<std::string>& result_columns() {
    static const std::vector<std::string> cols{
        "kernel",     "operation",    "state",      "level",         "owner",   "sharers",    "locality",
        "buffer_size", "operand_bits", "threads",   "repetitions",   "min_stride", "unaligned", "two_operands",
        "stride",     "chunk_size",   "contention_ms", "seed",       "median",  "min",        "max",
        "iqr",        "count",        "unit",       "placement_verified", "metadata_hash", "flags", "accounting"};
    return cols;
}

std::vector<std::string> row_fields(const ResultRow& r) {
    auto b = [](bool v) { return std::string(v ? "true" : "false"); };
    return {r.kernel,
            r.operation,
            to_string(r.state),
            to_string(r.level),
            std::to_string(r.owner),
            join(r.sharers),
            to_string(r.locality),
            std::to_string(r.buffer_size),
            std::to_string(r.operand_bits),
            join(r.threads),
            std::to_string(r.repetitions),
            std::to_string(r.min_stride),
            b(r.unaligned),
            b(r.two_operands),
            std::to_string(r.stride),
            std::to_string(r.chunk_size),
            fmt_double(r.contention_ms),
            std::to_string(r.seed),
            fmt_double(r.median),
            fmt_double(r.min),
            fmt_double(r.max),
            fmt_double(r.iqr),
            std::to_string(r.count),
            r.unit,
            b(r.placement_verified),
            r.metadata_hash,
            join(r.flags),
            r.accounting};
}

std::string row_field(const ResultRow& row, const std::string& column) {
    const auto& c = result_columns();
    auto it = std::find(c.begin(), c.end(), column);
    if (it == c.end()) throw UnknownFacetKey("no result column named '" + column + "'");
    return row_fields(row)[static_cast<std::size_t>(it - c.begin())];
}

std::string describe(const TimerCalibration& cal) {
    std::ostringstream os;
    os.precision(9);
    os << "source=" << to_string(cal.source) << " ticks_per_ns=" << cal.ticks_per_ns()
       << " window_ticks=" << cal.window_ticks << " window_ns=" << cal.window_ns
       << " read_overhead_ticks=" << cal.read_overhead_ticks;
    return os.str();
}

ResultRow make_row(const RunResult& res) {
    if (res.measurements.empty()) throw EmptyInput("run has no measurements");
    const Measurement& m0 = res.measurements.front();
    const BenchmarkSpec& s = m0.spec;
    ResultRow r;
    r.kernel = to_string(s.kernel);
    r.operation = to_string(s.operation);
    r.state = s.placement.state;
    r.level = s.placement.level;
    r.owner = s.placement.owner;
    r.sharers = s.placement.sharers;
    r.locality = s.placement.locality;
    r.buffer_size = s.buffer_size;
    r.operand_bits = s.operand_bits;
    r.threads = s.threads;
    r.repetitions = s.repetitions;
    r.min_stride = s.min_stride;
    r.unaligned = s.unaligned;
    r.two_operands = s.two_operands;
    r.stride = s.stride;
    r.chunk_size = s.chunk_size;
    r.contention_ms = s.contention_ms;
    r.seed = s.seed;
    r.median = res.summary.median;
    r.min = res.summary.min;
    r.max = res.summary.max;
    r.iqr = res.summary.iqr;
    r.count = res.summary.count;
    r.unit = to_string(res.summary.unit);
    r.placement_verified = std::all_of(res.measurements.begin(), res.measurements.end(),
                                       [](const Measurement& m) { return m.metadata.check.verified; });
    r.flags = m0.metadata.flags;
    r.accounting = m0.metadata.accounting;
    std::string meta = m0.metadata.host_hash + "|" + describe(m0.metadata.calibration) + "|" + join(r.flags) + "|" +
                       std::to_string(m0.metadata.recipe.size()) + "|" + std::to_string(m0.metadata.warmup);
    r.metadata_hash = fnv_hex(meta);
    return r;
}

std::string emit_text(std::span<const ResultRow> rows, OutputFormat fmt, const ResultHeader& h) {
    if (!rows.empty()) {
        const std::string& unit = rows.front().unit;
        for (const auto& r : rows) {
            if (r.unit != unit) throw ValidationError("mixed units in one result file");
        }
    }
    if (fmt == OutputFormat::Json) {
        ojson j;
        j["schema_version"] = h.schema_version;
        j["host_hash"] = h.host_hash;
        j["calibration"] = h.calibration;
        j["notes"] = h.notes;
        j["columns"] = result_columns();
        ojson arr = ojson::array();
        for (const auto& r : rows) arr.push_back(row_to_json(r));
        j["rows"] = arr;
        return j.dump(2) + "\n";
    }
    std::string out = "# atombench results schema_version=" + std::to_string(h.schema_version) + "\n";
    out += "# host_hash=" + h.host_hash + "\n";
    out += "# calibration=" + h.calibration + "\n";
    for (const auto& n : h.notes) out += "# note=" + n + "\n";
    const auto& c = result_columns();
    for (std::size_t i = 0; i < c.size(); ++i) out += (i ? "," : "") + c[i];
    out += "\n";
    for (const auto& r : rows) {
        const auto f = row_fields(r);
        for (std::size_t i = 0; i < f.size(); ++i) out += (i ? "," : "") + csv_escape(f[i]);
        out += "\n";
    }
    return out;
}

void emit(std::span<const ResultRow> rows, OutputFormat fmt, const std::filesystem::path& path,
          const ResultHeader& header) {
    const std::string text = emit_text(rows, fmt, header);
    std::ofstream out(path);
    if (!out || !(out << text)) throw IoError("cannot write " + path.string());
}

ParsedResults parse_results(const std::string& text) {
    ParsedResults res;
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '{') {
        ojson j;
        try {
            j = ojson::parse(text);
            res.header.schema_version = j.at("schema_version").get<int>();
            res.header.host_hash = j.value("host_hash", "");
            res.header.calibration = j.value("calibration", "");
            if (j.contains("notes")) res.header.notes = j["notes"].get<std::vector<std::string>>();
            for (const auto& r : j.at("rows")) {
                std::vector<std::string> f;
                for (const auto& col : result_columns()) f.push_back(r.at(col).get<std::string>());
                res.rows.push_back(row_from_fields(f));
            }
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("results: ") + e.what());
        }
        return res;
    }
    std::istringstream in(text);
    std::string line;
    bool header_seen = false;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            const std::string body = line.substr(line.find_first_not_of("# "));
            if (auto p = body.find("schema_version="); p != std::string::npos)
                res.header.schema_version = std::stoi(body.substr(p + 15));
            else if (body.rfind("host_hash=", 0) == 0) res.header.host_hash = body.substr(10);
            else if (body.rfind("calibration=", 0) == 0) res.header.calibration = body.substr(12);
            else if (body.rfind("note=", 0) == 0) res.header.notes.push_back(body.substr(5));
            continue;
        }
        auto fields = csv_split(line);
        if (!header_seen) {
            if (fields != result_columns()) throw ParseError("unexpected CSV header");
            header_seen = true;
            continue;
        }
        try {
            res.rows.push_back(row_from_fields(fields));
        } catch (const ParseError& e) {
            throw ParseError("line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    if (!header_seen) throw ParseError("missing CSV header");
    if (res.header.schema_version != kSchemaVersion)
        throw ParseError("unsupported schema_version " + std::to_string(res.header.schema_version));
    return res;
}

ParsedResults load_results(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_results(ss.str());
}

namespace {

std::optional<ModelQuery> query_of(const ResultRow& r, const MachineDescription& desc) {
    auto op = try_parse<Operation>(r.operation);
    auto kernel = try_parse<KernelId>(r.kernel);
    if (!op || !kernel || r.threads.empty()) return std::nullopt;
    if (*kernel == KernelId::Contend || *kernel == KernelId::Unaligned || *kernel == KernelId::TwoOpCas)
        return std::nullopt;
    ModelQuery q;
    q.op = model_op(*op);
    q.state = r.state;
    q.level = r.level;
    q.locality = r.locality;
    q.operand_bits = r.operand_bits;
    try {
        for (CoreId s : r.sharers) q.sharers.push_back(classify(r.threads.front(), s, desc));
    } catch (const Error&) {
        return std::nullopt;
    }
    if (*kernel == KernelId::BwSweep) {
        const std::uint64_t stride = r.stride ? r.stride : r.operand_bits / 8;
        q.pattern = stride >= desc.line_size ? AccessPattern::OnePerLine : AccessPattern::Sequential;
    }
    return q;
}

} // namespace

std::vector<Observation> observations_from_rows(std::span<const ResultRow> rows, const MachineDescription& desc) {
    std::vector<Observation> out;
    for (const auto& r : rows) {
        if (r.unit != "ns/op") continue;
        auto q = query_of(r, desc);
        if (q) out.push_back({*q, r.median});
    }
    return out;
}

ComparisonReport compare(std::span<const ResultRow> rows, const ModelParams& params, const MachineDescription& desc,
                         double threshold, const ModelOptions& opt) {
    ComparisonReport rep;
    rep.threshold = threshold;
    struct Acc {
        std::string unit;
        std::vector<double> pred, meas;
    };
    std::map<std::string, Acc> groups;
    for (const auto& r : rows) {
        auto q = query_of(r, desc);
        std::string why;
        if (!q) {
            rep.skipped.push_back(r.kernel + "/" + r.operation + ": no model counterpart");
            continue;
        }
        double pred = 0.0;
        try {
            if (r.unit == "bytes/s") {
                pred = bandwidth(*q, params, desc, opt).value;
                if (q->pattern == AccessPattern::Sequential) {
                    // Sweeps count each line once; the model counts it once per operand.
                    pred /= static_cast<double>(desc.line_size * 8 / q->operand_bits);
                }
            } else {
                pred = latency(*q, params, desc, opt).value;
            }
        } catch (const InconsistentQuery& e) {
            rep.skipped.push_back(r.kernel + "/" + r.operation + ": " + e.what());
            continue;
        }
        std::string key = group_key(*q);
        if (r.unit == "bytes/s") key += "/" + to_string(q->pattern);
        auto& g = groups[key];
        g.unit = r.unit;
        g.pred.push_back(pred);
        g.meas.push_back(r.median);
    }
    if (groups.empty()) throw NoOverlap("no result row maps to a model query");
    for (const auto& [key, g] : groups) {
        GroupComparison c;
        c.key = key;
        c.unit = g.unit;
        c.n = g.meas.size();
        c.predicted = median(g.pred);
        c.measured = median(g.meas);
        c.nrmse = nrmse(g.pred, g.meas);
        c.flagged = c.nrmse > threshold;
        if (c.flagged) rep.flagged.push_back(key);
        rep.groups.push_back(std::move(c));
    }
    return rep;
}

std::string format_report(const ComparisonReport& r) {
    std::ostringstream os;
    os.precision(5);
    os << "group | unit | n | predicted | measured | nrmse\n";
    for (const auto& g : r.groups) {
        os << g.key << " | " << g.unit << " | " << g.n << " | " << g.predicted << " | " << g.measured << " | "
           << g.nrmse << (g.flagged ? "  FLAGGED" : "") << "\n";
    }
    os << "threshold " << r.threshold << ", flagged " << r.flagged.size() << " of " << r.groups.size() << "\n";
    for (const auto& s : r.skipped) os << "skipped: " << s << "\n";
    return os.str();
}

std::map<std::string, std::vector<std::pair<double, double>>> plot_series(std::span<const ResultRow> rows,
                                                                           const std::vector<std::string>& facets) {
    ResultRow probe;
    for (const auto& f : facets) row_field(probe, f);  // validates the keys
    std::map<std::string, std::vector<std::pair<double, double>>> out;
    for (const auto& r : rows) {
        std::string key = "series";
        for (const auto& f : facets) key += "_" + f + "-" + row_field(r, f);
        const double x = r.kernel == "contend" ? static_cast<double>(r.threads.size()) : static_cast<double>(r.buffer_size);
        out[key].emplace_back(x, r.median);
    }
    for (auto& [k, v] : out) std::sort(v.begin(), v.end());
    return out;
}

std::vector<std::filesystem::path> plotdata(std::span<const ResultRow> rows, const std::vector<std::string>& facets,
                                            const std::filesystem::path& dir) {
    auto series = plot_series(rows, facets);
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> paths;
    for (const auto& [key, pts] : series) {
        std::string name = key;
        for (char& ch : name) {
            if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '_' && ch != '.') ch = '_';
        }
        auto path = dir / (name + ".dat");
        std::ofstream out(path);
        if (!out) throw IoError("cannot write " + path.string());
        const std::string unit = rows.empty() ? "" : rows.front().unit;
        out << "# x median(" << unit << ")\n";
        for (const auto& [x, y] : pts) out << fmt_double(x) << " " << fmt_double(y) << "\n";
        paths.push_back(path);
    }
    return paths;
}

} // namespace atombench
