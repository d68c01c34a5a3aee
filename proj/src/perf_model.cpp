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

#include "atombench/perf_model.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "atombench/error.hpp"

namespace atombench {
namespace {

using nlohmann::json;

struct Acc {
    double value = 0.0;
    std::vector<Term> terms;
    void add(std::string name, double v) {
        value += v;
        terms.push_back({std::move(name), v});
    }
};

unsigned hops(LocalityClass loc, const ModelOptions& opt) {
    switch (loc) {
    case LocalityClass::SameSocketOtherDie: return 1;
    case LocalityClass::OtherSocket: return opt.other_socket_hops;
    default: return 0;
    }
}

double r_local(CacheLevel level, const ModelParams& p) {
    switch (level) {
    case CacheLevel::L1: return p.R_L1_l;
    case CacheLevel::L2: return p.R_L2_l;
    case CacheLevel::L3: return p.R_L3_l.value_or(0.0);
    case CacheLevel::Memory: break;
    }
    return 0.0;
}

std::string r_name(CacheLevel level) { return "R_" + to_string(level) + ",l"; }

void check(const ModelQuery& q, const ModelParams& p, const MachineDescription& desc) {
    auto fail = [](const std::string& why) { throw InconsistentQuery(why); };
    const bool shared = q.state == CoherencyState::S || q.state == CoherencyState::O;
    if (q.state == CoherencyState::O && desc.protocol != Protocol::MOESI) fail("state O needs a MOESI machine");
    if (shared && q.sharers.empty()) fail("S/O queries need at least one sharer");
    if (!shared && !q.sharers.empty()) fail("sharers given for a non-shared state");
    if ((q.state == CoherencyState::I) != (q.level == CacheLevel::Memory)) fail("state I goes with the memory level");
    if (q.level == CacheLevel::L3 && !desc.has_l3()) fail("machine has no L3");
    if (desc.has_l3() && !p.R_L3_l) fail("params lack R_L3,l for a machine with an L3");
    if (q.operand_bits != 64 && q.operand_bits != 128) fail("operand_bits must be 64 or 128");
    if (q.operand_bits == 128 && q.op != ModelOp::Cas) fail("128-bit operands only with CAS");
    if (is_atomic(q.op) && !p.E.count(q.op)) fail("params lack E(" + to_string(q.op) + ")");
    std::vector<LocalityClass> locs = q.sharers;
    locs.push_back(q.locality);
    for (auto loc : locs) {
        if (loc == LocalityClass::SameL2Group && !desc.l2_shared()) fail("same-L2-group locality on a private-L2 machine");
        if (loc == LocalityClass::SameSocketOtherDie) {
            bool multi = std::any_of(desc.sockets.begin(), desc.sockets.end(), [](const auto& s) { return s.size() > 1; });
            if (!multi) fail("no socket holds more than one die");
        }
        if (loc == LocalityClass::OtherSocket && desc.sockets.size() < 2) fail("machine has a single socket");
    }
}

// R(E/M) of a line at `level` held by a core at `loc`.
void exclusive_read(CacheLevel level, LocalityClass loc, CoherencyState state, const ModelParams& p,
                    const MachineDescription& desc, const ModelOptions& opt, Acc& acc, const std::string& prefix) {
    const unsigned k = hops(loc, opt);
    if (level == CacheLevel::Memory) {
        if (desc.has_l3()) acc.add(prefix + "R_L3,l", *p.R_L3_l);
        else acc.add(prefix + "R_L2,l", p.R_L2_l);
        acc.add(prefix + "M", p.M);
        if (k) acc.add(prefix + "H x" + std::to_string(k), k * p.H);
        return;
    }
    switch (loc) {
    case LocalityClass::SameCore:
        acc.add(prefix + r_name(level), r_local(level, p));
        return;
    case LocalityClass::SameL2Group:
        if (level == CacheLevel::L1) {
            acc.add(prefix + "2R_L2,l", 2 * p.R_L2_l);
            acc.add(prefix + "-R_L1,l", -p.R_L1_l);
        } else {
            acc.add(prefix + r_name(level), r_local(level, p));
        }
        return;
    default: break;
    }
    // Another core's caches, possibly on another die.
    if (level == CacheLevel::L3 && state == CoherencyState::M) {
        // Dirty lines are written back on eviction; no core snoop needed.
        acc.add(prefix + "R_L3,l", *p.R_L3_l);
    } else if (desc.has_l3()) {
        acc.add(prefix + "2R_L3,l", 2 * *p.R_L3_l);
        acc.add(prefix + "-R_L1,l", -p.R_L1_l);
    } else {
        acc.add(prefix + "2R_L2,l", 2 * p.R_L2_l);
        acc.add(prefix + "-R_L1,l", -p.R_L1_l);
        acc.add(prefix + "H", p.H);
    }
    if (k) acc.add(prefix + "H x" + std::to_string(k), k * p.H);
    if (k && state == CoherencyState::M && desc.protocol == Protocol::MESIF) acc.add(prefix + "M (writeback)", p.M);
}

Acc read_terms(const ModelQuery& q, const ModelParams& p, const MachineDescription& desc, const ModelOptions& opt) {
    check(q, p, desc);
    Acc acc;
    if (q.state == CoherencyState::S || q.state == CoherencyState::O) {
        exclusive_read(q.level, q.locality, CoherencyState::E, p, desc, opt, acc, "");
        std::size_t worst = 0;
        double worst_v = -1.0;
        std::vector<Acc> each;
        for (std::size_t i = 0; i < q.sharers.size(); ++i) {
            Acc a;
            exclusive_read(q.level, q.sharers[i], CoherencyState::E, p, desc, opt, a, "sharer: ");
            if (a.value > worst_v) {
                worst_v = a.value;
                worst = i;
            }
            each.push_back(std::move(a));
        }
        for (auto& t : each[worst].terms) acc.add(std::move(t.name), t.value);
    } else {
        exclusive_read(q.level, q.locality, q.state, p, desc, opt, acc, "");
    }
    return acc;
}

json o_to_json(const OTable& o) {
    json arr = json::array();
    for (const auto& [k, v] : o) {
        arr.push_back({{"op", k.op ? to_string(*k.op) : "any"},
                       {"state", to_string(k.state)},
                       {"locality", to_string(k.locality)},
                       {"level", to_string(k.level)},
                       {"value", v}});
    }
    return arr;
}

} // namespace

std::string to_string(const OKey& k) {
    return (k.op ? to_string(*k.op) : std::string("any")) + "/" + to_string(k.state) + "/" + to_string(k.locality) +
           "/" + to_string(k.level);
}

void ModelParams::validate() const {
    auto fail = [](const std::string& why) { throw ValidationError("params: " + why); };
    if (R_L1_l < 0 || R_L2_l < 0 || H < 0 || M < 0) fail("latencies must be >= 0");
    if (R_L1_l > R_L2_l) fail("R_L1,l <= R_L2,l");
    if (R_L3_l && (*R_L3_l < 0 || R_L2_l > *R_L3_l)) fail("R_L2,l <= R_L3,l");
    for (const auto& [op, v] : E) {
        if (v < 0) fail("E(" + to_string(op) + ") must be >= 0");
    }
    if (line_size == 0 || (line_size & (line_size - 1))) fail("line_size must be a power of two");
}

double ModelParams::o(ModelOp op, CoherencyState s, LocalityClass loc, CacheLevel level) const {
    if (auto it = O.find(OKey{op, s, loc, level}); it != O.end()) return it->second;
    if (auto it = O.find(OKey{std::nullopt, s, loc, level}); it != O.end()) return it->second;
    return 0.0;
}

double ModelParams::e(ModelOp op) const {
    auto it = E.find(op);
    return it == E.end() ? 0.0 : it->second;
}

ModelParams parse_params(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("params: ") + e.what());
    }
    ModelParams p;
    try {
        p.name = j.value("name", "");
        p.R_L1_l = j.at("R_L1_l").get<double>();
        p.R_L2_l = j.at("R_L2_l").get<double>();
        if (j.contains("R_L3_l") && !j["R_L3_l"].is_null()) p.R_L3_l = j["R_L3_l"].get<double>();
        p.H = j.value("H", 0.0);
        p.M = j.at("M").get<double>();
        for (const auto& [k, v] : j.at("E").items()) p.E[parse<ModelOp>(k)] = v.get<double>();
        if (j.contains("O")) {
            for (const auto& e : j["O"]) {
                OKey key;
                const auto op = e.at("op").get<std::string>();
                if (op != "any") key.op = parse<ModelOp>(op);
                key.state = parse<CoherencyState>(e.at("state").get<std::string>());
                key.locality = parse<LocalityClass>(e.at("locality").get<std::string>());
                key.level = parse<CacheLevel>(e.at("level").get<std::string>());
                p.O[key] = e.at("value").get<double>();
            }
        }
        p.line_size = j.value("line_size", std::size_t{64});
    } catch (const json::exception& e) {
        throw ParseError(std::string("params: ") + e.what());
    }
    p.validate();
    return p;
}

ModelParams load_params(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_params(ss.str());
}

std::string params_to_json(const ModelParams& p) {
    json j;
    j["name"] = p.name;
    j["R_L1_l"] = p.R_L1_l;
    j["R_L2_l"] = p.R_L2_l;
    j["R_L3_l"] = p.R_L3_l ? json(*p.R_L3_l) : json(nullptr);
    j["H"] = p.H;
    j["M"] = p.M;
    json e = json::object();
    for (const auto& [op, v] : p.E) e[to_string(op)] = v;
    j["E"] = e;
    j["O"] = o_to_json(p.O);
    j["line_size"] = p.line_size;
    return j.dump(2) + "\n";
}

void save_params(const ModelParams& p, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << params_to_json(p);
}

Prediction read_latency(const ModelQuery& q, const ModelParams& p, const MachineDescription& desc,
                        const ModelOptions& opt) {
    Acc acc = read_terms(q, p, desc, opt);
    return {acc.value, "ns", std::move(acc.terms), false};
}

Prediction latency(const ModelQuery& q, const ModelParams& p, const MachineDescription& desc,
                   const ModelOptions& opt) {
    Acc acc = read_terms(q, p, desc, opt);
    bool extrapolated = false;
    if (is_atomic(q.op)) {
        acc.add("E(" + to_string(q.op) + ")", p.e(q.op));
        if (opt.include_o) acc.add("O", p.o(q.op, q.state, q.locality, q.level));
    } else if (q.op == ModelOp::Write) {
        acc.add("store commit (R_L1,l)", p.R_L1_l);
        extrapolated = true;
    }
    return {acc.value, "ns", std::move(acc.terms), extrapolated};
}

Prediction bandwidth(const ModelQuery& q, const ModelParams& p, const MachineDescription& desc,
                     const ModelOptions& opt) {
    Prediction lat = latency(q, p, desc, opt);
    const double c = static_cast<double>(p.line_size);
    if (lat.value <= 0) throw InconsistentQuery("non-positive latency");
    Prediction out;
    out.unit = "bytes/s";
    out.extrapolated = lat.extrapolated;
    out.terms = lat.terms;
    out.terms.push_back({"L", lat.value});
    out.terms.push_back({"C_size", c});
    if (q.pattern == AccessPattern::OnePerLine) {
        out.value = c / lat.value * 1e9;
        return out;
    }
    const std::size_t line_bits = p.line_size * 8;
    if (line_bits % q.operand_bits) throw InconsistentQuery("operand size does not divide the line");
    const double n = static_cast<double>(line_bits / q.operand_bits);
    const double hit = desc.l1_write_through() ? p.R_L2_l : p.R_L1_l;
    const double repeat = hit + (is_atomic(q.op) ? p.e(q.op) : 0.0);
    out.terms.push_back({"N", n});
    out.terms.push_back({desc.l1_write_through() ? "repeat hit (R_L2,l + E)" : "repeat hit (R_L1,l + E)", repeat});
    out.value = n * c / (lat.value + (n - 1) * repeat) * 1e9;
    return out;
}

std::string format_prediction(const Prediction& pr) {
    std::ostringstream os;
    os.precision(6);
    if (pr.unit == "bytes/s") os << pr.value / 1e9 << " GB/s";
    else os << pr.value << " ns";
    if (pr.extrapolated) os << " (extrapolated)";
    os << "\n";
    for (const auto& t : pr.terms) os << "  " << t.name << " = " << t.value << "\n";
    return os.str();
}

} // namespace atombench
