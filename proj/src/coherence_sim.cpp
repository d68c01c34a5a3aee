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

#include "atombench/coherence_sim.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "atombench/error.hpp"

namespace atombench::sim {
namespace {

using K = LineStateKind;

bool valid(K s) { return s != K::I; }
bool shared_kind(K s) { return s == K::S || s == K::O || s == K::F || s == K::OL || s == K::SL; }
bool dirty(K s) { return s == K::M || s == K::O || s == K::OL; }

} // namespace

void SimConfig::validate() const {
    if (dies < 1) throw ValidationError("dies >= 1");
    if (cores_per_die < 1) throw ValidationError("cores-per-die >= 1");
}

Simulator::Simulator(SimConfig cfg) : cfg_(cfg) { cfg_.validate(); }

LineState Simulator::line(std::uint64_t id) const {
    if (auto it = lines_.find(id); it != lines_.end()) return it->second;
    LineState ls;
    ls.state.assign(cfg_.cores(), K::I);
    ls.value.assign(cfg_.cores(), 0);
    return ls;
}

LineState& Simulator::touch(std::uint64_t id) {
    auto [it, fresh] = lines_.try_emplace(id);
    if (fresh) {
        it->second.state.assign(cfg_.cores(), K::I);
        it->second.value.assign(cfg_.cores(), 0);
    }
    return it->second;
}

void Simulator::set(LineState& ls, unsigned core, K s, StepResult& r) {
    if (ls.state[core] != s) {
        ls.state[core] = s;
        ++r.transitions;
    }
}

void Simulator::read(unsigned c, LineState& ls, StepResult& r) {
    if (valid(ls.state[c])) {
        r.observed = ls.value[c];
        return;
    }
    const unsigned n = cfg_.cores();
    const SimProtocol p = cfg_.protocol;
    int excl = -1;
    int any = -1;
    for (unsigned h = 0; h < n; ++h) {
        if (ls.state[h] == K::E || ls.state[h] == K::M) excl = static_cast<int>(h);
        if (valid(ls.state[h])) any = static_cast<int>(h);
    }
    std::uint64_t val = ls.memory;
    if (any < 0) {
        set(ls, c, K::E, r);
    } else if (excl >= 0) {
        const auto h = static_cast<unsigned>(excl);
        const bool same_die = cfg_.die_of(h) == cfg_.die_of(c);
        val = ls.value[h];
        if (ls.state[h] == K::E) {
            if (p == SimProtocol::MOESI_OLSL && same_die) {
                set(ls, h, K::SL, r);
                set(ls, c, K::SL, r);
            } else {
                set(ls, h, K::S, r);
                set(ls, c, p == SimProtocol::MESIF ? K::F : K::S, r);
            }
        } else if (p == SimProtocol::MESI || p == SimProtocol::MESIF) {
            ls.memory = val;
            ++r.writebacks;
            set(ls, h, K::S, r);
            set(ls, c, p == SimProtocol::MESIF ? K::F : K::S, r);
        } else if (p == SimProtocol::MOESI_OLSL && same_die) {
            set(ls, h, K::OL, r);
            set(ls, c, K::SL, r);
        } else {
            set(ls, h, K::O, r);
            set(ls, c, K::S, r);
        }
    } else {
        val = ls.value[static_cast<unsigned>(any)];
        bool local_kind = false, confined = true;
        for (unsigned h = 0; h < n; ++h) {
            if (ls.state[h] == K::OL || ls.state[h] == K::SL) {
                local_kind = true;
                confined &= cfg_.die_of(h) == cfg_.die_of(c);
            }
        }
        if (p == SimProtocol::MESIF) {
            for (unsigned h = 0; h < n; ++h) {
                if (ls.state[h] == K::F) set(ls, h, K::S, r);
            }
            set(ls, c, K::F, r);
        } else if (local_kind && confined) {
            set(ls, c, K::SL, r);
        } else if (local_kind) {
            // Sharing leaves the die: fall back to the plain states.
            for (unsigned h = 0; h < n; ++h) {
                if (ls.state[h] == K::OL) set(ls, h, K::O, r);
                if (ls.state[h] == K::SL) set(ls, h, K::S, r);
            }
            set(ls, c, K::S, r);
        } else {
            set(ls, c, K::S, r);
        }
    }
    ls.value[c] = val;
    r.observed = val;
}

void Simulator::invalidate_others(unsigned c, LineState& ls, std::uint64_t id, StepResult& r) {
    const unsigned n = cfg_.cores();
    const unsigned my_die = cfg_.die_of(c);
    bool shared = false, local_kind = false;
    std::vector<unsigned> holders;
    for (unsigned h = 0; h < n; ++h) {
        shared |= shared_kind(ls.state[h]);
        local_kind |= ls.state[h] == K::OL || ls.state[h] == K::SL;
        if (h != c && valid(ls.state[h])) holders.push_back(h);
    }
    enum class Mode { Directed, DieConfined, Broadcast } mode = Mode::Directed;
    if (shared) {
        switch (cfg_.protocol) {
        case SimProtocol::MESI:
        case SimProtocol::MESIF: mode = Mode::Directed; break;
        case SimProtocol::MOESI: mode = Mode::Broadcast; break;
        case SimProtocol::MOESI_OLSL: mode = local_kind ? Mode::DieConfined : Mode::Broadcast; break;
        case SimProtocol::MOESI_HTAssist: mode = tracked(id) ? Mode::DieConfined : Mode::Broadcast; break;
        }
    }
    auto emit = [&](Message m) {
        if (m.remote) ++stats_.remote_die_invalidations;
        else ++stats_.local_invalidations;
        r.messages.push_back(m);
    };
    std::vector<bool> die_hit(cfg_.dies, false);
    for (unsigned h : holders) {
        const unsigned d = cfg_.die_of(h);
        if (mode == Mode::Directed || d == my_die) emit({d, d != my_die, false, static_cast<int>(h)});
        else die_hit[d] = true;
        set(ls, h, K::I, r);
    }
    if (mode == Mode::DieConfined) {
        for (unsigned d = 0; d < cfg_.dies; ++d) {
            if (die_hit[d]) emit({d, true, false, -1});
        }
    } else if (mode == Mode::Broadcast) {
        ++stats_.broadcasts;
        for (unsigned d = 0; d < cfg_.dies; ++d) {
            if (d != my_die) emit({d, true, true, -1});
        }
    }
}

void Simulator::write(unsigned c, LineState& ls, std::uint64_t id, StepResult& r) {
    const K s = ls.state[c];
    if (s != K::M && s != K::E) invalidate_others(c, ls, id, r);
    set(ls, c, K::M, r);
    const std::uint64_t tag = next_tag_++;
    ls.value[c] = tag;
    last_written_[id] = tag;
}

void Simulator::evict(unsigned c, LineState& ls, StepResult& r) {
    const K s = ls.state[c];
    if (!valid(s)) return;
    if (dirty(s)) {
        ls.memory = ls.value[c];
        ++r.writebacks;
    }
    if (s == K::OL) {
        for (unsigned h = 0; h < cfg_.cores(); ++h) {
            if (ls.state[h] == K::SL) set(ls, h, K::S, r);
        }
    }
    set(ls, c, K::I, r);
}

void Simulator::update_directory(std::uint64_t id, const LineState& ls) {
    bool any = false, exclusive = false, one_die = true;
    unsigned die = 0;
    for (unsigned h = 0; h < cfg_.cores(); ++h) {
        if (!valid(ls.state[h])) continue;
        if (ls.state[h] == K::E || ls.state[h] == K::M) exclusive = true;
        if (!any) die = cfg_.die_of(h);
        else one_die &= cfg_.die_of(h) == die;
        any = true;
    }
    auto it = dir_stamp_.find(id);
    const bool want = any && !exclusive && one_die;
    if (!want) {
        if (it != dir_stamp_.end()) {
            dir_order_.erase({it->second, id});
            dir_stamp_.erase(it);
        }
        return;
    }
    if (it != dir_stamp_.end()) {
        dir_order_.erase({it->second, id});
        it->second = ++clock_;
        dir_order_.insert({it->second, id});
        return;
    }
    if (cfg_.directory_capacity == 0) return;
    if (dir_stamp_.size() >= cfg_.directory_capacity) {
        auto victim = dir_order_.begin();
        dir_stamp_.erase(victim->second);
        dir_order_.erase(victim);
        ++stats_.directory_evictions;
    }
    dir_stamp_[id] = ++clock_;
    dir_order_.insert({clock_, id});
}

StepResult Simulator::step(const TraceEvent& ev) {
    if (ev.core >= cfg_.cores())
        throw ValidationError("event core " + std::to_string(ev.core) + " outside " + std::to_string(cfg_.cores()) +
                              " cores");
    LineState& ls = touch(ev.line);
    StepResult r;
    const std::uint64_t expect = last_written_.count(ev.line) ? last_written_[ev.line] : 0;
    switch (ev.op) {
    case TraceOp::Read:
        read(ev.core, ls, r);
        break;
    case TraceOp::Atomic:
        // One read-for-ownership: take the current value, then invalidate like a write.
        r.observed = ls.memory;
        for (unsigned h = 0; h < cfg_.cores(); ++h) {
            if (valid(ls.state[h])) r.observed = ls.value[h];
        }
        if (valid(ls.state[ev.core])) r.observed = ls.value[ev.core];
        write(ev.core, ls, ev.line, r);
        break;
    case TraceOp::Write: write(ev.core, ls, ev.line, r); break;
    case TraceOp::Evict: evict(ev.core, ls, r); break;
    }
    if ((ev.op == TraceOp::Read || ev.op == TraceOp::Atomic) && r.observed != expect)
        throw ProtocolViolation("core " + std::to_string(ev.core) + " read a stale value of line " +
                                std::to_string(ev.line));
    if (cfg_.protocol == SimProtocol::MOESI_HTAssist && r.transitions) update_directory(ev.line, ls);
    check_invariants(ev.line);
    ++stats_.events;
    stats_.state_transitions += r.transitions;
    stats_.writebacks += r.writebacks;
    return r;
}

void Simulator::check_invariants(std::uint64_t id) const {
    auto it = lines_.find(id);
    if (it == lines_.end()) return;
    const LineState& ls = it->second;
    auto fail = [&](const std::string& what) {
        throw ProtocolViolation("line " + std::to_string(id) + ": " + what);
    };
    unsigned excl = 0, owners = 0, fwd = 0, valid_n = 0, local_n = 0, plain_shared = 0;
    bool one_die = true;
    int local_die = -1;
    const bool moesi = cfg_.protocol == SimProtocol::MOESI || cfg_.protocol == SimProtocol::MOESI_OLSL ||
                       cfg_.protocol == SimProtocol::MOESI_HTAssist;
    bool has_dirty = false;
    for (unsigned h = 0; h < cfg_.cores(); ++h) {
        const K s = ls.state[h];
        if (!valid(s)) continue;
        ++valid_n;
        has_dirty |= dirty(s);
        if (s == K::M || s == K::E) ++excl;
        if (s == K::O || s == K::OL) ++owners;
        if (s == K::F) ++fwd;
        if (s == K::S || s == K::O) ++plain_shared;
        if (s == K::O && !moesi) fail("O outside MOESI");
        if (s == K::F && cfg_.protocol != SimProtocol::MESIF) fail("F outside MESIF");
        if ((s == K::OL || s == K::SL) && cfg_.protocol != SimProtocol::MOESI_OLSL) fail("OL/SL outside OLSL");
        if (s == K::OL || s == K::SL) {
            ++local_n;
            const int d = static_cast<int>(cfg_.die_of(h));
            if (local_die >= 0 && d != local_die) one_die = false;
            local_die = d;
        }
    }
    if (excl > 1 || (excl == 1 && valid_n > 1)) fail("M/E not exclusive");
    if (owners > 1) fail("more than one owner");
    if (fwd > 1) fail("more than one forwarder");
    if (!one_die) fail("OL/SL copies on two dies");
    if (local_n && plain_shared) fail("OL/SL mixed with S/O");
    std::uint64_t v = 0;
    bool first = true;
    for (unsigned h = 0; h < cfg_.cores(); ++h) {
        if (!valid(ls.state[h])) continue;
        if (!first && ls.value[h] != v) fail("copies disagree");
        v = ls.value[h];
        first = false;
    }
    if (!first && !has_dirty && v != ls.memory) fail("clean copies differ from memory");
}

SimStats replay(std::span<const TraceEvent> trace, const SimConfig& cfg) {
    Simulator s(cfg);
    for (const auto& ev : trace) s.step(ev);
    return s.stats();
}

std::string stats_to_json(const SimStats& s, const SimConfig& cfg) {
    nlohmann::ordered_json j;
    j["protocol"] = to_string(cfg.protocol);
    j["dies"] = cfg.dies;
    j["cores_per_die"] = cfg.cores_per_die;
    if (cfg.protocol == SimProtocol::MOESI_HTAssist) j["directory_capacity"] = cfg.directory_capacity;
    j["events"] = s.events;
    j["remote_die_invalidations"] = s.remote_die_invalidations;
    j["local_invalidations"] = s.local_invalidations;
    j["state_transitions"] = s.state_transitions;
    j["writebacks"] = s.writebacks;
    j["broadcasts"] = s.broadcasts;
    j["directory_evictions"] = s.directory_evictions;
    return j.dump(2) + "\n";
}

std::vector<TraceEvent> parse_trace(const std::string& text) {
    std::vector<TraceEvent> out;
    std::istringstream in(text);
    std::string raw;
    for (std::size_t lineno = 1; std::getline(in, raw); ++lineno) {
        if (auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
        std::istringstream ls(raw);
        std::string core, op, line, extra;
        if (!(ls >> core)) continue;
        auto bad = [&](const std::string& why) {
            throw ParseError("trace line " + std::to_string(lineno) + ": " + why);
        };
        if (!(ls >> op >> line)) bad("expected `core op line`");
        if (ls >> extra) bad("trailing field '" + extra + "'");
        TraceEvent ev;
        try {
            std::size_t used = 0;
            ev.core = static_cast<unsigned>(std::stoul(core, &used));
            if (used != core.size()) bad("bad core '" + core + "'");
            ev.line = std::stoull(line, &used);
            if (used != line.size()) bad("bad line '" + line + "'");
        } catch (const std::logic_error&) {
            bad("bad number");
        }
        auto parsed = try_parse<TraceOp>(op);
        if (!parsed) bad("unknown op '" + op + "'");
        ev.op = *parsed;
        out.push_back(ev);
    }
    return out;
}

std::vector<TraceEvent> load_trace(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_trace(ss.str());
}

std::string trace_to_text(std::span<const TraceEvent> trace) {
    std::string out;
    for (const auto& ev : trace)
        out += std::to_string(ev.core) + " " + to_string(ev.op) + " " + std::to_string(ev.line) + "\n";
    return out;
}

std::vector<TraceEvent> die_local_producer_consumer_trace() {
    // Cores 0,1 on die 0 and 2,3 on die 1; each pair streams over its own four lines.
    std::vector<TraceEvent> t;
    for (unsigned i = 0; i < 25; ++i) {
        const std::uint64_t a = i % 4, b = 100 + i % 4;
        t.push_back({0, TraceOp::Write, a});
        t.push_back({1, TraceOp::Read, a});
        t.push_back({2, TraceOp::Write, b});
        t.push_back({3, TraceOp::Read, b});
    }
    return t;
}

std::vector<TraceEvent> random_trace(const SimConfig& cfg, std::size_t events, std::uint64_t lines,
                                     std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<unsigned> core(0, cfg.cores() - 1);
    std::uniform_int_distribution<std::uint64_t> line(0, lines - 1);
    std::discrete_distribution<int> op({50, 20, 15, 15});
    std::vector<TraceEvent> t;
    t.reserve(events);
    for (std::size_t i = 0; i < events; ++i) {
        const TraceOp o = static_cast<TraceOp>(op(rng));
        t.push_back({core(rng), o, line(rng)});
    }
    return t;
}

} // namespace atombench::sim
