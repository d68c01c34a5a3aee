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

#include "atombench/topology.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

namespace atombench {
namespace {

using nlohmann::json;

bool is_partition(const std::vector<CoreGroup>& groups, const std::vector<CoreId>& universe) {
    std::set<CoreId> seen;
    for (const auto& g : groups) {
        if (g.empty()) return false;
        for (CoreId c : g) {
            if (!seen.insert(c).second) return false;
        }
    }
    return seen == std::set<CoreId>(universe.begin(), universe.end());
}

bool is_subset(const CoreGroup& a, const CoreGroup& b) {
    return std::all_of(a.begin(), a.end(),
                       [&](CoreId c) { return std::find(b.begin(), b.end(), c) != b.end(); });
}

std::string group_text(const CoreGroup& g) {
    std::string s = "{";
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(g[i]);
    }
    return s + "}";
}

std::string read_trimmed(const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) return {};
    std::string s;
    std::getline(in, s);
    while (!s.empty() && (s.back() == '\n' || s.back() == '\r' || s.back() == ' ')) s.pop_back();
    return s;
}

std::uint64_t parse_size(std::string_view s) {
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc()) throw TopologyUnavailable("bad cache size '" + std::string(s) + "'");
    if (p != s.data() + s.size()) {
        switch (*p) {
        case 'K': v <<= 10; break;
        case 'M': v <<= 20; break;
        case 'G': v <<= 30; break;
        default: break;
        }
    }
    return v;
}

void write_int_array(std::ostream& os, const std::vector<std::uint32_t>& v) {
    os << "[";
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? ", " : "") << v[i];
    os << "]";
}

void write_groups(std::ostream& os, const std::vector<CoreGroup>& groups) {
    os << "[";
    for (std::size_t i = 0; i < groups.size(); ++i) {
        if (i) os << ", ";
        write_int_array(os, groups[i]);
    }
    os << "]";
}

template <typename T>
T required(const json& j, const char* key) {
    if (!j.contains(key)) throw ParseError(std::string("missing key '") + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ParseError(std::string("key '") + key + "': " + e.what());
    }
}

template <typename E>
E required_enum(const json& j, const char* key) {
    return parse<E>(required<std::string>(j, key));
}

} // namespace

void MachineDescription::validate() const {
    if (cores.empty()) throw ValidationError("cores-nonempty: the core list is empty");
    if (std::set<CoreId>(cores.begin(), cores.end()).size() != cores.size())
        throw ValidationError("cores-unique: duplicate core id");
    if (line_size == 0 || (line_size & (line_size - 1)) != 0)
        throw ValidationError("line-size-power-of-two: line_size=" + std::to_string(line_size));

    int prev = 0;
    for (const auto& lv : levels) {
        if (lv.level < 1 || lv.level > 3 || lv.level <= prev)
            throw ValidationError("levels-ordered: level indices must be increasing within 1..3");
        prev = lv.level;
        if (lv.capacity == 0)
            throw ValidationError("level-capacity-positive: L" + std::to_string(lv.level));
        if (!is_partition(lv.groups, cores))
            throw ValidationError("level-groups-partition-cores: L" + std::to_string(lv.level) +
                                  " sharing groups do not partition the cores");
    }
    for (std::size_t i = 0; i + 1 < levels.size(); ++i) {
        const auto& inner = levels[i];
        const auto& outer = levels[i + 1];
        for (const auto& g : inner.groups) {
            bool nested = std::any_of(outer.groups.begin(), outer.groups.end(),
                                      [&](const CoreGroup& o) { return is_subset(g, o); });
            if (!nested)
                throw ValidationError("level-nesting: L" + std::to_string(inner.level) + " group " +
                                      group_text(g) + " is not contained in any L" +
                                      std::to_string(outer.level) + " group");
        }
    }
    if (!is_partition(dies, cores)) throw ValidationError("dies-partition-cores");

    std::vector<CoreGroup> socket_dies;
    std::vector<CoreId> die_ids(dies.size());
    for (std::size_t i = 0; i < dies.size(); ++i) die_ids[i] = static_cast<CoreId>(i);
    for (const auto& s : sockets) socket_dies.emplace_back(s.begin(), s.end());
    if (!is_partition(socket_dies, die_ids)) throw ValidationError("sockets-partition-dies");
}

const CacheLevelInfo* MachineDescription::level(int index) const {
    for (const auto& lv : levels) {
        if (lv.level == index) return &lv;
    }
    return nullptr;
}

bool MachineDescription::l2_shared() const {
    const auto* l2 = level(2);
    if (!l2) return false;
    return std::any_of(l2->groups.begin(), l2->groups.end(), [](const CoreGroup& g) { return g.size() > 1; });
}

bool MachineDescription::l1_write_through() const {
    const auto* l1 = level(1);
    return l1 && l1->policy == UpdatePolicy::WriteThrough;
}

bool MachineDescription::contains(CoreId core) const {
    return std::find(cores.begin(), cores.end(), core) != cores.end();
}

std::size_t MachineDescription::die_of(CoreId core) const {
    for (std::size_t i = 0; i < dies.size(); ++i) {
        if (std::find(dies[i].begin(), dies[i].end(), core) != dies[i].end()) return i;
    }
    throw UnknownCore("core " + std::to_string(core) + " is on no die");
}

std::size_t MachineDescription::socket_of(CoreId core) const {
    const auto die = static_cast<std::uint32_t>(die_of(core));
    for (std::size_t i = 0; i < sockets.size(); ++i) {
        if (std::find(sockets[i].begin(), sockets[i].end(), die) != sockets[i].end()) return i;
    }
    throw UnknownCore("core " + std::to_string(core) + " is on no socket");
}

long MachineDescription::group_of(int lvl, CoreId core) const {
    const auto* lv = level(lvl);
    if (!lv) return -1;
    for (std::size_t i = 0; i < lv->groups.size(); ++i) {
        const auto& g = lv->groups[i];
        if (std::find(g.begin(), g.end(), core) != g.end()) return static_cast<long>(i);
    }
    return -1;
}

std::string MachineDescription::hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : to_text(*this)) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    std::ostringstream os;
    os << std::hex;
    os.width(16);
    os.fill('0');
    os << h;
    return os.str();
}

std::vector<CoreId> parse_cpu_list(std::string_view text) {
    std::vector<CoreId> out;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto comma = text.find(',', pos);
        auto item = text.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos);
        pos = comma == std::string_view::npos ? text.size() : comma + 1;
        while (!item.empty() && (item.back() == ' ' || item.back() == '\n')) item.remove_suffix(1);
        if (item.empty()) continue;
        auto dash = item.find('-');
        CoreId lo = 0, hi = 0;
        auto a = item.substr(0, dash);
        if (std::from_chars(a.data(), a.data() + a.size(), lo).ec != std::errc())
            throw ParseError("bad cpu list '" + std::string(text) + "'");
        hi = lo;
        if (dash != std::string_view::npos) {
            auto b = item.substr(dash + 1);
            if (std::from_chars(b.data(), b.data() + b.size(), hi).ec != std::errc() || hi < lo)
                throw ParseError("bad cpu list '" + std::string(text) + "'");
        }
        for (CoreId c = lo; c <= hi; ++c) out.push_back(c);
    }
    return out;
}

MachineDescription detect(const std::filesystem::path& root, const std::filesystem::path& cpuinfo,
                          const std::filesystem::path& meminfo) {
    namespace fs = std::filesystem;
    const auto online_text = read_trimmed(root / "online");
    if (online_text.empty()) throw TopologyUnavailable("no online cpu list under " + root.string());

    MachineDescription d;
    d.cores = parse_cpu_list(online_text);
    std::sort(d.cores.begin(), d.cores.end());
    const std::set<CoreId> online(d.cores.begin(), d.cores.end());

    struct LevelAcc {
        std::uint64_t capacity = 0;
        std::set<CoreGroup> groups;
    };
    std::map<int, LevelAcc> acc;
    std::map<std::pair<long, long>, CoreGroup> die_members;
    bool have_die_id = true;

    for (CoreId cpu : d.cores) {
        const auto cdir = root / ("cpu" + std::to_string(cpu));
        const auto cache_dir = cdir / "cache";
        if (!fs::is_directory(cache_dir))
            throw TopologyUnavailable("no cache metadata for cpu" + std::to_string(cpu));
        for (const auto& entry : fs::directory_iterator(cache_dir)) {
            const auto name = entry.path().filename().string();
            if (name.rfind("index", 0) != 0) continue;
            const auto type = read_trimmed(entry.path() / "type");
            if (type == "Instruction") continue;
            const auto level_text = read_trimmed(entry.path() / "level");
            if (level_text.empty()) continue;
            const int lvl = std::stoi(level_text);
            if (lvl < 1 || lvl > 3) continue;
            CoreGroup g;
            for (CoreId c : parse_cpu_list(read_trimmed(entry.path() / "shared_cpu_list"))) {
                if (online.count(c)) g.push_back(c);
            }
            std::sort(g.begin(), g.end());
            if (g.empty()) g.push_back(cpu);
            auto& a = acc[lvl];
            a.capacity = std::max(a.capacity, parse_size(read_trimmed(entry.path() / "size")));
            a.groups.insert(g);
            if (lvl == 1) {
                const auto ls = read_trimmed(entry.path() / "coherency_line_size");
                if (!ls.empty()) d.line_size = static_cast<std::uint32_t>(std::stoul(ls));
            }
        }
        const auto pkg_text = read_trimmed(cdir / "topology" / "physical_package_id");
        const long pkg = pkg_text.empty() ? 0 : std::stol(pkg_text);
        const auto die_text = read_trimmed(cdir / "topology" / "die_id");
        long die = 0;
        if (die_text.empty()) {
            have_die_id = false;
        } else {
            die = std::stol(die_text);
        }
        die_members[{pkg, die}].push_back(cpu);
    }
    if (acc.empty()) throw TopologyUnavailable("no data/unified caches exported");

    for (auto& [lvl, a] : acc) {
        CacheLevelInfo info;
        info.level = lvl;
        info.capacity = a.capacity;
        info.groups.assign(a.groups.begin(), a.groups.end());
        std::sort(info.groups.begin(), info.groups.end());
        d.levels.push_back(std::move(info));
    }

    if (!have_die_id) {
        // One die per socket when the OS does not export die boundaries.
        std::map<std::pair<long, long>, CoreGroup> per_socket;
        for (auto& [key, members] : die_members) {
            auto& dst = per_socket[{key.first, 0}];
            dst.insert(dst.end(), members.begin(), members.end());
        }
        die_members = std::move(per_socket);
        d.dies_defaulted = true;
    }
    std::map<long, std::vector<std::uint32_t>> socket_dies;
    for (auto& [key, members] : die_members) {
        std::sort(members.begin(), members.end());
        socket_dies[key.first].push_back(static_cast<std::uint32_t>(d.dies.size()));
        d.dies.push_back(members);
    }
    for (auto& [pkg, ds] : socket_dies) d.sockets.push_back(ds);

    std::ifstream ci(cpuinfo);
    for (std::string line; std::getline(ci, line);) {
        if (line.rfind("vendor_id", 0) == 0) {
            if (line.find("GenuineIntel") != std::string::npos) d.protocol = Protocol::MESIF;
            else if (line.find("AuthenticAMD") != std::string::npos) d.protocol = Protocol::MOESI;
            break;
        }
    }
    std::ifstream mi(meminfo);
    for (std::string line; std::getline(mi, line);) {
        if (line.rfind("Hugepagesize:", 0) == 0) {
            std::istringstream is(line.substr(13));
            std::uint64_t kb = 0;
            is >> kb;
            d.hugepage_size = kb * 1024;
        }
    }
    d.name = "detected";
    d.validate();
    return d;
}

MachineDescription parse_description(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(e.what());
    }
    if (!j.is_object()) throw ParseError("machine description must be a JSON object");

    MachineDescription d;
    d.name = j.value("name", std::string{});
    d.cores = required<std::vector<CoreId>>(j, "cores");
    d.line_size = required<std::uint32_t>(j, "line_size");
    if (!j.contains("levels") || !j["levels"].is_array()) throw ParseError("missing array 'levels'");
    for (const auto& lj : j["levels"]) {
        CacheLevelInfo lv;
        lv.level = required<int>(lj, "level");
        lv.capacity = required<std::uint64_t>(lj, "capacity");
        lv.policy = required_enum<UpdatePolicy>(lj, "policy");
        lv.inclusivity = required_enum<Inclusivity>(lj, "inclusivity");
        lv.groups = required<std::vector<CoreGroup>>(lj, "groups");
        d.levels.push_back(std::move(lv));
    }
    d.dies = required<std::vector<CoreGroup>>(j, "dies");
    d.sockets = required<std::vector<std::vector<std::uint32_t>>>(j, "sockets");
    d.protocol = required_enum<Protocol>(j, "protocol");
    d.memory_channels = j.value("memory_channels", 0u);
    d.hugepage_size = required<std::uint64_t>(j, "hugepage_size");
    d.dies_defaulted = j.value("dies_defaulted", false);
    d.validate();
    return d;
}

MachineDescription load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_description(ss.str());
}

std::string to_text(const MachineDescription& d) {
    std::ostringstream os;
    os << "{\n";
    os << "  \"name\": " << json(d.name).dump() << ",\n";
    os << "  \"cores\": ";
    write_int_array(os, d.cores);
    os << ",\n  \"line_size\": " << d.line_size << ",\n";
    os << "  \"levels\": [";
    for (std::size_t i = 0; i < d.levels.size(); ++i) {
        const auto& lv = d.levels[i];
        os << (i ? ",\n" : "\n") << "    {\"level\": " << lv.level << ", \"capacity\": " << lv.capacity
           << ", \"policy\": \"" << to_string(lv.policy) << "\", \"inclusivity\": \""
           << to_string(lv.inclusivity) << "\", \"groups\": ";
        write_groups(os, lv.groups);
        os << "}";
    }
    os << (d.levels.empty() ? "],\n" : "\n  ],\n");
    os << "  \"dies\": ";
    write_groups(os, d.dies);
    os << ",\n  \"sockets\": ";
    write_groups(os, d.sockets);
    os << ",\n  \"protocol\": \"" << to_string(d.protocol) << "\",\n";
    os << "  \"memory_channels\": " << d.memory_channels << ",\n";
    os << "  \"hugepage_size\": " << d.hugepage_size << ",\n";
    os << "  \"dies_defaulted\": " << (d.dies_defaulted ? "true" : "false") << "\n";
    os << "}\n";
    return os.str();
}

void save(const MachineDescription& desc, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << to_text(desc);
}

LocalityClass classify(CoreId requester, CoreId owner, const MachineDescription& desc) {
    if (!desc.contains(requester)) throw UnknownCore("core " + std::to_string(requester));
    if (!desc.contains(owner)) throw UnknownCore("core " + std::to_string(owner));
    if (requester == owner) return LocalityClass::SameCore;
    const long g2a = desc.group_of(2, requester);
    if (g2a >= 0 && g2a == desc.group_of(2, owner)) return LocalityClass::SameL2Group;
    if (desc.die_of(requester) == desc.die_of(owner)) return LocalityClass::SameDie;
    if (desc.socket_of(requester) == desc.socket_of(owner)) return LocalityClass::SameSocketOtherDie;
    return LocalityClass::OtherSocket;
}

} // namespace atombench
