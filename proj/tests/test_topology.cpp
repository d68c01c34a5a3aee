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

#include "atombench/error.hpp"
#include "atombench/topology.hpp"

using namespace atombench;
namespace fs = std::filesystem;

namespace {

MachineDescription machine(const std::string& name) {
    return load(fs::path(ATOMBENCH_DATA_DIR) / "machines" / (name + ".json"));
}

std::string error_message(const std::string& text) {
    try {
        parse_description(text);
    } catch (const ValidationError& e) {
        return e.what();
    }
    return "no error";
}

const char* kTwoCore = R"({
  "name": "t", "cores": [0, 1], "line_size": 64,
  "levels": [
    {"level": 1, "capacity": 32768, "policy": "write-back", "inclusivity": "neither", "groups": [[0], [1]]},
    {"level": 2, "capacity": 262144, "policy": "write-back", "inclusivity": "neither", "groups": [[0], [1]]}
  ],
  "dies": [[0, 1]], "sockets": [[0]], "protocol": "MESI", "memory_channels": 1, "hugepage_size": 2097152
})";

void write(const fs::path& p, const std::string& text) {
    fs::create_directories(p.parent_path());
    std::ofstream(p) << text << "\n";
}

// Builds a sysfs-like tree: 4 cpus, private L1/L2, one L3 per package,
// two packages. `with_die` controls whether die_id files exist.
fs::path fake_sysfs(bool with_die) {
    const fs::path root = fs::temp_directory_path() / ("atombench_sysfs_" + std::to_string(with_die));
    fs::remove_all(root);
    write(root / "online", "0-3");
    for (int c = 0; c < 4; ++c) {
        const fs::path cpu = root / ("cpu" + std::to_string(c));
        const int pkg = c / 2;
        auto cache = [&](int idx, int level, const std::string& type, const std::string& size,
                         const std::string& shared) {
            const fs::path d = cpu / "cache" / ("index" + std::to_string(idx));
            write(d / "level", std::to_string(level));
            write(d / "type", type);
            write(d / "size", size);
            write(d / "shared_cpu_list", shared);
            write(d / "coherency_line_size", "64");
        };
        cache(0, 1, "Data", "32K", std::to_string(c));
        cache(1, 1, "Instruction", "32K", std::to_string(c));
        cache(2, 2, "Unified", "256K", std::to_string(c));
        cache(3, 3, "Unified", "8192K", pkg == 0 ? "0-1" : "2-3");
        write(cpu / "topology" / "physical_package_id", std::to_string(pkg));
        if (with_die) write(cpu / "topology" / "die_id", "0");
    }
    write(root / "cpuinfo", "processor\t: 0\nvendor_id\t: GenuineIntel\n");
    write(root / "meminfo", "MemTotal: 1000 kB\nHugepagesize:       2048 kB\n");
    return root;
}

} // namespace

TEST(Topology, ShippedDescriptionsLoadAndValidate) {
    for (auto name : {"haswell", "ivybridge", "bulldozer", "xeonphi"}) {
        const auto d = machine(name);
        EXPECT_NO_THROW(d.validate()) << name;
        EXPECT_EQ(d.line_size, 64u);
    }
}

TEST(Topology, HaswellDescription) {
    const auto d = machine("haswell");
    EXPECT_EQ(d.cores.size(), 4u);
    EXPECT_EQ(d.sockets.size(), 1u);
    ASSERT_TRUE(d.has_l3());
    EXPECT_EQ(d.level(3)->capacity, 8u << 20);
    EXPECT_EQ(d.level(3)->groups.size(), 1u);
    EXPECT_EQ(d.protocol, Protocol::MESIF);
}

TEST(Topology, BulldozerHasWriteThroughL1AndSharedL2) {
    const auto d = machine("bulldozer");
    EXPECT_EQ(d.cores.size(), 32u);
    EXPECT_EQ(d.level(1)->policy, UpdatePolicy::WriteThrough);
    EXPECT_TRUE(d.l1_write_through());
    EXPECT_TRUE(d.l2_shared());
    EXPECT_EQ(d.level(2)->capacity, 2u << 20);
    for (const auto& g : d.level(2)->groups) EXPECT_EQ(g.size(), 2u);
    EXPECT_EQ(classify(0, 1, d), LocalityClass::SameL2Group);
}

TEST(Topology, TwoDiesPerSocketPartitionEvenly) {
    const auto d = machine("bulldozer");
    ASSERT_EQ(d.sockets.size(), 2u);
    ASSERT_EQ(d.dies.size(), 4u);
    std::vector<int> seen(d.cores.size(), 0);
    for (const auto& die : d.dies) {
        EXPECT_EQ(die.size(), d.dies.front().size());
        for (CoreId c : die) ++seen[c];
    }
    for (int s : seen) EXPECT_EQ(s, 1);
    for (const auto& s : d.sockets) EXPECT_EQ(s.size(), 2u);
}

TEST(Topology, IvyBridgeCrossSocketIsOtherSocket) {
    const auto d = machine("ivybridge");
    const CoreId a = d.dies[0].front(), b = d.dies[1].front();
    EXPECT_EQ(classify(a, b, d), LocalityClass::OtherSocket);
    EXPECT_EQ(classify(a, d.dies[0].back(), d), LocalityClass::SameDie);
}

TEST(Topology, ClassifyIsSymmetricAndTotal) {
    for (auto name : {"haswell", "ivybridge", "bulldozer", "xeonphi"}) {
        const auto d = machine(name);
        for (CoreId a : d.cores) {
            EXPECT_EQ(classify(a, a, d), LocalityClass::SameCore);
            for (CoreId b : d.cores) EXPECT_EQ(classify(a, b, d), classify(b, a, d));
        }
    }
}

TEST(Topology, ClassifyRejectsUnknownCores) {
    const auto d = machine("haswell");
    EXPECT_THROW(classify(0, 99, d), UnknownCore);
}

TEST(Topology, SameSocketOtherDieOnBulldozer) {
    const auto d = machine("bulldozer");
    const CoreId a = d.dies[d.sockets[0][0]].front();
    const CoreId b = d.dies[d.sockets[0][1]].front();
    EXPECT_EQ(classify(a, b, d), LocalityClass::SameSocketOtherDie);
}

TEST(Topology, CanonicalTextRoundTripsByteForByte) {
    for (auto name : {"haswell", "ivybridge", "bulldozer", "xeonphi"}) {
        const auto d = machine(name);
        const std::string text = to_text(d);
        const auto again = parse_description(text);
        EXPECT_EQ(again, d);
        EXPECT_EQ(to_text(again), text);
        std::ifstream in(fs::path(ATOMBENCH_DATA_DIR) / "machines" / (std::string(name) + ".json"));
        std::stringstream ss;
        ss << in.rdbuf();
        EXPECT_EQ(ss.str(), text) << name;
    }
}

TEST(Topology, HashIsStableAndSensitive) {
    auto d = machine("haswell");
    EXPECT_EQ(d.hash(), machine("haswell").hash());
    EXPECT_EQ(d.hash().size(), 16u);
    d.memory_channels += 1;
    EXPECT_NE(d.hash(), machine("haswell").hash());
}

TEST(Topology, EmptyCoreListIsRejected) {
    std::string t = kTwoCore;
    t.replace(t.find("[0, 1], \"line"), 6, "[]");
    EXPECT_NE(error_message(t).find("cores-nonempty"), std::string::npos) << error_message(t);
}

TEST(Topology, NestingViolationIsNamed) {
    // L1 group {0,1} straddles the two private L2 groups.
    std::string t = kTwoCore;
    t.replace(t.find("\"groups\": [[0], [1]]"), 20, "\"groups\": [[0, 1]]");
    EXPECT_NE(error_message(t).find("level-nesting"), std::string::npos) << error_message(t);
}

TEST(Topology, NonPowerOfTwoLineIsRejected) {
    std::string t = kTwoCore;
    t.replace(t.find("\"line_size\": 64"), 15, "\"line_size\": 48");
    EXPECT_NE(error_message(t).find("line-size-power-of-two"), std::string::npos);
}

TEST(Topology, DiesMustPartitionCores) {
    std::string t = kTwoCore;
    t.replace(t.find("\"dies\": [[0, 1]]"), 16, "\"dies\": [[0]]");
    EXPECT_NE(error_message(t).find("dies-partition-cores"), std::string::npos);
}

TEST(Topology, MalformedJsonIsParseError) {
    EXPECT_THROW(parse_description("{\"cores\": [0,"), ParseError);
    EXPECT_THROW(parse_description("{\"cores\": \"zero\"}"), ParseError);
}

TEST(Topology, CpuListParsing) {
    EXPECT_EQ(parse_cpu_list("0-3,8,10-11"), (std::vector<CoreId>{0, 1, 2, 3, 8, 10, 11}));
    EXPECT_EQ(parse_cpu_list("5"), (std::vector<CoreId>{5}));
    EXPECT_TRUE(parse_cpu_list("").empty());
}

TEST(Topology, DetectFromFabricatedSysfs) {
    const auto root = fake_sysfs(true);
    const auto d = detect(root, root / "cpuinfo", root / "meminfo");
    EXPECT_EQ(d.cores.size(), 4u);
    ASSERT_EQ(d.levels.size(), 3u);
    EXPECT_EQ(d.level(1)->capacity, 32u * 1024);
    EXPECT_EQ(d.level(3)->groups.size(), 2u);
    EXPECT_EQ(d.sockets.size(), 2u);
    EXPECT_EQ(d.dies.size(), 2u);
    EXPECT_FALSE(d.dies_defaulted);
    EXPECT_EQ(d.protocol, Protocol::MESIF);
    EXPECT_EQ(d.hugepage_size, 2u << 20);
    EXPECT_EQ(classify(0, 2, d), LocalityClass::OtherSocket);
}

TEST(Topology, DetectDefaultsDiesToSocketsAndSaysSo) {
    const auto root = fake_sysfs(false);
    const auto d = detect(root, root / "cpuinfo", root / "meminfo");
    EXPECT_TRUE(d.dies_defaulted);
    EXPECT_EQ(d.dies.size(), d.sockets.size());
}

TEST(Topology, DetectWithoutMetadataIsUnavailable) {
    const auto root = fs::temp_directory_path() / "atombench_sysfs_empty";
    fs::create_directories(root);
    EXPECT_THROW(detect(root, root / "x", root / "y"), TopologyUnavailable);
}

TEST(Topology, DetectOnThisHostSatisfiesInvariants) {
    MachineDescription d;
    try {
        d = detect();
    } catch (const TopologyUnavailable&) {
        GTEST_SKIP() << "host exports no topology";
    }
    EXPECT_NO_THROW(d.validate());
    if (d.cores.size() == 1) {
        for (const auto& lv : d.levels) EXPECT_EQ(lv.groups.size(), 1u);
    }
    EXPECT_EQ(parse_description(to_text(d)), d);
}
