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

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "atombench/types.hpp"

namespace atombench::bfs {

enum class Claim { Cas, Swp, FaaRepair };

} // namespace atombench::bfs

namespace atombench {

template <>
struct EnumNames<bfs::Claim> {
    static constexpr std::array<std::pair<bfs::Claim, std::string_view>, 3> table{{
        {bfs::Claim::Cas, "cas"},
        {bfs::Claim::Swp, "swp"},
        {bfs::Claim::FaaRepair, "faa"},
    }};
};

} // namespace atombench

namespace atombench::bfs {

using Vertex = std::uint32_t;

/// Undirected graph in CSR form; every edge is stored in both directions,
/// self-loops once. Adjacency lists are sorted.
struct Graph {
    std::uint64_t n = 0;
    std::vector<std::uint64_t> offsets;  // n + 1 entries
    std::vector<Vertex> adj;
    std::uint64_t tuples = 0;  // generated (u, v) pairs

    std::uint64_t edge_count() const { return adj.size(); }  // directed adjacency entries
    std::uint64_t degree(Vertex v) const { return offsets[v + 1] - offsets[v]; }
    bool has_edge(Vertex u, Vertex v) const;
};

Graph from_edges(std::uint64_t n, const std::vector<std::pair<Vertex, Vertex>>& edges);

/// Stochastic Kronecker graph with initiator (0.57, 0.19, 0.19, 0.05) and a
/// seeded vertex relabeling. Generates max(1, edgefactor * 2^scale / 2)
/// undirected tuples, i.e. about edgefactor * 2^scale adjacency entries.
Graph kronecker(unsigned scale, unsigned edgefactor, std::uint64_t seed);

struct BfsTree {
    std::vector<std::int64_t> parent;  // -1 = unreached
    Vertex root = 0;
};

struct BfsStats {
    double seconds = 0.0;
    std::uint64_t edges_examined = 0;  // one per directed examination
    double teps = 0.0;
    std::uint64_t claims = 0;          // successful claims
    std::uint64_t failed_cas = 0;
    std::uint64_t swp_overwrites = 0;  // swaps that displaced a same-level parent
    std::uint64_t faa_conflicts = 0;   // adds reverted after the level barrier
    unsigned levels = 0;
    unsigned workers = 0;
};

struct BfsResult {
    BfsTree tree;
    BfsStats stats;
};

/// Level-synchronous BFS; workers claim parents with the chosen atomic.
/// `pin` (optional) lists cores for the workers, cycled. Throws InvalidRoot.
BfsResult bfs(const Graph& g, Vertex root, Claim claim, unsigned workers, const std::vector<CoreId>& pin = {});

struct Verdict {
    bool valid = true;
    std::vector<std::string> violations;
    std::uint64_t reached = 0;
};

/// Checks a tree against levels from a sequential BFS.
Verdict validate(const Graph& g, Vertex root, const BfsTree& tree);

} // namespace atombench::bfs
