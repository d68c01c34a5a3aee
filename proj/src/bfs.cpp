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

#include "atombench/bfs.hpp"

#include <algorithm>
#include <atomic>
#include <barrier>
#include <cassert>
#include <chrono>
#include <deque>
#include <numeric>
#include <random>
#include <thread>

#include "atombench/error.hpp"
#include "atombench/platform.hpp"

namespace atombench::bfs {

bool Graph::has_edge(Vertex u, Vertex v) const {
    auto b = adj.begin() + static_cast<std::ptrdiff_t>(offsets[u]);
    auto e = adj.begin() + static_cast<std::ptrdiff_t>(offsets[u + 1]);
    return std::binary_search(b, e, v);
}

Graph from_edges(std::uint64_t n, const std::vector<std::pair<Vertex, Vertex>>& edges) {
    Graph g;
    g.n = n;
    g.tuples = edges.size();
    std::vector<std::uint64_t> deg(n, 0);
    for (auto [u, v] : edges) {
        if (u >= n || v >= n) throw ValidationError("edge endpoint out of range");
        ++deg[u];
        if (u != v) ++deg[v];
    }
    g.offsets.assign(n + 1, 0);
    for (std::uint64_t i = 0; i < n; ++i) g.offsets[i + 1] = g.offsets[i] + deg[i];
    g.adj.resize(g.offsets[n]);
    std::vector<std::uint64_t> pos(g.offsets.begin(), g.offsets.end() - 1);
    for (auto [u, v] : edges) {
        g.adj[pos[u]++] = v;
        if (u != v) g.adj[pos[v]++] = u;
    }
    for (std::uint64_t i = 0; i < n; ++i)
        std::sort(g.adj.begin() + static_cast<std::ptrdiff_t>(g.offsets[i]),
                  g.adj.begin() + static_cast<std::ptrdiff_t>(g.offsets[i + 1]));
    return g;
}

Graph kronecker(unsigned scale, unsigned edgefactor, std::uint64_t seed) {
    if (scale < 1 || scale > 31) throw ValidationError("scale must be in [1, 31]");
    if (edgefactor < 1) throw ValidationError("edgefactor >= 1");
    const std::uint64_t n = std::uint64_t{1} << scale;
    const std::uint64_t m = std::max<std::uint64_t>(1, edgefactor * n / 2);
    constexpr double A = 0.57, B = 0.19, C = 0.19;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::vector<std::pair<Vertex, Vertex>> edges;
    edges.reserve(m);
    for (std::uint64_t e = 0; e < m; ++e) {
        Vertex u = 0, v = 0;
        for (unsigned bit = 0; bit < scale; ++bit) {
            const double r = uni(rng);
            const bool row = r >= A + B;
            const bool col = (r >= A && r < A + B) || r >= A + B + C;
            u = (u << 1) | (row ? 1u : 0u);
            v = (v << 1) | (col ? 1u : 0u);
        }
        edges.emplace_back(u, v);
    }
    std::vector<Vertex> perm(n);
    std::iota(perm.begin(), perm.end(), Vertex{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    for (auto& [u, v] : edges) {
        u = perm[u];
        v = perm[v];
    }
    return from_edges(n, edges);
}

namespace {

struct alignas(64) WorkerState {
    std::vector<Vertex> next;
    std::vector<std::pair<Vertex, std::int64_t>> repairs;
    std::uint64_t edges = 0, claims = 0, failed = 0, overwrites = 0, conflicts = 0;
};

} // namespace

BfsResult bfs(const Graph& g, Vertex root, Claim claim, unsigned workers, const std::vector<CoreId>& pin) {
    if (root >= g.n) throw InvalidRoot("root " + std::to_string(root) + " outside 0.." + std::to_string(g.n - 1));
    if (workers < 1) throw ValidationError("workers >= 1");

    std::vector<std::atomic<std::int64_t>> parent(g.n);
    for (auto& p : parent) p.store(-1, std::memory_order_relaxed);
    std::vector<std::uint32_t> level_of(g.n, ~0u);
    parent[root].store(root, std::memory_order_relaxed);
    level_of[root] = 0;

    std::vector<Vertex> frontier{root};
    std::vector<WorkerState> ws(workers);
    std::atomic<std::size_t> cursor{0};
    unsigned level = 0;
    bool done = false;
    std::chrono::steady_clock::time_point t0, t1;
    constexpr std::size_t kChunk = 64;
    std::vector<std::exception_ptr> errors(workers);

    auto end_of_level = [&]() noexcept {
        for (auto& w : ws) {
            for (auto [v, add] : w.repairs) parent[v].fetch_sub(add, std::memory_order_relaxed);
            w.repairs.clear();
        }
        frontier.clear();
        ++level;
        for (auto& w : ws) {
            for (Vertex v : w.next) level_of[v] = level;
            frontier.insert(frontier.end(), w.next.begin(), w.next.end());
            w.next.clear();
        }
        cursor.store(0, std::memory_order_relaxed);
        if (frontier.empty()) {
            done = true;
            t1 = std::chrono::steady_clock::now();
        }
    };
    std::barrier level_barrier(static_cast<std::ptrdiff_t>(workers), end_of_level);
    std::barrier start_barrier(static_cast<std::ptrdiff_t>(workers),
                               [&]() noexcept { t0 = std::chrono::steady_clock::now(); });

    auto body = [&](unsigned id) {
        if (!pin.empty()) {
            try {
                platform::pin_current_thread(pin[id % pin.size()]);
            } catch (...) {
                errors[id] = std::current_exception();  // still take part so the barriers complete
            }
        }
        WorkerState& w = ws[id];
        start_barrier.arrive_and_wait();
        while (!done) {
            for (;;) {
                const std::size_t begin = cursor.fetch_add(kChunk, std::memory_order_relaxed);
                if (begin >= frontier.size()) break;
                const std::size_t end = std::min(frontier.size(), begin + kChunk);
                for (std::size_t i = begin; i < end; ++i) {
                    const Vertex u = frontier[i];
                    for (std::uint64_t k = g.offsets[u]; k < g.offsets[u + 1]; ++k) {
                        const Vertex v = g.adj[k];
                        ++w.edges;
                        if (v == u || parent[v].load(std::memory_order_relaxed) != -1) continue;
                        switch (claim) {
                        case Claim::Cas: {
                            std::int64_t expected = -1;
                            if (parent[v].compare_exchange_strong(expected, u)) {
                                ++w.claims;
                                w.next.push_back(v);
                            } else {
                                ++w.failed;
                            }
                            break;
                        }
                        case Claim::Swp: {
                            const std::int64_t old = parent[v].exchange(u);
                            if (old == -1) {
                                ++w.claims;
                                w.next.push_back(v);
                            } else {
                                // Parents of earlier levels were visible before this level began.
                                assert(level_of[static_cast<Vertex>(old)] == level);
                                ++w.overwrites;
                            }
                            break;
                        }
                        case Claim::FaaRepair: {
                            const std::int64_t add = static_cast<std::int64_t>(u) + 1;
                            const std::int64_t old = parent[v].fetch_add(add);
                            if (old == -1) {
                                ++w.claims;
                                w.next.push_back(v);
                            } else {
                                ++w.conflicts;
                                w.repairs.emplace_back(v, add);
                            }
                            break;
                        }
                        }
                    }
                }
            }
            level_barrier.arrive_and_wait();
        }
    };

    std::vector<std::thread> threads;
    for (unsigned id = 0; id < workers; ++id) threads.emplace_back(body, id);
    for (auto& t : threads) t.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }

    BfsResult res;
    res.tree.root = root;
    res.tree.parent.resize(g.n);
    for (std::uint64_t v = 0; v < g.n; ++v) res.tree.parent[v] = parent[v].load(std::memory_order_relaxed);
    auto& s = res.stats;
    for (const auto& w : ws) {
        s.edges_examined += w.edges;
        s.claims += w.claims;
        s.failed_cas += w.failed;
        s.swp_overwrites += w.overwrites;
        s.faa_conflicts += w.conflicts;
    }
    s.levels = level;
    s.workers = workers;
    s.seconds = std::chrono::duration<double>(t1 - t0).count();
    s.teps = s.seconds > 0 ? static_cast<double>(s.edges_examined) / s.seconds : 0.0;
    return res;
}

Verdict validate(const Graph& g, Vertex root, const BfsTree& tree) {
    Verdict out;
    constexpr std::size_t kMaxReported = 50;
    std::uint64_t count = 0;
    auto bad = [&](std::string what) {
        out.valid = false;
        if (++count <= kMaxReported) out.violations.push_back(std::move(what));
    };
    if (root >= g.n) {
        bad("root " + std::to_string(root) + " out of range");
        return out;
    }
    if (tree.parent.size() != g.n) {
        bad("parent array has " + std::to_string(tree.parent.size()) + " entries, expected " + std::to_string(g.n));
        return out;
    }
    std::vector<std::int64_t> lvl(g.n, -1);
    std::deque<Vertex> q{root};
    lvl[root] = 0;
    while (!q.empty()) {
        const Vertex u = q.front();
        q.pop_front();
        for (std::uint64_t k = g.offsets[u]; k < g.offsets[u + 1]; ++k) {
            const Vertex v = g.adj[k];
            if (lvl[v] < 0) {
                lvl[v] = lvl[u] + 1;
                q.push_back(v);
            }
        }
    }
    if (tree.parent[root] != root) bad("parent[root] = " + std::to_string(tree.parent[root]) + ", expected the root");
    for (std::uint64_t v = 0; v < g.n; ++v) {
        const std::int64_t p = tree.parent[v];
        if (lvl[v] < 0) {
            if (p != -1) bad("unreachable vertex " + std::to_string(v) + " has parent " + std::to_string(p));
            continue;
        }
        ++out.reached;
        if (v == root) continue;
        if (p < 0 || static_cast<std::uint64_t>(p) >= g.n) {
            bad("reachable vertex " + std::to_string(v) + " has parent " + std::to_string(p));
            continue;
        }
        if (!g.has_edge(static_cast<Vertex>(p), static_cast<Vertex>(v)))
            bad("parent " + std::to_string(p) + " of " + std::to_string(v) + " is not a neighbor");
        if (lvl[p] != lvl[v] - 1)
            bad("parent " + std::to_string(p) + " of " + std::to_string(v) + " is at level " + std::to_string(lvl[p]) +
                ", expected " + std::to_string(lvl[v] - 1));
    }
    if (count > kMaxReported) out.violations.push_back(std::to_string(count - kMaxReported) + " more violations");
    return out;
}

} // namespace atombench::bfs
