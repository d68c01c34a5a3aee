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

#include <algorithm>
#include <cstring>
#include <functional>
#include <thread>
#include <vector>

#include "atombench/coherency_prep.hpp"
#include "atombench/error.hpp"
#include "atombench/kernels.hpp"
#include "atombench/platform.hpp"
#include "atombench/timing.hpp"

using namespace atombench;

namespace {

constexpr std::size_t kLine = 64;

std::vector<std::byte> bytes(std::size_t n) { return std::vector<std::byte>(n); }

// Line-aligned storage, for kernels whose address geometry matters.
AlignedBuffer lines(std::size_t n) {
    AlignedBuffer b(n, false, 0);
    fill_zeros(b.bytes());
    return b;
}

std::uint64_t word(const std::vector<std::byte>& b, std::size_t off) {
    std::uint64_t v;
    std::memcpy(&v, b.data() + off, sizeof v);
    return v;
}

// Every cycle property, checked independently of the generator.
void expect_cycle(const ChasePattern& p, std::size_t min_gap) {
    ASSERT_EQ(p.order.size(), p.slots);
    std::vector<bool> seen(p.slots, false);
    for (auto s : p.order) {
        ASSERT_LT(s, p.slots);
        ASSERT_FALSE(seen[s]) << "slot " << s << " visited twice";
        seen[s] = true;
    }
    for (std::size_t i = 0; i < p.slots; ++i) {
        const auto a = p.order[i], b = p.order[(i + 1) % p.slots];
        const std::size_t d = (a > b ? a - b : b - a) * p.slot_bytes;
        ASSERT_GE(d, min_gap) << "pair " << i;
    }
    // Following successors from slot 0 returns after exactly `slots` steps.
    const auto next = p.successors();
    std::size_t s = p.order[0], steps = 0;
    do {
        s = next[s];
        ++steps;
    } while (s != p.order[0] && steps <= p.slots);
    EXPECT_EQ(steps, p.slots);
}

// Median ns/op of `reps` runs of `body`, which returns the op count.
double median_ns_per_op(const TimerCalibration& cal, int reps, const std::function<std::uint64_t()>& body) {
    std::vector<double> v;
    for (int i = 0; i < reps; ++i) {
        const Ticks t0 = now();
        const auto ops = body();
        const Ticks t1 = now();
        v.push_back(cal.duration_ns(t1 - t0) / static_cast<double>(ops));
    }
    std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
    return v[v.size() / 2];
}

const TimerCalibration& cal() {
    static const TimerCalibration c = calibrate();
    return c;
}

} // namespace

TEST(Chase, SmallCycles) {
    expect_cycle(gen_chase(4, kLine, kLine, 1), kLine);
    const auto two = gen_chase(2, kLine, kLine, 99);
    expect_cycle(two, kLine);
    EXPECT_NE(two.order[0], two.order[1]);
}

TEST(Chase, FourThousandSlotsTwoLineStride) {
    const auto p = gen_chase(4096, 2 * kLine, kLine, 7);
    expect_cycle(p, 2 * kLine);
}

TEST(Chase, RandomSizesAndStrides) {
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        const std::size_t slots = 5 + seed * 37 % 3000;
        const std::size_t k = 1 + seed % 3;
        if (k >= 2 && slots < 2 * k + 1) continue;
        expect_cycle(gen_chase(slots, k * kLine, kLine, seed), k * kLine);
    }
}

TEST(Chase, DeterministicPerSeed) {
    EXPECT_EQ(gen_chase(1000, 2 * kLine, kLine, 5).order, gen_chase(1000, 2 * kLine, kLine, 5).order);
    EXPECT_NE(gen_chase(1000, kLine, kLine, 5).order, gen_chase(1000, kLine, kLine, 6).order);
}

TEST(Chase, InfeasibleStride) {
    EXPECT_THROW(gen_chase(1, kLine, kLine, 0), InfeasibleStride);
    EXPECT_THROW(gen_chase(4, 2 * kLine, kLine, 0), InfeasibleStride);
    EXPECT_THROW(gen_chase(10, kLine, 0, 0), InfeasibleStride);
    expect_cycle(gen_chase(5, 2 * kLine, kLine, 0), 2 * kLine);
}

TEST(Chase, ChunkedKeepsChunkGeometry) {
    const auto p = gen_chunked(64, 512, kLine, 3);
    EXPECT_TRUE(p.chunked);
    EXPECT_EQ(p.chunk_size, 512u);
    EXPECT_EQ(p.slot_bytes, 512u);
    expect_cycle(p, kLine);
}

TEST(LatencyKernel, ReadFollowsTheWholeCycle) {
    const auto p = gen_chase(512, kLine, kLine, 11);
    auto b = bytes(512 * kLine);
    write_chase(b, p);
    const auto before = b;
    const auto r = latency_kernel(Operation::Read, b, p);
    EXPECT_EQ(r.ops, 512u);
    EXPECT_EQ(b, before);
}

TEST(LatencyKernel, CasFailAlwaysFails) {
    const auto p = gen_chase(1024, kLine, kLine, 2);
    auto b = bytes(1024 * kLine);
    fill_incrementing_bytes(b);
    write_chase(b, p);
    const auto before = b;
    const auto r = latency_kernel(Operation::CasFail, b, p);
    EXPECT_EQ(r.failures, r.ops);
    EXPECT_EQ(r.successes, 0u);
    EXPECT_EQ(b, before);
}

TEST(LatencyKernel, CasSucceedAlwaysSucceeds) {
    const auto p = gen_chunked(256, 256, kLine, 4);
    auto b = bytes(256 * 256);
    const auto r = latency_kernel(Operation::CasSucceed, b, p);
    EXPECT_EQ(r.successes, r.ops);
    EXPECT_EQ(r.failures, 0u);
    EXPECT_EQ(r.ops, 256u);
    EXPECT_THROW(latency_kernel(Operation::CasSucceed, b, gen_chase(256, kLine, 256, 4)), PreconditionError);
}

TEST(LatencyKernel, FaaWithZeroAddendLeavesBufferUnchanged) {
    const auto p = gen_chase(777, kLine, kLine, 8);
    auto b = bytes(777 * kLine);
    write_chase(b, p);
    const auto before = b;
    EXPECT_EQ(latency_kernel(Operation::Faa, b, p).ops, 777u);
    EXPECT_EQ(b, before);
}

TEST(LatencyKernel, SwapVisitsEverySlotOnce) {
    const auto p = gen_chase(300, kLine, kLine, 9);
    auto b = bytes(300 * kLine);
    write_chase(b, p);
    latency_kernel(Operation::Swp, b, p);
    // Each slot now holds its own index, tagged.
    for (std::size_t s = 0; s < 300; ++s) EXPECT_EQ(word(b, s * kLine), s | (1ULL << 62));
}

TEST(LatencyKernel, RejectsBrokenInputs) {
    const auto p = gen_chase(16, kLine, kLine, 1);
    auto small = bytes(8 * kLine);
    EXPECT_THROW(latency_kernel(Operation::Read, small, p), PreconditionError);
    auto zero = bytes(16 * kLine);
    for (std::size_t s = 0; s < 16; ++s) std::memset(zero.data() + s * kLine, 0xff, 8);
    EXPECT_THROW(latency_kernel(Operation::Read, zero, p), PreconditionError);
    auto ok = bytes(16 * kLine);
    write_chase(ok, p);
    EXPECT_THROW(latency_kernel(Operation::Write, ok, p), PreconditionError);
}

TEST(BandwidthKernel, FaaIncrementsEveryWordOncePerPass) {
    auto b = bytes(1024 * 8);
    fill_incrementing_bytes(b);
    const auto before = b;
    for (int pass = 0; pass < 3; ++pass) {
        const auto r = bandwidth_kernel(Operation::Faa, b, 8, kLine, 5);
        EXPECT_EQ(r.ops, 1024u);
    }
    for (std::size_t i = 0; i < 1024; ++i) EXPECT_EQ(word(b, i * 8), word(before, i * 8) + 15);
}

TEST(BandwidthKernel, SwapLeavesTheInjectedSequence) {
    auto b = bytes(4096);
    fill_incrementing_bytes(b);
    bandwidth_kernel(Operation::Swp, b, 64, kLine, 1, 1000);
    for (std::size_t i = 0; i < 64; ++i) EXPECT_EQ(word(b, i * 64), 1000 + i);
}

TEST(BandwidthKernel, ByteAccountingCountsDistinctLines) {
    auto b = bytes(1u << 16);
    const auto dense = bandwidth_kernel(Operation::Read, b, 8, kLine);
    EXPECT_EQ(dense.ops, (1u << 16) / 8);
    EXPECT_EQ(dense.bytes_counted, 1u << 16);
    const auto sparse = bandwidth_kernel(Operation::Read, b, 128, kLine);
    EXPECT_EQ(sparse.bytes_counted, (1u << 16) / 128 * kLine);
    EXPECT_THROW(bandwidth_kernel(Operation::Read, b, 12, kLine), PreconditionError);
}

TEST(BandwidthKernel, CasOutcomes) {
    auto zeros = bytes(8192);
    const auto s = bandwidth_kernel(Operation::CasSucceed, zeros, 8, kLine);
    EXPECT_EQ(s.successes, s.ops);
    auto inc = bytes(8192);
    fill_incrementing_bytes(inc);
    const auto before = inc;
    const auto f = bandwidth_kernel(Operation::CasFail, inc, 8, kLine);
    EXPECT_EQ(f.failures, f.ops);
    EXPECT_EQ(inc, before);
}

TEST(Contention, SingleThreadFaaCountsItsOwnOps) {
    alignas(64) std::uint64_t w = 0;
    const auto r = contention_kernel(Operation::Faa, &w, now() + cal().from_ns(2e6), kLine);
    EXPECT_EQ(w, r.ops);
    EXPECT_EQ(r.bytes_counted, r.ops * kLine);
}

TEST(Contention, NoLostUpdates) {
    for (int threads : {1, 2, 4, 8}) {
        alignas(64) std::uint64_t w = 0;
        std::vector<std::uint64_t> ops(static_cast<std::size_t>(threads));
        const Ticks deadline = now() + cal().from_ns(5e6);
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t)
            pool.emplace_back([&, t] { ops[static_cast<std::size_t>(t)] = contention_kernel(Operation::Faa, &w, deadline, kLine).ops; });
        for (auto& th : pool) th.join();
        std::uint64_t sum = 0;
        for (auto o : ops) sum += o;
        EXPECT_EQ(w, sum) << threads << " threads";
    }
}

TEST(Contention, CasAccountingAcrossTwoThreads) {
    alignas(64) std::uint64_t w = 0;
    KernelResult r[2];
    const Ticks deadline = now() + cal().from_ns(5e6);
    std::thread a([&] { r[0] = contention_kernel(Operation::CasSucceed, &w, deadline, kLine); });
    std::thread b([&] { r[1] = contention_kernel(Operation::CasSucceed, &w, deadline, kLine); });
    a.join();
    b.join();
    for (const auto& x : r) EXPECT_EQ(x.successes + x.failures, x.ops);
    EXPECT_EQ(w, r[0].successes + r[1].successes);
}

TEST(Operand128, CasOutcomes) {
    if (!cas128_supported()) {
        auto b = bytes(4096);
        EXPECT_THROW(operand128_kernel(Operation::CasFail, b, gen_chase(64, kLine, kLine, 1)), CapabilityMissing);
        GTEST_SKIP() << "no cmpxchg16b";
    }
    const auto p = gen_chase(256, kLine, kLine, 1);
    std::vector<std::byte> b(256 * kLine + 64);
    auto* aligned = reinterpret_cast<std::byte*>((reinterpret_cast<std::uintptr_t>(b.data()) + 63) & ~std::uintptr_t{63});
    std::span<std::byte> s{aligned, 256 * kLine};
    write_chase128(s, p);
    const auto f = operand128_kernel(Operation::CasFail, s, p);
    EXPECT_EQ(f.failures, f.ops);
    std::memset(aligned, 0, s.size());
    const auto c = operand128_kernel(Operation::CasSucceed, s, gen_chunked(64, 256, kLine, 1));
    EXPECT_EQ(c.successes, c.ops);
    EXPECT_THROW(operand128_kernel(Operation::Faa, s, p), PreconditionError);
}

TEST(Unaligned, WordsStraddleLinesAndChaseWorks) {
    const auto p = gen_chase(128, kLine, kLine, 3);
    auto buf = lines(129 * kLine);
    auto b = buf.bytes();
    ASSERT_EQ(reinterpret_cast<std::uintptr_t>(b.data()) % kLine, 0u);
    write_unaligned_chase(b, p, kLine);
    std::uint64_t first;
    std::memcpy(&first, b.data() + kLine - 4, 8);
    EXPECT_EQ(first, p.successors()[0]);
    for (auto op : {Operation::Read, Operation::Faa}) {
        const auto r = unaligned_kernel(op, b, p, kLine);
        EXPECT_EQ(r.ops, 128u);
    }
    const auto f = unaligned_kernel(Operation::CasFail, b, p, kLine);
    EXPECT_EQ(f.failures, f.ops);
    EXPECT_THROW(unaligned_kernel(Operation::CasSucceed, b, p, kLine), PreconditionError);
}

TEST(TwoOperand, CasFailWithMemoryCompare) {
    const auto p = gen_chase(200, kLine, kLine, 6);
    auto b = bytes(2 * 200 * kLine);
    write_two_operand_chase(b, p);
    const auto r = two_operand_cas_kernel(b, p);
    EXPECT_EQ(r.failures, r.ops);
    EXPECT_EQ(r.ops, 200u);
}

// Host timing properties below take medians to ride out scheduler noise.

TEST(HostTiming, ReadChaseScalesLinearly) {
    const std::size_t slots = 4096;
    const auto p1 = gen_chase(slots, kLine, kLine, 1), p2 = gen_chase(2 * slots, kLine, kLine, 1);
    auto b1 = bytes(slots * kLine), b2 = bytes(2 * slots * kLine);
    write_chase(b1, p1);
    write_chase(b2, p2);
    // Two laps over b1 against one lap over b2: same footprint class, twice the ops.
    const auto lap = [&](std::span<std::byte> b, const ChasePattern& p) { return latency_kernel(Operation::Read, b, p).ops; };
    std::vector<double> ratio;
    for (int i = 0; i < 9; ++i) {
        const Ticks a0 = now();
        lap(b1, p1);
        const Ticks a1 = now();
        lap(b1, p1);
        lap(b1, p1);
        const Ticks a2 = now();
        ratio.push_back(static_cast<double>(a2 - a1) / static_cast<double>(a1 - a0));
    }
    std::nth_element(ratio.begin(), ratio.begin() + 4, ratio.end());
    EXPECT_NEAR(ratio[4], 2.0, 0.2);
}

TEST(HostTiming, UnalignedReadWithinTwiceAligned) {
    const std::size_t slots = 256;
    const auto p = gen_chase(slots, kLine, kLine, 2);
    auto a = lines(slots * kLine), ub = lines((slots + 1) * kLine);
    auto u = ub.bytes();
    write_chase(a.bytes(), p);
    write_unaligned_chase(u, p, kLine);
    const double aligned = median_ns_per_op(cal(), 31, [&] { return latency_kernel(Operation::Read, a.bytes(), p).ops; });
    const double unaligned = median_ns_per_op(cal(), 31, [&] { return unaligned_kernel(Operation::Read, u, p, kLine).ops; });
    EXPECT_LE(unaligned, 2.0 * aligned + 1.0) << "aligned " << aligned;
}

TEST(HostTiming, UnalignedCasFarSlowerThanAligned) {
    const std::size_t slots = 64;
    const auto p = gen_chase(slots, kLine, kLine, 2);
    auto a = lines(slots * kLine), ub = lines((slots + 1) * kLine);
    auto u = ub.bytes();
    write_chase(a.bytes(), p);
    write_unaligned_chase(u, p, kLine);
    const double aligned = median_ns_per_op(cal(), 11, [&] { return latency_kernel(Operation::CasFail, a.bytes(), p).ops; });
    const double unaligned = median_ns_per_op(cal(), 11, [&] { return unaligned_kernel(Operation::CasFail, u, p, kLine).ops; });
    EXPECT_GE(unaligned, 2.0 * aligned) << "aligned " << aligned;
}

TEST(HostTiming, TwoOperandCasWithinTenNanoseconds) {
    const std::size_t slots = 128;
    const auto p = gen_chase(slots, kLine, kLine, 5);
    auto one = bytes(slots * kLine), two = bytes(2 * slots * kLine);
    write_chase(one, p);
    write_two_operand_chase(two, p);
    const double base = median_ns_per_op(cal(), 51, [&] { return latency_kernel(Operation::CasFail, one, p).ops; });
    const double both = median_ns_per_op(cal(), 51, [&] { return two_operand_cas_kernel(two, p).ops; });
    EXPECT_LE(both, base + 10.0) << "one operand " << base;
}

TEST(HostTiming, WriteSweepOutrunsFaaSweep) {
    auto b = bytes(1u << 20);
    const double w = median_ns_per_op(cal(), 11, [&] { return bandwidth_kernel(Operation::Write, b, 8, kLine).ops; });
    const double f = median_ns_per_op(cal(), 11, [&] { return bandwidth_kernel(Operation::Faa, b, 8, kLine).ops; });
    EXPECT_LT(w, f);
}
