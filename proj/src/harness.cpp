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

#include "atombench/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <thread>

#include "atombench/platform.hpp"

namespace atombench {
namespace {

struct Layout {
    std::size_t region = 0;  // bytes per thread
    Fill fill = Fill::Zeros;
    ChasePattern pattern;
    std::size_t stride = 0;
};

std::size_t operand_bytes(const BenchmarkSpec& s) { return s.operand_bits / 8; }

Layout plan_layout(const BenchmarkSpec& s, const MachineDescription& d) {
    const std::size_t line = d.line_size;
    Layout l;
    l.region = (s.buffer_size + line - 1) / line * line;
    switch (s.kernel) {
    case KernelId::LatChase:
        l.fill = Fill::ChasePermutation;
        l.pattern = gen_chase(l.region / line, s.min_stride, line, s.seed);
        break;
    case KernelId::LatCasSucceed:
        l.fill = Fill::Zeros;
        l.pattern = gen_chunked(l.region / s.chunk_size, s.chunk_size, s.min_stride, s.seed);
        break;
    case KernelId::Operand128:
        if (s.operation == Operation::CasSucceed) {
            l.fill = Fill::Zeros;
            l.pattern = gen_chunked(l.region / s.chunk_size, s.chunk_size, s.min_stride, s.seed);
        } else {
            l.fill = Fill::ChasePermutation;
            l.pattern = gen_chase(l.region / line, s.min_stride, line, s.seed);
        }
        break;
    case KernelId::Unaligned:
        l.fill = Fill::ChasePermutation;
        l.pattern = gen_chase(l.region / line - 1, s.min_stride, line, s.seed);
        break;
    case KernelId::TwoOpCas:
        l.fill = Fill::ChasePermutation;
        l.pattern = gen_chase(l.region / 2 / line, s.min_stride, line, s.seed);
        break;
    case KernelId::BwSweep:
        l.fill = s.operation == Operation::CasFail ? Fill::IncrementingBytes : Fill::Zeros;
        l.stride = s.stride ? s.stride : operand_bytes(s);
        break;
    case KernelId::Contend:
        l.region = line;
        l.fill = Fill::Zeros;
        break;
    }
    return l;
}

void fill_region(std::span<std::byte> r, const BenchmarkSpec& s, const Layout& l, const MachineDescription& d) {
    switch (s.kernel) {
    case KernelId::LatChase: write_chase(r, l.pattern); break;
    case KernelId::Operand128:
        if (l.fill == Fill::Zeros) fill_zeros(r);
        else write_chase128(r, l.pattern);
        break;
    case KernelId::Unaligned: write_unaligned_chase(r, l.pattern, d.line_size); break;
    case KernelId::TwoOpCas: write_two_operand_chase(r, l.pattern); break;
    default:
        if (l.fill == Fill::IncrementingBytes) fill_incrementing_bytes(r);
        else fill_zeros(r);
        break;
    }
}

KernelResult run_kernel(const BenchmarkSpec& s, const Layout& l, std::span<std::byte> r, Ticks contend_until,
                        std::size_t line) {
    switch (s.kernel) {
    case KernelId::LatChase:
    case KernelId::LatCasSucceed: return latency_kernel(s.operation, r, l.pattern);
    case KernelId::Operand128: return operand128_kernel(s.operation, r, l.pattern);
    case KernelId::Unaligned: return unaligned_kernel(s.operation, r, l.pattern, line);
    case KernelId::TwoOpCas: return two_operand_cas_kernel(r, l.pattern);
    case KernelId::BwSweep: return bandwidth_kernel(s.operation, r, l.stride, line);
    case KernelId::Contend:
        return contention_kernel(s.operation, reinterpret_cast<std::uint64_t*>(r.data()), contend_until, line);
    }
    return {};
}

struct RepetitionFailed {
    std::string why;
};

Measurement one_repetition(const BenchmarkSpec& spec, const MachineDescription& desc, const TimerCalibration& cal,
                           const HarnessOptions& opt, const Layout& layout) {
    const std::size_t nthreads = spec.threads.size();
    const bool shared_line = spec.kernel == KernelId::Contend;
    const std::size_t payload = shared_line ? layout.region : layout.region * nthreads;

    // Preparation
    AlignedBuffer storage = allocate_buffer(payload, desc, opt.prep);
    for (std::size_t t = 0; t < (shared_line ? 1 : nthreads); ++t)
        fill_region(storage.bytes().subspan(t * layout.region, layout.region), spec, layout, desc);
    PreparedBuffer buf = prepare(std::move(storage), payload, layout.fill, spec.placement, desc, spec.threads[0], opt.prep);
    if (opt.expected_probe_ns) buf.check = verify_placement(buf, spec.threads[0], *opt.expected_probe_ns, cal, desc);

    // Synchronization + measurement
    const bool oversubscribed = nthreads > platform::online_cores();
    std::atomic<std::size_t> ready{0};
    std::atomic<Ticks> deadline{0};
    std::atomic<bool> abort{false};
    std::vector<Sample> samples(nthreads);
    std::vector<Ticks> seen(nthreads, 0);
    std::vector<std::exception_ptr> errors(nthreads);
    const Ticks contend_ticks = cal.from_ns(spec.contention_ms * 1e6);

    std::vector<std::thread> workers;
    workers.reserve(nthreads);
    for (std::size_t t = 0; t < nthreads; ++t) {
        workers.emplace_back([&, t] {
            try {
                platform::pin_current_thread(spec.threads[t]);
            } catch (...) {
                errors[t] = std::current_exception();
                abort = true;
                ready.fetch_add(1);
                return;
            }
            auto region = shared_line ? buf.payload() : buf.payload().subspan(t * layout.region, layout.region);
            ready.fetch_add(1);
            Ticks d = 0;
            while ((d = deadline.load(std::memory_order_acquire)) == 0) {
                if (abort.load(std::memory_order_relaxed)) return;
                std::this_thread::yield();
            }
            seen[t] = now();
            while (now() < d) {
                if (oversubscribed) std::this_thread::yield();
            }
            try {
                Sample& s = samples[t];
                s.thread = spec.threads[t];
                s.t_start = now();
                const KernelResult kr = run_kernel(spec, layout, region, d + contend_ticks, desc.line_size);
                s.t_end = now();
                s.ops = kr.ops;
                s.bytes_counted = kr.bytes_counted;
                s.successes = kr.successes;
                s.failures = kr.failures;
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    }

    const auto ready_limit = std::chrono::steady_clock::now() +
                             std::chrono::microseconds(static_cast<long>(opt.ready_timeout_ms * 1000));
    while (ready.load() < nthreads && std::chrono::steady_clock::now() < ready_limit) std::this_thread::yield();
    if (ready.load() < nthreads) abort = true;
    else deadline.store(now() + cal.from_ns(opt.rendezvous_lead_ms * 1e6), std::memory_order_release);
    for (auto& w : workers) w.join();

    // Result collection
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    if (abort) throw RepetitionFailed{"workers did not reach the rendezvous in time"};
    const Ticks d = deadline.load();
    for (std::size_t t = 0; t < nthreads; ++t) {
        if (seen[t] > d) throw RepetitionFailed{"worker on core " + std::to_string(spec.threads[t]) + " missed the deadline"};
    }

    Measurement m;
    m.spec = spec;
    m.samples = std::move(samples);
    m.total_ns = total_ns(m.samples, cal);
    m.unit = spec.unit();
    m.derived = derive_metric(spec.kernel, m.samples, m.total_ns);
    m.metadata.calibration = cal;
    m.metadata.recipe = buf.trace;
    m.metadata.check = buf.check;
    m.metadata.host_hash = desc.hash();
    m.metadata.deadline = d;
    m.metadata.warmup = opt.warmup;
    if (shared_line) m.metadata.final_word = *reinterpret_cast<const std::uint64_t*>(buf.base());

    auto& f = m.metadata.flags;
    if (cal.low_resolution()) f.push_back("low-resolution");
    if (spec.unaligned) f.push_back("unaligned");
    if (!buf.check.verified) f.push_back("placement-unverified");
    if (buf.hugepages()) f.push_back("hugepages");
    if (desc.dies_defaulted) f.push_back("dies-defaulted");
    if (oversubscribed) f.push_back("oversubscribed");
    if (spec.kernel == KernelId::BwSweep) m.metadata.accounting = "line_size per distinct line";
    if (spec.kernel == KernelId::Contend) m.metadata.accounting = "line_size per operation";
    return m;
}

} // namespace

bool RunMetadata::has_flag(const std::string& f) const {
    return std::find(flags.begin(), flags.end(), f) != flags.end();
}

void BenchmarkSpec::validate(const MachineDescription& desc) const {
    if (repetitions < 1) throw ValidationError("repetitions >= 1");
    if (threads.empty()) throw ValidationError("threads nonempty");
    if (min_stride < desc.line_size) throw ValidationError("min_stride >= line_size");
    if (operand_bits != 64 && operand_bits != 128) throw ValidationError("operand_bits in {64, 128}");
    const bool cas = operation == Operation::CasSucceed || operation == Operation::CasFail;
    if (operand_bits == 128 && !cas) throw ValidationError("128-bit operands only with CAS");
    if ((kernel == KernelId::Operand128) != (operand_bits == 128))
        throw ValidationError("operand128 kernel iff operand_bits = 128");
    if ((kernel == KernelId::Unaligned) != unaligned) throw ValidationError("unaligned kernel iff unaligned flag");
    if ((kernel == KernelId::TwoOpCas) != two_operands) throw ValidationError("two-op-cas kernel iff two_operands flag");
    if (buffer_size == 0) throw ValidationError("buffer_size > 0");
    for (CoreId c : threads) {
        if (!desc.contains(c)) throw UnknownCore("thread core " + std::to_string(c));
    }
    switch (kernel) {
    case KernelId::LatChase:
    case KernelId::Unaligned:
        if (operation == Operation::Write || operation == Operation::CasSucceed)
            throw ValidationError(to_string(kernel) + " supports read, CAS-fail, FAA and SWP");
        break;
    case KernelId::LatCasSucceed:
        if (operation != Operation::CasSucceed) throw ValidationError("lat-cas-succeed runs CAS-succeed only");
        break;
    case KernelId::TwoOpCas:
        if (operation != Operation::CasFail) throw ValidationError("two-op-cas runs CAS-fail only");
        break;
    case KernelId::Contend:
        if (contention_ms < 10.0) throw ValidationError("contention duration >= 10 ms");
        break;
    case KernelId::BwSweep:
        if (stride != 0 && stride != operand_bits / 8 && stride != desc.line_size)
            throw ValidationError("sweep stride is the operand size or the line size");
        break;
    case KernelId::Operand128: break;
    }
    if (kernel == KernelId::LatCasSucceed || (kernel == KernelId::Operand128 && operation == Operation::CasSucceed)) {
        if (chunk_size < desc.line_size || buffer_size / chunk_size < 2)
            throw ValidationError("CAS-succeed latency needs at least two chunks of at least one line");
    }
    validate_placement(placement, desc);
    if (placement.locality != classify(threads[0], placement.owner, desc))
        throw ValidationError("placement locality does not match the measuring core");
}

std::size_t default_min_stride(const MachineDescription& desc, const std::string& vendor) {
    const bool amd = desc.protocol == Protocol::MOESI || vendor == "AuthenticAMD";
    return amd ? 2 * desc.line_size : desc.line_size;
}

double total_ns(std::span<const Sample> samples, const TimerCalibration& cal) {
    if (samples.empty()) return 0.0;
    Ticks lo = samples.front().t_start, hi = samples.front().t_end;
    for (const auto& s : samples) {
        lo = std::min(lo, s.t_start);
        hi = std::max(hi, s.t_end);
    }
    return cal.duration_ns(hi - lo);
}

double derive_metric(KernelId kernel, std::span<const Sample> samples, double total) {
    std::uint64_t ops = 0, bytes = 0;
    for (const auto& s : samples) {
        ops += s.ops;
        bytes += s.bytes_counted;
    }
    if (kernel == KernelId::BwSweep || kernel == KernelId::Contend) return total > 0 ? bytes / total * 1e9 : 0.0;
    const double per_thread_ops = static_cast<double>(ops) / static_cast<double>(samples.size());
    return per_thread_ops > 0 ? total / per_thread_ops : 0.0;
}

Summary summarize_values(std::vector<double> v, Unit unit) {
    if (v.empty()) throw EmptyInput("no values to summarize");
    std::sort(v.begin(), v.end());
    auto quantile = [&](double q) {
        const double pos = q * static_cast<double>(v.size() - 1);
        const auto i = static_cast<std::size_t>(std::floor(pos));
        const double frac = pos - static_cast<double>(i);
        return i + 1 < v.size() ? v[i] + frac * (v[i + 1] - v[i]) : v[i];
    };
    Summary s;
    s.unit = unit;
    s.count = v.size();
    s.min = v.front();
    s.max = v.back();
    s.median = quantile(0.5);
    s.iqr = quantile(0.75) - quantile(0.25);
    return s;
}

Summary summarize(std::span<const Measurement> ms) {
    if (ms.empty()) throw EmptyInput("no measurements to summarize");
    std::vector<double> v;
    for (const auto& m : ms) {
        if (!(m.spec == ms.front().spec) || m.unit != ms.front().unit)
            throw HeterogeneousSpecs("summarize needs runs of one spec");
        v.push_back(m.derived);
    }
    return summarize_values(std::move(v), ms.front().unit);
}

RunResult run(const BenchmarkSpec& spec, const MachineDescription& desc, const TimerCalibration& cal,
              const HarnessOptions& opt) {
    spec.validate(desc);
    const Layout layout = plan_layout(spec, desc);
    RunResult out;
    const unsigned total = opt.warmup + spec.repetitions;
    for (unsigned rep = 0; rep < total; ++rep) {
        std::string last_failure;
        for (int attempt = 0;; ++attempt) {
            try {
                Measurement m = one_repetition(spec, desc, cal, opt, layout);
                m.metadata.repetition = rep;
                if (rep >= opt.warmup) out.measurements.push_back(std::move(m));
                break;
            } catch (const RepetitionFailed& f) {
                if (attempt >= opt.max_retries)
                    throw RendezvousTimeout(f.why + " (after " + std::to_string(attempt + 1) + " attempts)");
            }
        }
    }
    out.summary = summarize(out.measurements);
    return out;
}

} // namespace atombench
