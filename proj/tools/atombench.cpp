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

// atombench command line front end.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "atombench/bfs.hpp"
#include "atombench/coherence_sim.hpp"
#include "atombench/error.hpp"
#include "atombench/fitting.hpp"
#include "atombench/harness.hpp"
#include "atombench/perf_model.hpp"
#include "atombench/platform.hpp"
#include "atombench/reporting.hpp"
#include "atombench/timing.hpp"
#include "atombench/topology.hpp"

using namespace atombench;

namespace {

std::vector<std::string> split_list(const std::string& s, char sep = ',') {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::vector<CoreId> parse_cores(const std::string& s) {
    std::vector<CoreId> out;
    for (const auto& c : split_list(s)) out.push_back(static_cast<CoreId>(std::stoul(c)));
    return out;
}

std::uint64_t parse_size(std::string s) {
    std::uint64_t mult = 1;
    if (!s.empty()) {
        switch (std::toupper(static_cast<unsigned char>(s.back()))) {
        case 'K': mult = 1ULL << 10; break;
        case 'M': mult = 1ULL << 20; break;
        case 'G': mult = 1ULL << 30; break;
        default: break;
        }
        if (mult != 1) s.pop_back();
    }
    std::size_t used = 0;
    const auto v = std::stoull(s, &used);
    if (used != s.size()) throw ParseError("bad size '" + s + "'");
    return v * mult;
}

Operation parse_op(const std::string& s) {
    if (auto v = try_parse<Operation>(s)) return *v;
    std::string lower;
    for (char c : s) lower += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (lower == "cas-succeed") return Operation::CasSucceed;
    if (lower == "cas-fail" || lower == "cas") return Operation::CasFail;
    if (lower == "faa") return Operation::Faa;
    if (lower == "swp") return Operation::Swp;
    throw ParseError("unknown operation '" + s + "'");
}

struct Shared {
    std::string op = "read";
    std::string state = "E";
    std::string placement;  // level:owner[:sharer,...]
    std::string threads = "0";
    unsigned operand_bits = 64;
    bool unaligned = false;
    bool two_operands = false;
    unsigned reps = 31;
    std::vector<std::string> buffer_sizes{"64K"};
    std::string machine;
    std::string params;
    std::string output = "csv";
    std::string out_path;
    std::uint64_t seed = 1;
    std::string kernel;
    std::size_t min_stride = 0;
    std::size_t stride = 0;
    double duration_ms = 10.0;
    std::size_t chunk_size = 4096;
    bool verify = false;
    unsigned warmup = 3;
};

void add_shared(CLI::App* app, Shared& s) {
    app->add_option("--op", s.op, "CAS-succeed, CAS-fail, FAA, SWP, read or write");
    app->add_option("--state", s.state, "coherency state M, E, S, O or I");
    app->add_option("--placement", s.placement, "level:owner[:sharer,...], e.g. L2:1 or L1:0:2,3");
    app->add_option("--threads", s.threads, "comma-separated worker cores; the first one measures");
    app->add_option("--operand-bits", s.operand_bits, "64 or 128");
    app->add_flag("--unaligned", s.unaligned, "line-straddling operands");
    app->add_flag("--two-operands", s.two_operands, "CAS with the compare value loaded from memory");
    app->add_option("--reps", s.reps, "measured repetitions");
    app->add_option("--warmup", s.warmup, "discarded repetitions");
    app->add_option("--buffer-size", s.buffer_sizes, "bytes per thread (K/M/G suffixes); several values sweep")
        ->delimiter(',');
    app->add_option("--machine", s.machine, "machine description file (default: detect this host)");
    app->add_option("--params", s.params, "model params; enables the placement probe with --verify");
    app->add_option("--output", s.output, "csv or json")->check(CLI::IsMember({"csv", "json"}));
    app->add_option("--out", s.out_path, "write results here instead of stdout");
    app->add_option("--seed", s.seed, "random seed");
    app->add_option("--kernel", s.kernel, "override the kernel id");
    app->add_option("--min-stride", s.min_stride, "minimum chase stride in bytes (default per vendor)");
    app->add_flag("--verify", s.verify, "probe the placement against the model (needs --params)");
}

MachineDescription machine_or_detect(const std::string& path) { return path.empty() ? detect() : load(path); }

Placement build_placement(const Shared& s, const std::vector<CoreId>& threads, const MachineDescription& desc) {
    const auto state = parse<CoherencyState>(s.state);
    CacheLevel level = state == CoherencyState::I ? CacheLevel::Memory : CacheLevel::L1;
    CoreId owner = threads.front();
    std::vector<CoreId> sharers;
    if (!s.placement.empty()) {
        auto parts = split_list(s.placement, ':');
        if (parts.empty() || parts.size() > 3) throw ParseError("bad --placement '" + s.placement + "'");
        level = parse<CacheLevel>(parts[0]);
        if (parts.size() > 1) owner = static_cast<CoreId>(std::stoul(parts[1]));
        if (parts.size() > 2) sharers = parse_cores(parts[2]);
    }
    return make_placement(state, level, owner, sharers, threads.front(), desc);
}

KernelId default_kernel(const std::string& cmd, const Shared& s, Operation op) {
    if (!s.kernel.empty()) return parse<KernelId>(s.kernel);
    if (cmd == "bandwidth") return KernelId::BwSweep;
    if (cmd == "contend") return KernelId::Contend;
    if (s.operand_bits == 128) return KernelId::Operand128;
    if (s.unaligned) return KernelId::Unaligned;
    if (s.two_operands) return KernelId::TwoOpCas;
    return op == Operation::CasSucceed ? KernelId::LatCasSucceed : KernelId::LatChase;
}

void write_results(const std::vector<ResultRow>& rows, const Shared& s, const ResultHeader& h) {
    const auto fmt = parse<OutputFormat>(s.output);
    if (s.out_path.empty()) std::cout << emit_text(rows, fmt, h);
    else emit(rows, fmt, s.out_path, h);
}

std::string recipe_text(const RecipeTrace& t) {
    std::string out;
    for (const auto& st : t) {
        if (!out.empty()) out += "; ";
        out += std::to_string(st.core) + " " + to_string(st.action) + " [" + std::to_string(st.offset) + "+" +
               std::to_string(st.length) + ")";
    }
    return out;
}

int run_measure(const std::string& cmd, const Shared& s) {
    const MachineDescription desc = machine_or_detect(s.machine);
    const auto op = parse_op(s.op);
    const auto threads = parse_cores(s.threads);
    if (threads.empty()) throw ValidationError("--threads is empty");
    std::cerr << preflight_checklist(read_frequency_environment());
    const TimerCalibration cal = calibrate();

    BenchmarkSpec spec;
    spec.operation = op;
    spec.kernel = default_kernel(cmd, s, op);
    spec.threads = threads;
    spec.placement = build_placement(s, threads, desc);
    spec.operand_bits = s.operand_bits;
    spec.unaligned = spec.kernel == KernelId::Unaligned;
    spec.two_operands = spec.kernel == KernelId::TwoOpCas;
    spec.repetitions = s.reps;
    spec.seed = s.seed;
    spec.stride = s.stride;
    spec.contention_ms = s.duration_ms;
    spec.min_stride = s.min_stride ? s.min_stride : default_min_stride(desc, platform::cpu_vendor());
    spec.chunk_size = s.chunk_size;

    HarnessOptions opt;
    opt.warmup = s.warmup;
    if (s.verify) {
        if (s.params.empty()) throw ValidationError("--verify needs --params");
        const ModelParams params = load_params(s.params);
        ModelQuery q;
        q.op = ModelOp::Read;
        q.state = spec.placement.state;
        q.level = spec.placement.level;
        q.locality = spec.placement.locality;
        for (CoreId c : spec.placement.sharers) q.sharers.push_back(classify(threads.front(), c, desc));
        opt.expected_probe_ns = read_latency(q, params, desc).value;
    }

    std::vector<ResultRow> rows;
    ResultHeader h;
    h.host_hash = desc.hash();
    h.calibration = describe(cal);
    for (const auto& bs : s.buffer_sizes) {
        spec.buffer_size = parse_size(bs);
        const RunResult res = run(spec, desc, cal, opt);
        rows.push_back(make_row(res));
        if (rows.size() == 1) {
            h.notes.push_back("recipe=" + recipe_text(res.measurements.front().metadata.recipe));
            if (!res.measurements.front().metadata.accounting.empty())
                h.notes.push_back("accounting=" + res.measurements.front().metadata.accounting);
            h.notes.push_back("warmup=" + std::to_string(opt.warmup));
        }
    }
    write_results(rows, s, h);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"atombench: atomic operation latency, bandwidth and coherence toolkit"};
    app.require_subcommand(1);

    // detect
    auto* detect_cmd = app.add_subcommand("detect", "print this host's machine description");
    std::string detect_save;
    detect_cmd->add_option("--save", detect_save, "also write the description to this file");

    Shared lat, bw, con;
    auto* lat_cmd = app.add_subcommand("latency", "pointer-chase latency of one operation");
    add_shared(lat_cmd, lat);
    lat_cmd->add_option("--chunk-size", lat.chunk_size, "CAS-succeed chunk size in bytes");
    auto* bw_cmd = app.add_subcommand("bandwidth", "sequential sweep bandwidth");
    add_shared(bw_cmd, bw);
    bw_cmd->add_option("--stride", bw.stride, "bytes between operations (operand size or line size)");
    auto* con_cmd = app.add_subcommand("contend", "many threads on one shared line");
    add_shared(con_cmd, con);
    con.op = "FAA";
    con_cmd->add_option("--duration-ms", con.duration_ms, "run length per repetition (>= 10)");

    // fit
    auto* fit_cmd = app.add_subcommand("fit", "estimate model params from latency results");
    std::vector<std::string> fit_inputs;
    std::string fit_machine, fit_out;
    double fit_threshold = 0.10;
    fit_cmd->add_option("--input", fit_inputs, "result files (csv or json)")->required();
    fit_cmd->add_option("--machine", fit_machine, "machine description");
    fit_cmd->add_option("--nrmse-threshold", fit_threshold, "flag groups above this NRMSE");
    fit_cmd->add_option("--out", fit_out, "write fitted params here");

    // predict
    auto* pred_cmd = app.add_subcommand("predict", "evaluate the model for one query");
    std::string p_machine, p_params, p_op = "CAS", p_state = "E", p_level = "L1", p_loc = "same-core", p_sharers,
                                      p_pattern = "one-op-per-line", p_metric = "latency";
    unsigned p_bits = 64, p_hops = 1;
    pred_cmd->add_option("--machine", p_machine, "machine description")->required();
    pred_cmd->add_option("--params", p_params, "model params")->required();
    pred_cmd->add_option("--op", p_op, "CAS, FAA, SWP, read or write");
    pred_cmd->add_option("--state", p_state, "M, E, S, O or I");
    pred_cmd->add_option("--level", p_level, "L1, L2, L3 or memory");
    pred_cmd->add_option("--locality", p_loc, "owner locality class");
    pred_cmd->add_option("--sharers", p_sharers, "comma-separated sharer locality classes");
    pred_cmd->add_option("--operand-bits", p_bits, "64 or 128");
    pred_cmd->add_option("--pattern", p_pattern, "one-op-per-line or sequential");
    pred_cmd->add_option("--metric", p_metric, "latency, read or bandwidth")
        ->check(CLI::IsMember({"latency", "read", "bandwidth"}));
    pred_cmd->add_option("--hops", p_hops, "die hops charged for other-socket paths");

    // compare
    auto* cmp_cmd = app.add_subcommand("compare", "model vs measured, per group");
    std::vector<std::string> cmp_inputs;
    std::string cmp_machine, cmp_params;
    double cmp_threshold = 0.10;
    cmp_cmd->add_option("--input", cmp_inputs, "result files")->required();
    cmp_cmd->add_option("--machine", cmp_machine, "machine description")->required();
    cmp_cmd->add_option("--params", cmp_params, "model params")->required();
    cmp_cmd->add_option("--nrmse-threshold", cmp_threshold, "flag groups above this NRMSE");

    // plot
    auto* plot_cmd = app.add_subcommand("plot", "write plot-ready series files");
    std::vector<std::string> plot_inputs, plot_facets;
    std::string plot_dir = "plots";
    plot_cmd->add_option("--input", plot_inputs, "result files")->required();
    plot_cmd->add_option("--facet", plot_facets, "result columns to split series by")->delimiter(',');
    plot_cmd->add_option("--dir", plot_dir, "output directory");

    // simulate
    auto* sim_cmd = app.add_subcommand("simulate", "replay a trace through the coherence simulator");
    std::string sim_trace, sim_protocol = "all";
    unsigned sim_dies = 2, sim_cpd = 2;
    std::size_t sim_capacity = 64, sim_random = 0, sim_lines = 64;
    std::uint64_t sim_seed = 1;
    sim_cmd->add_option("--trace", sim_trace, "trace file (`core op line` per line)");
    sim_cmd->add_option("--random", sim_random, "replay this many random events instead");
    sim_cmd->add_option("--lines", sim_lines, "distinct lines in random traces");
    sim_cmd->add_option("--protocol", sim_protocol, "MESI, MESIF, MOESI, MOESI+OLSL, MOESI+HTAssistFilter or all");
    sim_cmd->add_option("--dies", sim_dies, "dies");
    sim_cmd->add_option("--cores-per-die", sim_cpd, "cores per die");
    sim_cmd->add_option("--capacity", sim_capacity, "HT-Assist directory entries");
    sim_cmd->add_option("--seed", sim_seed, "random trace seed");

    // bfs
    auto* bfs_cmd = app.add_subcommand("bfs", "parallel BFS with atomic parent claims");
    unsigned b_scale = 16, b_ef = 16, b_workers = 4;
    std::uint64_t b_seed = 1;
    std::int64_t b_root = -1;
    std::string b_claim = "cas", b_output = "csv", b_threads;
    bfs_cmd->add_option("--scale", b_scale, "log2 of the vertex count");
    bfs_cmd->add_option("--edgefactor", b_ef, "adjacency entries per vertex");
    bfs_cmd->add_option("--seed", b_seed, "generator seed");
    bfs_cmd->add_option("--claim", b_claim, "cas, swp or faa")->check(CLI::IsMember({"cas", "swp", "faa"}));
    bfs_cmd->add_option("--workers", b_workers, "worker threads");
    bfs_cmd->add_option("--root", b_root, "root vertex (default: first vertex with an edge)");
    bfs_cmd->add_option("--threads", b_threads, "cores to pin workers to (cycled)");
    bfs_cmd->add_option("--output", b_output, "csv or json")->check(CLI::IsMember({"csv", "json"}));

    CLI11_PARSE(app, argc, argv);

    try {
        if (*detect_cmd) {
            const MachineDescription d = detect();
            std::cout << to_text(d);
            if (!detect_save.empty()) save(d, detect_save);
            std::cerr << preflight_checklist(read_frequency_environment());
            return 0;
        }
        if (*lat_cmd) return run_measure("latency", lat);
        if (*bw_cmd) return run_measure("bandwidth", bw);
        if (*con_cmd) return run_measure("contend", con);
        if (*fit_cmd) {
            const MachineDescription d = machine_or_detect(fit_machine);
            std::vector<ResultRow> rows;
            for (const auto& f : fit_inputs) {
                auto r = load_results(f);
                rows.insert(rows.end(), r.rows.begin(), r.rows.end());
            }
            const auto obs = observations_from_rows(rows, d);
            FitOptions fo;
            fo.nrmse_threshold = fit_threshold;
            const FitReport rep = fit(obs, d, fo);
            if (fit_out.empty()) std::cout << params_to_json(rep.params);
            else save_params(rep.params, fit_out);
            std::cerr << "overall NRMSE " << rep.overall_nrmse << "\n";
            for (const auto& [k, v] : rep.nrmse_by_group)
                std::cerr << "  " << k << " n=" << rep.group_sizes.at(k) << " nrmse=" << v << "\n";
            for (const auto& k : rep.flagged) std::cerr << "flagged: " << k << "\n";
            for (const auto& k : rep.clamped) std::cerr << "clamped to 0: " << k << "\n";
            for (const auto& n : rep.notes) std::cerr << "note: " << n << "\n";
            return 0;
        }
        if (*pred_cmd) {
            const MachineDescription d = load(p_machine);
            const ModelParams params = load_params(p_params);
            ModelQuery q;
            q.op = parse<ModelOp>(p_op);
            q.state = parse<CoherencyState>(p_state);
            q.level = parse<CacheLevel>(p_level);
            q.locality = parse<LocalityClass>(p_loc);
            for (const auto& l : split_list(p_sharers)) q.sharers.push_back(parse<LocalityClass>(l));
            q.operand_bits = p_bits;
            q.pattern = parse<AccessPattern>(p_pattern);
            ModelOptions mo;
            mo.other_socket_hops = p_hops;
            const Prediction pr = p_metric == "bandwidth" ? bandwidth(q, params, d, mo)
                                  : p_metric == "read"    ? read_latency(q, params, d, mo)
                                                          : latency(q, params, d, mo);
            std::cout << format_prediction(pr);
            return 0;
        }
        if (*cmp_cmd) {
            const MachineDescription d = load(cmp_machine);
            const ModelParams params = load_params(cmp_params);
            std::vector<ResultRow> rows;
            for (const auto& f : cmp_inputs) {
                auto r = load_results(f);
                rows.insert(rows.end(), r.rows.begin(), r.rows.end());
            }
            const auto rep = compare(rows, params, d, cmp_threshold);
            std::cout << format_report(rep);
            return rep.flagged.empty() ? 0 : 2;
        }
        if (*plot_cmd) {
            std::vector<ResultRow> rows;
            for (const auto& f : plot_inputs) {
                auto r = load_results(f);
                rows.insert(rows.end(), r.rows.begin(), r.rows.end());
            }
            for (const auto& p : plotdata(rows, plot_facets, plot_dir)) std::cout << p.string() << "\n";
            return 0;
        }
        if (*sim_cmd) {
            sim::SimConfig cfg;
            cfg.dies = sim_dies;
            cfg.cores_per_die = sim_cpd;
            cfg.directory_capacity = sim_capacity;
            std::vector<sim::TraceEvent> trace;
            if (!sim_trace.empty()) trace = sim::load_trace(sim_trace);
            else if (sim_random) trace = sim::random_trace(cfg, sim_random, sim_lines, sim_seed);
            else trace = sim::die_local_producer_consumer_trace();
            std::vector<sim::SimProtocol> protos;
            if (sim_protocol == "all") {
                for (const auto& [p, name] : EnumNames<sim::SimProtocol>::table) protos.push_back(p);
            } else {
                protos.push_back(parse<sim::SimProtocol>(sim_protocol));
            }
            for (auto p : protos) {
                cfg.protocol = p;
                std::cout << sim::stats_to_json(sim::replay(trace, cfg), cfg);
            }
            return 0;
        }
        if (*bfs_cmd) {
            const auto g = bfs::kronecker(b_scale, b_ef, b_seed);
            bfs::Vertex root = 0;
            if (b_root >= 0) {
                root = static_cast<bfs::Vertex>(b_root);
            } else {
                while (root + 1 < g.n && g.degree(root) == 0) ++root;
            }
            const auto claim = parse<bfs::Claim>(b_claim);
            const auto res = bfs::bfs(g, root, claim, b_workers, parse_cores(b_threads));
            const auto verdict = bfs::validate(g, root, res.tree);
            ResultRow row;
            row.kernel = "bfs";
            row.operation = claim == bfs::Claim::Cas ? "CAS" : claim == bfs::Claim::Swp ? "SWP" : "FAA";
            row.buffer_size = g.n;
            row.threads.assign(b_workers, 0);
            for (unsigned i = 0; i < b_workers; ++i) row.threads[i] = i;
            row.repetitions = 1;
            row.seed = b_seed;
            row.median = row.min = row.max = res.stats.teps;
            row.count = 1;
            row.unit = "edges/s";
            row.placement_verified = verdict.valid;
            row.accounting = "one edge per directed examination";
            row.flags.push_back(verdict.valid ? "tree-valid" : "tree-invalid");
            ResultHeader h;
            h.notes.push_back("scale=" + std::to_string(b_scale) + " edgefactor=" + std::to_string(b_ef) +
                              " root=" + std::to_string(root));
            h.notes.push_back("edges_examined=" + std::to_string(res.stats.edges_examined) +
                              " seconds=" + std::to_string(res.stats.seconds) +
                              " failed_cas=" + std::to_string(res.stats.failed_cas) +
                              " swp_overwrites=" + std::to_string(res.stats.swp_overwrites) +
                              " faa_conflicts=" + std::to_string(res.stats.faa_conflicts));
            std::cout << emit_text(std::vector<ResultRow>{row}, parse<OutputFormat>(b_output), h);
            std::cerr << (verdict.valid ? "valid tree\n" : "INVALID tree\n");
            for (const auto& v : verdict.violations) std::cerr << "  " << v << "\n";
            return verdict.valid ? 0 : 1;
        }
    } catch (const Error& e) {
        std::cerr << "error (" << e.kind() << "): " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
