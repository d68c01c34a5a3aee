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

#include "atombench/fitting.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "atombench/error.hpp"

namespace atombench {
namespace {

bool is_local_read(const Observation& o, CacheLevel level) {
    return o.query.op == ModelOp::Read && o.query.level == level && o.query.locality == LocalityClass::SameCore &&
           o.query.state == CoherencyState::E && o.query.sharers.empty();
}

std::vector<double> collect(std::span<const Observation> obs, const std::function<bool(const Observation&)>& pick) {
    std::vector<double> v;
    for (const auto& o : obs) {
        if (pick(o)) v.push_back(o.latency_ns);
    }
    return v;
}

double need_median(std::span<const Observation> obs, const std::function<bool(const Observation&)>& pick,
                   const std::string& what) {
    auto v = collect(obs, pick);
    if (v.empty()) throw MissingCoverage("no " + what + " measurements");
    return median(std::move(v));
}

double clamp0(double v, const std::string& name, std::vector<std::string>* clamped) {
    if (v < 0) {
        if (clamped) clamped->push_back(name);
        return 0.0;
    }
    return v;
}

double model_no_o(const ModelQuery& q, const ModelParams& p, const MachineDescription& d, ModelOptions opt) {
    opt.include_o = false;
    return latency(q, p, d, opt).value;
}

} // namespace

double median(std::vector<double> v) {
    if (v.empty()) throw EmptyInput("median of nothing");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2;
}

double nrmse(std::span<const double> pred, std::span<const double> obs) {
    if (pred.empty() || obs.empty()) throw EmptyInput("nrmse needs samples");
    if (pred.size() != obs.size()) throw ValidationError("nrmse needs paired samples");
    double sum = 0, sq = 0;
    for (std::size_t i = 0; i < obs.size(); ++i) {
        sum += obs[i];
        sq += (pred[i] - obs[i]) * (pred[i] - obs[i]);
    }
    const double n = static_cast<double>(obs.size());
    const double mean = sum / n;
    if (!(mean > 0)) throw ZeroMean("observation mean must be positive");
    return std::sqrt(sq / n) / mean;
}

std::string group_key(const ModelQuery& q) {
    std::string k = to_string(OKey{q.op, q.state, q.locality, q.level});
    if (!q.sharers.empty()) {
        k += "/sharers:";
        for (std::size_t i = 0; i < q.sharers.size(); ++i) k += (i ? "," : "") + to_string(q.sharers[i]);
    }
    return k;
}

ModelParams fit_base_params(std::span<const Observation> obs, const MachineDescription& desc, const ModelOptions& opt,
                            std::vector<std::string>* clamped, std::vector<std::string>* notes) {
    ModelParams p;
    p.name = desc.name;
    p.line_size = desc.line_size;
    p.R_L1_l = need_median(obs, [](const auto& o) { return is_local_read(o, CacheLevel::L1); }, "local L1 read");
    p.R_L2_l = need_median(obs, [](const auto& o) { return is_local_read(o, CacheLevel::L2); }, "local L2 read");
    if (desc.has_l3())
        p.R_L3_l = need_median(obs, [](const auto& o) { return is_local_read(o, CacheLevel::L3); }, "local L3 read");

    // M: local memory reads minus the last-level hit.
    const double llc = p.R_L3_l.value_or(p.R_L2_l);
    p.M = clamp0(need_median(obs,
                             [](const auto& o) {
                                 return o.query.op == ModelOp::Read && o.query.level == CacheLevel::Memory &&
                                        !is_off_die(o.query.locality);
                             },
                             "local memory read") -
                     llc,
                 "M", clamped);

    // H: E-state reads whose modeled value depends on H. The coefficient of H
    // is isolated by evaluating the model at H = 0 and H = 1.
    const bool needs_h = desc.dies.size() > 1 || !desc.has_l3();
    if (needs_h) {
        auto with_h = [&](double h, const ModelQuery& q) {
            ModelParams t = p;
            t.H = h;
            for (auto op : {ModelOp::Cas, ModelOp::Faa, ModelOp::Swp}) t.E[op] = 0.0;
            return read_latency(q, t, desc, opt).value;
        };
        auto usable = [&](const Observation& o) {
            return o.query.op == ModelOp::Read && o.query.state == CoherencyState::E &&
                   o.query.level != CacheLevel::Memory && o.query.sharers.empty() &&
                   o.query.locality != LocalityClass::SameCore;
        };
        bool have_off_die = false;
        for (const auto& o : obs) have_off_die |= usable(o) && is_off_die(o.query.locality);
        std::vector<double> hs;
        for (const auto& o : obs) {
            if (!usable(o) || (have_off_die && !is_off_die(o.query.locality))) continue;
            const double f0 = with_h(0.0, o.query);
            const double c = with_h(1.0, o.query) - f0;
            if (c > 0) hs.push_back((o.latency_ns - f0) / c);
        }
        if (hs.empty()) throw MissingCoverage("no E-state read whose path crosses a hop (needed for H)");
        p.H = clamp0(median(std::move(hs)), "H", clamped);
        if (notes)
            notes->push_back(std::string("H isolated from ") + (have_off_die ? "cross-die" : "on-die remote") +
                             " E-state reads after subtracting the fitted on-die read terms");
    } else if (notes) {
        notes->push_back("H not identifiable on a single-die machine with an L3; set to 0");
    }

    for (auto op : {ModelOp::Cas, ModelOp::Faa, ModelOp::Swp}) {
        const double m = need_median(obs,
                                     [op](const auto& o) {
                                         return o.query.op == op && o.query.state == CoherencyState::E &&
                                                o.query.level == CacheLevel::L1 &&
                                                o.query.locality == LocalityClass::SameCore;
                                     },
                                     "local L1 E-state " + to_string(op));
        p.E[op] = clamp0(m - p.R_L1_l, "E(" + to_string(op) + ")", clamped);
    }
    if (p.R_L2_l < p.R_L1_l || (p.R_L3_l && *p.R_L3_l < p.R_L2_l)) {
        if (notes) notes->push_back("fitted read latencies are not ordered by level");
    }
    return p;
}

OTable fit_o_table(std::span<const Observation> obs, const ModelParams& params, const MachineDescription& desc,
                   const ModelOptions& opt) {
    std::map<OKey, std::vector<double>> residuals;
    for (const auto& o : obs) {
        if (!is_atomic(o.query.op)) continue;
        const OKey k{o.query.op, o.query.state, o.query.locality, o.query.level};
        residuals[k].push_back(o.latency_ns - model_no_o(o.query, params, desc, opt));
    }
    if (residuals.empty()) throw MissingCoverage("no atomic measurements to derive O from");
    OTable out;
    for (auto& [k, v] : residuals) out[k] = median(std::move(v));
    return out;
}

FitReport fit(std::span<const Observation> obs, const MachineDescription& desc, const FitOptions& opt) {
    FitReport r;
    r.params = fit_base_params(obs, desc, opt.model, &r.clamped, &r.notes);
    r.o_table = fit_o_table(obs, r.params, desc, opt.model);
    r.params.O = r.o_table;

    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> groups;
    std::vector<double> all_pred, all_obs;
    for (const auto& o : obs) {
        const double pred = latency(o.query, r.params, desc, opt.model).value;
        auto& g = groups[group_key(o.query)];
        g.first.push_back(pred);
        g.second.push_back(o.latency_ns);
        all_pred.push_back(pred);
        all_obs.push_back(o.latency_ns);
    }
    for (const auto& [key, g] : groups) {
        const double e = nrmse(g.first, g.second);
        r.nrmse_by_group[key] = e;
        r.group_sizes[key] = g.second.size();
        if (e > opt.nrmse_threshold && g.second.size() >= opt.min_group_size) r.flagged.push_back(key);
    }
    r.overall_nrmse = nrmse(all_pred, all_obs);
    return r;
}

} // namespace atombench
