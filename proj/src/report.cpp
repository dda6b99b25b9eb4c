#include "htcsim/report.hpp"

#include <cmath>

#include <fmt/format.h>

#include "htcsim/errors.hpp"

namespace htcsim {

using nlohmann::json;

nlohmann::json summary_to_json(const RunSummary& s, const std::map<std::string, std::string>& scenario) {
    json j;
    j["scenario_name"] = s.scenario_name;
    j["scenario_hash"] = fmt::format("{:016x}", s.scenario_hash);
    j["seed"] = s.seed;
    j["duration_h"] = s.duration.hours();
    j["warmup_h"] = s.warmup.hours();
    j["utilization_mean"] = s.utilization_mean;
    j["htc_utilization_mean"] = s.htc_utilization_mean;
    j["htc_tasks_total"] = s.htc_tasks_total;
    j["htc_tasks_completed"] = s.htc_tasks_completed;
    j["htc_core_hours"] = s.htc_core_hours;
    j["hpc_core_hours"] = s.hpc_core_hours;
    j["capacity_core_hours"] = s.capacity_core_hours;
    j["mean_task_wait"] = s.mean_task_wait;
    j["preemption_count"] = s.preemption_count;
    j["backlog_min_nodes"] = s.backlog_min_nodes;
    j["reservation_delays"] = s.reservation_delays;
    j["glideins_submitted"] = s.glideins_submitted;
    j["wrappers_submitted"] = s.wrappers_submitted;
    j["hpc_jobs_started"] = s.hpc_jobs_started;
    j["hub_transfers"] = s.hub_transfers;
    j["credential_pauses"] = s.credential_pauses;
    j["credential_paused_h"] = s.credential_paused_h;
    j["events_processed"] = s.events_processed;
    j["scenario"] = scenario;
    return j;
}

std::set<std::string> default_compare_keys() {
    return {"seed", "name", "overlay.enabled", "overlay.mode", "cluster.backfill"};
}

CompareReport compare_summaries(const json& a, const json& b, const std::set<std::string>& allowed) {
    if (!a.contains("scenario") || !b.contains("scenario"))
        throw InvalidSpec("summary lacks the resolved scenario");
    const auto sa = a.at("scenario").get<std::map<std::string, std::string>>();
    const auto sb = b.at("scenario").get<std::map<std::string, std::string>>();

    CompareReport r;
    std::vector<std::string> blocked;
    std::set<std::string> keys;
    for (const auto& [k, v] : sa) keys.insert(k);
    for (const auto& [k, v] : sb) keys.insert(k);
    for (const auto& k : keys) {
        auto ia = sa.find(k);
        auto ib = sb.find(k);
        const bool same = ia != sa.end() && ib != sb.end() && ia->second == ib->second;
        if (same) continue;
        (allowed.contains(k) ? r.differing_keys : blocked).push_back(k);
    }
    if (!blocked.empty()) {
        std::string list;
        for (const auto& k : blocked) list += (list.empty() ? "" : ", ") + k;
        throw InvalidSpec(fmt::format("runs differ in undeclared scenario keys: {}", list));
    }

    for (const auto& [key, va] : a.items()) {
        if (!va.is_number() || key == "seed" || !b.contains(key) || !b.at(key).is_number()) continue;
        MetricDelta d;
        d.metric = key;
        d.a = va.get<double>();
        d.b = b.at(key).get<double>();
        d.absolute = d.b - d.a;
        if (d.a != 0) d.relative = d.absolute / std::fabs(d.a);
        r.deltas.push_back(d);
    }
    return r;
}

json to_json(const CompareReport& r) {
    json j;
    j["differing_keys"] = r.differing_keys;
    json deltas = json::object();
    for (const auto& d : r.deltas) {
        json e;
        e["a"] = d.a;
        e["b"] = d.b;
        e["absolute"] = d.absolute;
        e["relative"] = d.relative ? json(*d.relative) : json(nullptr);
        deltas[d.metric] = e;
    }
    j["deltas"] = deltas;
    return j;
}

std::string format_table(const CompareReport& r) {
    std::string out = fmt::format("{:<24} {:>16} {:>16} {:>16} {:>10}\n", "metric", "a", "b", "delta", "rel");
    for (const auto& d : r.deltas) {
        const std::string rel = d.relative ? fmt::format("{:+.2f}%", *d.relative * 100) : "-";
        out += fmt::format("{:<24} {:>16.6g} {:>16.6g} {:>+16.6g} {:>10}\n", d.metric, d.a, d.b, d.absolute, rel);
    }
    return out;
}

}  // namespace htcsim
