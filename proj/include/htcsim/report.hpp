#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "htcsim/simulation.hpp"

namespace htcsim {

/// summary.json document: the RunSummary fields plus the resolved scenario
/// as flat dotted keys.
nlohmann::json summary_to_json(const RunSummary& s, const std::map<std::string, std::string>& scenario);

struct MetricDelta {
    std::string metric;
    double a = 0;
    double b = 0;
    double absolute = 0;           // b - a
    std::optional<double> relative;  // (b - a) / |a|, absent when a == 0
};

struct CompareReport {
    std::vector<MetricDelta> deltas;
    std::vector<std::string> differing_keys;  // scenario keys that differ (all allowed)
};

/// Scenario keys that may differ between compared runs unless the caller
/// passes its own list.
std::set<std::string> default_compare_keys();

/// Throws InvalidSpec naming the offending keys when the scenarios differ
/// outside `allowed`.
CompareReport compare_summaries(const nlohmann::json& a, const nlohmann::json& b, const std::set<std::string>& allowed);
nlohmann::json to_json(const CompareReport& r);
std::string format_table(const CompareReport& r);

}  // namespace htcsim
