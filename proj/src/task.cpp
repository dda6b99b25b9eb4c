#include "htcsim/task.hpp"

#include <algorithm>
#include <cmath>

#include "htcsim/errors.hpp"
#include "htcsim/packing.hpp"

namespace htcsim {

std::string_view to_string(TaskState s) {
    switch (s) {
        case TaskState::pending: return "pending";
        case TaskState::staging: return "staging";
        case TaskState::running: return "running";
        case TaskState::completed: return "completed";
        case TaskState::preempted: return "preempted";
    }
    return "?";
}

std::string_view to_string(Violation v) {
    switch (v) {
        case Violation::MEM_LIMIT: return "MEM_LIMIT";
        case Violation::WALLTIME_LIMIT: return "WALLTIME_LIMIT";
        case Violation::IO_LIMIT: return "IO_LIMIT";
        case Violation::CORES_LIMIT: return "CORES_LIMIT";
    }
    return "?";
}

std::vector<Violation> validate(const Task& task, const OsgPolicy& policy) {
    std::vector<Violation> out;
    if (task.memory_gb > policy.max_memory_gb) out.push_back(Violation::MEM_LIMIT);
    if (task.est_runtime > SimTime::from_hours(policy.max_runtime_h)) out.push_back(Violation::WALLTIME_LIMIT);
    if (task.input_gb + task.output_gb > policy.max_io_gb) out.push_back(Violation::IO_LIMIT);
    if (task.cores > policy.max_cores) out.push_back(Violation::CORES_LIMIT);
    return out;
}

std::size_t WrapperPlan::task_count() const {
    std::size_t n = 0;
    for (const auto& l : lanes) n += l.size();
    return n;
}

WrapperPlan pack_first_fit_decreasing(const BackfillWindow& window, int cores_per_node, SimTime capacity,
                                      std::span<const PackItem> items) {
    if (capacity.is_infinite()) throw std::invalid_argument("packing needs a finite lane capacity");
    const std::size_t max_lanes = static_cast<std::size_t>(window.node_count) * static_cast<std::size_t>(cores_per_node);

    std::vector<PackItem> sorted(items.begin(), items.end());
    std::stable_sort(sorted.begin(), sorted.end(), [](const PackItem& a, const PackItem& b) {
        if (a.size != b.size) return a.size > b.size;
        return a.id < b.id;
    });

    WrapperPlan plan;
    plan.window = window;
    for (const PackItem& item : sorted) {
        if (item.size > capacity) continue;
        std::size_t lane = 0;
        while (lane < plan.lanes.size() && plan.lane_load[lane] + item.size > capacity) ++lane;
        if (lane == plan.lanes.size()) {
            if (plan.lanes.size() == max_lanes) continue;
            plan.lanes.emplace_back();
            plan.lane_load.emplace_back();
        }
        plan.lanes[lane].push_back(item.id);
        plan.lane_load[lane] += item.size;
    }
    if (plan.lanes.empty()) throw EmptyPlan("no task fits the backfill window");
    plan.nodes = static_cast<int>((plan.lanes.size() + static_cast<std::size_t>(cores_per_node) - 1) /
                                  static_cast<std::size_t>(cores_per_node));
    plan.walltime = *std::max_element(plan.lane_load.begin(), plan.lane_load.end());
    return plan;
}

bool plan_is_feasible(const WrapperPlan& plan, int cores_per_node, SimTime capacity) {
    if (plan.lanes.size() != plan.lane_load.size()) return false;
    if (plan.lanes.size() > static_cast<std::size_t>(plan.window.node_count) * static_cast<std::size_t>(cores_per_node))
        return false;
    if (plan.nodes > plan.window.node_count) return false;
    if (static_cast<std::size_t>(plan.nodes) * static_cast<std::size_t>(cores_per_node) < plan.lanes.size())
        return false;
    SimTime busiest;
    for (const auto& load : plan.lane_load) {
        if (load > capacity) return false;
        busiest = std::max(busiest, load);
    }
    if (capacity > plan.window.duration) return false;
    return plan.walltime == busiest;
}

}  // namespace htcsim
