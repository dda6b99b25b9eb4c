#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "htcsim/dataplane.hpp"
#include "htcsim/sim_time.hpp"

namespace htcsim {

using TaskId = std::uint64_t;

enum class TaskState { pending, staging, running, completed, preempted };
std::string_view to_string(TaskState s);

/// One HTC work item. `actual_runtime` is drawn up front and never shown to
/// the matchmaker or packer, which only see `est_runtime`.
struct Task {
    TaskId id = 0;
    int cores = 1;
    double memory_gb = 1.0;
    SimTime est_runtime;
    SimTime actual_runtime;
    double input_gb = 0;
    double output_gb = 0;
    DatasetId dataset = 0;
    int priority = 0;
    SimTime arrival;

    TaskState state = TaskState::pending;
    int attempts = 0;
    SimTime completed_work;  // progress kept across preemptions

    // Accounting.
    SimTime executed;  // run time summed over all attempts
    int completions = 0;
    std::optional<SimTime> first_dispatch;
    std::optional<SimTime> completed_at;

    SimTime remaining_actual() const { return SimTime::saturating_sub(actual_runtime, completed_work); }
    SimTime remaining_estimate() const { return SimTime::saturating_sub(est_runtime, completed_work); }
};

/// Envelope for opportunistic grid jobs.
struct OsgPolicy {
    double max_memory_gb = 2.0;
    double max_runtime_h = 12.0;
    double max_io_gb = 10.0;
    int max_cores = 1;
};

enum class Violation { MEM_LIMIT, WALLTIME_LIMIT, IO_LIMIT, CORES_LIMIT };
std::string_view to_string(Violation v);

/// Every bound the task breaks, in declaration order; empty when compliant.
std::vector<Violation> validate(const Task& task, const OsgPolicy& policy);

}  // namespace htcsim
