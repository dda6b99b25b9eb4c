#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "htcsim/cluster.hpp"
#include "htcsim/dataplane.hpp"
#include "htcsim/engine.hpp"
#include "htcsim/overlay.hpp"
#include "htcsim/scenario.hpp"
#include "htcsim/workload.hpp"

namespace htcsim {

/// Headline numbers of one run. Field names match the keys of summary.json.
struct RunSummary {
    std::string scenario_name;
    std::uint64_t scenario_hash = 0;
    std::uint64_t seed = 0;
    SimTime duration;
    SimTime warmup;
    /// Busy core time over capacity in [warmup, duration].
    double utilization_mean = 0;
    double htc_utilization_mean = 0;
    std::int64_t htc_tasks_total = 0;
    std::int64_t htc_tasks_completed = 0;
    double htc_core_hours = 0;  // cores held by pilots and wrappers
    double hpc_core_hours = 0;
    double capacity_core_hours = 0;
    double mean_task_wait = 0;  // seconds from arrival to first dispatch, completed tasks
    std::int64_t preemption_count = 0;
    std::int64_t backlog_min_nodes = 0;  // sampled, after warmup
    std::int64_t reservation_delays = 0;
    std::int64_t glideins_submitted = 0;
    std::int64_t wrappers_submitted = 0;
    std::int64_t hpc_jobs_started = 0;
    std::int64_t hub_transfers = 0;
    std::int64_t credential_pauses = 0;
    double credential_paused_h = 0;
    std::uint64_t events_processed = 0;
};

/// One simulation instance wired from a scenario.
class Simulation {
public:
    Simulation(const Scenario& scenario, std::uint64_t seed);
    ~Simulation();
    Simulation(const Simulation&) = delete;
    Simulation& operator=(const Simulation&) = delete;

    void set_trace_sink(Engine::TraceSink sink) { engine_->set_trace_sink(std::move(sink)); }

    /// Runs to the scenario duration. Callable once.
    RunSummary run();
    const SimReport& report() const { return report_; }

    const Scenario& scenario() const { return scenario_; }
    Engine& engine() { return *engine_; }
    Cluster& cluster() { return *cluster_; }
    DataPlane& data() { return *data_; }
    Overlay& overlay() { return *overlay_; }

private:
    void sample();

    Scenario scenario_;
    std::uint64_t seed_;
    std::unique_ptr<Engine> engine_;
    std::unique_ptr<Cluster> cluster_;
    std::unique_ptr<DataPlane> data_;
    std::unique_ptr<Overlay> overlay_;
    std::unique_ptr<HpcArrivals> arrivals_;
    std::unique_ptr<BacklogMaintainer> backlog_;
    SimReport report_;
    bool ran_ = false;
};

}  // namespace htcsim
