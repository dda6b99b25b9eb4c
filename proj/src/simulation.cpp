#include "htcsim/simulation.hpp"

#include <algorithm>
#include <limits>

#include "htcsim/errors.hpp"

namespace htcsim {

namespace {

constexpr double kMsPerHour = 3600e3;

const char* const kSeries[] = {"utilization",     "htc_utilization", "queued_nodes",      "pending_tasks",
                               "running_tasks",   "completed_tasks", "active_transfers", "credential_valid"};

}  // namespace

Simulation::Simulation(const Scenario& scenario, std::uint64_t seed) : scenario_(scenario), seed_(seed) {
    if (auto diags = validate(scenario_); !diags.empty()) throw InvalidSpec(to_string(diags.front()));
    scenario_.seed = seed;
    engine_ = std::make_unique<Engine>();
    cluster_ = std::make_unique<Cluster>(*engine_, scenario_.cluster);
    data_ = std::make_unique<DataPlane>(*engine_, scenario_.data);
    overlay_ = std::make_unique<Overlay>(*engine_, *cluster_, *data_, scenario_.overlay);
    arrivals_ = std::make_unique<HpcArrivals>(*engine_, *cluster_, scenario_.hpc, seed);
    backlog_ = std::make_unique<BacklogMaintainer>(*cluster_, scenario_.hpc, seed);
}

Simulation::~Simulation() = default;

void Simulation::sample() {
    cluster_->check_invariants();
    Engine& e = *engine_;
    e.sample("utilization", cluster_->current_utilization());
    e.sample("htc_utilization",
             cluster_->current_utilization(JobKind::pilot) + cluster_->current_utilization(JobKind::wrapper));
    e.sample("queued_nodes", static_cast<double>(cluster_->queued_nodes(JobKind::hpc)));
    e.sample("pending_tasks", static_cast<double>(overlay_->pending_count()));
    e.sample("running_tasks", static_cast<double>(overlay_->count(TaskState::running)));
    e.sample("completed_tasks", static_cast<double>(overlay_->completed_count()));
    e.sample("active_transfers", static_cast<double>(data_->active_transfers()));
    e.sample("credential_valid", data_->credential_valid() ? 1.0 : 0.0);
}

RunSummary Simulation::run() {
    if (ran_) throw std::logic_error("Simulation::run called twice");
    ran_ = true;
    Engine& e = *engine_;
    for (const char* name : kSeries) e.metrics().register_series(name);

    data_->start();
    cluster_->start_periodic_cycles();
    backlog_->start();
    arrivals_->start();

    std::int64_t tasks_total = 0;
    if (scenario_.overlay.enabled) {
        const OsgPolicy* policy = scenario_.overlay.osg_policy ? &scenario_.overlay.policy : nullptr;
        auto tasks = generate_tasks(scenario_.htc, seed_, policy);
        tasks_total = static_cast<std::int64_t>(tasks.size());
        for (auto& t : tasks) {
            if (scenario_.data.prepopulate_cache && t.input_gb > 0) data_->prepopulate(t.dataset, t.input_gb);
            overlay_->add_task(std::move(t));
        }
    }
    overlay_->start();

    const SimTime end = scenario_.duration;
    for (SimTime t = SimTime::zero(); t <= end; t += scenario_.sample_period)
        e.schedule(t, EventKind::metric_sample, 0, [this] { sample(); });

    e.run_until(end);
    cluster_->check_invariants();

    RunSummary s;
    s.scenario_name = scenario_.name;
    s.scenario_hash = scenario_hash(scenario_);
    s.seed = seed_;
    s.duration = end;
    s.warmup = scenario_.warmup;
    const SimTime from = std::min(scenario_.warmup, end);
    if (end > from) {
        s.utilization_mean = cluster_->utilization(from, end);
    }
    const double capacity_ms = static_cast<double>(end.ms()) * cluster_->size() * scenario_.cluster.cores_per_node;
    const auto htc_ms = cluster_->busy_core_ms(JobKind::pilot) + cluster_->busy_core_ms(JobKind::wrapper);
    s.htc_core_hours = static_cast<double>(htc_ms) / kMsPerHour;
    s.hpc_core_hours = static_cast<double>(cluster_->busy_core_ms(JobKind::hpc)) / kMsPerHour;
    s.capacity_core_hours = capacity_ms / kMsPerHour;
    if (end > from) {
        // HTC share over the same window, from the node intervals.
        std::int64_t busy = 0;
        const auto& ivs = cluster_->node_intervals();
        for (std::size_t n = 0; n < ivs.size(); ++n) {
            for (const auto& iv : ivs[n]) {
                if (iv.kind == JobKind::hpc) continue;
                const SimTime lo = std::max(iv.start, from), hi = std::min(iv.end, end);
                if (hi > lo) busy += (hi - lo).ms();
            }
            const Node& node = cluster_->node(static_cast<NodeId>(n));
            if (node.state == NodeState::busy && cluster_->job(node.job).kind != JobKind::hpc) {
                const SimTime lo = std::max(*cluster_->job(node.job).start, from);
                if (end > lo) busy += (end - lo).ms();
            }
        }
        s.htc_utilization_mean = static_cast<double>(busy) / (static_cast<double>((end - from).ms()) * cluster_->size());
    }

    s.htc_tasks_total = tasks_total;
    s.htc_tasks_completed = static_cast<std::int64_t>(overlay_->completed_count());
    double wait_ms = 0;
    std::int64_t waited = 0;
    for (const auto& [id, t] : overlay_->tasks()) {
        if (t.state != TaskState::completed || !t.first_dispatch) continue;
        wait_ms += static_cast<double>((*t.first_dispatch - t.arrival).ms());
        ++waited;
    }
    s.mean_task_wait = waited ? wait_ms / static_cast<double>(waited) / 1e3 : 0.0;
    s.preemption_count = static_cast<std::int64_t>(overlay_->preemptions().size());

    std::int64_t backlog_min = std::numeric_limits<std::int64_t>::max();
    for (const auto& [t, v] : e.metrics().series("queued_nodes").samples)
        if (t >= scenario_.warmup) backlog_min = std::min(backlog_min, static_cast<std::int64_t>(v));
    s.backlog_min_nodes = backlog_min == std::numeric_limits<std::int64_t>::max() ? 0 : backlog_min;

    s.reservation_delays = static_cast<std::int64_t>(cluster_->reservation_delays());
    s.glideins_submitted = overlay_->glideins_submitted();
    s.wrappers_submitted = overlay_->wrappers_submitted();
    for (const auto& [id, j] : cluster_->jobs())
        if (j.kind == JobKind::hpc && j.start) ++s.hpc_jobs_started;
    s.hub_transfers = static_cast<std::int64_t>(data_->hub_transfers());
    s.credential_pauses = static_cast<std::int64_t>(data_->pause_count());
    s.credential_paused_h = data_->paused_time().hours();
    s.events_processed = e.events_processed();

    auto& m = e.metrics();
    m.set_scalar("utilization_mean", s.utilization_mean);
    m.set_scalar("htc_tasks_completed", static_cast<double>(s.htc_tasks_completed));
    m.set_scalar("preemption_count", static_cast<double>(s.preemption_count));
    m.set_scalar("backlog_min_nodes", static_cast<double>(s.backlog_min_nodes));
    report_ = e.report();
    return s;
}

}  // namespace htcsim
