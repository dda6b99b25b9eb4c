#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <string_view>
#include <vector>

#include "htcsim/cluster.hpp"
#include "htcsim/dataplane.hpp"
#include "htcsim/engine.hpp"
#include "htcsim/packing.hpp"
#include "htcsim/task.hpp"

namespace htcsim {

enum class OverlayMode { glidein, backfill_broker };
std::string_view to_string(OverlayMode m);

struct OverlayConfig {
    bool enabled = true;
    OverlayMode mode = OverlayMode::glidein;
    int target_pilots = 1;
    int pilot_nodes = 1;
    SimTime pilot_walltime = SimTime::from_hours(12);
    int pilot_priority = 0;
    /// Progress is kept in whole intervals; zero keeps everything, infinite
    /// keeps nothing.
    SimTime checkpoint_interval = SimTime::from_minutes(30);
    bool osg_policy = true;
    OsgPolicy policy;
    SimTime startup_latency = SimTime::from_seconds(60);
    SimTime broker_period = SimTime::from_seconds(300);
    SimTime max_wrapper_walltime = SimTime::from_hours(12);
    int wrapper_priority = -1000000;
};

/// A running glidein: a batch job that joined the overlay pool.
struct Pilot {
    JobId id = 0;  // equals the batch job id
    JobId batch_job_id = 0;
    std::vector<NodeId> nodes;
    int slots = 0;
    std::optional<SimTime> registered_at;
    SimTime expires_at = SimTime::infinite();
    int busy_slots = 0;
    SimTime startup_latency;
    bool alive = true;  // false once its batch job ended
};

struct Wrapper {
    JobId job = 0;
    WrapperPlan plan;
    std::vector<std::deque<TaskId>> lanes;  // tasks not yet started
    std::vector<std::optional<TaskId>> current;
    SimTime expires_at = SimTime::infinite();
    bool started = false;
    bool alive = true;
};

struct PreemptionRecord {
    TaskId task = 0;
    SimTime at;
    SimTime elapsed;   // run time of the killed attempt (zero while staging)
    SimTime retained;  // progress kept from that attempt
    bool was_running = false;
};

struct BrokerActions {
    int glideins_submitted = 0;
    int wrappers_submitted = 0;
    std::size_t tasks_packed = 0;
    bool credential_blocked = false;
};

/// The HTC side of the simulation: task pool, glidein pilots and the
/// backfill broker that wraps payloads into window-sized batch jobs.
class Overlay {
public:
    Overlay(Engine& engine, Cluster& cluster, DataPlane& data, OverlayConfig config);
    Overlay(const Overlay&) = delete;
    Overlay& operator=(const Overlay&) = delete;

    /// Hooks into cluster and data plane events and starts periodic broker
    /// cycles (first one at the current time).
    void start();

    /// Adds a task to the pending pool. With the OSG policy on, a task that
    /// breaks it is refused with InvalidSpec.
    TaskId add_task(Task task);

    /// Throws CredentialExpired when the proxy has lapsed.
    BatchJob submit_glidein(int nodes, SimTime walltime, int priority);
    /// Highest-priority pending task whose estimated runtime plus stage-in
    /// estimate fits the pilot's remaining lifetime; the task is marked
    /// staging and removed from the pending pool.
    std::optional<TaskId> match(JobId pilot);
    /// Packs pending tasks into the window, claims them and submits the
    /// wrapper job. Throws EmptyPlan when nothing fits.
    WrapperPlan pack_backfill(const BackfillWindow& window);
    void on_preempt(TaskId id);
    void on_complete(TaskId id);
    BrokerActions broker_cycle();

    const OverlayConfig& config() const { return config_; }
    const std::map<TaskId, Task>& tasks() const { return tasks_; }
    const Task& task(TaskId id) const { return tasks_.at(id); }
    const std::map<JobId, Pilot>& pilots() const { return pilots_; }
    const std::map<JobId, Wrapper>& wrappers() const { return wrappers_; }
    const std::vector<PreemptionRecord>& preemptions() const { return preemptions_; }

    std::size_t pending_count() const { return pending_.size(); }
    std::size_t count(TaskState s) const;
    std::size_t completed_count() const { return completed_; }
    int glideins_submitted() const { return glideins_submitted_; }
    int wrappers_submitted() const { return wrappers_submitted_; }
    int glidein_blocks() const { return glidein_blocks_; }
    int slots_per_pilot(int nodes) const;

private:
    struct PendingKey {
        int neg_priority;
        SimTime arrival;
        TaskId id;
        friend auto operator<=>(const PendingKey&, const PendingKey&) = default;
    };
    struct Binding {
        bool wrapper = false;
        JobId host = 0;
        std::size_t lane = 0;
        TransferId stage_in = 0;
        bool staging_in = false;
        EventId completion = 0;
        SimTime run_started;
    };

    static PendingKey key_of(const Task& t) { return {-t.priority, t.arrival, t.id}; }
    void enqueue(Task& t);
    bool dispatch(TaskId id, bool wrapper, JobId host, std::size_t lane);
    void start_running(TaskId id);
    void finalize(TaskId id);
    void fill_pilot(Pilot& p);
    void fill_all_pilots();
    void advance_lane(Wrapper& w, std::size_t lane);
    void maybe_finish_wrapper(Wrapper& w);
    void on_job_start(const BatchJob& job);
    void on_job_end(const BatchJob& job);
    void begin_stage_out(TaskId id);
    void release_host_slot(const Binding& b);
    void schedule_broker();
    bool remote_needed(const Task& t) const;

    Engine& engine_;
    Cluster& cluster_;
    DataPlane& data_;
    OverlayConfig config_;

    std::map<TaskId, Task> tasks_;
    std::set<PendingKey> pending_;
    std::map<TaskId, Binding> bindings_;
    std::map<JobId, Pilot> pilots_;
    std::map<JobId, Wrapper> wrappers_;
    std::vector<TaskId> deferred_stage_out_;
    std::vector<PreemptionRecord> preemptions_;
    TaskId next_task_id_ = 1;
    std::size_t completed_ = 0;
    int glideins_submitted_ = 0;
    int wrappers_submitted_ = 0;
    int glidein_blocks_ = 0;
    bool filling_ = false;
};

}  // namespace htcsim
