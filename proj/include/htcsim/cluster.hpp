#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string_view>
#include <tuple>
#include <vector>

#include "htcsim/engine.hpp"
#include "htcsim/sim_time.hpp"
#include "htcsim/torus.hpp"

namespace htcsim {

using JobId = std::uint64_t;

enum class JobKind { hpc, pilot, wrapper };
enum class Placement { topology_aware, transparent };
enum class JobState { created, queued, running, completed, expired, cancelled };
enum class NodeState { idle, busy, drained };

std::string_view to_string(JobKind k);
std::string_view to_string(Placement p);

struct Node {
    NodeId id = 0;
    int cores = 0;
    double memory_gb = 0;
    Coord coord;
    NodeState state = NodeState::idle;
    JobId job = 0;  // valid when busy
};

struct BatchJob {
    JobId id = 0;  // 0 = let the cluster assign one
    int nodes_requested = 1;
    SimTime walltime_req;
    /// True runtime, hidden from the scheduler. Infinite means the job holds
    /// its nodes until killed at walltime or released by its owner.
    SimTime runtime = SimTime::infinite();
    int priority = 0;  // higher starts sooner
    JobKind kind = JobKind::hpc;
    Placement placement = Placement::transparent;
    bool preemptible = false;
    SimTime arrival;
    std::vector<NodeId> assigned_nodes;
    std::optional<SimTime> start;
    std::optional<SimTime> end;
    JobState state = JobState::created;
};

struct BackfillWindow {
    int node_count = 0;
    SimTime start;
    SimTime duration;  // SimTime::infinite() when no reservation limits it

    bool unbounded() const { return duration.is_infinite(); }
    friend bool operator==(const BackfillWindow&, const BackfillWindow&) = default;
};

struct Reservation {
    JobId job = 0;
    SimTime start;  // infinite when the head can never be placed
    std::vector<NodeId> nodes;
};

struct ClusterConfig {
    int nodes = 4;
    int cores_per_node = 32;
    double memory_gb = 64.0;
    /// {0,0,0} means a ring of `nodes` along x.
    std::array<int, 3> torus{0, 0, 0};
    Placement placement = Placement::transparent;
    double compactness_limit = 2.0;
    SimTime scheduler_period = SimTime::from_seconds(60);
    bool backfill = true;
};

struct BusyInterval {
    SimTime start;
    SimTime end;
    JobId job;
    JobKind kind;
};

/// One HPC machine: torus-embedded nodes, a priority queue scheduled with
/// EASY backfill, and busy-time accounting.
///
/// The queue is ordered by priority (descending), then arrival, then id.
/// Each cycle starts jobs from the front while they fit; the first job that
/// does not fit gets a reservation at the earliest instant enough nodes are
/// free under current walltimes, and later jobs start only if they end by
/// that instant or avoid the reserved nodes.
class Cluster {
public:
    using StartListener = std::function<void(const BatchJob&)>;
    using EndListener = std::function<void(const BatchJob&, bool expired)>;
    using CycleListener = std::function<void()>;

    Cluster(Engine& engine, ClusterConfig config);
    Cluster(const Cluster&) = delete;
    Cluster& operator=(const Cluster&) = delete;

    const ClusterConfig& config() const { return config_; }
    const Torus& torus() const { return torus_; }
    int size() const { return static_cast<int>(nodes_.size()); }
    const Node& node(NodeId id) const { return nodes_.at(static_cast<std::size_t>(id)); }

    /// Queues the job and requests a scheduler cycle at the current time.
    /// Throws TooLarge when the job can never be placed on this machine.
    JobId submit(BatchJob job);
    std::vector<JobId> schedule_cycle();
    /// Holes usable without delaying the head reservation, as of the last
    /// cycle; largest node count first.
    std::vector<BackfillWindow> query_backfill_windows() const;
    /// Transparent: lowest free ids. Topology-aware: most compact subset, or
    /// nullopt when its bounding volume exceeds compactness_limit x size.
    std::optional<std::vector<NodeId>> place(const BatchJob& job, std::span<const NodeId> free) const;

    /// Ends a running job now (its owner finished early, e.g. an idle pilot).
    void release(JobId id);
    /// Removes a queued job.
    void cancel(JobId id);
    void drain(NodeId id);
    void undrain(NodeId id);

    /// Busy core-seconds over total core-seconds in [from, to). Throws
    /// EmptyWindow when to <= from.
    double utilization(SimTime from, SimTime to) const;
    /// Busy fraction right now.
    double current_utilization() const;
    double current_utilization(JobKind kind) const;

    void start_periodic_cycles();
    void request_cycle();

    const BatchJob& job(JobId id) const { return jobs_.at(id); }
    bool has_job(JobId id) const { return jobs_.contains(id); }
    const std::map<JobId, BatchJob>& jobs() const { return jobs_; }
    std::vector<JobId> queued() const;
    std::vector<JobId> running() const;
    const std::optional<Reservation>& reservation() const { return reservation_; }

    int idle_nodes() const { return idle_count_; }
    int busy_nodes() const { return busy_count_; }
    int drained_nodes() const { return drained_count_; }
    std::int64_t queued_nodes(JobKind kind) const;

    /// Busy core-milliseconds from the running integral updated at every
    /// state change.
    std::int64_t busy_core_ms() const;
    std::int64_t busy_core_ms(JobKind kind) const;
    /// The same quantity summed from per-node busy intervals.
    std::int64_t interval_core_ms() const;
    const std::vector<std::vector<BusyInterval>>& node_intervals() const { return intervals_; }

    std::uint64_t reservation_delays() const { return reservation_delays_; }
    std::uint64_t cycles_run() const { return cycles_; }

    void on_start(StartListener l) { start_listeners_.push_back(std::move(l)); }
    void on_end(EndListener l) { end_listeners_.push_back(std::move(l)); }
    void on_cycle(CycleListener l) { cycle_listeners_.push_back(std::move(l)); }

    /// Recounts node states and checks disjointness of running jobs; throws
    /// InvariantViolation on any mismatch.
    void check_invariants() const;

private:
    struct QueueKey {
        int neg_priority;
        SimTime arrival;
        JobId id;
        friend auto operator<=>(const QueueKey&, const QueueKey&) = default;
    };
    static QueueKey key_of(const BatchJob& j) { return {-j.priority, j.arrival, j.id}; }

    std::vector<NodeId> free_list() const;
    Reservation compute_reservation(const BatchJob& head, const std::vector<NodeId>& free) const;
    void start_job(BatchJob& job, const std::vector<NodeId>& nodes);
    void finish(JobId id, bool expired);
    void advance_accounting();
    void backfill(std::set<QueueKey>::iterator it, std::vector<NodeId>& free, std::vector<JobId>& started);

    Engine& engine_;
    ClusterConfig config_;
    Torus torus_;
    std::vector<Node> nodes_;
    std::map<JobId, BatchJob> jobs_;
    std::set<QueueKey> queue_;
    std::set<JobId> running_;
    std::map<JobId, std::pair<EventId, EventId>> end_events_;  // natural end, kill
    JobId next_id_ = 1;

    bool dirty_ = false;
    std::optional<SimTime> pending_cycle_;
    std::optional<Reservation> reservation_;
    std::optional<std::pair<JobId, SimTime>> head_promise_;
    std::uint64_t reservation_delays_ = 0;
    std::uint64_t cycles_ = 0;
    std::map<int, bool> placeable_cache_;

    int idle_count_ = 0, busy_count_ = 0, drained_count_ = 0;
    std::array<std::int64_t, 3> busy_cores_{};  // by JobKind
    std::array<std::int64_t, 3> busy_integral_{};
    std::array<std::int64_t, 3> queued_nodes_{};
    SimTime last_change_;
    std::vector<std::vector<BusyInterval>> intervals_;
    std::vector<SimTime> open_since_;

    std::vector<StartListener> start_listeners_;
    std::vector<EndListener> end_listeners_;
    std::vector<CycleListener> cycle_listeners_;
};

}  // namespace htcsim
