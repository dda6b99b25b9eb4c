#include "htcsim/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <fmt/format.h>

#include "htcsim/errors.hpp"

namespace htcsim {

std::string_view to_string(JobKind k) {
    switch (k) {
        case JobKind::hpc: return "hpc";
        case JobKind::pilot: return "pilot";
        case JobKind::wrapper: return "wrapper";
    }
    return "?";
}

std::string_view to_string(Placement p) {
    return p == Placement::topology_aware ? "topology_aware" : "transparent";
}

namespace {

std::array<int, 3> resolve_dims(const ClusterConfig& c) {
    if (c.torus[0] == 0 && c.torus[1] == 0 && c.torus[2] == 0) return {c.nodes, 1, 1};
    return c.torus;
}

std::size_t kind_index(JobKind k) { return static_cast<std::size_t>(k); }

void remove_sorted(std::vector<NodeId>& from, const std::vector<NodeId>& sorted_ids) {
    std::vector<NodeId> out;
    out.reserve(from.size());
    std::set_difference(from.begin(), from.end(), sorted_ids.begin(), sorted_ids.end(), std::back_inserter(out));
    from.swap(out);
}

}  // namespace

Cluster::Cluster(Engine& engine, ClusterConfig config)
    : engine_(engine), config_(config), torus_(resolve_dims(config), config.nodes) {
    if (config_.cores_per_node <= 0) throw std::invalid_argument("cores_per_node must be positive");
    if (config_.compactness_limit < 1.0) throw std::invalid_argument("compactness_limit must be >= 1");
    config_.torus = torus_.dims();
    nodes_.reserve(static_cast<std::size_t>(config_.nodes));
    for (NodeId i = 0; i < config_.nodes; ++i)
        nodes_.push_back(Node{i, config_.cores_per_node, config_.memory_gb, torus_.coord(i), NodeState::idle, 0});
    idle_count_ = config_.nodes;
    intervals_.resize(nodes_.size());
    open_since_.resize(nodes_.size());
    last_change_ = engine_.now();
}

std::vector<NodeId> Cluster::free_list() const {
    std::vector<NodeId> out;
    out.reserve(static_cast<std::size_t>(idle_count_));
    for (const auto& n : nodes_)
        if (n.state == NodeState::idle) out.push_back(n.id);
    return out;
}

std::optional<std::vector<NodeId>> Cluster::place(const BatchJob& job, std::span<const NodeId> free) const {
    const int k = job.nodes_requested;
    if (k <= 0 || static_cast<int>(free.size()) < k) return std::nullopt;
    if (job.placement == Placement::transparent) {
        std::vector<NodeId> ids(free.begin(), free.end());
        std::partial_sort(ids.begin(), ids.begin() + k, ids.end());
        ids.resize(static_cast<std::size_t>(k));
        return ids;
    }
    const auto limit = static_cast<std::int64_t>(std::floor(config_.compactness_limit * k + 1e-9));
    return torus_.compact_subset(free, k, limit);
}

JobId Cluster::submit(BatchJob job) {
    if (job.id == 0) job.id = next_id_;
    if (jobs_.contains(job.id)) throw std::invalid_argument(fmt::format("job {} already submitted", job.id));
    next_id_ = std::max(next_id_, job.id + 1);
    if (job.nodes_requested <= 0) throw std::invalid_argument("nodes_requested must be positive");
    if (job.walltime_req <= SimTime::zero() || job.walltime_req.is_infinite())
        throw std::invalid_argument("walltime must be positive and finite");
    if (job.nodes_requested > size())
        throw TooLarge(fmt::format("job {} requests {} nodes, cluster has {}", job.id, job.nodes_requested, size()));
    if (job.placement == Placement::topology_aware) {
        auto [it, fresh] = placeable_cache_.try_emplace(job.nodes_requested, false);
        if (fresh) {
            std::vector<NodeId> all(nodes_.size());
            for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<NodeId>(i);
            it->second = place(job, all).has_value();
        }
        if (!it->second)
            throw TooLarge(fmt::format("job {} ({} nodes) has no placement within compactness limit", job.id,
                                       job.nodes_requested));
    }
    if (job.kind == JobKind::wrapper) job.preemptible = true;
    job.arrival = engine_.now();
    job.state = JobState::queued;
    job.assigned_nodes.clear();
    job.start.reset();
    job.end.reset();
    const JobId id = job.id;
    engine_.record(EventKind::job_arrival, id,
                   fmt::format("kind={} nodes={} walltime_ms={}", to_string(job.kind), job.nodes_requested,
                               job.walltime_req.ms()));
    queue_.insert(key_of(job));
    queued_nodes_[kind_index(job.kind)] += job.nodes_requested;
    jobs_.emplace(id, std::move(job));
    dirty_ = true;
    request_cycle();
    return id;
}

void Cluster::request_cycle() {
    if (pending_cycle_ && *pending_cycle_ == engine_.now()) return;
    pending_cycle_ = engine_.now();
    engine_.schedule(engine_.now(), EventKind::scheduler_cycle, 0, [this] {
        pending_cycle_.reset();
        schedule_cycle();
    });
}

void Cluster::start_periodic_cycles() {
    const SimTime next = engine_.now() + config_.scheduler_period;
    engine_.schedule(next, EventKind::scheduler_cycle, 0, [this] {
        schedule_cycle();
        start_periodic_cycles();
    }, "periodic");
}

Reservation Cluster::compute_reservation(const BatchJob& head, const std::vector<NodeId>& free) const {
    struct Ending {
        SimTime at;
        JobId id;
    };
    std::vector<Ending> endings;
    for (JobId id : running_) {
        const auto& j = jobs_.at(id);
        endings.push_back({*j.start + j.walltime_req, id});
    }
    std::sort(endings.begin(), endings.end(),
              [](const Ending& a, const Ending& b) { return std::tie(a.at, a.id) < std::tie(b.at, b.id); });

    std::vector<NodeId> avail = free;
    std::size_t i = 0;
    while (i < endings.size()) {
        const SimTime t = endings[i].at;
        for (; i < endings.size() && endings[i].at == t; ++i) {
            const auto& nodes = jobs_.at(endings[i].id).assigned_nodes;
            avail.insert(avail.end(), nodes.begin(), nodes.end());
        }
        std::sort(avail.begin(), avail.end());
        if (auto nodes = place(head, avail)) return Reservation{head.id, t, std::move(*nodes)};
    }
    return Reservation{head.id, SimTime::infinite(), {}};
}

std::vector<JobId> Cluster::schedule_cycle() {
    std::vector<JobId> started;
    if (dirty_) {
        dirty_ = false;
        ++cycles_;
        std::vector<NodeId> free = free_list();
        auto it = queue_.begin();
        while (it != queue_.end()) {
            BatchJob& j = jobs_.at(it->id);
            auto nodes = place(j, free);
            if (!nodes) break;
            // A job that overtook the promised head (higher priority arrival)
            // voids the promise; only backfill is bound by it.
            if (head_promise_ && head_promise_->first != j.id) head_promise_.reset();
            std::sort(nodes->begin(), nodes->end());
            remove_sorted(free, *nodes);
            start_job(j, *nodes);
            started.push_back(j.id);
            queued_nodes_[kind_index(j.kind)] -= j.nodes_requested;
            it = queue_.erase(it);
        }
        reservation_.reset();
        if (it == queue_.end()) {
            head_promise_.reset();
        } else {
            const BatchJob& head = jobs_.at(it->id);
            reservation_ = compute_reservation(head, free);
            if (head_promise_ && head_promise_->first == head.id) {
                if (reservation_->start > head_promise_->second) {
                    ++reservation_delays_;
                    throw InvariantViolation(fmt::format("EASY: head job {} reservation moved from {} to {} ms",
                                                         head.id, head_promise_->second.ms(),
                                                         reservation_->start.ms()));
                }
            } else {
                head_promise_ = std::make_pair(head.id, reservation_->start);
            }
            if (config_.backfill) backfill(std::next(it), free, started);
        }
    }
    for (auto& l : cycle_listeners_) l();
    return started;
}

void Cluster::backfill(std::set<QueueKey>::iterator it, std::vector<NodeId>& free, std::vector<JobId>& started) {
    const Reservation& res = *reservation_;
    std::vector<char> reserved(nodes_.size(), 0);
    for (NodeId n : res.nodes) reserved[static_cast<std::size_t>(n)] = 1;
    auto unreserved = [&] {
        std::vector<NodeId> out;
        for (NodeId n : free)
            if (!reserved[static_cast<std::size_t>(n)]) out.push_back(n);
        return out;
    };
    std::vector<NodeId> outside = unreserved();

    // Failed (variant, placement, size) attempts stay failed while the free
    // set only shrinks within this cycle.
    std::set<std::tuple<int, int, int>> failed;
    auto try_place = [&](const BatchJob& j, const std::vector<NodeId>& pool, int variant) {
        const auto key = std::make_tuple(variant, static_cast<int>(j.placement), j.nodes_requested);
        if (failed.contains(key)) return std::optional<std::vector<NodeId>>{};
        auto r = place(j, pool);
        if (!r) failed.insert(key);
        return r;
    };

    const SimTime now = engine_.now();
    while (it != queue_.end() && !free.empty()) {
        BatchJob& j = jobs_.at(it->id);
        std::optional<std::vector<NodeId>> nodes = try_place(j, outside, 0);
        if (!nodes && now + j.walltime_req <= res.start) nodes = try_place(j, free, 1);
        if (!nodes) {
            ++it;
            continue;
        }
        std::sort(nodes->begin(), nodes->end());
        remove_sorted(free, *nodes);
        remove_sorted(outside, *nodes);
        queued_nodes_[kind_index(j.kind)] -= j.nodes_requested;
        start_job(j, *nodes);
        started.push_back(j.id);
            it = queue_.erase(it);
    }
}

void Cluster::advance_accounting() {
    const SimTime now = engine_.now();
    const std::int64_t dt = (now - last_change_).ms();
    for (std::size_t k = 0; k < busy_cores_.size(); ++k) busy_integral_[k] += busy_cores_[k] * dt;
    last_change_ = now;
}

void Cluster::start_job(BatchJob& job, const std::vector<NodeId>& nodes) {
    if (static_cast<int>(nodes.size()) != job.nodes_requested)
        throw InvariantViolation(fmt::format("job {} placed on {} nodes", job.id, nodes.size()));
    advance_accounting();
    const SimTime now = engine_.now();
    for (NodeId n : nodes) {
        Node& node = nodes_[static_cast<std::size_t>(n)];
        if (node.state != NodeState::idle)
            throw InvariantViolation(fmt::format("node {} not idle when starting job {}", n, job.id));
        node.state = NodeState::busy;
        node.job = job.id;
        open_since_[static_cast<std::size_t>(n)] = now;
        busy_cores_[kind_index(job.kind)] += node.cores;
    }
    idle_count_ -= static_cast<int>(nodes.size());
    busy_count_ += static_cast<int>(nodes.size());
    job.assigned_nodes = nodes;
    job.start = now;
    job.state = JobState::running;
    running_.insert(job.id);

    if (head_promise_ && head_promise_->first == job.id) {
        if (now > head_promise_->second) {
            ++reservation_delays_;
            throw InvariantViolation(fmt::format("EASY: head job {} started at {} after reservation {} ms", job.id,
                                                 now.ms(), head_promise_->second.ms()));
        }
        head_promise_.reset();
    }

    const JobId id = job.id;
    EventId natural = std::numeric_limits<EventId>::max();
    if (job.runtime < job.walltime_req)
        natural = engine_.schedule(now + job.runtime, EventKind::job_end, id, [this, id] { finish(id, false); },
                                   "complete");
    const EventKind kill_kind = job.kind == JobKind::pilot ? EventKind::pilot_expire : EventKind::job_end;
    const EventId kill =
        engine_.schedule(now + job.walltime_req, kill_kind, id, [this, id] { finish(id, true); }, "walltime");
    end_events_[id] = {natural, kill};

    engine_.record(EventKind::job_start, id,
                   fmt::format("kind={} nodes={} first={}", to_string(job.kind), nodes.size(), nodes.front()));
    for (auto& l : start_listeners_) l(job);
}

void Cluster::finish(JobId id, bool expired) {
    BatchJob& job = jobs_.at(id);
    if (job.state != JobState::running) throw InvariantViolation(fmt::format("job {} is not running", id));
    advance_accounting();
    const SimTime now = engine_.now();
    if (now - *job.start > job.walltime_req)
        throw InvariantViolation(fmt::format("job {} exceeded its walltime", id));
    if (auto ev = end_events_.find(id); ev != end_events_.end()) {
        engine_.cancel(ev->second.first);
        engine_.cancel(ev->second.second);
        end_events_.erase(ev);
    }
    for (NodeId n : job.assigned_nodes) {
        Node& node = nodes_[static_cast<std::size_t>(n)];
        node.state = NodeState::idle;
        node.job = 0;
        intervals_[static_cast<std::size_t>(n)].push_back(
            BusyInterval{open_since_[static_cast<std::size_t>(n)], now, id, job.kind});
        busy_cores_[kind_index(job.kind)] -= node.cores;
    }
    idle_count_ += static_cast<int>(job.assigned_nodes.size());
    busy_count_ -= static_cast<int>(job.assigned_nodes.size());
    job.end = now;
    job.state = expired ? JobState::expired : JobState::completed;
    running_.erase(id);
    dirty_ = true;
    request_cycle();
    for (auto& l : end_listeners_) l(job, expired);
}

void Cluster::release(JobId id) {
    if (jobs_.at(id).state != JobState::running) throw std::logic_error("release: job not running");
    engine_.record(EventKind::job_end, id, "released");
    finish(id, false);
}

void Cluster::cancel(JobId id) {
    BatchJob& job = jobs_.at(id);
    if (job.state != JobState::queued) throw std::logic_error("cancel: job not queued");
    queue_.erase(key_of(job));
    queued_nodes_[kind_index(job.kind)] -= job.nodes_requested;
    job.state = JobState::cancelled;
    if (head_promise_ && head_promise_->first == id) head_promise_.reset();
    dirty_ = true;
    engine_.record(EventKind::job_end, id, "cancelled");
}

void Cluster::drain(NodeId id) {
    Node& n = nodes_.at(static_cast<std::size_t>(id));
    if (n.state != NodeState::idle) throw std::logic_error("drain: node not idle");
    if (reservation_ && std::find(reservation_->nodes.begin(), reservation_->nodes.end(), id) !=
                            reservation_->nodes.end())
        throw std::logic_error("drain: node is reserved for the head job");
    n.state = NodeState::drained;
    --idle_count_;
    ++drained_count_;
    dirty_ = true;
}

void Cluster::undrain(NodeId id) {
    Node& n = nodes_.at(static_cast<std::size_t>(id));
    if (n.state != NodeState::drained) throw std::logic_error("undrain: node not drained");
    n.state = NodeState::idle;
    ++idle_count_;
    --drained_count_;
    dirty_ = true;
    request_cycle();
}

std::vector<BackfillWindow> Cluster::query_backfill_windows() const {
    const SimTime now = engine_.now();
    const int free = idle_count_;
    if (free == 0) return {};
    if (!reservation_ || reservation_->start.is_infinite()) return {BackfillWindow{free, now, SimTime::infinite()}};

    int outside = 0;
    for (const auto& n : nodes_)
        if (n.state == NodeState::idle &&
            std::find(reservation_->nodes.begin(), reservation_->nodes.end(), n.id) == reservation_->nodes.end())
            ++outside;

    std::vector<BackfillWindow> out;
    if (outside > 0) out.push_back({outside, now, SimTime::infinite()});
    if (reservation_->start > now && free > outside) out.push_back({free, now, reservation_->start - now});
    std::sort(out.begin(), out.end(), [](const BackfillWindow& a, const BackfillWindow& b) {
        return a.node_count > b.node_count;
    });
    return out;
}

double Cluster::utilization(SimTime from, SimTime to) const {
    if (to <= from) throw EmptyWindow("utilization window is empty");
    if (to > engine_.now()) throw std::out_of_range("utilization window extends past the clock");
    std::int64_t busy = 0, total = 0;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        std::int64_t node_busy = 0;
        auto add = [&](SimTime s, SimTime e) {
            const SimTime lo = std::max(s, from), hi = std::min(e, to);
            if (hi > lo) node_busy += (hi - lo).ms();
        };
        for (const auto& iv : intervals_[i]) add(iv.start, iv.end);
        if (nodes_[i].state == NodeState::busy) add(open_since_[i], engine_.now());
        busy += node_busy * nodes_[i].cores;
        total += (to - from).ms() * nodes_[i].cores;
    }
    return static_cast<double>(busy) / static_cast<double>(total);
}

double Cluster::current_utilization() const {
    std::int64_t busy = 0;
    for (auto c : busy_cores_) busy += c;
    return static_cast<double>(busy) / (static_cast<double>(size()) * config_.cores_per_node);
}

double Cluster::current_utilization(JobKind kind) const {
    return static_cast<double>(busy_cores_[kind_index(kind)]) / (static_cast<double>(size()) * config_.cores_per_node);
}

std::vector<JobId> Cluster::queued() const {
    std::vector<JobId> out;
    for (const auto& k : queue_) out.push_back(k.id);
    return out;
}

std::vector<JobId> Cluster::running() const { return {running_.begin(), running_.end()}; }

std::int64_t Cluster::queued_nodes(JobKind kind) const { return queued_nodes_[kind_index(kind)]; }

std::int64_t Cluster::busy_core_ms() const {
    std::int64_t s = 0;
    for (auto k : {JobKind::hpc, JobKind::pilot, JobKind::wrapper}) s += busy_core_ms(k);
    return s;
}

std::int64_t Cluster::busy_core_ms(JobKind kind) const {
    const std::int64_t dt = (engine_.now() - last_change_).ms();
    return busy_integral_[kind_index(kind)] + busy_cores_[kind_index(kind)] * dt;
}

std::int64_t Cluster::interval_core_ms() const {
    std::int64_t s = 0;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        std::int64_t node_ms = 0;
        for (const auto& iv : intervals_[i]) node_ms += (iv.end - iv.start).ms();
        if (nodes_[i].state == NodeState::busy) node_ms += (engine_.now() - open_since_[i]).ms();
        s += node_ms * nodes_[i].cores;
    }
    return s;
}

void Cluster::check_invariants() const {
    int idle = 0, busy = 0, drained = 0;
    for (const auto& n : nodes_) {
        switch (n.state) {
            case NodeState::idle: ++idle; break;
            case NodeState::busy: ++busy; break;
            case NodeState::drained: ++drained; break;
        }
    }
    if (idle != idle_count_ || busy != busy_count_ || drained != drained_count_ ||
        idle + busy + drained != size())
        throw InvariantViolation("node state counts out of balance");
    std::vector<JobId> owner(nodes_.size(), 0);
    for (JobId id : running_) {
        const auto& j = jobs_.at(id);
        if (j.state != JobState::running) throw InvariantViolation(fmt::format("job {} listed as running", id));
        if (static_cast<int>(j.assigned_nodes.size()) != j.nodes_requested)
            throw InvariantViolation(fmt::format("job {} holds the wrong node count", id));
        if (engine_.now() - *j.start > j.walltime_req)
            throw InvariantViolation(fmt::format("job {} running past walltime", id));
        for (NodeId n : j.assigned_nodes) {
            auto& o = owner[static_cast<std::size_t>(n)];
            if (o != 0) throw InvariantViolation(fmt::format("node {} shared by jobs {} and {}", n, o, id));
            o = id;
            if (nodes_[static_cast<std::size_t>(n)].job != id)
                throw InvariantViolation(fmt::format("node {} does not record job {}", n, id));
        }
    }
}

}  // namespace htcsim
