#include "htcsim/overlay.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "htcsim/errors.hpp"

namespace htcsim {

std::string_view to_string(OverlayMode m) {
    switch (m) {
        case OverlayMode::glidein: return "glidein";
        case OverlayMode::backfill_broker: return "backfill_broker";
    }
    return "?";
}

Overlay::Overlay(Engine& engine, Cluster& cluster, DataPlane& data, OverlayConfig config)
    : engine_(engine), cluster_(cluster), data_(data), config_(config) {}

void Overlay::start() {
    cluster_.on_start([this](const BatchJob& j) { on_job_start(j); });
    cluster_.on_end([this](const BatchJob& j, bool) { on_job_end(j); });
    data_.on_credential_change([this](bool valid) {
        if (!valid) return;
        auto deferred = std::move(deferred_stage_out_);
        deferred_stage_out_.clear();
        for (TaskId id : deferred) begin_stage_out(id);
        fill_all_pilots();
    });
    if (config_.enabled) schedule_broker();
}

void Overlay::schedule_broker() {
    engine_.schedule(engine_.now(), EventKind::scheduler_cycle, 0, [this] {
        broker_cycle();
        engine_.schedule(engine_.now() + config_.broker_period, EventKind::scheduler_cycle, 0,
                         [this] { schedule_broker(); }, "broker-tick");
    }, "broker");
}

int Overlay::slots_per_pilot(int nodes) const { return nodes * cluster_.config().cores_per_node; }

std::size_t Overlay::count(TaskState s) const {
    return static_cast<std::size_t>(
        std::count_if(tasks_.begin(), tasks_.end(), [s](const auto& kv) { return kv.second.state == s; }));
}

bool Overlay::remote_needed(const Task& t) const { return data_.needs_remote(t.dataset, t.input_gb); }

TaskId Overlay::add_task(Task task) {
    if (config_.osg_policy) {
        const auto v = validate(task, config_.policy);
        if (!v.empty()) throw InvalidSpec(fmt::format("task violates OSG policy ({})", to_string(v.front())));
    }
    if (task.id == 0) task.id = next_task_id_;
    if (tasks_.contains(task.id)) throw std::invalid_argument(fmt::format("duplicate task id {}", task.id));
    next_task_id_ = std::max(next_task_id_, task.id + 1);
    task.state = TaskState::pending;
    auto [it, _] = tasks_.emplace(task.id, std::move(task));
    pending_.insert(key_of(it->second));
    return it->first;
}

void Overlay::enqueue(Task& t) {
    t.state = TaskState::pending;
    pending_.insert(key_of(t));
}

BatchJob Overlay::submit_glidein(int nodes, SimTime walltime, int priority) {
    if (!data_.credential_valid()) throw CredentialExpired("credential expired; glidein not submitted");
    BatchJob job;
    job.nodes_requested = nodes;
    job.walltime_req = walltime;
    job.priority = priority;
    job.kind = JobKind::pilot;
    job.placement = Placement::transparent;
    job.preemptible = true;
    const JobId id = cluster_.submit(job);
    ++glideins_submitted_;
    return cluster_.job(id);
}

std::optional<TaskId> Overlay::match(JobId pilot_id) {
    auto p = pilots_.find(pilot_id);
    if (p == pilots_.end()) return std::nullopt;
    const Pilot& pilot = p->second;
    const SimTime now = engine_.now();
    if (!pilot.alive || !pilot.registered_at || pilot.busy_slots >= pilot.slots || now >= pilot.expires_at)
        return std::nullopt;
    const SimTime left = pilot.expires_at - now;
    const bool credential = data_.credential_valid();
    for (auto it = pending_.begin(); it != pending_.end(); ++it) {
        Task& t = tasks_.at(it->id);
        if (!credential && remote_needed(t)) continue;
        if (t.remaining_estimate() + data_.stage_in_estimate(t.dataset, t.input_gb) > left) continue;
        pending_.erase(it);
        t.state = TaskState::staging;
        return t.id;
    }
    return std::nullopt;
}

bool Overlay::dispatch(TaskId id, bool wrapper, JobId host, std::size_t lane) {
    Task& t = tasks_.at(id);
    if (config_.osg_policy && !validate(t, config_.policy).empty())
        throw InvariantViolation(fmt::format("task {} violates OSG policy at dispatch", id));
    const SimTime now = engine_.now();
    Binding b;
    b.wrapper = wrapper;
    b.host = host;
    b.lane = lane;
    const bool pinned = t.input_gb > 0 && data_.cache_enabled();
    if (pinned) data_.pin(t.dataset);
    t.state = TaskState::staging;
    if (t.input_gb > 0) {
        try {
            b.stage_in = data_.begin_transfer(t.dataset, t.input_gb, Direction::stage_in, [this, id] {
                start_running(id);
            });
        } catch (const CredentialExpired&) {
            if (pinned) data_.unpin(t.dataset);
            return false;
        } catch (const CacheFull&) {
            if (pinned) data_.unpin(t.dataset);
            return false;
        }
        b.staging_in = true;
    }
    ++t.attempts;
    if (!t.first_dispatch) t.first_dispatch = now;
    bindings_[id] = b;
    if (wrapper) {
        wrappers_.at(host).current[lane] = id;
    } else {
        ++pilots_.at(host).busy_slots;
    }
    engine_.record(EventKind::task_dispatch, id,
                   wrapper ? fmt::format("wrapper={} lane={} attempt={}", host, lane, t.attempts)
                           : fmt::format("pilot={} attempt={}", host, t.attempts));
    if (!b.staging_in) start_running(id);
    return true;
}

void Overlay::start_running(TaskId id) {
    Task& t = tasks_.at(id);
    Binding& b = bindings_.at(id);
    if (b.staging_in) {
        b.staging_in = false;
        if (data_.cache_enabled()) data_.unpin(t.dataset);
    }
    t.state = TaskState::running;
    b.run_started = engine_.now();
    b.completion = engine_.schedule(engine_.now() + t.remaining_actual(), EventKind::task_complete, id,
                                    [this, id] { on_complete(id); }, "run-end");
}

void Overlay::on_complete(TaskId id) {
    Task& t = tasks_.at(id);
    if (t.state != TaskState::running)
        throw DuplicateCompletion(fmt::format("task {} completion while {}", id, to_string(t.state)));
    auto node = bindings_.extract(id);
    const Binding& b = node.mapped();
    t.executed += engine_.now() - b.run_started;
    t.completed_work = t.actual_runtime;
    t.state = TaskState::staging;
    release_host_slot(b);
    begin_stage_out(id);
}

void Overlay::begin_stage_out(TaskId id) {
    Task& t = tasks_.at(id);
    if (t.output_gb <= 0) {
        finalize(id);
        return;
    }
    if (!data_.credential_valid()) {
        deferred_stage_out_.push_back(id);
        return;
    }
    data_.begin_transfer(t.dataset, t.output_gb, Direction::stage_out, [this, id] { finalize(id); });
}

void Overlay::finalize(TaskId id) {
    Task& t = tasks_.at(id);
    if (t.state == TaskState::completed || t.completions > 0)
        throw DuplicateCompletion(fmt::format("task {} completed twice", id));
    t.state = TaskState::completed;
    t.completions = 1;
    t.completed_at = engine_.now();
    ++completed_;
    engine_.record(EventKind::task_complete, id, fmt::format("completed executed_ms={}", t.executed.ms()));
}

void Overlay::release_host_slot(const Binding& b) {
    if (b.wrapper) {
        Wrapper& w = wrappers_.at(b.host);
        w.current[b.lane].reset();
        if (w.alive) advance_lane(w, b.lane);
        maybe_finish_wrapper(w);
    } else {
        Pilot& p = pilots_.at(b.host);
        --p.busy_slots;
        if (p.alive) fill_pilot(p);
    }
}

void Overlay::on_preempt(TaskId id) {
    Task& t = tasks_.at(id);
    auto node = bindings_.extract(id);
    if (node.empty()) throw std::logic_error(fmt::format("preempt: task {} has no host", id));
    const Binding& b = node.mapped();
    const SimTime now = engine_.now();
    PreemptionRecord rec{id, now, SimTime::zero(), SimTime::zero(), false};
    if (b.staging_in) {
        data_.cancel(b.stage_in);
        if (data_.cache_enabled()) data_.unpin(t.dataset);
    } else if (t.state == TaskState::running) {
        engine_.cancel(b.completion);
        const SimTime elapsed = now - b.run_started;
        t.executed += elapsed;
        const SimTime before = t.completed_work;
        const SimTime reached = std::min(before + elapsed, t.actual_runtime);
        SimTime kept = before;
        const SimTime& every = config_.checkpoint_interval;
        if (every == SimTime::zero()) {
            kept = reached;
        } else if (!every.is_infinite()) {
            kept = std::max(before, SimTime::from_ms(reached.ms() / every.ms() * every.ms()));
        }
        t.completed_work = kept;
        rec.elapsed = elapsed;
        rec.retained = kept - before;
        rec.was_running = true;
    }
    if (b.wrapper) {
        if (auto w = wrappers_.find(b.host); w != wrappers_.end()) w->second.current[b.lane].reset();
    } else if (auto p = pilots_.find(b.host); p != pilots_.end()) {
        --p->second.busy_slots;
    }
    t.state = TaskState::preempted;
    preemptions_.push_back(rec);
    engine_.record(EventKind::task_complete, id,
                   fmt::format("preempted elapsed_ms={} retained_ms={}", rec.elapsed.ms(), rec.retained.ms()));
    enqueue(t);
}

void Overlay::fill_pilot(Pilot& p) {
    if (filling_) return;
    filling_ = true;
    while (p.busy_slots < p.slots) {
        auto m = match(p.id);
        if (!m) break;
        if (!dispatch(*m, false, p.id, 0)) {
            enqueue(tasks_.at(*m));
            break;
        }
    }
    filling_ = false;
    if (p.alive && p.registered_at && p.busy_slots == 0) {
        // Idle and nothing fits: give the nodes back.
        const JobId id = p.id;
        engine_.schedule(engine_.now(), EventKind::pilot_expire, id, [this, id] {
            auto it = pilots_.find(id);
            if (it == pilots_.end() || !it->second.alive || it->second.busy_slots > 0) return;
            if (cluster_.job(id).state == JobState::running) cluster_.release(id);
        }, "idle");
    }
}

void Overlay::fill_all_pilots() {
    for (auto& [id, p] : pilots_)
        if (p.alive && p.registered_at) fill_pilot(p);
}

void Overlay::advance_lane(Wrapper& w, std::size_t lane) {
    auto& queue = w.lanes[lane];
    while (!queue.empty() && !w.current[lane]) {
        const TaskId id = queue.front();
        queue.pop_front();
        Task& t = tasks_.at(id);
        const SimTime left = SimTime::saturating_sub(w.expires_at, engine_.now());
        const bool fits = t.remaining_estimate() + data_.stage_in_estimate(t.dataset, t.input_gb) <= left;
        if (!fits || !dispatch(id, true, w.job, lane)) enqueue(t);
    }
}

void Overlay::maybe_finish_wrapper(Wrapper& w) {
    if (!w.alive || !w.started) return;
    for (std::size_t i = 0; i < w.lanes.size(); ++i)
        if (w.current[i] || !w.lanes[i].empty()) return;
    const JobId id = w.job;
    engine_.schedule(engine_.now(), EventKind::job_end, id, [this, id] {
        if (cluster_.job(id).state == JobState::running) cluster_.release(id);
    }, "wrapper-done");
}

void Overlay::on_job_start(const BatchJob& job) {
    const SimTime now = engine_.now();
    if (job.kind == JobKind::pilot) {
        Pilot p;
        p.id = job.id;
        p.batch_job_id = job.id;
        p.nodes = job.assigned_nodes;
        p.slots = slots_per_pilot(job.nodes_requested);
        p.expires_at = now + job.walltime_req;
        p.startup_latency = config_.startup_latency;
        pilots_[job.id] = std::move(p);
        const JobId id = job.id;
        engine_.schedule(now + config_.startup_latency, EventKind::pilot_register, id, [this, id] {
            Pilot& pl = pilots_.at(id);
            if (!pl.alive) return;
            pl.registered_at = engine_.now();
            fill_pilot(pl);
        });
    } else if (job.kind == JobKind::wrapper) {
        auto it = wrappers_.find(job.id);
        if (it == wrappers_.end()) return;
        Wrapper& w = it->second;
        w.started = true;
        w.expires_at = now + job.walltime_req;
        for (std::size_t lane = 0; lane < w.lanes.size(); ++lane) advance_lane(w, lane);
        maybe_finish_wrapper(w);
    }
}

void Overlay::on_job_end(const BatchJob& job) {
    std::vector<TaskId> bound;
    for (const auto& [tid, b] : bindings_)
        if (b.host == job.id && b.wrapper == (job.kind == JobKind::wrapper)) bound.push_back(tid);

    auto settle = [&](TaskId tid) {
        // A run ending at exactly the kill instant finished its work.
        Task& t = tasks_.at(tid);
        const Binding& b = bindings_.at(tid);
        if (t.state == TaskState::running && b.run_started + t.remaining_actual() == engine_.now()) {
            engine_.cancel(b.completion);
            on_complete(tid);
        } else {
            on_preempt(tid);
        }
    };

    if (job.kind == JobKind::pilot) {
        auto it = pilots_.find(job.id);
        if (it == pilots_.end()) return;
        it->second.alive = false;
        for (TaskId tid : bound) settle(tid);
    } else if (job.kind == JobKind::wrapper) {
        auto it = wrappers_.find(job.id);
        if (it == wrappers_.end()) return;
        Wrapper& w = it->second;
        w.alive = false;
        for (TaskId tid : bound) settle(tid);
        for (auto& lane : w.lanes) {
            for (TaskId tid : lane) enqueue(tasks_.at(tid));
            lane.clear();
        }
    }
}

WrapperPlan Overlay::pack_backfill(const BackfillWindow& window) {
    const int cores = cluster_.config().cores_per_node;
    const SimTime capacity = std::min(window.duration, config_.max_wrapper_walltime);
    const std::size_t max_lanes = static_cast<std::size_t>(window.node_count) * static_cast<std::size_t>(cores);
    // Candidates beyond a few per lane cannot change which lanes get filled
    // in practice, and keep packing cost bounded on large pools.
    const std::size_t limit = std::max<std::size_t>(64, max_lanes * 4);
    const bool credential = data_.credential_valid();

    std::vector<PackItem> items;
    for (const auto& key : pending_) {
        if (items.size() >= limit) break;
        const Task& t = tasks_.at(key.id);
        if (!credential && remote_needed(t)) continue;
        const SimTime size = t.remaining_estimate() + data_.stage_in_estimate(t.dataset, t.input_gb);
        items.push_back({t.id, std::max(size, SimTime::from_ms(1))});
    }
    WrapperPlan plan = pack_first_fit_decreasing(window, cores, capacity, items);
    if (!plan_is_feasible(plan, cores, capacity))
        throw InvariantViolation("wrapper plan violates its invariants");

    BatchJob job;
    job.nodes_requested = plan.nodes;
    job.walltime_req = plan.walltime;
    job.priority = config_.wrapper_priority;
    job.kind = JobKind::wrapper;
    job.placement = Placement::transparent;
    job.preemptible = true;
    const JobId id = cluster_.submit(std::move(job));
    ++wrappers_submitted_;

    Wrapper w;
    w.job = id;
    w.plan = plan;
    for (const auto& lane : plan.lanes) {
        w.lanes.emplace_back(lane.begin(), lane.end());
        for (TaskId tid : lane) {
            Task& t = tasks_.at(tid);
            pending_.erase(key_of(t));
            t.state = TaskState::staging;
        }
    }
    w.current.assign(plan.lanes.size(), std::nullopt);
    wrappers_.emplace(id, std::move(w));
    return plan;
}

BrokerActions Overlay::broker_cycle() {
    BrokerActions act;
    if (!config_.enabled || pending_.empty()) return act;

    if (config_.mode == OverlayMode::glidein) {
        int outstanding = 0;
        for (const auto& [id, j] : cluster_.jobs())
            if (j.kind == JobKind::pilot && (j.state == JobState::queued || j.state == JobState::running))
                ++outstanding;
        const int slots = std::max(1, slots_per_pilot(config_.pilot_nodes));
        const auto demand = static_cast<int>((pending_.size() + static_cast<std::size_t>(slots) - 1) /
                                             static_cast<std::size_t>(slots));
        const int want = std::min(config_.target_pilots - outstanding, demand);
        if (want <= 0) return act;
        if (!data_.credential_valid()) {
            act.credential_blocked = true;
            ++glidein_blocks_;
            return act;
        }
        for (int i = 0; i < want; ++i) {
            submit_glidein(config_.pilot_nodes, config_.pilot_walltime, config_.pilot_priority);
            ++act.glideins_submitted;
        }
        return act;
    }

    // Largest window first, greedily, until nothing more fits.
    cluster_.schedule_cycle();
    while (!pending_.empty()) {
        const auto windows = cluster_.query_backfill_windows();
        if (windows.empty()) break;
        WrapperPlan plan;
        try {
            plan = pack_backfill(windows.front());
        } catch (const EmptyPlan&) {
            break;
        }
        const JobId id = std::prev(wrappers_.end())->first;
        cluster_.schedule_cycle();
        if (cluster_.job(id).state != JobState::running) {
            cluster_.cancel(id);
            Wrapper& w = wrappers_.at(id);
            w.alive = false;
            for (auto& lane : w.lanes) {
                for (TaskId tid : lane) enqueue(tasks_.at(tid));
                lane.clear();
            }
            break;
        }
        ++act.wrappers_submitted;
        act.tasks_packed += plan.task_count();
    }
    return act;
}

}  // namespace htcsim
