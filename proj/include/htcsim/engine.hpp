#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <queue>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "htcsim/sim_time.hpp"

namespace htcsim {

enum class EventKind {
    job_arrival,
    job_start,
    job_end,
    pilot_register,
    pilot_expire,
    task_dispatch,
    task_complete,
    transfer_complete,
    credential_renewal,
    scheduler_cycle,
    metric_sample,
};

std::string_view to_string(EventKind kind);

using EventId = std::uint64_t;

struct Event {
    SimTime fire_at;
    std::uint64_t seq = 0;  // assigned by Engine::schedule
    EventKind kind = EventKind::scheduler_cycle;
    std::uint64_t entity = 0;
    std::string detail;
    std::function<void()> action;
};

/// One line of the event trace: `<time_ms> <kind> <entity_id> <detail>`.
struct TraceRecord {
    SimTime time;
    EventKind kind;
    std::uint64_t entity;
    std::string detail;

    std::string to_line() const;
};

struct MetricSeries {
    std::string name;
    std::vector<std::pair<SimTime, double>> samples;
};

/// Everything a run produced: the sampled series plus end-of-run scalars.
struct SimReport {
    SimTime clock;
    std::uint64_t events_processed = 0;
    std::vector<MetricSeries> series;
    std::map<std::string, double> scalars;

    const MetricSeries* find(std::string_view name) const;
    /// `time_ms,metric,value` rows, series in registration order.
    std::string to_csv() const;
};

/// Named time series sampled at the engine clock. Several samples at the
/// same instant are allowed (times are nondecreasing, not strictly
/// increasing), which happens when one handler records a batch.
class Metrics {
public:
    explicit Metrics(const SimTime* clock) : clock_(clock) {}

    void register_series(std::string name);
    bool has(std::string_view name) const;
    void sample(std::string_view name, double value);
    void set_scalar(std::string name, double value) { scalars_[std::move(name)] = value; }

    const MetricSeries& series(std::string_view name) const;
    const std::vector<MetricSeries>& all() const { return series_; }
    const std::map<std::string, double>& scalars() const { return scalars_; }

private:
    std::size_t index_of(std::string_view name) const;

    const SimTime* clock_;
    std::vector<MetricSeries> series_;
    std::map<std::string, std::size_t, std::less<>> index_;
    std::map<std::string, double> scalars_;
};

/// Single-threaded discrete-event loop.
///
/// Events are ordered by (fire_at, seq); seq is the insertion counter, so
/// same-instant events run in the order they were scheduled. Cancelled
/// events are dropped lazily when they reach the front of the queue.
class Engine {
public:
    using TraceSink = std::function<void(const TraceRecord&)>;

    Engine();
    Engine(const Engine&) = delete;
    Engine& operator=(const Engine&) = delete;

    SimTime now() const { return clock_; }

    /// Throws PastEvent when `event.fire_at` is earlier than the clock.
    EventId schedule(Event event);
    EventId schedule(SimTime at, EventKind kind, std::uint64_t entity, std::function<void()> action,
                     std::string detail = {});
    /// Returns false if the event already ran or was never scheduled.
    bool cancel(EventId id);
    bool is_pending(EventId id) const;

    /// Processes every event with fire_at <= t_end, then advances the clock
    /// to t_end.
    SimReport run_until(SimTime t_end);

    /// Emits a trace record for something that happened inside a handler
    /// without its own queue entry (a job starting during a scheduler cycle).
    void record(EventKind kind, std::uint64_t entity, std::string detail = {});
    void set_trace_sink(TraceSink sink) { trace_ = std::move(sink); }

    Metrics& metrics() { return metrics_; }
    const Metrics& metrics() const { return metrics_; }
    void sample(std::string_view name, double value) { metrics_.sample(name, value); }

    std::size_t pending_events() const { return queue_.size() - cancelled_.size(); }
    std::uint64_t events_processed() const { return processed_; }

    SimReport report() const;

private:
    struct Later {
        bool operator()(const Event& a, const Event& b) const {
            if (a.fire_at != b.fire_at) return a.fire_at > b.fire_at;
            return a.seq > b.seq;
        }
    };

    SimTime clock_;
    std::uint64_t next_seq_ = 0;
    std::uint64_t processed_ = 0;
    std::priority_queue<Event, std::vector<Event>, Later> queue_;
    std::unordered_set<EventId> live_;
    std::unordered_set<EventId> cancelled_;
    Metrics metrics_;
    TraceSink trace_;
};

}  // namespace htcsim
