#include "htcsim/engine.hpp"

#include <fmt/format.h>

#include "htcsim/errors.hpp"

namespace htcsim {

std::string_view to_string(EventKind kind) {
    switch (kind) {
        case EventKind::job_arrival: return "job-arrival";
        case EventKind::job_start: return "job-start";
        case EventKind::job_end: return "job-end";
        case EventKind::pilot_register: return "pilot-register";
        case EventKind::pilot_expire: return "pilot-expire";
        case EventKind::task_dispatch: return "task-dispatch";
        case EventKind::task_complete: return "task-complete";
        case EventKind::transfer_complete: return "transfer-complete";
        case EventKind::credential_renewal: return "credential-renewal";
        case EventKind::scheduler_cycle: return "scheduler-cycle";
        case EventKind::metric_sample: return "metric-sample";
    }
    return "unknown";
}

std::string TraceRecord::to_line() const {
    return fmt::format("{} {} {} {}", time.ms(), to_string(kind), entity, detail.empty() ? "-" : detail);
}

const MetricSeries* SimReport::find(std::string_view name) const {
    for (const auto& s : series)
        if (s.name == name) return &s;
    return nullptr;
}

std::string SimReport::to_csv() const {
    std::string out = "time_ms,metric,value\n";
    for (const auto& s : series)
        for (const auto& [t, v] : s.samples) out += fmt::format("{},{},{}\n", t.ms(), s.name, v);
    return out;
}

void Metrics::register_series(std::string name) {
    if (index_.contains(name)) return;
    index_.emplace(name, series_.size());
    series_.push_back(MetricSeries{std::move(name), {}});
}

bool Metrics::has(std::string_view name) const { return index_.find(name) != index_.end(); }

std::size_t Metrics::index_of(std::string_view name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw UnknownMetric(fmt::format("unknown metric '{}'", name));
    return it->second;
}

void Metrics::sample(std::string_view name, double value) {
    auto& s = series_[index_of(name)];
    s.samples.emplace_back(*clock_, value);
}

const MetricSeries& Metrics::series(std::string_view name) const { return series_[index_of(name)]; }

Engine::Engine() : metrics_(&clock_) {}

EventId Engine::schedule(Event event) {
    if (event.fire_at < clock_)
        throw PastEvent(fmt::format("event {} at {} ms is before clock {} ms", to_string(event.kind),
                                    event.fire_at.ms(), clock_.ms()));
    event.seq = next_seq_++;
    const EventId id = event.seq;
    live_.insert(id);
    queue_.push(std::move(event));
    return id;
}

EventId Engine::schedule(SimTime at, EventKind kind, std::uint64_t entity, std::function<void()> action,
                         std::string detail) {
    return schedule(Event{at, 0, kind, entity, std::move(detail), std::move(action)});
}

bool Engine::cancel(EventId id) {
    if (!live_.contains(id)) return false;
    live_.erase(id);
    cancelled_.insert(id);
    return true;
}

bool Engine::is_pending(EventId id) const { return live_.contains(id); }

SimReport Engine::run_until(SimTime t_end) {
    while (!queue_.empty() && queue_.top().fire_at <= t_end) {
        // priority_queue::top is const; the event is popped before running so
        // handlers may schedule freely.
        Event ev = std::move(const_cast<Event&>(queue_.top()));
        queue_.pop();
        if (cancelled_.erase(ev.seq) > 0) continue;
        live_.erase(ev.seq);
        clock_ = ev.fire_at;
        ++processed_;
        if (trace_) trace_(TraceRecord{clock_, ev.kind, ev.entity, ev.detail});
        if (ev.action) ev.action();
    }
    if (t_end > clock_ && !t_end.is_infinite()) clock_ = t_end;
    return report();
}

void Engine::record(EventKind kind, std::uint64_t entity, std::string detail) {
    if (trace_) trace_(TraceRecord{clock_, kind, entity, std::move(detail)});
}

SimReport Engine::report() const {
    SimReport r;
    r.clock = clock_;
    r.events_processed = processed_;
    r.series = metrics_.all();
    r.scalars = metrics_.scalars();
    return r;
}

}  // namespace htcsim
