#include "htcsim/workload.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include <fmt/format.h>

#include "htcsim/errors.hpp"

namespace htcsim {

std::string_view to_string(Distribution::Kind k) {
    switch (k) {
        case Distribution::Kind::constant: return "constant";
        case Distribution::Kind::uniform: return "uniform";
        case Distribution::Kind::lognormal: return "lognormal";
    }
    return "?";
}

void Distribution::validate(const std::string& what) const {
    auto bad = [&](std::string_view why) { throw InvalidSpec(fmt::format("{}: {}", what, why)); };
    if (!std::isfinite(a) || !std::isfinite(b) || !std::isfinite(max)) bad("values must be finite");
    if (max < 0) bad("max must be >= 0");
    switch (kind) {
        case Kind::constant:
            if (a < 0) bad("value must be >= 0");
            break;
        case Kind::uniform:
            if (a < 0) bad("lo must be >= 0");
            if (a > b) bad(fmt::format("uniform lo {} > hi {}", a, b));
            break;
        case Kind::lognormal:
            if (b < 0) bad("sigma must be >= 0");
            break;
    }
}

double Distribution::upper() const {
    double hi = kind == Kind::constant ? a : kind == Kind::uniform ? b : INFINITY;
    return max > 0 ? std::min(hi, max) : hi;
}

double Distribution::draw(RngStream& rng) const {
    auto once = [&] {
        switch (kind) {
            case Kind::constant: return a;
            case Kind::uniform: return a == b ? a : rng.uniform(a, b);
            case Kind::lognormal: return rng.lognormal(a, b);
        }
        return a;
    };
    double v = once();
    if (max > 0)
        for (int i = 0; i < 32 && v > max; ++i) v = once();
    return max > 0 ? std::min(v, max) : v;
}

void HtcSpec::validate() const {
    if (n_tasks < 0) throw InvalidSpec("htc.n_tasks must be >= 0");
    runtime_h.validate("htc.runtime_h");
    input_gb.validate("htc.input_gb");
    output_gb.validate("htc.output_gb");
    if (!(memory_gb > 0)) throw InvalidSpec("htc.memory_gb must be > 0");
    if (!(runtime_noise >= 0 && runtime_noise < 1)) throw InvalidSpec("htc.runtime_noise must be in [0, 1)");
    if (tasks_per_dataset < 1) throw InvalidSpec("htc.tasks_per_dataset must be >= 1");
}

std::vector<Task> generate_tasks(const HtcSpec& spec, std::uint64_t seed, const OsgPolicy* policy) {
    spec.validate();
    if (policy && spec.memory_gb > policy->max_memory_gb)
        throw InvalidSpec(fmt::format("htc.memory_gb {} exceeds the OSG limit", spec.memory_gb));
    RngStream runtimes(seed, "htc.runtimes");
    RngStream sizes(seed, "htc.sizes");
    RngStream noise(seed, "htc.noise");

    std::vector<Task> out;
    out.reserve(static_cast<std::size_t>(spec.n_tasks));
    for (std::int64_t i = 0; i < spec.n_tasks; ++i) {
        Task t;
        t.id = static_cast<TaskId>(i + 1);
        t.memory_gb = spec.memory_gb;
        t.priority = spec.priority;
        t.dataset = static_cast<DatasetId>(i / spec.tasks_per_dataset + 1);
        for (int attempt = 0;; ++attempt) {
            if (attempt == 1000)
                throw InvalidSpec("htc workload cannot satisfy the OSG policy (1000 redraws failed)");
            t.est_runtime = SimTime::from_hours(spec.runtime_h.draw(runtimes));
            t.input_gb = spec.input_gb.draw(sizes);
            t.output_gb = spec.output_gb.draw(sizes);
            if (!policy || validate(t, *policy).empty()) break;
        }
        if (t.est_runtime == SimTime::zero()) t.est_runtime = SimTime::from_ms(1);
        const double factor = spec.runtime_noise > 0
                                  ? noise.uniform(1.0 - spec.runtime_noise, 1.0 + spec.runtime_noise)
                                  : 1.0;
        t.actual_runtime = SimTime::from_ms(std::max<std::int64_t>(
            1, std::llround(static_cast<double>(t.est_runtime.ms()) * factor)));
        out.push_back(std::move(t));
    }
    // Tasks of one dataset share its input size.
    for (std::size_t i = 0; i < out.size(); ++i) {
        const std::size_t lead = i - i % static_cast<std::size_t>(spec.tasks_per_dataset);
        out[i].input_gb = out[lead].input_gb;
    }
    if (policy)
        for (auto& t : out)
            if (!validate(t, *policy).empty())
                throw InvalidSpec("htc.tasks_per_dataset grouping breaks the OSG IO bound");
    return out;
}

void HpcBackgroundSpec::validate() const {
    if (!(arrival_rate_per_h >= 0) || !std::isfinite(arrival_rate_per_h))
        throw InvalidSpec("hpc.arrival_rate_per_h must be >= 0");
    if (!(max_nodes_fraction > 0 && max_nodes_fraction <= 1))
        throw InvalidSpec("hpc.max_nodes_fraction must be in (0, 1]");
    if (!(size_skew > 0) || !std::isfinite(size_skew)) throw InvalidSpec("hpc.size_skew must be > 0");
    walltime_h.validate("hpc.walltime_h");
    runtime_fraction.validate("hpc.runtime_fraction");
    if (!(walltime_h.upper() > 0)) throw InvalidSpec("hpc.walltime_h must be > 0");
    if (runtime_fraction.upper() > 1) throw InvalidSpec("hpc.runtime_fraction must not exceed 1");
    if (target_backlog_nodes < 0) throw InvalidSpec("hpc.target_backlog_nodes must be >= 0");
}

HpcJobSource::HpcJobSource(const HpcBackgroundSpec& spec, std::uint64_t seed, const ClusterConfig& cluster,
                           std::string_view stream_prefix)
    : spec_(spec),
      placement_(cluster.placement),
      max_exponent_(-1),
      sizes_(seed, fmt::format("{}.sizes", stream_prefix)),
      runtimes_(seed, fmt::format("{}.runtimes", stream_prefix)) {
    spec_.validate();
    const auto cap = static_cast<unsigned>(
        std::max(1.0, std::floor(spec.max_nodes_fraction * static_cast<double>(cluster.nodes))));
    max_exponent_ = std::bit_width(cap) - 1;
}

BatchJob HpcJobSource::next() {
    BatchJob j;
    int e = 0;
    if (spec_.size_skew == 1.0) {
        e = static_cast<int>(sizes_.below(static_cast<std::uint64_t>(max_exponent_) + 1));
    } else {
        double total = 0;
        for (int k = 0; k <= max_exponent_; ++k) total += std::pow(spec_.size_skew, k);
        double u = sizes_.uniform01() * total;
        for (e = 0; e < max_exponent_; ++e) {
            u -= std::pow(spec_.size_skew, e);
            if (u < 0) break;
        }
    }
    j.nodes_requested = 1 << e;
    SimTime wall = SimTime::from_hours(spec_.walltime_h.draw(runtimes_));
    wall = std::max(wall, SimTime::from_seconds(60));
    j.walltime_req = wall;
    const double frac = spec_.runtime_fraction.draw(runtimes_);
    j.runtime = SimTime::from_ms(std::max<std::int64_t>(1, std::llround(static_cast<double>(wall.ms()) * frac)));
    j.priority = spec_.priority;
    j.kind = JobKind::hpc;
    j.placement = placement_;
    return j;
}

HpcArrivals::HpcArrivals(Engine& engine, Cluster& cluster, const HpcBackgroundSpec& spec, std::uint64_t seed)
    : engine_(engine),
      cluster_(cluster),
      rate_(spec.arrival_rate_per_h),
      gaps_(seed, "hpc.arrivals"),
      source_(spec, seed, cluster.config(), "hpc") {}

void HpcArrivals::start() {
    if (rate_ > 0) schedule_next();
}

void HpcArrivals::schedule_next() {
    const SimTime gap = SimTime::from_hours(gaps_.exponential(rate_));
    engine_.schedule(engine_.now() + gap, EventKind::job_arrival, 0, [this] {
        cluster_.submit(source_.next());
        ++submitted_;
        schedule_next();
    }, "poisson");
}

BacklogMaintainer::BacklogMaintainer(Cluster& cluster, const HpcBackgroundSpec& spec, std::uint64_t seed)
    : cluster_(cluster), target_(spec.target_backlog_nodes), source_(spec, seed, cluster.config(), "backlog") {}

void BacklogMaintainer::start() {
    if (target_ <= 0) return;
    cluster_.on_cycle([this] { top_up(); });
    top_up();
}

std::vector<JobId> BacklogMaintainer::top_up() {
    std::vector<JobId> ids;
    while (cluster_.queued_nodes(JobKind::hpc) < target_) {
        ids.push_back(cluster_.submit(source_.next()));
        ++injected_;
    }
    return ids;
}

}  // namespace htcsim
