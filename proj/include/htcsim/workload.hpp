#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "htcsim/cluster.hpp"
#include "htcsim/rng.hpp"
#include "htcsim/task.hpp"

namespace htcsim {

/// A scalar distribution. Values above `max` are redrawn (a few times, then
/// clamped), which is how the lognormal gets its upper truncation.
struct Distribution {
    enum class Kind { constant, uniform, lognormal };
    Kind kind = Kind::constant;
    double a = 0;  // constant value, uniform lo, lognormal mu
    double b = 0;  // uniform hi, lognormal sigma
    double max = 0;  // 0 = no truncation

    static Distribution constant(double v) { return {Kind::constant, v, 0, 0}; }
    static Distribution uniform(double lo, double hi) { return {Kind::uniform, lo, hi, 0}; }
    static Distribution lognormal(double mu, double sigma, double max = 0) { return {Kind::lognormal, mu, sigma, max}; }

    /// Throws InvalidSpec naming `what` on lo > hi, negative values or a
    /// negative sigma.
    void validate(const std::string& what) const;
    double draw(RngStream& rng) const;
    /// Upper end of the support (infinite for an untruncated lognormal).
    double upper() const;
};

std::string_view to_string(Distribution::Kind k);

struct HtcSpec {
    std::int64_t n_tasks = 0;
    Distribution runtime_h = Distribution::constant(1.0);
    Distribution input_gb = Distribution::constant(0.0);
    Distribution output_gb = Distribution::constant(0.0);
    double memory_gb = 1.0;
    int priority = 0;
    /// actual = estimate x uniform(1 - noise, 1 + noise).
    double runtime_noise = 0.0;
    /// Consecutive tasks share an input dataset in groups of this size.
    int tasks_per_dataset = 1;

    void validate() const;
};

/// Draws the task list. With `policy` set, a draw that breaks it is redrawn.
/// Throws InvalidSpec when `spec` cannot produce a compliant task.
std::vector<Task> generate_tasks(const HtcSpec& spec, std::uint64_t seed, const OsgPolicy* policy);

struct HpcBackgroundSpec {
    double arrival_rate_per_h = 0.0;
    /// Job sizes are powers of two up to this fraction of the machine.
    double max_nodes_fraction = 0.125;
    /// Size 2^e is drawn with weight size_skew^e; 1 = every size equally likely.
    double size_skew = 1.0;
    Distribution walltime_h = Distribution::uniform(1.0, 24.0);
    /// runtime = walltime x this draw.
    Distribution runtime_fraction = Distribution::uniform(0.5, 1.0);
    std::int64_t target_backlog_nodes = 0;
    int priority = 0;

    void validate() const;
};

/// Draws background HPC jobs from named streams, so the arrival process and
/// the backlog filler never disturb each other's sequences.
class HpcJobSource {
public:
    HpcJobSource(const HpcBackgroundSpec& spec, std::uint64_t seed, const ClusterConfig& cluster,
                 std::string_view stream_prefix);

    BatchJob next();
    int max_nodes() const { return max_exponent_ >= 0 ? 1 << max_exponent_ : 0; }

private:
    HpcBackgroundSpec spec_;
    Placement placement_;
    int max_exponent_;
    RngStream sizes_;
    RngStream runtimes_;
};

/// Poisson background arrivals.
class HpcArrivals {
public:
    HpcArrivals(Engine& engine, Cluster& cluster, const HpcBackgroundSpec& spec, std::uint64_t seed);
    void start();
    std::uint64_t submitted() const { return submitted_; }

private:
    void schedule_next();

    Engine& engine_;
    Cluster& cluster_;
    double rate_;
    RngStream gaps_;
    HpcJobSource source_;
    std::uint64_t submitted_ = 0;
};

/// Keeps queued HPC node demand at or above a target by injecting jobs after
/// every scheduler cycle.
class BacklogMaintainer {
public:
    BacklogMaintainer(Cluster& cluster, const HpcBackgroundSpec& spec, std::uint64_t seed);
    /// Installs the cycle hook and tops the queue up once.
    void start();
    /// Injects until demand reaches the target; returns jobs submitted.
    std::vector<JobId> top_up();
    std::uint64_t injected() const { return injected_; }
    std::int64_t target() const { return target_; }

private:
    Cluster& cluster_;
    std::int64_t target_;
    HpcJobSource source_;
    std::uint64_t injected_ = 0;
};

}  // namespace htcsim
