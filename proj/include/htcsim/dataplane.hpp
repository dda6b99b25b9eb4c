#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <vector>

#include "htcsim/engine.hpp"
#include "htcsim/sim_time.hpp"

namespace htcsim {

using DatasetId = std::uint64_t;
using TransferId = std::uint64_t;

enum class Direction { stage_in, stage_out };

struct CredentialConfig {
    double lifetime_days = 11.0;
    double renewal_days = 7.0;
    bool auto_renew = true;
};

/// Time-limited proxy. valid(t) holds while t - last_issue < lifetime; with
/// auto_renew the proxy is reissued every renewal period after issue.
class Credential {
public:
    Credential(SimTime issued_at, CredentialConfig config);

    bool valid(SimTime t) const;
    SimTime last_issue(SimTime t) const;
    /// First instant at which the credential is invalid, given no renewals
    /// beyond those auto_renew would perform; infinite if it never lapses.
    SimTime expiry_after(SimTime t) const;
    void renew(SimTime t);
    const CredentialConfig& config() const { return config_; }

private:
    SimTime issued_;
    SimTime lifetime_;
    SimTime renewal_;
    CredentialConfig config_;
};

struct DataConfig {
    int dtn_count = 12;
    double per_dtn_gbps = 10.0;
    double stream_cap_gbps = 10.0;
    double fs_bw_gbps = 100.0;
    double cache_gb = 0.0;  // 0 disables the input cache
    bool prepopulate_cache = false;
    CredentialConfig credential;

    double hub_gbps() const { return dtn_count * per_dtn_gbps; }
};

/// Audit record kept for every finished transfer.
struct TransferRecord {
    TransferId id = 0;
    DatasetId dataset = 0;
    Direction direction = Direction::stage_in;
    bool remote = true;
    double size_gb = 0;
    double rate_integral_gb = 0;  // sum of rate x time while active
    double max_rate_gbps = 0;
    SimTime started;
    SimTime finished;
};

struct RateAssignment {
    TransferId transfer;
    bool remote;
    double rate_gbps;
};

/// Remote data hub plus the cluster's shared filesystem.
///
/// Both are processor-sharing pools: each active flow gets
/// min(stream_cap, aggregate / active). The hub is a single load-balanced
/// endpoint of dtn_count x per_dtn_gbps. Remote flows need a valid
/// credential to start and pause while it is lapsed. Stage-ins of a cached
/// dataset are served by the filesystem pool; concurrent stage-ins of one
/// uncached dataset share a single hub flow.
class DataPlane {
public:
    using Callback = std::function<void()>;
    using CredentialListener = std::function<void(bool valid)>;

    DataPlane(Engine& engine, DataConfig config);
    DataPlane(const DataPlane&) = delete;
    DataPlane& operator=(const DataPlane&) = delete;

    /// Schedules credential renewal and expiry events.
    void start();

    /// Returns a request handle. `on_done` runs when the bytes have arrived.
    /// Throws CredentialExpired (remote flow with a lapsed credential) or
    /// CacheFull (no unpinned space to evict for a new cached dataset).
    TransferId begin_transfer(DatasetId dataset, double size_gb, Direction direction, Callback on_done);
    /// Drops the request. A cached stage-in keeps flowing so the data lands
    /// in the cache for the next attempt; anything else stops.
    void cancel(TransferId request);

    std::vector<RateAssignment> rates() const;
    std::size_t active_transfers() const;

    void credential_tick();
    bool credential_valid() const;
    const Credential& credential() const { return credential_; }
    void on_credential_change(CredentialListener l) { credential_listeners_.push_back(std::move(l)); }

    bool cache_enabled() const { return config_.cache_gb > 0; }
    bool is_cached(DatasetId dataset) const;
    double cache_used_gb() const;
    void prepopulate(DatasetId dataset, double size_gb);
    void pin(DatasetId dataset);
    void unpin(DatasetId dataset);

    /// Matchmaker estimate: size over the stream cap, or over filesystem
    /// bandwidth when cached.
    SimTime stage_in_estimate(DatasetId dataset, double size_gb) const;
    bool needs_remote(DatasetId dataset, double size_gb) const;

    const DataConfig& config() const { return config_; }
    const std::vector<TransferRecord>& completed() const { return completed_; }
    std::uint64_t hub_transfers() const { return hub_transfers_; }
    std::uint64_t pause_count() const { return pause_count_; }
    SimTime paused_time() const;
    bool remote_paused() const { return hub_.paused; }

private:
    struct Flow {
        TransferId id = 0;
        DatasetId dataset = 0;
        Direction direction = Direction::stage_in;
        bool remote = true;
        bool caches = false;  // completing inserts into the cache
        double size_gb = 0;
        double remaining_gb = 0;
        double rate_gbps = 0;
        double integral_gb = 0;
        double max_rate_gbps = 0;
        SimTime started;
        EventId completion = 0;
        bool has_completion = false;
        std::map<TransferId, Callback> waiters;
    };
    struct Pool {
        double aggregate_gbps = 0;
        double stream_cap_gbps = 0;
        bool paused = false;
        SimTime last_update;
        std::map<TransferId, Flow> flows;
    };
    struct CacheEntry {
        double size_gb = 0;
        bool ready = false;
        TransferId flow = 0;  // in-flight hub flow when !ready
        SimTime last_use;
    };

    TransferId open_flow(Pool& pool, DatasetId dataset, double size_gb, Direction dir, bool caches,
                         TransferId request, Callback cb);
    void advance(Pool& pool);
    void reshare(Pool& pool);
    void complete(bool remote, TransferId flow);
    void make_room(double size_gb);
    void schedule_expiry_check();
    void set_paused(bool paused);
    Pool& pool_of(bool remote) { return remote ? hub_ : fs_; }

    Engine& engine_;
    DataConfig config_;
    Credential credential_;
    Pool hub_;
    Pool fs_;
    std::map<DatasetId, CacheEntry> cache_;
    std::map<DatasetId, int> pins_;
    std::map<TransferId, std::pair<bool, TransferId>> requests_;  // request -> (remote, flow)
    TransferId next_id_ = 1;
    std::vector<TransferRecord> completed_;
    std::uint64_t hub_transfers_ = 0;
    std::uint64_t pause_count_ = 0;
    SimTime paused_total_;
    SimTime paused_since_;
    std::vector<CredentialListener> credential_listeners_;
};

}  // namespace htcsim
