#include "htcsim/dataplane.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "htcsim/errors.hpp"

namespace htcsim {

Credential::Credential(SimTime issued_at, CredentialConfig config)
    : issued_(issued_at),
      lifetime_(SimTime::from_days(config.lifetime_days)),
      renewal_(SimTime::from_days(config.renewal_days)),
      config_(config) {}

SimTime Credential::last_issue(SimTime t) const {
    if (!config_.auto_renew || t < issued_ || renewal_ == SimTime::zero()) return issued_;
    const std::int64_t periods = (t - issued_).ms() / renewal_.ms();
    return issued_ + SimTime::from_ms(periods * renewal_.ms());
}

bool Credential::valid(SimTime t) const {
    if (t < issued_) return false;
    return t - last_issue(t) < lifetime_;
}

SimTime Credential::expiry_after(SimTime t) const {
    if (config_.auto_renew && renewal_ < lifetime_) return SimTime::infinite();
    return last_issue(t) + lifetime_;
}

void Credential::renew(SimTime t) { issued_ = t; }

DataPlane::DataPlane(Engine& engine, DataConfig config)
    : engine_(engine), config_(config), credential_(engine.now(), config.credential) {
    hub_.aggregate_gbps = config_.hub_gbps();
    hub_.stream_cap_gbps = config_.stream_cap_gbps;
    fs_.aggregate_gbps = config_.fs_bw_gbps;
    fs_.stream_cap_gbps = config_.fs_bw_gbps;
    hub_.last_update = fs_.last_update = engine.now();
}

namespace {

// Self-rescheduling renewal event.
struct RenewalLoop {
    Engine* engine;
    SimTime period;
    std::function<void()> tick;
    void operator()() const {
        engine->schedule(engine->now() + period, EventKind::credential_renewal, 0,
                         [l = *this] {
                             l.tick();
                             l();
                         },
                         "renew");
    }
};

}  // namespace

void DataPlane::start() {
    if (config_.credential.auto_renew)
        RenewalLoop{&engine_, SimTime::from_days(config_.credential.renewal_days), [this] { credential_tick(); }}();
    schedule_expiry_check();
}

void DataPlane::schedule_expiry_check() {
    const SimTime at = credential_.expiry_after(engine_.now());
    if (at.is_infinite()) return;
    engine_.schedule(at, EventKind::credential_renewal, 0, [this] {
        if (!credential_.valid(engine_.now()) && !hub_.paused) set_paused(true);
    }, "expired");
}

void DataPlane::credential_tick() {
    credential_.renew(engine_.now());
    if (hub_.paused) set_paused(false);
    schedule_expiry_check();
}

bool DataPlane::credential_valid() const { return credential_.valid(engine_.now()); }

void DataPlane::set_paused(bool paused) {
    advance(hub_);
    hub_.paused = paused;
    if (paused) {
        ++pause_count_;
        paused_since_ = engine_.now();
    } else {
        paused_total_ += engine_.now() - paused_since_;
    }
    reshare(hub_);
    for (auto& l : credential_listeners_) l(!paused);
}

SimTime DataPlane::paused_time() const {
    return hub_.paused ? paused_total_ + (engine_.now() - paused_since_) : paused_total_;
}

void DataPlane::advance(Pool& pool) {
    const SimTime now = engine_.now();
    const double dt_s = static_cast<double>((now - pool.last_update).ms()) / 1e3;
    if (dt_s > 0)
        for (auto& [id, f] : pool.flows) {
            const double moved = f.rate_gbps * dt_s / 8.0;
            f.remaining_gb -= moved;
            f.integral_gb += moved;
        }
    pool.last_update = now;
}

void DataPlane::reshare(Pool& pool) {
    const bool remote = &pool == &hub_;
    const double n = static_cast<double>(pool.flows.size());
    const double rate = pool.paused || pool.flows.empty() ? 0.0
                                                          : std::min(pool.stream_cap_gbps, pool.aggregate_gbps / n);
    if (rate * n > pool.aggregate_gbps * (1 + 1e-12) || rate > pool.stream_cap_gbps)
        throw InvariantViolation("bandwidth share exceeds pool limits");
    for (auto& [id, f] : pool.flows) {
        if (f.has_completion) engine_.cancel(f.completion);
        f.has_completion = false;
        f.rate_gbps = rate;
        f.max_rate_gbps = std::max(f.max_rate_gbps, rate);
        if (rate <= 0) continue;
        const double secs = std::max(0.0, f.remaining_gb) * 8.0 / rate;
        const auto ms = static_cast<std::int64_t>(std::max(0.0, std::ceil(secs * 1e3 - 1e-6)));
        const TransferId fid = id;
        f.completion = engine_.schedule(engine_.now() + SimTime::from_ms(ms), EventKind::transfer_complete, fid,
                                        [this, remote, fid] { complete(remote, fid); },
                                        remote ? "remote" : "local");
        f.has_completion = true;
    }
}

TransferId DataPlane::open_flow(Pool& pool, DatasetId dataset, double size_gb, Direction dir, bool caches,
                                TransferId request, Callback cb) {
    advance(pool);
    const TransferId id = next_id_++;
    Flow f;
    f.id = id;
    f.dataset = dataset;
    f.direction = dir;
    f.remote = &pool == &hub_;
    f.caches = caches;
    f.size_gb = size_gb;
    f.remaining_gb = size_gb;
    f.started = engine_.now();
    f.waiters.emplace(request, std::move(cb));
    pool.flows.emplace(id, std::move(f));
    requests_[request] = {&pool == &hub_, id};
    reshare(pool);
    return id;
}

void DataPlane::make_room(double size_gb) {
    if (size_gb > config_.cache_gb) throw CacheFull(fmt::format("dataset of {} GB exceeds cache", size_gb));
    double free = config_.cache_gb - cache_used_gb();
    while (free < size_gb) {
        auto victim = cache_.end();
        for (auto it = cache_.begin(); it != cache_.end(); ++it) {
            if (!it->second.ready) continue;
            if (auto p = pins_.find(it->first); p != pins_.end() && p->second > 0) continue;
            if (victim == cache_.end() || it->second.last_use < victim->second.last_use) victim = it;
        }
        if (victim == cache_.end()) throw CacheFull("no evictable dataset in cache");
        free += victim->second.size_gb;
        cache_.erase(victim);
    }
}

TransferId DataPlane::begin_transfer(DatasetId dataset, double size_gb, Direction direction, Callback on_done) {
    if (size_gb < 0) throw std::invalid_argument("negative transfer size");
    const TransferId request = next_id_++;
    if (direction == Direction::stage_in && cache_enabled()) {
        if (auto it = cache_.find(dataset); it != cache_.end()) {
            it->second.last_use = engine_.now();
            if (it->second.ready) {
                open_flow(fs_, dataset, size_gb, direction, false, request, std::move(on_done));
            } else {
                hub_.flows.at(it->second.flow).waiters.emplace(request, std::move(on_done));
                requests_[request] = {true, it->second.flow};
            }
            return request;
        }
        if (!credential_valid()) throw CredentialExpired("credential expired; cannot reach data hub");
        make_room(size_gb);
        const TransferId flow = open_flow(hub_, dataset, size_gb, direction, true, request, std::move(on_done));
        cache_[dataset] = CacheEntry{size_gb, false, flow, engine_.now()};
        ++hub_transfers_;
        return request;
    }
    if (!credential_valid()) throw CredentialExpired("credential expired; cannot reach data hub");
    open_flow(hub_, dataset, size_gb, direction, false, request, std::move(on_done));
    if (direction == Direction::stage_in) ++hub_transfers_;
    return request;
}

void DataPlane::cancel(TransferId request) {
    auto r = requests_.find(request);
    if (r == requests_.end()) return;
    const auto [remote, flow_id] = r->second;
    requests_.erase(r);
    Pool& pool = pool_of(remote);
    auto f = pool.flows.find(flow_id);
    if (f == pool.flows.end()) return;
    f->second.waiters.erase(request);
    if (!f->second.waiters.empty() || f->second.caches) return;
    advance(pool);
    if (f->second.has_completion) engine_.cancel(f->second.completion);
    pool.flows.erase(f);
    reshare(pool);
}

void DataPlane::complete(bool remote, TransferId flow_id) {
    Pool& pool = pool_of(remote);
    advance(pool);
    auto node = pool.flows.extract(flow_id);
    Flow& f = node.mapped();
    completed_.push_back(TransferRecord{f.id, f.dataset, f.direction, f.remote, f.size_gb, f.integral_gb,
                                        f.max_rate_gbps, f.started, engine_.now()});
    if (f.caches)
        if (auto it = cache_.find(f.dataset); it != cache_.end()) {
            it->second.ready = true;
            it->second.last_use = engine_.now();
        }
    reshare(pool);
    for (auto& [req, cb] : f.waiters) {
        requests_.erase(req);
        if (cb) cb();
    }
}

std::vector<RateAssignment> DataPlane::rates() const {
    std::vector<RateAssignment> out;
    for (const auto& [id, f] : hub_.flows) out.push_back({id, true, f.rate_gbps});
    for (const auto& [id, f] : fs_.flows) out.push_back({id, false, f.rate_gbps});
    return out;
}

std::size_t DataPlane::active_transfers() const { return hub_.flows.size() + fs_.flows.size(); }

bool DataPlane::is_cached(DatasetId dataset) const {
    auto it = cache_.find(dataset);
    return it != cache_.end() && it->second.ready;
}

double DataPlane::cache_used_gb() const {
    double used = 0;
    for (const auto& [id, e] : cache_) used += e.size_gb;
    return used;
}

void DataPlane::prepopulate(DatasetId dataset, double size_gb) {
    if (!cache_enabled() || cache_.contains(dataset)) return;
    if (config_.cache_gb - cache_used_gb() < size_gb) return;
    cache_[dataset] = CacheEntry{size_gb, true, 0, engine_.now()};
}

void DataPlane::pin(DatasetId dataset) { ++pins_[dataset]; }

void DataPlane::unpin(DatasetId dataset) {
    auto it = pins_.find(dataset);
    if (it == pins_.end() || it->second <= 0) throw InvariantViolation("unpin of unpinned dataset");
    if (--it->second == 0) pins_.erase(it);
}

SimTime DataPlane::stage_in_estimate(DatasetId dataset, double size_gb) const {
    if (size_gb <= 0) return SimTime::zero();
    const double gbps = cache_enabled() && is_cached(dataset) ? config_.fs_bw_gbps : config_.stream_cap_gbps;
    return SimTime::from_ms(static_cast<std::int64_t>(std::ceil(size_gb * 8.0 / gbps * 1e3 - 1e-6)));
}

bool DataPlane::needs_remote(DatasetId dataset, double size_gb) const {
    if (size_gb <= 0) return false;
    return !(cache_enabled() && cache_.contains(dataset));
}

}  // namespace htcsim
