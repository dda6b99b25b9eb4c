#include <doctest.h>

#include <algorithm>
#include <memory>

#include "htcsim/errors.hpp"
#include "htcsim/overlay.hpp"
#include "htcsim/packing.hpp"
#include "htcsim/rng.hpp"
#include "oracles.hpp"

using namespace htcsim;

namespace {

SimTime h(double v) { return SimTime::from_hours(v); }

struct Rig {
    Engine engine;
    Cluster cluster;
    DataPlane data;
    Overlay overlay;

    Rig(ClusterConfig cc, OverlayConfig oc, DataConfig dc = {})
        : cluster(engine, cc), data(engine, dc), overlay(engine, cluster, data, oc) {
        data.start();
        overlay.start();
    }
};

ClusterConfig nodes_of(int n, int cores) {
    ClusterConfig c;
    c.nodes = n;
    c.cores_per_node = cores;
    return c;
}

OverlayConfig manual() {
    OverlayConfig o;
    o.enabled = false;
    o.startup_latency = SimTime::zero();
    return o;
}

Task task(double est_h, double actual_h = -1, double input_gb = 0, double output_gb = 0) {
    Task t;
    t.est_runtime = h(est_h);
    t.actual_runtime = h(actual_h < 0 ? est_h : actual_h);
    t.input_gb = input_gb;
    t.output_gb = output_gb;
    t.memory_gb = 1.0;
    return t;
}

std::vector<std::int64_t> lane_hours(const WrapperPlan& p, const Overlay& o) {
    std::vector<std::int64_t> out;
    for (const auto& lane : p.lanes) {
        SimTime s;
        for (TaskId id : lane) s += o.task(id).est_runtime;
        out.push_back(s.ms() / 3'600'000);
    }
    return out;
}

}  // namespace

TEST_SUITE("osg") {
    TEST_CASE("violation tags") {
        const OsgPolicy p;
        Task mem = task(6, -1, 0.4);
        mem.memory_gb = 2.5;
        CHECK(validate(mem, p) == std::vector<Violation>{Violation::MEM_LIMIT});
        CHECK(validate(task(13), p) == std::vector<Violation>{Violation::WALLTIME_LIMIT});
        CHECK(validate(task(6, -1, 6, 6), p) == std::vector<Violation>{Violation::IO_LIMIT});
        Task ok = task(6, -1, 0.4);
        ok.memory_gb = 1.5;
        CHECK(validate(ok, p).empty());
        Task wide = task(1);
        wide.cores = 2;
        wide.memory_gb = 3;
        CHECK(validate(wide, p) == std::vector<Violation>{Violation::MEM_LIMIT, Violation::CORES_LIMIT});
        CHECK(validate(task(12, -1, 5, 5), p).empty());
    }

    TEST_CASE("overlay refuses non-compliant tasks") {
        Rig r(nodes_of(2, 2), manual());
        CHECK_THROWS_AS(r.overlay.add_task(task(13)), InvalidSpec);
        CHECK_NOTHROW(r.overlay.add_task(task(12)));
    }
}

TEST_SUITE("packing") {
    TEST_CASE("first-fit decreasing example") {
        const std::vector<PackItem> items{{1, h(6)}, {2, h(6)}, {3, h(6)}, {4, h(4)}, {5, h(4)}};
        const BackfillWindow w{2, SimTime::zero(), h(10)};
        const WrapperPlan p = pack_first_fit_decreasing(w, 4, h(10), items);
        CHECK(p.lanes == std::vector<std::vector<TaskId>>{{1, 4}, {2, 5}, {3}});
        CHECK(p.walltime == h(10));
        CHECK(p.nodes == 1);
        CHECK(plan_is_feasible(p, 4, h(10)));
    }

    TEST_CASE("nothing fits a short window") {
        const std::vector<PackItem> items{{1, h(2)}, {2, h(3)}};
        CHECK_THROWS_AS(pack_first_fit_decreasing({1, SimTime::zero(), h(1)}, 4, h(1), items), EmptyPlan);
    }

    TEST_CASE("exact fit in a single lane") {
        const std::vector<PackItem> items{{1, h(12)}};
        const WrapperPlan p = pack_first_fit_decreasing({1, SimTime::zero(), h(12)}, 1, h(12), items);
        CHECK(p.lanes == std::vector<std::vector<TaskId>>{{1}});
        CHECK(p.walltime == h(12));
    }

    TEST_CASE("lane count is capped by window cores") {
        std::vector<PackItem> items;
        for (TaskId i = 1; i <= 10; ++i) items.push_back({i, h(3)});
        const WrapperPlan p = pack_first_fit_decreasing({1, SimTime::zero(), h(4)}, 4, h(4), items);
        CHECK(p.lanes.size() == 4);
        CHECK(p.task_count() == 4);
        CHECK(plan_is_feasible(p, 4, h(4)));
    }

    TEST_CASE("feasibility check catches broken plans") {
        const std::vector<PackItem> items{{1, h(6)}, {2, h(4)}};
        WrapperPlan p = pack_first_fit_decreasing({1, SimTime::zero(), h(10)}, 2, h(10), items);
        CHECK(plan_is_feasible(p, 2, h(10)));
        WrapperPlan wrong_wall = p;
        wrong_wall.walltime = h(11);
        CHECK_FALSE(plan_is_feasible(wrong_wall, 2, h(10)));
        WrapperPlan too_many = p;
        too_many.lanes.assign(3, {});
        too_many.lane_load.assign(3, h(1));
        CHECK_FALSE(plan_is_feasible(too_many, 1, h(10)));
        CHECK_FALSE(plan_is_feasible(p, 2, h(9)));
    }

    TEST_CASE("never beats the exhaustive optimum") {
        RngStream rng(21, "pack-bound");
        for (int trial = 0; trial < 300; ++trial) {
            const int nodes = 1 + static_cast<int>(rng.below(2));
            const int cores = 1 + static_cast<int>(rng.below(3));
            const std::int64_t cap = 1 + static_cast<std::int64_t>(rng.below(12));
            const int n = 1 + static_cast<int>(rng.below(6));
            std::vector<PackItem> items;
            std::vector<std::int64_t> sizes;
            for (int i = 0; i < n; ++i) {
                sizes.push_back(1 + static_cast<std::int64_t>(rng.below(12)));
                items.push_back({static_cast<TaskId>(i + 1), h(static_cast<double>(sizes.back()))});
            }
            const int best = oracle::exhaustive_max_packed(sizes, nodes * cores, cap);
            int packed = 0;
            try {
                const auto p = pack_first_fit_decreasing({nodes, SimTime::zero(), h(static_cast<double>(cap))}, cores,
                                                         h(static_cast<double>(cap)), items);
                CHECK(plan_is_feasible(p, cores, h(static_cast<double>(cap))));
                packed = static_cast<int>(p.task_count());
            } catch (const EmptyPlan&) {
            }
            CHECK(packed <= best);
            if (best > 0) CHECK(packed > 0);
        }
    }
}

TEST_SUITE("overlay") {
    TEST_CASE("glidein submission") {
        Rig r(nodes_of(8, 2), manual());
        const BatchJob j = r.overlay.submit_glidein(4, h(12), 0);
        CHECK(j.nodes_requested == 4);
        CHECK(j.walltime_req == h(12));
        CHECK(j.kind == JobKind::pilot);
        CHECK(r.overlay.glideins_submitted() == 1);
    }

    TEST_CASE("glidein refused once the proxy lapses") {
        DataConfig dc;
        dc.credential = {11, 7, false};
        Rig r(nodes_of(8, 2), manual(), dc);
        r.engine.run_until(SimTime::from_days(12));
        CHECK_THROWS_AS(r.overlay.submit_glidein(1, h(12), 0), CredentialExpired);
    }

    TEST_CASE("pilot registers after the startup latency") {
        OverlayConfig oc = manual();
        oc.startup_latency = SimTime::from_seconds(60);
        Rig r(nodes_of(4, 2), oc);
        BatchJob blocker;
        blocker.nodes_requested = 4;
        blocker.walltime_req = SimTime::from_seconds(100);
        blocker.runtime = blocker.walltime_req;
        r.cluster.submit(blocker);
        r.overlay.add_task(task(1));
        const JobId p = r.overlay.submit_glidein(1, h(12), 0).id;
        r.engine.run_until(SimTime::from_seconds(200));
        CHECK(r.cluster.job(p).start == SimTime::from_seconds(100));
        CHECK(r.overlay.pilots().at(p).registered_at == SimTime::from_seconds(160));
        CHECK(r.overlay.pilots().at(p).expires_at == SimTime::from_seconds(100) + h(12));
        CHECK(r.overlay.pilots().at(p).slots == 2);
    }

    TEST_CASE("match rules") {
        OverlayConfig oc = manual();
        oc.osg_policy = false;
        Rig r(nodes_of(2, 2), oc);
        // One long task keeps the 2-slot pilot from going idle.
        r.overlay.add_task(task(2.9));
        const JobId p = r.overlay.submit_glidein(1, h(3), 0).id;
        r.engine.run_until(SimTime::zero());
        REQUIRE(r.overlay.pilots().at(p).busy_slots == 1);

        SUBCASE("fits the remaining lifetime with its stage-in") {
            const TaskId t = r.overlay.add_task(task(2, -1, 450));  // 450 GB at 10 Gbps = 0.1 h
            CHECK(r.overlay.match(p) == t);
            CHECK(r.overlay.task(t).state == TaskState::staging);
        }
        SUBCASE("too long for the pilot") {
            r.overlay.add_task(task(3.5));
            CHECK_FALSE(r.overlay.match(p));
        }
        SUBCASE("stage-in pushes it over") {
            r.overlay.add_task(task(2.95, -1, 450));
            CHECK_FALSE(r.overlay.match(p));
        }
        SUBCASE("earlier arrival wins a priority tie") {
            Task a = task(1);
            a.arrival = SimTime::from_ms(2);
            Task b = task(1);
            b.arrival = SimTime::from_ms(1);
            r.overlay.add_task(a);
            const TaskId tb = r.overlay.add_task(b);
            CHECK(r.overlay.match(p) == tb);
        }
        SUBCASE("higher priority wins") {
            r.overlay.add_task(task(1));
            Task urgent = task(1);
            urgent.priority = 5;
            urgent.arrival = SimTime::from_ms(9);
            const TaskId tu = r.overlay.add_task(urgent);
            CHECK(r.overlay.match(p) == tu);
        }
    }

    TEST_CASE("pack_backfill claims tasks and submits a wrapper") {
        Rig r(nodes_of(2, 4), manual());
        std::vector<TaskId> ids;
        for (double e : {6.0, 6.0, 6.0, 4.0, 4.0}) ids.push_back(r.overlay.add_task(task(e)));
        const WrapperPlan p = r.overlay.pack_backfill({2, SimTime::zero(), h(10)});
        CHECK(lane_hours(p, r.overlay) == std::vector<std::int64_t>{10, 10, 6});
        CHECK(p.walltime == h(10));
        CHECK(r.overlay.pending_count() == 0);
        for (TaskId id : ids) CHECK(r.overlay.task(id).state == TaskState::staging);
        const BatchJob& w = r.cluster.job(r.overlay.wrappers().begin()->first);
        CHECK(w.kind == JobKind::wrapper);
        CHECK(w.placement == Placement::transparent);
        CHECK(w.preemptible);
        CHECK(w.walltime_req == h(10));
        CHECK(w.nodes_requested == 1);
    }

    TEST_CASE("pack_backfill with nothing that fits") {
        Rig r(nodes_of(2, 4), manual());
        r.overlay.add_task(task(2));
        r.overlay.add_task(task(3));
        CHECK_THROWS_AS(r.overlay.pack_backfill({2, SimTime::zero(), h(1)}), EmptyPlan);
        CHECK(r.overlay.pending_count() == 2);
    }

    TEST_CASE("preemption keeps progress to the last checkpoint") {
        struct Case {
            SimTime interval;
            SimTime kept;
        };
        for (const Case c : {Case{h(2), h(6)}, Case{SimTime::zero(), h(7)}, Case{SimTime::infinite(), SimTime::zero()}}) {
            OverlayConfig oc = manual();
            oc.checkpoint_interval = c.interval;
            Rig r(nodes_of(2, 1), oc);
            const TaskId t = r.overlay.add_task(task(5, 10));
            r.overlay.submit_glidein(1, h(7), 0);
            r.engine.run_until(h(8));
            const Task& tk = r.overlay.task(t);
            CHECK(tk.completed_work == c.kept);
            CHECK(tk.remaining_actual() == h(10) - c.kept);
            CHECK(tk.state == TaskState::pending);
            CHECK(tk.executed == h(7));
            REQUIRE(r.overlay.preemptions().size() == 1);
            CHECK(r.overlay.preemptions()[0].elapsed == h(7));
            CHECK(r.overlay.preemptions()[0].was_running);
        }
    }

    TEST_CASE("checkpoint retention matches a step-through of the schedule") {
        RngStream rng(31, "checkpoint");
        for (int trial = 0; trial < 200; ++trial) {
            OverlayConfig oc = manual();
            const std::int64_t minute = 60'000;
            oc.checkpoint_interval = SimTime::from_ms(minute * static_cast<std::int64_t>(rng.below(90)));
            Rig r(nodes_of(1, 1), oc);
            const double actual = 2 + static_cast<double>(rng.below(600)) / 60.0;
            const TaskId t = r.overlay.add_task(task(0.5, actual));
            std::int64_t prior = 0;
            for (int attempt = 0; attempt < 3; ++attempt) {
                const SimTime wall = SimTime::from_ms(minute * (1 + static_cast<std::int64_t>(rng.below(120))));
                const std::size_t seen = r.overlay.preemptions().size();
                r.overlay.submit_glidein(1, wall, 0);
                const SimTime start = r.engine.now();
                r.engine.run_until(start + wall);
                const Task& tk = r.overlay.task(t);
                if (tk.state == TaskState::completed) break;
                if (r.overlay.preemptions().size() == seen) continue;
                const auto& rec = r.overlay.preemptions().back();
                const std::int64_t expect = oracle::checkpoint_retained(
                    prior, rec.elapsed.ms(), oc.checkpoint_interval.ms(), tk.actual_runtime.ms());
                CHECK(tk.completed_work.ms() == expect);
                CHECK(rec.retained.ms() == expect - prior);
                prior = expect;
            }
        }
    }

    TEST_CASE("killed during stage-in keeps no work but the input lands in cache") {
        OverlayConfig oc = manual();
        DataConfig dc;
        dc.dtn_count = 1;
        dc.per_dtn_gbps = 0.001;
        dc.stream_cap_gbps = 0.001;
        dc.cache_gb = 10;
        Rig r(nodes_of(1, 1), oc, dc);
        // 0.4 GB at 1 Mbps takes ~0.9 h, estimated the same; the pilot dies at 1 h.
        const TaskId t = r.overlay.add_task(task(0.05, 0.05, 0.4));
        r.overlay.submit_glidein(1, h(1), 0);
        r.engine.run_until(SimTime::from_minutes(30));
        REQUIRE(r.overlay.task(t).state == TaskState::staging);
        BatchJob j = r.cluster.job(r.overlay.pilots().begin()->first);
        r.cluster.release(j.id);
        CHECK(r.overlay.task(t).completed_work == SimTime::zero());
        CHECK(r.overlay.task(t).state == TaskState::pending);
        CHECK_FALSE(r.overlay.preemptions().back().was_running);
        r.engine.run_until(h(2));
        CHECK(r.data.is_cached(r.overlay.task(t).dataset));
        CHECK(r.data.stage_in_estimate(r.overlay.task(t).dataset, 0.4) < SimTime::from_seconds(1));
    }

    TEST_CASE("completion stages output out, then completes once") {
        Rig r(nodes_of(1, 2), manual());
        const TaskId with_out = r.overlay.add_task(task(1, 1, 0, 0.5));
        const TaskId no_out = r.overlay.add_task(task(1, 1, 0, 0));
        r.overlay.submit_glidein(1, h(2), 0);
        r.engine.run_until(h(1));
        CHECK(r.overlay.task(no_out).state == TaskState::completed);
        CHECK(r.overlay.task(no_out).completed_at == h(1));
        CHECK(r.overlay.task(with_out).state == TaskState::staging);
        CHECK(r.data.active_transfers() == 1);
        r.engine.run_until(h(1.5));
        CHECK(r.overlay.task(with_out).state == TaskState::completed);
        CHECK(r.overlay.task(with_out).completed_at == h(1) + SimTime::from_ms(400));
        CHECK(r.overlay.completed_count() == 2);
        CHECK_THROWS_AS(r.overlay.on_complete(no_out), DuplicateCompletion);
    }

    TEST_CASE("glidein broker tops the pool up to its target") {
        OverlayConfig oc = manual();
        oc.enabled = true;
        oc.target_pilots = 3;
        Rig r(nodes_of(1, 1), oc);
        for (int i = 0; i < 10; ++i) r.overlay.add_task(task(1));
        r.overlay.submit_glidein(1, h(2), 0);
        const BrokerActions a = r.overlay.broker_cycle();
        CHECK(a.glideins_submitted == 2);
        CHECK(r.overlay.broker_cycle().glideins_submitted == 0);
    }

    TEST_CASE("glidein broker asks for no more pilots than the backlog needs") {
        OverlayConfig oc = manual();
        oc.enabled = true;
        oc.target_pilots = 10;
        Rig r(nodes_of(4, 4), oc);
        for (int i = 0; i < 5; ++i) r.overlay.add_task(task(1));
        CHECK(r.overlay.broker_cycle().glideins_submitted == 2);
    }

    TEST_CASE("glidein broker is blocked by a lapsed proxy") {
        OverlayConfig oc = manual();
        oc.enabled = true;
        DataConfig dc;
        dc.credential = {11, 7, false};
        Rig r(nodes_of(1, 1), oc, dc);
        r.engine.run_until(SimTime::from_days(12));
        r.overlay.add_task(task(1));
        const BrokerActions a = r.overlay.broker_cycle();
        CHECK(a.credential_blocked);
        CHECK(a.glideins_submitted == 0);
    }

    TEST_CASE("backfill broker with no windows does nothing") {
        OverlayConfig oc = manual();
        oc.enabled = true;
        oc.mode = OverlayMode::backfill_broker;
        Rig r(nodes_of(4, 4), oc);
        BatchJob all;
        all.nodes_requested = 4;
        all.walltime_req = h(10);
        all.runtime = h(10);
        r.cluster.submit(all);
        r.engine.run_until(SimTime::zero());
        r.overlay.add_task(task(1));
        CHECK(r.overlay.broker_cycle().wrappers_submitted == 0);
        CHECK(r.overlay.wrappers().empty());
    }

    TEST_CASE("backfill broker fills the hole in front of a reservation") {
        OverlayConfig oc = manual();
        oc.enabled = true;
        oc.mode = OverlayMode::backfill_broker;
        Rig r(nodes_of(4, 4), oc);
        BatchJob a;
        a.nodes_requested = 2;
        a.walltime_req = h(10);
        a.runtime = h(10);
        r.cluster.submit(a);
        r.engine.run_until(SimTime::zero());
        BatchJob b = a;
        b.nodes_requested = 4;
        const JobId head = r.cluster.submit(b);
        r.engine.run_until(SimTime::zero());
        for (double e : {6.0, 6.0, 6.0, 4.0, 4.0}) r.overlay.add_task(task(e));

        const BrokerActions act = r.overlay.broker_cycle();
        CHECK(act.wrappers_submitted == 1);
        CHECK(act.tasks_packed == 5);
        const JobId w = r.overlay.wrappers().begin()->first;
        CHECK(r.cluster.job(w).start == SimTime::zero());

        r.engine.run_until(h(12));
        CHECK(r.overlay.completed_count() == 5);
        CHECK(r.cluster.job(head).start == h(10));
        CHECK(r.cluster.reservation_delays() == 0);
    }
}
