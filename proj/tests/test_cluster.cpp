#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "htcsim/cluster.hpp"
#include "htcsim/errors.hpp"
#include "htcsim/rng.hpp"
#include "htcsim/torus.hpp"
#include "oracles.hpp"

using namespace htcsim;

namespace {

SimTime h(double v) { return SimTime::from_hours(v); }

BatchJob job(int nodes, SimTime walltime, SimTime runtime = SimTime::infinite(), JobKind kind = JobKind::hpc) {
    BatchJob j;
    j.nodes_requested = nodes;
    j.walltime_req = walltime;
    j.runtime = runtime.is_infinite() ? walltime : runtime;
    j.kind = kind;
    return j;
}

ClusterConfig small(int nodes, Placement p = Placement::transparent) {
    ClusterConfig c;
    c.nodes = nodes;
    c.cores_per_node = 4;
    c.placement = p;
    return c;
}

std::vector<int> ints(const std::vector<NodeId>& v) { return {v.begin(), v.end()}; }

}  // namespace

TEST_SUITE("torus") {
    TEST_CASE("coordinates are row-major") {
        Torus t({2, 3, 4}, 24);
        CHECK(t.coord(0) == Coord{0, 0, 0});
        CHECK(t.coord(1) == Coord{1, 0, 0});
        CHECK(t.coord(2) == Coord{0, 1, 0});
        CHECK(t.coord(6) == Coord{0, 0, 1});
        CHECK(t.coord(23) == Coord{1, 2, 3});
    }

    TEST_CASE("bounding volume wraps around") {
        Torus t({4, 4, 4}, 64);
        const std::vector<NodeId> ends{0, 3};  // x = 0 and x = 3 are neighbours
        CHECK(t.bounding_volume(ends) == 2);
        const std::vector<NodeId> mid{0, 2};
        CHECK(t.bounding_volume(mid) == 3);
    }

    TEST_CASE("2x2x2, all free, request 4 gives a volume-4 block") {
        Torus t({2, 2, 2}, 8);
        std::vector<NodeId> free(8);
        std::iota(free.begin(), free.end(), 0);
        auto r = t.compact_subset(free, 4, 8);
        REQUIRE(r);
        CHECK(t.bounding_volume(*r) == 4);
        const auto [vol, set] = oracle::best_subset(ints(free), 4, {2, 2, 2});
        CHECK(vol == 4);
        CHECK(ints(*r) == set);
    }

    TEST_CASE("scattered free corners do not fit a compact box") {
        Torus t({4, 4, 4}, 64);
        auto id = [](int x, int y, int z) { return static_cast<NodeId>(x + 4 * (y + 4 * z)); };
        const std::vector<NodeId> free{id(0, 0, 0), id(2, 2, 0), id(0, 2, 2), id(2, 0, 2)};
        CHECK(oracle::best_subset(ints(free), 4, {4, 4, 4}).first == 27);
        CHECK_FALSE(t.compact_subset(free, 4, 8));
        CHECK(t.compact_subset(free, 4, 27));
    }

    TEST_CASE("compact subset matches exhaustive search") {
        RngStream rng(11, "torus-oracle");
        const std::array<std::array<int, 3>, 5> shapes{{{2, 2, 2}, {3, 2, 2}, {3, 3, 1}, {4, 3, 1}, {3, 3, 2}}};
        for (int trial = 0; trial < 300; ++trial) {
            const auto dims = shapes[rng.below(shapes.size())];
            const int n = dims[0] * dims[1] * dims[2];
            std::vector<NodeId> free;
            for (NodeId i = 0; i < n; ++i)
                if (rng.uniform01() < 0.6) free.push_back(i);
            if (free.empty()) continue;
            const int k = 1 + static_cast<int>(rng.below(free.size()));
            Torus t(dims, n);
            const auto [vol, set] = oracle::best_subset(ints(free), k, dims);
            auto r = t.compact_subset(free, k, vol);
            REQUIRE(r);
            CHECK(t.bounding_volume(*r) == vol);
            CHECK(ints(*r) == set);
            if (vol > 1) CHECK_FALSE(t.compact_subset(free, k, vol - 1));
        }
    }
}

TEST_SUITE("cluster") {
    TEST_CASE("submit to an empty cluster starts at once") {
        Engine e;
        Cluster c(e, small(4));
        const JobId id = c.submit(job(2, h(1)));
        e.run_until(SimTime::zero());
        CHECK(c.job(id).start == SimTime::zero());
        CHECK(c.job(id).assigned_nodes == std::vector<NodeId>{0, 1});
        CHECK(c.busy_nodes() == 2);
    }

    TEST_CASE("oversized job is refused") {
        Engine e;
        Cluster c(e, small(4));
        CHECK_THROWS_AS(c.submit(job(5, h(1))), TooLarge);
    }

    TEST_CASE("pilot jobs queue exactly like hpc jobs") {
        auto trace = [](JobKind second) {
            Engine e;
            Cluster c(e, small(4));
            std::vector<std::pair<JobId, std::int64_t>> starts;
            c.on_start([&](const BatchJob& j) { starts.emplace_back(j.id, e.now().ms()); });
            c.submit(job(3, h(2)));
            c.submit(job(2, h(1), SimTime::infinite(), second));
            c.submit(job(1, h(1)));
            e.run_until(h(10));
            return starts;
        };
        CHECK(trace(JobKind::pilot) == trace(JobKind::hpc));
    }

    TEST_CASE("EASY example: head reserved, short job backfilled, long job held") {
        Engine e;
        Cluster c(e, small(4));
        const JobId a = c.submit(job(2, h(10)));
        e.run_until(SimTime::zero());
        const JobId b = c.submit(job(4, h(10)));
        e.run_until(SimTime::zero());

        REQUIRE(c.reservation());
        CHECK(c.reservation()->job == b);
        CHECK(c.reservation()->start == h(10));
        const auto windows = c.query_backfill_windows();
        REQUIRE(windows.size() == 1);
        CHECK(windows[0] == BackfillWindow{2, SimTime::zero(), h(10)});

        const JobId longer = c.submit(job(2, h(11)));
        const JobId shorter = c.submit(job(2, h(10)));
        e.run_until(SimTime::zero());
        CHECK(c.job(shorter).start == SimTime::zero());
        CHECK_FALSE(c.job(longer).start);
        CHECK(c.reservation()->start == h(10));

        e.run_until(h(10));
        CHECK(c.job(a).state == JobState::expired);
        CHECK(c.job(b).start == h(10));
        CHECK(c.reservation_delays() == 0);
    }

    TEST_CASE("backfill windows on trivial states") {
        SUBCASE("idle cluster, empty queue") {
            Engine e;
            Cluster c(e, small(4));
            const auto w = c.query_backfill_windows();
            REQUIRE(w.size() == 1);
            CHECK(w[0].node_count == 4);
            CHECK(w[0].unbounded());
        }
        SUBCASE("fully busy cluster") {
            Engine e;
            Cluster c(e, small(4));
            c.submit(job(4, SimTime::from_ms(8)));
            c.submit(job(4, h(1)));
            e.run_until(SimTime::zero());
            CHECK(c.query_backfill_windows().empty());
        }
    }

    TEST_CASE("backfill windows are sound under oracle replay") {
        RngStream rng(5, "window-oracle");
        for (int trial = 0; trial < 200; ++trial) {
            Engine e;
            const int n = 2 + static_cast<int>(rng.below(5));
            Cluster c(e, small(n));
            const int jobs = 1 + static_cast<int>(rng.below(12));
            for (int i = 0; i < jobs; ++i) {
                const auto nodes = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
                c.submit(job(nodes, h(1 + static_cast<double>(rng.below(10)))));
            }
            e.run_until(SimTime::zero());
            const auto before = c.reservation() ? c.reservation()->start : SimTime::infinite();
            const auto windows = c.query_backfill_windows();
            if (windows.empty()) continue;
            const auto& w = windows[rng.below(windows.size())];
            const SimTime wall = w.unbounded() ? h(1 + static_cast<double>(rng.below(50))) : w.duration;
            const JobId probe = c.submit(job(1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(w.node_count))), wall));
            e.run_until(SimTime::zero());
            CHECK(c.job(probe).start == SimTime::zero());
            const auto after = c.reservation() ? c.reservation()->start : SimTime::infinite();
            CHECK(after == before);
        }
    }

    TEST_CASE("placement rules") {
        Engine e;
        SUBCASE("transparent takes the lowest free ids") {
            Cluster c(e, small(8));
            BatchJob j = job(2, h(1));
            const std::vector<NodeId> free{7, 2, 5, 3};
            CHECK(c.place(j, free) == std::vector<NodeId>{2, 3});
        }
        SUBCASE("topology-aware respects the compactness limit") {
            ClusterConfig cfg = small(64, Placement::topology_aware);
            cfg.torus = {4, 4, 4};
            Cluster c(e, cfg);
            BatchJob j = job(4, h(1));
            j.placement = Placement::topology_aware;
            auto id = [](int x, int y, int z) { return static_cast<NodeId>(x + 4 * (y + 4 * z)); };
            const std::vector<NodeId> corners{id(0, 0, 0), id(2, 2, 0), id(0, 2, 2), id(2, 0, 2)};
            CHECK_FALSE(c.place(j, corners));
            const std::vector<NodeId> block{id(0, 0, 0), id(1, 0, 0), id(0, 1, 0), id(1, 1, 0), id(3, 3, 3)};
            CHECK(c.place(j, block) == std::vector<NodeId>{id(0, 0, 0), id(1, 0, 0), id(0, 1, 0), id(1, 1, 0)});
        }
    }

    TEST_CASE("walltime kill and natural end") {
        Engine e;
        Cluster c(e, small(4));
        std::vector<std::pair<JobId, bool>> ends;
        c.on_end([&](const BatchJob& j, bool expired) { ends.emplace_back(j.id, expired); });
        BatchJob pilot = job(2, h(12), SimTime::infinite(), JobKind::pilot);
        pilot.runtime = SimTime::infinite();
        const JobId p = c.submit(pilot);
        const JobId q = c.submit(job(2, h(12), h(3)));
        e.run_until(h(24));
        CHECK(c.job(p).end == h(12));
        CHECK(c.job(p).state == JobState::expired);
        CHECK(c.job(q).end == h(3));
        CHECK(c.job(q).state == JobState::completed);
        CHECK(ends == std::vector<std::pair<JobId, bool>>{{q, false}, {p, true}});
        CHECK(c.idle_nodes() == 4);
        CHECK(e.pending_events() == 0);
    }

    TEST_CASE("utilization arithmetic") {
        SUBCASE("one of two nodes busy") {
            Engine e;
            Cluster c(e, small(2));
            c.submit(job(1, h(20)));
            e.run_until(h(10));
            CHECK(c.utilization(SimTime::zero(), h(10)) == doctest::Approx(0.5));
        }
        SUBCASE("idle") {
            Engine e;
            Cluster c(e, small(2));
            e.run_until(h(10));
            CHECK(c.utilization(SimTime::zero(), h(10)) == 0.0);
        }
        SUBCASE("busy for half the window") {
            Engine e;
            Cluster c(e, small(1));
            c.submit(job(1, SimTime::from_ms(5)));
            e.run_until(SimTime::from_ms(10));
            CHECK(c.utilization(SimTime::zero(), SimTime::from_ms(10)) == doctest::Approx(0.5));
            CHECK_THROWS_AS(c.utilization(SimTime::from_ms(4), SimTime::from_ms(4)), EmptyWindow);
        }
    }

    TEST_CASE("accounting, conservation and disjointness on random streams") {
        RngStream rng(9, "cluster-random");
        for (int trial = 0; trial < 50; ++trial) {
            Engine e;
            ClusterConfig cfg = small(8, trial % 2 ? Placement::topology_aware : Placement::transparent);
            cfg.torus = {2, 2, 2};
            Cluster c(e, cfg);
            c.start_periodic_cycles();
            for (int i = 0; i < 30; ++i) {
                const SimTime at = SimTime::from_minutes(static_cast<double>(rng.below(600)));
                BatchJob j = job(1 << rng.below(3), h(1 + static_cast<double>(rng.below(6))));
                j.runtime = SimTime::from_ms(j.walltime_req.ms() / 2 + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(j.walltime_req.ms() / 2))));
                j.placement = cfg.placement;
                e.schedule(at, EventKind::job_arrival, 0, [&c, j] { c.submit(j); });
            }
            for (int k = 1; k <= 40; ++k) {
                e.run_until(SimTime::from_minutes(30.0 * k));
                c.check_invariants();
                CHECK(c.idle_nodes() + c.busy_nodes() + c.drained_nodes() == c.size());
            }
            CHECK(c.busy_core_ms() == c.interval_core_ms());
            for (const auto& [id, j] : c.jobs())
                if (j.end) CHECK(*j.end - *j.start <= j.walltime_req);
        }
    }

    TEST_CASE("drained nodes are neither idle nor busy") {
        Engine e;
        Cluster c(e, small(4));
        c.drain(3);
        CHECK(c.drained_nodes() == 1);
        const JobId id = c.submit(job(4, h(1)));
        e.run_until(h(1));
        CHECK_FALSE(c.job(id).start);
        c.undrain(3);
        e.run_until(h(1));
        CHECK(c.job(id).start == h(1));
    }

    TEST_CASE("queued node demand tracks submit, start and cancel") {
        Engine e;
        Cluster c(e, small(4));
        c.submit(job(4, h(2)));
        const JobId b = c.submit(job(3, h(1)));
        c.submit(job(2, h(1), SimTime::infinite(), JobKind::pilot));
        CHECK(c.queued_nodes(JobKind::hpc) == 7);
        e.run_until(SimTime::zero());
        CHECK(c.queued_nodes(JobKind::hpc) == 3);
        CHECK(c.queued_nodes(JobKind::pilot) == 2);
        c.cancel(b);
        CHECK(c.queued_nodes(JobKind::hpc) == 0);
    }
}
