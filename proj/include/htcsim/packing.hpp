#pragma once

#include <span>
#include <vector>

#include "htcsim/cluster.hpp"
#include "htcsim/task.hpp"

namespace htcsim {

struct PackItem {
    TaskId id = 0;
    SimTime size;
};

/// Payload for one wrapper job: independent single-core lanes, each run
/// sequentially inside a backfill window.
struct WrapperPlan {
    BackfillWindow window;
    std::vector<std::vector<TaskId>> lanes;
    std::vector<SimTime> lane_load;
    int nodes = 0;
    SimTime walltime;

    std::size_t task_count() const;
};

/// First-fit decreasing. Items are sorted by size (descending, ties by id)
/// and each goes into the first lane with room, opening a new lane only when
/// none fits and window.node_count x cores_per_node lanes are not yet used.
/// Lane capacity is `capacity` (normally the window duration). Items larger
/// than the capacity are skipped. Throws EmptyPlan when nothing fits.
WrapperPlan pack_first_fit_decreasing(const BackfillWindow& window, int cores_per_node, SimTime capacity,
                                      std::span<const PackItem> items);

/// Checks lane sums against capacity, lane count against window cores,
/// walltime against the busiest lane and node count against lane count.
bool plan_is_feasible(const WrapperPlan& plan, int cores_per_node, SimTime capacity);

}  // namespace htcsim
