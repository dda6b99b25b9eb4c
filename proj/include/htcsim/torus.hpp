#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace htcsim {

using NodeId = std::int32_t;

struct Coord {
    int x = 0, y = 0, z = 0;
    friend bool operator==(const Coord&, const Coord&) = default;
};

/// 3D torus with row-major node numbering: id = x + X*(y + Y*z).
/// A cluster may populate only the first `nodes` positions.
class Torus {
public:
    Torus(std::array<int, 3> dims, int nodes);

    const std::array<int, 3>& dims() const { return dims_; }
    int nodes() const { return nodes_; }
    Coord coord(NodeId id) const;

    /// Wraparound-aware bounding-box volume of a node set: on each axis the
    /// extent is the shortest circular arc covering every coordinate.
    std::int64_t bounding_volume(std::span<const NodeId> ids) const;

    /// Smallest-volume subset of `count` nodes drawn from `free`; ties go to
    /// the lexicographically smallest sorted id set. Returns nullopt when no
    /// subset has volume <= max_volume.
    ///
    /// Every candidate bounding box (start and extent per axis, wraparound
    /// included) is enumerated in order of volume and counted with a 3D
    /// prefix sum over a doubled grid; the k lowest free ids inside a
    /// minimum-volume box form an optimal subset.
    std::optional<std::vector<NodeId>> compact_subset(std::span<const NodeId> free, int count,
                                                      std::int64_t max_volume) const;

private:
    std::array<int, 3> dims_;
    int nodes_;
    // Box shapes sorted by volume, built once.
    struct Shape {
        std::int64_t volume;
        std::array<int, 3> ext;
    };
    std::vector<Shape> shapes_;
};

}  // namespace htcsim
