#include "htcsim/torus.hpp"

#include <algorithm>
#include <stdexcept>

namespace htcsim {

namespace {

// Circular extent of a set of coordinates on a ring of size `dim`.
int circular_extent(std::vector<int>& cs, int dim) {
    std::sort(cs.begin(), cs.end());
    cs.erase(std::unique(cs.begin(), cs.end()), cs.end());
    if (cs.size() <= 1) return 1;
    int max_gap = cs.front() + dim - cs.back();
    for (std::size_t i = 1; i < cs.size(); ++i) max_gap = std::max(max_gap, cs[i] - cs[i - 1]);
    return dim - max_gap + 1;
}

}  // namespace

Torus::Torus(std::array<int, 3> dims, int nodes) : dims_(dims), nodes_(nodes) {
    for (int d : dims_)
        if (d <= 0) throw std::invalid_argument("torus dimensions must be positive");
    if (nodes <= 0 || static_cast<std::int64_t>(dims_[0]) * dims_[1] * dims_[2] < nodes)
        throw std::invalid_argument("torus too small for node count");
    for (int a = 1; a <= dims_[0]; ++a)
        for (int b = 1; b <= dims_[1]; ++b)
            for (int c = 1; c <= dims_[2]; ++c)
                shapes_.push_back(Shape{static_cast<std::int64_t>(a) * b * c, {a, b, c}});
    std::stable_sort(shapes_.begin(), shapes_.end(),
                     [](const Shape& l, const Shape& r) { return l.volume < r.volume; });
}

Coord Torus::coord(NodeId id) const {
    const int X = dims_[0], Y = dims_[1];
    return Coord{id % X, (id / X) % Y, id / (X * Y)};
}

std::int64_t Torus::bounding_volume(std::span<const NodeId> ids) const {
    if (ids.empty()) return 0;
    std::array<std::vector<int>, 3> axes;
    for (NodeId id : ids) {
        const Coord c = coord(id);
        axes[0].push_back(c.x);
        axes[1].push_back(c.y);
        axes[2].push_back(c.z);
    }
    std::int64_t v = 1;
    for (int a = 0; a < 3; ++a) v *= circular_extent(axes[a], dims_[a]);
    return v;
}

std::optional<std::vector<NodeId>> Torus::compact_subset(std::span<const NodeId> free, int count,
                                                         std::int64_t max_volume) const {
    if (count <= 0 || static_cast<int>(free.size()) < count) return std::nullopt;
    const int X = dims_[0], Y = dims_[1], Z = dims_[2];

    std::vector<char> is_free(static_cast<std::size_t>(X) * Y * Z, 0);
    for (NodeId id : free) is_free[static_cast<std::size_t>(id)] = 1;

    // Prefix sums over a (2X)(2Y)(2Z) tiling, so wrapped boxes are plain
    // rectangles. P has a zero border at index 0 on each axis.
    const int PX = 2 * X + 1, PY = 2 * Y + 1, PZ = 2 * Z + 1;
    std::vector<std::int32_t> P(static_cast<std::size_t>(PX) * PY * PZ, 0);
    auto at = [&](int x, int y, int z) -> std::int32_t& {
        return P[(static_cast<std::size_t>(z) * PY + y) * PX + x];
    };
    for (int z = 1; z < PZ; ++z)
        for (int y = 1; y < PY; ++y)
            for (int x = 1; x < PX; ++x) {
                const int id = ((x - 1) % X) + X * (((y - 1) % Y) + Y * ((z - 1) % Z));
                at(x, y, z) = is_free[static_cast<std::size_t>(id)] + at(x - 1, y, z) + at(x, y - 1, z) +
                              at(x, y, z - 1) - at(x - 1, y - 1, z) - at(x - 1, y, z - 1) -
                              at(x, y - 1, z - 1) + at(x - 1, y - 1, z - 1);
            }
    auto box_count = [&](int x0, int y0, int z0, int ex, int ey, int ez) {
        const int x1 = x0 + ex, y1 = y0 + ey, z1 = z0 + ez;
        return at(x1, y1, z1) - at(x0, y1, z1) - at(x1, y0, z1) - at(x1, y1, z0) + at(x0, y0, z1) +
               at(x0, y1, z0) + at(x1, y0, z0) - at(x0, y0, z0);
    };

    struct Box {
        int x0, y0, z0;
        std::array<int, 3> ext;
    };
    std::vector<Box> hits;
    std::size_t i = 0;
    while (i < shapes_.size() && shapes_[i].volume < count) ++i;
    while (i < shapes_.size() && shapes_[i].volume <= max_volume && hits.empty()) {
        const std::int64_t vol = shapes_[i].volume;
        for (; i < shapes_.size() && shapes_[i].volume == vol; ++i) {
            const auto& e = shapes_[i].ext;
            const int nx = e[0] == X ? 1 : X, ny = e[1] == Y ? 1 : Y, nz = e[2] == Z ? 1 : Z;
            for (int z0 = 0; z0 < nz; ++z0)
                for (int y0 = 0; y0 < ny; ++y0)
                    for (int x0 = 0; x0 < nx; ++x0)
                        if (box_count(x0, y0, z0, e[0], e[1], e[2]) >= count) hits.push_back({x0, y0, z0, e});
        }
    }
    if (hits.empty()) return std::nullopt;

    std::optional<std::vector<NodeId>> best;
    std::vector<NodeId> ids;
    for (const Box& b : hits) {
        ids.clear();
        for (int dz = 0; dz < b.ext[2]; ++dz)
            for (int dy = 0; dy < b.ext[1]; ++dy)
                for (int dx = 0; dx < b.ext[0]; ++dx) {
                    const int id = (b.x0 + dx) % X + X * ((b.y0 + dy) % Y + Y * ((b.z0 + dz) % Z));
                    if (is_free[static_cast<std::size_t>(id)]) ids.push_back(id);
                }
        std::partial_sort(ids.begin(), ids.begin() + count, ids.end());
        ids.resize(static_cast<std::size_t>(count));
        if (!best || ids < *best) best = ids;
    }
    return best;
}

}  // namespace htcsim
