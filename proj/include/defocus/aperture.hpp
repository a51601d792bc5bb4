#pragma once

#include <stdexcept>
#include <vector>

#include "defocus/common.hpp"

namespace defocus {

/// Disk aperture sampled on a uniform m x m grid over [-1,1]^2. Weight is 1
/// for grid points inside the unit disk, 0 outside.
struct ApertureMask {
    int grid_size = 0;
    std::vector<Vec2> coords;    // grid_size^2 entries, row-major (vy, vx)
    std::vector<double> weights; // 0 or 1
    double weight_sum = 0.0;

    int view_count() const { return grid_size * grid_size; }
    const Vec2& coord(int v) const { return coords[static_cast<size_t>(v)]; }
    double weight(int v) const { return weights[static_cast<size_t>(v)]; }
    bool has_center() const { return grid_size % 2 == 1; }
    int center_view() const { return (grid_size / 2) * grid_size + grid_size / 2; }
};

inline ApertureMask make_aperture(int m) {
    if (m < 1) throw std::invalid_argument("make_aperture: m must be >= 1");
    ApertureMask a;
    a.grid_size = m;
    a.coords.reserve(static_cast<size_t>(m) * m);
    a.weights.reserve(static_cast<size_t>(m) * m);
    for (int vy = 0; vy < m; ++vy) {
        for (int vx = 0; vx < m; ++vx) {
            Vec2 u;
            u.x = m == 1 ? 0.0 : -1.0 + 2.0 * vx / (m - 1);
            u.y = m == 1 ? 0.0 : -1.0 + 2.0 * vy / (m - 1);
            double w = (u.x * u.x + u.y * u.y) <= 1.0 ? 1.0 : 0.0;
            a.coords.push_back(u);
            a.weights.push_back(w);
            a.weight_sum += w;
        }
    }
    return a;
}

} // namespace defocus
