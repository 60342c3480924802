#ifndef EMBEDLAB_SURFACE_HPP
#define EMBEDLAB_SURFACE_HPP

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "embedlab/csv.hpp"
#include "embedlab/grid.hpp"

namespace embedlab {

// Value surface v(t_i, x_k) on a time x space grid, row-major in time.
// Immutable by convention once filled; all checks take it by const reference.
struct ValueSurface {
    TimeGrid tgrid;
    SpaceGrid xgrid;
    double discount_rate = 0.0;
    std::vector<double> values; // n_time() * n_space()

    ValueSurface() = default;
    ValueSurface(const TimeGrid& tg, const SpaceGrid& xg, double r = 0.0)
        : tgrid(tg), xgrid(xg), discount_rate(r), values(tg.n_nodes() * xg.n_points, 0.0) {}

    std::size_t n_time() const { return tgrid.n_nodes(); }
    std::size_t n_space() const { return xgrid.n_points; }

    double& at(std::size_t i, std::size_t k) { return values[i * n_space() + k]; }
    double at(std::size_t i, std::size_t k) const { return values[i * n_space() + k]; }
    double operator()(std::size_t i, std::size_t k) const { return at(i, k); }

    bool same_grids(const ValueSurface& o) const {
        return tgrid.T == o.tgrid.T && tgrid.n_steps == o.tgrid.n_steps && xgrid.same_as(o.xgrid);
    }

    double sup_norm() const {
        double m = 0.0;
        for (double v : values) m = std::max(m, std::abs(v));
        return m;
    }

    // Throws on the first non-finite entry, reporting its node.
    void require_finite() const {
        for (std::size_t i = 0; i < n_time(); ++i)
            for (std::size_t k = 0; k < n_space(); ++k)
                if (!std::isfinite(at(i, k)))
                    throw std::runtime_error("non-finite surface entry at (t_" + std::to_string(i) +
                                             ", x_" + std::to_string(k) + ")");
    }

    // Header `t\x,x_0,...`, one row per time node, full-precision floats.
    void write_csv(std::ostream& out) const {
        out << "t\\x";
        for (std::size_t k = 0; k < n_space(); ++k) out << ',' << fmt17(xgrid.state(k));
        out << '\n';
        for (std::size_t i = 0; i < n_time(); ++i) {
            out << fmt17(tgrid.node(i));
            for (std::size_t k = 0; k < n_space(); ++k) out << ',' << fmt17(at(i, k));
            out << '\n';
        }
    }
};

} // namespace embedlab

#endif
