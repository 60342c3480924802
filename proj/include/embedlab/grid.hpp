#ifndef EMBEDLAB_GRID_HPP
#define EMBEDLAB_GRID_HPP

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace embedlab {

// Uniform time grid on [0, T]. Non-uniform grids are rejected by design:
// all residual stencils assume constant steps.
struct TimeGrid {
    double T = 1.0;
    std::size_t n_steps = 1;

    TimeGrid() = default;
    TimeGrid(double horizon, std::size_t steps) : T(horizon), n_steps(steps) {
        if (!(T > 0.0) || !std::isfinite(T))
            throw std::invalid_argument("TimeGrid: horizon must be positive and finite");
        if (n_steps < 1)
            throw std::invalid_argument("TimeGrid: need at least one step");
    }

    double t0() const { return 0.0; }
    double dt() const { return T / static_cast<double>(n_steps); }
    std::size_t n_nodes() const { return n_steps + 1; }
    double node(std::size_t i) const { return T * static_cast<double>(i) / static_cast<double>(n_steps); }
};

enum class GridKind { LogPrice, Arithmetic, FiniteState };

inline std::string to_string(GridKind k) {
    switch (k) {
        case GridKind::LogPrice: return "log-price";
        case GridKind::Arithmetic: return "arithmetic";
        case GridKind::FiniteState: return "finite-state";
    }
    return "?";
}

// Uniform space grid. For the log-price kind node(k) is the log coordinate y
// and state(k) = e^y is the price; for the other kinds the two coincide.
// Finite-state grids enumerate the states 1..d.
struct SpaceGrid {
    GridKind kind = GridKind::Arithmetic;
    double lo = 0.0;
    double hi = 1.0;
    std::size_t n_points = 3;

    SpaceGrid() = default;
    SpaceGrid(GridKind k, double a, double b, std::size_t n) : kind(k), lo(a), hi(b), n_points(n) {
        if (kind != GridKind::FiniteState) {
            if (!(lo < hi))
                throw std::invalid_argument("SpaceGrid: need lo < hi");
            if (n_points < 3)
                throw std::invalid_argument("SpaceGrid: need at least 3 points");
        }
        if (!std::isfinite(lo) || !std::isfinite(hi))
            throw std::invalid_argument("SpaceGrid: non-finite bounds");
    }

    static SpaceGrid log_price(double y_lo, double y_hi, std::size_t n) {
        return SpaceGrid(GridKind::LogPrice, y_lo, y_hi, n);
    }
    static SpaceGrid arithmetic(double x_lo, double x_hi, std::size_t n) {
        return SpaceGrid(GridKind::Arithmetic, x_lo, x_hi, n);
    }
    static SpaceGrid finite_state(std::size_t d) {
        if (d < 1) throw std::invalid_argument("SpaceGrid: empty state space");
        SpaceGrid g;
        g.kind = GridKind::FiniteState;
        g.lo = 1.0;
        g.hi = static_cast<double>(d);
        g.n_points = d;
        return g;
    }

    double dx() const {
        if (n_points < 2) return 1.0;
        return (hi - lo) / static_cast<double>(n_points - 1);
    }
    // grid coordinate (y for log-price grids)
    double node(std::size_t k) const { return lo + dx() * static_cast<double>(k); }
    // state value fed to payoffs and reports
    double state(std::size_t k) const {
        return kind == GridKind::LogPrice ? std::exp(node(k)) : node(k);
    }
    bool continuum() const { return kind != GridKind::FiniteState; }

    bool same_as(const SpaceGrid& o) const {
        return kind == o.kind && lo == o.lo && hi == o.hi && n_points == o.n_points;
    }
};

} // namespace embedlab

#endif
