#ifndef EMBEDLAB_OPERATORS_HPP
#define EMBEDLAB_OPERATORS_HPP

#include <functional>
#include <stdexcept>
#include <string>

#include "embedlab/bs.hpp"
#include "embedlab/grid.hpp"
#include "embedlab/surface.hpp"

namespace embedlab {

// Tridiagonal space stencil of a (possibly value-dependent) generator L at
// one node: L u [k] ~ lo*u[k-1] + di*u[k] + up*u[k+1].
struct Stencil {
    double lo = 0.0, di = 0.0, up = 0.0;
};

// Discrete proper operator with a residual evaluator for -d_t u - L(u).
// Space stencils are central second order; the time difference is the
// trapezoidal (Crank-Nicolson consistent) quotient over [t_i, t_{i+1}], so
// residual(u, i, k) lives on the cell between time nodes i and i+1 and is
// defined for i < n_time-1, 0 < k < n_space-1.
struct DiscreteOperator {
    std::string label;
    bool linear = true;
    std::function<Stencil(const ValueSurface&, std::size_t, std::size_t)> stencil;

    double apply(const ValueSurface& u, std::size_t i, std::size_t k) const {
        Stencil s = stencil(u, i, k);
        return s.lo * u.at(i, k - 1) + s.di * u.at(i, k) + s.up * u.at(i, k + 1);
    }

    double residual(const ValueSurface& u, std::size_t i, std::size_t k) const {
        const double dt = u.tgrid.dt();
        return -(u.at(i + 1, k) - u.at(i, k)) / dt - 0.5 * (apply(u, i, k) + apply(u, i + 1, k));
    }
};

// Black-Scholes generator in log coordinates:
// L v = (sigma^2/2) v_yy + (r - sigma^2/2) v_y - r v.
inline DiscreteOperator make_bs_log_operator(const BSParams& p, const SpaceGrid& xgrid) {
    if (xgrid.kind != GridKind::LogPrice)
        throw std::invalid_argument("make_bs_log_operator: needs a log-price grid");
    const double dy = xgrid.dx();
    const double a = 0.5 * p.sigma * p.sigma, b = p.r - 0.5 * p.sigma * p.sigma, r = p.r;
    Stencil s{a / (dy * dy) - b / (2.0 * dy), -2.0 * a / (dy * dy) - r, a / (dy * dy) + b / (2.0 * dy)};
    DiscreteOperator op;
    op.label = "bs-log";
    op.linear = true;
    op.stencil = [s](const ValueSurface&, std::size_t, std::size_t) { return s; };
    return op;
}

// Fixed-coefficient arithmetic (Bachelier type) generator
// L v = (c/2) v_xx + b v_x - r v.
inline DiscreteOperator make_bachelier_operator(double b, double c, double r, const SpaceGrid& xgrid) {
    if (xgrid.kind != GridKind::Arithmetic)
        throw std::invalid_argument("make_bachelier_operator: needs an arithmetic grid");
    const double dx = xgrid.dx();
    Stencil s{0.5 * c / (dx * dx) - b / (2.0 * dx), -c / (dx * dx) - r, 0.5 * c / (dx * dx) + b / (2.0 * dx)};
    DiscreteOperator op;
    op.label = "bachelier";
    op.linear = true;
    op.stencil = [s](const ValueSurface&, std::size_t, std::size_t) { return s; };
    return op;
}

// Sup-form Bachelier generator over a coefficient rectangle: per node the
// diffusion coefficient follows the sign of the second difference and the
// drift the sign of the first difference, which realizes the pointwise sup
// for tridiagonal stencils.
inline DiscreteOperator make_bachelier_sup_operator(double b_lo, double b_hi, double c_lo,
                                                    double c_hi, double r, const SpaceGrid& xgrid) {
    if (xgrid.kind != GridKind::Arithmetic)
        throw std::invalid_argument("make_bachelier_sup_operator: needs an arithmetic grid");
    const double dx = xgrid.dx();
    DiscreteOperator op;
    op.label = "bachelier-sup";
    op.linear = false;
    op.stencil = [=](const ValueSurface& u, std::size_t i, std::size_t k) {
        double d2 = u.at(i, k + 1) - 2.0 * u.at(i, k) + u.at(i, k - 1);
        double d1 = u.at(i, k + 1) - u.at(i, k - 1);
        double c = d2 > 0.0 ? c_hi : c_lo;
        double b = d1 > 0.0 ? b_hi : b_lo;
        return Stencil{0.5 * c / (dx * dx) - b / (2.0 * dx), -c / (dx * dx) - r,
                       0.5 * c / (dx * dx) + b / (2.0 * dx)};
    };
    return op;
}

} // namespace embedlab

#endif
