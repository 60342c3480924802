#ifndef EMBEDLAB_CHECKS_HPP
#define EMBEDLAB_CHECKS_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "embedlab/csv.hpp"
#include "embedlab/embedding.hpp"
#include "embedlab/operators.hpp"
#include "embedlab/surface.hpp"

namespace embedlab {

struct NodeRef {
    std::size_t i = 0, k = 0;
};

// --- order relation -------------------------------------------------------

struct OrderReport {
    double max_gap_uv = 0.0; // max (u - v)_+
    NodeRef arg_uv;
    std::size_t violations_uv = 0; // nodes with u > v + tol
    bool has_w = false;
    double max_gap_vw = 0.0; // max (v - w)_+
    NodeRef arg_vw;
    std::size_t violations_vw = 0;
    double tol = 0.0;
};

inline OrderReport check_order(const ValueSurface& u, const ValueSurface& v,
                               const ValueSurface* w, double tol) {
    if (!u.same_grids(v) || (w && !v.same_grids(*w)))
        throw std::invalid_argument("check_order: grid mismatch");
    OrderReport rep;
    rep.tol = tol;
    rep.has_w = w != nullptr;
    for (std::size_t i = 0; i < u.n_time(); ++i)
        for (std::size_t k = 0; k < u.n_space(); ++k) {
            double gap = u.at(i, k) - v.at(i, k);
            if (gap > rep.max_gap_uv) {
                rep.max_gap_uv = gap;
                rep.arg_uv = {i, k};
            }
            if (gap > tol) ++rep.violations_uv;
            if (w) {
                double gap2 = v.at(i, k) - w->at(i, k);
                if (gap2 > rep.max_gap_vw) {
                    rep.max_gap_vw = gap2;
                    rep.arg_vw = {i, k};
                }
                if (gap2 > tol) ++rep.violations_vw;
            }
        }
    return rep;
}

// --- strict-region vs extremizer-graph exclusion --------------------------

struct ExclusionReport {
    std::size_t strict_nodes = 0; // nodes with u > payoff + tol
    std::size_t violations = 0;   // strict nodes whose time lies in an extremizer interval
    NodeRef first_violation;
};

inline ExclusionReport check_region_exclusion(const ValueSurface& u, const EmbeddedPayoff& f,
                                              double tol) {
    if (!u.xgrid.same_as(f.xgrid)) throw std::invalid_argument("check_region_exclusion: grid mismatch");
    ExclusionReport rep;
    for (std::size_t i = 0; i < u.n_time(); ++i) {
        double t = u.tgrid.node(i);
        for (std::size_t k = 0; k < u.n_space(); ++k) {
            if (u.at(i, k) <= f.payoff[k] + tol) continue;
            ++rep.strict_nodes;
            for (const TimeInterval& iv : f.extremizer_sets[k])
                if (t >= iv.a && t <= iv.b) {
                    if (rep.violations == 0) rep.first_violation = {i, k};
                    ++rep.violations;
                    break;
                }
        }
    }
    return rep;
}

// Empirical sandwich width: max (v - u)_+ over all nodes.
inline double epsilon_sandwich(const ValueSurface& u, const ValueSurface& v) {
    if (!u.same_grids(v)) throw std::invalid_argument("epsilon_sandwich: grid mismatch");
    double eps = 0.0;
    for (std::size_t idx = 0; idx < u.values.size(); ++idx)
        eps = std::max(eps, v.values[idx] - u.values[idx]);
    return eps;
}

// --- free boundary residuals ----------------------------------------------

// Residual cells straddling the region boundary are excluded from both the
// equality and the sign check: the pasted surface is only C^0 across the
// boundary, so a mixed stencil measures the kink, not the operator. A
// column's first stopping node sits on the boundary itself (the mask puts
// the crossing time on the stopping side), so cells containing one straddle
// the seam even though the mask agrees on every node.
inline bool cell_uniform(const RegionMask& regions, std::size_t i, std::size_t k, bool& in_C) {
    bool m = regions.at(i, k);
    for (std::size_t ii = i; ii <= i + 1; ++ii)
        for (std::size_t kk = k - 1; kk <= k + 1; ++kk) {
            if (regions.at(ii, kk) != m) return false;
            if (!m && ii > 0 && regions.at(ii - 1, kk)) return false;
        }
    in_C = m;
    return true;
}

struct FbpReport {
    double max_eq_residual_on_C = 0.0;
    NodeRef arg_eq;
    std::size_t eq_cells = 0;
    // oriented so that a pass means >= -tol for either direction: the raw
    // residual for the min direction, its negative for the max direction
    double min_oriented_inequality = std::numeric_limits<double>::infinity();
    NodeRef arg_ineq;
    std::size_t ineq_cells = 0;
};

// Crossing time per column: the first node on the stopping side, or past T
// for columns that never stop.
inline std::vector<double> crossing_times(const RegionMask& regions, const TimeGrid& tgrid) {
    std::vector<double> cross(regions.nx, 2.0 * tgrid.T + 1.0);
    for (std::size_t k = 0; k < regions.nx; ++k)
        for (std::size_t i = 0; i < regions.nt; ++i)
            if (!regions.at(i, k)) {
                cross[k] = tgrid.node(i);
                break;
            }
    return cross;
}

inline FbpReport fbp_residual(const ValueSurface& u, const DiscreteOperator& op,
                              const RegionMask& regions, Direction direction,
                              double horizon_fraction = 0.9) {
    if (regions.nt != u.n_time() || regions.nx != u.n_space())
        throw std::invalid_argument("fbp_residual: mask/surface mismatch");
    if (u.n_space() < 3) throw std::invalid_argument("fbp_residual: interior stencil unavailable");
    FbpReport rep;
    const double sign = direction == Direction::Min ? 1.0 : -1.0;
    // Stopping-side cells in columns that cross inside the terminal fraction
    // of the horizon are skipped: near the expiry corner the surface moves by
    // O(1) per time step, so neither the extracted boundary nor the payoff
    // stencil is resolved there and the pointwise sign is meaningless.
    const std::vector<double> cross = crossing_times(regions, u.tgrid);
    const double t_cap = horizon_fraction * u.tgrid.T;
    for (std::size_t i = 0; i + 1 < u.n_time(); ++i)
        for (std::size_t k = 1; k + 1 < u.n_space(); ++k) {
            bool in_C = false;
            if (!cell_uniform(regions, i, k, in_C)) continue;
            if (!in_C && std::max({cross[k - 1], cross[k], cross[k + 1]}) > t_cap &&
                u.tgrid.node(i) > t_cap)
                continue;
            double res = op.residual(u, i, k);
            ++rep.ineq_cells;
            if (sign * res < rep.min_oriented_inequality) {
                rep.min_oriented_inequality = sign * res;
                rep.arg_ineq = {i, k};
            }
            if (in_C) {
                ++rep.eq_cells;
                if (std::abs(res) > rep.max_eq_residual_on_C) {
                    rep.max_eq_residual_on_C = std::abs(res);
                    rep.arg_eq = {i, k};
                }
            }
        }
    if (rep.ineq_cells == 0) rep.min_oriented_inequality = 0.0;
    return rep;
}

// --- variational (complementarity) residual -------------------------------

struct VariationalReport {
    double max_abs = 0.0;
    NodeRef arg;
    std::size_t cells = 0;
};

inline VariationalReport variational_residual(const ValueSurface& u, const EmbeddedPayoff& f,
                                              const DiscreteOperator& op) {
    if (!u.xgrid.same_as(f.xgrid)) throw std::invalid_argument("variational_residual: grid mismatch");
    RegionMask regions = build_regions(f, u.tgrid);
    VariationalReport rep;
    for (std::size_t i = 0; i + 1 < u.n_time(); ++i)
        for (std::size_t k = 1; k + 1 < u.n_space(); ++k) {
            bool in_C = false;
            if (!cell_uniform(regions, i, k, in_C)) continue;
            double m = std::min(op.residual(u, i, k), u.at(i, k) - f.payoff[k]);
            ++rep.cells;
            if (std::abs(m) > rep.max_abs) {
                rep.max_abs = std::abs(m);
                rep.arg = {i, k};
            }
        }
    return rep;
}

// --- continuous and smooth fit --------------------------------------------

struct FitOptions {
    // Exclude boundary columns whose crossing sits in the terminal fraction
    // of the horizon (the expiry corner is a genuine singularity of the
    // value surface) and columns where theta jumps by more than
    // jump_tol_steps time steps between space neighbors (the fit conditions
    // presuppose a continuous boundary).
    double theta_cap_frac = 0.9;
    double jump_tol_steps = 20.0;
};

struct FitReport {
    double max_continuous_fit_gap = 0.0;
    NodeRef arg_continuous;
    double max_smooth_fit_gap = 0.0;
    NodeRef arg_smooth;
    std::size_t boundary_nodes_checked = 0;
    bool applicable = false;
};

inline FitReport fit_check(const ValueSurface& u, const EmbeddedPayoff& f, const RegionMask& regions,
                           const FitOptions& opt = {}) {
    if (!u.xgrid.same_as(f.xgrid) || regions.nt != u.n_time() || regions.nx != u.n_space())
        throw std::invalid_argument("fit_check: grid mismatch");
    FitReport rep;
    if (regions.boundary_nodes.empty()) return rep; // not applicable

    const std::size_t nt = u.n_time(), nx = u.n_space();
    const double dt = u.tgrid.dt(), dx = u.xgrid.dx();

    for (std::size_t k = 2; k + 2 < nx; ++k) {
        // first stopping node in the column
        std::size_t j = 0;
        while (j < nt && regions.at(j, k)) ++j;
        if (j == 0 || j >= nt) continue; // no interior boundary in this column
        if (f.theta[k] > opt.theta_cap_frac * u.tgrid.T) continue;
        if (std::abs(f.theta[k + 1] - f.theta[k]) > opt.jump_tol_steps * dt) continue;
        if (std::abs(f.theta[k - 1] - f.theta[k]) > opt.jump_tol_steps * dt) continue;

        ++rep.boundary_nodes_checked;

        // continuous fit: one-sided limit in time from the continuation side,
        // quadratic extrapolation of the last three C rows onto the boundary node
        double limit;
        if (j >= 3)
            limit = 3.0 * u.at(j - 1, k) - 3.0 * u.at(j - 2, k) + u.at(j - 3, k);
        else
            limit = u.at(j - 1, k);
        double cgap = std::abs(limit - f.payoff[k]);
        if (cgap > rep.max_continuous_fit_gap) {
            rep.max_continuous_fit_gap = cgap;
            rep.arg_continuous = {j, k};
        }

        // smooth fit: second-order one-sided space derivative from the C side
        // at the boundary node, against the central derivative of the payoff
        double df = (f.payoff[k + 1] - f.payoff[k - 1]) / (2.0 * dx);
        double du;
        bool have = false;
        if (regions.at(j, k + 1)) {
            du = (-3.0 * u.at(j, k) + 4.0 * u.at(j, k + 1) - u.at(j, k + 2)) / (2.0 * dx);
            have = true;
        } else if (regions.at(j, k - 1)) {
            du = (3.0 * u.at(j, k) - 4.0 * u.at(j, k - 1) + u.at(j, k - 2)) / (2.0 * dx);
            have = true;
        }
        if (have) {
            double sgap = std::abs(du - df);
            if (sgap > rep.max_smooth_fit_gap) {
                rep.max_smooth_fit_gap = sgap;
                rep.arg_smooth = {j, k};
            }
        }
    }
    rep.applicable = rep.boundary_nodes_checked > 0;
    return rep;
}

// --- theta-graph hitting ---------------------------------------------------

struct PathSet {
    std::size_t start_index = 0;                  // time node of the first sample
    std::vector<std::vector<double>> states;      // one state per time node from start_index on
};

struct HittingReport {
    std::size_t n_paths = 0;
    std::size_t rejected = 0; // start violates t <= theta(x)
    std::size_t crossed = 0;
    double mean_crossing_time = 0.0;
    double max_crossing_time = 0.0;
};

// First index with s >= theta(X_s) along each path; existence before or at T
// is guaranteed because theta <= T and the last sample sits at T.
inline HittingReport hitting_path_check(const EmbeddedPayoff& f, const TimeGrid& tgrid,
                                        const PathSet& paths) {
    auto theta_of = theta_interpolant(f);
    HittingReport rep;
    rep.n_paths = paths.states.size();
    double sum_tau = 0.0;
    for (const std::vector<double>& path : paths.states) {
        double t0 = tgrid.node(paths.start_index);
        if (path.empty() || t0 > theta_of(path.front())) {
            ++rep.rejected;
            continue;
        }
        for (std::size_t j = 0; j < path.size(); ++j) {
            double s = tgrid.node(paths.start_index + j);
            if (s >= theta_of(path[j])) {
                ++rep.crossed;
                sum_tau += s;
                rep.max_crossing_time = std::max(rep.max_crossing_time, s);
                break;
            }
        }
    }
    if (rep.crossed) rep.mean_crossing_time = sum_tau / static_cast<double>(rep.crossed);
    return rep;
}

// --- report serialization ---------------------------------------------------

struct CheckRow {
    std::string check;
    std::string metric;
    double value = 0.0;
    std::size_t node_t = 0, node_x = 0;
};

inline void write_check_csv(std::ostream& out, const std::vector<CheckRow>& rows) {
    out << "check,metric,value,node_t,node_x\n";
    for (const CheckRow& r : rows)
        out << r.check << ',' << r.metric << ',' << fmt17(r.value) << ',' << r.node_t << ','
            << r.node_x << '\n';
}

} // namespace embedlab

#endif
