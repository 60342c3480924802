#ifndef EMBEDLAB_EMBEDDING_HPP
#define EMBEDLAB_EMBEDDING_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <utility>
#include <vector>

#include "embedlab/csv.hpp"
#include "embedlab/surface.hpp"

namespace embedlab {

enum class Direction { Min, Max };

struct TimeInterval {
    double a = 0.0;
    double b = 0.0;
};

// Columnwise time-extremum of a surface: the payoff f (min direction) or
// h (max direction), the earliest extremizing time theta per state, and the
// maximal plateau intervals where the surface sits within plateau_tol of
// the extremum.
struct EmbeddedPayoff {
    Direction direction = Direction::Min;
    SpaceGrid xgrid;
    double horizon = 0.0;
    double plateau_tol = 0.0;
    std::vector<double> payoff;
    std::vector<double> theta;
    std::vector<std::vector<TimeInterval>> extremizer_sets;

    std::size_t n_space() const { return payoff.size(); }

    void write_csv(std::ostream& out) const {
        out << "x,payoff,theta,extremizer_intervals\n";
        for (std::size_t k = 0; k < payoff.size(); ++k) {
            out << fmt17(xgrid.state(k)) << ',' << fmt17(payoff[k]) << ',' << fmt17(theta[k]) << ',';
            for (std::size_t j = 0; j < extremizer_sets[k].size(); ++j) {
                if (j) out << ';';
                out << fmt17(extremizer_sets[k][j].a) << ':' << fmt17(extremizer_sets[k][j].b);
            }
            out << '\n';
        }
    }
};

inline double default_plateau_tol(const ValueSurface& v) {
    return 1e-9 * (1.0 + v.sup_norm());
}

// plateau_tol < 0 selects the default 1e-9*(1+||v||_inf). Ties inside the
// tolerance resolve to the earliest node, matching the inf-argmin convention.
inline EmbeddedPayoff extract_embedding(const ValueSurface& surface, Direction direction,
                                        double plateau_tol = -1.0) {
    surface.require_finite();
    if (plateau_tol < 0.0) plateau_tol = default_plateau_tol(surface);

    const std::size_t nt = surface.n_time(), nx = surface.n_space();
    EmbeddedPayoff e;
    e.direction = direction;
    e.xgrid = surface.xgrid;
    e.horizon = surface.tgrid.T;
    e.plateau_tol = plateau_tol;
    e.payoff.resize(nx);
    e.theta.resize(nx);
    e.extremizer_sets.resize(nx);

    for (std::size_t k = 0; k < nx; ++k) {
        double ext = surface.at(0, k);
        for (std::size_t i = 1; i < nt; ++i) {
            double v = surface.at(i, k);
            ext = direction == Direction::Min ? std::min(ext, v) : std::max(ext, v);
        }
        e.payoff[k] = ext;

        std::vector<TimeInterval>& sets = e.extremizer_sets[k];
        bool open = false;
        for (std::size_t i = 0; i < nt; ++i) {
            bool in = std::abs(surface.at(i, k) - ext) <= plateau_tol;
            if (in && !open) {
                sets.push_back({surface.tgrid.node(i), surface.tgrid.node(i)});
                open = true;
            } else if (in) {
                sets.back().b = surface.tgrid.node(i);
            } else {
                open = false;
            }
        }
        e.theta[k] = sets.front().a;
    }
    return e;
}

// Node classification: mask true on the continuation region {t_i < theta(x)}.
struct RegionMask {
    std::size_t nt = 0, nx = 0;
    std::vector<std::uint8_t> mask;
    std::vector<std::pair<std::size_t, std::size_t>> boundary_nodes;

    bool at(std::size_t i, std::size_t k) const { return mask[i * nx + k] != 0; }
};

inline RegionMask build_regions(const EmbeddedPayoff& embedded, const TimeGrid& tgrid) {
    const std::size_t nt = tgrid.n_nodes(), nx = embedded.n_space();
    RegionMask r;
    r.nt = nt;
    r.nx = nx;
    r.mask.assign(nt * nx, 0);
    for (std::size_t i = 0; i < nt; ++i)
        for (std::size_t k = 0; k < nx; ++k)
            r.mask[i * nx + k] = tgrid.node(i) < embedded.theta[k] ? 1 : 0;
    for (std::size_t i = 0; i < nt; ++i)
        for (std::size_t k = 0; k < nx; ++k) {
            bool m = r.at(i, k), flip = false;
            if (i > 0 && r.at(i - 1, k) != m) flip = true;
            if (i + 1 < nt && r.at(i + 1, k) != m) flip = true;
            if (k > 0 && r.at(i, k - 1) != m) flip = true;
            if (k + 1 < nx && r.at(i, k + 1) != m) flip = true;
            if (flip) r.boundary_nodes.emplace_back(i, k);
        }
    return r;
}

// Paste construction: the surface on the continuation region, the payoff
// (broadcast over time) on the stopping region.
inline ValueSurface paste_value(const ValueSurface& surface, const EmbeddedPayoff& embedded,
                                const RegionMask& regions) {
    if (!surface.xgrid.same_as(embedded.xgrid) || regions.nt != surface.n_time() ||
        regions.nx != surface.n_space())
        throw std::invalid_argument("paste_value: grid mismatch");
    ValueSurface out = surface;
    for (std::size_t i = 0; i < out.n_time(); ++i)
        for (std::size_t k = 0; k < out.n_space(); ++k)
            if (!regions.at(i, k)) out.at(i, k) = embedded.payoff[k];
    return out;
}

struct SemicontinuityReport {
    double max_usc_violation = 0.0;
    double min_lsc_violation = 0.0;
};

// Discrete surrogate for the semicontinuity of the extremizer envelopes:
// violations of x -> max t_*(x) (u.s.c.) and x -> min t_*(x) (l.s.c.)
// across adjacent states, net of the supplied Lipschitz modulus.
inline SemicontinuityReport check_semicontinuity(const EmbeddedPayoff& embedded, double lip) {
    if (!embedded.xgrid.continuum())
        throw std::invalid_argument("check_semicontinuity: finite-state grid not applicable");
    const double dx = embedded.xgrid.dx();
    SemicontinuityReport rep;
    const std::size_t nx = embedded.n_space();
    for (std::size_t k = 0; k + 1 < nx; ++k) {
        double hi0 = embedded.extremizer_sets[k].back().b;
        double hi1 = embedded.extremizer_sets[k + 1].back().b;
        double lo0 = embedded.extremizer_sets[k].front().a;
        double lo1 = embedded.extremizer_sets[k + 1].front().a;
        rep.max_usc_violation = std::max(rep.max_usc_violation, std::abs(hi1 - hi0) - lip * dx);
        rep.min_lsc_violation = std::max(rep.min_lsc_violation, std::abs(lo1 - lo0) - lip * dx);
    }
    rep.max_usc_violation = std::max(rep.max_usc_violation, 0.0);
    rep.min_lsc_violation = std::max(rep.min_lsc_violation, 0.0);
    return rep;
}

struct ConvexityReport {
    std::vector<std::size_t> nonconvex_states;
};

// Flags states whose extremizer set splits into more than one plateau
// interval, i.e. fails convexity at the plateau tolerance.
inline ConvexityReport check_extremizer_convexity(const EmbeddedPayoff& embedded) {
    ConvexityReport rep;
    for (std::size_t k = 0; k < embedded.n_space(); ++k)
        if (embedded.extremizer_sets[k].size() > 1) rep.nonconvex_states.push_back(k);
    return rep;
}

} // namespace embedlab

#endif
