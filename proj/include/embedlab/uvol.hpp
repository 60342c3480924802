#ifndef EMBEDLAB_UVOL_HPP
#define EMBEDLAB_UVOL_HPP

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "embedlab/bs.hpp"
#include "embedlab/checks.hpp"
#include "embedlab/embedding.hpp"
#include "embedlab/gauss_hermite.hpp"
#include "embedlab/operators.hpp"
#include "embedlab/payoff.hpp"
#include "embedlab/surface.hpp"
#include "embedlab/tridiag.hpp"

namespace embedlab {

// Finite-activity jump part: intensity plus a piecewise-linear density table
// on a bounded support. The truncation function is fixed to z*1_{|z|<=1}.
struct JumpSpec {
    double intensity = 0.0;
    std::vector<double> zs;
    std::vector<double> density;

    void validate() const {
        if (intensity < 0.0) throw std::invalid_argument("JumpSpec: negative intensity");
        if (zs.size() != density.size() || zs.size() < 2)
            throw std::invalid_argument("JumpSpec: need >= 2 matching table rows");
        for (std::size_t i = 1; i < zs.size(); ++i)
            if (!(zs[i] > zs[i - 1])) throw std::invalid_argument("JumpSpec: z nodes must increase");
        double mass = 0.0;
        for (std::size_t i = 1; i < zs.size(); ++i)
            mass += 0.5 * (density[i] + density[i - 1]) * (zs[i] - zs[i - 1]);
        if (std::abs(mass - 1.0) > 1e-6)
            throw std::invalid_argument("JumpSpec: density mass " + fmt17(mass) + " != 1");
    }

    // integral of f(z) rho(z) dz by trapezoid on the table nodes
    template <class F>
    double integrate(F&& f) const {
        double acc = 0.0;
        for (std::size_t i = 1; i < zs.size(); ++i) {
            double fa = f(zs[i - 1]) * density[i - 1];
            double fb = f(zs[i]) * density[i];
            acc += 0.5 * (fa + fb) * (zs[i] - zs[i - 1]);
        }
        return acc;
    }

    double compensator_mean() const {
        return integrate([](double z) { return std::abs(z) <= 1.0 ? z : 0.0; });
    }
};

// Coefficient rectangle for the sup: drift in [b_lo,b_hi], squared
// volatility in [c_lo,c_hi], optional jumps.
struct UncertaintySet {
    double b_lo = 0.0, b_hi = 0.0;
    double c_lo = 0.0, c_hi = 0.0;
    std::optional<JumpSpec> jump;

    UncertaintySet() = default;
    UncertaintySet(double bl, double bh, double cl, double ch) : b_lo(bl), b_hi(bh), c_lo(cl), c_hi(ch) {
        validate();
    }
    void validate() const {
        if (!(b_lo <= b_hi)) throw std::invalid_argument("UncertaintySet: need b_lo <= b_hi");
        if (!(0.0 < c_lo && c_lo <= c_hi)) throw std::invalid_argument("UncertaintySet: need 0 < c_lo <= c_hi");
        if (jump) jump->validate();
    }
    bool singleton() const { return b_lo == b_hi && c_lo == c_hi && (!jump || jump->intensity == 0.0); }
};

namespace detail {

inline double interp_clamped(const std::vector<double>& v, const SpaceGrid& g, double x) {
    if (x <= g.lo) return v.front();
    if (x >= g.hi) return v.back();
    double pos = (x - g.lo) / g.dx();
    std::size_t k = static_cast<std::size_t>(pos);
    if (k + 1 >= v.size()) return v.back();
    double w = pos - static_cast<double>(k);
    return (1.0 - w) * v[k] + w * v[k + 1];
}

} // namespace detail

// HJB solver for the sup-form arithmetic (Bachelier type) equation on a
// rectangle of coefficients. Backward implicit Euler with policy iteration:
// per interior node the diffusion coefficient follows the sign of the second
// difference and the drift the sign of the first difference, the advection
// term is upwinded by the chosen drift, and the policy is re-derived from
// each implicit solve until it is fixed. Jumps enter explicitly with the
// kernel v(t,x+z) - v(t,x) - v_x(t,x) h(z); the explicit part requires
// intensity*dt <= 1 for monotonicity.
inline ValueSurface hjb_solve(const Payoff& g, const UncertaintySet& theta_set, double r,
                              const TimeGrid& tgrid, const SpaceGrid& xgrid) {
    theta_set.validate();
    if (xgrid.kind != GridKind::Arithmetic)
        throw std::invalid_argument("hjb_solve: needs an arithmetic grid");
    const std::size_t nt = tgrid.n_nodes(), nx = xgrid.n_points;
    const double h = tgrid.dt(), dx = xgrid.dx();

    if (theta_set.jump && theta_set.jump->intensity * h > 1.0)
        throw std::runtime_error("hjb_solve: explicit jump part violates intensity*dt <= 1, refine time grid");

    ValueSurface surf(tgrid, xgrid, r);
    std::vector<double> v(nx);
    for (std::size_t k = 0; k < nx; ++k) v[k] = g(xgrid.state(k));
    for (std::size_t k = 0; k < nx; ++k) surf.at(nt - 1, k) = v[k];

    double scale = 0.0;
    for (double val : v) scale = std::max(scale, std::abs(val));
    const double tie = 1e-12 * (1.0 + scale);
    const double g_lo = v.front(), g_hi = v.back();
    const double lambda = theta_set.jump ? theta_set.jump->intensity : 0.0;

    std::vector<double> c_pol(nx, theta_set.c_hi), b_pol(nx, theta_set.b_hi);
    std::vector<double> jump_rhs(nx, 0.0);
    std::vector<double> sub(nx), diag(nx), sup(nx), rhs(nx), w(nx);

    for (std::size_t i = nt - 1; i-- > 0;) {
        const double tau = tgrid.T - tgrid.node(i);
        const double blo_val = std::exp(-r * tau) * g_lo;
        const double bhi_val = std::exp(-r * tau) * g_hi;

        if (lambda > 0.0) {
            const JumpSpec& js = *theta_set.jump;
            for (std::size_t k = 1; k + 1 < nx; ++k) {
                double xk = xgrid.node(k);
                double vk = v[k];
                double d1 = (v[k + 1] - v[k - 1]) / (2.0 * dx);
                jump_rhs[k] = lambda * js.integrate([&](double z) {
                    double hz = std::abs(z) <= 1.0 ? z : 0.0;
                    return detail::interp_clamped(v, xgrid, xk + z) - vk - d1 * hz;
                });
            }
        }

        // initial policy guess from the previous time level
        auto derive_policy = [&](const std::vector<double>& u, bool keep_on_tie) {
            bool changed = false;
            for (std::size_t k = 1; k + 1 < nx; ++k) {
                double d2 = u[k + 1] - 2.0 * u[k] + u[k - 1];
                double d1 = u[k + 1] - u[k - 1];
                double c_new = c_pol[k], b_new = b_pol[k];
                if (d2 > tie) c_new = theta_set.c_hi;
                else if (d2 < -tie) c_new = theta_set.c_lo;
                else if (!keep_on_tie) c_new = theta_set.c_lo;
                if (d1 > tie) b_new = theta_set.b_hi;
                else if (d1 < -tie) b_new = theta_set.b_lo;
                else if (!keep_on_tie) b_new = theta_set.b_lo;
                if (c_new != c_pol[k] || b_new != b_pol[k]) changed = true;
                c_pol[k] = c_new;
                b_pol[k] = b_new;
            }
            return changed;
        };
        derive_policy(v, false);

        bool fixed = false;
        for (int sweep = 0; sweep < 20; ++sweep) {
            for (std::size_t k = 0; k < nx; ++k) {
                sub[k] = 0.0;
                diag[k] = 1.0;
                sup[k] = 0.0;
            }
            rhs[0] = blo_val;
            rhs[nx - 1] = bhi_val;
            for (std::size_t k = 1; k + 1 < nx; ++k) {
                double c = c_pol[k], b = b_pol[k];
                double lo = 0.5 * c / (dx * dx), up = lo, di = -c / (dx * dx) - r;
                if (b >= 0.0) { // forward difference
                    up += b / dx;
                    di -= b / dx;
                } else { // backward difference
                    lo += -b / dx;
                    di -= -b / dx;
                }
                sub[k] = -h * lo;
                diag[k] = 1.0 - h * di;
                sup[k] = -h * up;
                rhs[k] = v[k] + h * jump_rhs[k];
            }
            w = thomas_solve(sub, diag, sup, rhs);
            if (!derive_policy(w, true)) {
                fixed = true;
                break;
            }
        }
        if (!fixed) throw std::runtime_error("hjb_solve: policy iteration did not reach a fixed policy");
        v = w;
        for (std::size_t k = 0; k < nx; ++k) surf.at(i, k) = v[k];
    }
    return surf;
}

// Linear arithmetic reference solver (fixed b, c): Crank-Nicolson with
// Rannacher startup, Dirichlet boundaries at the discounted payoff.
inline ValueSurface linear_bachelier_solve(const Payoff& g, double b, double c, double r,
                                           const TimeGrid& tgrid, const SpaceGrid& xgrid) {
    if (xgrid.kind != GridKind::Arithmetic)
        throw std::invalid_argument("linear_bachelier_solve: needs an arithmetic grid");
    if (!(c > 0.0)) throw std::invalid_argument("linear_bachelier_solve: need c > 0");
    const std::size_t nt = tgrid.n_nodes(), nx = xgrid.n_points;
    const double dx = xgrid.dx(), h = tgrid.dt(), a = 0.5 * c;

    ValueSurface surf(tgrid, xgrid, r);
    std::vector<double> v(nx);
    for (std::size_t k = 0; k < nx; ++k) v[k] = g(xgrid.state(k));
    for (std::size_t k = 0; k < nx; ++k) surf.at(nt - 1, k) = v[k];
    const double g_lo = v.front(), g_hi = v.back();

    for (std::size_t i = nt - 1; i-- > 0;) {
        const double tau = tgrid.T - tgrid.node(i);
        if (i == nt - 2) {
            v = detail::bs_theta_step(v, a, b, r, dx, 0.5 * h, 1.0, std::exp(-r * (tau - 0.5 * h)) * g_lo,
                                      std::exp(-r * (tau - 0.5 * h)) * g_hi);
            v = detail::bs_theta_step(v, a, b, r, dx, 0.5 * h, 1.0, std::exp(-r * tau) * g_lo,
                                      std::exp(-r * tau) * g_hi);
        } else {
            v = detail::bs_theta_step(v, a, b, r, dx, h, 0.5, std::exp(-r * tau) * g_lo,
                                      std::exp(-r * tau) * g_hi);
        }
        for (std::size_t k = 0; k < nx; ++k) surf.at(i, k) = v[k];
    }
    return surf;
}

// Max-direction embedding of a solved surface: h, theta*, the pasted game
// value w and the region mask, in one call.
struct GameValue {
    EmbeddedPayoff h;
    ValueSurface w;
    RegionMask regions;
};

inline GameValue build_game_value(const ValueSurface& v, double plateau_tol = -1.0) {
    GameValue gv;
    gv.h = extract_embedding(v, Direction::Max, plateau_tol);
    gv.regions = build_regions(gv.h, v.tgrid);
    gv.w = paste_value(v, gv.h, gv.regions);
    return gv;
}

// Once w touches h in a column it must stay there: the stopping region is an
// up-set in time.
struct ConstStopReport {
    std::size_t violations = 0;
    double max_gap_after_touch = 0.0;
    NodeRef first_violation;
};

inline ConstStopReport check_const_stop(const ValueSurface& w, const EmbeddedPayoff& h, double tol) {
    if (!w.xgrid.same_as(h.xgrid)) throw std::invalid_argument("check_const_stop: grid mismatch");
    ConstStopReport rep;
    for (std::size_t k = 0; k < w.n_space(); ++k) {
        bool touched = false;
        for (std::size_t i = 0; i < w.n_time(); ++i) {
            double gap = std::abs(w.at(i, k) - h.payoff[k]);
            if (!touched) {
                if (gap <= tol) touched = true;
            } else if (gap > tol) {
                if (rep.violations == 0) rep.first_violation = {i, k};
                ++rep.violations;
                rep.max_gap_after_touch = std::max(rep.max_gap_after_touch, gap);
            }
        }
    }
    return rep;
}

// Linear singleton-with-jumps cross-check: compound Poisson series with the
// k-fold jump convolutions evaluated numerically, diffusion by quadrature.
struct MertonReport {
    double engine_value = 0.0;
    double reference_value = 0.0;
    double discrepancy = 0.0;
    std::size_t terms = 0;
};

inline MertonReport merton_validation(const Payoff& g, const UncertaintySet& theta_set, double r,
                                      const TimeGrid& tgrid, const SpaceGrid& xgrid, double x0) {
    theta_set.validate();
    if (theta_set.b_lo != theta_set.b_hi || theta_set.c_lo != theta_set.c_hi)
        throw std::invalid_argument("merton_validation: needs a singleton coefficient set");
    const double b = theta_set.b_lo, c = theta_set.c_lo, T = tgrid.T;
    const double lambda = theta_set.jump ? theta_set.jump->intensity : 0.0;

    MertonReport rep;
    ValueSurface v = hjb_solve(g, theta_set, r, tgrid, xgrid);
    rep.engine_value = detail::interp_clamped(
        std::vector<double>(v.values.begin(), v.values.begin() + static_cast<long>(v.n_space())),
        xgrid, x0);

    const double m_h = theta_set.jump ? theta_set.jump->compensator_mean() : 0.0;
    const double base = x0 + b * T - lambda * T * m_h;
    const double sdev = std::sqrt(c * T);
    QuadratureRule q = gauss_hermite(96);
    const double inv_sqrt_pi = 0.56418958354775628695;

    auto diffused = [&](double shift) {
        double acc = 0.0;
        for (std::size_t j = 0; j < q.nodes.size(); ++j)
            acc += q.weights[j] * g(base + shift + sdev * std::sqrt(2.0) * q.nodes[j]);
        return inv_sqrt_pi * acc;
    };

    if (lambda == 0.0) {
        rep.reference_value = std::exp(-r * T) * diffused(0.0);
        rep.terms = 1;
    } else {
        const JumpSpec& js = *theta_set.jump;
        // k-fold convolutions of the jump density on a shared fine grid
        const double z_lo = js.zs.front(), z_hi = js.zs.back();
        const std::size_t M = 512;
        double series = std::exp(-lambda * T) * diffused(0.0); // k = 0
        double pois = std::exp(-lambda * T);
        std::size_t terms = 1;

        // current density of the k-fold sum on [k*z_lo, k*z_hi]
        std::vector<double> cur;
        double cur_lo = 0.0, cur_step = 0.0;
        std::vector<double> rho(M + 1);
        const double step0 = (z_hi - z_lo) / static_cast<double>(M);
        for (std::size_t j = 0; j <= M; ++j) {
            double z = z_lo + step0 * static_cast<double>(j);
            // linear interp of the table
            std::size_t idx = 1;
            while (idx + 1 < js.zs.size() && js.zs[idx] < z) ++idx;
            double wgt = (z - js.zs[idx - 1]) / (js.zs[idx] - js.zs[idx - 1]);
            wgt = std::clamp(wgt, 0.0, 1.0);
            rho[j] = (1.0 - wgt) * js.density[idx - 1] + wgt * js.density[idx];
        }

        for (std::size_t k = 1; k <= 200; ++k) {
            pois *= lambda * T / static_cast<double>(k);
            if (k == 1) {
                cur = rho;
                cur_lo = z_lo;
                cur_step = step0;
            } else {
                // convolve cur with rho; keep the grid spacing, extend support
                std::size_t n_new = cur.size() + M;
                std::vector<double> nxt(n_new, 0.0);
                for (std::size_t a_i = 0; a_i < cur.size(); ++a_i) {
                    if (cur[a_i] == 0.0) continue;
                    double wa = (a_i == 0 || a_i + 1 == cur.size()) ? 0.5 : 1.0;
                    for (std::size_t b_i = 0; b_i <= M; ++b_i)
                        nxt[a_i + b_i] += wa * cur[a_i] * rho[b_i] * cur_step;
                }
                cur = std::move(nxt);
                cur_lo += z_lo;
            }
            // expectation over the k-fold sum by trapezoid
            double term = 0.0;
            for (std::size_t j = 0; j < cur.size(); ++j) {
                double wj = (j == 0 || j + 1 == cur.size()) ? 0.5 : 1.0;
                if (cur[j] != 0.0) term += wj * cur[j] * diffused(cur_lo + cur_step * static_cast<double>(j)) * cur_step;
            }
            series += pois * term;
            ++terms;
            if (pois < 1e-12 && k > lambda * T) break;
            if (k == 200) throw std::runtime_error("merton_validation: series truncation below 1e-10 unreachable");
        }
        rep.reference_value = std::exp(-r * T) * series;
        rep.terms = terms;
    }
    rep.discrepancy = std::abs(rep.engine_value - rep.reference_value);
    return rep;
}

} // namespace embedlab

#endif
