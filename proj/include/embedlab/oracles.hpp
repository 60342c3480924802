#ifndef EMBEDLAB_ORACLES_HPP
#define EMBEDLAB_ORACLES_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "embedlab/bs.hpp"
#include "embedlab/embedding.hpp"
#include "embedlab/operators.hpp"
#include "embedlab/payoff.hpp"
#include "embedlab/tridiag.hpp"

namespace embedlab {

enum class TreeKind { BinomialCRR, Trinomial };
enum class StopMode { MaximizeStop, MinimizeStop };

struct TreeSpec {
    std::size_t n_steps = 1;
    TreeKind kind = TreeKind::BinomialCRR;
    StopMode mode = StopMode::MaximizeStop;
    bool has_control = false;
    double sigma_lo = 0.0, sigma_hi = 0.0;

    void validate() const {
        if (n_steps < 1) throw std::invalid_argument("TreeSpec: need n_steps >= 1");
        if (has_control && !(sigma_lo <= sigma_hi))
            throw std::invalid_argument("TreeSpec: need sigma_lo <= sigma_hi");
    }
};

struct PSORConfig {
    double omega = 1.5;
    double tol = 1e-8;
    std::size_t max_iters = 10000;

    void validate() const {
        if (!(omega > 0.0 && omega < 2.0)) throw std::invalid_argument("PSORConfig: omega outside (0,2)");
        if (!(tol > 0.0)) throw std::invalid_argument("PSORConfig: tol must be positive");
    }
};

// --- CRR binomial ----------------------------------------------------------

// CRR lattice on [t, T]; MaximizeStop is the usual American backward
// induction, MinimizeStop clamps downward instead.
inline double american_binomial(const Payoff& payoff, const BSParams& p, const TreeSpec& spec,
                                double t, double x) {
    spec.validate();
    if (!(x > 0.0)) throw std::invalid_argument("american_binomial: state must be positive");
    if (spec.kind != TreeKind::BinomialCRR)
        throw std::invalid_argument("american_binomial: binomial-CRR kind expected");
    const double tau = p.T - t;
    if (tau < 0.0) throw std::invalid_argument("american_binomial: t past expiry");
    if (tau == 0.0) return payoff(x);

    const std::size_t n = spec.n_steps;
    const double dt = tau / static_cast<double>(n);
    const double up = std::exp(p.sigma * std::sqrt(dt));
    const double down = 1.0 / up;
    const double grow = std::exp(p.r * dt);
    const double q = (grow - down) / (up - down);
    if (!(q > 0.0 && q < 1.0))
        throw std::runtime_error("american_binomial: risk-neutral weight outside (0,1), refine steps");
    const double disc = std::exp(-p.r * dt);
    const bool maximize = spec.mode == StopMode::MaximizeStop;

    // state at level m, index j is x * up^(2j - m); cache the power ladder
    std::vector<double> st(2 * n + 1);
    for (std::size_t e = 0; e < st.size(); ++e)
        st[e] = x * std::exp(p.sigma * std::sqrt(dt) * (static_cast<double>(e) - static_cast<double>(n)));

    std::vector<double> v(n + 1);
    for (std::size_t j = 0; j <= n; ++j) v[j] = payoff(st[2 * j]);
    for (std::size_t m = n; m-- > 0;) {
        for (std::size_t j = 0; j <= m; ++j) {
            double cont = disc * (q * v[j + 1] + (1.0 - q) * v[j]);
            double ex = payoff(st[2 * j + (n - m)]);
            v[j] = maximize ? std::max(ex, cont) : std::min(ex, cont);
        }
    }
    return v[0];
}

// Same lattice without early exercise, for order comparisons.
inline double european_binomial(const Payoff& payoff, const BSParams& p, const TreeSpec& spec,
                                double t, double x) {
    spec.validate();
    const double tau = p.T - t;
    if (tau == 0.0) return payoff(x);
    const std::size_t n = spec.n_steps;
    const double dt = tau / static_cast<double>(n);
    const double up = std::exp(p.sigma * std::sqrt(dt));
    const double down = 1.0 / up;
    const double grow = std::exp(p.r * dt);
    const double q = (grow - down) / (up - down);
    if (!(q > 0.0 && q < 1.0))
        throw std::runtime_error("european_binomial: risk-neutral weight outside (0,1)");
    const double disc = std::exp(-p.r * dt);
    std::vector<double> v(n + 1);
    for (std::size_t j = 0; j <= n; ++j)
        v[j] = payoff(x * std::exp(p.sigma * std::sqrt(dt) * (2.0 * static_cast<double>(j) - static_cast<double>(n))));
    for (std::size_t m = n; m-- > 0;)
        for (std::size_t j = 0; j <= m; ++j) v[j] = disc * (q * v[j + 1] + (1.0 - q) * v[j]);
    return v[0];
}

// --- projected SOR obstacle solver ------------------------------------------

struct PsorResult {
    ValueSurface surface;
    std::size_t total_iters = 0;
    std::size_t max_step_iters = 0;
};

// Obstacle-constrained backward stepping with the same Crank-Nicolson /
// Rannacher layout as the linear solver, so the unconstrained limit
// reproduces it. Terminal condition and obstacle are both the embedded
// payoff; Dirichlet boundaries take max(payoff, discounted payoff).
inline PsorResult psor_solve(const EmbeddedPayoff& f, const DiscreteOperator& op,
                             const TimeGrid& tgrid, const SpaceGrid& xgrid, const PSORConfig& cfg,
                             double discount_rate) {
    cfg.validate();
    if (!f.xgrid.same_as(xgrid)) throw std::invalid_argument("psor_solve: grid mismatch");
    const std::size_t nt = tgrid.n_nodes(), nx = xgrid.n_points;

    PsorResult out;
    out.surface = ValueSurface(tgrid, xgrid, discount_rate);
    ValueSurface& surf = out.surface;

    std::vector<double> v = f.payoff;
    for (std::size_t k = 0; k < nx; ++k) surf.at(nt - 1, k) = v[k];

    Stencil s = op.stencil(surf, 0, 1); // constant-coefficient operators only
    if (!op.linear) throw std::invalid_argument("psor_solve: needs a linear operator");
    if (s.lo < 0.0 || s.up < 0.0 || s.di > 0.0)
        throw std::runtime_error("psor_solve: implicit matrix is not an M-matrix on this grid");

    const double h = tgrid.dt();
    auto step = [&](std::vector<double>& w, double hw, double theta_w, double tau_new) {
        std::vector<double> sub(nx, 0.0), diag(nx, 1.0), sup(nx, 0.0), rhs(nx, 0.0);
        double blo = std::max(f.payoff[0], std::exp(-discount_rate * tau_new) * f.payoff[0]);
        double bhi = std::max(f.payoff[nx - 1], std::exp(-discount_rate * tau_new) * f.payoff[nx - 1]);
        rhs[0] = blo;
        rhs[nx - 1] = bhi;
        const double ex = (1.0 - theta_w) * hw;
        for (std::size_t k = 1; k + 1 < nx; ++k) {
            rhs[k] = w[k] + ex * (s.lo * w[k - 1] + s.di * w[k] + s.up * w[k + 1]);
            sub[k] = -theta_w * hw * s.lo;
            diag[k] = 1.0 - theta_w * hw * s.di;
            sup[k] = -theta_w * hw * s.up;
        }
        std::vector<double> obstacle = f.payoff;
        obstacle[0] = blo; // boundary rows stay feasible
        obstacle[nx - 1] = bhi;
        for (std::size_t k = 0; k < nx; ++k) w[k] = std::max(w[k], obstacle[k]);
        PsorStats st = psor_sweeps(sub, diag, sup, rhs, obstacle, w, cfg.omega, cfg.tol, cfg.max_iters);
        if (!st.converged) throw std::runtime_error("psor_solve: no convergence within max_iters");
        out.total_iters += st.iters;
        out.max_step_iters = std::max(out.max_step_iters, st.iters);
    };

    for (std::size_t i = nt - 1; i-- > 0;) {
        const double tau_new = tgrid.T - tgrid.node(i);
        if (i == nt - 2) {
            step(v, 0.5 * h, 1.0, tau_new - 0.5 * h);
            step(v, 0.5 * h, 1.0, tau_new);
        } else {
            step(v, h, 0.5, tau_new);
        }
        for (std::size_t k = 0; k < nx; ++k) surf.at(i, k) = v[k];
    }
    return out;
}

// --- controller-stopper trinomial game --------------------------------------

struct GameParams {
    double r = 0.0;
    double b_lo = 0.0, b_hi = 0.0; // drift interval for the controller
    double T = 1.0;
};

namespace detail {

// Shared trinomial recursion on an arithmetic lattice with fixed spacing
// delta = sigma_ref * sqrt(3 dt / 2); candidate list empty means "plain
// stopping value at the single (sigma, b)".
inline double trinomial_value(const Payoff& reward, const GameParams& gp, double sigma_ref,
                              const std::vector<std::pair<double, double>>& candidates,
                              StopMode mode, std::size_t n_steps, double t, double x) {
    const double tau = gp.T - t;
    if (tau < 0.0) throw std::invalid_argument("game_tree: t past expiry");
    if (tau == 0.0) return reward(x);
    const double dt = tau / static_cast<double>(n_steps);
    const double delta = sigma_ref * std::sqrt(1.5 * dt);
    if (!(delta > 0.0)) throw std::invalid_argument("game_tree: zero lattice spacing");
    const double disc = std::exp(-gp.r * dt);
    const bool stop_min = mode == StopMode::MinimizeStop;

    for (const auto& [sig, b] : candidates) {
        double pu = 0.5 * sig * sig * dt / (delta * delta) + 0.5 * b * dt / delta;
        double pd = 0.5 * sig * sig * dt / (delta * delta) - 0.5 * b * dt / delta;
        if (pu < 0.0 || pd < 0.0 || pu + pd > 1.0)
            throw std::runtime_error("game_tree: invalid trinomial weights, refine steps");
    }

    const std::size_t n = n_steps;
    std::vector<double> v(2 * n + 1);
    for (std::size_t j = 0; j < v.size(); ++j)
        v[j] = reward(x + delta * (static_cast<double>(j) - static_cast<double>(n)));
    std::vector<double> w(2 * n + 1);
    for (std::size_t m = n; m-- > 0;) {
        for (std::size_t j = n - m; j <= n + m; ++j) {
            double best = 0.0;
            bool first = true;
            for (const auto& [sig, b] : candidates) {
                double pu = 0.5 * sig * sig * dt / (delta * delta) + 0.5 * b * dt / delta;
                double pd = 0.5 * sig * sig * dt / (delta * delta) - 0.5 * b * dt / delta;
                double e = pu * v[j + 1] + pd * v[j - 1] + (1.0 - pu - pd) * v[j];
                if (first || e > best) best = e;
                first = false;
            }
            double cont = disc * best;
            double ex = reward(x + delta * (static_cast<double>(j) - static_cast<double>(n)));
            w[j] = stop_min ? std::min(ex, cont) : std::max(ex, cont);
        }
        std::swap(v, w);
    }
    return v[n];
}

} // namespace detail

// Controller-stopper game on a trinomial lattice: the stopper takes the
// reward or continues, the controller maximizes the one-step expectation
// over sigma in {lo, mid, hi} crossed with the drift endpoints.
inline double game_tree(const Payoff& reward, const GameParams& gp, const TreeSpec& spec,
                        double t, double x) {
    spec.validate();
    if (spec.kind != TreeKind::Trinomial)
        throw std::invalid_argument("game_tree: trinomial kind expected");
    if (!spec.has_control) throw std::invalid_argument("game_tree: control interval required");
    std::vector<double> sigmas{spec.sigma_lo, 0.5 * (spec.sigma_lo + spec.sigma_hi), spec.sigma_hi};
    std::vector<double> drifts = gp.b_lo == gp.b_hi ? std::vector<double>{gp.b_lo}
                                                    : std::vector<double>{gp.b_lo, gp.b_hi};
    std::vector<std::pair<double, double>> cands;
    for (double s : sigmas)
        for (double b : drifts) cands.emplace_back(s, b);
    return detail::trinomial_value(reward, gp, spec.sigma_hi, cands, spec.mode, spec.n_steps, t, x);
}

// Plain trinomial stopping value at a single (sigma, b); shares the lattice
// and recursion with game_tree, so a singleton control interval reproduces
// it bit for bit.
inline double trinomial_stopping(const Payoff& reward, const GameParams& gp, double sigma,
                                 double b, StopMode mode, std::size_t n_steps, double t, double x) {
    return detail::trinomial_value(reward, gp, sigma, {{sigma, b}}, mode, n_steps, t, x);
}

// --- Monte Carlo stopped at the theta graph ---------------------------------

struct McEstimate {
    double mean = 0.0;
    double stderror = 0.0;
    std::size_t n_paths = 0;
};

inline unsigned worker_count() {
    if (const char* env = std::getenv("EMBEDLAB_THREADS")) {
        long v = std::strtol(env, nullptr, 10);
        if (v >= 1) return static_cast<unsigned>(v);
    }
    return 1;
}

// GBM paths with exact lognormal stepping, stopped at the first grid time s
// with s >= theta(X_s); averages the discounted embedded payoff there.
// Work is split into a fixed number of seed chunks reduced in chunk order,
// so the estimate is independent of the worker count.
inline McEstimate mc_stop_at_theta(const Payoff& g, const BSParams& p, const EmbeddedPayoff& f,
                                   const TimeGrid& tgrid, double t, double x, std::size_t n_paths,
                                   std::uint64_t seed) {
    auto theta_of = theta_interpolant(f);
    if (t > theta_of(x)) throw std::invalid_argument("mc_stop_at_theta: start violates t <= theta(x)");
    const double dt = tgrid.dt();
    std::size_t i0 = static_cast<std::size_t>(std::llround(t / dt));
    if (std::abs(tgrid.node(i0) - t) > 1e-12 * (1.0 + tgrid.T))
        throw std::invalid_argument("mc_stop_at_theta: start time must be a grid node");

    constexpr std::size_t n_chunks = 64;
    const double drift = (p.r - 0.5 * p.sigma * p.sigma) * dt;
    const double vol = p.sigma * std::sqrt(dt);
    const std::size_t nt = tgrid.n_nodes();

    std::vector<double> chunk_sum(n_chunks, 0.0), chunk_sq(n_chunks, 0.0);
    std::vector<std::size_t> chunk_n(n_chunks, 0);

    auto run_chunk = [&](std::size_t c) {
        std::size_t base = n_paths / n_chunks, rem = n_paths % n_chunks;
        std::size_t m = base + (c < rem ? 1 : 0);
        std::mt19937_64 rng(seed ^ (0x9E3779B97F4A7C15ULL * (c + 1)));
        std::normal_distribution<double> norm(0.0, 1.0);
        double sum = 0.0, sq = 0.0;
        for (std::size_t pth = 0; pth < m; ++pth) {
            double X = x;
            double payout = 0.0;
            for (std::size_t i = i0; i < nt; ++i) {
                double s = tgrid.node(i);
                if (s >= theta_of(X) || i == nt - 1) {
                    payout = std::exp(-p.r * (s - t)) * g(X);
                    break;
                }
                X *= std::exp(drift + vol * norm(rng));
            }
            sum += payout;
            sq += payout * payout;
        }
        chunk_sum[c] = sum;
        chunk_sq[c] = sq;
        chunk_n[c] = m;
    };

    unsigned workers = std::min<unsigned>(worker_count(), n_chunks);
    if (workers <= 1) {
        for (std::size_t c = 0; c < n_chunks; ++c) run_chunk(c);
    } else {
        std::vector<std::thread> pool;
        for (unsigned wkr = 0; wkr < workers; ++wkr)
            pool.emplace_back([&, wkr] {
                for (std::size_t c = wkr; c < n_chunks; c += workers) run_chunk(c);
            });
        for (std::thread& th : pool) th.join();
    }

    double sum = 0.0, sq = 0.0;
    std::size_t n = 0;
    for (std::size_t c = 0; c < n_chunks; ++c) {
        sum += chunk_sum[c];
        sq += chunk_sq[c];
        n += chunk_n[c];
    }
    McEstimate est;
    est.n_paths = n;
    est.mean = sum / static_cast<double>(n);
    double var = std::max(0.0, sq / static_cast<double>(n) - est.mean * est.mean);
    est.stderror = std::sqrt(var / static_cast<double>(n));
    return est;
}

// Seeded GBM sample paths aligned to the time grid, for the hitting check.
inline std::vector<std::vector<double>> simulate_gbm_paths(const BSParams& p, const TimeGrid& tgrid,
                                                           std::size_t start_index, double x,
                                                           std::size_t n_paths, std::uint64_t seed) {
    const double dt = tgrid.dt();
    const double drift = (p.r - 0.5 * p.sigma * p.sigma) * dt;
    const double vol = p.sigma * std::sqrt(dt);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> norm(0.0, 1.0);
    std::vector<std::vector<double>> paths(n_paths);
    const std::size_t len = tgrid.n_nodes() - start_index;
    for (std::vector<double>& path : paths) {
        path.resize(len);
        path[0] = x;
        for (std::size_t j = 1; j < len; ++j) path[j] = path[j - 1] * std::exp(drift + vol * norm(rng));
    }
    return paths;
}

} // namespace embedlab

#endif
