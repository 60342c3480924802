#ifndef EMBEDLAB_CHAIN_HPP
#define EMBEDLAB_CHAIN_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "embedlab/embedding.hpp"
#include "embedlab/grid.hpp"
#include "embedlab/surface.hpp"

namespace embedlab {

// Small dense square matrix, row-major.
struct Matrix {
    std::size_t d = 0;
    std::vector<double> a;

    Matrix() = default;
    explicit Matrix(std::size_t dim) : d(dim), a(dim * dim, 0.0) {}

    double& at(std::size_t i, std::size_t j) { return a[i * d + j]; }
    double at(std::size_t i, std::size_t j) const { return a[i * d + j]; }

    static Matrix identity(std::size_t dim) {
        Matrix m(dim);
        for (std::size_t i = 0; i < dim; ++i) m.at(i, i) = 1.0;
        return m;
    }

    Matrix operator*(const Matrix& o) const {
        Matrix r(d);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t l = 0; l < d; ++l) {
                double v = at(i, l);
                if (v == 0.0) continue;
                for (std::size_t j = 0; j < d; ++j) r.at(i, j) += v * o.at(l, j);
            }
        return r;
    }

    std::vector<double> operator*(const std::vector<double>& x) const {
        std::vector<double> y(d, 0.0);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) y[i] += at(i, j) * x[j];
        return y;
    }

    double inf_norm() const {
        double m = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < d; ++j) s += std::abs(at(i, j));
            m = std::max(m, s);
        }
        return m;
    }
};

// Matrix exponential by scaling and squaring with a Taylor core; adequate to
// near machine precision for the small generator matrices used here.
inline Matrix expm(const Matrix& A, double t = 1.0) {
    const std::size_t d = A.d;
    Matrix B(d);
    for (std::size_t i = 0; i < d * d; ++i) B.a[i] = A.a[i] * t;
    int s = 0;
    double nrm = B.inf_norm();
    while (nrm > 0.5) {
        nrm *= 0.5;
        ++s;
    }
    double scale = std::ldexp(1.0, -s);
    for (double& v : B.a) v *= scale;

    Matrix result = Matrix::identity(d);
    Matrix term = Matrix::identity(d);
    for (int k = 1; k <= 40; ++k) {
        term = term * B;
        for (double& v : term.a) v /= static_cast<double>(k);
        double tn = term.inf_norm();
        for (std::size_t i = 0; i < d * d; ++i) result.a[i] += term.a[i];
        if (tn < 1e-18) break;
    }
    for (int i = 0; i < s; ++i) result = result * result;
    return result;
}

// Conservative generator (rate matrix): nonnegative off-diagonal, zero row
// sums within 1e-12.
struct GeneratorMatrix {
    Matrix Q;

    GeneratorMatrix() = default;
    explicit GeneratorMatrix(Matrix m) : Q(std::move(m)) { validate(); }

    void validate() const {
        for (std::size_t i = 0; i < Q.d; ++i) {
            double row = 0.0;
            for (std::size_t j = 0; j < Q.d; ++j) {
                if (i != j && Q.at(i, j) < -1e-12)
                    throw std::invalid_argument("GeneratorMatrix: negative off-diagonal rate");
                row += Q.at(i, j);
            }
            if (std::abs(row) > 1e-12)
                throw std::invalid_argument("GeneratorMatrix: row sum " + std::to_string(row) + " != 0");
        }
    }
    std::size_t dim() const { return Q.d; }
    double sup_norm() const { return Q.inf_norm(); }
};

struct GeneratorSet {
    std::vector<GeneratorMatrix> members;

    void validate() const {
        if (members.empty()) throw std::invalid_argument("GeneratorSet: empty family");
        for (const GeneratorMatrix& m : members) {
            m.validate();
            if (m.dim() != members.front().dim())
                throw std::invalid_argument("GeneratorSet: mixed dimensions");
        }
    }
    std::size_t dim() const { return members.front().dim(); }
};

// Value process of the chain: one row per time node, one column per state.
struct ChainValue {
    TimeGrid tgrid;
    std::size_t d = 0;
    std::vector<double> values; // n_nodes * d

    ChainValue() = default;
    ChainValue(const TimeGrid& tg, std::size_t dim) : tgrid(tg), d(dim), values(tg.n_nodes() * dim, 0.0) {}

    double& at(std::size_t i, std::size_t x) { return values[i * d + x]; }
    double at(std::size_t i, std::size_t x) const { return values[i * d + x]; }

    ValueSurface to_surface() const {
        ValueSurface s(tgrid, SpaceGrid::finite_state(d), 0.0);
        s.values = values;
        return s;
    }
};

using RunningCost = std::function<double(double, std::size_t)>; // (time, state)

// Backward linear valuation with terminal g and running cost c: exact
// matrix-exponential stepping when c is absent, classical RK4 otherwise.
inline ChainValue linear_chain_value(const GeneratorMatrix& Qm, const std::vector<double>& g,
                                     const RunningCost& c, const TimeGrid& tgrid) {
    Qm.validate();
    const std::size_t d = Qm.dim();
    if (g.size() != d) throw std::invalid_argument("linear_chain_value: payoff length != d");
    const std::size_t nt = tgrid.n_nodes();
    ChainValue out(tgrid, d);
    for (std::size_t x = 0; x < d; ++x) out.at(nt - 1, x) = g[x];

    const double h = tgrid.dt();
    std::vector<double> v = g;
    if (!c) {
        Matrix P = expm(Qm.Q, h);
        for (std::size_t i = nt - 1; i-- > 0;) {
            v = P * v;
            for (std::size_t x = 0; x < d; ++x) out.at(i, x) = v[x];
        }
        return out;
    }

    // v'(t) = -Q v(t) + c(t,.), integrated backward with RK4
    auto rhs = [&](double t, const std::vector<double>& u) {
        std::vector<double> r = Qm.Q * u;
        for (std::size_t x = 0; x < d; ++x) r[x] = -r[x] + c(t, x);
        return r;
    };
    for (std::size_t i = nt - 1; i-- > 0;) {
        double t1 = tgrid.node(i + 1);
        double hs = -h; // stepping back in calendar time
        std::vector<double> k1 = rhs(t1, v);
        std::vector<double> tmp(d);
        for (std::size_t x = 0; x < d; ++x) tmp[x] = v[x] + 0.5 * hs * k1[x];
        std::vector<double> k2 = rhs(t1 + 0.5 * hs, tmp);
        for (std::size_t x = 0; x < d; ++x) tmp[x] = v[x] + 0.5 * hs * k2[x];
        std::vector<double> k3 = rhs(t1 + 0.5 * hs, tmp);
        for (std::size_t x = 0; x < d; ++x) tmp[x] = v[x] + hs * k3[x];
        std::vector<double> k4 = rhs(t1 + hs, tmp);
        for (std::size_t x = 0; x < d; ++x)
            v[x] += hs / 6.0 * (k1[x] + 2.0 * k2[x] + 2.0 * k3[x] + k4[x]);
        for (std::size_t x = 0; x < d; ++x) out.at(i, x) = v[x];
    }
    return out;
}

namespace detail {

inline std::vector<double> sup_apply(const GeneratorSet& S, const std::vector<double>& u) {
    std::vector<double> best = S.members.front().Q * u;
    for (std::size_t m = 1; m < S.members.size(); ++m) {
        std::vector<double> cand = S.members[m].Q * u;
        for (std::size_t x = 0; x < best.size(); ++x) best[x] = std::max(best[x], cand[x]);
    }
    return best;
}

} // namespace detail

// RK4 integration of v' + sup_Q Q v = 0 backward from v(T) = g; the
// right-hand side is Lipschitz (finite max of linear maps), so the classical
// step applies.
inline ChainValue hjb_ode_solve(const GeneratorSet& S, const std::vector<double>& g,
                                const TimeGrid& tgrid) {
    S.validate();
    const std::size_t d = S.dim();
    if (g.size() != d) throw std::invalid_argument("hjb_ode_solve: payoff length != d");
    const std::size_t nt = tgrid.n_nodes();
    const double h = tgrid.dt();
    ChainValue out(tgrid, d);
    std::vector<double> v = g;
    for (std::size_t x = 0; x < d; ++x) out.at(nt - 1, x) = g[x];

    std::vector<double> tmp(d);
    for (std::size_t i = nt - 1; i-- > 0;) {
        // in tau = T - t the system reads u' = sup_Q Q u
        std::vector<double> k1 = detail::sup_apply(S, v);
        for (std::size_t x = 0; x < d; ++x) tmp[x] = v[x] + 0.5 * h * k1[x];
        std::vector<double> k2 = detail::sup_apply(S, tmp);
        for (std::size_t x = 0; x < d; ++x) tmp[x] = v[x] + 0.5 * h * k2[x];
        std::vector<double> k3 = detail::sup_apply(S, tmp);
        for (std::size_t x = 0; x < d; ++x) tmp[x] = v[x] + h * k3[x];
        std::vector<double> k4 = detail::sup_apply(S, tmp);
        for (std::size_t x = 0; x < d; ++x)
            v[x] += h / 6.0 * (k1[x] + 2.0 * k2[x] + 2.0 * k3[x] + k4[x]);
        for (std::size_t x = 0; x < d; ++x) out.at(i, x) = v[x];
    }
    return out;
}

// Dyadic sup-semigroup composition: 2^depth alternations of exact
// exponential steps and elementwise maxima; nondecreasing in depth.
inline std::vector<double> nisio_iterate(const GeneratorSet& S, const std::vector<double>& g,
                                         double T, unsigned depth) {
    S.validate();
    if (g.size() != S.dim()) throw std::invalid_argument("nisio_iterate: payoff length != d");
    const std::size_t steps = static_cast<std::size_t>(1) << depth;
    const double h = T / static_cast<double>(steps);
    std::vector<Matrix> props;
    props.reserve(S.members.size());
    for (const GeneratorMatrix& m : S.members) props.push_back(expm(m.Q, h));

    std::vector<double> w = g;
    for (std::size_t s = 0; s < steps; ++s) {
        std::vector<double> best = props.front() * w;
        for (std::size_t m = 1; m < props.size(); ++m) {
            std::vector<double> cand = props[m] * w;
            for (std::size_t x = 0; x < best.size(); ++x) best[x] = std::max(best[x], cand[x]);
        }
        w = std::move(best);
    }
    return w;
}

inline EmbeddedPayoff chain_embed(const ChainValue& v, Direction direction, double plateau_tol = -1.0) {
    return extract_embedding(v.to_surface(), direction, plateau_tol);
}

enum class StopModeChain { Min, Max };

// Backward-induction stopping value: exponential one-step propagation with
// the controller's elementwise sup over the family, clamped to the reward by
// the stopper each step. First order in dt against the continuous value.
inline ChainValue chain_stop_value(const GeneratorSet& S, const std::vector<double>& h,
                                   const TimeGrid& tgrid, StopModeChain stopper) {
    S.validate();
    const std::size_t d = S.dim();
    if (h.size() != d) throw std::invalid_argument("chain_stop_value: reward length != d");
    const std::size_t nt = tgrid.n_nodes();
    const double dt = tgrid.dt();
    std::vector<Matrix> props;
    for (const GeneratorMatrix& m : S.members) props.push_back(expm(m.Q, dt));

    ChainValue out(tgrid, d);
    std::vector<double> w = h;
    for (std::size_t x = 0; x < d; ++x) out.at(nt - 1, x) = h[x];
    for (std::size_t i = nt - 1; i-- > 0;) {
        std::vector<double> best = props.front() * w;
        for (std::size_t m = 1; m < props.size(); ++m) {
            std::vector<double> cand = props[m] * w;
            for (std::size_t x = 0; x < d; ++x) best[x] = std::max(best[x], cand[x]);
        }
        for (std::size_t x = 0; x < d; ++x)
            w[x] = stopper == StopModeChain::Min ? std::min(h[x], best[x]) : std::max(h[x], best[x]);
        for (std::size_t x = 0; x < d; ++x) out.at(i, x) = w[x];
    }
    return out;
}

// --- inverse problem --------------------------------------------------------

struct InverseOptions {
    std::size_t fine_steps = 2000;
    double damping = 0.5;
    std::size_t max_iters = 200;
    double tol = 1e-10;
};

struct InverseResult {
    std::vector<double> g;
    double residual = 0.0; // sup-norm forward residual at the returned g
    bool converged = false;
    std::size_t iters = 0;
    bool horizon_ok = true; // T < 1/||Q||
};

namespace detail {

// d x d Gaussian elimination with partial pivoting; tiny ridge on a
// vanishing pivot keeps degenerate active sets from derailing the iteration.
inline std::vector<double> solve_dense(Matrix A, std::vector<double> b) {
    const std::size_t d = A.d;
    for (std::size_t col = 0; col < d; ++col) {
        std::size_t piv = col;
        for (std::size_t i = col + 1; i < d; ++i)
            if (std::abs(A.at(i, col)) > std::abs(A.at(piv, col))) piv = i;
        if (piv != col) {
            for (std::size_t j = 0; j < d; ++j) std::swap(A.at(col, j), A.at(piv, j));
            std::swap(b[col], b[piv]);
        }
        if (std::abs(A.at(col, col)) < 1e-14) A.at(col, col) += (A.at(col, col) < 0 ? -1e-12 : 1e-12);
        for (std::size_t i = col + 1; i < d; ++i) {
            double fac = A.at(i, col) / A.at(col, col);
            if (fac == 0.0) continue;
            for (std::size_t j = col; j < d; ++j) A.at(i, j) -= fac * A.at(col, j);
            b[i] -= fac * b[col];
        }
    }
    std::vector<double> x(d);
    for (std::size_t i = d; i-- > 0;) {
        double s = b[i];
        for (std::size_t j = i + 1; j < d; ++j) s -= A.at(i, j) * x[j];
        x[i] = s / A.at(i, i);
    }
    return x;
}

} // namespace detail

// Damped Gauss-Newton for g with inf_t(e^{tQ} g) = f_target (elementwise,
// or sup_t for the max direction). The time extremum is evaluated on a fine
// grid; each iteration freezes the active extremizer per component and uses
// the corresponding propagator row as the Jacobian row.
inline InverseResult embed_inverse(const std::vector<double>& f_target, const GeneratorMatrix& Qm,
                                   double T, Direction direction, const InverseOptions& opt = {}) {
    Qm.validate();
    const std::size_t d = Qm.dim();
    if (f_target.size() != d) throw std::invalid_argument("embed_inverse: target length != d");
    InverseResult res;
    res.horizon_ok = Qm.sup_norm() * T < 1.0;

    const std::size_t n = opt.fine_steps;
    const double h = T / static_cast<double>(n);
    std::vector<Matrix> props(n + 1);
    props[0] = Matrix::identity(d);
    Matrix step = expm(Qm.Q, h);
    for (std::size_t j = 1; j <= n; ++j) props[j] = step * props[j - 1];

    auto forward = [&](const std::vector<double>& g, std::vector<std::size_t>& active) {
        std::vector<double> F(d);
        active.assign(d, 0);
        for (std::size_t j = 0; j <= n; ++j) {
            std::vector<double> w = props[j] * g;
            for (std::size_t x = 0; x < d; ++x) {
                bool better = direction == Direction::Min ? w[x] < F[x] : w[x] > F[x];
                if (j == 0 || better) {
                    F[x] = w[x];
                    active[x] = j;
                }
            }
        }
        return F;
    };

    res.g = f_target; // initial guess: the identity map is exact for Q = 0
    std::vector<std::size_t> active;
    for (std::size_t it = 1; it <= opt.max_iters; ++it) {
        res.iters = it;
        std::vector<double> F = forward(res.g, active);
        double rn = 0.0;
        std::vector<double> rhs(d);
        for (std::size_t x = 0; x < d; ++x) {
            rhs[x] = f_target[x] - F[x];
            rn = std::max(rn, std::abs(rhs[x]));
        }
        res.residual = rn;
        if (rn <= opt.tol) {
            res.converged = true;
            return res;
        }
        Matrix J(d);
        for (std::size_t x = 0; x < d; ++x)
            for (std::size_t j = 0; j < d; ++j) J.at(x, j) = props[active[x]].at(x, j);
        std::vector<double> delta = detail::solve_dense(J, rhs);
        for (std::size_t x = 0; x < d; ++x) res.g[x] += opt.damping * delta[x];
    }
    std::vector<std::size_t> act;
    std::vector<double> F = forward(res.g, act);
    double rn = 0.0;
    for (std::size_t x = 0; x < d; ++x) rn = std::max(rn, std::abs(f_target[x] - F[x]));
    res.residual = rn;
    res.converged = rn <= opt.tol;
    return res;
}

} // namespace embedlab

#endif
