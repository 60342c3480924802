#ifndef EMBEDLAB_TRIDIAG_HPP
#define EMBEDLAB_TRIDIAG_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace embedlab {

// Thomas algorithm for A x = rhs with sub/diag/sup bands. sub[0] and
// sup[n-1] are ignored. No pivoting: callers supply diagonally dominant
// systems.
inline std::vector<double> thomas_solve(const std::vector<double>& sub,
                                        const std::vector<double>& diag,
                                        const std::vector<double>& sup,
                                        const std::vector<double>& rhs) {
    const std::size_t n = diag.size();
    if (sub.size() != n || sup.size() != n || rhs.size() != n)
        throw std::invalid_argument("thomas_solve: band size mismatch");
    std::vector<double> c(n), d(n), x(n);
    double piv = diag[0];
    if (piv == 0.0) throw std::runtime_error("thomas_solve: zero pivot");
    c[0] = sup[0] / piv;
    d[0] = rhs[0] / piv;
    for (std::size_t i = 1; i < n; ++i) {
        piv = diag[i] - sub[i] * c[i - 1];
        if (piv == 0.0) throw std::runtime_error("thomas_solve: zero pivot");
        c[i] = sup[i] / piv;
        d[i] = (rhs[i] - sub[i] * d[i - 1]) / piv;
    }
    x[n - 1] = d[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) x[i] = d[i] - c[i] * x[i + 1];
    return x;
}

struct PsorStats {
    std::size_t iters = 0;
    bool converged = false;
};

// Projected SOR for the obstacle system: find x >= obstacle with
// (A x - rhs) >= 0 and complementarity, A tridiagonal. x holds the initial
// guess on entry and the solution on exit.
inline PsorStats psor_sweeps(const std::vector<double>& sub, const std::vector<double>& diag,
                             const std::vector<double>& sup, const std::vector<double>& rhs,
                             const std::vector<double>& obstacle, std::vector<double>& x,
                             double omega, double tol, std::size_t max_iters) {
    const std::size_t n = diag.size();
    PsorStats stats;
    for (std::size_t it = 1; it <= max_iters; ++it) {
        double delta = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double s = rhs[i];
            if (i > 0) s -= sub[i] * x[i - 1];
            if (i + 1 < n) s -= sup[i] * x[i + 1];
            double gs = s / diag[i];
            double xn = std::max(obstacle[i], x[i] + omega * (gs - x[i]));
            delta = std::max(delta, std::abs(xn - x[i]));
            x[i] = xn;
        }
        stats.iters = it;
        if (delta <= tol) {
            stats.converged = true;
            return stats;
        }
    }
    return stats;
}

} // namespace embedlab

#endif
