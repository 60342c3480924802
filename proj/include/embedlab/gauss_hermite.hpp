#ifndef EMBEDLAB_GAUSS_HERMITE_HPP
#define EMBEDLAB_GAUSS_HERMITE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace embedlab {

struct QuadratureRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

// Gauss-Hermite rule for integrals against e^{-x^2}. Nodes are eigenvalues
// of the Jacobi matrix of the Hermite recurrence (diagonal 0, off-diagonal
// sqrt(j/2)), found by implicit-shift QL; the weights come from the first
// eigenvector components. Stable for any order, unlike Newton iteration on
// the polynomial recurrence whose root seeds degrade past a few hundred.
inline QuadratureRule gauss_hermite(std::size_t n) {
    if (n < 1) throw std::invalid_argument("gauss_hermite: need n >= 1");
    std::vector<double> d(n, 0.0);       // eigenvalues in progress
    std::vector<double> e(n, 0.0);       // subdiagonal, e[0..n-2]
    std::vector<double> zrow(n, 0.0);    // first row of the eigenvector matrix
    zrow[0] = 1.0;
    for (std::size_t j = 0; j + 1 < n; ++j) e[j] = std::sqrt(0.5 * (j + 1.0));

    const double eps = std::numeric_limits<double>::epsilon();
    for (std::size_t l = 0; l < n; ++l) {
        std::size_t iter = 0;
        std::size_t m;
        do {
            for (m = l; m + 1 < n; ++m) {
                double dd = std::abs(d[m]) + std::abs(d[m + 1]);
                if (std::abs(e[m]) <= eps * dd) break;
            }
            if (m != l) {
                if (++iter > 64) throw std::runtime_error("gauss_hermite: QL failed to converge");
                double g = (d[l + 1] - d[l]) / (2.0 * e[l]);
                double r = std::hypot(g, 1.0);
                g = d[m] - d[l] + e[l] / (g + std::copysign(r, g));
                double s = 1.0, c = 1.0, p = 0.0;
                std::size_t i = m;
                while (i-- > l) {
                    double f = s * e[i], b = c * e[i];
                    r = std::hypot(f, g);
                    e[i + 1] = r;
                    if (r == 0.0) {
                        d[i + 1] -= p;
                        e[m] = 0.0;
                        break;
                    }
                    s = f / r;
                    c = g / r;
                    g = d[i + 1] - p;
                    r = (d[i] - g) * s + 2.0 * c * b;
                    p = s * r;
                    d[i + 1] = g + p;
                    g = c * r - b;
                    f = zrow[i + 1];
                    zrow[i + 1] = s * zrow[i] + c * f;
                    zrow[i] = c * zrow[i] - s * f;
                }
                if (r == 0.0 && i + 1 > l) continue;
                d[l] -= p;
                e[l] = g;
                e[m] = 0.0;
            }
        } while (m != l);
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return d[a] < d[b]; });

    const double spi = 1.7724538509055160273; // sqrt(pi), total weight mass
    QuadratureRule rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        rule.nodes[i] = d[order[i]];
        rule.weights[i] = spi * zrow[order[i]] * zrow[order[i]];
    }
    return rule;
}

} // namespace embedlab

#endif
