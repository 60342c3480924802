#ifndef EMBEDLAB_PAYOFF_HPP
#define EMBEDLAB_PAYOFF_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "embedlab/csv.hpp"
#include "embedlab/embedding.hpp"
#include "embedlab/grid.hpp"

namespace embedlab {

// Terminal payoff g. Must be bounded on whatever grid it is evaluated on;
// boundedness is the caller's truncation assumption, not checked globally.
struct Payoff {
    std::function<double(double)> evaluator;
    std::string label;

    double operator()(double x) const { return evaluator(x); }
};

inline Payoff make_put(double K) {
    return {[K](double x) { return std::max(K - x, 0.0); }, "put:" + fmt17(K)};
}
inline Payoff make_call(double K) {
    return {[K](double x) { return std::max(x - K, 0.0); }, "call:" + fmt17(K)};
}
inline Payoff make_digital(double K) {
    return {[K](double x) { return x >= K ? 1.0 : 0.0; }, "digital:" + fmt17(K)};
}
inline Payoff make_constant(double c) {
    return {[c](double) { return c; }, "const:" + fmt17(c)};
}

// Piecewise-linear table on sorted abscissae with flat extrapolation.
inline Payoff make_table_payoff(std::vector<double> xs, std::vector<double> vals, std::string label) {
    if (xs.size() != vals.size() || xs.size() < 2)
        throw std::invalid_argument("table payoff: need >= 2 matching rows");
    for (std::size_t i = 1; i < xs.size(); ++i)
        if (!(xs[i] > xs[i - 1]))
            throw std::invalid_argument("table payoff: abscissae must be strictly increasing");
    auto xp = std::make_shared<std::vector<double>>(std::move(xs));
    auto vp = std::make_shared<std::vector<double>>(std::move(vals));
    return {[xp, vp](double x) {
                const std::vector<double>& X = *xp;
                const std::vector<double>& V = *vp;
                if (x <= X.front()) return V.front();
                if (x >= X.back()) return V.back();
                std::size_t j = static_cast<std::size_t>(std::upper_bound(X.begin(), X.end(), x) - X.begin());
                double w = (x - X[j - 1]) / (X[j] - X[j - 1]);
                return (1.0 - w) * V[j - 1] + w * V[j];
            },
            std::move(label)};
}

// Linear interpolant of an embedded payoff in the grid's own coordinate
// (log-price grids interpolate in y = log x), flat beyond the grid.
inline Payoff payoff_from_embedding(const EmbeddedPayoff& e) {
    if (!e.xgrid.continuum())
        throw std::invalid_argument("payoff_from_embedding: needs a continuum grid");
    std::vector<double> coords(e.n_space());
    for (std::size_t k = 0; k < coords.size(); ++k) coords[k] = e.xgrid.node(k);
    bool log_kind = e.xgrid.kind == GridKind::LogPrice;
    Payoff base = make_table_payoff(std::move(coords), e.payoff, "embedded");
    if (!log_kind) return base;
    auto inner = base.evaluator;
    return {[inner](double x) { return inner(std::log(x)); }, "embedded"};
}

// Same interpolation for the extremizer map theta(x).
inline std::function<double(double)> theta_interpolant(const EmbeddedPayoff& e) {
    std::vector<double> coords(e.n_space());
    for (std::size_t k = 0; k < coords.size(); ++k) coords[k] = e.xgrid.node(k);
    bool log_kind = e.xgrid.kind == GridKind::LogPrice;
    Payoff tbl = make_table_payoff(std::move(coords), e.theta, "theta");
    auto inner = tbl.evaluator;
    if (!log_kind) return inner;
    return [inner](double x) { return inner(std::log(x)); };
}

// Grammar: put:K | call:K | digital:K | const:c | custom:file.csv
// (custom files: rows `x,value`, optional header).
inline Payoff parse_payoff_spec(const std::string& spec) {
    auto colon = spec.find(':');
    if (colon == std::string::npos)
        throw std::invalid_argument("payoff spec needs the form name:arg, got '" + spec + "'");
    std::string name = spec.substr(0, colon), arg = spec.substr(colon + 1);
    if (name == "put") return make_put(parse_double(arg));
    if (name == "call") return make_call(parse_double(arg));
    if (name == "digital") return make_digital(parse_double(arg));
    if (name == "const") return make_constant(parse_double(arg));
    if (name == "custom") {
        auto rows = read_csv_rows(arg);
        std::vector<double> xs, vs;
        for (const auto& row : rows) {
            if (row.size() < 2) continue;
            try {
                double x = parse_double(row[0]);
                double v = parse_double(row[1]);
                xs.push_back(x);
                vs.push_back(v);
            } catch (const std::exception&) {
                if (xs.empty()) continue; // header row
                throw;
            }
        }
        return make_table_payoff(std::move(xs), std::move(vs), "custom:" + arg);
    }
    throw std::invalid_argument("unknown payoff kind '" + name + "' (put|call|digital|const|custom)");
}

} // namespace embedlab

#endif
