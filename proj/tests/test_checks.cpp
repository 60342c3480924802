#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "embedlab/bs.hpp"
#include "embedlab/checks.hpp"
#include "embedlab/embedding.hpp"
#include "embedlab/operators.hpp"
#include "embedlab/oracles.hpp"

using namespace embedlab;

namespace {

struct BsRun {
    BSParams p{0.05, 0.2, 1.0};
    TimeGrid tg{1.0, 200};
    SpaceGrid xg;
    ValueSurface v;
    EmbeddedPayoff f;
    RegionMask regions;
    ValueSurface u;

    BsRun() {
        xg = default_bs_grid(100.0, p, 400);
        v = euro_pde_solve(make_put(100.0), p, tg, xg);
        f = extract_embedding(v, Direction::Min);
        regions = build_regions(f, tg);
        u = paste_value(v, f, regions);
    }
};

const BsRun& bs_run() {
    static BsRun r;
    return r;
}

} // namespace

TEST_CASE("order check accepts the paste and localizes injected violations") {
    const BsRun& r = bs_run();
    double tol = 10.0 * (r.tg.dt() + r.xg.dx() * r.xg.dx()) * r.v.sup_norm();
    OrderReport rep = check_order(r.u, r.v, nullptr, tol);
    REQUIRE(rep.violations_uv == 0);

    ValueSurface broken = r.u;
    broken.at(17, 23) = r.v.at(17, 23) + 2.0 * tol + 1.0;
    OrderReport bad = check_order(broken, r.v, nullptr, tol);
    REQUIRE(bad.violations_uv == 1);
    REQUIRE(bad.arg_uv.i == 17);
    REQUIRE(bad.arg_uv.k == 23);
    REQUIRE(bad.max_gap_uv > tol);
}

TEST_CASE("three-surface order check covers the game bound") {
    const BsRun& r = bs_run();
    ValueSurface w = r.v;
    for (double& e : w.values) e += 0.5;
    OrderReport rep = check_order(r.u, r.v, &w, 1e-9);
    REQUIRE(rep.has_w);
    REQUIRE(rep.violations_vw == 0);
    REQUIRE(rep.max_gap_vw <= 0.0);
}

TEST_CASE("discrete operator is linear and shifts properly with constants") {
    const BsRun& r = bs_run();
    DiscreteOperator op = make_bs_log_operator(r.p, r.xg);
    REQUIRE(op.linear);

    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    ValueSurface a(r.tg, r.xg), b(r.tg, r.xg), sum(r.tg, r.xg);
    for (std::size_t idx = 0; idx < a.values.size(); ++idx) {
        a.values[idx] = unif(rng);
        b.values[idx] = unif(rng);
        sum.values[idx] = a.values[idx] + b.values[idx];
    }
    ValueSurface shifted = a;
    for (double& e : shifted.values) e += 3.0;

    for (std::size_t i = 10; i < 190; i += 37)
        for (std::size_t k = 10; k < 390; k += 41) {
            REQUIRE(op.residual(sum, i, k) ==
                    Catch::Approx(op.residual(a, i, k) + op.residual(b, i, k)).margin(1e-10));
            // adding a constant c shifts the residual by +r*c (zeroth order term)
            REQUIRE(op.residual(shifted, i, k) ==
                    Catch::Approx(op.residual(a, i, k) + r.p.r * 3.0).margin(1e-10));
        }
}

TEST_CASE("operator annihilates the pde solution away from the damped start") {
    const BsRun& r = bs_run();
    DiscreteOperator op = make_bs_log_operator(r.p, r.xg);
    double worst = 0.0;
    for (std::size_t i = 0; i + 2 < r.tg.n_nodes(); ++i)
        for (std::size_t k = 1; k + 1 < r.xg.n_points; ++k)
            worst = std::max(worst, std::abs(op.residual(r.v, i, k)));
    REQUIRE(worst <= 1e-9);
}

TEST_CASE("free boundary residuals vanish on the continuation region") {
    const BsRun& r = bs_run();
    DiscreteOperator op = make_bs_log_operator(r.p, r.xg);
    FbpReport rep = fbp_residual(r.u, op, r.regions, Direction::Min);
    REQUIRE(rep.eq_cells > 0);
    REQUIRE(rep.ineq_cells > rep.eq_cells);
    REQUIRE(rep.max_eq_residual_on_C <= 1e-9);
    REQUIRE(rep.min_oriented_inequality >= -1e-9);
}

TEST_CASE("complementarity residual stays small for the pasted put") {
    const BsRun& r = bs_run();
    DiscreteOperator op = make_bs_log_operator(r.p, r.xg);
    VariationalReport rep = variational_residual(r.u, r.f, op);
    REQUIRE(rep.max_abs <= 1e-9);
}

TEST_CASE("fit gaps are small and boundary columns are actually visited") {
    const BsRun& r = bs_run();
    FitReport rep = fit_check(r.u, r.f, r.regions);
    REQUIRE(rep.applicable);
    REQUIRE(rep.boundary_nodes_checked > 10);
    REQUIRE(rep.max_continuous_fit_gap <= 1e-4);
    REQUIRE(rep.max_smooth_fit_gap <= 1.0);
}

TEST_CASE("smooth fit gap decays under joint refinement") {
    BSParams p(0.05, 0.2, 1.0);
    double prev = 1e30;
    for (std::size_t nt : {100u, 200u, 400u}) {
        TimeGrid tg(1.0, nt);
        SpaceGrid xg = default_bs_grid(100.0, p, 2 * nt);
        ValueSurface v = euro_pde_solve(make_put(100.0), p, tg, xg);
        EmbeddedPayoff f = extract_embedding(v, Direction::Min);
        RegionMask regions = build_regions(f, tg);
        ValueSurface u = paste_value(v, f, regions);
        FitReport rep = fit_check(u, f, regions);
        REQUIRE(rep.max_smooth_fit_gap < prev);
        prev = rep.max_smooth_fit_gap;
    }
}

TEST_CASE("strict nodes keep off the extremizer graph") {
    const BsRun& r = bs_run();
    ExclusionReport rep = check_region_exclusion(r.u, r.f, 1e-6);
    REQUIRE(rep.strict_nodes > 0);
    REQUIRE(rep.violations == 0);
}

TEST_CASE("epsilon sandwich measures the one-sided gap") {
    const BsRun& r = bs_run();
    REQUIRE(epsilon_sandwich(r.v, r.v) == 0.0);
    ValueSurface lower = r.v;
    lower.at(5, 7) -= 0.25;
    REQUIRE(epsilon_sandwich(lower, r.v) == Catch::Approx(0.25));
    // the paste only dips below v on the stopping region, so its width is
    // exactly the largest v - f gap there
    double direct = 0.0;
    for (std::size_t i = 0; i < r.v.n_time(); ++i)
        for (std::size_t k = 0; k < r.v.n_space(); ++k)
            if (!r.regions.at(i, k)) direct = std::max(direct, r.v.at(i, k) - r.f.payoff[k]);
    REQUIRE(epsilon_sandwich(r.u, r.v) == Catch::Approx(direct).margin(1e-15));
}

TEST_CASE("one-stencil buffer excludes mixed cells") {
    const BsRun& r = bs_run();
    std::size_t uniform = 0, mixed = 0;
    bool in_c = false;
    for (std::size_t i = 0; i + 1 < r.regions.nt; ++i)
        for (std::size_t k = 1; k + 1 < r.regions.nx; ++k)
            (cell_uniform(r.regions, i, k, in_c) ? uniform : mixed)++;
    REQUIRE(mixed > 0);
    REQUIRE(uniform > 50 * mixed); // the boundary is one-dimensional
}

TEST_CASE("every simulated path crosses the extremizer graph by the horizon") {
    const BsRun& r = bs_run();
    PathSet ps;
    ps.start_index = 0;
    ps.states = simulate_gbm_paths(r.p, r.tg, 0, 100.0, 500, 1234);
    HittingReport rep = hitting_path_check(r.f, r.tg, ps);
    REQUIRE(rep.n_paths == 500);
    REQUIRE(rep.rejected == 0);
    REQUIRE(rep.crossed == 500);
    REQUIRE(rep.max_crossing_time <= r.tg.T);
    REQUIRE(rep.mean_crossing_time > 0.0);
}

TEST_CASE("check report csv uses the fixed five-column layout") {
    std::ostringstream ss;
    write_check_csv(ss, {{"order", "violations", 0.0, 3, 4}});
    REQUIRE(ss.str() == "check,metric,value,node_t,node_x\norder,violations,0,3,4\n");
}
