#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "embedlab/chain.hpp"
#include "embedlab/checks.hpp"

using namespace embedlab;

namespace {

GeneratorMatrix flip_chain() {
    // symmetric two-state chain with unit rates; e^{tQ} is known in closed form
    Matrix q(2);
    q.at(0, 0) = -1.0;
    q.at(0, 1) = 1.0;
    q.at(1, 0) = 1.0;
    q.at(1, 1) = -1.0;
    return GeneratorMatrix(q);
}

GeneratorMatrix random_generator(std::size_t d, std::uint64_t seed, double rate_scale) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, rate_scale);
    Matrix q(d);
    for (std::size_t i = 0; i < d; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < d; ++j)
            if (i != j) {
                q.at(i, j) = unif(rng);
                row += q.at(i, j);
            }
        q.at(i, i) = -row;
    }
    return GeneratorMatrix(q);
}

} // namespace

TEST_CASE("matrix exponential of the two-state chain matches the closed form") {
    GeneratorMatrix Q = flip_chain();
    for (double t : {0.1, 0.5, 1.0, 3.0}) {
        Matrix P = expm(Q.Q, t);
        double same = 0.5 * (1.0 + std::exp(-2.0 * t));
        double other = 0.5 * (1.0 - std::exp(-2.0 * t));
        REQUIRE(P.at(0, 0) == Catch::Approx(same).margin(1e-13));
        REQUIRE(P.at(0, 1) == Catch::Approx(other).margin(1e-13));
        REQUIRE(P.at(1, 0) == Catch::Approx(other).margin(1e-13));
        REQUIRE(P.at(1, 1) == Catch::Approx(same).margin(1e-13));
    }
}

TEST_CASE("generator exponentials are stochastic matrices") {
    GeneratorMatrix Q = random_generator(5, 7, 1.3);
    Matrix P = expm(Q.Q, 0.8);
    for (std::size_t i = 0; i < 5; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < 5; ++j) {
            REQUIRE(P.at(i, j) >= -1e-12);
            row += P.at(i, j);
        }
        REQUIRE(row == Catch::Approx(1.0).margin(1e-10));
    }
}

TEST_CASE("exponential stepping satisfies the semigroup identity") {
    GeneratorMatrix Q = random_generator(4, 21, 2.0);
    Matrix lhs = expm(Q.Q, 0.7);
    Matrix rhs = expm(Q.Q, 0.3) * expm(Q.Q, 0.4);
    for (std::size_t i = 0; i < lhs.a.size(); ++i)
        REQUIRE(lhs.a[i] == Catch::Approx(rhs.a[i]).margin(1e-10));
}

TEST_CASE("linear chain value reproduces the closed-form flip chain") {
    GeneratorMatrix Q = flip_chain();
    TimeGrid tg(1.0, 128);
    ChainValue v = linear_chain_value(Q, {0.0, 1.0}, nullptr, tg);
    for (std::size_t i = 0; i < tg.n_nodes(); ++i) {
        double tau = 1.0 - tg.node(i);
        REQUIRE(v.at(i, 0) == Catch::Approx(0.5 * (1.0 - std::exp(-2.0 * tau))).margin(1e-12));
        REQUIRE(v.at(i, 1) == Catch::Approx(0.5 * (1.0 + std::exp(-2.0 * tau))).margin(1e-12));
    }
}

TEST_CASE("running costs accumulate like an integral") {
    GeneratorMatrix Q = flip_chain();
    TimeGrid tg(1.0, 256);
    RunningCost cost = [](double, std::size_t) { return 0.25; };
    ChainValue with = linear_chain_value(Q, {0.0, 1.0}, cost, tg);
    ChainValue without = linear_chain_value(Q, {0.0, 1.0}, nullptr, tg);
    // zero row sums make a constant cost integrate exactly to -kappa*(T-t)
    for (std::size_t i = 0; i < tg.n_nodes(); i += 32)
        for (std::size_t x = 0; x < 2; ++x)
            REQUIRE(with.at(i, x) - without.at(i, x) ==
                    Catch::Approx(-0.25 * (1.0 - tg.node(i))).margin(1e-9));
}

TEST_CASE("embedding the flip chain gives the closed-form extrema") {
    GeneratorMatrix Q = flip_chain();
    TimeGrid tg(1.0, 512);
    ChainValue v = linear_chain_value(Q, {0.0, 1.0}, nullptr, tg);
    // v(.,0) decreases to 0, v(.,1) increases to 1, so the time extrema sit
    // at opposite endpoints per state
    EmbeddedPayoff f = chain_embed(v, Direction::Min);
    REQUIRE(f.payoff[0] == Catch::Approx(0.0).margin(1e-12));
    REQUIRE(f.payoff[1] == Catch::Approx(0.5 * (1.0 + std::exp(-2.0))).margin(1e-12));
    REQUIRE(f.theta[0] == Catch::Approx(1.0));
    REQUIRE(f.theta[1] == 0.0);

    EmbeddedPayoff h = chain_embed(v, Direction::Max);
    REQUIRE(h.payoff[0] == Catch::Approx(0.5 * (1.0 - std::exp(-2.0))).margin(1e-12));
    REQUIRE(h.payoff[1] == Catch::Approx(1.0).margin(1e-12));
    REQUIRE(h.theta[0] == 0.0);
    REQUIRE(h.theta[1] == Catch::Approx(1.0));
}

TEST_CASE("hjb ode with a singleton family is the linear value") {
    GeneratorSet S{{random_generator(3, 5, 1.0)}};
    TimeGrid tg(1.0, 2000);
    std::vector<double> g = {0.0, 2.0, 1.0};
    ChainValue hjb = hjb_ode_solve(S, g, tg);
    ChainValue lin = linear_chain_value(S.members[0], g, nullptr, tg);
    for (std::size_t i = 0; i < hjb.values.size(); ++i)
        REQUIRE(hjb.values[i] == Catch::Approx(lin.values[i]).margin(1e-10));
}

TEST_CASE("hjb ode dominates every member of the family") {
    GeneratorSet S{{random_generator(4, 1, 1.5), random_generator(4, 2, 0.7), random_generator(4, 3, 1.1)}};
    TimeGrid tg(1.0, 1000);
    std::vector<double> g = {0.0, 1.0, 3.0, 0.5};
    ChainValue hjb = hjb_ode_solve(S, g, tg);
    for (const GeneratorMatrix& Q : S.members) {
        ChainValue lin = linear_chain_value(Q, g, nullptr, tg);
        for (std::size_t i = 0; i < hjb.values.size(); ++i)
            REQUIRE(hjb.values[i] >= lin.values[i] - 1e-8);
    }
}

TEST_CASE("dyadic iteration is nondecreasing in depth and converges to the ode") {
    GeneratorSet S{{random_generator(3, 11, 1.2), random_generator(3, 12, 0.9)}};
    std::vector<double> g = {0.0, 1.0, 2.0};
    std::vector<double> prev;
    for (unsigned depth = 0; depth <= 12; ++depth) {
        std::vector<double> cur = nisio_iterate(S, g, 1.0, depth);
        if (!prev.empty())
            for (std::size_t x = 0; x < cur.size(); ++x) REQUIRE(cur[x] >= prev[x] - 1e-12);
        prev = cur;
    }
    ChainValue ref = hjb_ode_solve(S, g, TimeGrid(1.0, 10000));
    for (std::size_t x = 0; x < 3; ++x) REQUIRE(prev[x] == Catch::Approx(ref.at(0, x)).margin(1e-4));
}

TEST_CASE("stopping value is sandwiched between the reward extremes") {
    GeneratorSet S{{flip_chain()}};
    TimeGrid tg(1.0, 512);
    std::vector<double> h = {0.2, 1.0};
    ChainValue w = chain_stop_value(S, h, tg, StopModeChain::Min);
    for (std::size_t i = 0; i < tg.n_nodes(); ++i)
        for (std::size_t x = 0; x < 2; ++x) {
            REQUIRE(w.at(i, x) <= h[x] + 1e-12);
            REQUIRE(w.at(i, x) >= 0.2 - 1e-12); // never below the smallest reward
        }
    REQUIRE(w.at(tg.n_nodes() - 1, 0) == 0.2);
    ChainValue wm = chain_stop_value(S, h, tg, StopModeChain::Max);
    for (std::size_t i = 0; i < wm.values.size(); ++i) REQUIRE(wm.values[i] >= w.values[i] - 1e-12);
}

TEST_CASE("inverse map is the identity for the frozen chain") {
    Matrix zero(3);
    GeneratorMatrix Q(zero);
    std::vector<double> target = {0.4, 0.1, 0.9};
    InverseResult res = embed_inverse(target, Q, 0.5, Direction::Min);
    REQUIRE(res.converged);
    REQUIRE(res.horizon_ok);
    REQUIRE(res.residual <= 1e-12);
    for (std::size_t x = 0; x < 3; ++x) REQUIRE(res.g[x] == Catch::Approx(target[x]).margin(1e-10));
}

TEST_CASE("inverse recovery round-trips random targets below the horizon bound") {
    GeneratorMatrix Q = flip_chain(); // norm 2, so T = 0.4 < 1/2
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> target = {unif(rng), unif(rng)};
        InverseResult res = embed_inverse(target, Q, 0.4, Direction::Min);
        REQUIRE(res.residual <= 1e-8);
    }
}

TEST_CASE("inverse flags a horizon beyond the contraction bound") {
    GeneratorMatrix Q = flip_chain();
    InverseResult res = embed_inverse({0.3, 0.7}, Q, 1.0, Direction::Min);
    REQUIRE_FALSE(res.horizon_ok);
}

TEST_CASE("generator validation rejects malformed rate matrices") {
    Matrix bad(2);
    bad.at(0, 0) = -1.0;
    bad.at(0, 1) = 0.5; // row sum != 0
    bad.at(1, 0) = 1.0;
    bad.at(1, 1) = -1.0;
    REQUIRE_THROWS_AS(GeneratorMatrix(bad), std::invalid_argument);
    Matrix neg(2);
    neg.at(0, 0) = 1.0;
    neg.at(0, 1) = -1.0; // negative rate
    neg.at(1, 0) = 1.0;
    neg.at(1, 1) = -1.0;
    REQUIRE_THROWS_AS(GeneratorMatrix(neg), std::invalid_argument);
    GeneratorSet empty;
    REQUIRE_THROWS_AS(empty.validate(), std::invalid_argument);
}
