#ifndef EMBEDLAB_PIPELINE_HPP
#define EMBEDLAB_PIPELINE_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "embedlab/bs.hpp"
#include "embedlab/chain.hpp"
#include "embedlab/checks.hpp"
#include "embedlab/config.hpp"
#include "embedlab/csv.hpp"
#include "embedlab/embedding.hpp"
#include "embedlab/oracles.hpp"
#include "embedlab/payoff.hpp"
#include "embedlab/surface.hpp"
#include "embedlab/uvol.hpp"

namespace embedlab {

// exit codes: 0 pass, 1 check failure, 2 usage error, 3 engine error
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
    std::string model;
    std::vector<std::string> pipeline;
    std::string out_dir = "out";
    std::uint64_t seed = 42;
    double tol_scale = 1.0;
    Config raw;

    static ExperimentConfig from_config(Config cfg) {
        ExperimentConfig ec;
        ec.raw = cfg;
        ec.model = cfg.str("model", "");
        if (ec.model != "bs" && ec.model != "uvol" && ec.model != "chain")
            throw UsageError("config: model must be one of bs|uvol|chain, got '" + ec.model + "'");
        if (!cfg.has("pipeline")) throw UsageError("config: missing pipeline stage list");
        ec.pipeline = cfg.list("pipeline");
        if (ec.pipeline.empty()) throw UsageError("config: empty pipeline");
        ec.out_dir = cfg.str("out", "out");
        ec.seed = static_cast<std::uint64_t>(cfg.integer("seed", 42));
        for (const std::string& key : cfg.section_keys("tolerances"))
            if (!(cfg.num(key) > 0.0)) throw UsageError("config: tolerance " + key + " must be positive");
        return ec;
    }

    double tol(const std::string& name, double dflt) const {
        return raw.num("tolerances." + name, dflt) * tol_scale;
    }
};

namespace pipe_detail {

inline const std::map<std::string, std::vector<std::pair<std::string, std::string>>>& stage_catalog() {
    static const std::map<std::string, std::vector<std::pair<std::string, std::string>>> cat = {
        {"bs",
         {{"solve", "Crank-Nicolson European surface in log space"},
          {"embed", "extract f, theta and extremizer sets (min direction)"},
          {"paste", "paste f over the stopping region"},
          {"order", "pasted value never exceeds the surface"},
          {"region_exclusion", "strict nodes avoid the extremizer graph"},
          {"fbp_residual", "free-boundary equality/inequality residuals"},
          {"variational", "complementarity residual min(residual, u-f)"},
          {"fit", "continuous and smooth fit gaps at the boundary"},
          {"binomial_compare", "CRR American value of f vs the surface at spot points"},
          {"psor_compare", "projected-SOR obstacle surface vs v on the continuation set"},
          {"mc_compare", "Monte Carlo stopped at the theta graph vs v"},
          {"hitting", "seeded GBM paths all cross the theta graph"},
          {"sandwich", "empirical epsilon between tree values and v"}}},
        {"uvol",
         {{"solve", "HJB sup-form surface on the coefficient rectangle"},
          {"embed", "extract h, theta* and the pasted game value (max direction)"},
          {"order", "surface never exceeds the pasted game value"},
          {"const_stop", "once w touches h it stays on h"},
          {"fbp_residual", "max-direction free-boundary residuals on w"},
          {"fit", "fit gaps of w against h at the boundary"},
          {"linear_compare", "sup solution vs linear solver at c_hi (convex payoffs)"},
          {"game_compare", "trinomial controller-stopper root vs v at spot points"},
          {"merton", "jump quadrature vs compound-Poisson series (singleton set)"}}},
        {"chain",
         {{"solve", "linear or HJB chain value over the generator family"},
          {"embed", "elementwise time extremum and extremizer map"},
          {"stop_value", "backward-induction stopping value from the embedded reward"},
          {"nisio_compare", "dyadic sup-semigroup iteration vs the HJB ODE"},
          {"inverse", "Gauss-Newton recovery of g from target embedded payoffs"}}}};
    return cat;
}

inline void require_known_stages(const ExperimentConfig& ec) {
    const auto& cat = stage_catalog().at(ec.model);
    for (const std::string& s : ec.pipeline) {
        bool ok = false;
        for (const auto& [name, desc] : cat)
            if (name == s) ok = true;
        if (!ok) throw UsageError("unknown stage '" + s + "' for model " + ec.model);
    }
}

// linear interpolation of a surface row in the grid coordinate
inline double row_value_at(const ValueSurface& v, std::size_t i, double x_state) {
    double coord = v.xgrid.kind == GridKind::LogPrice ? std::log(x_state) : x_state;
    if (coord <= v.xgrid.lo) return v.at(i, 0);
    if (coord >= v.xgrid.hi) return v.at(i, v.n_space() - 1);
    double pos = (coord - v.xgrid.lo) / v.xgrid.dx();
    std::size_t k = static_cast<std::size_t>(pos);
    if (k + 1 >= v.n_space()) return v.at(i, v.n_space() - 1);
    double w = pos - static_cast<double>(k);
    return (1.0 - w) * v.at(i, k) + w * v.at(i, k + 1);
}

struct SummarySink {
    std::string path;
    bool all_pass = true;

    void start() {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out << "stage,check,value,pass\n";
    }
    void add(const std::string& stage, const std::string& check, double value, bool pass) {
        std::ofstream out(path, std::ios::binary | std::ios::app);
        out << stage << ',' << check << ',' << fmt17(value) << ',' << (pass ? "pass" : "fail") << '\n';
        if (!pass) all_pass = false;
    }
};

inline void write_stage_report(const std::string& dir, const std::string& stage,
                               const std::vector<CheckRow>& rows) {
    std::ofstream out = open_csv(dir + "/" + stage + ".csv");
    write_check_csv(out, rows);
}

} // namespace pipe_detail

inline std::string list_pipelines(const std::string& model_filter = "") {
    std::string out;
    for (const auto& [model, stages] : pipe_detail::stage_catalog()) {
        if (!model_filter.empty() && model_filter != model) continue;
        out += "[" + model + "]\n";
        for (const auto& [name, desc] : stages) out += "  " + name + ": " + desc + "\n";
    }
    if (out.empty()) throw UsageError("unknown model '" + model_filter + "' (valid: bs, uvol, chain)");
    return out;
}

// ---------------------------------------------------------------------------

namespace pipe_detail {

struct BsContext {
    BSParams params;
    Payoff g;
    TimeGrid tgrid;
    SpaceGrid xgrid;
    double center = 100.0;
    std::optional<ValueSurface> v;
    std::optional<EmbeddedPayoff> f;
    std::optional<RegionMask> regions;
    std::optional<ValueSurface> u;
};

inline void bs_init(const ExperimentConfig& ec, BsContext& c) {
    const Config& cfg = ec.raw;
    c.params = BSParams(cfg.num("bs.r", 0.05), cfg.num("bs.sigma", 0.2), cfg.num("bs.T", 1.0));
    c.g = parse_payoff_spec(cfg.str("payoff.spec", "put:100"));
    c.center = cfg.num("grid.center", 100.0);
    std::size_t nt = static_cast<std::size_t>(cfg.integer("grid.t_steps", 200));
    std::size_t nx = static_cast<std::size_t>(cfg.integer("grid.x_points", 400));
    c.tgrid = TimeGrid(c.params.T, nt);
    if (cfg.has("grid.y_lo") && cfg.has("grid.y_hi"))
        c.xgrid = SpaceGrid::log_price(cfg.num("grid.y_lo"), cfg.num("grid.y_hi"), nx);
    else
        c.xgrid = default_bs_grid(c.center, c.params, nx);
}

inline void bs_ensure_solve(const ExperimentConfig& ec, BsContext& c, SummarySink& sink) {
    if (c.v) return;
    std::vector<std::string> warnings;
    c.v = euro_pde_solve(c.g, c.params, c.tgrid, c.xgrid, &warnings);
    for (const std::string& w : warnings) std::cerr << "warning: " << w << "\n";
    std::ofstream out = open_csv(ec.out_dir + "/surface.csv");
    c.v->write_csv(out);
    sink.add("solve", "nodes", static_cast<double>(c.v->values.size()), true);
}

inline void bs_ensure_embed(const ExperimentConfig& ec, BsContext& c, SummarySink& sink) {
    if (c.f) return;
    bs_ensure_solve(ec, c, sink);
    c.f = extract_embedding(*c.v, Direction::Min);
    std::ofstream out = open_csv(ec.out_dir + "/payoff.csv");
    c.f->write_csv(out);
    double lip = ec.raw.num("checks.lip", 100.0);
    SemicontinuityReport sc = check_semicontinuity(*c.f, lip);
    ConvexityReport cv = check_extremizer_convexity(*c.f);
    sink.add("embed", "usc_violation", sc.max_usc_violation, true);
    sink.add("embed", "lsc_violation", sc.min_lsc_violation, true);
    sink.add("embed", "nonconvex_states", static_cast<double>(cv.nonconvex_states.size()), true);
}

inline void bs_ensure_paste(const ExperimentConfig& ec, BsContext& c, SummarySink& sink) {
    if (c.u) return;
    bs_ensure_embed(ec, c, sink);
    c.regions = build_regions(*c.f, c.tgrid);
    c.u = paste_value(*c.v, *c.f, *c.regions);
    std::ofstream out = open_csv(ec.out_dir + "/pasted.csv");
    c.u->write_csv(out);
    sink.add("paste", "boundary_nodes", static_cast<double>(c.regions->boundary_nodes.size()), true);
}

inline std::vector<double> compare_spots(const ExperimentConfig& ec, double center) {
    double lo = ec.raw.num("compare.x_lo", 0.6 * center);
    double hi = ec.raw.num("compare.x_hi", 1.6 * center);
    std::size_t n = static_cast<std::size_t>(ec.raw.integer("compare.n_spots", 21));
    std::vector<double> spots(n);
    for (std::size_t i = 0; i < n; ++i)
        spots[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    return spots;
}

inline void run_bs_stage(const ExperimentConfig& ec, const std::string& stage, BsContext& c,
                         SummarySink& sink) {
    const std::string& dir = ec.out_dir;
    if (stage == "solve") {
        bs_ensure_solve(ec, c, sink);
    } else if (stage == "embed") {
        bs_ensure_embed(ec, c, sink);
    } else if (stage == "paste") {
        bs_ensure_paste(ec, c, sink);
    } else if (stage == "order") {
        bs_ensure_paste(ec, c, sink);
        double tol = 10.0 * (c.tgrid.dt() + c.xgrid.dx() * c.xgrid.dx()) * c.v->sup_norm();
        OrderReport rep = check_order(*c.u, *c.v, nullptr, tol);
        write_stage_report(dir, stage,
                           {{"order", "max_gap_uv", rep.max_gap_uv, rep.arg_uv.i, rep.arg_uv.k},
                            {"order", "violations", static_cast<double>(rep.violations_uv), 0, 0}});
        sink.add(stage, "violations", static_cast<double>(rep.violations_uv), rep.violations_uv == 0);
    } else if (stage == "region_exclusion") {
        bs_ensure_paste(ec, c, sink);
        double tol = ec.tol("exclusion", 1e-6);
        ExclusionReport rep = check_region_exclusion(*c.u, *c.f, tol);
        write_stage_report(dir, stage,
                           {{"region_exclusion", "strict_nodes", static_cast<double>(rep.strict_nodes), 0, 0},
                            {"region_exclusion", "violations", static_cast<double>(rep.violations),
                             rep.first_violation.i, rep.first_violation.k}});
        sink.add(stage, "violations", static_cast<double>(rep.violations), rep.violations == 0);
    } else if (stage == "fbp_residual") {
        bs_ensure_paste(ec, c, sink);
        DiscreteOperator op = make_bs_log_operator(c.params, c.xgrid);
        FbpReport rep = fbp_residual(*c.u, op, *c.regions, Direction::Min);
        double eq_tol = ec.tol("fbp_eq", 2e-3);
        double ineq_tol = ec.tol("fbp_ineq", 1e-3);
        write_stage_report(dir, stage,
                           {{"fbp", "max_eq_residual_on_C", rep.max_eq_residual_on_C, rep.arg_eq.i, rep.arg_eq.k},
                            {"fbp", "min_inequality_residual", rep.min_oriented_inequality, rep.arg_ineq.i,
                             rep.arg_ineq.k}});
        sink.add(stage, "max_eq_residual_on_C", rep.max_eq_residual_on_C, rep.max_eq_residual_on_C <= eq_tol);
        sink.add(stage, "min_inequality_residual", rep.min_oriented_inequality,
                 rep.min_oriented_inequality >= -ineq_tol);
    } else if (stage == "variational") {
        bs_ensure_paste(ec, c, sink);
        DiscreteOperator op = make_bs_log_operator(c.params, c.xgrid);
        VariationalReport rep = variational_residual(*c.u, *c.f, op);
        double tol = ec.tol("variational", 2e-3);
        write_stage_report(dir, stage, {{"variational", "max_abs", rep.max_abs, rep.arg.i, rep.arg.k}});
        sink.add(stage, "max_abs", rep.max_abs, rep.max_abs <= tol);
    } else if (stage == "fit") {
        bs_ensure_paste(ec, c, sink);
        FitReport rep = fit_check(*c.u, *c.f, *c.regions);
        double ctol = ec.tol("continuous_fit", 1e-4);
        write_stage_report(dir, stage,
                           {{"fit", "continuous_fit_gap", rep.max_continuous_fit_gap, rep.arg_continuous.i,
                             rep.arg_continuous.k},
                            {"fit", "smooth_fit_gap", rep.max_smooth_fit_gap, rep.arg_smooth.i, rep.arg_smooth.k},
                            {"fit", "boundary_nodes_checked", static_cast<double>(rep.boundary_nodes_checked), 0, 0}});
        bool pass = !rep.applicable || rep.max_continuous_fit_gap <= ctol;
        sink.add(stage, "continuous_fit_gap", rep.max_continuous_fit_gap, pass);
        sink.add(stage, "smooth_fit_gap", rep.max_smooth_fit_gap, true);
    } else if (stage == "binomial_compare" || stage == "sandwich") {
        bs_ensure_paste(ec, c, sink);
        Payoff fpay = payoff_from_embedding(*c.f);
        TreeSpec spec;
        spec.n_steps = static_cast<std::size_t>(ec.raw.integer("compare.tree_steps", 2000));
        double max_err = 0.0, eps_hat = 0.0;
        for (double spot : compare_spots(ec, c.center)) {
            double tree = american_binomial(fpay, c.params, spec, 0.0, spot);
            double vv = row_value_at(*c.v, 0, spot);
            max_err = std::max(max_err, std::abs(tree - vv));
            eps_hat = std::max(eps_hat, vv - tree);
        }
        double tol = ec.tol("binomial", 5e-3 * c.center);
        if (stage == "binomial_compare") {
            write_stage_report(dir, stage, {{"binomial", "max_abs_error", max_err, 0, 0}});
            sink.add(stage, "max_abs_error", max_err, max_err <= tol);
        } else {
            write_stage_report(dir, stage, {{"sandwich", "epsilon_hat", eps_hat, 0, 0}});
            sink.add(stage, "epsilon_hat", eps_hat, eps_hat <= tol);
        }
    } else if (stage == "psor_compare") {
        bs_ensure_paste(ec, c, sink);
        DiscreteOperator op = make_bs_log_operator(c.params, c.xgrid);
        PSORConfig pc;
        PsorResult pr = psor_solve(*c.f, op, c.tgrid, c.xgrid, pc, c.params.r);
        double max_diff = 0.0;
        for (std::size_t i = 0; i < c.v->n_time(); ++i)
            for (std::size_t k = 0; k < c.v->n_space(); ++k)
                if (c.tgrid.node(i) <= c.f->theta[k])
                    max_diff = std::max(max_diff, std::abs(pr.surface.at(i, k) - c.v->at(i, k)));
        double tol = ec.tol("psor", 1e-2);
        write_stage_report(dir, stage,
                           {{"psor", "max_diff_on_C", max_diff, 0, 0},
                            {"psor", "total_iters", static_cast<double>(pr.total_iters), 0, 0}});
        sink.add(stage, "max_diff_on_C", max_diff, max_diff <= tol);
    } else if (stage == "mc_compare") {
        bs_ensure_embed(ec, c, sink);
        Payoff fpay = payoff_from_embedding(*c.f);
        std::size_t n_paths = static_cast<std::size_t>(ec.raw.integer("mc.paths", 100000));
        McEstimate est = mc_stop_at_theta(fpay, c.params, *c.f, c.tgrid, 0.0, c.center, n_paths, ec.seed);
        double vv = row_value_at(*c.v, 0, c.center);
        double gap = std::abs(est.mean - vv);
        write_stage_report(dir, stage,
                           {{"mc", "mean", est.mean, 0, 0},
                            {"mc", "stderr", est.stderror, 0, 0},
                            {"mc", "abs_gap", gap, 0, 0}});
        sink.add(stage, "abs_gap_in_stderrs", est.stderror > 0 ? gap / est.stderror : 0.0,
                 gap <= 3.0 * est.stderror);
    } else if (stage == "hitting") {
        bs_ensure_embed(ec, c, sink);
        std::size_t per = static_cast<std::size_t>(ec.raw.integer("mc.hit_paths", 2000));
        std::size_t total = 0, crossed = 0, rejected = 0;
        std::vector<double> starts = {0.8 * c.center, 0.9 * c.center, c.center, 1.1 * c.center, 1.2 * c.center};
        for (std::size_t s = 0; s < starts.size(); ++s) {
            PathSet ps;
            ps.start_index = 0;
            ps.states = simulate_gbm_paths(c.params, c.tgrid, 0, starts[s], per, ec.seed + s);
            HittingReport rep = hitting_path_check(*c.f, c.tgrid, ps);
            total += rep.n_paths;
            crossed += rep.crossed;
            rejected += rep.rejected;
        }
        write_stage_report(dir, stage,
                           {{"hitting", "paths", static_cast<double>(total), 0, 0},
                            {"hitting", "crossed", static_cast<double>(crossed), 0, 0},
                            {"hitting", "rejected", static_cast<double>(rejected), 0, 0}});
        sink.add(stage, "crossing_rate",
                 total ? static_cast<double>(crossed) / static_cast<double>(total) : 0.0,
                 crossed == total && rejected == 0);
    } else {
        throw UsageError("unknown stage '" + stage + "' for model bs");
    }
}

// --- uvol -------------------------------------------------------------------

struct UvolContext {
    UncertaintySet theta;
    double r = 0.0;
    double T = 1.0;
    Payoff g;
    TimeGrid tgrid;
    SpaceGrid xgrid;
    double center = 0.0;
    std::optional<ValueSurface> v;
    std::optional<GameValue> gv;
};

inline Payoff parse_uvol_payoff(const std::string& spec) {
    // extra smooth convex option for the uncertain-volatility runs:
    // softput:K:beta is the softplus smoothing of (K-x)^+
    if (spec.rfind("softput:", 0) == 0) {
        std::string rest = spec.substr(8);
        auto colon = rest.find(':');
        double K = parse_double(colon == std::string::npos ? rest : rest.substr(0, colon));
        double beta = colon == std::string::npos ? 0.2 : parse_double(rest.substr(colon + 1));
        return {[K, beta](double x) {
                    double u = (K - x) / beta;
                    double sp = u > 30.0 ? u : std::log1p(std::exp(std::min(u, 30.0)));
                    return beta * sp;
                },
                spec};
    }
    return parse_payoff_spec(spec);
}

inline JumpSpec load_jump_spec(const Config& cfg) {
    JumpSpec js;
    js.intensity = cfg.num("uvol.jump_intensity", 0.0);
    auto rows = read_csv_rows(cfg.str("uvol.jumps"));
    for (const auto& row : rows) {
        if (row.size() < 2) continue;
        try {
            double z = parse_double(row[0]);
            double d = parse_double(row[1]);
            js.zs.push_back(z);
            js.density.push_back(d);
        } catch (const std::exception&) {
            if (js.zs.empty()) continue;
            throw;
        }
    }
    js.validate();
    return js;
}

inline void uvol_init(const ExperimentConfig& ec, UvolContext& c) {
    const Config& cfg = ec.raw;
    c.theta = UncertaintySet(cfg.num("uvol.b_lo", 0.0), cfg.num("uvol.b_hi", 0.0),
                             cfg.num("uvol.c_lo", 0.01), cfg.num("uvol.c_hi", 0.09));
    if (cfg.has("uvol.jumps") && cfg.str("uvol.jumps") != "none") c.theta.jump = load_jump_spec(cfg);
    c.r = cfg.num("uvol.r", 0.05);
    c.T = cfg.num("uvol.T", 1.0);
    c.g = parse_uvol_payoff(cfg.str("payoff.spec", "softput:0:0.2"));
    c.center = cfg.num("grid.center", 0.0);
    std::size_t nt = static_cast<std::size_t>(cfg.integer("grid.t_steps", 400));
    std::size_t nx = static_cast<std::size_t>(cfg.integer("grid.x_points", 400));
    c.tgrid = TimeGrid(c.T, nt);
    double half = cfg.num("grid.half_width", 6.0 * std::sqrt(c.theta.c_hi * c.T));
    double x_lo = cfg.num("grid.x_lo", c.center - half);
    double x_hi = cfg.num("grid.x_hi", c.center + half);
    c.xgrid = SpaceGrid::arithmetic(x_lo, x_hi, nx);
}

inline void uvol_ensure_solve(const ExperimentConfig& ec, UvolContext& c, SummarySink& sink) {
    if (c.v) return;
    c.v = hjb_solve(c.g, c.theta, c.r, c.tgrid, c.xgrid);
    std::ofstream out = open_csv(ec.out_dir + "/surface.csv");
    c.v->write_csv(out);
    sink.add("solve", "nodes", static_cast<double>(c.v->values.size()), true);
}

inline void uvol_ensure_embed(const ExperimentConfig& ec, UvolContext& c, SummarySink& sink) {
    if (c.gv) return;
    uvol_ensure_solve(ec, c, sink);
    c.gv = build_game_value(*c.v);
    std::ofstream out = open_csv(ec.out_dir + "/payoff.csv");
    c.gv->h.write_csv(out);
    std::ofstream out2 = open_csv(ec.out_dir + "/pasted.csv");
    c.gv->w.write_csv(out2);
    double lip = ec.raw.num("checks.lip", 100.0);
    SemicontinuityReport sc = check_semicontinuity(c.gv->h, lip);
    sink.add("embed", "usc_violation", sc.max_usc_violation, true);
    sink.add("embed", "lsc_violation", sc.min_lsc_violation, true);
}

inline void run_uvol_stage(const ExperimentConfig& ec, const std::string& stage, UvolContext& c,
                           SummarySink& sink) {
    const std::string& dir = ec.out_dir;
    if (stage == "solve") {
        uvol_ensure_solve(ec, c, sink);
    } else if (stage == "embed") {
        uvol_ensure_embed(ec, c, sink);
    } else if (stage == "order") {
        uvol_ensure_embed(ec, c, sink);
        double tol = 10.0 * (c.tgrid.dt() + c.xgrid.dx() * c.xgrid.dx()) * c.v->sup_norm();
        OrderReport rep = check_order(*c.v, c.gv->w, nullptr, tol); // v <= w
        write_stage_report(dir, stage,
                           {{"order", "max_gap_vw", rep.max_gap_uv, rep.arg_uv.i, rep.arg_uv.k},
                            {"order", "violations", static_cast<double>(rep.violations_uv), 0, 0}});
        sink.add(stage, "violations", static_cast<double>(rep.violations_uv), rep.violations_uv == 0);
    } else if (stage == "const_stop") {
        uvol_ensure_embed(ec, c, sink);
        double tol = ec.tol("const_stop", 1e-2);
        ConstStopReport rep = check_const_stop(c.gv->w, c.gv->h, tol);
        write_stage_report(dir, stage,
                           {{"const_stop", "violations", static_cast<double>(rep.violations),
                             rep.first_violation.i, rep.first_violation.k},
                            {"const_stop", "max_gap_after_touch", rep.max_gap_after_touch, 0, 0}});
        sink.add(stage, "violations", static_cast<double>(rep.violations), rep.violations == 0);
    } else if (stage == "fbp_residual") {
        uvol_ensure_embed(ec, c, sink);
        DiscreteOperator op = make_bachelier_sup_operator(c.theta.b_lo, c.theta.b_hi, c.theta.c_lo,
                                                          c.theta.c_hi, c.r, c.xgrid);
        FbpReport rep = fbp_residual(c.gv->w, op, c.gv->regions, Direction::Max);
        double scale = 1.0 + c.v->sup_norm();
        double dflt = 10.0 * (c.tgrid.dt() + c.xgrid.dx() * c.xgrid.dx()) * scale;
        double eq_tol = ec.tol("fbp_eq", dflt);
        double ineq_tol = ec.tol("fbp_ineq", dflt);
        write_stage_report(dir, stage,
                           {{"fbp", "max_eq_residual_on_C", rep.max_eq_residual_on_C, rep.arg_eq.i, rep.arg_eq.k},
                            {"fbp", "min_inequality_residual", rep.min_oriented_inequality, rep.arg_ineq.i,
                             rep.arg_ineq.k}});
        sink.add(stage, "max_eq_residual_on_C", rep.max_eq_residual_on_C, rep.max_eq_residual_on_C <= eq_tol);
        sink.add(stage, "min_inequality_residual", rep.min_oriented_inequality,
                 rep.min_oriented_inequality >= -ineq_tol);
    } else if (stage == "fit") {
        uvol_ensure_embed(ec, c, sink);
        FitReport rep = fit_check(c.gv->w, c.gv->h, c.gv->regions);
        double ctol = ec.tol("continuous_fit", 1e-2);
        write_stage_report(dir, stage,
                           {{"fit", "continuous_fit_gap", rep.max_continuous_fit_gap, rep.arg_continuous.i,
                             rep.arg_continuous.k},
                            {"fit", "smooth_fit_gap", rep.max_smooth_fit_gap, rep.arg_smooth.i, rep.arg_smooth.k}});
        bool pass = !rep.applicable || rep.max_continuous_fit_gap <= ctol;
        sink.add(stage, "continuous_fit_gap", rep.max_continuous_fit_gap, pass);
        sink.add(stage, "smooth_fit_gap", rep.max_smooth_fit_gap, true);
    } else if (stage == "linear_compare") {
        uvol_ensure_solve(ec, c, sink);
        ValueSurface lin = linear_bachelier_solve(c.g, c.theta.b_hi, c.theta.c_hi, c.r, c.tgrid, c.xgrid);
        double max_diff = 0.0;
        for (std::size_t idx = 0; idx < lin.values.size(); ++idx)
            max_diff = std::max(max_diff, std::abs(lin.values[idx] - c.v->values[idx]));
        double tol = ec.tol("linear", 1e-3);
        write_stage_report(dir, stage, {{"linear", "max_abs_diff", max_diff, 0, 0}});
        sink.add(stage, "max_abs_diff", max_diff, max_diff <= tol);
    } else if (stage == "game_compare") {
        uvol_ensure_embed(ec, c, sink);
        Payoff hpay = payoff_from_embedding(c.gv->h);
        TreeSpec spec;
        spec.kind = TreeKind::Trinomial;
        spec.mode = StopMode::MinimizeStop;
        spec.has_control = true;
        spec.sigma_lo = std::sqrt(c.theta.c_lo);
        spec.sigma_hi = std::sqrt(c.theta.c_hi);
        spec.n_steps = static_cast<std::size_t>(ec.raw.integer("compare.tree_steps", 2000));
        GameParams gp{c.r, c.theta.b_lo, c.theta.b_hi, c.T};
        double span = 0.25 * (c.xgrid.hi - c.xgrid.lo);
        double max_err = 0.0;
        std::vector<CheckRow> rows;
        for (int s = -2; s <= 2; ++s) {
            double x0 = c.center + span * 0.5 * static_cast<double>(s);
            double root = game_tree(hpay, gp, spec, 0.0, x0);
            double vv = row_value_at(*c.v, 0, x0);
            max_err = std::max(max_err, std::abs(root - vv));
            rows.push_back({"game", "abs_error_at_" + fmt17(x0), std::abs(root - vv), 0, 0});
        }
        double tol = ec.tol("game", 5e-3);
        rows.push_back({"game", "max_abs_error", max_err, 0, 0});
        write_stage_report(dir, stage, rows);
        sink.add(stage, "max_abs_error", max_err, max_err <= tol);
    } else if (stage == "merton") {
        if (!c.theta.jump) throw UsageError("merton stage needs uvol.jumps configured");
        if (c.theta.b_lo != c.theta.b_hi || c.theta.c_lo != c.theta.c_hi)
            throw UsageError("merton stage needs a singleton coefficient set");
        MertonReport rep = merton_validation(c.g, c.theta, c.r, c.tgrid, c.xgrid, c.center);
        double tol = ec.tol("merton", 1e-2);
        write_stage_report(dir, stage,
                           {{"merton", "engine_value", rep.engine_value, 0, 0},
                            {"merton", "reference_value", rep.reference_value, 0, 0},
                            {"merton", "discrepancy", rep.discrepancy, 0, 0}});
        sink.add(stage, "discrepancy", rep.discrepancy, rep.discrepancy <= tol);
    } else {
        throw UsageError("unknown stage '" + stage + "' for model uvol");
    }
}

// --- chain ------------------------------------------------------------------

struct ChainContext {
    GeneratorSet S;
    std::vector<double> g;
    double T = 1.0;
    TimeGrid tgrid;
    std::optional<ChainValue> v;
    std::optional<EmbeddedPayoff> f;
};

inline Matrix parse_inline_matrix(const std::string& text) {
    std::vector<std::vector<double>> rows;
    std::stringstream ss(text);
    std::string row;
    while (std::getline(ss, row, ';')) {
        std::vector<double> vals;
        std::stringstream rs(row);
        std::string cell;
        while (std::getline(rs, cell, ',')) vals.push_back(parse_double(cell));
        rows.push_back(vals);
    }
    Matrix m(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != rows.size()) throw UsageError("inline matrix is not square");
        for (std::size_t j = 0; j < rows.size(); ++j) m.at(i, j) = rows[i][j];
    }
    return m;
}

inline Matrix read_matrix_csv(const std::string& path) {
    auto rows = read_csv_rows(path);
    Matrix m(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != rows.size()) throw UsageError("matrix in " + path + " is not square");
        for (std::size_t j = 0; j < rows.size(); ++j) m.at(i, j) = parse_double(rows[i][j]);
    }
    return m;
}

inline void chain_init(const ExperimentConfig& ec, ChainContext& c) {
    const Config& cfg = ec.raw;
    c.T = cfg.num("chain.T", 1.0);
    std::size_t nt = static_cast<std::size_t>(cfg.integer("grid.t_steps", 256));
    c.tgrid = TimeGrid(c.T, nt);
    if (cfg.has("chain.generators")) {
        std::stringstream ss(cfg.str("chain.generators"));
        std::string path;
        while (std::getline(ss, path, ';'))
            if (!path.empty()) c.S.members.push_back(GeneratorMatrix(read_matrix_csv(path)));
    } else {
        std::stringstream ss(cfg.str("chain.generators_inline", "-1,1;1,-1"));
        std::string one;
        while (std::getline(ss, one, '|'))
            if (!one.empty()) c.S.members.push_back(GeneratorMatrix(parse_inline_matrix(one)));
    }
    c.S.validate();
    if (cfg.has("chain.g"))
        c.g = cfg.num_list("chain.g");
    else {
        c.g.assign(c.S.dim(), 0.0);
        for (std::size_t x = 0; x < c.g.size(); ++x) c.g[x] = static_cast<double>(x);
    }
    if (c.g.size() != c.S.dim()) throw UsageError("chain.g length does not match generator dimension");
}

inline void chain_ensure_solve(const ExperimentConfig& ec, ChainContext& c, SummarySink& sink) {
    if (c.v) return;
    std::string solver = ec.raw.str("chain.solver", "hjb");
    if (solver == "linear") {
        RunningCost cost;
        if (ec.raw.has("chain.cost")) {
            double kappa = ec.raw.num("chain.cost");
            cost = [kappa](double, std::size_t) { return kappa; };
        }
        c.v = linear_chain_value(c.S.members.front(), c.g, cost, c.tgrid);
    } else if (solver == "hjb") {
        c.v = hjb_ode_solve(c.S, c.g, c.tgrid);
    } else {
        throw UsageError("chain.solver must be linear|hjb");
    }
    std::ofstream out = open_csv(ec.out_dir + "/chain_value.csv");
    c.v->to_surface().write_csv(out);
    sink.add("solve", "states", static_cast<double>(c.v->d), true);
}

inline void run_chain_stage(const ExperimentConfig& ec, const std::string& stage, ChainContext& c,
                            SummarySink& sink) {
    const std::string& dir = ec.out_dir;
    if (stage == "solve") {
        chain_ensure_solve(ec, c, sink);
    } else if (stage == "embed") {
        chain_ensure_solve(ec, c, sink);
        Direction d = ec.raw.str("chain.direction", "min") == "max" ? Direction::Max : Direction::Min;
        c.f = chain_embed(*c.v, d);
        std::ofstream out = open_csv(dir + "/payoff.csv");
        c.f->write_csv(out);
        sink.add(stage, "states", static_cast<double>(c.f->n_space()), true);
    } else if (stage == "stop_value") {
        chain_ensure_solve(ec, c, sink);
        EmbeddedPayoff h = chain_embed(*c.v, Direction::Max);
        ChainValue w = chain_stop_value(c.S, h.payoff, c.tgrid, StopModeChain::Min);
        std::ofstream out = open_csv(dir + "/stop_value.csv");
        w.to_surface().write_csv(out);
        // feasibility: the min-stopper never exceeds the reward
        double worst = 0.0;
        for (std::size_t i = 0; i < w.tgrid.n_nodes(); ++i)
            for (std::size_t x = 0; x < w.d; ++x)
                worst = std::max(worst, w.at(i, x) - h.payoff[x]);
        sink.add(stage, "max_reward_excess", worst, worst <= 1e-12);
    } else if (stage == "nisio_compare") {
        chain_ensure_solve(ec, c, sink);
        unsigned depth = static_cast<unsigned>(ec.raw.integer("chain.depth", 12));
        std::size_t ode_steps = static_cast<std::size_t>(ec.raw.integer("chain.ode_steps", 10000));
        ChainValue ref = hjb_ode_solve(c.S, c.g, TimeGrid(c.T, ode_steps));
        std::vector<double> nis = nisio_iterate(c.S, c.g, c.T, depth);
        double diff = 0.0;
        for (std::size_t x = 0; x < nis.size(); ++x) diff = std::max(diff, std::abs(nis[x] - ref.at(0, x)));
        bool monotone = true;
        std::vector<double> prev;
        for (unsigned dd = 0; dd <= depth; dd += 2) {
            std::vector<double> cur = nisio_iterate(c.S, c.g, c.T, dd);
            if (!prev.empty())
                for (std::size_t x = 0; x < cur.size(); ++x)
                    if (cur[x] < prev[x] - 1e-12) monotone = false;
            prev = cur;
        }
        double tol = ec.tol("nisio", 1e-4);
        write_stage_report(dir, stage,
                           {{"nisio", "sup_diff", diff, 0, 0},
                            {"nisio", "monotone", monotone ? 1.0 : 0.0, 0, 0}});
        sink.add(stage, "sup_diff", diff, diff <= tol && monotone);
    } else if (stage == "inverse") {
        chain_ensure_solve(ec, c, sink);
        const GeneratorMatrix& Q = c.S.members.front();
        std::size_t n_targets = static_cast<std::size_t>(ec.raw.integer("chain.inverse_targets", 100));
        double T_inv = ec.raw.num("chain.inverse_T", std::min(c.T, 0.9 / std::max(Q.sup_norm(), 1e-12)));
        std::mt19937_64 rng(ec.seed);
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        std::size_t successes = 0;
        double worst = 0.0;
        for (std::size_t trial = 0; trial < n_targets; ++trial) {
            std::vector<double> target(Q.dim());
            for (double& t : target) t = unif(rng);
            InverseResult res = embed_inverse(target, Q, T_inv, Direction::Min);
            worst = std::max(worst, res.residual);
            if (res.residual <= 1e-8) ++successes;
        }
        double frac = static_cast<double>(successes) / static_cast<double>(n_targets);
        write_stage_report(dir, stage,
                           {{"inverse", "success_fraction", frac, 0, 0},
                            {"inverse", "worst_residual", worst, 0, 0}});
        sink.add(stage, "success_fraction", frac, frac >= 0.99);
    } else {
        throw UsageError("unknown stage '" + stage + "' for model chain");
    }
}

} // namespace pipe_detail

// Executes the configured stages in order; artifacts and an incremental
// summary.csv land in the output directory. Returns the process exit code.
inline int run_pipeline(ExperimentConfig ec) {
    pipe_detail::require_known_stages(ec);
    std::filesystem::create_directories(ec.out_dir);
    std::error_code dummy;
    std::filesystem::remove(ec.out_dir + "/FAILED", dummy);

    pipe_detail::SummarySink sink;
    sink.path = ec.out_dir + "/summary.csv";
    sink.start();

    pipe_detail::BsContext bs;
    pipe_detail::UvolContext uv;
    pipe_detail::ChainContext ch;
    if (ec.model == "bs") pipe_detail::bs_init(ec, bs);
    if (ec.model == "uvol") pipe_detail::uvol_init(ec, uv);
    if (ec.model == "chain") pipe_detail::chain_init(ec, ch);

    for (const std::string& stage : ec.pipeline) {
        try {
            if (ec.model == "bs")
                pipe_detail::run_bs_stage(ec, stage, bs, sink);
            else if (ec.model == "uvol")
                pipe_detail::run_uvol_stage(ec, stage, uv, sink);
            else
                pipe_detail::run_chain_stage(ec, stage, ch, sink);
        } catch (const UsageError&) {
            throw;
        } catch (const std::exception& e) {
            std::ofstream marker(ec.out_dir + "/FAILED", std::ios::binary | std::ios::trunc);
            marker << "stage: " << stage << "\nerror: " << e.what() << "\n";
            std::cerr << "engine error in stage " << stage << ": " << e.what() << "\n";
            return 3;
        }
    }
    return sink.all_pass ? 0 : 1;
}

} // namespace embedlab

#endif
