#pragma once

#include <random>
#include <string>
#include <vector>

#include "io.hpp"

namespace blowlab {

// Thresholds of the verification suites.
struct SuiteLimits {
    double pde_rel = 1e-6;
    double norm_slack = 1e-10;
    double term_factor = 1.01;
    int term_count = 10;
    double symmetry = 1e-9;
    double normalisation = 1e-5;
    double nested_rel = 1e-9;
    double leading_rel = 1e-9;
    double fd_rel = 1e-6;
};

struct SuiteResult {
    std::string name;
    bool pass = false;
    std::string summary;
    json detail = json::object();
};

inline std::string sci(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3e", v);
    return buf;
}

// 20 reproducible points with |x - x0| <= 5 and T - t in [0.1 T, 0.9 T]
inline std::vector<std::pair<double, double>> residual_points(const ScatteringProfile& p, std::size_t n = 20,
                                                              std::uint64_t seed = 2024) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ux(-5.0, 5.0), ut(0.1, 0.9);
    std::vector<std::pair<double, double>> pts;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = p.x0 + ux(rng);
        pts.push_back({x, p.T - ut(rng) * p.T});
    }
    return pts;
}

inline SuiteResult run_pde_suite(const ScatteringProfile& p, double tol, const SuiteLimits& lim = {}) {
    SuiteResult r;
    r.name = "pde";
    EvalOptions o;
    o.tol = tol;
    const ResidualReport rep = pde_residual(p, residual_points(p), o);
    double worst_res = 0.0;
    json pts = json::array();
    for (const auto& q : rep.points) {
        worst_res = std::max(worst_res, q.residual);
        pts.push_back({{"x", q.x}, {"t", q.t}, {"residual", q.residual}, {"scale", q.scale}, {"rel", q.rel},
                       {"budget", q.budget}});
    }
    r.pass = rep.max_rel() < lim.pde_rel && (!p.null_data || worst_res == 0.0);
    r.summary = "max rel residual " + sci(rep.max_rel()) + " (limit " + sci(lim.pde_rel) + ") over " +
                std::to_string(rep.points.size()) + " points";
    r.detail["points"] = pts;
    r.detail["max_rel"] = rep.max_rel();
    return r;
}

inline std::vector<double> norm_sample_xs(const ScatteringProfile& p) {
    return {p.x0 - 2.0, p.x0 - 1.0, p.x0, p.x0 + 1.0, p.x0 + 2.0};
}
inline std::vector<double> norm_sample_ts(const ScatteringProfile& p) {
    return {0.0, 0.2 * p.T, 0.4 * p.T, 0.6 * p.T, 0.8 * p.T};
}

inline SuiteResult run_norm_suite(const ScatteringProfile& p, double tol, const SuiteLimits& lim = {}) {
    SuiteResult r;
    r.name = "norms";
    const auto samples = norm_audit(p, norm_sample_xs(p), norm_sample_ts(p), lim.term_count, tol);
    double worst_norm = 0.0, worst_term = 0.0;
    bool ok = true;
    json rows = json::array();
    for (const auto& s : samples) {
        worst_norm = std::max(worst_norm, s.norm_est);
        ok = ok && s.norm_est <= 1.0 / p.M + lim.norm_slack;
        for (std::size_t j = 0; j < s.term_sups.size(); ++j) {
            const double cap = std::pow(p.M, -double(j + 1)) * lim.term_factor;
            worst_term = std::max(worst_term, s.term_sups[j] / cap * lim.term_factor);
            ok = ok && s.term_sups[j] <= cap;
        }
        rows.push_back({{"x", s.x}, {"t", s.t}, {"norm_est", s.norm_est}, {"term_sups", s.term_sups}});
    }
    r.pass = ok;
    r.summary = "max norm_est " + sci(worst_norm) + " vs 1/M = " + sci(1.0 / p.M) + "; worst term sup / M^-j " +
                sci(worst_term);
    r.detail["samples"] = rows;
    return r;
}

inline SuiteResult run_symmetry_suite(const ScatteringProfile& p, double tol, const SuiteLimits& lim = {}) {
    SuiteResult r;
    r.name = "symmetry";
    const SymmetryReport s = symmetry_audit(p, p.x0 + 0.5, 0.5 * p.T, 100, 12345, std::min(tol, 1e-12));
    r.pass = s.max_diff < lim.symmetry && s.far_dev < lim.normalisation && s.near_dev < lim.normalisation;
    r.summary = "max |m(k) - m(1/k)| " + sci(s.max_diff) + "; |m - 1| at 1e6: " + sci(s.far_dev) + ", at 1e-6: " +
                sci(s.near_dev);
    r.detail = {{"samples", s.samples}, {"max_diff", s.max_diff}, {"far_dev", s.far_dev}, {"near_dev", s.near_dev}};
    return r;
}

inline SuiteResult run_oracle_suite(const ScatteringProfile& p, const SuiteLimits& lim = {}) {
    SuiteResult r;
    r.name = "oracles";
    const OracleReport o = oracle_audit(p, p.x0 + 0.7, 0.5 * p.T);
    r.pass = o.nested_max() < lim.nested_rel && o.leading_rel < lim.leading_rel && o.fd_x_rel < lim.fd_rel &&
             o.fd_t_rel < lim.fd_rel;
    r.summary = "nested quadrature " + sci(o.nested_max()) + ", single integral " + sci(o.leading_rel) +
                ", finite differences x " + sci(o.fd_x_rel) + " t " + sci(o.fd_t_rel);
    r.detail = {{"x", o.x},
                {"t", o.t},
                {"nested_rel", o.nested_rel},
                {"leading_rel", o.leading_rel},
                {"fd_x_rel", o.fd_x_rel},
                {"fd_t_rel", o.fd_t_rel}};
    return r;
}

inline std::vector<SuiteResult> run_suites(const ScatteringProfile& p, const std::vector<std::string>& names,
                                           double tol, const SuiteLimits& lim = {}) {
    std::vector<SuiteResult> out;
    for (const auto& n : names) {
        if (n == "pde")
            out.push_back(run_pde_suite(p, tol, lim));
        else if (n == "norms")
            out.push_back(run_norm_suite(p, tol, lim));
        else if (n == "symmetry")
            out.push_back(run_symmetry_suite(p, tol, lim));
        else if (n == "oracles")
            out.push_back(run_oracle_suite(p, lim));
        else
            throw ParamError("unknown suite '" + n + "'");
    }
    return out;
}

}  // namespace blowlab
