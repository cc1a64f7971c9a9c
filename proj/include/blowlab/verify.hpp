#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include <boost/math/tools/minima.hpp>

#include "solution.hpp"

namespace blowlab {

// ---------------------------------------------------------------- PDE residual

struct ResidualPoint {
    double x = 0.0, t = 0.0;
    double residual = 0.0;
    double scale = 0.0;
    double rel = 0.0;
    double budget = 0.0;  // propagated error budget of the residual
};

struct ResidualReport {
    std::vector<ResidualPoint> points;
    double max_rel() const {
        double m = 0.0;
        for (auto& p : points) m = std::max(m, p.rel);
        return m;
    }
};

// u_tt - u_xx - (u^2)_xx - u_xxxx from exact-multiplier derivatives
inline ResidualPoint residual_at(const ScatteringProfile& p, double x, double t, const EvalOptions& opt = {}) {
    const SolutionSample s = u_eval(p, x, t, 4, opt);
    const double u = s.value(0, 0), ux = s.value(1, 0), uxx = s.value(2, 0);
    const double u4 = s.value(4, 0), utt = s.value(0, 2);
    const double nonlin = 2.0 * (ux * ux + u * uxx);
    ResidualPoint r;
    r.x = x;
    r.t = t;
    r.residual = std::abs(utt - uxx - nonlin - u4);
    r.scale = std::max({std::abs(utt), std::abs(uxx), std::abs(nonlin), std::abs(u4)});
    r.rel = r.scale > 0.0 ? r.residual / r.scale : 0.0;
    auto e = [&](int a, int b) { return s.err.at({a, b}).total(); };
    r.budget = e(0, 2) + e(2, 0) + e(4, 0) +
               2.0 * (2.0 * std::abs(ux) * e(1, 0) + std::abs(u) * e(2, 0) + std::abs(uxx) * e(0, 0));
    return r;
}

inline ResidualReport pde_residual(const ScatteringProfile& p, const std::vector<std::pair<double, double>>& pts,
                                   const EvalOptions& opt = {}) {
    ResidualReport rep;
    rep.points.resize(pts.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < std::ptrdiff_t(pts.size()); ++i)
        rep.points[i] = residual_at(p, pts[i].first, pts[i].second, opt);
    return rep;
}

// ---------------------------------------------------------------- blow-up fits

struct Ladder {
    double tau_max = 1e-1;
    double tau_min = 1e-6;
    int rungs = 11;

    std::vector<double> taus() const {
        if (rungs < 2) throw ParamError("ladder needs at least two rungs");
        if (!(tau_max > tau_min && tau_min > 0.0)) throw ParamError("ladder needs tau_max > tau_min > 0");
        std::vector<double> out(rungs);
        for (int i = 0; i < rungs; ++i)
            out[i] = tau_max * std::pow(tau_min / tau_max, double(i) / (rungs - 1));
        return out;
    }
};

// V_i = A X(s, i) + B by variable projection over s
struct PowerFit {
    double s = 0.0;
    double A = 0.0;
    double B = 0.0;
    double r2 = 0.0;
};

inline PowerFit fit_exponent(const std::vector<double>& V, const std::function<double(double, std::size_t)>& basis,
                             double s_lo = 0.02, double s_hi = 4.0, double s_step = 0.02) {
    const std::size_t n = V.size();
    if (n < 4) throw FitError("too few rungs for the exponent fit");
    const double mean = std::accumulate(V.begin(), V.end(), 0.0) / n;
    double sst = 0.0;
    for (double v : V) sst += (v - mean) * (v - mean);
    std::vector<double> X(n);
    auto solve = [&](double s, double& A, double& B) {
        double sxx = 0, sx = 0, sxy = 0, sy = 0;
        for (std::size_t i = 0; i < n; ++i) {
            X[i] = basis(s, i);
            sxx += X[i] * X[i];
            sx += X[i];
            sxy += X[i] * V[i];
            sy += V[i];
        }
        const double det = n * sxx - sx * sx;
        A = (n * sxy - sx * sy) / det;
        B = (sy - A * sx) / n;
        double ssr = 0.0;
        for (std::size_t i = 0; i < n; ++i) ssr += (V[i] - A * X[i] - B) * (V[i] - A * X[i] - B);
        return ssr;
    };
    double best_s = s_lo, best = std::numeric_limits<double>::infinity(), A = 0, B = 0;
    for (double s = s_lo; s <= s_hi; s += s_step) {
        const double r = solve(s, A, B);
        if (r < best) {
            best = r;
            best_s = s;
        }
    }
    auto obj = [&](double s) {
        double a, b;
        return solve(s, a, b);
    };
    const auto m = boost::math::tools::brent_find_minima(obj, std::max(1e-6, best_s - s_step), best_s + s_step, 50);
    PowerFit f;
    f.s = m.first;
    const double ssr = solve(f.s, f.A, f.B);
    f.r2 = sst > 0.0 ? 1.0 - ssr / sst : 1.0;
    return f;
}

// int_{y_b}^inf y^{s-1} L(y) e^{-y^2/ell^2} dy: the blow-up profile of a power-law tail seen through the
// Gaussian cutoff at scale ell
inline double gaussian_moment(double s, double ell, double y_b, const std::function<double(double)>& L) {
    using gk = boost::math::quadrature::gauss_kronrod<double, 31>;
    auto f = [&](double u) { return std::pow(u, s - 1.0) * L(ell * u) * std::exp(-u * u); };
    const double lo = y_b / ell;
    // finite pieces up to where e^{-u^2} underflows the integrand
    double total = 0.0, a = lo;
    const double top = std::max(lo, 0.0) + 12.0;
    while (a < top) {
        const double w = std::min(std::max(0.5, 0.5 * a), top - a);
        total += gk::integrate(f, a, a + w, 8, 1e-13);
        a += w;
    }
    return std::pow(ell, s) * total;
}

struct BlowupFit {
    int q1 = 0, q2 = 0;
    double delta_target = 0.0;
    bool corrected = true;
    double delta_hat = 0.0;
    double amplitude = 0.0;
    double background = 0.0;
    double r2 = 0.0;
    // fitted exponent on the deeper half of the ladder minus that on the shallower half
    double drift = 0.0;
    int expected_sign = 0;
    bool sign_ok = false;
    std::vector<double> taus, values, predictions, ratios, errors;
};

struct FitOptions {
    bool log_correction = true;
    EvalOptions eval{};
    bool require_r2 = true;
};

inline std::vector<double> ladder_values(const ScatteringProfile& p, int q1, int q2, const std::vector<double>& taus,
                                         const EvalOptions& opt, std::vector<double>* errors = nullptr) {
    std::vector<double> vals(taus.size()), errs(taus.size());
    const int order = q1 + 2 * q2;
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < std::ptrdiff_t(taus.size()); ++i) {
        const SolutionSample s = u_eval(p, p.x0, p.T - taus[i], order, opt);
        vals[i] = s.value(q1, q2);
        errs[i] = s.err.at({q1, q2}).total();
    }
    if (errors) *errors = errs;
    return vals;
}

inline BlowupFit fit_ladder(const ScatteringProfile& p, int q1, int q2, const std::vector<double>& taus,
                            const std::vector<double>& values, bool log_correction, bool require_r2 = true) {
    if (taus.size() < 6) throw ParamError("blow-up fit needs at least 6 rungs");
    for (std::size_t i = 1; i < taus.size(); ++i)
        if (!(taus[i] < taus[i - 1])) throw ParamError("ladder rungs must strictly decrease in T-t");
    BlowupFit f;
    f.q1 = q1;
    f.q2 = q2;
    f.delta_target = p.kind.delta;
    f.corrected = log_correction;
    f.taus = taus;
    f.values = values;
    const std::size_t n = taus.size();
    std::vector<double> ell(n);
    for (std::size_t i = 0; i < n; ++i) {
        ell[i] = 2.0 / std::sqrt(taus[i]);
        const double pred = asymptotic_prediction(p, p.T - taus[i], q1, q2);
        f.predictions.push_back(pred);
        f.ratios.push_back(values[i] / pred);
    }
    const double y_b = p.blend_start();
    std::function<double(double)> weight = [](double) { return 1.0; };
    if (log_correction) weight = [&p](double y) { return p.log.eval(y); };
    std::map<std::pair<std::size_t, double>, double> memo;
    auto basis_from = [&](std::size_t off) {
        return [&, off](double s, std::size_t i) {
            auto key = std::make_pair(i + off, s);
            auto it = memo.find(key);
            if (it != memo.end()) return it->second;
            return memo[key] = gaussian_moment(s, ell[i + off], y_b, weight);
        };
    };
    const PowerFit all = fit_exponent(values, basis_from(0));
    f.delta_hat = all.s / 2.0;
    f.amplitude = all.A;
    f.background = all.B;
    f.r2 = all.r2;
    const std::size_t h = n / 2;
    auto sub = [&](std::size_t a, std::size_t b) {
        return fit_exponent(std::vector<double>(values.begin() + a, values.begin() + b), basis_from(a)).s / 2.0;
    };
    f.drift = sub(h, n) - sub(0, n - h);
    f.expected_sign = f.predictions.back() > 0.0 ? 1 : -1;
    const int amp_sign = f.amplitude * basis_from(0)(all.s, n - 1) > 0.0 ? 1 : -1;
    const int last_sign = values.back() > 0.0 ? 1 : -1;
    f.sign_ok = amp_sign == f.expected_sign && last_sign == f.expected_sign;
    if (require_r2 && f.r2 < 0.99) throw FitError("blow-up fit quality r2 below 0.99");
    return f;
}

inline BlowupFit fit_blowup(const ScatteringProfile& p, int q1, int q2, const Ladder& ladder,
                            const FitOptions& opt = {}) {
    if (p.null_data) throw ParamError("blow-up fit is undefined for vanishing scattering data");
    const auto taus = ladder.taus();
    std::vector<double> errs;
    const auto vals = ladder_values(p, q1, q2, taus, opt.eval, &errs);
    BlowupFit f = fit_ladder(p, q1, q2, taus, vals, opt.log_correction, opt.require_r2);
    f.errors = errs;
    return f;
}

// u(x0, t) / prediction on each rung
inline std::vector<double> ratio_to_leading(const ScatteringProfile& p, const std::vector<double>& taus,
                                            const EvalOptions& opt = {}) {
    if (p.null_data) throw ParamError("ratio to leading term is undefined for vanishing scattering data");
    if (p.kind.tag != ProfileKind::Unbounded) throw ParamError("ratio to leading term needs an Unbounded profile");
    const auto vals = ladder_values(p, 0, 0, taus, opt);
    std::vector<double> out(taus.size());
    for (std::size_t i = 0; i < taus.size(); ++i) out[i] = vals[i] / asymptotic_prediction(p, p.T - taus[i], 0, 0);
    return out;
}

inline double envelope_halfwidth(const ScatteringProfile& p) { return 4.0 * pi / (p.M - 1.0); }

// ---------------------------------------------------------------- toy model

// Single-integral heuristic model (not a solution of the PDE), by fixed-order Gauss-Kronrod panels.
// derivative = 0 gives the model itself, 1 its x-derivative.
inline cplx toy_model_u(const std::function<double(double)>& f1, double x, double t, double T, int derivative = 0) {
    if (!(t < T)) throw ParamError("toy model needs t < T");
    const double tau = T - t;
    auto integrand = [&](double y, bool imag) {
        const double f = f1(y);
        if (f == 0.0) return 0.0;
        const cplx z = f * std::exp(cplx(-t / (4.0 * y * y) - tau * y * y / 4.0, -x / (2.0 * y) - x * y / 2.0)) *
                       std::pow((y + 1.0 / y) / 2.0, 1 + derivative);
        return imag ? z.imag() : z.real();
    };
    using gk = boost::math::quadrature::gauss_kronrod<double, 61>;
    const double cut = 2.0 * std::sqrt(4.0 * 45.0 / tau);
    const double period = x != 0.0 ? 4.0 * pi / std::abs(x) : std::numeric_limits<double>::infinity();
    cplx total = 0.0;
    for (double a = 1.0; a < cut;) {
        const double w = std::min({0.25 * a, 0.5 * period, cut - a});
        total += cplx(gk::integrate([&](double y) { return integrand(y, false); }, a, a + w, 0),
                      gk::integrate([&](double y) { return integrand(y, true); }, a, a + w, 0));
        a += w;
    }
    // -sqrt3/(2 pi) for the model, sqrt3 i/(2 pi) for its x-derivative
    return derivative == 0 ? -sqrt3 / (2.0 * pi) * total : sqrt3 * I / (2.0 * pi) * total;
}

// ---------------------------------------------------------------- symmetry and norms

struct SymmetryReport {
    std::size_t samples = 0;
    double max_diff = 0.0;
    double far_dev = 0.0;   // |m - 1| at |k| = 1e6
    double near_dev = 0.0;  // |m - 1| at |k| = 1e-6
};

// distance of k from the rays where the kernel of m is singular, relative to |k|
inline double arc_clearance(cplx k) {
    const double r = std::abs(k);
    double best = std::numeric_limits<double>::infinity();
    auto ray = [&](double angle, double lo, double hi) {
        const cplx dir = std::polar(1.0, angle);
        const double s = std::clamp((k * std::conj(dir)).real(), lo, hi);
        best = std::min(best, std::abs(k - s * dir) / r);
    };
    ray(pi / 6, 2.0, 1e300);
    ray(7 * pi / 6, 2.0, 1e300);
    ray(-pi / 6, 0.0, 0.5);
    ray(5 * pi / 6, 0.0, 0.5);
    return best;
}

inline SymmetryReport symmetry_audit(const ScatteringProfile& p, double x, double t, std::size_t nk,
                                     std::uint64_t seed = 12345, double tol = 1e-12) {
    SymmetryReport rep;
    rep.samples = nk;
    auto grid = build_grid(p, t, tol, 1, GridPolicy::for_window(x - p.x0));
    const KernelOperator op = assemble(p, discretize(std::move(grid)), x, t);
    const NodeSolution sol = solve_nodes(op);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> lr(std::log(1e-2), std::log(1e2)), ang(-pi, pi);
    std::size_t done = 0;
    while (done < nk) {
        const cplx k = std::polar(std::exp(lr(rng)), ang(rng));
        if (arc_clearance(k) < 0.05 || arc_clearance(1.0 / k) < 0.05) continue;
        const cplx a = m_at(op, sol, k).value;
        const cplx b = m_at(op, sol, 1.0 / k).value;
        rep.max_diff = std::max(rep.max_diff, std::abs(a - b));
        ++done;
    }
    for (double ang0 : {0.0, pi / 2, pi, -pi / 2}) {
        rep.far_dev = std::max(rep.far_dev, std::abs(m_at(op, sol, std::polar(1e6, ang0)).value - 1.0));
        rep.near_dev = std::max(rep.near_dev, std::abs(m_at(op, sol, std::polar(1e-6, ang0)).value - 1.0));
    }
    return rep;
}

struct NormSample {
    double x = 0.0, t = 0.0;
    double norm_est = 0.0;
    std::vector<double> term_sups;
};

inline std::vector<NormSample> norm_audit(const ScatteringProfile& p, const std::vector<double>& xs,
                                          const std::vector<double>& ts, int terms = 10, double tol = 1e-10) {
    std::vector<NormSample> out;
    for (double t : ts)
        for (double x : xs) {
            auto grid = build_grid(p, t, tol, 1, GridPolicy::for_window(x - p.x0));
            const KernelOperator op = assemble(p, discretize(std::move(grid)), x, t, false);
            out.push_back({x, t, op.norm_est, term_sups(op, terms)});
        }
    return out;
}

// ---------------------------------------------------------------- independent oracles

// j-fold iterated integral of F1(k1) F(k1,k2) ... F(k_{j-1},k_j), j <= 3, by tensor Gauss-Legendre
// quadrature on its own log-spaced panels, using only the pointwise kernel functions.
inline cplx nested_quadrature_term(const ScatteringProfile& p, double x, double t, int j, double y_hi,
                                   int panels = 60, int n_gl = 30) {
    if (j < 1 || j > 3) throw ParamError("nested quadrature oracle covers j = 1..3");
    if (p.null_data) return 0.0;
    const GaussRule& rule = gauss_legendre(n_gl);
    std::vector<double> ys, ws;
    const double b0 = p.blend_start();
    // the blend gets uniform panels, the tail log-spaced ones
    const int nb = panels / 3;
    for (int i = 0; i < nb; ++i) {
        const double a = b0 + (p.y0 - b0) * i / nb, b = b0 + (p.y0 - b0) * (i + 1) / nb;
        for (std::size_t m = 0; m < rule.x.size(); ++m) {
            ys.push_back(0.5 * (a + b) + 0.5 * (b - a) * rule.x[m]);
            ws.push_back(0.5 * (b - a) * rule.w[m]);
        }
    }
    const int nt = panels - nb;
    for (int i = 0; i < nt; ++i) {
        const double a = p.y0 * std::pow(y_hi / p.y0, double(i) / nt);
        const double b = p.y0 * std::pow(y_hi / p.y0, double(i + 1) / nt);
        for (std::size_t m = 0; m < rule.x.size(); ++m) {
            ys.push_back(0.5 * (a + b) + 0.5 * (b - a) * rule.x[m]);
            ws.push_back(0.5 * (b - a) * rule.w[m]);
        }
    }
    struct Pt {
        cplx k, dk;
        double y;
        Branch br;
    };
    std::vector<Pt> pts;
    for (Branch br : {Branch::B2, Branch::B5})
        for (std::size_t i = 0; i < ys.size(); ++i) pts.push_back({ray_point(br, ys[i]), ws[i] * ray_direction(br), ys[i], br});
    const std::size_t n = pts.size();
    std::vector<cplx> f1w(n);
    for (std::size_t a = 0; a < n; ++a) f1w[a] = kernel_F1(p, x, t, pts[a].y, pts[a].br) * pts[a].dk;
    // v <- (int F(k_a, k1) v(k1) dk1)_a, applied j-1 times to the constant 1
    std::vector<cplx> v(n, 1.0);
    for (int level = 1; level < j; ++level) {
        std::vector<cplx> next(n);
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t a = 0; a < std::ptrdiff_t(n); ++a) {
            cplx acc = 0.0;
            for (std::size_t b = 0; b < n; ++b) acc += kernel_F(p, x, t, pts[a].k, pts[b].y, pts[b].br) * pts[b].dk * v[b];
            next[a] = acc;
        }
        v = std::move(next);
    }
    cplx total = 0.0;
    for (std::size_t a = 0; a < n; ++a) total += f1w[a] * v[a];
    return total;
}

// the j-th Nystrom term v^T A^{j-1} 1
inline cplx series_term(const KernelOperator& op, int j) {
    std::vector<std::vector<cplx>> S{op.F1w};
    for (int i = 1; i < j; ++i) S = op.apply_transpose(S);
    return detail::sum(S[0]);
}

// j=1 contribution to d^{q1}_x d^{q2}_t u read off the Nystrom discretisation
inline double series_leading(const KernelOperator& op, int q1, int q2) {
    cplx s = 0.0;
    for (std::size_t j = 0; j < op.size(); ++j)
        s += op.F1w[j] * std::pow(op.a_diag[j], q1 + 1) * std::pow(op.b_diag[j], q2);
    return (-I * sqrt3 * s).real();
}

inline double rel_diff(cplx a, cplx b) {
    const double d = std::abs(a - b);
    if (d == 0.0) return 0.0;
    return d / std::max(std::abs(a), std::abs(b));
}

struct OracleReport {
    double x = 0.0, t = 0.0;
    std::vector<double> nested_rel;  // per j = 1..3
    double leading_rel = 0.0;
    double fd_x_rel = 0.0;
    double fd_t_rel = 0.0;
    double nested_max() const { return nested_rel.empty() ? 0.0 : *std::max_element(nested_rel.begin(), nested_rel.end()); }
};

// Fourth-order centred difference of u in x and in t against the multiplier derivatives.
inline std::pair<double, double> finite_difference_check(const ScatteringProfile& p, double x, double t, double h = 1e-3,
                                                         double tol = 1e-13) {
    if (!(t - 2.0 * h >= 0.0 && t + 2.0 * h < p.T)) throw ParamError("finite-difference stencil leaves [0, T)");
    EvalOptions o;
    o.tol = tol;
    const SolutionSample s = u_eval(p, x, t, 2, o);
    auto u = [&](double xx, double tt) { return u_eval(p, xx, tt, 0, o).value(0, 0); };
    auto d5 = [&](double fp1, double fm1, double fp2, double fm2) { return (8.0 * (fp1 - fm1) - (fp2 - fm2)) / (12.0 * h); };
    const double ux = d5(u(x + h, t), u(x - h, t), u(x + 2 * h, t), u(x - 2 * h, t));
    const double ut = d5(u(x, t + h), u(x, t - h), u(x, t + 2 * h), u(x, t - 2 * h));
    return {rel_diff(s.value(1, 0), ux), rel_diff(s.value(0, 1), ut)};
}

inline OracleReport oracle_audit(const ScatteringProfile& p, double x, double t, double tol = 1e-12) {
    if (!(t < p.T)) throw ParamError("oracle audit needs t < T");
    OracleReport rep;
    rep.x = x;
    rep.t = t;
    auto grid = build_grid(p, t, tol, 2, GridPolicy::for_window(x - p.x0));
    const double y_hi = grid.y_max;
    const KernelOperator op = assemble(p, discretize(std::move(grid)), x, t);
    for (int j = 1; j <= 3; ++j) rep.nested_rel.push_back(rel_diff(series_term(op, j), nested_quadrature_term(p, x, t, j, y_hi)));
    rep.leading_rel = rel_diff(series_leading(op, 0, 0), u_leading(p, x, t, 0, 0));
    std::tie(rep.fd_x_rel, rep.fd_t_rel) = finite_difference_check(p, x, t);
    return rep;
}

}  // namespace blowlab
