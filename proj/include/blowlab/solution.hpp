#pragma once

#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/ooura_fourier_integrals.hpp>

#include "series.hpp"

namespace blowlab {

struct EvalOptions {
    double tol = 1e-10;
    SeriesMode mode = SeriesMode::automatic(1e-14);
    double window = 20.0;
    bool enforce_window = true;
    int n_gl = 20;
    std::size_t dense_limit = default_dense_limit;
    bool want_leading = false;
    std::string cache_dir;  // empty: no grid cache
};

struct ErrorBudget {
    double trunc = 0.0;
    double quad = 0.0;
    double total() const { return trunc + quad; }
};

using Order = std::pair<int, int>;

struct SolutionSample {
    double x = 0.0, t = 0.0;
    std::map<Order, double> derivs;
    std::map<Order, ErrorBudget> err;
    std::map<Order, double> leading;
    std::size_t nodes = 0;
    double y_max = 0.0;
    double norm_est = 0.0;
    int j_used = 0;
    bool verified = true;  // inside the window and oscillations resolved

    double value(int q1, int q2) const {
        auto it = derivs.find({q1, q2});
        if (it == derivs.end()) throw ParamError("sample has no entry for the requested order");
        return it->second;
    }
};

// all (q1, q2) with q1 + 2 q2 <= q
inline std::vector<Order> orders_up_to(int q) {
    std::vector<Order> out;
    for (int q2 = 0; 2 * q2 <= q; ++q2)
        for (int q1 = 0; q1 + 2 * q2 <= q; ++q1) out.push_back({q1, q2});
    return out;
}

inline void check_time(const ScatteringProfile& p, double t, int order_q) {
    if (!(t >= 0.0 && t <= p.T)) throw ParamError("evaluation time must lie in [0, T]");
    if (t < p.T || p.null_data) return;
    if (p.kind.tag != ProfileKind::DerivativeBlowup)
        throw IntegrabilityError("u is unbounded at t=T for an Unbounded profile");
    if (order_q > p.kind.q)
        throw IntegrabilityError("derivatives of order above q do not extend to t=T");
}

// bound on the quadrature truncation of the j=1 integrand of d^{q1}_x d^{q2}_t u
inline double quad_error(const ScatteringProfile& p, double t, int q1, int q2, double y_max) {
    const double tail = truncation_tail(p, p.T - t, q1 + 1 + 2 * q2, y_max);
    return sqrt3 * 1.25 / (2.0 * pi) * tail * p.M / (p.M - 1.0);
}

// At t=T beyond Y only m - 1 is dropped; |m(k) - 1| <= 1.2/|k| * sum_j |col_j| * M/(M-1) there.
inline double quad_error_at_T(const ScatteringProfile& p, int q1, int q2, double y_max, double col_mass) {
    const double tail = truncation_tail(p, 0.0, q1 + 2 * q2, y_max);
    return sqrt3 * 2.0 * 1.25 / (2.0 * pi) * tail * 1.2 * col_mass * p.M / (p.M - 1.0);
}

inline double u_leading(const ScatteringProfile& p, double x, double t, int q1, int q2);

// sum over both rays of int_Y^inf F1(k1) a^{q1+1} b^{q2} dk1, the part of the j=1 term beyond the grid
inline cplx j1_tail(const ScatteringProfile& p, double x, double t, int q1, int q2, double Y) {
    if (p.null_data) return 0.0;
    const double dx = x - p.x0;
    cplx total = 0.0;
    for (Branch br : {Branch::B2, Branch::B5}) {
        const double s = br == Branch::B2 ? 1.0 : -1.0;
        // integrand without its e^{i s dx y/2} oscillation
        auto h = [&](double y) {
            const Multipliers mu = multipliers(y, br);
            return kernel_F1(p, x, t, y, br) * std::exp(cplx(0.0, -s * dx * y / 2.0)) * std::pow(mu.a, q1 + 1) *
                   std::pow(mu.b, q2) * ray_direction(br);
        };
        if (dx == 0.0) {
            // y = Y e^u turns the power-law decay into exponential decay
            using gk = boost::math::quadrature::gauss_kronrod<double, 61>;
            cplx part = 0.0;
            for (double u = 0.0; u < 200.0; u += 1.0) {
                auto piece = [&](bool im) {
                    return gk::integrate(
                        [&](double v) {
                            const double y = Y * std::exp(v);
                            const cplx z = h(y) * y;
                            return im ? z.imag() : z.real();
                        },
                        u, u + 1.0, 0);
                };
                const cplx d(piece(false), piece(true));
                part += d;
                if (std::abs(d) < 1e-17 * std::abs(part)) break;
            }
            total += part;
        } else {
            // int_0^inf h(Y+r) e^{i w (Y+r)} dr with w = s dx/2, by Ooura's double-exponential Fourier rules
            const double w = s * dx / 2.0;
            boost::math::quadrature::ooura_fourier_cos<double> fc;
            boost::math::quadrature::ooura_fourier_sin<double> fs;
            const double aw = std::abs(w), sg = w > 0.0 ? 1.0 : -1.0;
            auto re = [&](double r) { return h(Y + r).real(); };
            auto im = [&](double r) { return h(Y + r).imag(); };
            const double cr = fc.integrate(re, aw).first, ci = fc.integrate(im, aw).first;
            const double sr = fs.integrate(re, aw).first, si = fs.integrate(im, aw).first;
            // e^{i w r} = cos(|w| r) + i sg sin(|w| r)
            const cplx inner = cplx(cr, ci) + I * sg * cplx(sr, si);
            total += std::exp(cplx(0.0, w * Y)) * inner;
        }
    }
    return total;
}

inline SolutionSample u_eval(const ScatteringProfile& p, double x, double t, int order_q,
                             const EvalOptions& opt = {}) {
    if (order_q < 0) throw ParamError("order must be non-negative");
    const double dx = x - p.x0;
    SolutionSample s;
    s.x = x;
    s.t = t;
    if (std::abs(dx) > opt.window) {
        if (opt.enforce_window) throw WindowError("|x - x0| outside the validated window");
        s.verified = false;
    }
    check_time(p, t, order_q);
    const auto ords = orders_up_to(order_q);
    if (p.null_data) {
        for (auto o : ords) {
            s.derivs[o] = 0.0;
            s.err[o] = {};
            if (opt.want_leading && t < p.T) s.leading[o] = 0.0;
        }
        return s;
    }
    const GridPolicy policy = GridPolicy::for_window(dx, opt.n_gl);
    auto grid = obtain_grid(p, t, opt.tol, order_q + 1, policy, opt.cache_dir);
    s.y_max = grid.y_max;
    if (policy.nodes_per_period(dx) < 8.0 * (1.0 - 1e-12)) s.verified = false;
    auto disc = discretize(std::move(grid), opt.dense_limit);
    const KernelOperator op = assemble(p, disc, x, t);
    s.nodes = op.size();
    s.norm_est = op.norm_est;
    const DerivativeTable tab = derivative_table(op, order_q + 1, order_q / 2, opt.mode, &p, order_q + 1);
    const bool at_T = !(t < p.T);
    double col_mass = 0.0;
    if (at_T)
        for (std::size_t j = 0; j < op.size(); ++j) col_mass += std::abs(op.col[j]);
    for (auto o : ords) {
        const SeriesResult& r = tab.at(o.first + 1, o.second);
        cplx D = r.value;
        if (at_T) D += j1_tail(p, x, t, o.first, o.second, s.y_max);
        const cplx z = -I * sqrt3 * D;
        if (std::abs(z.imag()) > 1e-9 * (1.0 + std::abs(z.real())))
            throw RealnessError("imaginary residue " + std::to_string(z.imag()) + " breaks realness of u");
        s.derivs[o] = z.real();
        s.err[o] = {sqrt3 * r.trunc_bound, at_T ? quad_error_at_T(p, o.first, o.second, s.y_max, col_mass)
                                                : quad_error(p, t, o.first, o.second, s.y_max)};
        s.j_used = r.j_used;
        if (opt.want_leading && t < p.T) s.leading[o] = u_leading(p, x, t, o.first, o.second);
    }
    return s;
}

// Explicit single-integral j=1 contribution, by fixed-order Gauss-Kronrod on its own panels.
inline double u_leading(const ScatteringProfile& p, double x, double t, int q1, int q2) {
    if (!(t < p.T)) throw ParamError("u_leading needs t < T");
    if (p.null_data) return 0.0;
    const double tau = p.T - t;
    const double dx = x - p.x0;
    const cplx rot = std::pow(cplx(0.0, -1.0), q1);
    auto integrand = [&](double y) {
        const double f = p.f1(y);
        if (f == 0.0) return 0.0;
        const double amp = std::exp(-tau * y * y / 4.0 - t / (4.0 * y * y)) *
                           std::pow((y + 1.0 / y) / 2.0, q1 + 1) * std::pow((y * y - 1.0 / (y * y)) / 4.0, q2);
        const cplx phase = std::exp(cplx(0.0, -dx * y / 2.0 - x / (2.0 * y)));
        return amp * (rot * phase * f * (omega + omega2 / (y * y))).real();
    };
    using gk = boost::math::quadrature::gauss_kronrod<double, 61>;
    double total = 0.0;
    auto piece = [&](double a, double b) { return gk::integrate(integrand, a, b, 0); };
    const double b0 = p.blend_start();
    const int nb = 32;
    for (int i = 0; i < nb; ++i) total += piece(b0 + (p.y0 - b0) * i / nb, b0 + (p.y0 - b0) * (i + 1) / nb);
    const double period = dx != 0.0 ? 4.0 * pi / std::abs(dx) : std::numeric_limits<double>::infinity();
    double a = p.y0;
    for (int it = 0; it < 10'000'000; ++it) {
        const double w = std::min(0.25 * a, 0.5 * period);
        total += piece(a, a + w);
        a += w;
        if (truncation_tail(p, tau, q1 + 1 + 2 * q2, a) < 1e-18 * std::max(std::abs(total), 1e-300)) break;
    }
    return -sqrt3 / pi * total;
}

// Leading asymptotics at x0 as t -> T.
inline double asymptotic_prediction(const ScatteringProfile& p, double t, int q1, int q2) {
    if (!(t < p.T)) throw ParamError("asymptotic prediction needs t < T");
    const double ell = 2.0 / std::sqrt(p.T - t);
    const double logv = p.log.eval(ell);
    auto I = [](double e) { return std::tgamma((e + 2.0) / 2.0) / 2.0; };
    if (p.kind.tag == ProfileKind::Unbounded) {
        if (q1 != 0 || q2 != 0) throw ParamError("Unbounded prediction covers u itself only");
        return sqrt3 / (4.0 * pi) * std::pow(ell, p.eta + 2.0) * logv * I(p.eta);
    }
    const int q = p.kind.q;
    if (q1 + 2 * q2 != q + 1) throw ParamError("prediction covers derivatives of order q+1 only");
    const double re = (std::pow(cplx(0.0, -1.0), q1) * omega).real();
    return -(sqrt3 * re / (std::ldexp(1.0, q + 2) * pi)) * std::pow(ell, p.eta + q + 3.0) * logv * I(p.eta + q + 1.0);
}

// n = (m(w k), m(w^2 k), m(k))
inline std::array<cplx, 3> n_assemble(const KernelOperator& op, const NodeSolution& sol, cplx k) {
    return {m_at(op, sol, omega * k).value, m_at(op, sol, omega2 * k).value, m_at(op, sol, k).value};
}

inline std::array<cplx, 3> n_assemble(const KernelOperator& op, cplx k) {
    return n_assemble(op, solve_nodes(op), k);
}

struct GridCell {
    double x = 0.0, t = 0.0;
    std::optional<SolutionSample> sample;
    std::string error_kind;
    std::string error;
};

// row-major x then t
inline std::vector<GridCell> u_grid(const ScatteringProfile& p, const std::vector<double>& xs,
                                    const std::vector<double>& ts, int order_q, const EvalOptions& opt = {}) {
    std::vector<GridCell> cells(xs.size() * ts.size());
    for (std::size_t i = 0; i < xs.size(); ++i)
        for (std::size_t j = 0; j < ts.size(); ++j) {
            cells[i * ts.size() + j].x = xs[i];
            cells[i * ts.size() + j].t = ts[j];
        }
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t c = 0; c < std::ptrdiff_t(cells.size()); ++c) {
        GridCell& cell = cells[c];
        EvalOptions o = opt;
        o.enforce_window = false;
        try {
            cell.sample = u_eval(p, cell.x, cell.t, order_q, o);
        } catch (const Error& e) {
            cell.error_kind = e.kind();
            cell.error = e.what();
        }
    }
    return cells;
}

}  // namespace blowlab
