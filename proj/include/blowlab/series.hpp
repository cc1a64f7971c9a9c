#pragma once

#include <cmath>
#include <map>
#include <utility>
#include <vector>

#include <Eigen/LU>

#include "kernel.hpp"

namespace blowlab {

struct SeriesMode {
    enum Kind { Neumann, Direct, Auto } kind = Auto;
    int jmax = 40;
    // Neumann stops early once the tail bound is below max(stop_abs, stop_rel*|value|)
    double stop_abs = 0.0;
    double stop_rel = 0.0;

    static SeriesMode neumann(int jmax = 40) { return {Neumann, jmax, 0.0, 0.0}; }
    static SeriesMode direct() { return {Direct, 0, 0.0, 0.0}; }
    static SeriesMode automatic(double stop_rel = 1e-14) { return {Auto, 60, 0.0, stop_rel}; }
};

struct SeriesResult {
    cplx value = 0.0;
    int j_used = 0;  // -1 for a direct solve
    double trunc_bound = 0.0;
    double quad_tol = 0.0;

    bool direct() const { return j_used < 0; }
};

// above this size a few Neumann sweeps beat one LU factorisation
inline constexpr std::size_t auto_direct_limit = 1000;

namespace detail {

inline bool use_direct(const KernelOperator& op, const SeriesMode& mode) {
    if (mode.kind == SeriesMode::Direct) {
        if (!op.dense()) throw BudgetError("direct mode needs a dense operator; grid too large");
        return true;
    }
    return mode.kind == SeriesMode::Auto && op.dense() && op.size() <= auto_direct_limit;
}

inline void guard_norm(const KernelOperator& op) {
    if (!(op.norm_est < 1.0)) throw DivergenceGuard("kernel norm estimate >= 1, Neumann series may diverge");
}

inline cplx sum(const std::vector<cplx>& v) {
    cplx s = 0.0;
    for (auto z : v) s += z;
    return s;
}

inline double norm1(const std::vector<cplx>& v) {
    double s = 0.0;
    for (auto z : v) s += std::abs(z);
    return s;
}

inline double norm_inf(const std::vector<cplx>& v) {
    double s = 0.0;
    for (auto z : v) s = std::max(s, std::abs(z));
    return s;
}

inline Eigen::PartialPivLU<Eigen::MatrixXcd> factor(const KernelOperator& op) {
    Eigen::MatrixXcd IA = -*op.A;
    IA.diagonal().array() += 1.0;
    return Eigen::PartialPivLU<Eigen::MatrixXcd>(IA);
}

inline double binom(int n, int k) {
    double r = 1.0;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

}  // namespace detail

inline SeriesResult m1_series(const KernelOperator& op, SeriesMode mode = SeriesMode::automatic()) {
    detail::guard_norm(op);
    SeriesResult res;
    res.quad_tol = op.disc->grid.tol;
    const double rho = op.norm_est;
    if (detail::use_direct(op, mode)) {
        auto lu = detail::factor(op);
        const auto N = Eigen::Index(op.size());
        const Eigen::VectorXcd one = Eigen::VectorXcd::Ones(N);
        const Eigen::VectorXcd X = lu.solve(one);
        Eigen::Map<const Eigen::VectorXcd> v(op.F1w.data(), N);
        res.value = (v.transpose() * X)(0);
        const Eigen::VectorXcd r = X - *op.A * X - one;
        res.trunc_bound = detail::norm1(op.F1w) * r.cwiseAbs().maxCoeff() / (1.0 - rho);
        res.j_used = -1;
        return res;
    }
    std::vector<std::vector<cplx>> S{op.F1w};
    int j = 1;
    for (;; ++j) {
        res.value += detail::sum(S[0]);
        S = op.apply_transpose(S);
        res.trunc_bound = detail::norm1(S[0]) / (1.0 - rho);
        const double target = std::max(mode.stop_abs, mode.stop_rel * std::abs(res.value));
        if (j >= mode.jmax || (target > 0.0 && res.trunc_bound <= target)) break;
    }
    res.j_used = j;
    return res;
}

// sup over nodes of the j-th term A^j 1 of m on the contour, j = 1..J
inline std::vector<double> term_sups(const KernelOperator& op, int J) {
    std::vector<double> out;
    std::vector<cplx> v(op.size(), 1.0);
    for (int j = 1; j <= J; ++j) {
        v = op.apply(v);
        out.push_back(detail::norm_inf(v));
    }
    return out;
}

// m on the nodes: X = (I - A)^{-1} 1, with a bound on the discarded tail
struct NodeSolution {
    std::vector<cplx> X;
    double trunc_bound = 0.0;
    int j_used = 0;
};

inline NodeSolution solve_nodes(const KernelOperator& op, SeriesMode mode = SeriesMode::automatic()) {
    detail::guard_norm(op);
    NodeSolution s;
    const std::size_t N = op.size();
    const double rho = op.norm_est;
    if (detail::use_direct(op, mode)) {
        auto lu = detail::factor(op);
        const Eigen::VectorXcd one = Eigen::VectorXcd::Ones(N);
        const Eigen::VectorXcd X = lu.solve(one);
        s.X.assign(X.data(), X.data() + N);
        const Eigen::VectorXcd r = X - *op.A * X - one;
        s.trunc_bound = r.cwiseAbs().maxCoeff() / (1.0 - rho);
        s.j_used = -1;
        return s;
    }
    s.X.assign(N, 1.0);
    std::vector<cplx> u(N, 1.0);
    int j = 1;
    for (;; ++j) {
        u = op.apply(u);
        for (std::size_t i = 0; i < N; ++i) s.X[i] += u[i];
        s.trunc_bound = detail::norm_inf(op.apply(u)) / (1.0 - rho);
        const double target = std::max(mode.stop_abs, mode.stop_rel);
        if (j >= mode.jmax || (target > 0.0 && s.trunc_bound <= target)) break;
    }
    s.j_used = j;
    return s;
}

// m(k) = 1 + sum_j g(k, k_j) col_j X_j
inline SeriesResult m_at(const KernelOperator& op, const NodeSolution& sol, cplx k) {
    SeriesResult r;
    r.quad_tol = op.disc->grid.tol;
    const Discretization& d = *op.disc;
    cplx s = 1.0;
    double mass = 0.0;
    for (std::size_t j = 0; j < op.size(); ++j) {
        if (op.col[j] == cplx(0.0)) continue;
        const cplx term = kernel_geometry(k, d.k[j]) * op.col[j];
        s += term * sol.X[j];
        mass += std::abs(term);
    }
    r.value = s;
    r.trunc_bound = mass * sol.trunc_bound;
    r.j_used = sol.j_used;
    return r;
}

inline SeriesResult m_at(const KernelOperator& op, cplx k, SeriesMode mode = SeriesMode::automatic()) {
    return m_at(op, solve_nodes(op, mode), k);
}

// Moment integrals I_p = int e^{-(T-t) y^2/4} y^p |f1(i/y)| dy evaluated on the grid plus its tail estimate.
inline double grid_moment(const ScatteringProfile& p, const QuadratureGrid& g, double t, double power) {
    const double tau = p.T - t;
    double s = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double y = g.nodes[i];
        s += g.weights[i] * std::exp(-tau * y * y / 4.0) * std::pow(y, power) * std::abs(p.f1(y));
    }
    return s + truncation_tail(p, tau, power, g.y_max);
}

// Sum over j > J of the per-term bound for d^{q1}_x d^{q2}_t m^(1)_j with q = q1 + 2 q2.
inline double tail_bound(const ScatteringProfile& p, const QuadratureGrid& g, double t, int q1, int q2, int J) {
    if (p.null_data) return 0.0;
    const int q = q1 + 2 * q2;
    const double M = p.M;
    const double Iq = grid_moment(p, g, t, q);
    double total = Iq * std::pow(M, -J) / (1.0 - 1.0 / M);
    if (q >= 1) {
        const double Iq1 = std::pow(grid_moment(p, g, t, q - 1), q);
        for (int j = J + 1; j < J + 100000; ++j) {
            const double term = (std::pow(double(j), q) - 1.0) * std::pow(M, -(j - q)) * Iq1;
            total += term;
            if (term <= 1e-18 * total || term == 0.0) break;
        }
    }
    return total;
}

struct DerivativeTable {
    double x = 0.0, t = 0.0;
    std::map<std::pair<int, int>, SeriesResult> entries;

    const SeriesResult& at(int q1, int q2) const {
        auto it = entries.find({q1, q2});
        if (it == entries.end()) throw ParamError("derivative table has no entry for the requested order");
        return it->second;
    }
};

// D(r1, r2) = d^{r1}_x d^{r2}_t m^(1) for all r1 <= Q1, r2 <= Q2 with r1 + 2 r2 <= max_weight (< 0: no cap).
// The profile, when given, adds the analytic tail bound and the t=T integrability check.
inline DerivativeTable derivative_table(const KernelOperator& op, int Q1, int Q2,
                                        SeriesMode mode = SeriesMode::automatic(),
                                        const ScatteringProfile* profile = nullptr, int max_weight = -1) {
    if (Q1 < 0 || Q2 < 0) throw ParamError("derivative orders must be non-negative");
    detail::guard_norm(op);
    const std::size_t N = op.size();
    const int W = Q2 + 1;
    const int S = (Q1 + 1) * W;
    auto idx = [W](int r1, int r2) { return r1 * W + r2; };
    const double rho = op.norm_est;
    // lower orders of an active state are active too, so the recursions below stay closed
    auto on = [max_weight](int r1, int r2) { return max_weight < 0 || r1 + 2 * r2 <= max_weight; };

    if (profile && op.t >= profile->T) {
        for (int r1 = 0; r1 <= Q1; ++r1)
            for (int r2 = 0; r2 <= Q2; ++r2)
                if ((r1 || r2) && on(r1, r2) && !(profile->eta + r1 + 2 * r2 < -1.0) && !profile->null_data)
                    throw IntegrabilityError("moment integral diverges at t=T for the requested derivative order");
    }

    // powers a^{s1} b^{s2} per node
    std::vector<std::vector<cplx>> pw(S, std::vector<cplx>(N));
    for (int s1 = 0; s1 <= Q1; ++s1)
        for (int s2 = 0; s2 <= Q2; ++s2)
            for (std::size_t i = 0; i < N; ++i)
                pw[idx(s1, s2)][i] = std::pow(op.a_diag[i], s1) * std::pow(op.b_diag[i], s2);

    DerivativeTable tab;
    tab.x = op.x;
    tab.t = op.t;
    std::vector<cplx> value(S, 0.0);
    std::vector<double> bound(S, 0.0);
    int j_used = -1;

    if (detail::use_direct(op, mode)) {
        auto lu = detail::factor(op);
        const Eigen::MatrixXcd& A = *op.A;
        std::vector<Eigen::VectorXcd> X(S);
        double resid = 0.0;
        for (int n1 = 0; n1 <= Q1; ++n1)
            for (int n2 = 0; n2 <= Q2; ++n2) {
                if (!on(n1, n2)) continue;
                Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(N);
                if (n1 == 0 && n2 == 0) rhs.setOnes();
                Eigen::VectorXcd acc = Eigen::VectorXcd::Zero(N);
                for (int s1 = 0; s1 <= n1; ++s1)
                    for (int s2 = 0; s2 <= n2; ++s2) {
                        if (!s1 && !s2) continue;
                        const double c = detail::binom(n1, s1) * detail::binom(n2, s2);
                        Eigen::Map<const Eigen::VectorXcd> w(pw[idx(s1, s2)].data(), N);
                        acc += c * w.cwiseProduct(X[idx(n1 - s1, n2 - s2)]);
                    }
                rhs += A * acc;
                X[idx(n1, n2)] = lu.solve(rhs);
                const Eigen::VectorXcd r = X[idx(n1, n2)] - A * X[idx(n1, n2)] - rhs;
                const double scale = std::max(1.0, rhs.cwiseAbs().maxCoeff());
                resid = std::max(resid, r.cwiseAbs().maxCoeff() / scale);
            }
        Eigen::Map<const Eigen::VectorXcd> v(op.F1w.data(), N);
        for (int r1 = 0; r1 <= Q1; ++r1)
            for (int r2 = 0; r2 <= Q2; ++r2) {
                if (!on(r1, r2)) continue;
                cplx s = 0.0;
                double mag = 0.0;
                for (int s1 = 0; s1 <= r1; ++s1)
                    for (int s2 = 0; s2 <= r2; ++s2) {
                        const double c = detail::binom(r1, s1) * detail::binom(r2, s2);
                        Eigen::Map<const Eigen::VectorXcd> w(pw[idx(s1, s2)].data(), N);
                        const Eigen::VectorXcd vw = v.cwiseProduct(w);
                        s += c * (vw.transpose() * X[idx(r1 - s1, r2 - s2)])(0);
                        mag += c * vw.cwiseAbs().sum() * X[idx(r1 - s1, r2 - s2)].cwiseAbs().maxCoeff();
                    }
                value[idx(r1, r2)] = s;
                bound[idx(r1, r2)] = mag * resid / (1.0 - rho);
            }
    } else {
        // Neumann moment recursion
        std::vector<std::vector<cplx>> St(S);
        for (int r = 0; r < S; ++r) {
            St[r].resize(N);
            for (std::size_t i = 0; i < N; ++i) St[r][i] = op.F1w[i] * pw[r][i];
        }
        // rho_s = max_i sum_k |A_ik| |a_k|^{s1} |b_k|^{s2}; majorises one step of the recursion in l1
        std::vector<double> rho_s(S, 0.0);
        {
            std::vector<std::vector<double>> wabs(S, std::vector<double>(N));
            for (int r = 0; r < S; ++r)
                for (std::size_t i = 0; i < N; ++i) wabs[r][i] = std::abs(pw[r][i]) * std::abs(op.col[i]);
            const Discretization& d = *op.disc;
            for (std::size_t i = 0; i < N; ++i) {
                std::vector<double> acc(S, 0.0);
                for (std::size_t k = 0; k < N; ++k) {
                    if (op.col[k] == cplx(0.0)) continue;
                    const double gabs = std::abs(d.g(i, k));
                    for (int r = 0; r < S; ++r) acc[r] += gabs * wabs[r][k];
                }
                for (int r = 0; r < S; ++r) rho_s[r] = std::max(rho_s[r], acc[r]);
            }
        }
        int j = 1;
        for (;; ++j) {
            for (int r = 0; r < S; ++r) value[r] += detail::sum(St[r]);
            const auto P = op.apply_transpose(St);
            for (int r1 = 0; r1 <= Q1; ++r1)
                for (int r2 = 0; r2 <= Q2; ++r2) {
                    auto& out = St[idx(r1, r2)];
                    std::fill(out.begin(), out.end(), cplx(0.0));
                    if (!on(r1, r2)) continue;
                    for (int s1 = 0; s1 <= r1; ++s1)
                        for (int s2 = 0; s2 <= r2; ++s2) {
                            const double c = detail::binom(r1, s1) * detail::binom(r2, s2);
                            const auto& w = pw[idx(s1, s2)];
                            const auto& src = P[idx(r1 - s1, r2 - s2)];
                            for (std::size_t i = 0; i < N; ++i) out[i] += c * w[i] * src[i];
                        }
                }
            // scalar majorant of the remaining terms, started from the exact next-state norms
            std::vector<double> tnorm(S);
            for (int r = 0; r < S; ++r) tnorm[r] = detail::norm1(St[r]);
            std::vector<double> tail(tnorm);
            for (int it = 0; it < 100000; ++it) {
                std::vector<double> nxt(S, 0.0);
                for (int r1 = 0; r1 <= Q1; ++r1)
                    for (int r2 = 0; r2 <= Q2; ++r2) {
                        if (!on(r1, r2)) continue;
                        double acc = 0.0;
                        for (int s1 = 0; s1 <= r1; ++s1)
                            for (int s2 = 0; s2 <= r2; ++s2)
                                acc += detail::binom(r1, s1) * detail::binom(r2, s2) * rho_s[idx(s1, s2)] *
                                       tnorm[idx(r1 - s1, r2 - s2)];
                        nxt[idx(r1, r2)] = acc;
                    }
                bool done = true;
                for (int r = 0; r < S; ++r) {
                    tail[r] += nxt[r];
                    if (nxt[r] > 1e-17 * tail[r] && nxt[r] > 1e-300) done = false;
                    if (!std::isfinite(tail[r])) done = true;
                }
                tnorm = std::move(nxt);
                if (done) break;
            }
            bool converged = true;
            for (int r1 = 0; r1 <= Q1; ++r1)
                for (int r2 = 0; r2 <= Q2; ++r2) {
                    if (!on(r1, r2)) continue;
                    const int r = idx(r1, r2);
                    bound[r] = tail[r];
                    if (profile && !profile->null_data) {
                        const double analytic = tail_bound(*profile, op.disc->grid, op.t, r1, r2, j);
                        if (std::isfinite(analytic)) bound[r] = std::min(bound[r], analytic);
                    }
                    const double target = std::max(mode.stop_abs, mode.stop_rel * std::abs(value[r]));
                    if (!(target > 0.0 && bound[r] <= target)) converged = false;
                }
            if (j >= mode.jmax || converged) break;
        }
        j_used = j;
    }

    for (int r1 = 0; r1 <= Q1; ++r1)
        for (int r2 = 0; r2 <= Q2; ++r2) {
            if (!on(r1, r2)) continue;
            SeriesResult res;
            res.value = value[idx(r1, r2)];
            res.trunc_bound = bound[idx(r1, r2)];
            res.j_used = j_used;
            res.quad_tol = op.disc->grid.tol;
            tab.entries[{r1, r2}] = res;
        }
    return tab;
}

inline SeriesResult derivative_m1(const KernelOperator& op, int q1, int q2,
                                  SeriesMode mode = SeriesMode::automatic(),
                                  const ScatteringProfile* profile = nullptr) {
    return derivative_table(op, q1, q2, mode, profile).at(q1, q2);
}

}  // namespace blowlab
