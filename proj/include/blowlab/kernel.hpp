#pragma once

#include <cmath>
#include <fstream>
#include <memory>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "contour.hpp"

namespace blowlab {

inline cplx theta21(double x, double t, cplx k) {
    if (k == cplx(0.0)) throw DomainError("theta21 undefined at k = 0");
    return (x / 2.0) * (k - 1.0 / k) + (t / 4.0) * (1.0 / (k * k) - k * k);
}

struct Multipliers {
    cplx a, b;
};

inline Multipliers multipliers(double y, Branch br) {
    const double s = br == Branch::B2 ? 1.0 : -1.0;
    return {cplx(0.0, s * (y + 1.0 / y) / 2.0), cplx((y * y - 1.0 / (y * y)) / 4.0, 0.0)};
}

// Column factor shared by F and F1: everything except the k-dependence of F.
// Includes e^{(x-x0) w k1/2} e^{-(T-t) y^2/4} f~0(w k1) e^{-x/(2 w k1) + t/(4 (w k1)^2)} / (2 pi i).
inline cplx column_factor(const ScatteringProfile& p, double x, double t, double y, Branch br) {
    const double f = p.f1(y);
    if (f == 0.0) return 0.0;
    const double s = br == Branch::B2 ? 1.0 : -1.0;
    const double re = -(p.T - t) * y * y / 4.0 - t / (4.0 * y * y);
    const double im = s * ((x - p.x0) * y / 2.0 + x / (2.0 * y));
    const cplx f0 = br == Branch::B2 ? rtilde_imag(y) * f : cplx(f);
    return std::exp(cplx(re, im)) * f0 / (2.0 * pi * I);
}

// x- and t-independent part of F(k, k1): w^2/(w^2 k1 - k) - (w/k1^2)/(1/(w^2 k1) - k)
inline cplx kernel_geometry(cplx k, cplx k1) {
    const cplx d1 = omega2 * k1 - k;
    const cplx d2 = 1.0 / (omega2 * k1) - k;
    if (std::abs(d1) < 1e-13 || std::abs(d2) < 1e-13) throw SingularityError("kernel denominator vanishes");
    if (k == cplx(0.0)) return 0.0;
    const cplx kk = std::abs(k) < 1.0 ? 1.0 / k : k;  // symmetric in k <-> 1/k
    return (omega * k1 - 1.0 / k1) / ((omega2 * k1 - kk) * (omega2 * k1 - 1.0 / kk));
}

inline cplx kernel_F(const ScatteringProfile& p, double x, double t, cplx k, double y1, Branch br) {
    const cplx c = column_factor(p, x, t, y1, br);
    const cplx g = kernel_geometry(k, ray_point(br, y1));
    return c * g;
}

inline cplx kernel_F1(const ScatteringProfile& p, double x, double t, double y1, Branch br) {
    const cplx c = column_factor(p, x, t, y1, br);
    const cplx k1 = ray_point(br, y1);
    return -c * (omega2 - omega / (k1 * k1));
}

// Nodes on both rays (B2 ascending, then B5 ascending) and the x-independent kernel data.
struct Discretization {
    QuadratureGrid grid;
    std::size_t n = 0;  // nodes per ray
    std::vector<double> y, w;
    std::vector<Branch> branch;
    std::vector<cplx> k, kinv, dk, alpha, beta;
    std::vector<double> gsup;  // sup over nodes k_i of |g(k_i, k_j)|
    std::optional<Eigen::MatrixXcd> G;

    std::size_t size() const { return y.size(); }

    cplx g(std::size_t i, std::size_t j) const {
        if (G) return (*G)(i, j);
        return g_raw(i, j);
    }
    cplx g_raw(std::size_t i, std::size_t j) const {
        return alpha[j] / ((beta[j] - k[i]) * (beta[j] - kinv[i]));
    }
};

inline constexpr std::size_t default_dense_limit = 2400;

inline std::shared_ptr<const Discretization> discretize(QuadratureGrid grid,
                                                        std::size_t dense_limit = default_dense_limit) {
    auto d = std::make_shared<Discretization>();
    d->n = grid.size();
    const std::size_t N = 2 * d->n;
    d->y.resize(N);
    d->w.resize(N);
    d->branch.resize(N);
    d->k.resize(N);
    d->kinv.resize(N);
    d->dk.resize(N);
    d->alpha.resize(N);
    d->beta.resize(N);
    for (std::size_t i = 0; i < N; ++i) {
        const Branch br = i < d->n ? Branch::B2 : Branch::B5;
        const std::size_t m = i % d->n;
        d->y[i] = grid.nodes[m];
        d->w[i] = grid.weights[m];
        d->branch[i] = br;
        d->k[i] = ray_point(br, d->y[i]);
        d->kinv[i] = 1.0 / d->k[i];
        d->dk[i] = d->w[i] * ray_direction(br);
        d->alpha[i] = omega * d->k[i] - d->kinv[i];
        d->beta[i] = omega2 * d->k[i];
    }
    d->gsup.assign(N, 0.0);
    if (N <= dense_limit) {
        d->G.emplace(N, N);
        for (std::size_t j = 0; j < N; ++j)
            for (std::size_t i = 0; i < N; ++i) (*d->G)(i, j) = d->g_raw(i, j);
        for (std::size_t j = 0; j < N; ++j) d->gsup[j] = d->G->col(j).cwiseAbs().maxCoeff();
    } else {
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t j = 0; j < std::ptrdiff_t(N); ++j) {
            double s = 0.0;
            for (std::size_t i = 0; i < N; ++i) s = std::max(s, std::abs(d->g_raw(i, j)));
            d->gsup[j] = s;
        }
    }
    d->grid = std::move(grid);
    return d;
}

struct KernelOperator {
    std::shared_ptr<const Discretization> disc;
    double x = 0.0, t = 0.0;
    std::uint64_t profile_hash = 0;
    std::vector<cplx> col;  // column factor times dk_j
    std::vector<cplx> F1w;
    std::vector<cplx> a_diag, b_diag;
    double norm_est = 0.0;
    std::optional<Eigen::MatrixXcd> A;

    std::size_t size() const { return col.size(); }
    bool dense() const { return A.has_value(); }

    cplx entry(std::size_t i, std::size_t j) const { return A ? (*A)(i, j) : disc->g(i, j) * col[j]; }

    // out = A v
    std::vector<cplx> apply(const std::vector<cplx>& v) const {
        const std::size_t N = size();
        std::vector<cplx> out(N);
        if (A) {
            Eigen::Map<const Eigen::VectorXcd> vm(v.data(), N);
            Eigen::Map<Eigen::VectorXcd>(out.data(), N) = (*A) * vm;
            return out;
        }
        std::vector<cplx> cv(N);
        for (std::size_t j = 0; j < N; ++j) cv[j] = col[j] * v[j];
        const Discretization& d = *disc;
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t i = 0; i < std::ptrdiff_t(N); ++i) {
            cplx s = 0.0;
            for (std::size_t j = 0; j < N; ++j) s += d.g_raw(i, j) * cv[j];
            out[i] = s;
        }
        return out;
    }

    // out_r = A^T s_r for every state s_r, sharing the kernel evaluations
    std::vector<std::vector<cplx>> apply_transpose(const std::vector<std::vector<cplx>>& S) const {
        const std::size_t N = size(), m = S.size();
        std::vector<std::vector<cplx>> out(m, std::vector<cplx>(N));
        if (m == 0) return out;
        if (A) {
            Eigen::MatrixXcd Sm(N, m);
            for (std::size_t r = 0; r < m; ++r) Sm.col(r) = Eigen::Map<const Eigen::VectorXcd>(S[r].data(), N);
            const Eigen::MatrixXcd R = A->transpose() * Sm;
            for (std::size_t r = 0; r < m; ++r) Eigen::Map<Eigen::VectorXcd>(out[r].data(), N) = R.col(r);
            return out;
        }
        const Discretization& d = *disc;
#pragma omp parallel
        {
            std::vector<cplx> gcol(N);
#pragma omp for schedule(static)
            for (std::ptrdiff_t j = 0; j < std::ptrdiff_t(N); ++j) {
                if (col[j] == cplx(0.0)) continue;
                for (std::size_t i = 0; i < N; ++i) gcol[i] = d.g_raw(i, j);
                for (std::size_t r = 0; r < m; ++r) {
                    cplx s = 0.0;
                    const cplx* sr = S[r].data();
                    for (std::size_t i = 0; i < N; ++i) s += gcol[i] * sr[i];
                    out[r][j] = s * col[j];
                }
            }
        }
        return out;
    }
};

inline KernelOperator assemble(const ScatteringProfile& p, std::shared_ptr<const Discretization> disc, double x,
                               double t, bool check_norm = true) {
    if (!(t >= 0.0 && t <= p.T)) throw ParamError("assemble needs 0 <= t <= T");
    KernelOperator op;
    const Discretization& d = *disc;
    const std::size_t N = d.size();
    op.x = x;
    op.t = t;
    op.profile_hash = profile_hash(p);
    op.col.resize(N);
    op.F1w.resize(N);
    op.a_diag.resize(N);
    op.b_diag.resize(N);
    double norm = 0.0;
    for (std::size_t j = 0; j < N; ++j) {
        const cplx c = column_factor(p, x, t, d.y[j], d.branch[j]);
        op.col[j] = c * d.dk[j];
        op.F1w[j] = -c * (omega2 - omega / (d.k[j] * d.k[j])) * d.dk[j];
        const Multipliers mu = multipliers(d.y[j], d.branch[j]);
        op.a_diag[j] = mu.a;
        op.b_diag[j] = mu.b;
        norm += std::abs(op.col[j]) * d.gsup[j];
    }
    op.norm_est = norm;
    if (d.G) op.A.emplace(*d.G * Eigen::Map<const Eigen::VectorXcd>(op.col.data(), N).asDiagonal());
    op.disc = std::move(disc);
    if (check_norm && norm > 1.0 / p.M + 10.0 * op.disc->grid.tol)
        throw NormBoundViolation("kernel norm estimate " + std::to_string(norm) + " exceeds 1/M");
    return op;
}

inline KernelOperator assemble(const ScatteringProfile& p, const QuadratureGrid& grid, double x, double t) {
    return assemble(p, discretize(grid), x, t);
}

inline void save_operator(const KernelOperator& op, const std::string& path) {
    if (!op.A) throw CacheError("only dense operators are cached");
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw CacheError("cannot write operator cache " + path);
    using detail::put_le;
    const std::size_t N = op.size();
    put_le(os, op.profile_hash);
    put_le(os, op.disc->grid.hash());
    put_le(os, op.x);
    put_le(os, op.t);
    put_le(os, std::uint64_t(N));
    auto put_c = [&](cplx z) {
        put_le(os, z.real());
        put_le(os, z.imag());
    };
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < N; ++j) put_c((*op.A)(i, j));
    for (auto z : op.F1w) put_c(z);
    for (auto z : op.a_diag) put_c(z);
    for (auto z : op.b_diag) put_c(z);
    for (auto z : op.col) put_c(z);
    put_le(os, op.norm_est);
    if (!os) throw CacheError("failed writing operator cache " + path);
}

inline KernelOperator load_operator(const std::string& path, std::shared_ptr<const Discretization> disc,
                                    std::uint64_t expect_profile_hash) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw CacheError("cannot open operator cache " + path);
    using detail::get_le;
    KernelOperator op;
    op.profile_hash = get_le<std::uint64_t>(is);
    if (op.profile_hash != expect_profile_hash) throw CacheError("operator cache belongs to another profile");
    if (get_le<std::uint64_t>(is) != disc->grid.hash()) throw CacheError("operator cache belongs to another grid");
    op.x = get_le<double>(is);
    op.t = get_le<double>(is);
    const auto N = get_le<std::uint64_t>(is);
    if (N != disc->size()) throw CacheError("operator cache size mismatch");
    auto get_c = [&] {
        const double re = get_le<double>(is);
        const double im = get_le<double>(is);
        return cplx(re, im);
    };
    op.A.emplace(N, N);
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < N; ++j) (*op.A)(i, j) = get_c();
    auto read_vec = [&](std::vector<cplx>& v) {
        v.resize(N);
        for (auto& z : v) z = get_c();
    };
    read_vec(op.F1w);
    read_vec(op.a_diag);
    read_vec(op.b_diag);
    read_vec(op.col);
    op.norm_est = get_le<double>(is);
    is.peek();
    if (!is.eof()) throw CacheError("operator cache has trailing bytes");
    if (!std::isfinite(op.norm_est) || !op.A->allFinite()) throw CacheError("operator cache contents corrupted");
    op.disc = std::move(disc);
    return op;
}

}  // namespace blowlab
