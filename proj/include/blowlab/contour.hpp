#pragma once

#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <boost/math/special_functions/legendre.hpp>

#include "scattering.hpp"

namespace blowlab {

enum class Branch { B2, B5 };

inline cplx ray_direction(Branch b) {
    // e^{-i pi/6} and e^{5 pi i/6}
    return b == Branch::B2 ? cplx(sqrt3 / 2, -0.5) : cplx(-sqrt3 / 2, 0.5);
}

inline cplx ray_point(Branch b, double y) { return y * ray_direction(b); }

// omega * ray_point, exactly +-iy
inline cplx omega_k(Branch b, double y) { return b == Branch::B2 ? cplx(0.0, y) : cplx(0.0, -y); }

struct GaussRule {
    std::vector<double> x, w;  // on [-1, 1], ascending
};

inline const GaussRule& gauss_legendre(int n) {
    static std::mutex mu;
    static std::map<int, GaussRule> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;
    if (n < 2) throw ParamError("Gauss-Legendre rule needs at least 2 nodes");
    auto zeros = boost::math::legendre_p_zeros<double>(n);  // non-negative half
    GaussRule r;
    auto weight = [n](double x) {
        const double d = boost::math::legendre_p_prime(n, x);
        return 2.0 / ((1.0 - x * x) * d * d);
    };
    for (auto z = zeros.rbegin(); z != zeros.rend(); ++z) {
        if (*z == 0.0) continue;
        r.x.push_back(-*z);
        r.w.push_back(weight(*z));
    }
    for (double z : zeros) {
        r.x.push_back(z);
        r.w.push_back(weight(z));
    }
    return cache.emplace(n, std::move(r)).first->second;
}

struct GridPolicy {
    int n_gl = 20;
    double first_width = 0.5;
    double ratio = 1.5;
    double max_width = std::numeric_limits<double>::infinity();

    // keeps at least 8 nodes per period of e^{i d y/2}
    static GridPolicy for_window(double dx, int n_gl = 20) {
        GridPolicy g;
        g.n_gl = n_gl;
        if (std::abs(dx) > 0.0) g.max_width = n_gl * (4.0 * pi / std::abs(dx)) / 8.0;
        return g;
    }
    double nodes_per_period(double dx) const {
        if (dx == 0.0) return std::numeric_limits<double>::infinity();
        return n_gl / max_width * 4.0 * pi / std::abs(dx);
    }
};

struct QuadratureGrid {
    std::vector<double> nodes;
    std::vector<double> weights;
    double y_start = 2.0;
    double y_max = 2.0;
    double tol = 1e-10;
    double t_ref = 0.0;
    int q_max = 1;
    GridPolicy policy;
    std::uint64_t profile_hash = 0;

    std::size_t size() const { return nodes.size(); }

    std::uint64_t hash() const {
        std::uint64_t h = fnv1a_bytes(nodes.data(), nodes.size() * sizeof(double));
        return fnv1a_bytes(weights.data(), weights.size() * sizeof(double), h);
    }
};

// one contour side; quadratic apply cost makes larger grids impractical
inline constexpr std::size_t max_grid_nodes = 200'000;

// estimate of the integral over [Y, inf) of y^power |LOG(y)| y^eta e^{-tau y^2/4}
inline double truncation_tail(const ScatteringProfile& p, double tau, double power, double Y) {
    if (p.null_data) return 0.0;
    const double e = p.eta + power;
    const double pointwise = std::abs(p.tail(Y)) * std::pow(Y, power) * std::exp(-tau * Y * Y / 4.0);
    double len = std::numeric_limits<double>::infinity();
    if (e < -1.0) len = Y / std::abs(e + 1.0);
    if (tau > 0.0) {
        const double rate = tau * Y / 2.0 - std::max(e, 0.0) / Y;
        if (rate > 0.0) len = std::min(len, 1.0 / rate);
    }
    return pointwise * len;
}

// smallest panel end past y0 whose truncation tail is below tol
inline QuadratureGrid build_grid(const ScatteringProfile& p, double t, double tol, int q_max,
                                 GridPolicy policy = {}) {
    if (!(t >= 0.0 && t <= p.T)) throw ParamError("build_grid needs 0 <= t <= T");
    if (!(tol > 0.0 && tol <= 1e-2)) throw ParamError("build_grid needs tol in (0, 1e-2]");
    if (q_max < 1) throw ParamError("build_grid needs q_max >= 1");
    const double tau = p.T - t;
    if (tau <= 0.0 && !(p.eta + q_max < -1.0) && !p.null_data)
        throw IntegrabilityError("integrand y^q_max f1 is not integrable at t=T");

    QuadratureGrid g;
    g.tol = tol;
    g.t_ref = t;
    g.q_max = q_max;
    g.policy = policy;
    g.profile_hash = profile_hash(p);
    g.y_start = p.blend_start();
    const GaussRule& rule = gauss_legendre(policy.n_gl);

    // At t=T the single-integral part of the tail is added in closed form by the caller, and the rest
    // carries an extra 1/y from m - 1 = O(1/k).
    const double budget_power = tau > 0.0 ? q_max : q_max - 1;
    double a = g.y_start;
    double width = policy.first_width;
    const double cap = 1e7;
    for (;;) {
        const double w = std::min(width, policy.max_width);
        const double b = a + w;
        for (std::size_t i = 0; i < rule.x.size(); ++i) {
            g.nodes.push_back(0.5 * (a + b) + 0.5 * w * rule.x[i]);
            g.weights.push_back(0.5 * w * rule.w[i]);
        }
        a = b;
        width *= policy.ratio;
        if (p.null_data) break;
        if (a >= p.y0 && truncation_tail(p, tau, budget_power, a) < tol) break;
        if (a > cap) throw BudgetError("grid truncation Y_max exceeds 1e7 for this tol and t");
        if (g.nodes.size() > max_grid_nodes) throw BudgetError("grid node count exceeds the evaluation budget");
    }
    g.y_max = a;
    return g;
}

// The grid cache stores little-endian doubles after a fixed header.
namespace detail {

inline constexpr std::uint64_t grid_magic = 0x31444952474c5742ULL;  // "BWLGRID1"
inline constexpr std::uint32_t grid_version = 1;

template <class T>
void put_le(std::ostream& os, T v) {
    unsigned char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
    os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <class T>
T get_le(std::istream& is) {
    unsigned char buf[sizeof(T)];
    if (!is.read(reinterpret_cast<char*>(buf), sizeof(T))) throw CacheError("cache file truncated");
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
    T v;
    std::memcpy(&v, buf, sizeof(T));
    return v;
}

}  // namespace detail

inline void save_grid(const QuadratureGrid& g, const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw CacheError("cannot write grid cache " + path);
    using detail::put_le;
    put_le(os, detail::grid_magic);
    put_le(os, detail::grid_version);
    put_le(os, g.profile_hash);
    put_le(os, g.t_ref);
    put_le(os, g.tol);
    put_le(os, std::int32_t(g.q_max));
    put_le(os, std::uint64_t(g.nodes.size()));
    for (double v : g.nodes) put_le(os, v);
    for (double v : g.weights) put_le(os, v);
    put_le(os, g.y_start);
    put_le(os, g.y_max);
    put_le(os, std::int32_t(g.policy.n_gl));
    put_le(os, g.policy.first_width);
    put_le(os, g.policy.ratio);
    put_le(os, g.policy.max_width);
    if (!os) throw CacheError("failed writing grid cache " + path);
}

inline QuadratureGrid load_grid(const std::string& path, std::uint64_t expect_profile_hash) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw CacheError("cannot open grid cache " + path);
    using detail::get_le;
    if (get_le<std::uint64_t>(is) != detail::grid_magic) throw CacheError("bad grid cache magic");
    if (get_le<std::uint32_t>(is) != detail::grid_version) throw CacheError("unsupported grid cache version");
    QuadratureGrid g;
    g.profile_hash = get_le<std::uint64_t>(is);
    if (g.profile_hash != expect_profile_hash) throw CacheError("grid cache belongs to another profile");
    g.t_ref = get_le<double>(is);
    g.tol = get_le<double>(is);
    g.q_max = get_le<std::int32_t>(is);
    const auto n = get_le<std::uint64_t>(is);
    if (n > 40'000'000) throw CacheError("grid cache count implausible");
    g.nodes.resize(n);
    g.weights.resize(n);
    for (auto& v : g.nodes) v = get_le<double>(is);
    for (auto& v : g.weights) v = get_le<double>(is);
    g.y_start = get_le<double>(is);
    g.y_max = get_le<double>(is);
    g.policy.n_gl = get_le<std::int32_t>(is);
    g.policy.first_width = get_le<double>(is);
    g.policy.ratio = get_le<double>(is);
    g.policy.max_width = get_le<double>(is);
    for (std::size_t i = 0; i < n; ++i)
        if (!std::isfinite(g.nodes[i]) || !(g.weights[i] > 0.0) || (i && g.nodes[i] <= g.nodes[i - 1]))
            throw CacheError("grid cache contents corrupted");
    is.peek();
    if (!is.eof()) throw CacheError("grid cache has trailing bytes");
    return g;
}

// Key of a grid request: everything build_grid depends on.
inline std::string grid_cache_name(const ScatteringProfile& p, double t, double tol, int q_max, const GridPolicy& g) {
    std::string key = canonical_string(p) + "|t=" + format_double(t) + "|tol=" + format_double(tol) +
                      "|q=" + std::to_string(q_max) + "|gl=" + std::to_string(g.n_gl) + "|w=" + format_double(g.first_width) +
                      "|r=" + format_double(g.ratio) + "|cap=" + format_double(g.max_width);
    return hex64(fnv1a(key)) + ".bwlgrid";
}

// build_grid through a cache directory; unreadable or mismatched cache files are rebuilt and overwritten
inline QuadratureGrid obtain_grid(const ScatteringProfile& p, double t, double tol, int q_max, const GridPolicy& policy,
                                  const std::string& cache_dir) {
    if (cache_dir.empty()) return build_grid(p, t, tol, q_max, policy);
    namespace fs = std::filesystem;
    const fs::path path = fs::path(cache_dir) / grid_cache_name(p, t, tol, q_max, policy);
    if (fs::exists(path)) {
        try {
            QuadratureGrid g = load_grid(path.string(), profile_hash(p));
            if (g.t_ref == t && g.tol == tol && g.q_max == q_max) return g;
        } catch (const CacheError&) {
        }
    }
    QuadratureGrid g = build_grid(p, t, tol, q_max, policy);
    std::error_code ec;
    fs::create_directories(cache_dir, ec);
    // write then rename so concurrent readers never see a partial file
    const fs::path tmp = path.string() + ".tmp" + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
    try {
        save_grid(g, tmp.string());
        fs::rename(tmp, path, ec);
    } catch (const CacheError&) {
        fs::remove(tmp, ec);
    }
    return g;
}

}  // namespace blowlab
