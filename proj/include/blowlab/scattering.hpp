#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>

#include "common.hpp"

namespace blowlab {

// Products of powers of iterated logarithms, (-1)^sigma * prod (log_{r_j} s)^{a_j}.
struct LogFamily {
    std::vector<int> rvec;
    std::vector<double> avec;
    int sigma = 0;

    std::size_t p() const { return rvec.size(); }

    void validate() const {
        if (rvec.size() != avec.size()) throw ParamError("LOG family: rvec and avec lengths differ");
        for (std::size_t j = 0; j < rvec.size(); ++j) {
            if (rvec[j] < 1) throw ParamError("LOG family: r entries must be positive integers");
            if (j > 0 && rvec[j] <= rvec[j - 1]) throw ParamError("LOG family: rvec must be strictly increasing");
            if (!(avec[j] >= 0.0) || !std::isfinite(avec[j])) throw ParamError("LOG family: avec entries must be finite and >= 0");
        }
        if (sigma != 0 && sigma != 1) throw ParamError("LOG family: sigma must be 0 or 1");
    }

    // exp_r(0): the iterated logs up to r_p are positive exactly above this value
    double threshold() const {
        if (rvec.empty()) return 0.0;
        double v = 0.0;
        for (int r = 0; r < rvec.back(); ++r) v = std::exp(v);
        return v;
    }

    double sign() const { return sigma ? -1.0 : 1.0; }

    double eval(double s) const {
        if (rvec.empty()) return sign();
        if (!(s > threshold())) throw DomainError("LOG evaluated at or below its domain threshold: s=" + std::to_string(s));
        double prod = sign();
        double lg = s;
        int level = 0;
        for (std::size_t j = 0; j < rvec.size(); ++j) {
            while (level < rvec[j]) {
                lg = std::log(lg);
                ++level;
            }
            if (!(lg > 0.0)) throw DomainError("iterated logarithm non-positive at s=" + std::to_string(s));
            prod *= std::pow(lg, avec[j]);
        }
        return prod;
    }
};

inline double log_eval(const LogFamily& log, double s) { return log.eval(s); }

// C-infinity step: 0 for s<=0, 1 for s>=1
inline double smooth_step(double s) {
    if (s <= 0.0) return 0.0;
    if (s >= 1.0) return 1.0;
    const double a = std::exp(-1.0 / s);
    const double b = std::exp(-1.0 / (1.0 - s));
    return a / (a + b);
}

struct ProfileKind {
    enum Tag { Unbounded, DerivativeBlowup } tag = Unbounded;
    double delta = 0.25;
    int q = 0;

    static ProfileKind unbounded(double delta) { return {Unbounded, delta, 0}; }
    static ProfileKind derivative_blowup(int q, double delta) { return {DerivativeBlowup, delta, q}; }

    double eta() const { return tag == Unbounded ? -2.0 + 2.0 * delta : -q - 3.0 + 2.0 * delta; }
    double default_M() const {
        return tag == Unbounded ? 2.0 * (1.0 + 4.0 * pi) : 2.0 * (1.0 + std::ldexp(1.0, q + 3) * pi);
    }
    const char* name() const { return tag == Unbounded ? "unbounded" : "derivative_blowup"; }

    void validate() const {
        if (tag == Unbounded) {
            if (!(delta > 0.0 && delta < 1.0)) throw ParamError("Unbounded profile needs delta in (0,1)");
        } else {
            if (q < 0) throw ParamError("DerivativeBlowup profile needs q >= 0");
            if (!(delta > 0.0 && delta < 0.5)) throw ParamError("DerivativeBlowup profile needs delta in (0,1/2)");
        }
    }
};

struct ScatteringProfile {
    ProfileKind kind;
    double T = 1.0;
    double x0 = 0.0;
    double eta = -1.5;
    LogFamily log;
    double M = 2.0 * (1.0 + 4.0 * pi);
    double y0 = 4.0;
    std::string blend = "std_c_infinity";
    bool null_data = false;  // f1 identically zero, for degenerate checks

    // f1 vanishes below this ordinate; 2 unless the LOG domain starts later
    double blend_start() const { return std::max(2.0, log.threshold()); }

    // y^eta LOG(y), the tail shape
    double tail(double y) const { return std::pow(y, eta) * log.eval(y); }

    double f1(double y) const {
        if (null_data) return 0.0;
        const double b0 = blend_start();
        if (y <= b0) return 0.0;
        if (y >= y0) return tail(y);
        return tail(y) * smooth_step((y - b0) / (y0 - b0));
    }
};

inline cplx rtilde(cplx k) {
    const cplx den = 1.0 - omega2 * k * k;
    if (std::abs(den) < 1e-13) throw PoleError("rtilde pole at k = +-omega^2");
    return (omega2 - k * k) / den;
}

// r~(iy) written so that the unit modulus survives rounding
inline cplx rtilde_imag(double y) {
    const cplx num = omega2 + y * y;
    const cplx den = 1.0 + omega2 * (y * y);
    return num / den;
}

inline double f1_eval(const ScatteringProfile& p, double y) { return p.f1(y); }

inline cplx f2_eval(const ScatteringProfile& p, double y) {
    const double f = p.f1(y);
    if (f == 0.0) return 0.0;
    return rtilde_imag(y) * f;
}

// r1 at k = i/y
inline cplx r1_eval(const ScatteringProfile& p, double y) {
    const double f = p.f1(y);
    if (f == 0.0) return 0.0;
    return f * std::exp(cplx(-p.T * y * y / 4.0, p.x0 * y / 2.0));
}

namespace detail {

using gl20 = boost::math::quadrature::gauss<double, 20>;

template <class F>
double gl_panel(F&& f, double a, double b) {
    return gl20::integrate(f, a, b);
}

// integral of |tail(y)| * y^power over [a, inf) via y = a e^s
inline double tail_moment(const ScatteringProfile& p, double a, double power) {
    const double e = p.eta + power;
    if (!(e < -1.0)) return std::numeric_limits<double>::infinity();
    double total = 0.0;
    const double s_max = std::max(0.0, 690.0 - std::log(a));
    const double ds = std::min(1.0, 4.0 / std::abs(e + 1.0));
    double s = 0.0;
    for (; s < s_max; s += ds) {
        const double piece = gl_panel(
            [&](double u) {
                const double y = a * std::exp(u);
                return std::abs(p.tail(y)) * std::pow(y, power) * y;
            },
            s, s + ds);
        total += piece;
        if (std::abs(piece) <= 1e-17 * std::abs(total)) return total;
    }
    const double Y = a * std::exp(s);
    return total + std::abs(p.tail(Y)) * std::pow(Y, power + 1.0) / std::abs(e + 1.0);
}

}  // namespace detail

// integral over [1, inf) of |f1(i/y)| y^power, optionally weighted by e^{-tau y^2/4}
inline double f1_moment(const ScatteringProfile& p, double power, double tau = 0.0) {
    if (p.null_data) return 0.0;
    const double b0 = p.blend_start();
    const int panels = 64;
    double blend = 0.0;
    const double h = (p.y0 - b0) / panels;
    auto weight = [&](double y) { return std::exp(-tau * y * y / 4.0) * std::pow(y, power); };
    for (int i = 0; i < panels; ++i)
        blend += detail::gl_panel([&](double y) { return std::abs(p.f1(y)) * weight(y); }, b0 + i * h, b0 + (i + 1) * h);
    if (tau <= 0.0) return blend + detail::tail_moment(p, p.y0, power);
    double tail = 0.0;
    double a = p.y0;
    double width = 1.0;
    const double cut = 2.0 * std::sqrt(40.0 / tau);
    while (a < cut || a < 2.0 * p.y0) {
        const double piece = detail::gl_panel([&](double y) { return std::abs(p.tail(y)) * weight(y); }, a, a + width);
        tail += piece;
        a += width;
        width = std::min(width * 1.5, std::max(1.0, 0.25 / std::sqrt(tau)));
    }
    return blend + tail;
}

// integral of |f1(i/y)|/y dy, bounded by 1/M for admissible profiles
inline double l1_budget(const ScatteringProfile& p) { return f1_moment(p, -1.0); }

inline ScatteringProfile build_profile(ProfileKind kind, double T, double x0, LogFamily log,
                                       double M_override = 0.0, double y0_override = 0.0) {
    kind.validate();
    log.validate();
    if (!(T > 0.0) || !std::isfinite(T)) throw ParamError("blow-up time T must be positive");
    if (!std::isfinite(x0)) throw ParamError("x0 must be finite");
    ScatteringProfile p;
    p.kind = kind;
    p.T = T;
    p.x0 = x0;
    p.eta = kind.eta();
    p.log = std::move(log);
    p.M = M_override > 0.0 ? M_override : kind.default_M();
    if (p.M < 2.0) throw ParamError("M must be at least 2");
    if (!std::isfinite(p.log.threshold())) throw ParamError("LOG family threshold overflows double range");

    if (y0_override > 0.0) {
        if (!(y0_override > p.blend_start())) throw ParamError("y0 must exceed the start of the blend region");
        p.y0 = y0_override;
        return p;
    }
    const double budget = 1.0 / p.M;
    auto l1_at = [&](double y0) {
        p.y0 = y0;
        return l1_budget(p);
    };
    double lo = std::max(4.0, p.blend_start() + 2.0);
    double hi = 1e9;
    if (l1_at(lo) <= budget) {
        p.y0 = lo;
        return p;
    }
    if (l1_at(hi) > budget) throw ConvergenceError("no y0 <= 1e9 satisfies the L1 budget 1/M");
    for (int it = 0; it < 200 && hi / lo > 1.0 + 1e-14; ++it) {
        const double mid = std::sqrt(lo * hi);
        (l1_at(mid) <= budget ? hi : lo) = mid;
    }
    p.y0 = hi;
    return p;
}

inline ScatteringProfile null_profile(ProfileKind kind = ProfileKind::unbounded(0.25), double T = 1.0, double x0 = 0.0) {
    ScatteringProfile p = build_profile(kind, T, x0, LogFamily{}, 0.0, 4.0);
    p.null_data = true;
    return p;
}

struct ValidationReport {
    double l1 = 0.0;
    double budget = 0.0;
    bool l1_ok = false;
    double sup_before = 0.0;
    bool decreasing_before = false;
    bool increasing_after = false;
    std::vector<std::string> messages;

    bool ok() const { return l1_ok && decreasing_before && increasing_after; }
};

inline ValidationReport validate_profile(const ScatteringProfile& p) {
    ValidationReport r;
    r.budget = 1.0 / p.M;
    try {
        r.l1 = l1_budget(p);
    } catch (const Error& e) {
        r.messages.push_back(std::string("L1 budget: ") + e.what());
        r.l1 = std::numeric_limits<double>::infinity();
    }
    r.l1_ok = r.l1 <= r.budget * (1.0 + 1e-12);
    if (!r.l1_ok) r.messages.push_back("L1 budget exceeds 1/M");
    if (p.null_data) {
        r.decreasing_before = r.increasing_after = true;
        return r;
    }
    // e^{t y^2/4}|r1(i/y)| must decay for t<T and grow for t>T
    const double hi = std::max(10.0 * p.y0, 4.0 * std::sqrt(4.0 * 50.0 / (1e-3 * p.T)));
    const int n = 400;
    std::vector<double> before(n), after(n);
    // logarithms of e^{t y^2/4}|r1(i/y)|, which under- and overflow long before the grid tail
    for (int i = 0; i < n; ++i) {
        const double y = p.y0 * std::pow(hi / p.y0, double(i) / (n - 1));
        const double log_r1 = std::log(std::abs(p.f1(y))) - p.T * y * y / 4.0;
        const double tb = p.T * (1.0 - 1e-3), ta = p.T * (1.0 + 1e-3);
        before[i] = tb * y * y / 4.0 + log_r1;
        after[i] = ta * y * y / 4.0 + log_r1;
    }
    r.sup_before = std::exp(*std::max_element(before.begin(), before.end()));
    r.decreasing_before = std::isfinite(r.sup_before);
    r.increasing_after = true;
    for (int i = n - 8; i < n; ++i) {
        r.decreasing_before = r.decreasing_before && before[i] < before[i - 1];
        r.increasing_after = r.increasing_after && after[i] > after[i - 1];
    }
    if (!r.decreasing_before) r.messages.push_back("blow-up-time check: no decay just before T");
    if (!r.increasing_after) r.messages.push_back("blow-up-time check: no growth just after T");
    return r;
}

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// canonical key=value form; its hash keys all caches
inline std::string canonical_string(const ScatteringProfile& p) {
    std::ostringstream os;
    os << "kind=" << p.kind.name() << '\n';
    os << "delta=" << format_double(p.kind.delta) << '\n';
    os << "q=" << p.kind.q << '\n';
    os << "T=" << format_double(p.T) << '\n';
    os << "x0=" << format_double(p.x0) << '\n';
    os << "p=" << p.log.p() << '\n';
    os << "rvec=";
    for (std::size_t j = 0; j < p.log.p(); ++j) os << (j ? "," : "") << p.log.rvec[j];
    os << "\navec=";
    for (std::size_t j = 0; j < p.log.p(); ++j) os << (j ? "," : "") << format_double(p.log.avec[j]);
    os << "\nsigma=" << p.log.sigma << '\n';
    os << "M=" << format_double(p.M) << '\n';
    os << "y0=" << format_double(p.y0) << '\n';
    os << "blend=" << p.blend << '\n';
    os << "data=" << (p.null_data ? "zero" : "standard") << '\n';
    return os.str();
}

inline std::uint64_t profile_hash(const ScatteringProfile& p) { return fnv1a(canonical_string(p)); }

}  // namespace blowlab
