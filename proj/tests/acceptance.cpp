// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include <blowlab/blowlab.hpp>

using namespace blowlab;

namespace {

struct Limits {
    double residual_rel = 1e-6;
    double norm_slack = 1e-10;
    double term_factor = 1.01;
    int terms = 10;
    double symmetry = 1e-9;
    double normalisation = 1e-5;
    double exponent = 0.02;
    double drift = 0.02;
    double sup_variation = 0.01;
    double nested_rel = 1e-9;
    double fd_rel = 1e-6;
    double leading_rel = 1e-9;
};
const Limits lim;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double a) {
    char b[96];
    std::snprintf(b, sizeof b, f, a);
    return b;
}

ScatteringProfile standard_unbounded() { return build_profile(ProfileKind::unbounded(0.25), 1.0, 0.0, {}); }

Outcome exact_residual() {
    const auto p = standard_unbounded();
    const auto r = run_pde_suite(p, 1e-10, SuiteLimits{.pde_rel = lim.residual_rel});
    return {r.pass, r.summary};
}

Outcome kernel_norm() {
    const auto p = standard_unbounded();
    const auto s = norm_audit(p, norm_sample_xs(p), norm_sample_ts(p), 1, 1e-10);
    double worst = 0.0;
    for (auto& x : s) worst = std::max(worst, x.norm_est);
    return {s.size() == 25 && worst <= 1.0 / p.M + lim.norm_slack,
            "max norm_est " + fmt("%.4e", worst) + " over 25 samples, 1/M = " + fmt("%.4e", 1.0 / p.M)};
}

Outcome series_decay() {
    const auto p = standard_unbounded();
    const auto s = norm_audit(p, norm_sample_xs(p), norm_sample_ts(p), lim.terms, 1e-10);
    double worst = 0.0;
    bool ok = true;
    for (auto& x : s)
        for (int j = 1; j <= lim.terms; ++j) {
            const double ratio = x.term_sups[j - 1] / std::pow(p.M, -j);
            worst = std::max(worst, ratio);
            ok = ok && ratio <= lim.term_factor;
        }
    return {ok, "max over samples and j <= 10 of sup|term_j| * M^j = " + fmt("%.4e", worst)};
}

Outcome symmetry() {
    const auto p = standard_unbounded();
    const auto s = symmetry_audit(p, 0.5, 0.5, 100);
    return {s.samples == 100 && s.max_diff < lim.symmetry && s.far_dev < lim.normalisation &&
                s.near_dev < lim.normalisation,
            "max |m(k)-m(1/k)| " + fmt("%.3e", s.max_diff) + ", |m-1| " + fmt("%.3e", std::max(s.far_dev, s.near_dev))};
}

const std::vector<double>& ladder() {
    static const std::vector<double> t = Ladder{}.taus();
    return t;
}

Outcome exponent_recovery() {
    const auto p = standard_unbounded();
    const auto plain = fit_ladder(p, 0, 0, ladder(), ladder_values(p, 0, 0, ladder(), {}), true, false);
    const auto pl = build_profile(ProfileKind::unbounded(0.25), 1.0, 0.0, LogFamily{{1}, {1.0}, 0});
    const auto v = ladder_values(pl, 0, 0, ladder(), {});
    const auto corr = fit_ladder(pl, 0, 0, ladder(), v, true, false);
    const auto unc = fit_ladder(pl, 0, 0, ladder(), v, false, false);
    const bool ok = std::abs(plain.delta_hat - 0.25) <= lim.exponent && plain.r2 >= 0.99 &&
                    std::abs(corr.delta_hat - 0.25) <= lim.exponent && corr.r2 >= 0.99 &&
                    std::abs(unc.drift) >= lim.drift && std::abs(unc.delta_hat - 0.25) > lim.exponent;
    return {ok, "delta_hat " + fmt("%.4f", plain.delta_hat) + "; LOG p=1 corrected " + fmt("%.4f", corr.delta_hat) +
                    ", uncorrected " + fmt("%.4f", unc.delta_hat) + " with drift " + fmt("%.4f", unc.drift)};
}

Outcome leading_envelope() {
    const auto p = standard_unbounded();
    std::vector<double> errs;
    const auto v = ladder_values(p, 0, 0, ladder(), {}, &errs);
    const double half = envelope_halfwidth(p);
    bool ok = true;
    std::string d = "half-width " + fmt("%.4f", half) + ", ratios";
    for (std::size_t i = v.size() - 3; i < v.size(); ++i) {
        const double pred = asymptotic_prediction(p, p.T - ladder()[i], 0, 0);
        const double ratio = v[i] / pred;
        ok = ok && std::abs(ratio - 1.0) <= half + errs[i] / std::abs(pred);
        d += fmt(" %.4f", ratio);
    }
    return {ok, d};
}

Outcome wave_breaking() {
    const auto p = build_profile(ProfileKind::derivative_blowup(0, 0.3), 1.0, 0.0, {});
    std::vector<double> xs;
    for (int k = -10; k <= 10; ++k) xs.push_back(p.x0 + 0.05 * k);
    std::vector<double> running;
    double sup = 0.0;
    for (double tau : ladder()) {
        const auto cells = u_grid(p, xs, {p.T - tau}, 0);
        for (auto& c : cells) {
            if (!c.sample) return {false, "evaluation failed: " + c.error};
            sup = std::max(sup, std::abs(c.sample->value(0, 0)));
        }
        running.push_back(sup);
    }
    const std::size_t n = running.size();
    const double variation = (running[n - 1] - running[n - 3]) / running[n - 1];
    const auto f = fit_ladder(p, 1, 0, ladder(), ladder_values(p, 1, 0, ladder(), {}), true, false);
    const bool ok = variation < lim.sup_variation && std::abs(f.delta_hat - 0.3) <= lim.exponent && f.r2 >= 0.99 &&
                    f.sign_ok && f.expected_sign == -1;
    return {ok, "sup|u| " + fmt("%.6f", sup) + " (variation " + fmt("%.2e", variation) + "), u_x exponent " +
                    fmt("%.4f", f.delta_hat) + ", sign " + (f.sign_ok ? "ok" : "wrong")};
}

Outcome derivative_hierarchy() {
    const auto p = build_profile(ProfileKind::derivative_blowup(2, 0.2), 1.0, 0.0, {});
    std::string d;
    bool ok = true;
    SolutionSample atT;
    try {
        atT = u_eval(p, p.x0, p.T, 2);
    } catch (const Error& e) {
        return {false, std::string("t=T evaluation failed: ") + e.what()};
    }
    // approach to the t=T value along the three deepest rungs
    const auto& L = ladder();
    std::vector<SolutionSample> deep;
    for (std::size_t i = L.size() - 3; i < L.size(); ++i) deep.push_back(u_eval(p, p.x0, p.T - L[i], 2));
    for (auto o : orders_up_to(2)) {
        const double vT = atT.value(o.first, o.second);
        ok = ok && std::isfinite(vT);
        double prev = std::numeric_limits<double>::infinity();
        for (auto& s : deep) {
            const double gap = std::abs(s.value(o.first, o.second) - vT);
            ok = ok && gap < prev;
            prev = gap;
        }
    }
    d = "orders <= 2 finite at T and converging;";
    for (auto [q1, q2] : std::vector<Order>{{3, 0}, {1, 1}}) {
        const auto f = fit_ladder(p, q1, q2, L, ladder_values(p, q1, q2, L, {}), true, false);
        ok = ok && std::abs(f.delta_hat - 0.2) <= lim.exponent && f.r2 >= 0.99 && f.sign_ok;
        d += " (" + std::to_string(q1) + "," + std::to_string(q2) + ") " + fmt("%.4f", f.delta_hat);
    }
    return {ok, d};
}

Outcome oracle_equivalence() {
    const auto p = standard_unbounded();
    const auto o = oracle_audit(p, 0.7, 0.5);
    const bool ok = o.nested_max() < lim.nested_rel && o.fd_x_rel < lim.fd_rel && o.fd_t_rel < lim.fd_rel &&
                    o.leading_rel < lim.leading_rel;
    return {ok, "nested " + fmt("%.2e", o.nested_max()) + ", finite differences " +
                    fmt("%.2e", std::max(o.fd_x_rel, o.fd_t_rel)) + ", single integral " + fmt("%.2e", o.leading_rel)};
}

Outcome degenerate() {
    const auto p = null_profile();
    bool ok = true;
    for (auto& c : u_grid(p, {-3.0, 0.0, 2.5}, {0.0, 0.5, 0.99}, 4))
        for (auto& [o, v] : c.sample->derivs) ok = ok && v == 0.0;
    for (const auto& r : run_suites(p, {"pde", "symmetry", "norms", "oracles"}, 1e-10)) ok = ok && r.pass;
    const auto rep = pde_residual(p, residual_points(p));
    for (auto& q : rep.points) ok = ok && q.residual == 0.0;
    return {ok, "u identically zero, suites pass, residual exactly zero"};
}

}  // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
        {"exact-solution residual", exact_residual},
        {"kernel norm bound", kernel_norm},
        {"series term decay", series_decay},
        {"inversion symmetry and normalisation", symmetry},
        {"blow-up exponent recovery", exponent_recovery},
        {"leading-term envelope", leading_envelope},
        {"wave breaking", wave_breaking},
        {"derivative hierarchy", derivative_hierarchy},
        {"oracle equivalence", oracle_equivalence},
        {"degenerate closure", degenerate},
    };
    int failed = 0, idx = 0;
    for (auto& [name, fn] : criteria) {
        ++idx;
        Stopwatch sw;
        Outcome o;
        try {
            o = fn();
        } catch (const Error& e) {
            o = {false, std::string(e.kind()) + ": " + e.what()};
        }
        failed += o.pass ? 0 : 1;
        std::printf("%s  %2d %-38s %s  [%.1fs]\n", o.pass ? "PASS" : "FAIL", idx, name, o.detail.c_str(), sw.seconds());
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", int(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
