#pragma once

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "verify.hpp"

namespace blowlab {

using json = nlohmann::ordered_json;

inline constexpr const char* config_schema = "blowlab.profile/1";
inline constexpr const char* csv_schema = "blowlab.table/1";
inline constexpr const char* manifest_schema = "blowlab.manifest/1";

// ---------------------------------------------------------------- profile configuration

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline double parse_real(const std::string& key, const std::string& v, int line) {
    std::size_t used = 0;
    double d = 0.0;
    try {
        d = std::stod(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != v.size() || !std::isfinite(d))
        throw ConfigError("line " + std::to_string(line) + ": key '" + key + "' expects a real number, got '" + v + "'");
    return d;
}

inline int parse_int(const std::string& key, const std::string& v, int line) {
    const double d = parse_real(key, v, line);
    if (d != std::floor(d) || std::abs(d) > 1e9)
        throw ConfigError("line " + std::to_string(line) + ": key '" + key + "' expects an integer, got '" + v + "'");
    return int(d);
}

inline std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    if (trim(v).empty()) return out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(trim(item));
    return out;
}

}  // namespace detail

// key = value lines; '#' starts a comment; lists are comma separated
inline ScatteringProfile parse_config(const std::string& text) {
    static const std::vector<std::string> known = {"kind", "delta", "q",     "T",  "x0",    "p",   "rvec",
                                                   "avec", "sigma", "M",     "y0", "blend", "data", "schema"};
    std::map<std::string, std::pair<std::string, int>> kv;
    std::istringstream in(text);
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        const auto hash = raw.find('#');
        const std::string body = detail::trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line) + ": expected key = value");
        const std::string key = detail::trim(body.substr(0, eq));
        const std::string val = detail::trim(body.substr(eq + 1));
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw ConfigError("line " + std::to_string(line) + ": unknown key '" + key + "'");
        if (kv.count(key)) throw ConfigError("line " + std::to_string(line) + ": duplicate key '" + key + "'");
        kv[key] = {val, line};
    }
    auto has = [&](const char* k) { return kv.count(k) > 0; };
    auto need = [&](const char* k) -> const std::pair<std::string, int>& {
        if (!has(k)) throw ConfigError(std::string("missing required key '") + k + "'");
        return kv.at(k);
    };
    auto real = [&](const char* k, double dflt) {
        return has(k) ? detail::parse_real(k, kv.at(k).first, kv.at(k).second) : dflt;
    };
    if (has("schema") && kv.at("schema").first != config_schema)
        throw ConfigError("line " + std::to_string(kv.at("schema").second) + ": key 'schema' must be " + config_schema);

    const auto& kind_s = need("kind");
    const double delta = detail::parse_real("delta", need("delta").first, need("delta").second);
    ProfileKind kind;
    if (kind_s.first == "unbounded") {
        if (has("q")) throw ConfigError("line " + std::to_string(kv.at("q").second) + ": key 'q' applies to derivative_blowup only");
        kind = ProfileKind::unbounded(delta);
    } else if (kind_s.first == "derivative_blowup") {
        kind = ProfileKind::derivative_blowup(detail::parse_int("q", need("q").first, need("q").second), delta);
    } else {
        throw ConfigError("line " + std::to_string(kind_s.second) + ": key 'kind' must be unbounded or derivative_blowup");
    }
    kind.validate();

    LogFamily log;
    if (has("rvec"))
        for (auto& r : detail::split_list(kv.at("rvec").first)) log.rvec.push_back(detail::parse_int("rvec", r, kv.at("rvec").second));
    if (has("avec"))
        for (auto& a : detail::split_list(kv.at("avec").first)) log.avec.push_back(detail::parse_real("avec", a, kv.at("avec").second));
    if (has("sigma")) log.sigma = detail::parse_int("sigma", kv.at("sigma").first, kv.at("sigma").second);
    if (log.sigma != 0 && log.sigma != 1)
        throw ConfigError("line " + std::to_string(kv.at("sigma").second) + ": key 'sigma' must be 0 or 1");
    if (has("p") && detail::parse_int("p", kv.at("p").first, kv.at("p").second) != int(log.rvec.size()))
        throw ConfigError("line " + std::to_string(kv.at("p").second) + ": key 'p' disagrees with the length of rvec");
    log.validate();

    if (has("blend") && kv.at("blend").first != "std_c_infinity")
        throw ConfigError("line " + std::to_string(kv.at("blend").second) + ": key 'blend' supports std_c_infinity only");
    const std::string data = has("data") ? kv.at("data").first : "standard";
    if (data != "standard" && data != "zero")
        throw ConfigError("line " + std::to_string(kv.at("data").second) + ": key 'data' must be standard or zero");

    const double T = real("T", 1.0), x0 = real("x0", 0.0);
    if (data == "zero") {
        ScatteringProfile p = null_profile(kind, T, x0);
        p.log = log;
        return p;
    }
    return build_profile(kind, T, x0, log, real("M", 0.0), real("y0", 0.0));
}

inline ScatteringProfile load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

// canonical key = value form; parse_config(write_config(p)) reproduces p
inline std::string write_config(const ScatteringProfile& p) {
    std::ostringstream os;
    os << "schema = " << config_schema << "\n";
    os << "kind = " << p.kind.name() << "\n";
    os << "delta = " << format_double(p.kind.delta) << "\n";
    if (p.kind.tag == ProfileKind::DerivativeBlowup) os << "q = " << p.kind.q << "\n";
    os << "T = " << format_double(p.T) << "\n";
    os << "x0 = " << format_double(p.x0) << "\n";
    os << "p = " << p.log.p() << "\n";
    os << "rvec = ";
    for (std::size_t i = 0; i < p.log.rvec.size(); ++i) os << (i ? ", " : "") << p.log.rvec[i];
    os << "\navec = ";
    for (std::size_t i = 0; i < p.log.avec.size(); ++i) os << (i ? ", " : "") << format_double(p.log.avec[i]);
    os << "\nsigma = " << p.log.sigma << "\n";
    if (!p.null_data) {
        os << "M = " << format_double(p.M) << "\n";
        os << "y0 = " << format_double(p.y0) << "\n";
    }
    os << "blend = " << p.blend << "\n";
    os << "data = " << (p.null_data ? "zero" : "standard") << "\n";
    return os.str();
}

inline json profile_json(const ScatteringProfile& p) {
    json j;
    j["kind"] = p.kind.name();
    j["delta"] = p.kind.delta;
    if (p.kind.tag == ProfileKind::DerivativeBlowup) j["q"] = p.kind.q;
    j["eta"] = p.eta;
    j["T"] = p.T;
    j["x0"] = p.x0;
    j["rvec"] = p.log.rvec;
    j["avec"] = p.log.avec;
    j["sigma"] = p.log.sigma;
    j["M"] = p.M;
    j["y0"] = p.y0;
    j["blend"] = p.blend;
    j["blend_start"] = p.blend_start();
    j["data"] = p.null_data ? "zero" : "standard";
    j["hash"] = hex64(profile_hash(p));
    return j;
}

// ---------------------------------------------------------------- cache directory

inline std::string cache_dir() {
    if (const char* env = std::getenv("BLOWLAB_CACHE_DIR"); env && *env) return env;
    if (const char* home = std::getenv("HOME"); home && *home) return std::string(home) + "/.cache/blowlab";
    return ".blowlab-cache";
}

struct CacheEntry {
    std::string name;
    std::uintmax_t bytes = 0;
};

inline bool is_cache_file(const std::filesystem::path& f) {
    const auto ext = f.extension().string();
    return ext == ".bwlgrid" || ext == ".bwlop";
}

inline std::vector<CacheEntry> cache_list(const std::string& dir) {
    std::vector<CacheEntry> out;
    std::error_code ec;
    if (!std::filesystem::is_directory(dir, ec)) return out;
    for (auto& e : std::filesystem::directory_iterator(dir))
        if (e.is_regular_file() && is_cache_file(e.path())) out.push_back({e.path().filename().string(), e.file_size()});
    std::sort(out.begin(), out.end(), [](auto& a, auto& b) { return a.name < b.name; });
    return out;
}

inline std::size_t cache_purge(const std::string& dir) {
    std::size_t n = 0;
    for (auto& e : cache_list(dir)) n += std::filesystem::remove(std::filesystem::path(dir) / e.name) ? 1 : 0;
    return n;
}

// ---------------------------------------------------------------- tables and manifests

inline std::string cell_flags(const GridCell& c) {
    if (!c.sample) return "error:" + c.error_kind;
    return c.sample->verified ? "ok" : "unverified";
}

// one row per (x, t, q1, q2); failed cells get a single row with empty numbers
inline void write_csv(std::ostream& os, const std::vector<GridCell>& cells, int order_q, const std::string& manifest) {
    os << "# schema=" << csv_schema << " manifest=" << manifest << "\n";
    os << "x,t,q1,q2,value,err_trunc,err_quad,flags\n";
    for (const auto& c : cells) {
        if (!c.sample) {
            os << format_double(c.x) << ',' << format_double(c.t) << ",,,,,," << cell_flags(c) << "\n";
            continue;
        }
        for (auto [q1, q2] : orders_up_to(order_q)) {
            const auto& e = c.sample->err.at({q1, q2});
            os << format_double(c.x) << ',' << format_double(c.t) << ',' << q1 << ',' << q2 << ','
               << format_double(c.sample->value(q1, q2)) << ',' << format_double(e.trunc) << ','
               << format_double(e.quad) << ',' << cell_flags(c) << "\n";
        }
    }
}

struct RunManifest {
    std::string profile_hash;
    json grid_policy;
    std::string command;
    json flags;
    std::string version{blowlab::version};
    double wall_clock = 0.0;
    json criteria = json::object();
    std::vector<std::string> artifacts;

    json to_json() const {
        json j;
        j["schema"] = manifest_schema;
        j["profile_hash"] = profile_hash;
        j["grid_policy"] = grid_policy;
        j["command"] = command;
        j["flags"] = flags;
        j["version"] = version;
        j["wall_clock_s"] = wall_clock;
        j["criteria"] = criteria;
        j["artifacts"] = artifacts;
        return j;
    }
};

inline json policy_json(const GridPolicy& g, double tol) {
    json j;
    j["n_gl"] = g.n_gl;
    j["first_width"] = g.first_width;
    j["ratio"] = g.ratio;
    j["max_nodes_per_side"] = max_grid_nodes;
    j["min_nodes_per_period"] = 8;
    j["tol"] = tol;
    return j;
}

// manifests are append-only: one JSON document per line
inline void append_manifest(const std::string& path, const RunManifest& m) {
    std::ofstream os(path, std::ios::app);
    if (!os) throw ConfigError("cannot append to manifest " + path);
    os << m.to_json().dump() << "\n";
}

inline json fit_json(const BlowupFit& f) {
    json j;
    j["q1"] = f.q1;
    j["q2"] = f.q2;
    j["delta_target"] = f.delta_target;
    j["log_correction"] = f.corrected;
    j["delta_hat"] = f.delta_hat;
    j["amplitude"] = f.amplitude;
    j["background"] = f.background;
    j["r2"] = f.r2;
    j["drift"] = f.drift;
    j["expected_sign"] = f.expected_sign;
    j["sign_ok"] = f.sign_ok;
    json rows = json::array();
    for (std::size_t i = 0; i < f.taus.size(); ++i) {
        json r;
        r["T_minus_t"] = f.taus[i];
        r["value"] = f.values[i];
        r["prediction"] = f.predictions[i];
        r["ratio"] = f.ratios[i];
        if (i < f.errors.size()) r["err"] = f.errors[i];
        rows.push_back(r);
    }
    j["ladder"] = rows;
    return j;
}

class Stopwatch {
    std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();

public:
    double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count(); }
};

}  // namespace blowlab
