#pragma once

#include "dimred.hpp"
#include "errors.hpp"
#include "lattice.hpp"
#include "params.hpp"
#include "partition.hpp"
#include "symbols.hpp"

#include "json.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#ifndef TORUS_SPECTRA_VERSION
#define TORUS_SPECTRA_VERSION "0.0.0"
#endif

namespace torus_spectra {

using json = nlohmann::json;

inline const char* library_version() { return TORUS_SPECTRA_VERSION; }

struct RunConfig {
    json raw;
    int d = 0;
    Eigen::MatrixXd basis;
    Eigen::VectorXd kappa;
    std::vector<std::pair<IntVec, cplx>> terms;
    Params params;
    double radius = 10;
    int steps = 2;
    std::vector<std::string> commands{"partition", "normal-form", "spectrum", "verify"};
    std::string output_dir = "out";
    std::uint64_t seed = 1;

    Lattice lattice() const { return build_lattice(basis, kappa); }
    FourierSymbol potential(bool warn = true) const { return FourierSymbol::trig(d, terms, warn); }
};

// 64-bit FNV-1a of the canonical (sorted-key, compact) dump.
inline std::string config_hash(const json& j) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : j.dump()) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

namespace detail {

[[noreturn]] inline void config_fail(const std::string& path, const std::string& msg) {
    throw ConfigError(json{{"field", path}, {"error", msg}}.dump());
}

inline double number_at(const json& j, const std::string& path) {
    if (!j.is_number()) config_fail(path, "expected a number");
    return j.get<double>();
}

inline long integer_at(const json& j, const std::string& path) {
    if (!j.is_number_integer()) config_fail(path, "expected an integer");
    return j.get<long>();
}

inline std::vector<double> schedule_at(const json& j, const std::string& path, int d, const std::vector<double>& dflt) {
    if (j.is_null() || (j.is_string() && j.get<std::string>() == "auto")) return dflt;
    if (!j.is_array() || static_cast<int>(j.size()) != d + 1) config_fail(path, "expected \"auto\" or d+1 numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < j.size(); ++i) out.push_back(number_at(j[i], path + "[" + std::to_string(i) + "]"));
    return out;
}

}  // namespace detail

// Parses and validates; every problem surfaces as ConfigError with a JSON diagnostic.
inline RunConfig parse_config(const json& j) {
    RunConfig c;
    c.raw = j;
    if (!j.is_object()) detail::config_fail("", "config must be a JSON object");
    const json& lat = j.value("lattice", json::object());
    if (!lat.contains("basis") || !lat["basis"].is_array() || lat["basis"].empty())
        detail::config_fail("lattice.basis", "expected a square array of rows");
    c.d = static_cast<int>(lat["basis"].size());
    c.basis.resize(c.d, c.d);
    for (int a = 0; a < c.d; ++a) {
        const json& row = lat["basis"][a];
        const std::string path = "lattice.basis[" + std::to_string(a) + "]";
        if (!row.is_array() || static_cast<int>(row.size()) != c.d) detail::config_fail(path, "row length must equal d");
        for (int b = 0; b < c.d; ++b) c.basis(a, b) = detail::number_at(row[b], path);
    }
    c.kappa = Eigen::VectorXd::Zero(c.d);
    if (lat.contains("kappa")) {
        if (!lat["kappa"].is_array() || static_cast<int>(lat["kappa"].size()) != c.d)
            detail::config_fail("lattice.kappa", "expected d numbers");
        for (int a = 0; a < c.d; ++a) c.kappa[a] = detail::number_at(lat["kappa"][a], "lattice.kappa");
    }
    try {
        (void)build_lattice(c.basis, c.kappa);
    } catch (const DegenerateLattice& e) {
        detail::config_fail("lattice.basis", e.what());
    }

    const json& pot = j.value("potential", json::object());
    const json& terms = pot.value("terms", json::array());
    if (!terms.is_array()) detail::config_fail("potential.terms", "expected an array");
    for (std::size_t t = 0; t < terms.size(); ++t) {
        const std::string path = "potential.terms[" + std::to_string(t) + "]";
        const json& term = terms[t];
        if (!term.is_object() || !term.contains("k") || !term["k"].is_array() || static_cast<int>(term["k"].size()) != c.d)
            detail::config_fail(path + ".k", "expected d integers");
        IntVec k;
        for (const auto& x : term["k"]) k.push_back(detail::integer_at(x, path + ".k"));
        const double re = term.contains("re") ? detail::number_at(term["re"], path + ".re") : 0.0;
        const double im = term.contains("im") ? detail::number_at(term["im"], path + ".im") : 0.0;
        c.terms.emplace_back(k, cplx(re, im));
    }

    const json& par = j.value("params", json::object());
    const double eps = par.contains("epsilon") ? detail::number_at(par["epsilon"], "params.epsilon") : 0.05;
    const double delta = par.contains("delta") ? detail::number_at(par["delta"], "params.delta") : 0.5;
    const double tau = par.contains("tau") ? detail::number_at(par["tau"], "params.tau") : 1.1;
    c.params = Params::defaults(c.d, eps, delta, tau);
    c.params.C = detail::schedule_at(par.value("C", json()), "params.C", c.d, c.params.C);
    c.params.D = detail::schedule_at(par.value("D", json()), "params.D", c.d, c.params.D);
    try {
        validate(c.params, c.d);
    } catch (const InvalidParams& e) {
        detail::config_fail("params", e.what());
    }

    if (j.contains("radius")) c.radius = detail::number_at(j["radius"], "radius");
    if (!(c.radius > 0)) detail::config_fail("radius", "must be positive");
    if (j.contains("steps")) c.steps = static_cast<int>(detail::integer_at(j["steps"], "steps"));
    if (c.steps < 0) detail::config_fail("steps", "must be nonnegative");
    if (j.contains("seed")) c.seed = static_cast<std::uint64_t>(detail::integer_at(j["seed"], "seed"));
    if (j.contains("output_dir")) {
        if (!j["output_dir"].is_string()) detail::config_fail("output_dir", "expected a string");
        c.output_dir = j["output_dir"].get<std::string>();
    }
    if (j.contains("commands")) {
        static const std::vector<std::string> known{"lattice-info", "partition", "normal-form", "spectrum", "verify"};
        if (!j["commands"].is_array()) detail::config_fail("commands", "expected an array of strings");
        c.commands.clear();
        for (const auto& x : j["commands"]) {
            if (!x.is_string() || std::find(known.begin(), known.end(), x.get<std::string>()) == known.end())
                detail::config_fail("commands", "unknown command " + x.dump());
            c.commands.push_back(x.get<std::string>());
        }
    }
    return c;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) detail::config_fail("", "cannot read " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        detail::config_fail("", std::string("parse error: ") + e.what());
    }
    return parse_config(j);
}

// The effective configuration after command-line overrides; this is what gets hashed.
inline json effective_config(const RunConfig& c) {
    json j = c.raw;
    j["radius"] = c.radius;
    j["steps"] = c.steps;
    j["seed"] = c.seed;
    j["params"]["C"] = c.params.C;
    j["params"]["D"] = c.params.D;
    j["params"]["epsilon"] = c.params.eps;
    j["params"]["delta"] = c.params.delta;
    j["params"]["tau"] = c.params.tau;
    j.erase("output_dir");
    j.erase("commands");
    return j;
}

inline json to_json(const IntVec& v) { return json(v); }

inline json to_json(const Submodule& M) { return json(M.basis()); }

inline json to_json(const Eigen::MatrixXd& m) {
    json out = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
        out.push_back(row);
    }
    return out;
}

inline json to_json(const Eigen::VectorXd& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

inline json to_json(const Lattice& L) {
    json j{{"d", L.d},
           {"basis", to_json(L.basis)},
           {"metric", to_json(L.g)},
           {"dual_metric", to_json(L.g_star)},
           {"kappa", to_json(L.kappa)},
           {"coercivity", L.coercivity},
           {"coercivity_witness", L.coercivity_witness},
           {"min_volume_bound", L.min_volume_bound}};
    if (L.min_volume_enumerated) j["min_volume_enumerated"] = *L.min_volume_enumerated;
    return j;
}

inline json to_json(const GeometryReport& r) {
    json dens = json::array();
    for (const auto& [R, v] : r.density) dens.push_back({{"radius", R}, {"density_e0", v}});
    return json{{"nesting_violations", r.nesting_violations},
                {"separation_violations", r.separation_violations},
                {"overlap_violations", r.overlap_violations},
                {"fitted_K", r.fitted_K},
                {"density", dens},
                {"density_nondecreasing", r.density_nondecreasing},
                {"clean", r.clean()},
                {"advice", r.advice()},
                {"messages", r.messages}};
}

inline json to_json(const ReductionTree& t) {
    json nodes = json::array();
    for (const auto& n : t.nodes) {
        nodes.push_back({{"id", n.id},
                         {"parent", n.parent},
                         {"depth", n.depth},
                         {"dim", n.dim},
                         {"module", n.module},
                         {"beta", n.beta},
                         {"ell2", n.ell2},
                         {"ell2_total", n.ell2_total},
                         {"size", n.size},
                         {"kind", n.kind},
                         {"spectral_mismatch", n.spectral_mismatch},
                         {"multiplier_classes", n.multiplier_classes},
                         {"finite_blocks", n.finite_blocks},
                         {"children", n.children},
                         {"spectrum", n.spectrum}});
    }
    return json{{"max_depth", t.max_depth()}, {"nodes", nodes}};
}

// Artifact header shared by every output.
inline json artifact_meta(const std::string& hash, const std::string& kind) {
    return json{{"config_hash", hash}, {"library_version", library_version()}, {"artifact", kind}};
}

inline std::string fmt_double(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path);
    out << text;
}

inline void write_json(const std::string& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

// CSV with a commented provenance line.
inline void write_csv(const std::string& path, const std::string& hash, const std::vector<std::string>& header,
                      const std::vector<std::vector<std::string>>& rows) {
    std::ostringstream s;
    s << "# config_hash=" << hash << " library_version=" << library_version() << "\n";
    for (std::size_t i = 0; i < header.size(); ++i) s << (i ? "," : "") << header[i];
    s << "\n";
    for (const auto& r : rows) {
        for (std::size_t i = 0; i < r.size(); ++i) s << (i ? "," : "") << r[i];
        s << "\n";
    }
    write_text(path, s.str());
}

}  // namespace torus_spectra
