#pragma once

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "fiberheat/field.hpp"
#include "fiberheat/solver.hpp"

namespace fiberheat {

/// Full description of one experiment run. Built from per-experiment
/// defaults (default_config) with overrides from a config file
/// (parse_config). Validation is strict: unknown sections or keys and
/// malformed values are ConfigErrors carrying the offending line.
struct ExperimentConfig {
    std::string experiment;
    FieldSpec field;
    int n_psi = 65, n_theta = 64, n_phi = 1;
    std::vector<double> eps_list;      // strictly positive, descending
    std::vector<double> amplitudes;    // perturbation sweep
    std::vector<double> a_exponents;   // perturbation exponent sweep
    double T_minus = 0.0, T_plus = 1.0;
    double solver_tol = 1e-10;
    double max_iter_factor = 50.0;
    Preconditioner precond = Preconditioner::Jacobi;
    double gamma = 3.0;
    double c_exponent = 0.5;
    int K = 100;
    std::vector<double> M_list;
    int brute_force_samples = 100000;
    int mde_trials = 20;
    std::string output_dir;            // empty: $FIBERHEAT_OUT or ./out
    int workers = 1;

    std::string resolved_output_dir() const {
        if (!output_dir.empty()) return output_dir;
        if (const char* env = std::getenv("FIBERHEAT_OUT")) return env;
        return "out";
    }
};

inline const std::vector<std::string>& experiment_names() {
    static const std::vector<std::string> names = {
        "annulus2d",        "channel2d",      "torus-integrable",
        "torus-perturbed",  "diophantine-scan", "mde-demo",
        "noninteg-volume",  "geometry-selftest"};
    return names;
}

/// Defaults reproducing the scaled-down quantitative studies; every value
/// can be overridden from the config file.
inline ExperimentConfig default_config(const std::string& experiment) {
    ExperimentConfig c;
    c.experiment = experiment;
    if (experiment == "annulus2d") {
        c.field = FieldSpec::annulus();
        c.n_psi = 256;
        c.n_theta = 256;
        c.eps_list = {1.0, 0.1, 0.01};
    } else if (experiment == "channel2d") {
        c.field = FieldSpec::channel();
        c.n_psi = 256;
        c.n_theta = 256;
        c.eps_list = {1e-1, 5e-2, 2e-2, 1e-2, 5e-3};
    } else if (experiment == "torus-integrable") {
        c.field = FieldSpec::torus_integrable();
        c.n_psi = 48;
        c.n_theta = 64;
        c.n_phi = 64;
        c.eps_list = {1e-1, 3e-2, 1e-2, 3e-3};
    } else if (experiment == "torus-perturbed") {
        c.field = FieldSpec::torus_perturbed();
        // 33 psi nodes put a grid surface exactly on the chi1 resonance
        // iota = 1/2 (psi = 0.75 for the default profile)
        c.n_psi = 33;
        c.n_theta = 48;
        c.n_phi = 48;
        c.eps_list = {3e-2, 1e-2, 3e-3, 1e-3};
        c.amplitudes = {0.05, 0.1, 0.2};
        c.a_exponents = {0.5, 1.0};
    } else if (experiment == "diophantine-scan") {
        c.field = FieldSpec::torus_integrable();
        c.M_list = {10.0, 100.0, 1000.0, 10000.0};
    } else if (experiment == "mde-demo") {
        c.field = FieldSpec::torus_integrable({1.6180339887498949, 0.0});
        c.K = 16;
    } else if (experiment == "noninteg-volume") {
        c.field = FieldSpec::torus_perturbed();
        c.n_psi = 33;
        c.n_theta = 48;
        c.n_phi = 48;
        c.eps_list = {1e-2, 1e-3, 1e-4};
        c.amplitudes = {0.05, 0.1, 0.2};
        c.precond = Preconditioner::SymmetricGaussSeidel;
    } else if (experiment == "geometry-selftest") {
        c.field = FieldSpec::annulus();
        c.n_psi = 33;
        c.n_theta = 32;
    } else {
        throw ConfigError("unknown experiment '" + experiment + "'");
    }
    return c;
}

namespace detail {

struct ConfigEntry {
    std::string section, key, value;
    int line = 0;
};

inline std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

inline double parse_double(const ConfigEntry& e) {
    const std::string& s = e.value;
    char* end = nullptr;
    double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0')
        throw ConfigError("line " + std::to_string(e.line) + ": field '" + e.key +
                              "' needs a number, got '" + s + "'",
                          e.line);
    return v;
}

inline int parse_int(const ConfigEntry& e) {
    double v = parse_double(e);
    int i = static_cast<int>(v);
    if (static_cast<double>(i) != v)
        throw ConfigError("line " + std::to_string(e.line) + ": field '" + e.key +
                              "' needs an integer",
                          e.line);
    return i;
}

inline std::vector<double> parse_list(const ConfigEntry& e) {
    std::vector<double> out;
    std::string item;
    std::stringstream ss(e.value);
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        ConfigEntry sub{e.section, e.key, item, e.line};
        out.push_back(parse_double(sub));
    }
    if (out.empty())
        throw ConfigError("line " + std::to_string(e.line) + ": field '" + e.key +
                              "' needs a comma-separated list",
                          e.line);
    return out;
}

}  // namespace detail

/// Validate cross-field invariants; throws ConfigError naming the field.
inline void validate_config(const ExperimentConfig& c) {
    for (size_t i = 0; i < c.eps_list.size(); ++i) {
        if (!(c.eps_list[i] > 0.0))
            throw ConfigError("field 'eps_list' must be strictly positive");
        if (i > 0 && !(c.eps_list[i] < c.eps_list[i - 1]))
            throw ConfigError("field 'eps_list' must be sorted descending");
    }
    for (double a : c.amplitudes)
        if (!(a >= 0.0)) throw ConfigError("field 'amplitudes' must be >= 0");
    for (double a : c.a_exponents)
        if (!(a >= 0.5)) throw ConfigError("field 'a_exponents' must be >= 1/2");
    for (size_t i = 1; i < c.M_list.size(); ++i)
        if (!(c.M_list[i] > c.M_list[i - 1]))
            throw ConfigError("field 'M_list' must be increasing");
    if (!(c.solver_tol > 0.0 && c.solver_tol < 1.0))
        throw ConfigError("field 'tol' must lie in (0, 1)");
    if (c.workers < 1) throw ConfigError("field 'workers' must be >= 1");
    if (c.n_psi < 3) throw ConfigError("field 'n_psi' must be >= 3");
    if (c.K < 1) throw ConfigError("field 'K' must be >= 1");
    if (!(c.gamma > 2.0)) throw ConfigError("field 'gamma' must be > 2");
}

/// Parse a config file: ini-style sections of key = value lines, '#'
/// comments. The [experiment] name selects the defaults; every other
/// entry overrides one schema field. Unknown sections/keys are rejected.
inline ExperimentConfig parse_config_text(const std::string& text) {
    std::vector<detail::ConfigEntry> entries;
    std::string section;
    std::istringstream in(text);
    std::string raw;
    int lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        std::string line = detail::trim(raw);
        size_t hash = line.find('#');
        if (hash != std::string::npos) line = detail::trim(line.substr(0, hash));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("line " + std::to_string(lineno) +
                                      ": unterminated section header",
                                  lineno);
            section = detail::trim(line.substr(1, line.size() - 2));
            continue;
        }
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) +
                                  ": expected key = value",
                              lineno);
        detail::ConfigEntry e;
        e.section = section;
        e.key = detail::trim(line.substr(0, eq));
        e.value = detail::trim(line.substr(eq + 1));
        e.line = lineno;
        if (e.key.empty() || e.value.empty())
            throw ConfigError("line " + std::to_string(lineno) +
                                  ": empty key or value",
                              lineno);
        entries.push_back(e);
    }

    std::string experiment;
    for (const auto& e : entries)
        if (e.section == "experiment" && e.key == "name") experiment = e.value;
    if (experiment.empty())
        throw ConfigError("missing [experiment] name = <experiment>");
    ExperimentConfig c = default_config(experiment);

    using detail::parse_double;
    using detail::parse_int;
    using detail::parse_list;
    // A kind switch resets the field block to that kind's defaults, so it
    // must apply before any other [field] override regardless of file order.
    for (const auto& e : entries) {
        if (e.section != "field" || e.key != "kind") continue;
        bool ok = false;
        for (auto k : {FieldKind::Annulus2D, FieldKind::Channel2D,
                       FieldKind::TorusIntegrable, FieldKind::TorusPerturbed})
            if (e.value == to_string(k)) {
                if (k == FieldKind::Annulus2D) c.field = FieldSpec::annulus();
                else if (k == FieldKind::Channel2D) c.field = FieldSpec::channel();
                else if (k == FieldKind::TorusIntegrable)
                    c.field = FieldSpec::torus_integrable();
                else c.field = FieldSpec::torus_perturbed();
                ok = true;
            }
        if (!ok)
            throw ConfigError("line " + std::to_string(e.line) +
                                  ": unknown field kind '" + e.value + "'",
                              e.line);
    }
    for (const auto& e : entries) {
        const std::string id = e.section + "." + e.key;
        if (id == "experiment.name" || id == "field.kind") continue;
        else if (id == "field.psi_min") c.field.psi_min = parse_double(e);
        else if (id == "field.psi_max") c.field.psi_max = parse_double(e);
        else if (id == "field.major_radius") c.field.major_radius = parse_double(e);
        else if (id == "field.iota_c0") c.field.iota.c0 = parse_double(e);
        else if (id == "field.iota_c1") c.field.iota.c1 = parse_double(e);
        else if (id == "field.delta") c.field.delta = parse_double(e);
        else if (id == "field.amplitude") c.field.amplitude = parse_double(e);
        else if (id == "field.a_exponent") c.field.a_exponent = parse_double(e);
        else if (id == "field.mode_theta") c.field.mode_theta = parse_int(e);
        else if (id == "field.mode_phi") c.field.mode_phi = parse_int(e);
        else if (id == "grid.n_psi") c.n_psi = parse_int(e);
        else if (id == "grid.n_theta") c.n_theta = parse_int(e);
        else if (id == "grid.n_phi") c.n_phi = parse_int(e);
        else if (id == "sweep.eps_list") c.eps_list = parse_list(e);
        else if (id == "sweep.amplitudes") c.amplitudes = parse_list(e);
        else if (id == "sweep.a_exponents") c.a_exponents = parse_list(e);
        else if (id == "bc.T_minus") c.T_minus = parse_double(e);
        else if (id == "bc.T_plus") c.T_plus = parse_double(e);
        else if (id == "solver.tol") c.solver_tol = parse_double(e);
        else if (id == "solver.max_iter_factor") c.max_iter_factor = parse_double(e);
        else if (id == "solver.preconditioner") {
            if (e.value == "jacobi") c.precond = Preconditioner::Jacobi;
            else if (e.value == "sgs") c.precond = Preconditioner::SymmetricGaussSeidel;
            else
                throw ConfigError("line " + std::to_string(e.line) +
                                      ": preconditioner must be jacobi or sgs",
                                  e.line);
        } else if (id == "ergodic.gamma") c.gamma = parse_double(e);
        else if (id == "ergodic.c") c.c_exponent = parse_double(e);
        else if (id == "ergodic.K") c.K = parse_int(e);
        else if (id == "ergodic.M_list") c.M_list = parse_list(e);
        else if (id == "ergodic.brute_force_samples")
            c.brute_force_samples = parse_int(e);
        else if (id == "ergodic.mde_trials") c.mde_trials = parse_int(e);
        else if (id == "output.directory") c.output_dir = e.value;
        else if (id == "output.workers") c.workers = parse_int(e);
        else
            throw ConfigError("line " + std::to_string(e.line) +
                                  ": unknown config key '" + id + "'",
                              e.line);
    }
    validate_config(c);
    return c;
}

inline ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

/// FNV-1a hash of the canonical config state, recorded in run manifests.
inline std::string config_hash(const ExperimentConfig& c) {
    std::ostringstream s;
    s << c.experiment << '|' << to_string(c.field.kind) << '|' << c.field.psi_min
      << '|' << c.field.psi_max << '|' << c.field.major_radius << '|'
      << c.field.iota.c0 << '|' << c.field.iota.c1 << '|' << c.field.delta << '|'
      << c.field.amplitude << '|' << c.field.a_exponent << '|'
      << c.field.mode_theta << '|' << c.field.mode_phi << '|' << c.n_psi << '|'
      << c.n_theta << '|' << c.n_phi << '|' << c.T_minus << '|' << c.T_plus << '|'
      << c.solver_tol << '|' << c.max_iter_factor << '|' << to_string(c.precond)
      << '|' << c.gamma << '|' << c.c_exponent << '|' << c.K << '|'
      << c.brute_force_samples << '|' << c.mde_trials << '|' << c.workers;
    for (double e : c.eps_list) s << '|' << e;
    for (double a : c.amplitudes) s << '|' << a;
    for (double a : c.a_exponents) s << '|' << a;
    for (double m : c.M_list) s << '|' << m;
    uint64_t h = 1469598103934665603ull;
    for (char ch : s.str()) {
        h ^= static_cast<unsigned char>(ch);
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace fiberheat
