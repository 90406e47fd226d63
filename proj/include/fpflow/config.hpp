#pragma once
/// Declarative run configuration (JSON, schema version 1).

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "fpflow/coefficients.hpp"
#include "fpflow/ergodic.hpp"
#include "fpflow/error.hpp"
#include "fpflow/grid.hpp"
#include "fpflow/io.hpp"
#include "fpflow/resolvent.hpp"

namespace fpflow {

#ifndef FPFLOW_VERSION
#define FPFLOW_VERSION "0.1.0"
#endif

inline constexpr const char* kToolVersion = FPFLOW_VERSION;
inline constexpr int kSchemaVersion = 1;

/// Malformed or inconsistent configuration (exit code 2).
class ConfigError : public Error {
public:
    using Error::Error;
};

struct InitialSpec {
    std::string kind = "gaussian";  ///< gaussian | uniform | file
    std::vector<double> center;
    double sigma = 1.0;
    std::filesystem::path path;
};

struct EvolveSection {
    double T = 1.0;
    double h = 0.01;
    int snapshots = 64;
    std::vector<double> extra_times;
    std::optional<double> eta;
};

struct ErgodicSection {
    std::vector<double> T_list;
    double window_fraction = 0.5;
    std::vector<ObservableSpec> observables;
};

struct ParticleSection {
    std::size_t N = 10000;
    double dt = 1e-3;
    double T = 1.0;
    std::uint64_t seed = 0;
    int refresh_every = 1;
    int bandwidth = 0;
    int records = 64;
    double u_floor = 1e-8;
    std::vector<double> ergodic_times;
};

struct CompareSection {
    double l1_max = 5e-2;
    double stderr_factor = 3.0;
    double occupation_tol = 1e-2;
    Point box_lo{};
    Point box_hi{};
    bool has_box = false;
};

struct CheckSection {
    std::set<std::string> require{"h1", "h2", "h3", "uniqueness"};
    double r_max = 10.0;
    int r_count = 401;
    int r_random = 0;
    std::uint64_t seed = 0;
    std::optional<double> x_radius;
    int x_per_axis = 21;
    int x_random = 0;
    std::optional<double> quad_radius;
    double phi_threshold = 10.0;
    int shells = 10;
    std::optional<double> alpha;
    double b_r_max = 10.0;
    double b_upper = std::numeric_limits<double>::max();
    double fp_r_lo = 1e-6;
    double fp_r_hi = 1e6;
};

struct RunConfig {
    nlohmann::json raw;
    std::filesystem::path base_dir;
    std::string hash;

    std::string family;
    FamilyParams params;
    std::filesystem::path table_path;
    std::vector<BetaTableRow> table;
    GridSpec grid;
    SolverConfig solver;
    InitialSpec initial;
    EvolveSection evolve;
    ErgodicSection ergodic;
    ParticleSection particles;
    CompareSection compare;
    CheckSection check;

    CoefficientSet coefficients() const { return make_family(family, grid.dim, params, table); }
    DensityField initial_density() const;
};

namespace detail {

/// Object reader that rejects unknown keys and reports JSON paths.
class Section {
public:
    Section(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
    }
    ~Section() = default;

    bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }

    const nlohmann::json& at(const std::string& key) {
        seen_.insert(key);
        if (!j_.contains(key)) throw ConfigError(path_ + "." + key + ": missing");
        return j_.at(key);
    }

    std::string where(const std::string& key) const { return path_ + "." + key; }

    double number(const std::string& key) {
        const auto& v = at(key);
        if (!v.is_number()) throw ConfigError(where(key) + ": expected a number");
        return v.get<double>();
    }
    double number(const std::string& key, double fallback) { return has(key) ? number(key) : (seen_.insert(key), fallback); }

    std::int64_t integer(const std::string& key) {
        const auto& v = at(key);
        if (!v.is_number_integer()) throw ConfigError(where(key) + ": expected an integer");
        return v.get<std::int64_t>();
    }
    std::int64_t integer(const std::string& key, std::int64_t fallback) {
        return has(key) ? integer(key) : (seen_.insert(key), fallback);
    }

    std::uint64_t unsigned_integer(const std::string& key, std::uint64_t fallback) {
        if (!has(key)) return seen_.insert(key), fallback;
        const auto& v = at(key);
        if (!v.is_number_unsigned()) throw ConfigError(where(key) + ": expected a non-negative integer");
        return v.get<std::uint64_t>();
    }

    std::string string(const std::string& key) {
        const auto& v = at(key);
        if (!v.is_string()) throw ConfigError(where(key) + ": expected a string");
        return v.get<std::string>();
    }
    std::string string(const std::string& key, const std::string& fallback) {
        return has(key) ? string(key) : (seen_.insert(key), fallback);
    }

    bool boolean(const std::string& key, bool fallback) {
        if (!has(key)) return seen_.insert(key), fallback;
        const auto& v = at(key);
        if (!v.is_boolean()) throw ConfigError(where(key) + ": expected true or false");
        return v.get<bool>();
    }

    std::vector<double> numbers(const std::string& key) {
        if (!has(key)) return seen_.insert(key), std::vector<double>{};
        const auto& v = at(key);
        if (!v.is_array()) throw ConfigError(where(key) + ": expected an array of numbers");
        std::vector<double> out;
        for (const auto& e : v) {
            if (!e.is_number()) throw ConfigError(where(key) + ": expected an array of numbers");
            out.push_back(e.get<double>());
        }
        return out;
    }

    Section object(const std::string& key) { return Section(at(key), where(key)); }

    /// Throws on keys that were never read.
    void finish() const {
        for (const auto& [k, v] : j_.items())
            if (!seen_.count(k) && !v.is_null()) throw ConfigError(where(k) + ": unknown key");
    }

private:
    const nlohmann::json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

inline Point to_point(const std::vector<double>& v, int dim, const std::string& where) {
    if (static_cast<int>(v.size()) != dim) throw ConfigError(where + ": expected " + std::to_string(dim) + " coordinates");
    Point p{};
    for (int k = 0; k < dim; ++k) p[k] = v[k];
    return p;
}

inline ObservableSpec parse_observable(const nlohmann::json& j, const std::string& where, int dim) {
    Section s(j, where);
    ObservableSpec o;
    o.label = s.string("label");
    o.kind = s.string("kind");
    o.axis = static_cast<int>(s.integer("axis", 0));
    o.power = static_cast<int>(s.integer("power", 1));
    o.value = s.number("value", 1.0);
    o.frequency = s.number("frequency", 1.0);
    if (o.kind == "indicator") {
        o.lo = to_point(s.numbers("lo"), dim, where + ".lo");
        o.hi = to_point(s.numbers("hi"), dim, where + ".hi");
    }
    s.finish();
    try {
        o.validate(dim);
    } catch (const InvalidArgument& e) {
        throw ConfigError(where + ": " + e.what());
    }
    return o;
}

inline std::vector<ObservableSpec> parse_observables(const nlohmann::json& j, const std::string& where, int dim) {
    if (!j.is_array()) throw ConfigError(where + ": expected an array");
    std::vector<ObservableSpec> out;
    std::set<std::string> labels;
    for (std::size_t i = 0; i < j.size(); ++i) {
        out.push_back(parse_observable(j[i], where + "[" + std::to_string(i) + "]", dim));
        if (!labels.insert(out.back().label).second) throw ConfigError(where + ": duplicate label '" + out.back().label + "'");
    }
    return out;
}

/// Reads a beta table CSV with a header containing r, beta, beta_prime.
inline std::vector<BetaTableRow> read_beta_table(const std::filesystem::path& path) {
    const auto rows = io::parse_csv(io::read_text(path));
    if (rows.size() < 3) throw ConfigError(path.string() + ": table needs a header and at least two rows");
    int ir = -1, ib = -1, id = -1;
    for (std::size_t c = 0; c < rows[0].size(); ++c) {
        if (rows[0][c] == "r") ir = static_cast<int>(c);
        if (rows[0][c] == "beta") ib = static_cast<int>(c);
        if (rows[0][c] == "beta_prime") id = static_cast<int>(c);
    }
    if (ir < 0 || ib < 0 || id < 0) throw ConfigError(path.string() + ": header must name r, beta, beta_prime");
    std::vector<BetaTableRow> out;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& row = rows[i];
        auto num = [&](int c) {
            if (c >= static_cast<int>(row.size())) throw ConfigError(path.string() + ": short row " + std::to_string(i + 1));
            try {
                std::size_t used = 0;
                const double v = std::stod(row[c], &used);
                if (used != row[c].size()) throw std::invalid_argument("trailing");
                return v;
            } catch (const std::exception&) {
                throw ConfigError(path.string() + ": row " + std::to_string(i + 1) + " has a non-numeric field");
            }
        };
        out.push_back({num(ir), num(ib), num(id)});
    }
    return out;
}

}  // namespace detail

/// Parses a configuration document. Relative paths resolve against base_dir.
/// `seed_override` replaces particles.seed before hashing.
inline RunConfig parse_config(nlohmann::json doc, const std::filesystem::path& base_dir,
                              std::optional<std::uint64_t> seed_override = std::nullopt) {
    if (!doc.is_object()) throw ConfigError("config: expected a JSON object");
    if (seed_override && doc.contains("particles") && doc["particles"].is_object()) doc["particles"]["seed"] = *seed_override;
    RunConfig cfg;
    cfg.base_dir = base_dir;
    detail::Section root(doc, "config");
    const auto schema = root.integer("schema_version", kSchemaVersion);
    if (schema != kSchemaVersion) throw ConfigError("config.schema_version: unsupported version " + std::to_string(schema));

    {
        auto s = root.object("family");
        cfg.family = s.string("id");
        if (s.has("params")) {
            const auto& p = s.at("params");
            if (!p.is_object()) throw ConfigError("config.family.params: expected an object");
            for (const auto& [k, v] : p.items()) {
                if (!v.is_number()) throw ConfigError("config.family.params." + k + ": expected a number");
                cfg.params[k] = v.get<double>();
            }
        }
        if (s.has("table")) {
            cfg.table_path = base_dir / s.string("table");
            cfg.table = detail::read_beta_table(cfg.table_path);
        }
        s.finish();
    }
    {
        auto s = root.object("grid");
        cfg.grid.dim = static_cast<int>(s.integer("dim"));
        cfg.grid.half_width = s.number("half_width");
        cfg.grid.cells = static_cast<int>(s.integer("cells"));
        s.finish();
        try {
            cfg.grid.validate();
        } catch (const Error& e) {
            throw ConfigError(std::string("config.grid: ") + e.what());
        }
    }
    if (root.has("solver")) {
        auto s = root.object("solver");
        auto& c = cfg.solver;
        c.lambda = s.number("lambda", c.lambda);
        c.lambda_max = s.number("lambda_max", c.lambda_max);
        if (s.has("eps_schedule")) c.eps_schedule = s.numbers("eps_schedule");
        if (s.has("newton_tol")) c.newton_tol = s.number("newton_tol");
        c.max_newton_iters = static_cast<int>(s.integer("max_newton_iters", c.max_newton_iters));
        c.damping = s.number("damping", c.damping);
        c.continuation_tol = s.number("continuation_tol", c.continuation_tol);
        c.degeneracy_probe_range = s.number("degeneracy_probe_range", c.degeneracy_probe_range);
        s.finish();
    }
    if (root.has("initial")) {
        auto s = root.object("initial");
        auto& in = cfg.initial;
        in.kind = s.string("kind");
        in.center = s.numbers("center");
        in.sigma = s.number("sigma", 1.0);
        const std::string p = s.string("path", "");
        s.finish();
        if (in.kind == "gaussian") {
            if (in.center.empty()) in.center.assign(cfg.grid.dim, 0.0);
            detail::to_point(in.center, cfg.grid.dim, "config.initial.center");
            if (!(in.sigma > 0.0)) throw ConfigError("config.initial.sigma: must be positive");
        } else if (in.kind == "file") {
            if (p.empty()) throw ConfigError("config.initial.path: required for kind 'file'");
            in.path = base_dir / p;
            if (!std::filesystem::exists(in.path)) throw ConfigError("config.initial.path: " + in.path.string() + " does not exist");
        } else if (in.kind != "uniform") {
            throw ConfigError("config.initial.kind: expected gaussian, uniform or file");
        }
    }
    if (root.has("evolve")) {
        auto s = root.object("evolve");
        auto& e = cfg.evolve;
        e.T = s.number("T");
        e.h = s.number("h");
        e.snapshots = static_cast<int>(s.integer("snapshots", e.snapshots));
        e.extra_times = s.numbers("extra_times");
        if (s.has("eta")) e.eta = s.number("eta");
        s.finish();
        if (!(e.T > 0.0) || !(e.h > 0.0)) throw ConfigError("config.evolve: T and h must be positive");
        if (e.snapshots < 1) throw ConfigError("config.evolve.snapshots: must be >= 1");
    }
    if (root.has("ergodic")) {
        auto s = root.object("ergodic");
        auto& e = cfg.ergodic;
        e.T_list = s.numbers("T_list");
        e.window_fraction = s.number("window_fraction", e.window_fraction);
        if (s.has("observables")) e.observables = detail::parse_observables(s.at("observables"), "config.ergodic.observables", cfg.grid.dim);
        s.finish();
    }
    if (root.has("particles")) {
        auto s = root.object("particles");
        auto& p = cfg.particles;
        const auto N = s.integer("N");
        if (N < 1) throw ConfigError("config.particles.N: must be >= 1");
        p.N = static_cast<std::size_t>(N);
        p.dt = s.number("dt");
        p.T = s.number("T");
        p.seed = s.unsigned_integer("seed", 0);
        p.refresh_every = static_cast<int>(s.integer("refresh_every", 1));
        p.bandwidth = static_cast<int>(s.integer("bandwidth", 0));
        p.records = static_cast<int>(s.integer("records", 64));
        p.u_floor = s.number("u_floor", 1e-8);
        p.ergodic_times = s.numbers("ergodic_times");
        s.finish();
        if (!(p.dt > 0.0) || !(p.T > 0.0)) throw ConfigError("config.particles: dt and T must be positive");
    }
    if (root.has("compare")) {
        auto s = root.object("compare");
        auto& c = cfg.compare;
        c.l1_max = s.number("l1_max", c.l1_max);
        c.stderr_factor = s.number("stderr_factor", c.stderr_factor);
        c.occupation_tol = s.number("occupation_tol", c.occupation_tol);
        if (s.has("box_lo") || s.has("box_hi")) {
            c.box_lo = detail::to_point(s.numbers("box_lo"), cfg.grid.dim, "config.compare.box_lo");
            c.box_hi = detail::to_point(s.numbers("box_hi"), cfg.grid.dim, "config.compare.box_hi");
            c.has_box = true;
        }
        s.finish();
    }
    if (root.has("check")) {
        auto s = root.object("check");
        auto& c = cfg.check;
        if (s.has("require")) {
            const auto& r = s.at("require");
            if (!r.is_array()) throw ConfigError("config.check.require: expected an array of strings");
            c.require.clear();
            for (const auto& e : r) {
                if (!e.is_string()) throw ConfigError("config.check.require: expected an array of strings");
                const auto name = e.get<std::string>();
                if (name != "h1" && name != "h2" && name != "h3" && name != "uniqueness")
                    throw ConfigError("config.check.require: unknown report '" + name + "'");
                c.require.insert(name);
            }
        }
        c.r_max = s.number("r_max", c.r_max);
        c.r_count = static_cast<int>(s.integer("r_count", c.r_count));
        c.r_random = static_cast<int>(s.integer("r_random", c.r_random));
        c.seed = s.unsigned_integer("seed", c.seed);
        if (s.has("x_radius")) c.x_radius = s.number("x_radius");
        c.x_per_axis = static_cast<int>(s.integer("x_per_axis", c.x_per_axis));
        c.x_random = static_cast<int>(s.integer("x_random", c.x_random));
        if (s.has("quad_radius")) c.quad_radius = s.number("quad_radius");
        c.phi_threshold = s.number("phi_threshold", c.phi_threshold);
        c.shells = static_cast<int>(s.integer("shells", c.shells));
        if (s.has("alpha")) c.alpha = s.number("alpha");
        c.b_r_max = s.number("b_r_max", c.b_r_max);
        c.b_upper = s.number("b_upper", c.b_upper);
        c.fp_r_lo = s.number("fp_r_lo", c.fp_r_lo);
        c.fp_r_hi = s.number("fp_r_hi", c.fp_r_hi);
        s.finish();
    }
    root.finish();

    try {
        cfg.solver.validate();
        (void)cfg.coefficients();
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }

    nlohmann::json hashed = doc;
    if (!cfg.table_path.empty()) hashed["family"]["table_digest"] = io::hex64(io::fnv1a(io::read_text(cfg.table_path)));
    if (cfg.initial.kind == "file") hashed["initial"]["file_digest"] = io::hex64(io::fnv1a(io::read_text(cfg.initial.path)));
    cfg.hash = io::hex64(io::fnv1a(hashed.dump()));
    cfg.raw = std::move(doc);
    return cfg;
}

inline RunConfig load_config(const std::filesystem::path& path, std::optional<std::uint64_t> seed_override = std::nullopt) {
    std::string text;
    try {
        text = io::read_text(path);
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return parse_config(std::move(doc), path.parent_path(), seed_override);
}

inline DensityField RunConfig::initial_density() const {
    if (initial.kind == "uniform") return uniform_density(grid);
    if (initial.kind == "file") {
        DensityField u = io::read_binary(initial.path);
        if (!(u.grid == grid)) throw ConfigError("initial density file lives on a different grid");
        return normalized(std::move(u));
    }
    std::vector<double> c = initial.center;
    if (c.empty()) c.assign(grid.dim, 0.0);
    return project_gaussian(grid, c, initial.sigma);
}

}  // namespace fpflow
