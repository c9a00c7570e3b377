#include "expdist/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <system_error>

#include <unistd.h>

namespace expdist {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string join(const std::string& path, const std::string& key) { return path + "/" + key; }
std::string join(const std::string& path, std::size_t i) { return path + "/" + std::to_string(i); }

void require_object(const json& j, const std::string& path) {
    if (!j.is_object()) throw SchemaError(path.empty() ? "/" : path, "expected an object");
}

void require_array(const json& j, const std::string& path) {
    if (!j.is_array()) throw SchemaError(path, "expected an array");
}

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& path) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!allowed.contains(it.key())) throw SchemaError(join(path, it.key()), "unknown key");
    }
}

const json& require(const json& j, const std::string& key, const std::string& path) {
    const auto it = j.find(key);
    if (it == j.end()) throw SchemaError(join(path, key), "missing required key");
    return *it;
}

// null encodes a non-finite value in artifacts.
double as_double(const json& j, const std::string& path, bool allow_null) {
    if (j.is_null() && allow_null) return kNaN;
    if (!j.is_number()) throw SchemaError(path, "expected a number");
    return j.get<double>();
}

long long as_int(const json& j, const std::string& path) {
    if (!j.is_number_integer()) throw SchemaError(path, "expected an integer");
    return j.get<long long>();
}

std::uint64_t as_u64(const json& j, const std::string& path) {
    if (j.is_number_unsigned()) return j.get<std::uint64_t>();
    if (j.is_number_integer() && j.get<long long>() >= 0) return static_cast<std::uint64_t>(j.get<long long>());
    throw SchemaError(path, "expected a non-negative integer");
}

bool as_bool(const json& j, const std::string& path) {
    if (!j.is_boolean()) throw SchemaError(path, "expected a boolean");
    return j.get<bool>();
}

std::string as_string(const json& j, const std::string& path) {
    if (!j.is_string()) throw SchemaError(path, "expected a string");
    return j.get<std::string>();
}

json number(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

json complex_json(cplx z) { return json::array({number(z.real()), number(z.imag())}); }

cplx as_complex(const json& j, const std::string& path, bool allow_null = false) {
    if (!j.is_array() || j.size() != 2) throw SchemaError(path, "expected [re, im]");
    return {as_double(j[0], join(path, std::size_t{0}), allow_null),
            as_double(j[1], join(path, std::size_t{1}), allow_null)};
}

json complex_array(std::span<const cplx> v) {
    json a = json::array();
    for (const cplx& z : v) a.push_back(complex_json(z));
    return a;
}

std::vector<cplx> complex_vector(const json& j, const std::string& path, bool allow_null = false) {
    require_array(j, path);
    std::vector<cplx> out;
    out.reserve(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) out.push_back(as_complex(j[i], join(path, i), allow_null));
    return out;
}

json double_array(std::span<const double> v) {
    json a = json::array();
    for (double x : v) a.push_back(number(x));
    return a;
}

std::vector<double> double_vector(const json& j, const std::string& path, bool allow_null = true) {
    require_array(j, path);
    std::vector<double> out;
    out.reserve(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) out.push_back(as_double(j[i], join(path, i), allow_null));
    return out;
}

template <class Enum, class Parse>
Enum as_enum(const json& j, const std::string& path, Parse parse) {
    const std::string s = as_string(j, path);
    try {
        return parse(s);
    } catch (const ConfigError& e) {
        throw SchemaError(path, e.what());
    }
}

// Reads optional keys of an object into existing defaults.
class ObjectReader {
public:
    ObjectReader(const json& j, std::string path, std::set<std::string> allowed) : j_(j), path_(std::move(path)) {
        require_object(j_, path_);
        check_keys(j_, allowed, path_);
    }
    [[nodiscard]] const json* find(const std::string& key) const {
        const auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }
    [[nodiscard]] std::string at(const std::string& key) const { return join(path_, key); }
    void read(const std::string& key, double& out, bool allow_null = false) const {
        if (const json* v = find(key)) out = as_double(*v, at(key), allow_null);
    }
    void read(const std::string& key, int& out) const {
        if (const json* v = find(key)) {
            const long long x = as_int(*v, at(key));
            if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) {
                throw SchemaError(at(key), "integer out of range");
            }
            out = static_cast<int>(x);
        }
    }
    void read(const std::string& key, std::uint64_t& out) const {
        if (const json* v = find(key)) out = as_u64(*v, at(key));
    }
    void read(const std::string& key, bool& out) const {
        if (const json* v = find(key)) out = as_bool(*v, at(key));
    }
    void read(const std::string& key, std::string& out) const {
        if (const json* v = find(key)) out = as_string(*v, at(key));
    }
    void read(const std::string& key, cplx& out) const {
        if (const json* v = find(key)) out = as_complex(*v, at(key));
    }
    void read(const std::string& key, std::vector<double>& out, bool allow_null = false) const {
        if (const json* v = find(key)) out = double_vector(*v, at(key), allow_null);
    }

private:
    const json& j_;
    std::string path_;
};

std::string csv_double(double x) { return std::isfinite(x) ? format_double(x) : (std::isnan(x) ? "nan" : (x > 0 ? "inf" : "-inf")); }

}  // namespace

std::string format_double(double x) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, r.ptr);
}

std::string dump_json(const json& doc) { return doc.dump(2) + "\n"; }

json parse_json(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw SchemaError("/", std::string("malformed JSON: ") + e.what());
    }
}

json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw SchemaError("/", "cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_json(ss.str());
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out << content;
        out.flush();
        if (!out) {
            std::error_code ec;
            std::filesystem::remove(tmp, ec);
            throw std::runtime_error("write failed for " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// Fields
// ---------------------------------------------------------------------------

json field_to_json(const MapField& map, const json& metadata) {
    const TriGrid& g = map.grid();
    json grid = {{"nx", g.nx()}, {"ny", g.ny()}, {"spacing", g.spacing()}, {"domain", to_string(g.domain())}};
    if (g.domain() == DomainKind::disk_truncated) grid["delta"] = g.delta();
    json mask = json::array();
    for (std::uint8_t b : g.boundary_mask()) mask.push_back(static_cast<int>(b));
    return {{"grid", grid}, {"nodes", complex_array(map.values())}, {"boundary_mask", mask}, {"metadata", metadata}};
}

LoadedField field_from_json(const json& doc, const std::string& path) {
    const ObjectReader top(doc, path, {"grid", "nodes", "boundary_mask", "metadata"});
    const json& gj = require(doc, "grid", path);
    const std::string gp = join(path, "grid");
    const ObjectReader gr(gj, gp, {"nx", "ny", "spacing", "domain", "delta"});
    const long long nx = as_int(require(gj, "nx", gp), join(gp, "nx"));
    const long long ny = as_int(require(gj, "ny", gp), join(gp, "ny"));
    if (nx < 2 || nx > 100000) throw SchemaError(join(gp, "nx"), "must lie in [2, 100000]");
    if (ny != nx) throw SchemaError(join(gp, "ny"), "only square lattices (ny = nx) are supported");
    const double spacing = as_double(require(gj, "spacing", gp), join(gp, "spacing"), false);
    const DomainKind domain = as_enum<DomainKind>(require(gj, "domain", gp), join(gp, "domain"), domain_from_string);
    double delta = 0.05;
    if (domain == DomainKind::disk_truncated) {
        delta = as_double(require(gj, "delta", gp), join(gp, "delta"), false);
        if (!(delta > 0.0 && delta < 0.5)) throw SchemaError(join(gp, "delta"), "must lie in (0, 0.5)");
    } else if (gr.find("delta")) {
        throw SchemaError(join(gp, "delta"), "only valid for disk_truncated");
    }
    const auto grid = domain == DomainKind::unit_square ? TriGrid::unit_square(static_cast<int>(nx))
                                                         : TriGrid::disk_truncated(static_cast<int>(nx), delta);
    if (spacing != grid->spacing()) throw SchemaError(join(gp, "spacing"), "inconsistent with nx");

    const std::string np = join(path, "nodes");
    std::vector<cplx> nodes = complex_vector(require(doc, "nodes", path), np);
    if (nodes.size() != grid->num_nodes()) throw SchemaError(np, "expected nx * ny nodes");
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (!std::isfinite(nodes[i].real()) || !std::isfinite(nodes[i].imag())) {
            throw SchemaError(join(np, i), "non-finite node value");
        }
    }
    const std::string mp = join(path, "boundary_mask");
    const json& mj = require(doc, "boundary_mask", path);
    require_array(mj, mp);
    if (mj.size() != grid->num_nodes()) throw SchemaError(mp, "expected nx * ny entries");
    const auto expected = grid->boundary_mask();
    for (std::size_t i = 0; i < mj.size(); ++i) {
        const long long b = as_int(mj[i], join(mp, i));
        if (b != expected[i]) throw SchemaError(join(mp, i), "does not match the grid boundary");
    }
    json metadata = json::object();
    if (const json* m = top.find("metadata")) {
        require_object(*m, join(path, "metadata"));
        metadata = *m;
    }
    return {MapField(grid, std::move(nodes)), metadata};
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

json config_to_json(const SolveConfig& c) {
    return {
        {"integrand", to_string(c.integrand)},
        {"p", c.p},
        {"truncation", c.truncation},
        {"weight", to_string(c.weight)},
        {"domain", to_string(c.domain)},
        {"grid_n", c.grid_n},
        {"delta", c.delta},
        {"boundary",
         {{"kind", to_string(c.boundary.kind)},
          {"a", complex_json(c.boundary.a)},
          {"b", complex_json(c.boundary.b)},
          {"c", complex_json(c.boundary.c)},
          {"epsilon", c.boundary.epsilon}}},
        {"max_iters", c.max_iters},
        {"grad_tol", c.grad_tol},
        {"rel_grad_tol", c.rel_grad_tol},
        {"lambda_schedule", c.lambda_schedule},
        {"p_schedule", c.p_schedule},
        {"seed", to_string(c.seed)},
        {"memory", c.memory},
        {"overflow_cap", c.overflow_cap},
        {"rng_seed", c.rng_seed},
    };
}

SolveConfig config_from_json(const json& doc, const std::string& path) {
    static const std::set<std::string> keys = {"integrand",  "p",         "truncation",   "weight",       "domain",
                                               "grid_n",     "delta",     "boundary",     "max_iters",    "grad_tol",
                                               "rel_grad_tol", "lambda_schedule", "p_schedule", "seed", "memory",
                                               "overflow_cap", "rng_seed"};
    const ObjectReader r(doc, path, keys);
    SolveConfig c;
    if (const json* v = r.find("integrand")) c.integrand = as_enum<IntegrandKind>(*v, r.at("integrand"), integrand_from_string);
    r.read("p", c.p);
    r.read("truncation", c.truncation);
    if (const json* v = r.find("weight")) c.weight = as_enum<WeightKind>(*v, r.at("weight"), weight_from_string);
    if (const json* v = r.find("domain")) c.domain = as_enum<DomainKind>(*v, r.at("domain"), domain_from_string);
    r.read("grid_n", c.grid_n);
    r.read("delta", c.delta);
    if (const json* b = r.find("boundary")) {
        const ObjectReader br(*b, r.at("boundary"), {"kind", "a", "b", "c", "epsilon"});
        if (const json* v = br.find("kind")) c.boundary.kind = as_enum<BoundaryKind>(*v, br.at("kind"), boundary_from_string);
        br.read("a", c.boundary.a);
        br.read("b", c.boundary.b);
        br.read("c", c.boundary.c);
        br.read("epsilon", c.boundary.epsilon);
    }
    r.read("max_iters", c.max_iters);
    r.read("grad_tol", c.grad_tol);
    r.read("rel_grad_tol", c.rel_grad_tol);
    r.read("lambda_schedule", c.lambda_schedule);
    r.read("p_schedule", c.p_schedule);
    if (const json* v = r.find("seed")) c.seed = as_enum<SeedKind>(*v, r.at("seed"), seed_from_string);
    r.read("memory", c.memory);
    r.read("overflow_cap", c.overflow_cap);
    r.read("rng_seed", c.rng_seed);
    if (c.seed == SeedKind::provided) throw SchemaError(r.at("seed"), "'provided' seeds come from --seed-map");
    if (c.grid_n > 1025) throw SchemaError(r.at("grid_n"), "must be at most 1025");
    if (c.boundary.kind == BoundaryKind::affine &&
        !(std::norm(c.boundary.a) > std::norm(c.boundary.b))) {
        throw SchemaError(r.at("boundary"), "affine boundary must be orientation preserving (|a| > |b|)");
    }
    try {
        c.validate();
    } catch (const ConfigError& e) {
        // Point at the key the message names.
        const std::string msg = e.what();
        std::string where = path.empty() ? "/" : path;
        std::size_t best = std::string::npos;
        for (const std::string& k : keys) {
            const std::size_t pos = msg.find(k);
            if (pos != std::string::npos && (best == std::string::npos || pos < best)) {
                best = pos;
                where = r.at(k);
            }
        }
        if (best == std::string::npos && (msg.find("lambda") != std::string::npos)) where = r.at("lambda_schedule");
        if (best == std::string::npos && msg.find("p must") != std::string::npos) where = r.at("p");
        throw SchemaError(where, msg);
    }
    return c;
}

json diagnostics_to_json(const DiagnosticOptions& o) {
    return {{"margin", o.margin},
            {"zero_threshold", o.zero_threshold},
            {"neighbors", o.scatter.neighbors},
            {"min_neighbors", o.scatter.min_neighbors},
            {"fit", o.scatter.fit == ScatterFit::affine ? "affine" : "quadratic"},
            {"battery_size", o.battery_size},
            {"seed", o.seed},
            {"tension_points", o.tension_points},
            {"full_metric", o.full_metric}};
}

DiagnosticOptions diagnostics_from_json(const json& doc, const std::string& path) {
    const ObjectReader r(doc, path,
                         {"margin", "zero_threshold", "neighbors", "min_neighbors", "fit", "battery_size", "seed",
                          "tension_points", "full_metric"});
    DiagnosticOptions o;
    r.read("margin", o.margin);
    r.read("zero_threshold", o.zero_threshold);
    r.read("neighbors", o.scatter.neighbors);
    r.read("min_neighbors", o.scatter.min_neighbors);
    std::string fit = "affine";
    r.read("fit", fit);
    if (fit == "quadratic") {
        o.scatter.fit = ScatterFit::quadratic;
    } else if (fit != "affine") {
        throw SchemaError(r.at("fit"), "expected 'affine' or 'quadratic'");
    }
    r.read("battery_size", o.battery_size);
    r.read("seed", o.seed);
    r.read("tension_points", o.tension_points);
    r.read("full_metric", o.full_metric);
    if (!(o.margin >= 0.0 && o.margin < 0.5)) throw SchemaError(r.at("margin"), "must lie in [0, 0.5)");
    if (!(o.zero_threshold >= 0.0)) throw SchemaError(r.at("zero_threshold"), "must be non-negative");
    if (o.scatter.min_neighbors < 3 || o.scatter.neighbors < o.scatter.min_neighbors) {
        throw SchemaError(r.at("neighbors"), "need neighbors >= min_neighbors >= 3");
    }
    if (o.battery_size < 1) throw SchemaError(r.at("battery_size"), "must be positive");
    if (o.tension_points < 3) throw SchemaError(r.at("tension_points"), "must be at least 3");
    return o;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

json to_json(const EnergyReport& e) {
    return {{"integrand", e.integrand},
            {"p", number(e.p)},
            {"lambda", number(e.lambda)},
            {"energy", number(e.energy)},
            {"log_energy", number(e.log_energy)},
            {"normalized", number(e.normalized)},
            {"weighted_area", number(e.weighted_area)},
            {"max_distortion", number(e.max_distortion)},
            {"mean_distortion", number(e.mean_distortion)},
            {"admissible", e.admissible},
            {"non_admissible_elements", e.non_admissible_elements},
            {"per_element", double_array(e.per_element)}};
}

EnergyReport energy_report_from_json(const json& doc, const std::string& path) {
    const ObjectReader r(doc, path,
                         {"integrand", "p", "lambda", "energy", "log_energy", "normalized", "weighted_area",
                          "max_distortion", "mean_distortion", "admissible", "non_admissible_elements",
                          "per_element"});
    EnergyReport e;
    r.read("integrand", e.integrand);
    r.read("p", e.p, true);
    r.read("lambda", e.lambda, true);
    // Non-admissible reports carry +inf energies, written as null.
    e.energy = e.log_energy = e.normalized = std::numeric_limits<double>::infinity();
    r.read("energy", e.energy, true);
    r.read("log_energy", e.log_energy, true);
    r.read("normalized", e.normalized, true);
    r.read("weighted_area", e.weighted_area, true);
    r.read("max_distortion", e.max_distortion, true);
    r.read("mean_distortion", e.mean_distortion, true);
    r.read("admissible", e.admissible);
    r.read("non_admissible_elements", e.non_admissible_elements);
    r.read("per_element", e.per_element, true);
    if (!e.admissible) {
        for (double* x : {&e.energy, &e.log_energy, &e.normalized}) {
            if (std::isnan(*x)) *x = std::numeric_limits<double>::infinity();
        }
    }
    return e;
}

json to_json(const TraceEntry& t) {
    return {{"parameter", t.parameter},   {"value", number(t.value)},
            {"energy", number(t.energy)}, {"log_energy", number(t.log_energy)},
            {"normalized", number(t.normalized)}, {"grad_norm", number(t.grad_norm)},
            {"iterations", t.iterations}, {"converged", t.converged}};
}

TraceEntry trace_entry_from_json(const json& doc, const std::string& path) {
    const ObjectReader r(doc, path,
                         {"parameter", "value", "energy", "log_energy", "normalized", "grad_norm", "iterations",
                          "converged"});
    TraceEntry t;
    r.read("parameter", t.parameter);
    r.read("value", t.value, true);
    r.read("energy", t.energy, true);
    r.read("log_energy", t.log_energy, true);
    r.read("normalized", t.normalized, true);
    r.read("grad_norm", t.grad_norm, true);
    r.read("iterations", t.iterations);
    r.read("converged", t.converged);
    return t;
}

json solve_result_to_json(const SolveResult& s, const SolveConfig& config) {
    json trace = json::array();
    for (const TraceEntry& t : s.continuation_trace) trace.push_back(to_json(t));
    EnergyReport report = s.report;
    report.per_element.clear();
    return {{"kind", "solve_result"},
            {"rng_seed", config.rng_seed},
            {"config", config_to_json(config)},
            {"status", s.status},
            {"converged", s.converged},
            {"iterations", s.iterations},
            {"grad_norm", number(s.grad_norm)},
            {"log_grad_norm", number(s.log_grad_norm)},
            {"report", to_json(report)},
            {"continuation_trace", trace},
            {"map", field_to_json(s.map, {{"rng_seed", config.rng_seed}})}};
}

LoadedSolve solve_result_from_json(const json& doc, const std::string& path) {
    const ObjectReader r(doc, path,
                         {"kind", "rng_seed", "config", "status", "converged", "iterations", "grad_norm",
                          "log_grad_norm", "report", "continuation_trace", "map"});
    if (as_string(require(doc, "kind", path), r.at("kind")) != "solve_result") {
        throw SchemaError(r.at("kind"), "expected 'solve_result'");
    }
    SolveConfig config = config_from_json(require(doc, "config", path), r.at("config"));
    LoadedField field = field_from_json(require(doc, "map", path), r.at("map"));
    SolveResult s{.map = field.map};
    r.read("status", s.status);
    r.read("converged", s.converged);
    r.read("iterations", s.iterations);
    r.read("grad_norm", s.grad_norm, true);
    r.read("log_grad_norm", s.log_grad_norm, true);
    if (const json* rep = r.find("report")) s.report = energy_report_from_json(*rep, r.at("report"));
    if (const json* tr = r.find("continuation_trace")) {
        require_array(*tr, r.at("continuation_trace"));
        for (std::size_t i = 0; i < tr->size(); ++i) {
            s.continuation_trace.push_back(trace_entry_from_json((*tr)[i], join(r.at("continuation_trace"), i)));
        }
    }
    std::uint64_t seed = config.rng_seed;
    r.read("rng_seed", seed);
    if (seed != config.rng_seed) throw SchemaError(r.at("rng_seed"), "differs from config.rng_seed");
    return {std::move(s), config};
}

json sweep_result_to_json(const SweepResult& sweep, const SolveConfig& config) {
    json rungs = json::array();
    for (const SolveResult& s : sweep.rungs) {
        json trace = json::array();
        for (const TraceEntry& t : s.continuation_trace) trace.push_back(to_json(t));
        EnergyReport report = s.report;
        report.per_element.clear();
        rungs.push_back({{"p", number(s.report.p)},
                         {"status", s.status},
                         {"converged", s.converged},
                         {"iterations", s.iterations},
                         {"grad_norm", number(s.grad_norm)},
                         {"report", to_json(report)},
                         {"continuation_trace", trace}});
    }
    return {{"kind", "sweep_result"},
            {"rng_seed", config.rng_seed},
            {"config", config_to_json(config)},
            {"status", sweep.status},
            {"complete", sweep.complete},
            {"monotone", sweep.monotone},
            {"capped", double_array(sweep.capped)},
            {"rungs", rungs}};
}

json to_json(const ResidualBundle& b) {
    return {{"h", number(b.h)},
            {"inner_variation", number(b.inner_variation)},
            {"ahlfors_hopf_dbar", number(b.ahlfors_hopf_dbar)},
            {"mu_equation", number(b.mu_equation)},
            {"tension", number(b.tension)},
            {"teichmuller_phase", number(b.teichmuller_phase)},
            {"f_identity", number(b.f_identity)},
            {"k_estimate", number(b.k_estimate)},
            {"k_dispersion", number(b.k_dispersion)},
            {"phi_l1", number(b.phi_l1)},
            {"phi_dispersion", number(b.phi_dispersion)}};
}

ResidualBundle residual_bundle_from_json(const json& doc, const std::string& path) {
    const ObjectReader r(doc, path,
                         {"h", "inner_variation", "ahlfors_hopf_dbar", "mu_equation", "tension", "teichmuller_phase",
                          "f_identity", "k_estimate", "k_dispersion", "phi_l1", "phi_dispersion"});
    ResidualBundle b;
    r.read("h", b.h, true);
    r.read("inner_variation", b.inner_variation, true);
    r.read("ahlfors_hopf_dbar", b.ahlfors_hopf_dbar, true);
    r.read("mu_equation", b.mu_equation, true);
    r.read("tension", b.tension, true);
    r.read("teichmuller_phase", b.teichmuller_phase, true);
    r.read("f_identity", b.f_identity, true);
    r.read("k_estimate", b.k_estimate, true);
    r.read("k_dispersion", b.k_dispersion, true);
    r.read("phi_l1", b.phi_l1, true);
    r.read("phi_dispersion", b.phi_dispersion, true);
    return b;
}

json to_json(const QuadDifferentialField& q) {
    json interior = json::array();
    for (std::uint8_t b : q.interior) interior.push_back(static_cast<int>(b));
    json zeros = json::array();
    for (std::size_t i : q.zero_indices) zeros.push_back(i);
    return {{"support", q.support == PhiSupport::scattered ? "scattered" : "gridded"},
            {"h", number(q.h)},
            {"l1_norm", number(q.l1_norm)},
            {"dbar_residual_l1", number(q.dbar_residual_l1)},
            {"dbar_residual_linf", number(q.dbar_residual_linf)},
            {"median_abs", number(q.median_abs)},
            {"excluded", q.excluded},
            {"sources", complex_array(q.sources)},
            {"points", complex_array(q.points)},
            {"values", complex_array(q.values)},
            {"weights", double_array(q.weights)},
            {"interior", interior},
            {"dbar_pointwise", double_array(q.dbar_pointwise)},
            {"zero_candidates", complex_array(q.zero_candidates)},
            {"zero_indices", zeros}};
}

QuadDifferentialField quad_field_from_json(const json& doc, const std::string& path) {
    const ObjectReader r(doc, path,
                         {"support", "h", "l1_norm", "dbar_residual_l1", "dbar_residual_linf", "median_abs", "excluded",
                          "sources", "points", "values", "weights", "interior", "dbar_pointwise", "zero_candidates",
                          "zero_indices"});
    QuadDifferentialField q;
    std::string support = "scattered";
    r.read("support", support);
    if (support == "gridded") {
        q.support = PhiSupport::gridded;
    } else if (support != "scattered") {
        throw SchemaError(r.at("support"), "expected 'scattered' or 'gridded'");
    }
    r.read("h", q.h, true);
    r.read("l1_norm", q.l1_norm, true);
    r.read("dbar_residual_l1", q.dbar_residual_l1, true);
    r.read("dbar_residual_linf", q.dbar_residual_linf, true);
    r.read("median_abs", q.median_abs, true);
    r.read("excluded", q.excluded);
    if (const json* v = r.find("sources")) q.sources = complex_vector(*v, r.at("sources"));
    if (const json* v = r.find("points")) q.points = complex_vector(*v, r.at("points"));
    if (const json* v = r.find("values")) q.values = complex_vector(*v, r.at("values"));
    r.read("weights", q.weights, true);
    r.read("dbar_pointwise", q.dbar_pointwise, true);
    if (const json* v = r.find("interior")) {
        require_array(*v, r.at("interior"));
        for (std::size_t i = 0; i < v->size(); ++i) {
            q.interior.push_back(static_cast<std::uint8_t>(as_int((*v)[i], join(r.at("interior"), i)) != 0));
        }
    }
    if (const json* v = r.find("zero_candidates")) q.zero_candidates = complex_vector(*v, r.at("zero_candidates"));
    if (const json* v = r.find("zero_indices")) {
        require_array(*v, r.at("zero_indices"));
        for (std::size_t i = 0; i < v->size(); ++i) q.zero_indices.push_back(as_u64((*v)[i], join(r.at("zero_indices"), i)));
    }
    const std::size_t n = q.points.size();
    if (q.values.size() != n || q.weights.size() != n || q.interior.size() != n) {
        throw SchemaError(r.at("values"), "points, values, weights and interior must have equal length");
    }
    return q;
}

json to_json(const std::vector<HamiltonEntry>& entries) {
    json a = json::array();
    for (const HamiltonEntry& e : entries) {
        a.push_back({{"n", e.n},
                     {"norm", number(e.norm)},
                     {"log_norm", number(e.log_norm)},
                     {"distance", number(e.distance)},
                     {"ratio", number(e.ratio)}});
    }
    return a;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

std::string trace_csv(const std::vector<TraceEntry>& trace) {
    std::ostringstream out;
    out << "parameter,value,energy,log_energy,normalized,grad_norm,iterations,converged\n";
    for (const TraceEntry& t : trace) {
        out << t.parameter << ',' << csv_double(t.value) << ',' << csv_double(t.energy) << ','
            << csv_double(t.log_energy) << ',' << csv_double(t.normalized) << ',' << csv_double(t.grad_norm) << ','
            << t.iterations << ',' << (t.converged ? 1 : 0) << '\n';
    }
    return out.str();
}

std::string history_csv(const std::vector<IterationRecord>& history) {
    std::ostringstream out;
    out << "rung,iteration,log_energy,log_grad_norm,step\n";
    for (const IterationRecord& h : history) {
        out << h.rung << ',' << h.iteration << ',' << csv_double(h.log_energy) << ',' << csv_double(h.log_grad_norm)
            << ',' << csv_double(h.step) << '\n';
    }
    return out.str();
}

std::string per_element_csv(const MapField& map) {
    const DerivedField d = wirtinger(map);
    const auto shapes = map.grid().shapes();
    std::ostringstream out;
    out << "triangle,centroid_re,centroid_im,fz_re,fz_im,fzbar_re,fzbar_im,jacobian,mu_abs,big_k\n";
    for (std::size_t t = 0; t < d.size(); ++t) {
        out << t << ',' << csv_double(shapes[t].centroid.real()) << ',' << csv_double(shapes[t].centroid.imag()) << ','
            << csv_double(d.fz[t].real()) << ',' << csv_double(d.fz[t].imag()) << ',' << csv_double(d.fzbar[t].real())
            << ',' << csv_double(d.fzbar[t].imag()) << ',' << csv_double(d.jacobian[t]) << ','
            << csv_double(std::abs(d.mu[t])) << ',' << csv_double(d.big_k[t]) << '\n';
    }
    return out.str();
}

}  // namespace expdist
