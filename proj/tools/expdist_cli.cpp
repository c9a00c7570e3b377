#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "expdist/checks.hpp"
#include "expdist/diagnostics.hpp"
#include "expdist/functional.hpp"
#include "expdist/io.hpp"
#include "expdist/kernels.hpp"
#include "expdist/solver.hpp"
#include "plot.hpp"

namespace fs = std::filesystem;
using namespace expdist;

namespace {

constexpr int kExitNumerical = 1;
constexpr int kExitSchema = 2;

fs::path default_output_dir() {
    if (const char* env = std::getenv("EXPDIST_OUTPUT_DIR")) return env;
    return ".";
}

std::vector<double> parse_points(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != item.size()) throw SchemaError("--at", "cannot parse '" + item + "' as a number");
        out.push_back(v);
    }
    if (out.empty()) throw SchemaError("--at", "no evaluation points");
    return out;
}

std::string cell(double v) {
    if (std::isnan(v)) return "-";
    std::ostringstream s;
    s << std::setprecision(4) << std::scientific << v;
    return s.str();
}

// A solution file is either a solve artifact or a bare field dump.
struct Solution {
    MapField map;
    std::optional<SolveConfig> config;
};

Solution load_solution(const fs::path& path) {
    const json doc = read_json_file(path);
    if (doc.is_object() && doc.contains("kind")) {
        LoadedSolve s = solve_result_from_json(doc);
        return {s.result.map, s.config};
    }
    return {field_from_json(doc).map, std::nullopt};
}

struct ProblemOptions {
    std::string integrand = "exp_p";
    double p = 1.0;
    double lambda = 1.0;
    int truncation = 0;
    std::string weight = "euclidean";
};

IntegrandSpec integrand_of(const ProblemOptions& o) {
    IntegrandSpec spec;
    switch (integrand_from_string(o.integrand)) {
        case IntegrandKind::exp_p: spec = IntegrandSpec::exp_p(o.p); break;
        case IntegrandKind::exp_p_lambda: spec = IntegrandSpec::exp_p_lambda(o.p, o.lambda); break;
        case IntegrandKind::truncated: spec = IntegrandSpec::truncated(o.p, o.truncation); break;
    }
    spec.validate();
    return spec;
}

// ---------------------------------------------------------------------------
// kernels
// ---------------------------------------------------------------------------

int run_kernels_eval(const std::string& fn, double p, double lambda, const std::string& at, double k) {
    const DistortionParams params{p, lambda};
    try {
        params.validate();
    } catch (const std::domain_error& e) {
        throw SchemaError("--p/--lambda", e.what());
    }
    const std::vector<double> points = parse_points(at);
    std::ostringstream out;
    out << "point,value,derivative,residual\n";
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (double x : points) {
        KernelEval e{nan, nan, 0.0, 0};
        if (fn == "big_k_from_mu") {
            e.value = big_k_from_mu(x);
            e.derivative = 4.0 * x / ((1.0 - x * x) * (1.0 - x * x));
        } else if (fn == "big_k_vs_bold_k") {
            e.value = big_k_vs_bold_k(x);
            e.derivative = 0.5 * (1.0 - 1.0 / (x * x));
        } else if (fn == "a_p") {
            e.value = a_p(x, params);
            e.derivative = a_p_derivative(x, params);
        } else if (fn == "a_p_inverse") {
            e = a_p_inverse(x, params);
        } else if (fn == "a_tilde_p") {
            e.value = a_tilde_p(x, params);
            e.derivative = a_tilde_p_derivative(x, params);
        } else if (fn == "b_p_inverse") {
            e = b_p_inverse(x, params);
        } else if (fn == "a_p_lambda") {
            e.value = a_p_lambda(x, params);
            e.derivative = a_p_lambda_derivative(x, params);
        } else if (fn == "a_p_lambda_inverse") {
            e = a_p_lambda_inverse(x, params);
        } else if (fn == "v_lambda") {
            e = v_lambda(x, k, params);
        } else if (fn == "uniqueness_kernel") {
            e = uniqueness_kernel(x, k, params);
        } else if (fn == "ellipticity_ratio_a") {
            e.value = ellipticity_ratio_a(x, params);
        } else if (fn == "r_p") {
            e.value = r_p(x, params);
        } else if (fn == "m_p") {
            const MinSlope m = m_p({x, 1.0});
            e.value = m.over_nonnegative;
            e.derivative = m.over_shifted;
        } else {
            throw SchemaError("--fn", "unknown kernel '" + fn + "'");
        }
        out << format_double(x) << ',' << format_double(e.value) << ',' << format_double(e.derivative) << ','
            << format_double(e.residual) << '\n';
    }
    std::cout << out.str();
    return 0;
}

int run_kernels_check() {
    const CheckSuite suite = kernel_invariant_suite();
    for (const CheckResult& r : suite.results) {
        std::cout << (r.passed ? "PASS " : "FAIL ") << std::left << std::setw(56) << r.name << " worst=" << cell(r.worst)
                  << " limit=" << cell(r.limit) << " n=" << r.samples << " violations=" << r.violations << '\n';
    }
    std::cout << "kernels check: " << (suite.passed() ? "pass" : "fail") << " (" << std::fixed << std::setprecision(2)
              << suite.seconds << " s)\n";
    return suite.passed() ? 0 : kExitNumerical;
}

// ---------------------------------------------------------------------------
// energy
// ---------------------------------------------------------------------------

int run_energy(const fs::path& map_path, const ProblemOptions& o, bool inverse, bool per_element) {
    const Solution s = load_solution(map_path);
    const IntegrandSpec spec = integrand_of(o);
    const WeightSpec weight = weight_eval(weight_from_string(o.weight), s.map.grid());
    EnergyReport report = inverse ? inverse_energy(s.map, weight, spec) : energy(s.map, weight, spec, per_element);
    if (!per_element) report.per_element.clear();
    std::cout << dump_json(to_json(report));
    return report.admissible ? 0 : kExitNumerical;
}

// ---------------------------------------------------------------------------
// solve / sweep
// ---------------------------------------------------------------------------

SolveConfig load_config(const fs::path& path) { return config_from_json(read_json_file(path)); }

int run_solve(const fs::path& config_path, const fs::path& out_dir, const std::string& seed_map, bool residuals) {
    const SolveConfig config = load_config(config_path);
    std::optional<MapField> provided;
    if (!seed_map.empty()) provided = load_solution(seed_map).map;
    // Validate the diagnostics inputs before any artifact is written.
    const auto grid = make_grid(config);
    const WeightSpec weight = weight_eval(config.weight, *grid);

    SolveResult result = solve(config, provided);
    write_file_atomic(out_dir / "solution.json", dump_json(solve_result_to_json(result, config)));
    write_file_atomic(out_dir / "trace.csv", trace_csv(result.continuation_trace));
    write_file_atomic(out_dir / "history.csv", history_csv(result.history));
    if (residuals) {
        const IntegrandSpec spec = config.integrand_for(config.p, config.lambda_schedule.back());
        const ResidualBundle b = residual_bundle(result.map, weight, spec);
        write_file_atomic(out_dir / "residuals.json", dump_json(to_json(b)));
    }
    std::cout << "status=" << result.status << " iterations=" << result.iterations
              << " energy=" << format_double(result.report.energy)
              << " normalized=" << format_double(result.report.normalized)
              << " grad_norm=" << format_double(result.grad_norm) << '\n';
    return result.converged ? 0 : kExitNumerical;
}

int run_sweep(const fs::path& config_path, const fs::path& out_dir) {
    const SolveConfig config = load_config(config_path);
    if (config.p_schedule.empty()) throw SchemaError("/p_schedule", "sweep needs a non-empty p_schedule");
    const SweepResult sweep = sweep_p(config);
    std::vector<TraceEntry> trace;
    for (const SolveResult& r : sweep.rungs) {
        trace.push_back({"p", r.report.p, r.report.energy, r.report.log_energy, r.report.normalized, r.grad_norm,
                         r.iterations, r.converged});
    }
    write_file_atomic(out_dir / "sweep.json", dump_json(sweep_result_to_json(sweep, config)));
    write_file_atomic(out_dir / "sweep_trace.csv", trace_csv(trace));
    for (const TraceEntry& t : trace) {
        std::cout << "p=" << format_double(t.value) << " normalized=" << format_double(t.normalized)
                  << " converged=" << t.converged << '\n';
    }
    std::cout << "status=" << sweep.status << " monotone=" << sweep.monotone << '\n';
    return sweep.complete ? 0 : kExitNumerical;
}

// ---------------------------------------------------------------------------
// verify / export
// ---------------------------------------------------------------------------

struct VerifyInputs {
    Solution solution;
    WeightSpec weight;
    IntegrandSpec integrand;
};

VerifyInputs verify_inputs(const fs::path& path, const ProblemOptions& o) {
    Solution s = load_solution(path);
    if (s.config) {
        const SolveConfig& c = *s.config;
        const WeightSpec w = weight_eval(c.weight, s.map.grid());
        return {s, w, c.integrand_for(c.p, c.lambda_schedule.back())};
    }
    const WeightSpec w = weight_eval(weight_from_string(o.weight), s.map.grid());
    return {s, w, integrand_of(o)};
}

ResidualBundle bundle_of(const VerifyInputs& in, const DiagnosticOptions& d, bool all) {
    if (all) return residual_bundle(in.solution.map, in.weight, in.integrand, d);
    ResidualBundle b;
    const QuadDifferentialField phi = ahlfors_hopf(in.solution.map, in.weight, in.integrand, d);
    b.h = phi.h;
    b.ahlfors_hopf_dbar = phi.dbar_residual_l1;
    b.phi_l1 = phi.l1_norm;
    b.mu_equation = mu_equation_residual(in.solution.map, in.weight, in.integrand.params, d);
    b.f_identity = f_identity_residual(in.solution.map, in.integrand.params);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    b.inner_variation = b.tension = b.teichmuller_phase = b.k_estimate = b.k_dispersion = b.phi_dispersion = nan;
    return b;
}

int run_verify(const fs::path& solution, const std::string& coarse, const std::string& diag_path, bool all,
               const ProblemOptions& o, const fs::path& out_dir) {
    const VerifyInputs fine = verify_inputs(solution, o);
    std::optional<VerifyInputs> coarse_in;
    if (!coarse.empty()) coarse_in = verify_inputs(coarse, o);
    DiagnosticOptions d;
    if (!diag_path.empty()) d = diagnostics_from_json(read_json_file(diag_path));

    const ResidualBundle b = bundle_of(fine, d, all);
    std::optional<ResidualBundle> c;
    if (coarse_in) c = bundle_of(*coarse_in, d, all);

    const std::vector<std::pair<std::string, double ResidualBundle::*>> rows{
        {"inner_variation", &ResidualBundle::inner_variation}, {"ahlfors_hopf_dbar", &ResidualBundle::ahlfors_hopf_dbar},
        {"mu_equation", &ResidualBundle::mu_equation},         {"tension", &ResidualBundle::tension},
        {"teichmuller_phase", &ResidualBundle::teichmuller_phase}, {"f_identity", &ResidualBundle::f_identity},
        {"k_dispersion", &ResidualBundle::k_dispersion}};
    std::cout << std::left << std::setw(20) << "residual" << std::setw(14) << "value" << std::setw(14) << "h"
              << "decay_vs_coarse\n";
    json doc = {{"residuals", to_json(b)}};
    for (const auto& [name, field] : rows) {
        const double v = b.*field;
        const double ratio = c ? (*c).*field / v : std::numeric_limits<double>::quiet_NaN();
        std::cout << std::setw(20) << name << std::setw(14) << cell(v) << std::setw(14) << cell(b.h) << cell(ratio)
                  << '\n';
    }
    if (c) doc["coarse"] = to_json(*c);
    write_file_atomic(out_dir / "verify.json", dump_json(doc));
    return 0;
}

int run_export(const fs::path& solution, const std::string& sweep_path, bool with_plot, const ProblemOptions& o,
               const fs::path& out_dir) {
    const VerifyInputs in = verify_inputs(solution, o);
    std::optional<json> sweep_doc;
    if (!sweep_path.empty()) {
        sweep_doc = read_json_file(sweep_path);
        if (!sweep_doc->is_object() || sweep_doc->value("kind", "") != "sweep_result") {
            throw SchemaError("/kind", "expected a sweep_result document");
        }
    }
    const MapField& map = in.solution.map;
    const QuadDifferentialField phi = ahlfors_hopf(map, in.weight, in.integrand);
    write_file_atomic(out_dir / "phi.json", dump_json(to_json(phi)));
    write_file_atomic(out_dir / "elements.csv", per_element_csv(map));
    if (!with_plot) return 0;

    const DerivedField d = wirtinger_cells(map);
    const int n = map.grid().nx() - 1;
    std::vector<double> mu_abs(d.size()), big_k(d.size()), phi_abs(d.size()), phi_arg(d.size());
    for (std::size_t q = 0; q < d.size(); ++q) {
        mu_abs[q] = std::abs(d.mu[q]);
        big_k[q] = d.big_k[q];
        phi_abs[q] = std::abs(phi.values[q]);
        phi_arg[q] = phi_abs[q] > 0.0 ? std::arg(phi.values[q]) : std::numeric_limits<double>::quiet_NaN();
    }
    plot::write_heatmap(out_dir / "mu_abs.png", n, n, mu_abs);
    plot::write_heatmap(out_dir / "big_k.png", n, n, big_k);
    plot::write_heatmap(out_dir / "phi_abs.png", n, n, phi_abs);
    plot::write_heatmap(out_dir / "phi_arg.png", n, n, phi_arg, true);
    if (sweep_doc) {
        std::vector<double> ps, es;
        const json& rungs = (*sweep_doc)["rungs"];
        if (!rungs.is_array()) throw SchemaError("/rungs", "expected an array");
        for (std::size_t i = 0; i < rungs.size(); ++i) {
            const EnergyReport r = energy_report_from_json(rungs[i].at("report"), "/rungs/" + std::to_string(i) + "/report");
            ps.push_back(r.p);
            es.push_back(r.normalized);
        }
        if (!ps.empty()) plot::write_curve(out_dir / "energy_vs_p.png", ps, es);
    }
    return 0;
}

void add_problem_options(CLI::App* cmd, ProblemOptions& o) {
    cmd->add_option("--integrand", o.integrand, "exp_p | exp_p_lambda | truncated")->capture_default_str();
    cmd->add_option("--p", o.p, "exponent p > 0")->capture_default_str();
    cmd->add_option("--lambda", o.lambda, "regularisation level in (0, 1]")->capture_default_str();
    cmd->add_option("--truncation", o.truncation, "series order N for the truncated integrand")->capture_default_str();
    cmd->add_option("--weight", o.weight, "euclidean | hyperbolic")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"p-exponential distortion energy: kernels, solver and diagnostics"};
    app.require_subcommand(1);
    fs::path out_dir = default_output_dir();

    auto* kernels = app.add_subcommand("kernels", "scalar kernels");
    kernels->require_subcommand(1);
    auto* keval = kernels->add_subcommand("eval", "evaluate a kernel at points, CSV on stdout");
    std::string fn, at;
    double kp = 1.0, klambda = 1.0, kk = 1.0;
    keval->add_option("--fn", fn, "kernel name")->required();
    keval->add_option("--p", kp, "exponent p")->capture_default_str();
    keval->add_option("--lambda", klambda, "lambda")->capture_default_str();
    keval->add_option("--at", at, "comma-separated points")->required();
    keval->add_option("--k", kk, "k for v_lambda and uniqueness_kernel")->capture_default_str();
    auto* kcheck = kernels->add_subcommand("check", "run the kernel invariant suite");

    auto* energy_cmd = app.add_subcommand("energy", "energy of a stored map");
    fs::path map_path;
    ProblemOptions energy_opts;
    bool inverse = false, per_element = false;
    energy_cmd->add_option("--map", map_path, "field dump or solution file")->required();
    add_problem_options(energy_cmd, energy_opts);
    energy_cmd->add_flag("--inverse", inverse, "inverse-side energy");
    energy_cmd->add_flag("--per-element", per_element, "include per-element distortion");

    auto* solve_cmd = app.add_subcommand("solve", "minimise the energy for a configuration");
    fs::path config_path;
    std::string seed_map;
    bool residuals = false;
    solve_cmd->add_option("--config", config_path, "configuration JSON")->required();
    solve_cmd->add_option("--seed-map", seed_map, "field dump used as the seed");
    solve_cmd->add_option("--out-dir", out_dir, "output directory")->capture_default_str();
    solve_cmd->add_flag("--residuals", residuals, "also write residuals.json");

    auto* sweep_cmd = app.add_subcommand("sweep", "p-continuation sweep");
    sweep_cmd->add_option("--config", config_path, "configuration JSON with p_schedule")->required();
    sweep_cmd->add_option("--out-dir", out_dir, "output directory")->capture_default_str();

    auto* verify_cmd = app.add_subcommand("verify", "residual table for a solution");
    fs::path solution;
    std::string coarse, diag_path;
    bool all = false;
    ProblemOptions verify_opts;
    verify_cmd->add_option("--solution", solution, "solution or field file")->required();
    verify_cmd->add_option("--coarse", coarse, "coarser solution for decay ratios");
    verify_cmd->add_option("--diagnostics", diag_path, "diagnostic options JSON");
    verify_cmd->add_flag("--all", all, "include inner variation, tension and phase residuals");
    verify_cmd->add_option("--out-dir", out_dir, "output directory")->capture_default_str();
    add_problem_options(verify_cmd, verify_opts);

    auto* export_cmd = app.add_subcommand("export", "export Phi, per-element data and plots");
    std::string sweep_path;
    bool with_plot = false;
    ProblemOptions export_opts;
    export_cmd->add_option("--solution", solution, "solution or field file")->required();
    export_cmd->add_option("--sweep", sweep_path, "sweep result for the energy-vs-p curve");
    export_cmd->add_flag("--plot", with_plot, "write PNG plots");
    export_cmd->add_option("--out-dir", out_dir, "output directory")->capture_default_str();
    add_problem_options(export_cmd, export_opts);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitSchema;
    }

    try {
        if (keval->parsed()) return run_kernels_eval(fn, kp, klambda, at, kk);
        if (kcheck->parsed()) return run_kernels_check();
        if (energy_cmd->parsed()) return run_energy(map_path, energy_opts, inverse, per_element);
        if (solve_cmd->parsed()) return run_solve(config_path, out_dir, seed_map, residuals);
        if (sweep_cmd->parsed()) return run_sweep(config_path, out_dir);
        if (verify_cmd->parsed()) return run_verify(solution, coarse, diag_path, all, verify_opts, out_dir);
        if (export_cmd->parsed()) return run_export(solution, sweep_path, with_plot, export_opts, out_dir);
    } catch (const SchemaError& e) {
        std::cerr << "schema error at " << e.what() << '\n';
        return kExitSchema;
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return kExitSchema;
    } catch (const SolverError& e) {
        std::cerr << "solver failure: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << " (bracket " << e.bracket_lo() << ", " << e.bracket_hi()
                  << ")\n";
        return kExitNumerical;
    } catch (const std::domain_error& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitNumerical;
    }
    return 0;
}
