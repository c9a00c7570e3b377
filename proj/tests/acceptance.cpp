// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "expdist/checks.hpp"
#include "expdist/io.hpp"

using namespace expdist;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Line {
    int id;
    bool pass;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

// Artifacts of one pass over criteria 4 to 7, keyed by file name.
using Artifacts = std::map<std::string, std::string>;

SolveConfig affine_config() {
    SolveConfig c;
    c.grid_n = 33;
    c.p = 1.0;
    c.boundary.kind = BoundaryKind::affine;
    c.boundary.a = {1.5, 0.0};
    c.boundary.b = {0.5, 0.0};
    c.rng_seed = 1;
    return c;
}

SolveConfig quartic_config(int n) {
    SolveConfig c;
    c.grid_n = n;
    c.p = 1.0;
    c.boundary.kind = BoundaryKind::quartic;
    c.boundary.epsilon = 0.2;
    c.max_iters = 20000;
    c.rng_seed = 2;
    return c;
}

struct Instance {
    std::string name;
    MapField map;
    WeightSpec weight;
    double p;
};

const std::vector<int> kOrders{1, 2, 3, 5, 10, 20, 40};

// Criterion 4.
Line affine_reproduction(Artifacts& out, std::vector<Instance>& instances) {
    const auto t0 = Clock::now();
    const SolveConfig c = affine_config();
    const auto exact = [](cplx z) { return 1.5 * z + 0.5 * std::conj(z); };
    auto sup = [&](const MapField& f) {
        double d = 0.0;
        for (std::size_t k = 0; k < f.grid().num_nodes(); ++k) {
            d = std::max(d, std::abs(f.values()[k] - exact(f.grid().nodes()[k])));
        }
        return d;
    };
    const SolveResult r = solve(c);

    // Also from a perturbed seed, so the minimizer has work to do.
    MapField seed = make_seed(c, make_grid(c));
    std::vector<cplx> in = seed.interior_values();
    for (std::size_t k = 0; k < in.size(); ++k) {
        const cplx z = seed.grid().nodes()[seed.grid().interior_nodes()[k]];
        in[k] += 0.02 * std::sin(M_PI * z.real()) * std::sin(M_PI * z.imag()) * cplx(1.0, 0.5);
    }
    seed.set_interior_values(in);
    SolveConfig pc = c;
    pc.seed = SeedKind::provided;
    const SolveResult rp = solve(pc, seed);

    const WeightSpec w = weight_eval(c.weight, r.map.grid());
    const IntegrandSpec spec = c.integrand_for(c.p, 1.0);
    const ResidualBundle b = residual_bundle(r.map, w, spec);
    const ResidualBundle bp = residual_bundle(rp.map, w, spec);
    out["affine_solution.json"] = dump_json(solve_result_to_json(r, c));
    out["affine_perturbed_solution.json"] = dump_json(solve_result_to_json(rp, pc));
    out["affine_residuals.json"] = dump_json(to_json(b));
    out["affine_perturbed_residuals.json"] = dump_json(to_json(bp));
    instances.push_back({"affine", r.map, w, c.p});

    double worst = 0.0;
    for (const ResidualBundle& x : {b, bp}) {
        worst = std::max({worst, x.inner_variation, x.ahlfors_hopf_dbar / x.phi_l1, x.mu_equation, x.tension,
                          x.teichmuller_phase});
    }
    const double dist = std::max(sup(r.map), sup(rp.map));
    const double disp = std::max(b.phi_dispersion, bp.phi_dispersion);
    const double secs = seconds_since(t0);
    const bool pass = r.converged && rp.converged && dist <= 1e-4 && disp <= 1e-3 && worst <= 1e-6 && secs < 120.0;
    return {4, pass,
            fmt("affine 2x+iy, 33 grid: sup distance %.2e (perturbed seed, %d its), Phi dispersion %.2e, "
                "max residual %.2e, %.1f s",
                dist, rp.iterations, disp, worst, secs)};
}

// Criterion 5.
Line holomorphicity_decay(Artifacts& out, std::vector<Instance>& instances) {
    const auto t0 = Clock::now();
    std::vector<double> dbar;
    bool converged = true;
    for (int n : {17, 33, 65}) {
        const SolveConfig c = quartic_config(n);
        const SolveResult r = solve(c);
        converged = converged && r.converged;
        const WeightSpec w = weight_eval(c.weight, r.map.grid());
        const ResidualBundle b = residual_bundle(r.map, w, c.integrand_for(c.p, 1.0));
        dbar.push_back(b.ahlfors_hopf_dbar);
        out["quartic_" + std::to_string(n) + "_solution.json"] = dump_json(solve_result_to_json(r, c));
        out["quartic_" + std::to_string(n) + "_residuals.json"] = dump_json(to_json(b));
        instances.push_back({"quartic " + std::to_string(n), r.map, w, c.p});
    }
    const double r1 = dbar[0] / dbar[1], r2 = dbar[1] / dbar[2];
    const double secs = seconds_since(t0);
    return {5, converged && r1 >= 2.0 && r2 >= 2.0 && secs < 600.0,
            fmt("quartic dbar Phi L1 %.3e -> %.3e -> %.3e, ratios %.2f and %.2f, %.1f s", dbar[0], dbar[1], dbar[2],
                r1, r2, secs)};
}

// Criterion 6.
Line limit_regimes(Artifacts& out, std::vector<Instance>& instances, std::vector<Instance>& ascending) {
    const auto t0 = Clock::now();
    std::string detail;

    // (a) Descending sweep; tension in the harmonic metric eta.
    SolveConfig dc = quartic_config(33);
    dc.rel_grad_tol = 1e-10;
    dc.p_schedule = {1.0, 0.5, 0.25, 0.1};
    const SweepResult down = sweep_p(dc);
    out["sweep_descending.json"] = dump_json(sweep_result_to_json(down, dc));
    const auto grid = make_grid(dc);
    const WeightSpec w = weight_eval(dc.weight, *grid);
    DiagnosticOptions harmonic;
    harmonic.full_metric = false;
    std::vector<double> tension;
    bool a_ok = down.complete && down.rungs.size() == dc.p_schedule.size();
    for (const SolveResult& r : down.rungs) {
        a_ok = a_ok && r.converged;
        tension.push_back(tension_of_map(r.map, w, {r.report.p, 1.0}, harmonic).residual);
        instances.push_back({"descending p=" + format_double(r.report.p), r.map, w, r.report.p});
    }
    for (std::size_t i = 1; i < tension.size(); ++i) a_ok = a_ok && tension[i] < tension[i - 1];
    double harm = INFINITY;
    if (!down.rungs.empty()) {
        // The inverse is the identity on image nodes; compare with the discrete
        // harmonic extension of its boundary values on the image mesh.
        const MapField& f = down.rungs.back().map;
        const std::vector<cplx> pos(f.values().begin(), f.values().end());
        const std::vector<cplx> ref(grid->nodes().begin(), grid->nodes().end());
        const auto h = harmonic_extension_on_mesh(pos, grid->triangles(), grid->boundary_mask(), ref);
        harm = 0.0;
        for (std::size_t k = 0; k < h.size(); ++k) harm = std::max(harm, std::abs(h[k] - ref[k]));
    }
    a_ok = a_ok && harm <= 5e-3;
    detail += "(a) tension";
    for (double t : tension) detail += fmt(" %.3e", t);
    detail += fmt(", harmonic distance %.2e %s; ", harm, a_ok ? "ok" : "FAIL");

    // (b) Ascending sweep until p * max K passes the overflow cap.
    SolveConfig uc = quartic_config(17);
    uc.rel_grad_tol = 1e-10;
    uc.p_schedule = {1, 2, 4, 8, 16, 32, 64, 128, 256, 512, 1024};
    const SweepResult up = sweep_p(uc);
    out["sweep_ascending.json"] = dump_json(sweep_result_to_json(up, uc));
    const WeightSpec wu = weight_eval(uc.weight, up.rungs.front().map.grid());
    std::vector<double> kd;
    bool b_ok = up.complete && !up.capped.empty();
    for (const SolveResult& r : up.rungs) {
        b_ok = b_ok && r.converged;
        kd.push_back(teichmuller_phase_residual(r.map, wu, uc.integrand_for(r.report.p, 1.0)).k_dispersion);
        ascending.push_back({"ascending p=" + format_double(r.report.p), r.map, wu, r.report.p});
    }
    const std::size_t m = kd.size();
    b_ok = b_ok && m >= 3 && kd[m - 2] <= kd[m - 3] && kd[m - 1] <= kd[m - 2];
    detail += fmt("(b) %zu rungs to p=%g, capped at p=%g, k_dispersion", m, up.rungs.back().report.p,
                  up.capped.empty() ? 0.0 : up.capped.front());
    for (std::size_t i = m >= 3 ? m - 3 : 0; i < m; ++i) detail += fmt(" %.3e", kd[i]);
    detail += b_ok ? " ok; " : " FAIL; ";

    // (c) Normalized energies over both sweeps.
    std::vector<std::pair<double, double>> pe;
    for (const SweepResult* s : {&down, &up}) {
        for (const SolveResult& r : s->rungs) pe.emplace_back(r.report.p, r.report.normalized);
    }
    std::sort(pe.begin(), pe.end());
    bool c_ok = down.monotone && up.monotone;
    double worst = 0.0;
    for (std::size_t i = 1; i < pe.size(); ++i) {
        worst = std::max(worst, pe[i - 1].second - pe[i].second);
        c_ok = c_ok && pe[i].second >= pe[i - 1].second - 1e-6;
    }
    detail += fmt("(c) largest decrease %.2e %s", worst, c_ok ? "ok" : "FAIL");
    const double secs = seconds_since(t0);
    detail += fmt(", %.1f s", secs);
    return {6, a_ok && b_ok && c_ok && secs < 900.0, detail};
}

struct HamiltonCheck {
    bool pass = true;
    double tail = 0.0;
    double ratio = INFINITY;
};

HamiltonCheck hamilton_check(const Instance& inst, json& all) {
    HamiltonCheck h;
    const auto seq = hamilton_sequence(inst.map, inst.weight, {inst.p, 1.0}, kOrders);
    all[inst.name] = to_json(seq);
    h.tail = seq.back().distance;
    h.pass = h.tail <= 1e-12;
    for (std::size_t i = 0; i < seq.size(); ++i) {
        if (i > 0) h.pass = h.pass && seq[i].distance <= seq[i - 1].distance;
        if (seq[i].n >= 5) {
            h.ratio = std::min(h.ratio, seq[i].ratio);
            h.pass = h.pass && seq[i].ratio >= 0.5;
        }
    }
    return h;
}

// Criterion 7 on the instances of criteria 4 to 6(a). The ascending rungs are
// reported but not counted: at N = 5 the ratio is a Poisson tail of mean p*K.
Line hamilton(Artifacts& out, const std::vector<Instance>& instances, const std::vector<Instance>& ascending) {
    const auto t0 = Clock::now();
    bool pass = true;
    double worst_tail = 0.0, worst_ratio = INFINITY;
    json all = json::object();
    for (const Instance& inst : instances) {
        const HamiltonCheck h = hamilton_check(inst, all);
        pass = pass && h.pass;
        worst_tail = std::max(worst_tail, h.tail);
        worst_ratio = std::min(worst_ratio, h.ratio);
    }
    json large = json::object();
    std::size_t meeting = 0;
    std::string first_miss = "none";
    for (const Instance& inst : ascending) {
        const HamiltonCheck h = hamilton_check(inst, large);
        if (h.pass) {
            ++meeting;
        } else if (first_miss == "none") {
            first_miss = fmt("p=%g (N=40 distance %.2e, min ratio %.2e)", inst.p, h.tail, h.ratio);
        }
    }
    out["hamilton.json"] = dump_json(all);
    out["hamilton_ascending.json"] = dump_json(large);
    const double secs = seconds_since(t0);
    return {7, pass && secs < 60.0,
            fmt("%zu instances with p <= 1: distance at N=40 <= %.2e, monotone in N, min ratio for N>=5 %.4f; "
                "not counted: %zu of %zu ascending rungs meet the bounds, first miss %s; %.1f s",
                instances.size(), worst_tail, worst_ratio, meeting, ascending.size(), first_miss.c_str(), secs)};
}

Artifacts run_4_to_7(std::vector<Line>& lines) {
    Artifacts out;
    std::vector<Instance> instances, ascending;
    lines.push_back(affine_reproduction(out, instances));
    lines.push_back(holomorphicity_decay(out, instances));
    lines.push_back(limit_regimes(out, instances, ascending));
    lines.push_back(hamilton(out, instances, ascending));
    return out;
}

Line from_suite(int id, const std::string& what, const CheckSuite& s, double budget) {
    std::string failed;
    for (const CheckResult& r : s.results) {
        if (!r.passed) failed += fmt(" [%s worst=%.3e limit=%.3e]", r.name.c_str(), r.worst, r.limit);
    }
    return {id, s.passed() && s.seconds < budget,
            fmt("%s: %zu checks, %.2f s (budget %.0f s)", what.c_str(), s.results.size(), s.seconds, budget) + failed};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance criteria 1 to 8"};
    std::string artifacts;
    app.add_option("--artifacts", artifacts, "directory for the JSON artifacts of the first pass");
    CLI11_PARSE(app, argc, argv);

    std::vector<Line> lines;
    lines.push_back(from_suite(1, "kernel roundtrips and derivatives", kernel_roundtrip_suite(), 10.0));
    lines.push_back(from_suite(2, "scalar facts", scalar_fact_suite(), 30.0));
    lines.push_back(from_suite(3, "F-identity over |mu| in [0, 0.999], p in {0.5, 1, 2}", f_identity_suite(), 1.0));

    Artifacts first;
    try {
        first = run_4_to_7(lines);
    } catch (const std::exception& e) {
        lines.push_back({4, false, std::string("aborted: ") + e.what()});
    }

    std::vector<Line> again;
    Artifacts second;
    try {
        second = run_4_to_7(again);
    } catch (const std::exception& e) {
        second.clear();
    }
    std::size_t differing = 0;
    for (const auto& [name, text] : first) {
        const auto it = second.find(name);
        if (it == second.end() || it->second != text) ++differing;
    }
    const bool same = !first.empty() && first.size() == second.size() && differing == 0;
    lines.push_back({8, same, fmt("%zu artifacts of criteria 4-7 compared byte for byte across two runs, %zu differ",
                                  first.size(), differing)});

    if (!artifacts.empty()) {
        for (const auto& [name, text] : first) write_file_atomic(std::filesystem::path(artifacts) / name, text);
    }

    bool all = true;
    for (const Line& l : lines) {
        std::printf("%s criterion %d: %s\n", l.pass ? "PASS" : "FAIL", l.id, l.detail.c_str());
        all = all && l.pass;
    }
    return all ? 0 : 1;
}
