#include "expdist/solver.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

namespace expdist {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

using Vec = Eigen::VectorXd;

Vec pack(std::span<const cplx> values) {
    const auto n = static_cast<Eigen::Index>(values.size());
    Vec x(2 * n);
    for (Eigen::Index i = 0; i < n; ++i) {
        x(i) = values[i].real();
        x(n + i) = values[i].imag();
    }
    return x;
}

std::vector<cplx> unpack(const Vec& x) {
    const Eigen::Index n = x.size() / 2;
    std::vector<cplx> out(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) out[i] = cplx(x(i), x(n + i));
    return out;
}

// Inverse of the interior block of the reference cotangent Laplacian,
// applied separately to both coordinates.
// Reference cotangent Laplacian with each triangle scaled by its share of the
// energy at the seed, floored at 1e-12 of the largest share. For large p the
// shares spread over many orders of magnitude, and the unweighted Laplacian
// no longer tracks the Hessian.
// Iterations between rebuilds of the preconditioner.
constexpr int kRefresh = 100;

class LaplacePreconditioner {
public:
    LaplacePreconditioner(const MapField& seed, const WeightSpec& weight, const IntegrandSpec& integrand) {
        const TriGrid& g = seed.grid();
        const auto free = g.free_index();
        const auto tris = g.triangles();
        const int n = static_cast<int>(g.interior_nodes().size());
        const DerivedField d = wirtinger(seed);
        std::vector<double> log_share(tris.size());
        double top = -kInf;
        for (std::size_t t = 0; t < tris.size(); ++t) {
            const LogIntegrand li = integrand.evaluate(std::norm(d.fz[t]), std::norm(d.fzbar[t]));
            log_share[t] = li.admissible ? li.value + std::log(weight.values()[t]) : -kInf;
            top = std::max(top, log_share[t]);
        }
        std::vector<Eigen::Triplet<double>> entries;
        for (std::size_t t = 0; t < tris.size(); ++t) {
            const double scale = std::max(std::exp(log_share[t] - top), 1e-12);
            for (const Triplet& e : cotangent_laplacian(g.nodes(), tris.subspan(t, 1))) {
                const int r = free[e.row];
                const int c = free[e.col];
                if (r >= 0 && c >= 0) entries.emplace_back(r, c, scale * e.value);
            }
        }
        Eigen::SparseMatrix<double> lap(n, n);
        lap.setFromTriplets(entries.begin(), entries.end());
        solver_.compute(lap);
        if (solver_.info() != Eigen::Success) throw SolverError("preconditioner factorisation failed");
    }

    Vec apply(const Vec& g) const {
        const Eigen::Index n = g.size() / 2;
        Vec out(g.size());
        out.head(n) = solver_.solve(g.head(n));
        out.tail(n) = solver_.solve(g.tail(n));
        return out;
    }

private:
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver_;
};

double min_edge(const MapField& map) {
    double m = kInf;
    const auto f = map.values();
    for (const auto& tri : map.grid().triangles()) {
        for (int i = 0; i < 3; ++i) m = std::min(m, std::abs(f[tri[i]] - f[tri[(i + 1) % 3]]));
    }
    return m;
}

double max_node_step(const Vec& d) {
    const Eigen::Index n = d.size() / 2;
    double m = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) m = std::max(m, std::hypot(d(i), d(n + i)));
    return m;
}

}  // namespace

std::string to_string(BoundaryKind kind) {
    switch (kind) {
        case BoundaryKind::identity: return "identity";
        case BoundaryKind::affine: return "affine";
        case BoundaryKind::quartic: return "quartic";
    }
    return "affine";
}

BoundaryKind boundary_from_string(const std::string& name) {
    if (name == "identity") return BoundaryKind::identity;
    if (name == "affine") return BoundaryKind::affine;
    if (name == "quartic") return BoundaryKind::quartic;
    throw ConfigError("unknown boundary kind '" + name + "'");
}

cplx BoundarySpec::operator()(cplx z) const {
    switch (kind) {
        case BoundaryKind::identity: return z;
        case BoundaryKind::affine: return c + a * z + b * std::conj(z);
        case BoundaryKind::quartic: {
            const double x = z.real();
            const double y = z.imag();
            return z + epsilon * cplx(x * x * x * x, y * y * y * y);
        }
    }
    return z;
}

std::string to_string(SeedKind kind) {
    switch (kind) {
        case SeedKind::harmonic_extension: return "harmonic_extension";
        case SeedKind::affine_extension: return "affine_extension";
        case SeedKind::provided: return "provided";
    }
    return "harmonic_extension";
}

SeedKind seed_from_string(const std::string& name) {
    if (name == "harmonic_extension") return SeedKind::harmonic_extension;
    if (name == "affine_extension") return SeedKind::affine_extension;
    if (name == "provided") return SeedKind::provided;
    throw ConfigError("unknown seed '" + name + "'");
}

void SolveConfig::validate() const {
    integrand_for(p, 1.0).validate();
    if (grid_n < 3) throw ConfigError("grid_n must be at least 3");
    if (max_iters < 0) throw ConfigError("max_iters must be non-negative");
    if (grad_tol < 0.0) throw ConfigError("grad_tol must be non-negative");
    if (rel_grad_tol < 0.0) throw ConfigError("rel_grad_tol must be non-negative");
    if (memory < 1) throw ConfigError("memory must be positive");
    if (lambda_schedule.empty()) throw ConfigError("lambda_schedule must not be empty");
    for (std::size_t i = 0; i < lambda_schedule.size(); ++i) {
        const double l = lambda_schedule[i];
        if (!(l > 0.0 && l <= 1.0)) throw ConfigError("lambda_schedule entries must lie in (0, 1]");
        if (i > 0 && !(l > lambda_schedule[i - 1])) {
            throw ConfigError("lambda_schedule must be strictly ascending");
        }
    }
    if (p_schedule.size() > 1) {
        const bool up = p_schedule[1] > p_schedule[0];
        for (std::size_t i = 1; i < p_schedule.size(); ++i) {
            const bool step_up = p_schedule[i] > p_schedule[i - 1];
            if (step_up != up || p_schedule[i] == p_schedule[i - 1]) {
                throw ConfigError("p_schedule must be strictly monotone");
            }
        }
    }
    for (double v : p_schedule) {
        if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("p_schedule entries must be positive");
    }
    if (domain == DomainKind::disk_truncated && !(delta > 0.0 && delta < 0.5)) {
        throw ConfigError("delta must lie in (0, 0.5)");
    }
    if (weight == WeightKind::hyperbolic && domain != DomainKind::disk_truncated) {
        throw ConfigError("hyperbolic weight requires the disk_truncated domain");
    }
    if (weight == WeightKind::tabulated) throw ConfigError("tabulated weight is not configurable");
}

double SolveConfig::effective_grad_tol(double p_value) const {
    return grad_tol > 0.0 ? grad_tol : 1e-8 * std::exp(p_value);
}

IntegrandSpec SolveConfig::integrand_for(double p_value, double lambda) const {
    if (integrand == IntegrandKind::truncated) return IntegrandSpec::truncated(p_value, truncation);
    if (integrand == IntegrandKind::exp_p_lambda || lambda < 1.0) {
        return IntegrandSpec::exp_p_lambda(p_value, lambda);
    }
    return IntegrandSpec::exp_p(p_value);
}

std::shared_ptr<const TriGrid> make_grid(const SolveConfig& config) {
    return config.domain == DomainKind::unit_square ? TriGrid::unit_square(config.grid_n)
                                                    : TriGrid::disk_truncated(config.grid_n, config.delta);
}

MapField make_seed(const SolveConfig& config, std::shared_ptr<const TriGrid> grid) {
    MapField data = MapField::sample(std::move(grid), [&](cplx z) { return config.boundary(z); });
    if (config.seed == SeedKind::affine_extension) return affine_extension(data);
    MapField seed = harmonic_extension(data);
    if (!wirtinger(seed).orientation_preserving()) {
        MapField fallback = affine_extension(data);
        if (wirtinger(fallback).orientation_preserving()) return fallback;
    }
    return seed;
}

MinimizeResult minimize(const MapField& seed, const WeightSpec& weight, const IntegrandSpec& integrand,
                        const MinimizeOptions& options) {
    MinimizeResult out{.map = seed};
    LogEnergyGradient cur = log_energy_gradient(seed, weight, integrand);
    if (!cur.admissible) throw SolverError("seed map is not admissible for " + integrand.name());

    std::optional<LaplacePreconditioner> precond(std::in_place, seed, weight, integrand);
    const double log_tol = std::log(options.grad_tol);
    const double log_rel_tol = options.rel_grad_tol > 0.0 ? std::log(options.rel_grad_tol) : -kInf;
    MapField x = seed;
    Vec xv = pack(x.interior_values());
    Vec g = pack(cur.gradient);
    std::deque<std::pair<Vec, Vec>> memory;
    std::deque<double> rho;
    double gamma = 1.0;
    bool fresh = true;

    auto record = [&](int it, double step) {
        out.history.push_back({options.rung, it, cur.log_energy, cur.log_sup_norm, step});
    };
    record(0, 0.0);

    int it = 0;
    out.status = "max_iters";
    while (true) {
        if (cur.log_sup_norm <= log_tol || g.size() == 0 ||
            cur.log_sup_norm - cur.log_energy <= log_rel_tol) {
            out.converged = true;
            out.status = "converged";
            break;
        }
        if (it >= options.max_iters) break;
        if (it > 0 && it % kRefresh == 0) {
            precond.emplace(x, weight, integrand);
            memory.clear();
            rho.clear();
            gamma = 1.0;
            fresh = true;
        }

        // Two-loop recursion with H0 = gamma * L^{-1}.
        Vec q = g;
        std::vector<double> alpha(memory.size());
        for (std::size_t i = memory.size(); i-- > 0;) {
            alpha[i] = rho[i] * memory[i].first.dot(q);
            q -= alpha[i] * memory[i].second;
        }
        Vec r = gamma * precond->apply(q);
        for (std::size_t i = 0; i < memory.size(); ++i) {
            const double beta = rho[i] * memory[i].second.dot(r);
            r += memory[i].first * (alpha[i] - beta);
        }
        Vec d = -r;
        double slope = g.dot(d);
        if (!(slope < 0.0)) {
            memory.clear();
            rho.clear();
            d = -precond->apply(g);
            slope = g.dot(d);
            fresh = true;
        }

        double step = 1.0;
        if (fresh) {
            const double bound = 0.25 * min_edge(x) / std::max(max_node_step(d), 1e-300);
            step = std::min(1.0, bound);
        }

        bool accepted = false;
        MapField trial = x;
        LogEnergyGradient next;
        for (int ls = 0; ls < 60; ++ls) {
            const Vec xt = xv + step * d;
            trial.set_interior_values(unpack(xt));
            const double change = log_energy_difference(x, trial, weight, integrand);
            if (!std::isfinite(change)) {
                step *= 0.25;
                continue;
            }
            if (change <= 1e-4 * step * slope) {
                accepted = true;
            } else if (std::abs(change) <= 1e-13) {
                // Energy change below rounding: accept when the directional
                // slope shows the step did not overshoot.
                next = log_energy_gradient(trial, weight, integrand);
                const double slope_t = pack(next.gradient).dot(d);
                accepted = next.admissible && slope_t <= -0.8 * slope;
                if (!accepted) next = {};
            }
            if (accepted) break;
            step *= 0.5;
        }
        if (!accepted) {
            if (!fresh) {
                memory.clear();
                rho.clear();
                fresh = true;
                continue;
            }
            out.status = "stalled";
            break;
        }
        if (next.gradient.empty()) next = log_energy_gradient(trial, weight, integrand);
        const Vec xn = pack(trial.interior_values());
        const Vec gn = pack(next.gradient);
        const Vec s = xn - xv;
        const Vec y = gn - g;
        const double sy = s.dot(y);
        if (sy > 1e-16 * s.norm() * y.norm()) {
            if (static_cast<int>(memory.size()) == options.memory) {
                memory.pop_front();
                rho.pop_front();
            }
            memory.emplace_back(s, y);
            rho.push_back(1.0 / sy);
            gamma = sy / y.dot(precond->apply(y));
            fresh = false;
        }
        x = std::move(trial);
        xv = xn;
        g = gn;
        cur = std::move(next);
        ++it;
        record(it, step);
    }
    out.map = x;
    out.iterations = it;
    out.log_energy = cur.log_energy;
    out.log_grad_norm = cur.log_sup_norm;
    return out;
}

SolveResult solve(const SolveConfig& config, const std::optional<MapField>& provided) {
    config.validate();
    std::optional<MapField> start = provided;
    if (!start) {
        if (config.seed == SeedKind::provided) throw ConfigError("seed 'provided' needs a map");
        start = make_seed(config, make_grid(config));
    }
    const WeightSpec weight = weight_eval(config.weight, start->grid());
    SolveResult result{.map = *start};
    MapField current = *start;
    int rung = 0;
    for (double lambda : config.lambda_schedule) {
        const IntegrandSpec spec = config.integrand_for(config.p, lambda);
        const MinimizeOptions opt{config.max_iters, config.effective_grad_tol(config.p),
                                  config.rel_grad_tol, config.memory, rung};
        MinimizeResult m = minimize(current, weight, spec, opt);
        result.report = energy(m.map, weight, spec);
        TraceEntry entry{"lambda", lambda, result.report.energy, result.report.log_energy,
                         result.report.normalized, std::exp(m.log_grad_norm), m.iterations, m.converged};
        result.continuation_trace.push_back(entry);
        result.history.insert(result.history.end(), m.history.begin(), m.history.end());
        result.iterations += m.iterations;
        result.grad_norm = std::exp(m.log_grad_norm);
        result.log_grad_norm = m.log_grad_norm;
        result.converged = m.converged;
        result.status = m.status;
        current = std::move(m.map);
        ++rung;
    }
    result.map = std::move(current);
    return result;
}

SweepResult sweep_p(const SolveConfig& config, const std::optional<MapField>& provided) {
    config.validate();
    if (config.p_schedule.empty()) throw ConfigError("sweep needs a p_schedule");
    SweepResult out;
    std::optional<MapField> warm = provided;
    for (std::size_t i = 0; i < config.p_schedule.size(); ++i) {
        const double p = config.p_schedule[i];
        if (warm) {
            const DerivedField d = wirtinger(*warm);
            double kmax = 0.0;
            for (double k : d.big_k) kmax = std::max(kmax, k);
            if (p * kmax > config.overflow_cap) {
                out.capped.assign(config.p_schedule.begin() + static_cast<std::ptrdiff_t>(i),
                                  config.p_schedule.end());
                break;
            }
        }
        SolveConfig rung = config;
        rung.p = p;
        if (i > 0) rung.lambda_schedule = {config.lambda_schedule.back()};
        if (warm) rung.seed = SeedKind::provided;
        try {
            SolveResult r = solve(rung, warm);
            for (auto& t : r.continuation_trace) {
                t.parameter = "p";
                t.value = p;
            }
            for (auto& h : r.history) h.rung = static_cast<int>(i);
            warm = r.map;
            out.rungs.push_back(std::move(r));
        } catch (const SolverError& e) {
            out.complete = false;
            out.status = std::string("rung p=") + std::to_string(p) + ": " + e.what();
            break;
        }
    }
    // Monotone in p: sort rung energies by p.
    std::vector<std::pair<double, double>> pe;
    for (const auto& r : out.rungs) pe.emplace_back(r.report.p, r.report.normalized);
    std::sort(pe.begin(), pe.end());
    for (std::size_t i = 1; i < pe.size(); ++i) {
        if (pe[i].second < pe[i - 1].second - 1e-6) out.monotone = false;
    }
    if (out.status.empty()) out.status = out.capped.empty() ? "complete" : "capped";
    bool all_converged = true;
    for (const auto& r : out.rungs) all_converged = all_converged && r.converged;
    if (!all_converged && out.status == "complete") out.status = "complete_unconverged";
    return out;
}

}  // namespace expdist
