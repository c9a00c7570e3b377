#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "expdist/functional.hpp"
#include "expdist/grid.hpp"

namespace expdist {

// Dirichlet data f0, evaluated at every reference node; only boundary values
// are kept fixed.
//   identity: z
//   affine:   c + a z + b conj(z)
//   quartic:  z + epsilon (x^4 + i y^4)
enum class BoundaryKind : std::uint8_t { identity, affine, quartic };

[[nodiscard]] std::string to_string(BoundaryKind kind);
[[nodiscard]] BoundaryKind boundary_from_string(const std::string& name);

struct BoundarySpec {
    BoundaryKind kind = BoundaryKind::affine;
    cplx a{1.5, 0.0};
    cplx b{0.5, 0.0};
    cplx c{0.0, 0.0};
    double epsilon = 0.2;

    [[nodiscard]] cplx operator()(cplx z) const;
};

enum class SeedKind : std::uint8_t { harmonic_extension, affine_extension, provided };

[[nodiscard]] std::string to_string(SeedKind kind);
[[nodiscard]] SeedKind seed_from_string(const std::string& name);

struct SolveConfig {
    IntegrandKind integrand = IntegrandKind::exp_p;
    double p = 1.0;
    int truncation = 0;
    WeightKind weight = WeightKind::euclidean;
    DomainKind domain = DomainKind::unit_square;
    int grid_n = 33;
    double delta = 0.05;
    BoundarySpec boundary{};
    int max_iters = 5000;
    // Sup norm of the gradient of E; 0 selects 1e-8 e^p.
    double grad_tol = 0.0;
    // Alternative stop on the sup norm of the gradient of log E; 0 disables.
    // Needed once e^(p K) dwarfs e^p and grad_tol sits below rounding.
    double rel_grad_tol = 0.0;
    std::vector<double> lambda_schedule{1.0};
    std::vector<double> p_schedule{};
    SeedKind seed = SeedKind::harmonic_extension;
    int memory = 8;
    // Largest p * max K attempted by a sweep.
    double overflow_cap = 700.0;
    std::uint64_t rng_seed = 0;

    void validate() const;
    [[nodiscard]] double effective_grad_tol(double p_value) const;
    [[nodiscard]] IntegrandSpec integrand_for(double p_value, double lambda) const;
};

struct TraceEntry {
    std::string parameter;  // "lambda" or "p"
    double value = 0.0;
    double energy = 0.0;
    double log_energy = 0.0;
    double normalized = 0.0;
    double grad_norm = 0.0;
    int iterations = 0;
    bool converged = false;
};

struct IterationRecord {
    int rung = 0;
    int iteration = 0;
    double log_energy = 0.0;
    double log_grad_norm = 0.0;
    double step = 0.0;
};

struct SolveResult {
    MapField map;
    EnergyReport report{};
    int iterations = 0;
    double grad_norm = 0.0;
    double log_grad_norm = 0.0;
    bool converged = false;
    std::string status{};
    std::vector<TraceEntry> continuation_trace{};
    std::vector<IterationRecord> history{};
};

class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Builds the reference grid and the seed map of a configuration.
[[nodiscard]] std::shared_ptr<const TriGrid> make_grid(const SolveConfig& config);
[[nodiscard]] MapField make_seed(const SolveConfig& config, std::shared_ptr<const TriGrid> grid);

struct MinimizeOptions {
    int max_iters = 5000;
    double grad_tol = 1e-8;
    double rel_grad_tol = 0.0;
    int memory = 8;
    int rung = 0;
};

struct MinimizeResult {
    MapField map;
    int iterations = 0;
    double log_energy = 0.0;
    double log_grad_norm = 0.0;
    bool converged = false;
    std::string status{};
    std::vector<IterationRecord> history{};
};

// L-BFGS on log E over the interior nodes, preconditioned by the reference
// cotangent Laplacian. Every accepted step keeps all elements admissible.
[[nodiscard]] MinimizeResult minimize(const MapField& seed, const WeightSpec& weight,
                                      const IntegrandSpec& integrand, const MinimizeOptions& options);

// Runs the lambda ladder of the configuration at its p. The seed is built from
// the configuration unless `provided` is given.
[[nodiscard]] SolveResult solve(const SolveConfig& config,
                                const std::optional<MapField>& provided = std::nullopt);

struct SweepResult {
    std::vector<SolveResult> rungs;
    // Scheduled p values skipped because p * max K exceeded the cap.
    std::vector<double> capped;
    // Normalized energies non-decreasing in p within 1e-6.
    bool monotone = true;
    bool complete = true;
    std::string status;
};

// Solves each p of the schedule, warm-started from the previous rung.
[[nodiscard]] SweepResult sweep_p(const SolveConfig& config,
                                  const std::optional<MapField>& provided = std::nullopt);

}  // namespace expdist
