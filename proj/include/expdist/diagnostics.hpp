#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "expdist/functional.hpp"
#include "expdist/grid.hpp"

namespace expdist {

// ---------------------------------------------------------------------------
// Ahlfors-Hopf differential
// ---------------------------------------------------------------------------

enum class PhiSupport : std::uint8_t { gridded, scattered };

// Phi sampled at the image points w = f(c) of the reference cell centres c.
struct QuadDifferentialField {
    PhiSupport support = PhiSupport::scattered;
    std::vector<cplx> sources;
    std::vector<cplx> points;
    std::vector<cplx> values;
    // Image area of each cell, the quadrature weight on the target side.
    std::vector<double> weights;
    // Points counted in the aggregates (away from the boundary layer).
    std::vector<std::uint8_t> interior;
    std::vector<double> dbar_pointwise;
    double l1_norm = 0.0;
    double dbar_residual_l1 = 0.0;
    double dbar_residual_linf = 0.0;
    double median_abs = 0.0;
    std::vector<cplx> zero_candidates;
    std::vector<std::size_t> zero_indices;
    std::size_t excluded = 0;
    double h = 0.0;
};

struct DiagnosticOptions {
    // Width of the boundary layer left out of aggregate residuals, as a
    // fraction of the domain width.
    double margin = 0.125;
    double zero_threshold = 1e-3;
    ScatterOptions scatter{};
    int battery_size = 32;
    std::uint64_t seed = 20240611;
    // Tension: number of w-lattice points per side.
    int tension_points = 25;
    // Tension metric: true uses exp(p K) eta, false uses eta alone.
    bool full_metric = true;
};

// Scalar factor multiplying h_w conj(h_wbar) eta(h) in Phi, for the
// integrand's distortion K and |mu|^2. exp(p K) for exp_p, the partial sum
// of order N - 1 for truncated(N), and the printed lambda factor for
// exp_p_lambda. Returned as a logarithm.
[[nodiscard]] double log_phi_factor(const IntegrandSpec& integrand, double big_k, double mu_abs2);

// Phi(f(z)) = -factor(K) conj(f_z f_zbar) / J^2 eta(z) from cell-averaged
// derivatives, with the scattered dbar test in the image plane.
[[nodiscard]] QuadDifferentialField ahlfors_hopf(const MapField& map, const WeightSpec& weight,
                                                 const IntegrandSpec& integrand,
                                                 const DiagnosticOptions& options = {});

// ---------------------------------------------------------------------------
// Residuals
// ---------------------------------------------------------------------------

struct InnerVariationResult {
    double residual = 0.0;
    int evaluated = 0;
    int skipped = 0;
};

// Max over a battery of interior C-infinity bumps of
// |int Psi (eta phi)_z - int Psi'(K) 2 conj(mu)/(1 - |mu|^2) eta phi_zbar|
// divided by int Psi eta |grad phi|.
[[nodiscard]] InnerVariationResult inner_variation_residual(const MapField& map, const WeightSpec& weight,
                                                            const IntegrandSpec& integrand,
                                                            const DiagnosticOptions& options = {});

// L1 norm over interior cells of
// gamma mu_z - alpha conj(mu) mu_zbar + beta mu^2 conj(mu_zbar) - phi.
[[nodiscard]] double mu_equation_residual(const MapField& map, const WeightSpec& weight,
                                          const DistortionParams& params,
                                          const DiagnosticOptions& options = {});

// Inverse map sampled on a regular w-lattice. valid marks lattice points
// inside the image (all others hold NaN).
struct InverseSample {
    LatticeField h;
    std::vector<std::uint8_t> valid;
    std::size_t outside = 0;
};

// Inverts a C2 cubic-spline interpolant of f on a regular w-lattice of
// `points` per side covering the image, keeping points whose preimage stays
// `margin` (fraction of the logical width) away from the boundary.
[[nodiscard]] InverseSample invert_on_lattice(const MapField& map, int points, double margin);

// L1 norm of h_wwbar + (log lambda)_z(h) h_w h_wbar over lattice points whose
// four neighbours are valid; log_metric_z holds (log lambda)_z at h(w).
struct TensionResult {
    double residual = 0.0;
    std::size_t counted = 0;
    std::size_t excluded = 0;
};
[[nodiscard]] TensionResult tension_residual(const InverseSample& inverse,
                                             std::span<const cplx> log_metric_z);

// Inverse sampling plus the metric exp(p K) eta (or eta alone).
[[nodiscard]] TensionResult tension_of_map(const MapField& map, const WeightSpec& weight,
                                           const DistortionParams& params,
                                           const DiagnosticOptions& options = {});

struct TeichmullerPhase {
    double residual = 0.0;
    double k_estimate = 0.0;
    double k_dispersion = 0.0;
    std::size_t counted = 0;
};

// Phase of mu_h against conj(Phi) away from zero candidates, and the mean and
// standard deviation of |mu_h|. Throws std::domain_error when Phi vanishes
// everywhere.
[[nodiscard]] TeichmullerPhase teichmuller_phase_residual(const MapField& map, const WeightSpec& weight,
                                                          const IntegrandSpec& integrand,
                                                          const DiagnosticOptions& options = {});

// Max relative deviation of a_p(exp(p K) - e^p) from exp(p K) 2p|mu|/(1-|mu|^2)
// over the elements, evaluated in log space.
[[nodiscard]] double f_identity_residual(const MapField& map, const DistortionParams& params);
[[nodiscard]] double f_identity_point(double mu_abs, const DistortionParams& params);

struct HamiltonEntry {
    int n = 0;
    double norm = 0.0;
    double log_norm = 0.0;
    double distance = 0.0;
    // ||Phi_N|| / ||Phi||.
    double ratio = 0.0;
};

// Phi_N with exp(p K) replaced by its partial sum up to order N - 1, compared
// to Phi after L1 normalisation.
[[nodiscard]] std::vector<HamiltonEntry> hamilton_sequence(const MapField& map, const WeightSpec& weight,
                                                           const DistortionParams& params,
                                                           std::span<const int> orders);

struct ResidualBundle {
    double h = 0.0;
    double inner_variation = 0.0;
    double ahlfors_hopf_dbar = 0.0;
    double mu_equation = 0.0;
    double tension = 0.0;
    double teichmuller_phase = 0.0;
    double f_identity = 0.0;
    double k_estimate = 0.0;
    double k_dispersion = 0.0;
    double phi_l1 = 0.0;
    // Relative standard deviation of Phi over interior points.
    double phi_dispersion = 0.0;
};

[[nodiscard]] ResidualBundle residual_bundle(const MapField& map, const WeightSpec& weight,
                                             const IntegrandSpec& integrand,
                                             const DiagnosticOptions& options = {});

}  // namespace expdist
