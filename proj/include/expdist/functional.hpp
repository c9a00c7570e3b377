#pragma once

#include <string>
#include <vector>

#include "expdist/grid.hpp"
#include "expdist/kernels.hpp"

namespace expdist {

enum class IntegrandKind : std::uint8_t { exp_p, exp_p_lambda, truncated };

[[nodiscard]] std::string to_string(IntegrandKind kind);
[[nodiscard]] IntegrandKind integrand_from_string(const std::string& name);

// log Psi at one element with its partial derivatives in A = |f_z|^2 and
// B = |f_zbar|^2. admissible is false (and value +inf) outside the domain
// of the integrand.
struct LogIntegrand {
    double value = 0.0;
    double d_a = 0.0;
    double d_b = 0.0;
    double distortion = 1.0;
    bool admissible = true;
};

// Psi(K) = exp(p K), exp(p K^lambda) or the partial sum of exp(p K) up to N.
struct IntegrandSpec {
    IntegrandKind kind = IntegrandKind::exp_p;
    DistortionParams params{};
    int truncation = 0;

    static IntegrandSpec exp_p(double p);
    static IntegrandSpec exp_p_lambda(double p, double lambda);
    static IntegrandSpec truncated(double p, int n);

    void validate() const;
    [[nodiscard]] std::string name() const;

    // log Psi as a function of the distortion (K, or K^lambda for the
    // lambda integrand) and its derivative in that distortion.
    [[nodiscard]] double log_psi_of_k(double k) const;
    [[nodiscard]] double dlog_psi_dk(double k) const;

    [[nodiscard]] LogIntegrand evaluate(double a, double b) const;
};

struct EnergyReport {
    std::string integrand;
    double p = 1.0;
    double lambda = 1.0;
    double energy = 0.0;
    // Finite even when energy overflows.
    double log_energy = 0.0;
    double normalized = 0.0;
    double weighted_area = 0.0;
    double max_distortion = 1.0;
    double mean_distortion = 1.0;
    bool admissible = true;
    std::size_t non_admissible_elements = 0;
    // Distortion per triangle.
    std::vector<double> per_element;
};

// sum_T Psi(K_T) eta(centroid_T) area_T.
[[nodiscard]] EnergyReport energy(const MapField& map, const WeightSpec& weight,
                                  const IntegrandSpec& integrand, bool keep_per_element = true);

// Gradient with respect to the interior node values, ordered as
// TriGrid::interior_nodes(). Entry k is dE/dx_k + i dE/dy_k. Throws
// std::domain_error for a non-admissible map.
[[nodiscard]] std::vector<cplx> energy_gradient(const MapField& map, const WeightSpec& weight,
                                                const IntegrandSpec& integrand);

struct LogEnergyGradient {
    double log_energy = 0.0;
    // Gradient of log E.
    std::vector<cplx> gradient;
    // log of the sup norm of the gradient of E.
    double log_sup_norm = 0.0;
    bool admissible = true;
};

// Overflow-safe form used by the solver. A non-admissible map yields
// admissible = false and log_energy = +inf instead of throwing.
[[nodiscard]] LogEnergyGradient log_energy_gradient(const MapField& map, const WeightSpec& weight,
                                                    const IntegrandSpec& integrand,
                                                    bool with_gradient = true);

// Change in log E between two maps on the same grid, accumulated per element
// to avoid cancellation between two large totals.
[[nodiscard]] double log_energy_difference(const MapField& from, const MapField& to,
                                           const WeightSpec& weight, const IntegrandSpec& integrand);

// Target-side energy written on the source grid:
// sum_T Psi(K_T) eta(f(centroid_T)) J_T area_T.
[[nodiscard]] EnergyReport inverse_energy(const MapField& map, const WeightSpec& weight,
                                          const IntegrandSpec& integrand);

}  // namespace expdist
