#pragma once

#include <complex>
#include <stdexcept>
#include <string>

namespace expdist {

// ---------------------------------------------------------------------------
// Parameters and evaluation carriers
// ---------------------------------------------------------------------------

// Exponent weight p > 0 and regularisation level lambda in (0, 1].
struct DistortionParams {
    double p = 1.0;
    double lambda = 1.0;

    void validate() const;
};

// Value of a scalar kernel together with its derivative in the primary
// argument and, for implicitly defined kernels, the functional-equation
// residual at the returned value.
struct KernelEval {
    double value = 0.0;
    double derivative = 0.0;
    double residual = 0.0;
    int iterations = 0;
};

// Raised when a bracketed root solve fails to converge. Carries the last
// bracket so callers can report where the solve stalled.
class NumericalError : public std::runtime_error {
public:
    NumericalError(const std::string& what, double lo, double hi)
        : std::runtime_error(what), lo_(lo), hi_(hi) {}
    [[nodiscard]] double bracket_lo() const noexcept { return lo_; }
    [[nodiscard]] double bracket_hi() const noexcept { return hi_; }

private:
    double lo_;
    double hi_;
};

struct SolveTolerance {
    double residual = 1e-12;
    int max_iterations = 200;
};

// ---------------------------------------------------------------------------
// Distortion algebra
// ---------------------------------------------------------------------------

// (1 + |mu|^2) / (1 - |mu|^2). Throws std::domain_error for |mu| >= 1.
[[nodiscard]] double big_k_from_mu(double mu_abs);

// (K + 1/K) / 2 for the operator-norm distortion K >= 1.
[[nodiscard]] double big_k_vs_bold_k(double bold_k);

// ---------------------------------------------------------------------------
// The a_p family
// ---------------------------------------------------------------------------

// a_p(s) = (s + e^p) sqrt(log^2(s + e^p) - p^2), s >= 0.
[[nodiscard]] double a_p(double s, const DistortionParams& params);
// a_p'(s); +inf at s = 0.
[[nodiscard]] double a_p_derivative(double s, const DistortionParams& params);

// log a_p(s) given log s, usable when s itself would overflow.
[[nodiscard]] double log_a_p_from_log_s(double log_s, const DistortionParams& params);

// Inverse of a_p. derivative = 1 / a_p'(value).
[[nodiscard]] KernelEval a_p_inverse(double y, const DistortionParams& params,
                                     const SolveTolerance& tol = {});

// a~_p = a_p^2 and its first two derivatives.
[[nodiscard]] double a_tilde_p(double s, const DistortionParams& params);
[[nodiscard]] double a_tilde_p_derivative(double s, const DistortionParams& params);
[[nodiscard]] double a_tilde_p_second_derivative(double s, const DistortionParams& params);

// B_p = inverse of a~_p.
[[nodiscard]] KernelEval b_p_inverse(double y, const DistortionParams& params,
                                     const SolveTolerance& tol = {});

// Minimum slope of a_p. The minimum is reported over s >= 0 and over
// s >= e^p separately.
struct MinSlope {
    double over_nonnegative = 0.0;
    double argmin_nonnegative = 0.0;
    double over_shifted = 0.0;
    double argmin_shifted = 0.0;
};
[[nodiscard]] MinSlope m_p(const DistortionParams& params);

// lambda-regularised kernel a_p^lambda and its inverse.
[[nodiscard]] double a_p_lambda(double s, const DistortionParams& params);
[[nodiscard]] double a_p_lambda_derivative(double s, const DistortionParams& params);
[[nodiscard]] KernelEval a_p_lambda_inverse(double y, const DistortionParams& params,
                                            const SolveTolerance& tol = {});

// ---------------------------------------------------------------------------
// Implicit kernels
// ---------------------------------------------------------------------------

// v = v_k^lambda(x) in [0, lambda), the root of
//   exp(p (l^2 + v^2)/(l^2 - v^2)) ((1 - v^2)/(l^2 - v^2))^2 v = k / x^2.
// derivative is dv/dx; dv/dk is available from v_lambda_dk.
[[nodiscard]] KernelEval v_lambda(double x, double k, const DistortionParams& params,
                                  const SolveTolerance& tol = {});

// Log of the left-hand side above, the forward map of v_lambda.
[[nodiscard]] double v_lambda_forward_log(double v, const DistortionParams& params);

// Bracket D(v) shared by the implicit derivatives: dv/dx = -2/(x D), dv/dk = 1/(k D).
[[nodiscard]] double v_lambda_slope_factor(double v, const DistortionParams& params);
[[nodiscard]] double v_lambda_dk(double v, double k, const DistortionParams& params);
[[nodiscard]] double v_lambda_dx(double v, double x, const DistortionParams& params);

// Nonlinear Beltrami operator B^lambda(phi, eta, xi). zero_set is set when
// phi = 0 (phase undefined); the returned value is then 0.
struct BeltramiEval {
    std::complex<double> value{};
    bool zero_set = false;
};
[[nodiscard]] BeltramiEval beltrami_operator(std::complex<double> phi_value, double eta_value,
                                             std::complex<double> xi,
                                             const DistortionParams& params,
                                             const SolveTolerance& tol = {});

// y in [0, x), the root of exp(p (x^2 + y^2)/(x^2 - y^2)) x y / (x^2 - y^2)^2 = k.
// derivative is y'(x) from the closed form in t = y/x.
[[nodiscard]] KernelEval uniqueness_kernel(double x, double k, const DistortionParams& params,
                                           const SolveTolerance& tol = {});
[[nodiscard]] double uniqueness_forward(double x, double y, const DistortionParams& params);
[[nodiscard]] double uniqueness_slope(double t, const DistortionParams& params);
[[nodiscard]] double uniqueness_second_derivative(double x, double t,
                                                  const DistortionParams& params);

// ---------------------------------------------------------------------------
// Ellipticity and ratio functions
// ---------------------------------------------------------------------------

[[nodiscard]] double ellipticity_ratio_a(double t, const DistortionParams& params);
// Printed polynomial form; exact at t = 1.
[[nodiscard]] double r_p(double t, const DistortionParams& params);

// Right-hand side of |a z - b w| / |z - w| <= max{...}. Throws for z == w.
[[nodiscard]] double max_ratio_bound(double a, double b, std::complex<double> z,
                                     std::complex<double> w);

}  // namespace expdist
