#include "expdist/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace expdist {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kEps = std::numeric_limits<double>::epsilon();
// Implicit kernels never return u = v/lambda (or y/x) closer to 1 than this.
constexpr double kMinGap = 1e-12;

struct FnEval {
    double f;
    double df;
};

struct RootResult {
    double x;
    double f;
    int iterations;
};

// Newton's method on an increasing function, confined to [lo, hi] with
// f(lo) <= 0 <= f(hi). Steps that leave the bracket or fail to be finite are
// replaced by bisection.
template <class Fn>
RootResult bracketed_newton(Fn&& fn, double lo, double hi, double x0, double ftol,
                            int max_iterations, const char* name) {
    double x = (x0 > lo && x0 < hi) ? x0 : 0.5 * (lo + hi);
    for (int it = 1; it <= max_iterations; ++it) {
        const FnEval e = fn(x);
        if (!std::isfinite(e.f)) {
            // Overflowed above the root.
            hi = x;
            x = 0.5 * (lo + hi);
            continue;
        }
        if (std::abs(e.f) <= ftol) return {x, e.f, it};
        if (e.f < 0.0) {
            lo = x;
        } else {
            hi = x;
        }
        double next = x - e.f / e.df;
        if (!std::isfinite(next) || e.df <= 0.0 || next <= lo || next >= hi) {
            next = 0.5 * (lo + hi);
        }
        if (std::abs(next - x) <= 4.0 * kEps * std::max(1.0, std::abs(x))) {
            const FnEval last = fn(next);
            return {next, last.f, it};
        }
        x = next;
    }
    throw NumericalError(std::string(name) + ": no convergence", lo, hi);
}

// Solve log_fn(q) = target for q = log s, where log_fn is increasing in q.
// Expands a bracket outward from the initial guess before refining.
template <class Fn>
RootResult solve_log_log(Fn&& log_fn, double target, double q0, int max_iterations,
                         const char* name) {
    auto shifted = [&](double q) {
        FnEval e = log_fn(q);
        e.f -= target;
        return e;
    };
    double step = 1.0;
    double lo = q0 - step;
    while (shifted(lo).f > 0.0) {
        step *= 2.0;
        lo = q0 - step;
        if (step > 4096.0) throw NumericalError(std::string(name) + ": no lower bracket", lo, q0);
    }
    step = 1.0;
    double hi = q0 + step;
    while (true) {
        const double f = shifted(hi).f;
        if (!std::isfinite(f) || f >= 0.0) break;
        step *= 2.0;
        hi = q0 + step;
        if (step > 4096.0) throw NumericalError(std::string(name) + ": no upper bracket", q0, hi);
    }
    return bracketed_newton(shifted, lo, hi, q0, 4.0 * kEps * std::max(1.0, std::abs(target)),
                            max_iterations, name);
}

// u = log(s + e^p) - p computed without cancellation.
double log_shift(double s, double p) { return std::log1p(s * std::exp(-p)); }

// ---------------------------------------------------------------------------
// Shared forward map of the two implicit kernels, written in the normalised
// variable u in (0, 1) (u = v/lambda or u = y/x). When `gap` is true the
// argument is g = 1 - u, which keeps 1 - u^2 exact near the top.
// ---------------------------------------------------------------------------

enum class ImplicitKind { beltrami, uniqueness };

struct ImplicitForward {
    ImplicitKind kind;
    double p;
    double lambda;

    // Value of F and dF/du.
    [[nodiscard]] FnEval eval(double u, double w) const {
        // w = 1 - u^2
        double f = p * (1.0 + u * u) / w + std::log(u) - 2.0 * std::log(w);
        double df = 4.0 * p * u / (w * w) + 1.0 / u + 4.0 * u / w;
        if (kind == ImplicitKind::beltrami) {
            const double l2 = lambda * lambda;
            const double one_minus_l2u2 = (1.0 - l2) + l2 * w;
            f += 2.0 * std::log(one_minus_l2u2) - 3.0 * std::log(lambda);
            df -= 4.0 * l2 * u / one_minus_l2u2;
        }
        return {f, df};
    }

    [[nodiscard]] FnEval at_value(double u) const { return eval(u, (1.0 - u) * (1.0 + u)); }
    [[nodiscard]] FnEval at_gap(double g) const { return eval(1.0 - g, g * (2.0 - g)); }

    // lim_{u->0} F(u) - log u
    [[nodiscard]] double small_u_offset() const {
        return kind == ImplicitKind::beltrami ? p - 3.0 * std::log(lambda) : p;
    }
};

struct ImplicitRoot {
    double u;
    double residual;
    int iterations;
};

ImplicitRoot solve_implicit(const ImplicitForward& fwd, double target, const SolveTolerance& tol,
                            const char* name) {
    const FnEval half = fwd.at_value(0.5);
    if (half.f >= target) {
        // Lower half: Newton in q = log u. F(u) - log u is increasing, which
        // pins the bracket from both sides.
        const double q_hi = std::min(std::log(0.5), target - fwd.small_u_offset());
        const double q_lo = target - (half.f - std::log(0.5));
        auto fn = [&](double q) {
            const double u = std::exp(q);
            const FnEval e = fwd.at_value(u);
            return FnEval{e.f - target, e.df * u};
        };
        if (q_hi <= q_lo) {
            const double u = std::exp(q_hi);
            return {u, std::abs(fwd.at_value(u).f - target), 0};
        }
        const double q0 = std::clamp(target - fwd.small_u_offset(), q_lo, q_hi);
        const RootResult r = bracketed_newton(fn, q_lo, q_hi, q0, 0.25 * tol.residual,
                                              tol.max_iterations, name);
        const double u = std::exp(r.x);
        return {u, std::abs(fwd.at_value(u).f - target), r.iterations};
    }
    // Upper half: Newton in r = -log g, increasing in r.
    const double r_lo = -std::log(0.5);
    const double r_hi = -std::log(kMinGap);
    auto fn = [&](double r) {
        const double g = std::exp(-r);
        const FnEval e = fwd.at_gap(g);
        // dF/dr = dF/du * du/dg * dg/dr = F'(u) * (-1) * (-g)
        return FnEval{e.f - target, e.df * g};
    };
    if (fn(r_hi).f < 0.0) {
        throw NumericalError(std::string(name) + ": root beyond the near-boundary cap",
                             1.0 - 0.5, 1.0 - kMinGap);
    }
    // p (1 + u^2) / (1 - u^2) ~ p / g dominates near the top.
    const double g0 = (target > 0.0) ? std::clamp(fwd.p / target, kMinGap, 0.5) : 0.5;
    const RootResult r =
        bracketed_newton(fn, r_lo, r_hi, -std::log(g0), 0.25 * tol.residual, tol.max_iterations, name);
    const double g = std::exp(-r.x);
    return {1.0 - g, std::abs(fwd.at_gap(g).f - target), r.iterations};
}

}  // namespace

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

void DistortionParams::validate() const {
    if (!(p > 0.0) || !std::isfinite(p)) throw std::domain_error("p must be positive and finite");
    if (!(lambda > 0.0) || lambda > 1.0) throw std::domain_error("lambda must lie in (0, 1]");
}

// ---------------------------------------------------------------------------
// Distortion algebra
// ---------------------------------------------------------------------------

double big_k_from_mu(double mu_abs) {
    if (!(mu_abs >= 0.0) || mu_abs >= 1.0) {
        throw std::domain_error("|mu| must lie in [0, 1); degenerate point");
    }
    const double t = mu_abs * mu_abs;
    return (1.0 + t) / (1.0 - t);
}

double big_k_vs_bold_k(double bold_k) {
    if (!(bold_k >= 1.0)) throw std::domain_error("operator-norm distortion must be >= 1");
    return 0.5 * (bold_k + 1.0 / bold_k);
}

// ---------------------------------------------------------------------------
// a_p family
// ---------------------------------------------------------------------------

double a_p(double s, const DistortionParams& params) {
    if (!(s >= 0.0)) throw std::domain_error("a_p: s must be non-negative");
    const double p = params.p;
    const double u = log_shift(s, p);
    return (s + std::exp(p)) * std::sqrt(u * (2.0 * p + u));
}

double a_p_derivative(double s, const DistortionParams& params) {
    if (!(s >= 0.0)) throw std::domain_error("a_p: s must be non-negative");
    const double p = params.p;
    const double u = log_shift(s, p);
    if (u == 0.0) return kInf;
    const double r = std::sqrt(u * (2.0 * p + u));
    return r + (p + u) / r;
}

double log_a_p_from_log_s(double log_s, const DistortionParams& params) {
    const double p = params.p;
    const double d = log_s - p;
    // log1p(e^d) without overflow for large d.
    const double u = d > 30.0 ? d + std::log1p(std::exp(-d)) : std::log1p(std::exp(d));
    const double log_total = p + u;
    return log_total + 0.5 * std::log(u * (2.0 * p + u));
}

namespace {

double log_a_p_lambda_factor(double s, const DistortionParams& params) {
    const double p = params.p;
    const double l = params.lambda;
    const double L = p + log_shift(s, p);
    return std::log(((1.0 - l * l) * L + (1.0 + l * l) * p) / (2.0 * p * l));
}

// Log-log inverse shared by a_p, a~_p and a_p^lambda. Given
// the forward map in log-log form, returns KernelEval with the plain-space
// derivative 1/f'(s).
template <class LogFwd, class Fwd, class Deriv>
KernelEval invert_increasing(double y, LogFwd&& log_fwd, Fwd&& fwd, Deriv&& deriv,
                             double s_guess, const SolveTolerance& tol, const char* name) {
    if (!(y >= 0.0)) throw std::domain_error(std::string(name) + ": argument must be non-negative");
    if (y == 0.0) return {0.0, 0.0, 0.0, 0};
    const RootResult r = solve_log_log(log_fwd, std::log(y), std::log(s_guess), tol.max_iterations, name);
    const double s = std::exp(r.x);
    KernelEval out;
    out.value = s;
    out.derivative = 1.0 / deriv(s);
    out.residual = std::abs(fwd(s) - y) / (1.0 + y);
    out.iterations = r.iterations;
    if (!(out.residual <= std::max(tol.residual, 64.0 * kEps))) {
        throw NumericalError(std::string(name) + ": residual above tolerance", s, s);
    }
    return out;
}

// d log a_p / d log s = s (1 + L / r^2) / (s + e^p), r^2 = L^2 - p^2.
double log_slope_a_p(double q, double p) {
    const double u = std::log1p(std::exp(q - p));
    const double share = 1.0 / (1.0 + std::exp(p - q));
    return share * (1.0 + (p + u) / (u * (2.0 * p + u)));
}

double a_p_guess(double y, double p) {
    // sqrt behaviour near 0, s log s behaviour at infinity
    const double ep = std::exp(p);
    if (y < ep) return std::max(y * y / (2.0 * p * ep), 1e-300);
    return std::max(y / std::max(std::log(y), 1.0), 1e-300);
}

}  // namespace

KernelEval a_p_inverse(double y, const DistortionParams& params, const SolveTolerance& tol) {
    const double p = params.p;
    auto log_fwd = [&](double q) {
        return FnEval{log_a_p_from_log_s(q, params), log_slope_a_p(q, p)};
    };
    return invert_increasing(
        y, log_fwd, [&](double s) { return a_p(s, params); },
        [&](double s) { return a_p_derivative(s, params); }, a_p_guess(y, p), tol, "a_p_inverse");
}

double a_tilde_p(double s, const DistortionParams& params) {
    if (!(s >= 0.0)) throw std::domain_error("a_tilde_p: s must be non-negative");
    const double p = params.p;
    const double u = log_shift(s, p);
    const double total = s + std::exp(p);
    return total * total * u * (2.0 * p + u);
}

double a_tilde_p_derivative(double s, const DistortionParams& params) {
    if (!(s >= 0.0)) throw std::domain_error("a_tilde_p: s must be non-negative");
    const double p = params.p;
    const double L = p + log_shift(s, p);
    return 2.0 * (s + std::exp(p)) * (L * L + L - p * p);
}

double a_tilde_p_second_derivative(double s, const DistortionParams& params) {
    if (!(s >= 0.0)) throw std::domain_error("a_tilde_p: s must be non-negative");
    const double p = params.p;
    const double L = p + log_shift(s, p);
    return 2.0 * (L * L + 3.0 * L + 1.0 - p * p);
}

KernelEval b_p_inverse(double y, const DistortionParams& params, const SolveTolerance& tol) {
    const double p = params.p;
    auto log_fwd = [&](double q) {
        const double u = std::log1p(std::exp(q - p));
        const double L = p + u;
        const double la = 2.0 * L + std::log(u * (2.0 * p + u));
        // s a~'(s) / a~(s) with a~' as printed
        const double share = 1.0 / (1.0 + std::exp(p - q));
        return FnEval{la, 2.0 * share * (L * L + L - p * p) / (u * (2.0 * p + u))};
    };
    const double guess = a_p_guess(std::sqrt(y), p);
    return invert_increasing(
        y, log_fwd, [&](double s) { return a_tilde_p(s, params); },
        [&](double s) { return a_tilde_p_derivative(s, params); }, guess, tol, "b_p_inverse");
}

MinSlope m_p(const DistortionParams& params) {
    params.validate();
    const double p = params.p;
    auto slope = [&](double q) { return a_p_derivative(std::exp(q), params); };

    // Scan a log-spaced grid, then refine the bracketing cell by golden section.
    auto minimise = [&](double q_min, double q_max) {
        constexpr int kScan = 400;
        const double dq = (q_max - q_min) / kScan;
        int best = 0;
        double best_val = kInf;
        for (int i = 0; i <= kScan; ++i) {
            const double v = slope(q_min + i * dq);
            if (v < best_val) {
                best_val = v;
                best = i;
            }
        }
        double a = q_min + std::max(best - 1, 0) * dq;
        double b = q_min + std::min(best + 1, kScan) * dq;
        const double inv_phi = 1.0 / std::numbers::phi;
        double c = b - (b - a) * inv_phi;
        double d = a + (b - a) * inv_phi;
        double fc = slope(c);
        double fd = slope(d);
        for (int it = 0; it < 200 && (b - a) > 1e-14 * std::max(1.0, std::abs(a)); ++it) {
            if (fc < fd) {
                b = d;
                d = c;
                fd = fc;
                c = b - (b - a) * inv_phi;
                fc = slope(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + (b - a) * inv_phi;
                fd = slope(d);
            }
        }
        const double q = 0.5 * (a + b);
        // Keep the endpoint if the minimum sits on the lower boundary.
        const double at_lo = slope(q_min);
        if (at_lo <= slope(q)) return std::pair{at_lo, std::exp(q_min)};
        return std::pair{slope(q), std::exp(q)};
    };

    MinSlope out;
    // a_p' blows up like s^{-1/2} at 0, so a generous lower limit suffices.
    const auto [m0, s0] = minimise(p - 80.0, p + 40.0 + 4.0 * std::log1p(p));
    out.over_nonnegative = m0;
    out.argmin_nonnegative = s0;
    const auto [m1, s1] = minimise(p, p + 40.0 + 4.0 * std::log1p(p));
    out.over_shifted = m1;
    out.argmin_shifted = s1;
    return out;
}

double a_p_lambda(double s, const DistortionParams& params) {
    const double p = params.p;
    const double l = params.lambda;
    const double L = p + log_shift(s, p);
    return a_p(s, params) * (((1.0 - l * l) * L + (1.0 + l * l) * p) / (2.0 * p * l));
}

double a_p_lambda_derivative(double s, const DistortionParams& params) {
    const double p = params.p;
    const double l = params.lambda;
    const double L = p + log_shift(s, p);
    const double factor = ((1.0 - l * l) * L + (1.0 + l * l) * p) / (2.0 * p * l);
    const double dfactor = (1.0 - l * l) / (2.0 * p * l) / (s + std::exp(p));
    return a_p_derivative(s, params) * factor + a_p(s, params) * dfactor;
}

KernelEval a_p_lambda_inverse(double y, const DistortionParams& params, const SolveTolerance& tol) {
    auto log_fwd = [&](double q) {
        const double s = std::exp(q);
        const double p = params.p;
        const double l = params.lambda;
        const double L = p + log_shift(s, p);
        const double share = 1.0 / (1.0 + std::exp(p - q));
        const double factor = (1.0 - l * l) * L + (1.0 + l * l) * p;
        const double la = log_a_p_from_log_s(q, params) + log_a_p_lambda_factor(s, params);
        return FnEval{la, log_slope_a_p(q, p) + share * (1.0 - l * l) / factor};
    };
    return invert_increasing(
        y, log_fwd, [&](double s) { return a_p_lambda(s, params); },
        [&](double s) { return a_p_lambda_derivative(s, params); }, a_p_guess(y, params.p), tol,
        "a_p_lambda_inverse");
}

// ---------------------------------------------------------------------------
// v^lambda
// ---------------------------------------------------------------------------

double v_lambda_forward_log(double v, const DistortionParams& params) {
    const double l = params.lambda;
    if (!(v > 0.0) || !(v < l)) throw std::domain_error("v must lie in (0, lambda)");
    const ImplicitForward fwd{ImplicitKind::beltrami, params.p, l};
    return fwd.at_value(v / l).f;
}

double v_lambda_slope_factor(double v, const DistortionParams& params) {
    const double p = params.p;
    const double l2 = params.lambda * params.lambda;
    const double gap = l2 - v * v;
    return 4.0 * p * l2 * v / (gap * gap) + 4.0 * v * (1.0 - l2) / (gap * (1.0 - v * v)) + 1.0 / v;
}

double v_lambda_dk(double v, double k, const DistortionParams& params) {
    if (v == 0.0) return 0.0;
    return 1.0 / (k * v_lambda_slope_factor(v, params));
}

double v_lambda_dx(double v, double x, const DistortionParams& params) {
    if (v == 0.0) return 0.0;
    return -2.0 / (x * v_lambda_slope_factor(v, params));
}

KernelEval v_lambda(double x, double k, const DistortionParams& params, const SolveTolerance& tol) {
    params.validate();
    if (!(x > 0.0)) throw std::domain_error("v_lambda: x must be positive");
    if (!(k >= 0.0)) throw std::domain_error("v_lambda: k must be non-negative");
    if (k == 0.0) return {0.0, 0.0, 0.0, 0};
    const ImplicitForward fwd{ImplicitKind::beltrami, params.p, params.lambda};
    const double target = std::log(k) - 2.0 * std::log(x);
    const ImplicitRoot root = solve_implicit(fwd, target, tol, "v_lambda");
    KernelEval out;
    out.value = params.lambda * root.u;
    out.derivative = v_lambda_dx(out.value, x, params);
    out.residual = root.residual;
    out.iterations = root.iterations;
    return out;
}

BeltramiEval beltrami_operator(std::complex<double> phi_value, double eta_value,
                               std::complex<double> xi, const DistortionParams& params,
                               const SolveTolerance& tol) {
    if (!(eta_value > 0.0)) throw std::domain_error("beltrami_operator: eta must be positive");
    BeltramiEval out;
    if (xi == std::complex<double>{}) return out;
    const double phi_abs = std::abs(phi_value);
    if (phi_abs == 0.0) {
        out.zero_set = true;
        return out;
    }
    const double v = v_lambda(std::abs(xi), phi_abs / eta_value, params, tol).value;
    out.value = std::conj(phi_value) / phi_abs * v * xi;
    return out;
}

// ---------------------------------------------------------------------------
// Uniqueness kernel
// ---------------------------------------------------------------------------

double uniqueness_forward(double x, double y, const DistortionParams& params) {
    const double d = x * x - y * y;
    return std::exp(params.p * (x * x + y * y) / d) * x * y / (d * d);
}

double uniqueness_slope(double t, const DistortionParams& params) {
    const double p = params.p;
    const double t2 = t * t;
    const double t4 = t2 * t2;
    return t * (3.0 + (4.0 * p - 2.0) * t2 - t4) / (1.0 + (4.0 * p + 2.0) * t2 - 3.0 * t4);
}

double uniqueness_second_derivative(double x, double t, const DistortionParams& params) {
    const double p = params.p;
    const double t2 = t * t;
    const double t4 = t2 * t2;
    const double one_minus = 1.0 - t2;
    const double poly = 3.0 * t4 * t4 - 12.0 * t4 * t2 + 2.0 * (9.0 + 8.0 * p * p) * t4 - 12.0 * t2 + 3.0;
    const double den = -3.0 * t4 + (4.0 * p + 2.0) * t2 + 1.0;
    return 2.0 * t * one_minus * one_minus * poly / (x * den * den * den);
}

KernelEval uniqueness_kernel(double x, double k, const DistortionParams& params,
                             const SolveTolerance& tol) {
    params.validate();
    if (!(x > 0.0)) throw std::domain_error("uniqueness_kernel: x must be positive");
    if (!(k >= 0.0)) throw std::domain_error("uniqueness_kernel: k must be non-negative");
    if (k == 0.0) return {0.0, 0.0, 0.0, 0};
    const ImplicitForward fwd{ImplicitKind::uniqueness, params.p, 1.0};
    const double target = std::log(k) + 2.0 * std::log(x);
    const ImplicitRoot root = solve_implicit(fwd, target, tol, "uniqueness_kernel");
    KernelEval out;
    out.value = x * root.u;
    out.derivative = uniqueness_slope(root.u, params);
    out.residual = root.residual;
    out.iterations = root.iterations;
    return out;
}

// ---------------------------------------------------------------------------
// Ellipticity and ratios
// ---------------------------------------------------------------------------

double ellipticity_ratio_a(double t, const DistortionParams& params) {
    if (!(t >= 0.0) || !(t < 1.0)) throw std::domain_error("ellipticity_ratio_a: t must lie in [0, 1)");
    const double p = params.p;
    const double t2 = t * t;
    const double t3 = t2 * t;
    return t * (1.0 + (2.0 * p + 1.0) * t - t2 - t3) / (1.0 + t + (2.0 * p - 1.0) * t2 - t3);
}

double r_p(double t, const DistortionParams& params) {
    if (!(t >= 0.0) || !(t <= 1.0)) throw std::domain_error("r_p: t must lie in [0, 1]");
    const double p = params.p;
    const double t2 = t * t;
    const double t4 = t2 * t2;
    const double t6 = t4 * t2;
    const double t8 = t4 * t4;
    const double num = 1.0 + t2 * (13.0 + 8.0 * p + 2.0 * (-7.0 + 4.0 * p * (5.0 + 2.0 * p)) * t2 +
                                   2.0 * (-7.0 + 4.0 * p * (-5.0 + 2.0 * p)) * t4 +
                                   (13.0 - 8.0 * p) * t6 + t8);
    const double den = (1.0 + t2) * (1.0 + (-4.0 + 8.0 * p) * t2 + 2.0 * (3.0 + 8.0 * p * p) * t4 -
                                     4.0 * (1.0 + 2.0 * p) * t6 + t8);
    return num / den;
}

double max_ratio_bound(double a, double b, std::complex<double> z, std::complex<double> w) {
    if (z == w) throw std::domain_error("max_ratio_bound: z and w must differ");
    const double tz = std::abs(z);
    const double tw = std::abs(w);
    const double first = (a * tz + b * tw) / (tz + tw);
    const double num = std::abs(a * tz - b * tw);
    const double den = std::abs(tz - tw);
    double second = 0.0;
    if (den > 0.0) {
        second = num / den;
    } else if (num > 0.0) {
        second = kInf;
    }
    return std::max(first, second);
}

}  // namespace expdist
