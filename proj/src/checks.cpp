#include "expdist/checks.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <random>

#include "expdist/diagnostics.hpp"
#include "expdist/grid.hpp"
#include "expdist/kernels.hpp"

namespace expdist {

namespace {

using Clock = std::chrono::steady_clock;

const std::vector<double> kPValues{0.1, 0.5, 1.0, 2.0, 5.0, 10.0};
const std::vector<double> kLambdaValues{0.3, 0.6, 0.9, 1.0};

double rel_error(double got, double want) {
    const double scale = std::max(std::abs(want), 1e-300);
    return std::abs(got - want) / scale;
}

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double log_uniform(std::mt19937_64& rng, double lo, double hi) {
    return std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * uniform01(rng));
}

// Tracks the worst value of a quantity that must stay at or below a limit.
class Tracker {
public:
    Tracker(std::string name, double limit) {
        r_.name = std::move(name);
        r_.limit = limit;
    }
    void add(double value) {
        ++r_.samples;
        if (std::isnan(value) || value > r_.limit) ++r_.violations;
        if (std::isnan(value) || value > r_.worst) r_.worst = value;
    }
    // Records a failed evaluation (exception) as a violation.
    void fail() {
        ++r_.samples;
        ++r_.violations;
        r_.worst = std::numeric_limits<double>::infinity();
    }
    [[nodiscard]] CheckResult result() const {
        CheckResult r = r_;
        r.passed = r.violations == 0;
        return r;
    }

private:
    CheckResult r_;
};

template <class Fn>
void guarded(Tracker& t, Fn&& fn) {
    try {
        t.add(fn());
    } catch (const std::exception&) {
        t.fail();
    }
}

double fd_step(double x) { return 1e-5 * std::abs(x); }

}  // namespace

bool CheckSuite::passed() const {
    return std::all_of(results.begin(), results.end(), [](const CheckResult& r) { return r.passed; });
}

void CheckSuite::append(const CheckSuite& other) {
    results.insert(results.end(), other.results.begin(), other.results.end());
    seconds += other.seconds;
}

CheckSuite kernel_roundtrip_suite() {
    const auto t0 = Clock::now();
    CheckSuite suite;
    const std::vector<double> s_grid{1e-6, 1e-3, 0.1, 1.0, 10.0, 1e3, 1e6, 1e9};
    const std::vector<double> u_grid{0.01, 0.1, 0.3, 0.5, 0.7, 0.9, 0.99, 0.999};
    const std::vector<double> x_grid{0.1, 1.0, 10.0};

    Tracker a_rt("roundtrip A_p(a_p(s))", 1e-10);
    Tracker b_rt("roundtrip B_p(a~_p(s))", 1e-10);
    Tracker al_rt("roundtrip a_p^lambda inverse", 1e-10);
    Tracker v_rt("roundtrip v^lambda", 1e-10);
    Tracker y_rt("roundtrip uniqueness kernel", 1e-10);
    Tracker a_d("a_p' vs finite difference", 1e-6);
    Tracker at_d("a~_p' vs finite difference", 1e-6);
    Tracker al_d("a_p^lambda' vs finite difference", 1e-6);
    Tracker v_dx("dv/dx closed form vs finite difference", 1e-6);
    Tracker v_dk("dv/dk closed form vs finite difference", 1e-6);
    Tracker y_d("y'(x) closed form vs finite difference", 1e-6);

    for (double p : kPValues) {
        const DistortionParams base{p, 1.0};
        for (double s : s_grid) {
            guarded(a_rt, [&] { return rel_error(a_p_inverse(a_p(s, base), base).value, s); });
            guarded(b_rt, [&] { return rel_error(b_p_inverse(a_tilde_p(s, base), base).value, s); });
            guarded(a_d, [&] {
                const double h = fd_step(s);
                const double fd = (a_p(s + h, base) - a_p(s - h, base)) / (2.0 * h);
                return rel_error(a_p_derivative(s, base), fd);
            });
            guarded(at_d, [&] {
                const double h = fd_step(s);
                const double fd = (a_tilde_p(s + h, base) - a_tilde_p(s - h, base)) / (2.0 * h);
                return rel_error(a_tilde_p_derivative(s, base), fd);
            });
        }
        for (double l : kLambdaValues) {
            const DistortionParams params{p, l};
            for (double s : s_grid) {
                guarded(al_rt, [&] { return rel_error(a_p_lambda_inverse(a_p_lambda(s, params), params).value, s); });
                guarded(al_d, [&] {
                    const double h = fd_step(s);
                    const double fd = (a_p_lambda(s + h, params) - a_p_lambda(s - h, params)) / (2.0 * h);
                    return rel_error(a_p_lambda_derivative(s, params), fd);
                });
            }
            for (double u : u_grid) {
                const double v = u * l;
                for (double x : x_grid) {
                    const double log_k = v_lambda_forward_log(v, params) + 2.0 * std::log(x);
                    if (log_k > 700.0) continue;
                    const double k = std::exp(log_k);
                    guarded(v_rt, [&] { return rel_error(v_lambda(x, k, params).value, v); });
                    if (u > 0.9) continue;
                    guarded(v_dx, [&] {
                        const double h = fd_step(x);
                        const double fd = (v_lambda(x + h, k, params).value - v_lambda(x - h, k, params).value) / (2.0 * h);
                        return rel_error(v_lambda(x, k, params).derivative, fd);
                    });
                    guarded(v_dk, [&] {
                        const double h = fd_step(k);
                        const double fd = (v_lambda(x, k + h, params).value - v_lambda(x, k - h, params).value) / (2.0 * h);
                        return rel_error(v_lambda_dk(v, k, params), fd);
                    });
                }
            }
        }
        for (double t : u_grid) {
            for (double x : x_grid) {
                const double y = t * x;
                const double k = uniqueness_forward(x, y, base);
                if (!std::isfinite(k) || k <= 0.0) continue;
                guarded(y_rt, [&] { return rel_error(uniqueness_kernel(x, k, base).value, y); });
                if (t > 0.9) continue;
                guarded(y_d, [&] {
                    const double h = fd_step(x);
                    const double fd =
                        (uniqueness_kernel(x + h, k, base).value - uniqueness_kernel(x - h, k, base).value) / (2.0 * h);
                    return rel_error(uniqueness_kernel(x, k, base).derivative, fd);
                });
            }
        }
    }
    for (const Tracker* t : {&a_rt, &b_rt, &al_rt, &v_rt, &y_rt, &a_d, &at_d, &al_d, &v_dx, &v_dk, &y_d}) {
        suite.results.push_back(t->result());
    }
    suite.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return suite;
}

CheckSuite scalar_fact_suite(std::uint64_t seed, std::size_t lipschitz_pairs) {
    const auto t0 = Clock::now();
    CheckSuite suite;
    std::mt19937_64 rng(seed);

    {
        // f = lambda x + i y on a small grid: K = (lambda + 1/lambda) / 2.
        Tracker t("diagonal family K = (lambda + 1/lambda)/2", 1e-12);
        const auto grid = TriGrid::unit_square(5);
        for (double l : {0.25, 0.5, 2.0, 3.0}) {
            const MapField f = MapField::sample(grid, [l](cplx z) { return cplx(l * z.real(), z.imag()); });
            const DerivedField d = wirtinger(f);
            const double want = 0.5 * (l + 1.0 / l);
            for (double k : d.big_k) t.add(rel_error(k, want));
            t.add(rel_error(big_k_vs_bold_k(std::max(l, 1.0 / l)), want));
        }
        suite.results.push_back(t.result());
    }
    {
        Tracker t("m_p > 1 for p in {0.1, 1, 10}", 0.0);
        for (double p : {0.1, 1.0, 10.0}) {
            const MinSlope m = m_p({p, 1.0});
            t.add(m.over_nonnegative > 1.0 && m.over_shifted > 1.0 ? 0.0 : 1.0);
        }
        suite.results.push_back(t.result());
        Tracker u("m_0.01 < 1.1", 1.1);
        u.add(m_p({0.01, 1.0}).over_nonnegative);
        suite.results.push_back(u.result());
    }
    {
        Tracker t("R_p(1) = 1 for p in {2, 3, 4}", 1e-14);
        for (double p : {2.0, 3.0, 4.0}) t.add(std::abs(r_p(1.0, {p, 1.0}) - 1.0));
        suite.results.push_back(t.result());
    }
    {
        // dv/dk <= c_p / k, c_p = max{1/(p lambda^2), 1/(4 lambda^2)}.
        Tracker t("dv/dk <= c_p/k (ratio)", 1.0 + 1e-12);
        for (double p : {0.5, 1.0, 2.0, 5.0}) {
            for (double l : {0.3, 0.6, 0.9, 1.0}) {
                const DistortionParams params{p, l};
                const double c = std::max(1.0 / (p * l * l), 1.0 / (4.0 * l * l));
                for (int i = 0; i < 200; ++i) {
                    const double x = log_uniform(rng, 1e-2, 1e2);
                    const double k = log_uniform(rng, 1e-4, 1e4);
                    guarded(t, [&] {
                        const double v = v_lambda(x, k, params).value;
                        return v_lambda_dk(v, k, params) * k / c;
                    });
                }
            }
        }
        suite.results.push_back(t.result());
    }
    {
        // |B(zeta) - B(xi)| <= max{v(|zeta|), v(|xi|)} |zeta - xi|.
        Tracker t("Lipschitz bound of the Beltrami operator (excess)", 1e-9);
        for (double p : {1.0, 2.0}) {
            for (double l : {0.5, 0.9}) {
                const DistortionParams params{p, l};
                for (std::size_t i = 0; i < lipschitz_pairs; ++i) {
                    const cplx phi = std::polar(log_uniform(rng, 1e-2, 1e2), 2.0 * M_PI * uniform01(rng));
                    const double eta = 1.0 + 3.0 * uniform01(rng);
                    const cplx zeta = std::polar(log_uniform(rng, 1e-2, 1e2), 2.0 * M_PI * uniform01(rng));
                    const cplx xi = std::polar(log_uniform(rng, 1e-2, 1e2), 2.0 * M_PI * uniform01(rng));
                    guarded(t, [&] {
                        const double k = std::abs(phi) / eta;
                        const double vz = v_lambda(std::abs(zeta), k, params).value;
                        const double vx = v_lambda(std::abs(xi), k, params).value;
                        const cplx phase = std::conj(phi) / std::abs(phi);
                        const cplx bz = phase * vz * zeta;
                        const cplx bx = phase * vx * xi;
                        return std::abs(bz - bx) / std::abs(zeta - xi) - std::max(vz, vx);
                    });
                }
            }
        }
        suite.results.push_back(t.result());
    }
    {
        // t <= y' <= 3t with t = y/x; reported as the largest bracket excess.
        // Relative excess; the limit allows a few ulps of rounding in y/x.
        Tracker t("slope bracket t <= y' <= 3t (relative excess)", 1e-14);
        for (double p : {0.1, 0.5, 1.0, 2.0, 5.0, 10.0}) {
            const DistortionParams params{p, 1.0};
            for (int i = 0; i < 2000; ++i) {
                const double x = log_uniform(rng, 1e-2, 1e2);
                const double k = log_uniform(rng, 1e-6, 1e6);
                guarded(t, [&] {
                    const KernelEval y = uniqueness_kernel(x, k, params);
                    const double r = y.value / x;
                    const double slope = y.derivative;
                    return std::max({0.0, r - slope, slope - 3.0 * r}) / r;
                });
            }
            for (int i = 1; i < 1000; ++i) {
                const double r = i / 1000.0;
                const double slope = uniqueness_slope(r, params);
                t.add(std::max({0.0, r - slope, slope - 3.0 * r}) / r);
            }
        }
        suite.results.push_back(t.result());
    }
    suite.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return suite;
}

CheckSuite f_identity_suite() {
    const auto t0 = Clock::now();
    CheckSuite suite;
    Tracker t("F-identity over |mu| in [0, 0.999]", 1e-8);
    for (double p : {0.5, 1.0, 2.0}) {
        for (int i = 0; i <= 999; ++i) {
            const double mu = i / 1000.0;
            guarded(t, [&] { return f_identity_point(mu, {p, 1.0}); });
        }
    }
    suite.results.push_back(t.result());
    suite.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return suite;
}

CheckSuite kernel_property_suite(std::uint64_t seed) {
    const auto t0 = Clock::now();
    CheckSuite suite;
    std::mt19937_64 rng(seed);

    // Non-monotone steps are counted as violations (limit 0 on the count of
    // non-positive increments).
    Tracker mono("strict monotonicity of a_p, a~_p, a_p^lambda, v, y", 0.0);
    for (double p : kPValues) {
        for (double l : kLambdaValues) {
            const DistortionParams params{p, l};
            double prev_a = -1.0, prev_at = -1.0, prev_al = -1.0;
            for (int i = 0; i < 1000; ++i) {
                const double s = std::exp(-10.0 + 25.0 * i / 999.0);
                const double a = a_p(s, params), at = a_tilde_p(s, params), al = a_p_lambda(s, params);
                mono.add(a > prev_a && at > prev_at && al > prev_al ? 0.0 : 1.0);
                prev_a = a, prev_at = at, prev_al = al;
            }
            double prev_vk = -1.0, prev_vx = 2.0, prev_yk = -1.0;
            for (int i = 0; i < 1000; ++i) {
                const double q = -6.0 + 10.0 * i / 999.0;
                guarded(mono, [&] {
                    const double vk = v_lambda(1.0, std::exp(q), params).value;
                    const double vx = v_lambda(std::exp(q / 2.0), 1.0, params).value;
                    const double yk = uniqueness_kernel(1.0, std::exp(q), params).value;
                    const bool ok = vk > prev_vk && vx < prev_vx && yk > prev_yk;
                    prev_vk = vk, prev_vx = vx, prev_yk = yk;
                    return ok ? 0.0 : 1.0;
                });
            }
        }
    }
    suite.results.push_back(mono.result());

    Tracker convex("convexity of y(x) (non-positive second differences)", 0.0);
    for (double p : {0.5, 1.0, 2.0, 5.0}) {
        for (double k : {1e-3, 1.0, 1e3}) {
            const DistortionParams params{p, 1.0};
            for (int i = 0; i < 200; ++i) {
                const double x = std::exp(-3.0 + 6.0 * i / 199.0);
                guarded(convex, [&] {
                    const double t = uniqueness_kernel(x, k, params).value / x;
                    return uniqueness_second_derivative(x, t, params) > 0.0 ? 0.0 : 1.0;
                });
            }
        }
    }
    suite.results.push_back(convex.result());

    Tracker bp("B_p(t^2) = A_p(t)", 1e-10);
    for (double p : {1.0, 2.0}) {
        for (double t : {0.1, 1.0, 10.0}) {
            guarded(bp, [&] { return rel_error(b_p_inverse(t * t, {p, 1.0}).value, a_p_inverse(t, {p, 1.0}).value); });
        }
    }
    suite.results.push_back(bp.result());

    Tracker lam1("a_p^1 = a_p", 0.0);
    for (double p : kPValues) {
        for (int i = 0; i < 100; ++i) {
            const double s = std::exp(-8.0 + 20.0 * i / 99.0);
            lam1.add(std::abs(a_p_lambda(s, {p, 1.0}) - a_p(s, {p, 1.0})));
        }
    }
    suite.results.push_back(lam1.result());

    Tracker slope0("a~_p'(s) >= 2p e^p (relative shortfall)", 1e-12);
    for (double p : kPValues) {
        const double floor = 2.0 * p * std::exp(p);
        slope0.add(rel_error(a_tilde_p_derivative(0.0, {p, 1.0}), floor));
        for (int i = 0; i < 200; ++i) {
            const double s = std::exp(-10.0 + 25.0 * i / 199.0);
            slope0.add(std::max(0.0, (floor - a_tilde_p_derivative(s, {p, 1.0})) / floor));
        }
    }
    suite.results.push_back(slope0.result());

    Tracker witness("x^2 v(x) increasing", 0.0);
    for (double p : {1.0, 2.0}) {
        for (double l : {0.5, 0.9}) {
            double prev = -1.0;
            for (int i = 0; i < 300; ++i) {
                const double x = std::exp(-4.0 + 8.0 * i / 299.0);
                guarded(witness, [&] {
                    const double w = x * x * v_lambda(x, 1.0, {p, l}).value;
                    const bool ok = w > prev;
                    prev = w;
                    return ok ? 0.0 : 1.0;
                });
            }
        }
    }
    suite.results.push_back(witness.result());

    Tracker maxr("max-ratio inequality (excess)", 1e-12);
    for (int i = 0; i < 1000000; ++i) {
        const double a = 3.0 * uniform01(rng), b = 3.0 * uniform01(rng);
        const cplx z(2.0 * uniform01(rng) - 1.0, 2.0 * uniform01(rng) - 1.0);
        const cplx w(2.0 * uniform01(rng) - 1.0, 2.0 * uniform01(rng) - 1.0);
        if (z == w) continue;
        maxr.add(std::abs(a * z - b * w) / std::abs(z - w) - max_ratio_bound(a, b, z, w));
    }
    for (int i = 0; i < 10000; ++i) {
        // |z| and |w| within 1e-8.
        const double a = 3.0 * uniform01(rng), b = 3.0 * uniform01(rng);
        const double r = 0.1 + uniform01(rng);
        const cplx z = std::polar(r, 2.0 * M_PI * uniform01(rng));
        const cplx w = std::polar(r * (1.0 + 1e-8 * (2.0 * uniform01(rng) - 1.0)), 2.0 * M_PI * uniform01(rng));
        if (z == w) continue;
        maxr.add(std::abs(a * z - b * w) / std::abs(z - w) - max_ratio_bound(a, b, z, w));
    }
    suite.results.push_back(maxr.result());

    Tracker eq("max-ratio equality at a = b (relative)", 1e-12);
    for (int i = 0; i < 10000; ++i) {
        const double a = 3.0 * uniform01(rng) + 1e-3;
        const cplx z(2.0 * uniform01(rng) - 1.0, 2.0 * uniform01(rng) - 1.0);
        const cplx w(2.0 * uniform01(rng) - 1.0, 2.0 * uniform01(rng) - 1.0);
        // Keep away from |z| = |w|, where the second branch is a 0/0 quotient.
        if (std::abs(std::abs(z) - std::abs(w)) < 1e-3) continue;
        eq.add(rel_error(max_ratio_bound(a, a, z, w), std::abs(a * z - a * w) / std::abs(z - w)));
    }
    suite.results.push_back(eq.result());

    Tracker ell("ellipticity ratio A(t) in [0, 1)", 0.0);
    for (double p : kPValues) {
        for (int i = 0; i < 1000; ++i) {
            const double a = ellipticity_ratio_a(i / 1000.0, {p, 1.0});
            ell.add(a >= 0.0 && a < 1.0 ? 0.0 : 1.0);
        }
    }
    suite.results.push_back(ell.result());

    Tracker zero("v = 0 at k = 0, y = 0 at k = 0", 0.0);
    for (double p : kPValues) {
        zero.add(v_lambda(1.0, 0.0, {p, 0.5}).value);
        zero.add(uniqueness_kernel(1.0, 0.0, {p, 1.0}).value);
    }
    suite.results.push_back(zero.result());

    suite.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return suite;
}

CheckSuite kernel_invariant_suite(std::uint64_t seed) {
    CheckSuite suite = kernel_roundtrip_suite();
    suite.append(scalar_fact_suite(seed));
    suite.append(f_identity_suite());
    suite.append(kernel_property_suite(seed + 4));
    return suite;
}

}  // namespace expdist
