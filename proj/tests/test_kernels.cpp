#include <doctest.h>

#include <cmath>
#include <complex>
#include <random>

#include "expdist/checks.hpp"
#include "expdist/kernels.hpp"

using namespace expdist;

namespace {

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace

TEST_CASE("distortion algebra") {
    CHECK(big_k_from_mu(0.0) == 1.0);
    CHECK(rel(big_k_from_mu(0.9), 9.526315789473684) < 1e-15);
    CHECK_THROWS_AS((void)big_k_from_mu(1.0), std::domain_error);
    CHECK(rel(big_k_vs_bold_k(2.0), 1.25) < 1e-15);
}

TEST_CASE("a_p closed forms") {
    const double e = std::exp(1.0);
    CHECK(rel(a_p(e * e - e, {1.0, 1.0}), 12.79822058332457) < 1e-14);
    CHECK(rel(a_p(e * e * e - e * e, {2.0, 1.0}), 44.91262592482960) < 1e-14);
    CHECK(rel(a_p_lambda(e * e - e, {1.0, 0.5}), 35.19510660414257) < 1e-14);
    CHECK(a_p(0.0, {1.0, 1.0}) == 0.0);
    CHECK(std::isinf(a_p_derivative(0.0, {1.0, 1.0})));
    CHECK_THROWS((void)a_p(-1.0, {1.0, 1.0}));
}

TEST_CASE("log-space a_p agrees with the direct form") {
    for (double p : {0.5, 1.0, 4.0}) {
        for (double s : {1e-3, 1.0, 1e3, 1e8}) {
            CHECK(rel(log_a_p_from_log_s(std::log(s), {p, 1.0}), std::log(a_p(s, {p, 1.0}))) < 1e-12);
        }
    }
    // Far beyond double range the log form stays finite.
    CHECK(std::isfinite(log_a_p_from_log_s(2000.0, {1.0, 1.0})));
}

TEST_CASE("inverses") {
    for (double p : {0.1, 1.0, 10.0}) {
        const DistortionParams prm{p, 1.0};
        for (double s : {1e-4, 0.5, 30.0, 1e6}) {
            const KernelEval r = a_p_inverse(a_p(s, prm), prm);
            CHECK(rel(r.value, s) < 1e-10);
            CHECK(rel(r.derivative, 1.0 / a_p_derivative(s, prm)) < 1e-10);
            CHECK(rel(b_p_inverse(a_tilde_p(s, prm), prm).value, s) < 1e-10);
        }
    }
    CHECK(a_p_inverse(0.0, {1.0, 1.0}).value == 0.0);
}

TEST_CASE("m_p oracles") {
    struct Row {
        double p, over_nonnegative, over_shifted;
    };
    const Row rows[] = {{0.01, 1.0693566019888458, 1.7031772128613499},
                        {0.1, 1.3175669721278596, 1.7948620416210014},
                        {1.0, 2.3935395417625611, 2.6055196910395147},
                        {10.0, 6.4772239053482294, 6.6107140541493055}};
    for (const Row& r : rows) {
        const MinSlope m = m_p({r.p, 1.0});
        CHECK(rel(m.over_nonnegative, r.over_nonnegative) < 1e-9);
        CHECK(rel(m.over_shifted, r.over_shifted) < 1e-9);
    }
    // Large-p growth like 2 sqrt(p).
    CHECK(std::abs(m_p({400.0, 1.0}).over_nonnegative / 20.0 - 2.0) < 5e-3);
}

TEST_CASE("v^lambda") {
    const KernelEval v = v_lambda(1.0, 2.647245025235015, {1.0, 1.0});
    CHECK(std::abs(v.value - 0.5) < 1e-12);
    CHECK(v_lambda(2.0, 0.0, {1.0, 0.6}).value == 0.0);
    for (double lam : {0.3, 0.9}) {
        const DistortionParams prm{2.0, lam};
        const KernelEval r = v_lambda(0.7, 5.0, prm);
        CHECK(r.value < lam);
        CHECK(rel(v_lambda_forward_log(r.value, prm), std::log(5.0 / 0.49)) < 1e-12);
    }
}

TEST_CASE("v^lambda tends to lambda as x -> 0") {
    // The gap closes like 1/log(1/x), so 1e-3 at x = 1e-4 only holds for small p.
    for (double lam : {0.5, 1.0}) {
        CHECK(lam - v_lambda(1e-4, 1.0, {0.01, lam}).value < 1e-3);
        for (double p : {0.01, 0.1, 1.0}) {
            double gap = lam;
            for (double x : {1e-2, 1e-4, 1e-8, 1e-16, 1e-100}) {
                const double g = lam - v_lambda(x, 1.0, {p, lam}).value;
                CHECK(g > 0.0);
                CHECK(g < gap);
                gap = g;
            }
            CHECK(gap < 2.5e-3);
        }
    }
}

TEST_CASE("uniqueness kernel") {
    const DistortionParams prm{1.0, 1.0};
    const KernelEval y = uniqueness_kernel(2.0, 3.0, prm);
    CHECK(y.value < 2.0);
    CHECK(rel(uniqueness_forward(2.0, y.value, prm), 3.0) < 1e-10);
    CHECK(uniqueness_kernel(2.0, 0.0, prm).value == 0.0);
}

TEST_CASE("Beltrami operator") {
    const DistortionParams prm{1.0, 0.8};
    const BeltramiEval zero = beltrami_operator({0.0, 0.0}, 1.0, {1.0, 0.0}, prm);
    CHECK(zero.zero_set);
    CHECK(zero.value == std::complex<double>(0.0, 0.0));
    // B / xi has the phase of conj(phi) and modulus below lambda.
    const std::complex<double> xi(0.3, 0.4);
    const BeltramiEval b = beltrami_operator({0.0, 2.0}, 1.5, xi, prm);
    CHECK(std::abs(b.value / xi) < 0.8);
    CHECK(std::abs(std::arg(b.value / xi) - std::arg(std::complex<double>(0.0, -2.0))) < 1e-12);
}

TEST_CASE("R_p and the ellipticity ratio") {
    for (double p : {2.0, 3.0, 4.0}) CHECK(r_p(1.0, {p, 1.0}) == doctest::Approx(1.0).epsilon(1e-14));
    // Ellipticity constant sup_t (1 + A^2)/(1 - A^2) / K(t)^2.
    auto sup_c = [](double p) {
        double m = 0.0;
        for (int i = 0; i < 200000; ++i) {
            const double t = i / 200000.0;
            const double a = ellipticity_ratio_a(t, {p, 1.0});
            const double k = (1.0 + t * t) / (1.0 - t * t);
            m = std::max(m, (1.0 + a * a) / (1.0 - a * a) / (k * k));
        }
        return m;
    };
    CHECK(std::abs(sup_c(1.0) - 1.0) < 1e-9);
    CHECK(std::abs(sup_c(2.0) - 1.2318249869578179641) < 1e-8);
    CHECK(std::abs(sup_c(4.0) - 2.1216843357559720261) < 1e-8);
    CHECK(ellipticity_ratio_a(0.0, {1.0, 1.0}) == 0.0);
    CHECK_THROWS_AS((void)ellipticity_ratio_a(1.0, {1.0, 1.0}), std::domain_error);
}

TEST_CASE("max-ratio bound on random triples") {
    std::mt19937_64 rng(3);
    for (int i = 0; i < 20000; ++i) {
        const double a = 2.0 * unit(rng), b = 2.0 * unit(rng);
        const std::complex<double> z(unit(rng) - 0.5, unit(rng) - 0.5), w(unit(rng) - 0.5, unit(rng) - 0.5);
        CHECK_LE(std::abs(a * z - b * w) / std::abs(z - w), max_ratio_bound(a, b, z, w) * (1.0 + 1e-12));
    }
    CHECK_THROWS((void)max_ratio_bound(1.0, 2.0, {0.5, 0.0}, {0.5, 0.0}));
}

TEST_CASE("parameter validation") {
    CHECK_THROWS((DistortionParams{0.0, 1.0}.validate()));
    CHECK_THROWS((DistortionParams{1.0, 0.0}.validate()));
    CHECK_THROWS((DistortionParams{1.0, 1.5}.validate()));
    CHECK_NOTHROW((DistortionParams{1.0, 1.0}.validate()));
}

TEST_CASE("invariant suites") {
    const CheckSuite s = kernel_invariant_suite();
    for (const CheckResult& r : s.results) {
        INFO(r.name << " worst=" << r.worst << " limit=" << r.limit);
        CHECK(r.passed);
    }
    CHECK(s.seconds < 10.0);
}
