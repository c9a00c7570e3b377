#include <doctest.h>

#include <cmath>
#include <random>

#include "expdist/functional.hpp"

using namespace expdist;

namespace {

MapField affine_map(int n, cplx a = {1.5, 0.0}, cplx b = {0.5, 0.0}) {
    return MapField::sample(TriGrid::unit_square(n), [=](cplx z) { return a * z + b * std::conj(z); });
}

// Smooth interior perturbation of the affine map 2x + iy.
MapField wobbly_map(int n) {
    return MapField::sample(TriGrid::unit_square(n), [](cplx z) {
        const double bump = std::sin(M_PI * z.real()) * std::sin(M_PI * z.imag());
        return 1.5 * z + 0.5 * std::conj(z) + 0.05 * bump * cplx(1.0, 0.7);
    });
}

}  // namespace

TEST_CASE("energies of affine maps") {
    const MapField id = affine_map(9, {1.0, 0.0}, {0.0, 0.0});
    const MapField f = affine_map(9);
    const WeightSpec w = weight_eval(WeightKind::euclidean, f.grid());
    const double e = std::exp(1.0);

    CHECK(energy(id, w, IntegrandSpec::exp_p(1.0)).energy == doctest::Approx(e).epsilon(1e-13));
    const EnergyReport r = energy(f, w, IntegrandSpec::exp_p(1.0));
    CHECK(r.energy == doctest::Approx(std::exp(1.25)).epsilon(1e-13));
    CHECK(r.log_energy == doctest::Approx(1.25).epsilon(1e-13));
    CHECK(r.normalized == doctest::Approx(1.25).epsilon(1e-13));
    CHECK(r.max_distortion == doctest::Approx(1.25).epsilon(1e-13));
    CHECK(r.per_element.size() == f.grid().num_triangles());
    CHECK(energy(f, w, IntegrandSpec::exp_p(1.0), false).per_element.empty());

    // Partial sums 1 + pK + (pK)^2/2 at K = 1.
    CHECK(energy(id, w, IntegrandSpec::truncated(1.0, 2)).energy == doctest::Approx(2.5).epsilon(1e-13));
    CHECK(energy(id, w, IntegrandSpec::truncated(1.0, 0)).energy == doctest::Approx(1.0).epsilon(1e-13));

    // Target-side form picks up the Jacobian 2.
    CHECK(inverse_energy(f, w, IntegrandSpec::exp_p(1.0)).energy ==
          doctest::Approx(2.0 * std::exp(1.25)).epsilon(1e-13));
}

TEST_CASE("lambda integrand") {
    const MapField f = affine_map(5);
    const WeightSpec w = weight_eval(WeightKind::euclidean, f.grid());
    CHECK(energy(f, w, IntegrandSpec::exp_p_lambda(1.0, 1.0)).energy ==
          doctest::Approx(energy(f, w, IntegrandSpec::exp_p(1.0)).energy).epsilon(1e-14));
    // K^lambda = (l^2 A + B)/(l^2 A - B) with A = 2.25, B = 0.25.
    const double l2 = 0.81;
    const double k = (l2 * 2.25 + 0.25) / (l2 * 2.25 - 0.25);
    CHECK(energy(f, w, IntegrandSpec::exp_p_lambda(1.0, 0.9)).log_energy == doctest::Approx(k).epsilon(1e-13));
    // |mu| = 1/3 >= lambda makes every element inadmissible.
    const EnergyReport bad = energy(f, w, IntegrandSpec::exp_p_lambda(1.0, 0.3));
    CHECK_FALSE(bad.admissible);
    CHECK(std::isinf(bad.energy));
    CHECK(bad.non_admissible_elements == f.grid().num_triangles());
}

TEST_CASE("large p stays finite in log space") {
    const MapField f = affine_map(5);
    const WeightSpec w = weight_eval(WeightKind::euclidean, f.grid());
    const EnergyReport r = energy(f, w, IntegrandSpec::exp_p(800.0));
    CHECK(r.admissible);
    CHECK(r.log_energy == doctest::Approx(1000.0).epsilon(1e-13));
    CHECK(r.normalized == doctest::Approx(1.25).epsilon(1e-13));
}

TEST_CASE("folded maps are not admissible") {
    MapField f = affine_map(5);
    std::vector<cplx> in = f.interior_values();
    in[0] = cplx(5.0, 5.0);
    f.set_interior_values(in);
    const WeightSpec w = weight_eval(WeightKind::euclidean, f.grid());
    const EnergyReport r = energy(f, w, IntegrandSpec::exp_p(1.0));
    CHECK_FALSE(r.admissible);
    CHECK(r.non_admissible_elements > 0);
    CHECK_THROWS_AS((void)energy_gradient(f, w, IntegrandSpec::exp_p(1.0)), std::domain_error);
    const LogEnergyGradient lg = log_energy_gradient(f, w, IntegrandSpec::exp_p(1.0));
    CHECK_FALSE(lg.admissible);
    CHECK(std::isinf(lg.log_energy));
}

TEST_CASE("gradient matches central differences") {
    const MapField f = wobbly_map(7);
    for (const WeightKind wk : {WeightKind::euclidean}) {
        const WeightSpec w = weight_eval(wk, f.grid());
        for (const IntegrandSpec& spec :
             {IntegrandSpec::exp_p(1.0), IntegrandSpec::exp_p(3.0), IntegrandSpec::exp_p_lambda(1.0, 0.8),
              IntegrandSpec::truncated(2.0, 3)}) {
            const std::vector<cplx> g = energy_gradient(f, w, spec);
            const LogEnergyGradient lg = log_energy_gradient(f, w, spec);
            const double e0 = energy(f, w, spec).energy;
            const std::vector<cplx> x0 = f.interior_values();
            for (std::size_t k = 0; k < x0.size(); k += 3) {
                for (const cplx dir : {cplx(1.0, 0.0), cplx(0.0, 1.0)}) {
                    const double h = 1e-6;
                    MapField fp = f, fm = f;
                    std::vector<cplx> xp = x0, xm = x0;
                    xp[k] += h * dir;
                    xm[k] -= h * dir;
                    fp.set_interior_values(xp);
                    fm.set_interior_values(xm);
                    const double fd = (energy(fp, w, spec).energy - energy(fm, w, spec).energy) / (2.0 * h);
                    const double an = dir.real() != 0.0 ? g[k].real() : g[k].imag();
                    const double lan = dir.real() != 0.0 ? lg.gradient[k].real() : lg.gradient[k].imag();
                    INFO(spec.name() << " node " << k);
                    CHECK(std::abs(fd - an) <= 1e-6 * std::max(1.0, std::abs(an)) + 1e-7 * e0);
                    CHECK(std::abs(lan - an / e0) <= 1e-12 * std::max(1.0, std::abs(an / e0)));
                }
            }
        }
    }
}

TEST_CASE("gradient vanishes at affine maps on the square") {
    const MapField f = affine_map(9);
    const WeightSpec w = weight_eval(WeightKind::euclidean, f.grid());
    for (const cplx& g : energy_gradient(f, w, IntegrandSpec::exp_p(2.0))) CHECK(std::abs(g) < 1e-11);
}

TEST_CASE("log energy difference") {
    const MapField a = affine_map(7);
    const MapField b = wobbly_map(7);
    const WeightSpec w = weight_eval(WeightKind::euclidean, a.grid());
    const IntegrandSpec spec = IntegrandSpec::exp_p(2.0);
    const double direct = energy(b, w, spec).log_energy - energy(a, w, spec).log_energy;
    CHECK(log_energy_difference(a, b, w, spec) == doctest::Approx(direct).epsilon(1e-12));
    CHECK(log_energy_difference(a, a, w, spec) == 0.0);
}

TEST_CASE("integrand parsing and validation") {
    CHECK(integrand_from_string("exp_p_lambda") == IntegrandKind::exp_p_lambda);
    CHECK(to_string(IntegrandKind::truncated) == "truncated");
    CHECK_THROWS_AS((void)integrand_from_string("power"), ConfigError);
    CHECK_THROWS_AS(IntegrandSpec::truncated(1.0, -1).validate(), ConfigError);
    CHECK_THROWS_AS(IntegrandSpec::exp_p(-1.0).validate(), ConfigError);
}

TEST_CASE("hyperbolic weight on the disk") {
    const auto g = TriGrid::disk_truncated(17, 0.05);
    const MapField id = MapField::sample(g, [](cplx z) { return z; });
    const WeightSpec w = weight_eval(WeightKind::hyperbolic, *g);
    // Identity: E = e^p * sum eta area, the hyperbolic area of the mesh.
    double area = 0.0;
    for (std::size_t t = 0; t < g->num_triangles(); ++t) area += w.values()[t] * g->shapes()[t].area;
    const EnergyReport r = energy(id, w, IntegrandSpec::exp_p(1.0));
    CHECK(r.energy == doctest::Approx(std::exp(1.0) * area).epsilon(1e-12));
    CHECK(r.weighted_area == doctest::Approx(area).epsilon(1e-12));
}
