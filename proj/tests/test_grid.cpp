#include <doctest.h>

#include <cmath>
#include <numbers>

#include "expdist/grid.hpp"

using namespace expdist;

TEST_CASE("square lattice") {
    const auto g = TriGrid::unit_square(9);
    CHECK(g->num_nodes() == 81);
    CHECK(g->num_triangles() == 128);
    CHECK(g->interior_nodes().size() == 49);
    CHECK(g->boundary_nodes().size() == 32);
    CHECK(g->total_area() == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(g->nodes()[g->node_index(8, 8)] == cplx(1.0, 1.0));
    CHECK_THROWS_AS((void)TriGrid::unit_square(2), ConfigError);
}

TEST_CASE("every triangle is positive and touches an interior node") {
    for (const auto& g : {TriGrid::unit_square(5), TriGrid::disk_truncated(7, 0.05)}) {
        const auto mask = g->boundary_mask();
        for (std::size_t t = 0; t < g->num_triangles(); ++t) {
            CHECK(g->shapes()[t].area > 0.0);
            const auto& tri = g->triangles()[t];
            CHECK(mask[tri[0]] + mask[tri[1]] + mask[tri[2]] < 3);
        }
    }
}

TEST_CASE("disk lattice") {
    const auto g = TriGrid::disk_truncated(65, 0.05);
    CHECK(g->total_area() == doctest::Approx(std::numbers::pi * 0.95 * 0.95).epsilon(2e-3));
    for (int k : g->boundary_nodes()) CHECK(std::abs(g->nodes()[k]) == doctest::Approx(0.95).epsilon(1e-14));
    CHECK(g->distance_to_boundary({0.0, 0.0}) == doctest::Approx(0.95));
}

TEST_CASE("cell corners and centres") {
    const auto g = TriGrid::unit_square(5);
    const auto c = g->cell_corners(0);
    CHECK(c[0] == g->node_index(0, 0));
    CHECK(c[2] == g->node_index(1, 1));
    CHECK(g->cell_center(0) == cplx(0.125, 0.125));
}

TEST_CASE("affine maps have exact constant derivatives") {
    const auto g = TriGrid::unit_square(9);
    const cplx a(1.5, 0.2), b(0.5, -0.1);
    const MapField f = MapField::sample(g, [&](cplx z) { return a * z + b * std::conj(z) + 0.3; });
    for (const DerivedField& d : {wirtinger(f), wirtinger_cells(f)}) {
        CHECK(d.orientation_preserving());
        for (std::size_t t = 0; t < d.size(); ++t) {
            CHECK(std::abs(d.fz[t] - a) < 1e-13);
            CHECK(std::abs(d.fzbar[t] - b) < 1e-13);
            CHECK(std::abs(d.mu[t] - b / a) < 1e-13);
            CHECK(d.jacobian[t] == doctest::Approx(std::norm(a) - std::norm(b)).epsilon(1e-13));
        }
    }
}

TEST_CASE("folded maps are flagged") {
    const auto g = TriGrid::unit_square(5);
    const MapField f = MapField::sample(g, [](cplx z) { return std::conj(z); });
    const DerivedField d = wirtinger(f);
    CHECK_FALSE(d.orientation_preserving());
    CHECK(d.count_non_positive() == d.size());
    CHECK(std::isinf(d.big_k[0]));
}

TEST_CASE("set_interior_values keeps the boundary trace") {
    const auto g = TriGrid::unit_square(5);
    MapField f = MapField::sample(g, [](cplx z) { return z; });
    const auto before = f.boundary_trace();
    std::vector<cplx> moved(g->interior_nodes().size(), cplx(0.5, 0.5));
    f.set_interior_values(moved);
    CHECK(f.boundary_trace() == before);
    CHECK(f.interior_values() == moved);
    CHECK_THROWS(f.set_interior_values(std::vector<cplx>(3)));
}

TEST_CASE("lattice dbar residual") {
    LatticeField fld{.nx = 21, .ny = 21, .spacing = 0.05, .origin = {-0.5, -0.5}, .values = {}};
    auto fill = [&](auto fn) {
        fld.values.clear();
        for (int j = 0; j < fld.ny; ++j) {
            for (int i = 0; i < fld.nx; ++i) fld.values.push_back(fn(fld.origin + cplx(i, j) * fld.spacing));
        }
    };
    fill([](cplx z) { return z * z; });
    CHECK(dbar_residual(fld).linf < 1e-13);
    fill([](cplx z) { return std::conj(z); });
    const DbarResidual r = dbar_residual(fld);
    CHECK(r.linf == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.l1 == doctest::Approx(19 * 19 * 0.05 * 0.05).epsilon(1e-12));
    CHECK(std::isnan(r.pointwise[0]));
}

TEST_CASE("scattered dbar residual") {
    std::vector<cplx> pts, hol, anti;
    for (int j = 0; j < 12; ++j) {
        for (int i = 0; i < 12; ++i) {
            const cplx z(0.1 * i + 0.013 * j, 0.1 * j + 0.007 * (i % 3));
            pts.push_back(z);
            hol.push_back(z * z + 2.0 * z);
            anti.push_back(3.0 * std::conj(z));
        }
    }
    ScatterOptions quadratic;
    quadratic.fit = ScatterFit::quadratic;
    CHECK(dbar_residual_scattered(pts, hol, quadratic).linf < 1e-10);
    CHECK(dbar_residual_scattered(pts, anti, quadratic).linf == doctest::Approx(3.0).epsilon(1e-10));
    // The default affine fit is exact only for affine data.
    CHECK(dbar_residual_scattered(pts, anti).linf == doctest::Approx(3.0).epsilon(1e-10));
    CHECK(dbar_residual_scattered(pts, hol).linf > 1e-3);
}

TEST_CASE("conformal weights") {
    const auto sq = TriGrid::unit_square(5);
    const WeightSpec e = weight_eval(WeightKind::euclidean, *sq);
    for (double v : e.values()) CHECK(v == 1.0);
    CHECK(e.log_gradient_at({0.3, 0.3}) == cplx(0.0, 0.0));
    CHECK_THROWS_AS((void)weight_eval(WeightKind::hyperbolic, *sq), ConfigError);
    CHECK_THROWS_AS((void)weight_eval(WeightKind::tabulated, *sq), ConfigError);

    const auto disk = TriGrid::disk_truncated(9, 0.05);
    const WeightSpec h = weight_eval(WeightKind::hyperbolic, *disk);
    CHECK(h.eta({0.5, 0.0}) == doctest::Approx(16.0 / 9.0).epsilon(1e-14));
    // (log eta)_z = 2 conj(z) / (1 - |z|^2).
    const cplx z(0.3, -0.4);
    CHECK(std::abs(h.log_gradient_at(z) - 2.0 * std::conj(z) / (1.0 - std::norm(z))) < 1e-14);
    CHECK(weight_from_string(to_string(WeightKind::hyperbolic)) == WeightKind::hyperbolic);
    CHECK_THROWS((void)weight_from_string("spherical"));
}

TEST_CASE("harmonic and affine extensions reproduce affine data") {
    for (const auto& g : {TriGrid::unit_square(9), TriGrid::disk_truncated(9, 0.05)}) {
        auto f0 = [](cplx z) { return 1.5 * z + 0.5 * std::conj(z) + cplx(0.1, 0.2); };
        const MapField data = MapField::sample(g, [&](cplx z) { return z * z; });
        MapField bnd = MapField::sample(g, f0);
        const MapField h = harmonic_extension(bnd);
        const MapField a = affine_extension(bnd);
        for (std::size_t k = 0; k < g->num_nodes(); ++k) {
            CHECK(std::abs(a.values()[k] - f0(g->nodes()[k])) < 1e-12);
        }
        if (g->domain() == DomainKind::unit_square) {
            // Linear functions are discrete harmonic on the right-angled mesh.
            for (std::size_t k = 0; k < g->num_nodes(); ++k) {
                CHECK(std::abs(h.values()[k] - f0(g->nodes()[k])) < 1e-12);
            }
        }
        CHECK(harmonic_extension(data).boundary_trace() == data.boundary_trace());
    }
}

TEST_CASE("cotangent Laplacian rows sum to zero") {
    const auto g = TriGrid::disk_truncated(7, 0.1);
    std::vector<double> row(g->num_nodes(), 0.0);
    for (const Triplet& t : cotangent_laplacian(g->nodes(), g->triangles())) row[t.row] += t.value;
    for (double r : row) CHECK(std::abs(r) < 1e-12);
}

TEST_CASE("harmonic extension on an arbitrary mesh") {
    const auto g = TriGrid::unit_square(9);
    std::vector<cplx> pos(g->nodes().begin(), g->nodes().end());
    std::vector<cplx> vals(pos.size());
    for (std::size_t k = 0; k < pos.size(); ++k) vals[k] = g->boundary_mask()[k] ? 2.0 * pos[k] : cplx(7.0, 7.0);
    const auto out = harmonic_extension_on_mesh(pos, g->triangles(), g->boundary_mask(), vals);
    for (std::size_t k = 0; k < pos.size(); ++k) CHECK(std::abs(out[k] - 2.0 * pos[k]) < 1e-12);
}

TEST_CASE("pairwise sum") {
    std::vector<double> v(1000, 0.1);
    CHECK(pairwise_sum(v) == doctest::Approx(100.0).epsilon(1e-15));
    CHECK(pairwise_sum(std::vector<double>{}) == 0.0);
}
