#include <doctest.h>

#include <cmath>

#include "expdist/solver.hpp"

using namespace expdist;

namespace {

SolveConfig affine_config(int n) {
    SolveConfig c;
    c.grid_n = n;
    c.boundary.kind = BoundaryKind::affine;
    c.boundary.a = {1.5, 0.0};
    c.boundary.b = {0.5, 0.0};
    return c;
}

SolveConfig quartic_config(int n) {
    SolveConfig c;
    c.grid_n = n;
    c.boundary.kind = BoundaryKind::quartic;
    c.boundary.epsilon = 0.2;
    return c;
}

double sup_distance(const MapField& f, const std::function<cplx(cplx)>& g) {
    double d = 0.0;
    for (std::size_t k = 0; k < f.grid().num_nodes(); ++k) {
        d = std::max(d, std::abs(f.values()[k] - g(f.grid().nodes()[k])));
    }
    return d;
}

}  // namespace

TEST_CASE("boundary data") {
    BoundarySpec b;
    b.kind = BoundaryKind::quartic;
    b.epsilon = 0.5;
    CHECK(b(cplx(1.0, 0.5)) == cplx(1.5, 0.5 + 0.5 * 0.0625));
    b.kind = BoundaryKind::affine;
    b.a = {2.0, 0.0};
    b.b = {0.0, 1.0};
    b.c = {1.0, 0.0};
    CHECK(b(cplx(0.0, 1.0)) == cplx(2.0, 2.0));
    CHECK(boundary_from_string(to_string(BoundaryKind::quartic)) == BoundaryKind::quartic);
    CHECK_THROWS_AS((void)boundary_from_string("sine"), ConfigError);
    CHECK_THROWS_AS((void)seed_from_string("random"), ConfigError);
}

TEST_CASE("config validation") {
    auto bad = [](auto edit) {
        SolveConfig c;
        edit(c);
        return c;
    };
    CHECK_NOTHROW(SolveConfig{}.validate());
    CHECK_THROWS_AS(bad([](SolveConfig& c) { c.p = 0.0; }).validate(), ConfigError);
    CHECK_THROWS_AS(bad([](SolveConfig& c) { c.grid_n = 2; }).validate(), ConfigError);
    CHECK_THROWS_AS(bad([](SolveConfig& c) { c.memory = 0; }).validate(), ConfigError);
    CHECK_THROWS_AS(bad([](SolveConfig& c) { c.lambda_schedule = {}; }).validate(), ConfigError);
    CHECK_THROWS_AS(bad([](SolveConfig& c) { c.lambda_schedule = {0.9, 0.5}; }).validate(), ConfigError);
    CHECK_THROWS_AS(bad([](SolveConfig& c) { c.p_schedule = {1.0, 2.0, 1.5}; }).validate(), ConfigError);
    CHECK_THROWS_AS(bad([](SolveConfig& c) { c.p_schedule = {1.0, -2.0}; }).validate(), ConfigError);
    CHECK(SolveConfig{}.effective_grad_tol(2.0) == doctest::Approx(1e-8 * std::exp(2.0)));
}

TEST_CASE("affine boundary data are reproduced without iterating") {
    const SolveResult r = solve(affine_config(17));
    CHECK(r.converged);
    CHECK(r.iterations == 0);
    CHECK(sup_distance(r.map, [](cplx z) { return 1.5 * z + 0.5 * std::conj(z); }) < 1e-12);
    CHECK(r.report.energy == doctest::Approx(std::exp(1.25)).epsilon(1e-12));
}

TEST_CASE("a perturbed seed relaxes back to the affine map") {
    const SolveConfig c = affine_config(17);
    MapField seed = make_seed(c, make_grid(c));
    std::vector<cplx> in = seed.interior_values();
    for (std::size_t k = 0; k < in.size(); ++k) in[k] += 0.01 * cplx(std::sin(3.0 * k), std::cos(5.0 * k));
    seed.set_interior_values(in);
    SolveConfig pc = c;
    pc.seed = SeedKind::provided;
    const SolveResult r = solve(pc, seed);
    CHECK(r.converged);
    CHECK(r.iterations > 0);
    CHECK(sup_distance(r.map, [](cplx z) { return 1.5 * z + 0.5 * std::conj(z); }) < 1e-5);
}

TEST_CASE("provided seed is required when requested") {
    SolveConfig c = affine_config(9);
    c.seed = SeedKind::provided;
    CHECK_THROWS_AS((void)solve(c), ConfigError);
}

TEST_CASE("quartic instance") {
    const SolveConfig c = quartic_config(17);
    const auto g = make_grid(c);
    const MapField seed = make_seed(c, g);
    const WeightSpec w = weight_eval(c.weight, *g);
    const double e_seed = energy(seed, w, c.integrand_for(c.p, 1.0)).energy;
    const SolveResult r = solve(c);
    CHECK(r.converged);
    CHECK(r.status == "converged");
    CHECK(r.report.admissible);
    CHECK(r.report.energy < e_seed);
    CHECK(r.grad_norm <= c.effective_grad_tol(c.p));
    CHECK(r.map.boundary_trace() == seed.boundary_trace());
    CHECK(wirtinger(r.map).orientation_preserving());
    // The log energy never increases along the iteration.
    for (std::size_t i = 1; i < r.history.size(); ++i) {
        CHECK(r.history[i].log_energy <= r.history[i - 1].log_energy + 1e-12);
    }
}

TEST_CASE("lambda ladder records one trace entry per rung") {
    SolveConfig c = quartic_config(9);
    c.lambda_schedule = {0.5, 0.8, 1.0};
    const SolveResult r = solve(c);
    REQUIRE(r.continuation_trace.size() == 3);
    CHECK(r.continuation_trace[0].parameter == "lambda");
    CHECK(r.continuation_trace[0].value == 0.5);
    CHECK(r.continuation_trace[2].value == 1.0);
    CHECK(r.converged);
}

TEST_CASE("iteration budget is reported") {
    SolveConfig c = quartic_config(17);
    c.max_iters = 2;
    const SolveResult r = solve(c);
    CHECK_FALSE(r.converged);
    CHECK(r.status == "max_iters");
    CHECK(r.iterations == 2);
}

TEST_CASE("solves are deterministic") {
    const SolveResult a = solve(quartic_config(17));
    const SolveResult b = solve(quartic_config(17));
    CHECK(a.iterations == b.iterations);
    for (std::size_t k = 0; k < a.map.values().size(); ++k) CHECK(a.map.values()[k] == b.map.values()[k]);
}

TEST_CASE("p sweeps") {
    SolveConfig c = quartic_config(9);
    c.rel_grad_tol = 1e-10;
    c.p_schedule = {1.0, 2.0, 4.0};
    const SweepResult s = sweep_p(c);
    CHECK(s.complete);
    CHECK(s.monotone);
    CHECK(s.status == "complete");
    REQUIRE(s.rungs.size() == 3);
    for (std::size_t i = 1; i < s.rungs.size(); ++i) {
        CHECK(s.rungs[i].report.normalized >= s.rungs[i - 1].report.normalized - 1e-6);
        CHECK(s.rungs[i].continuation_trace.front().parameter == "p");
    }

    c.overflow_cap = 3.0;
    const SweepResult capped = sweep_p(c);
    CHECK(capped.status == "capped");
    CHECK(capped.rungs.size() == 2);
    CHECK(capped.capped == std::vector<double>{4.0});

    c.p_schedule = {};
    CHECK_THROWS_AS((void)sweep_p(c), ConfigError);
}

TEST_CASE("disk with hyperbolic weight") {
    SolveConfig c;
    c.domain = DomainKind::disk_truncated;
    c.weight = WeightKind::hyperbolic;
    c.grid_n = 13;
    c.boundary.kind = BoundaryKind::affine;
    c.boundary.a = {1.2, 0.0};
    c.boundary.b = {0.0, 0.2};
    const SolveResult r = solve(c);
    CHECK(r.converged);
    CHECK(r.report.admissible);
}
