#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "expdist/io.hpp"

using namespace expdist;

namespace {

SolveConfig quartic_config() {
    SolveConfig c;
    c.grid_n = 9;
    c.boundary.kind = BoundaryKind::quartic;
    c.rng_seed = 42;
    return c;
}

std::string error_path(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const SchemaError& e) {
        return e.path();
    }
    return "<no error>";
}

std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("expdist_test_io_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("shortest round-trip doubles") {
    CHECK(format_double(0.1) == "0.1");
    CHECK(format_double(1.0) == "1");
    CHECK(format_double(1e300) == "1e+300");
    std::mt19937_64 rng(1);
    for (int i = 0; i < 1000; ++i) {
        const double x = std::ldexp(static_cast<double>(rng() >> 11), static_cast<int>(rng() % 200) - 150);
        CHECK(std::stod(format_double(x)) == x);
    }
}

TEST_CASE("field dump round trip") {
    const SolveResult r = solve(quartic_config());
    const std::string once = dump_json(field_to_json(r.map, {{"rng_seed", 42}}));
    const LoadedField back = field_from_json(parse_json(once));
    CHECK(dump_json(field_to_json(back.map, back.metadata)) == once);
    for (std::size_t k = 0; k < r.map.values().size(); ++k) CHECK(back.map.values()[k] == r.map.values()[k]);

    const MapField disk = MapField::sample(TriGrid::disk_truncated(5, 0.1), [](cplx z) { return z; });
    const std::string d = dump_json(field_to_json(disk));
    CHECK(dump_json(field_to_json(field_from_json(parse_json(d)).map)) == d);
}

TEST_CASE("corrupted fields report the failing path") {
    const MapField f = MapField::sample(TriGrid::unit_square(3), [](cplx z) { return z; });
    const json good = field_to_json(f);
    auto edit = [&](auto fn) {
        json j = good;
        fn(j);
        return error_path([&] { (void)field_from_json(j); });
    };
    CHECK(edit([](json& j) { j["grid"]["ny"] = 4; }) == "/grid/ny");
    CHECK(edit([](json& j) { j["grid"]["spacing"] = 0.3; }) == "/grid/spacing");
    CHECK(edit([](json& j) { j["nodes"][4] = json::array({nullptr, 0.0}); }) == "/nodes/4/0");
    CHECK(edit([](json& j) { j["nodes"].erase(0); }) == "/nodes");
    CHECK(edit([](json& j) { j["boundary_mask"][4] = 1; }) == "/boundary_mask/4");
    CHECK(edit([](json& j) { j["extra"] = 1; }) == "/extra");
    CHECK(edit([](json& j) { j.erase("grid"); }) == "/grid");
    CHECK(edit([](json& j) { j["grid"]["domain"] = "torus"; }) == "/grid/domain");
    CHECK(error_path([] { (void)parse_json("{\"grid\": "); }) == "/");
}

TEST_CASE("config round trip and defaults") {
    SolveConfig c = quartic_config();
    c.lambda_schedule = {0.5, 1.0};
    c.p_schedule = {1.0, 2.0};
    c.boundary.c = {0.25, -0.5};
    const std::string once = dump_json(config_to_json(c));
    CHECK(dump_json(config_to_json(config_from_json(parse_json(once)))) == once);
    CHECK(dump_json(config_to_json(config_from_json(json::object()))) == dump_json(config_to_json(SolveConfig{})));
}

TEST_CASE("config schema errors") {
    auto path_of = [](const std::string& text) { return error_path([&] { (void)config_from_json(parse_json(text)); }); };
    CHECK(path_of(R"({"colour": 1})") == "/colour");
    CHECK(path_of(R"({"p": "one"})") == "/p");
    CHECK(path_of(R"({"p": -1})") == "/p");
    CHECK(path_of(R"({"grid_n": 2000})") == "/grid_n");
    CHECK(path_of(R"({"grid_n": 2})") == "/grid_n");
    CHECK(path_of(R"({"seed": "provided"})") == "/seed");
    CHECK(path_of(R"({"seed": "random"})") == "/seed");
    CHECK(path_of(R"({"boundary": {"a": [0.5, 0], "b": [1, 0]}})") == "/boundary");
    CHECK(path_of(R"({"boundary": {"kind": "quartic", "eps": 1}})") == "/boundary/eps");
    CHECK(path_of(R"({"lambda_schedule": [1, 0.5]})") == "/lambda_schedule");
    CHECK(path_of(R"({"rng_seed": -3})") == "/rng_seed");
    CHECK(path_of("[1, 2]") == "/");
}

TEST_CASE("diagnostic options round trip") {
    DiagnosticOptions o;
    o.margin = 0.2;
    o.scatter.fit = ScatterFit::quadratic;
    o.full_metric = false;
    const std::string once = dump_json(diagnostics_to_json(o));
    CHECK(dump_json(diagnostics_to_json(diagnostics_from_json(parse_json(once)))) == once);
    CHECK(error_path([] { (void)diagnostics_from_json(parse_json(R"({"margin": 0.9})")); }) == "/margin");
}

TEST_CASE("solve result round trip") {
    const SolveConfig c = quartic_config();
    const SolveResult r = solve(c);
    const std::string once = dump_json(solve_result_to_json(r, c));
    const LoadedSolve back = solve_result_from_json(parse_json(once));
    CHECK(dump_json(solve_result_to_json(back.result, back.config)) == once);
    CHECK(back.config.rng_seed == 42);
    CHECK(parse_json(once)["map"]["metadata"]["rng_seed"] == 42);

    json bad = parse_json(once);
    bad["rng_seed"] = 7;
    CHECK(error_path([&] { (void)solve_result_from_json(bad); }) == "/rng_seed");
    bad = parse_json(once);
    bad["kind"] = "sweep_result";
    CHECK(error_path([&] { (void)solve_result_from_json(bad); }) == "/kind");
}

TEST_CASE("energy report with overflowed values") {
    EnergyReport e;
    e.integrand = "exp_p";
    e.admissible = false;
    e.energy = e.log_energy = e.normalized = std::numeric_limits<double>::infinity();
    const std::string once = dump_json(to_json(e));
    CHECK(parse_json(once)["energy"].is_null());
    const EnergyReport back = energy_report_from_json(parse_json(once));
    CHECK(std::isinf(back.energy));
    CHECK(dump_json(to_json(back)) == once);
}

TEST_CASE("residual bundle and Phi field round trip") {
    const SolveConfig c = quartic_config();
    const SolveResult r = solve(c);
    const WeightSpec w = weight_eval(c.weight, r.map.grid());
    const IntegrandSpec spec = c.integrand_for(c.p, 1.0);
    const std::string b = dump_json(to_json(residual_bundle(r.map, w, spec)));
    CHECK(dump_json(to_json(residual_bundle_from_json(parse_json(b)))) == b);
    const std::string q = dump_json(to_json(ahlfors_hopf(r.map, w, spec)));
    CHECK(dump_json(to_json(quad_field_from_json(parse_json(q)))) == q);
}

TEST_CASE("sweep artifact") {
    SolveConfig c = quartic_config();
    c.p_schedule = {1.0, 2.0};
    const json j = sweep_result_to_json(sweep_p(c), c);
    CHECK(j["kind"] == "sweep_result");
    CHECK(j["rungs"].size() == 2);
    CHECK(j["rng_seed"] == 42);
    CHECK(j["monotone"] == true);
}

TEST_CASE("CSV tables") {
    const SolveResult r = solve(quartic_config());
    std::istringstream trace(trace_csv(r.continuation_trace));
    std::string line;
    std::getline(trace, line);
    CHECK(line == "parameter,value,energy,log_energy,normalized,grad_norm,iterations,converged");
    std::getline(trace, line);
    CHECK(line.rfind("lambda,1,", 0) == 0);
    std::istringstream hist(history_csv(r.history));
    std::size_t rows = 0;
    while (std::getline(hist, line)) ++rows;
    CHECK(rows == r.history.size() + 1);
    std::istringstream elems(per_element_csv(r.map));
    rows = 0;
    while (std::getline(elems, line)) ++rows;
    CHECK(rows == r.map.grid().num_triangles() + 1);
}

TEST_CASE("atomic writes") {
    const auto dir = scratch_dir("atomic");
    const auto target = dir / "nested" / "out.json";
    write_file_atomic(target, "first\n");
    write_file_atomic(target, "second\n");
    std::ifstream in(target);
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(content == "second\n");
    std::size_t files = 0;
    for (const auto& e : std::filesystem::directory_iterator(target.parent_path())) {
        (void)e;
        ++files;
    }
    CHECK(files == 1);
    CHECK_THROWS_AS((void)read_json_file(dir / "missing.json"), SchemaError);
}
