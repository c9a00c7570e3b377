#include "expdist/grid.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "parallel.hpp"

namespace expdist {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();

double cross(cplx a, cplx b) { return a.real() * b.imag() - a.imag() * b.real(); }

}  // namespace

std::string to_string(DomainKind kind) {
    return kind == DomainKind::unit_square ? "unit_square" : "disk_truncated";
}

DomainKind domain_from_string(const std::string& name) {
    if (name == "unit_square") return DomainKind::unit_square;
    if (name == "disk_truncated") return DomainKind::disk_truncated;
    throw ConfigError("unknown domain '" + name + "'");
}

// ---------------------------------------------------------------------------
// TriGrid
// ---------------------------------------------------------------------------

TriGrid::TriGrid(int nx, int ny, double spacing, DomainKind domain, double delta)
    : nx_(nx), ny_(ny), spacing_(spacing), domain_(domain), delta_(delta) {}

std::shared_ptr<const TriGrid> TriGrid::unit_square(int n) {
    if (n < 3) throw ConfigError("grid needs at least 3 nodes per side");
    auto g = std::shared_ptr<TriGrid>(new TriGrid(n, n, 1.0 / (n - 1), DomainKind::unit_square, 0.0));
    g->build([&g](double i, double j) { return g->reference_point(i, j); });
    return g;
}

std::shared_ptr<const TriGrid> TriGrid::disk_truncated(int n, double delta) {
    if (n < 3) throw ConfigError("grid needs at least 3 nodes per side");
    if (!(delta > 0.0 && delta < 0.5)) throw ConfigError("delta must lie in (0, 0.5)");
    auto g = std::shared_ptr<TriGrid>(new TriGrid(n, n, 2.0 / (n - 1), DomainKind::disk_truncated, delta));
    g->build([&g](double i, double j) { return g->reference_point(i, j); });
    return g;
}

cplx TriGrid::reference_point(double i, double j) const {
    if (domain_ == DomainKind::unit_square) {
        // Exact end points on the far edges.
        const double x = i == nx_ - 1 ? 1.0 : i * spacing_;
        const double y = j == ny_ - 1 ? 1.0 : j * spacing_;
        return {x, y};
    }
    const double s = i == nx_ - 1 ? 1.0 : std::clamp(-1.0 + i * spacing_, -1.0, 1.0);
    const double t = j == ny_ - 1 ? 1.0 : std::clamp(-1.0 + j * spacing_, -1.0, 1.0);
    return (1.0 - delta_) * cplx(s * std::sqrt(1.0 - 0.5 * t * t), t * std::sqrt(1.0 - 0.5 * s * s));
}

void TriGrid::build(const std::function<cplx(double, double)>& place) {
    nodes_.resize(static_cast<std::size_t>(nx_) * ny_);
    boundary_.assign(nodes_.size(), 0);
    free_index_.assign(nodes_.size(), -1);
    for (int j = 0; j < ny_; ++j) {
        for (int i = 0; i < nx_; ++i) {
            const int k = node_index(i, j);
            nodes_[k] = place(i, j);
            const bool edge = i == 0 || j == 0 || i == nx_ - 1 || j == ny_ - 1;
            boundary_[k] = edge ? 1 : 0;
            if (edge) {
                boundary_nodes_.push_back(k);
            } else {
                free_index_[k] = static_cast<int>(interior_.size());
                interior_.push_back(k);
            }
        }
    }
    triangles_.reserve(2 * num_cells());
    for (int j = 0; j + 1 < ny_; ++j) {
        for (int i = 0; i + 1 < nx_; ++i) {
            const int v00 = node_index(i, j);
            const int v10 = node_index(i + 1, j);
            const int v01 = node_index(i, j + 1);
            const int v11 = node_index(i + 1, j + 1);
            // The two cells touching the corners (1, 0) and (0, 1) are split
            // along the other diagonal, so no triangle has three boundary nodes.
            const bool flip = (i == nx_ - 2 && j == 0) || (i == 0 && j == ny_ - 2);
            if (flip) {
                triangles_.push_back({v00, v10, v01});
                triangles_.push_back({v10, v11, v01});
            } else {
                triangles_.push_back({v00, v10, v11});
                triangles_.push_back({v00, v11, v01});
            }
        }
    }
    shapes_.resize(triangles_.size());
    for (std::size_t t = 0; t < triangles_.size(); ++t) {
        const auto& tri = triangles_[t];
        const cplx z0 = nodes_[tri[0]];
        const cplx dz1 = nodes_[tri[1]] - z0;
        const cplx dz2 = nodes_[tri[2]] - z0;
        const double area = 0.5 * cross(dz1, dz2);
        if (!(area > 0.0)) throw ConfigError("degenerate or inverted reference triangle");
        const cplx det = dz1 * std::conj(dz2) - dz2 * std::conj(dz1);
        TriangleShape& s = shapes_[t];
        s.area = area;
        s.centroid = (nodes_[tri[0]] + nodes_[tri[1]] + nodes_[tri[2]]) / 3.0;
        s.dz[0] = (std::conj(dz1) - std::conj(dz2)) / det;
        s.dz[1] = std::conj(dz2) / det;
        s.dz[2] = -std::conj(dz1) / det;
    }
}

std::array<int, 4> TriGrid::cell_corners(std::size_t q) const {
    const int i = static_cast<int>(q % static_cast<std::size_t>(nx_ - 1));
    const int j = static_cast<int>(q / static_cast<std::size_t>(nx_ - 1));
    return {node_index(i, j), node_index(i + 1, j), node_index(i + 1, j + 1), node_index(i, j + 1)};
}

cplx TriGrid::cell_center(std::size_t q) const {
    const auto c = cell_corners(q);
    return 0.25 * (nodes_[c[0]] + nodes_[c[1]] + nodes_[c[2]] + nodes_[c[3]]);
}

double TriGrid::distance_to_boundary(cplx z) const {
    if (domain_ == DomainKind::unit_square) {
        return std::min({z.real(), 1.0 - z.real(), z.imag(), 1.0 - z.imag()});
    }
    return (1.0 - delta_) - std::abs(z);
}

double TriGrid::total_area() const {
    std::vector<double> a(shapes_.size());
    for (std::size_t t = 0; t < shapes_.size(); ++t) a[t] = shapes_[t].area;
    return pairwise_sum(a);
}

// ---------------------------------------------------------------------------
// MapField
// ---------------------------------------------------------------------------

MapField::MapField(std::shared_ptr<const TriGrid> grid, std::vector<cplx> values)
    : grid_(std::move(grid)), values_(std::move(values)) {
    if (!grid_) throw ConfigError("map field without grid");
    if (values_.size() != grid_->num_nodes()) throw ConfigError("node count does not match grid");
}

MapField MapField::sample(std::shared_ptr<const TriGrid> grid, const std::function<cplx(cplx)>& f) {
    std::vector<cplx> v(grid->num_nodes());
    const auto nodes = grid->nodes();
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = f(nodes[k]);
    return MapField(std::move(grid), std::move(v));
}

std::vector<cplx> MapField::boundary_trace() const {
    std::vector<cplx> out;
    out.reserve(grid_->boundary_nodes().size());
    for (int k : grid_->boundary_nodes()) out.push_back(values_[k]);
    return out;
}

std::vector<cplx> MapField::interior_values() const {
    std::vector<cplx> out;
    out.reserve(grid_->interior_nodes().size());
    for (int k : grid_->interior_nodes()) out.push_back(values_[k]);
    return out;
}

void MapField::set_interior_values(std::span<const cplx> interior) {
    const auto idx = grid_->interior_nodes();
    if (interior.size() != idx.size()) throw ConfigError("interior value count mismatch");
    for (std::size_t i = 0; i < idx.size(); ++i) values_[idx[i]] = interior[i];
}

// ---------------------------------------------------------------------------
// Wirtinger calculus
// ---------------------------------------------------------------------------

bool DerivedField::orientation_preserving() const { return count_non_positive() == 0; }

std::size_t DerivedField::count_non_positive() const {
    return static_cast<std::size_t>(
        std::count_if(jacobian.begin(), jacobian.end(), [](double j) { return !(j > 0.0); }));
}

void complete_derived(DerivedField& d) {
    const std::size_t n = d.fz.size();
    d.jacobian.resize(n);
    d.mu.resize(n);
    d.big_k.resize(n);
    for (std::size_t t = 0; t < n; ++t) {
        const double a = std::norm(d.fz[t]);
        const double b = std::norm(d.fzbar[t]);
        d.jacobian[t] = a - b;
        d.mu[t] = a > 0.0 ? d.fzbar[t] / d.fz[t] : cplx(kInf, 0.0);
        d.big_k[t] = a > b ? (a + b) / (a - b) : kInf;
    }
}

DerivedField wirtinger(const MapField& map) {
    const TriGrid& g = map.grid();
    const auto tris = g.triangles();
    const auto shapes = g.shapes();
    const auto f = map.values();
    DerivedField d;
    d.fz.resize(tris.size());
    d.fzbar.resize(tris.size());
    for (std::size_t t = 0; t < tris.size(); ++t) {
        cplx a{}, b{};
        for (int i = 0; i < 3; ++i) {
            const cplx fi = f[tris[t][i]];
            a += fi * shapes[t].dz[i];
            b += fi * std::conj(shapes[t].dz[i]);
        }
        d.fz[t] = a;
        d.fzbar[t] = b;
    }
    complete_derived(d);
    return d;
}

DerivedField wirtinger_cells(const MapField& map) {
    const DerivedField tri = wirtinger(map);
    const auto shapes = map.grid().shapes();
    const std::size_t cells = map.grid().num_cells();
    DerivedField d;
    d.fz.resize(cells);
    d.fzbar.resize(cells);
    for (std::size_t q = 0; q < cells; ++q) {
        const double w0 = shapes[2 * q].area;
        const double w1 = shapes[2 * q + 1].area;
        d.fz[q] = (w0 * tri.fz[2 * q] + w1 * tri.fz[2 * q + 1]) / (w0 + w1);
        d.fzbar[q] = (w0 * tri.fzbar[2 * q] + w1 * tri.fzbar[2 * q + 1]) / (w0 + w1);
    }
    complete_derived(d);
    return d;
}

// ---------------------------------------------------------------------------
// dbar residuals
// ---------------------------------------------------------------------------

DbarResidual dbar_residual(const LatticeField& field) {
    if (field.nx < 3 || field.ny < 3) throw ConfigError("lattice needs at least 3x3 points");
    if (field.values.size() != static_cast<std::size_t>(field.nx) * field.ny) {
        throw ConfigError("lattice value count mismatch");
    }
    DbarResidual r;
    r.pointwise.assign(field.values.size(), kNaN);
    const double h = field.spacing;
    std::vector<double> terms;
    for (int j = 1; j + 1 < field.ny; ++j) {
        for (int i = 1; i + 1 < field.nx; ++i) {
            const auto at = [&](int a, int b) { return field.values[b * field.nx + a]; };
            const cplx fx = (at(i + 1, j) - at(i - 1, j)) / (2.0 * h);
            const cplx fy = (at(i, j + 1) - at(i, j - 1)) / (2.0 * h);
            const double v = std::abs(0.5 * (fx + cplx(0.0, 1.0) * fy));
            r.pointwise[j * field.nx + i] = v;
            terms.push_back(v * h * h);
            r.linf = std::max(r.linf, v);
        }
    }
    r.counted = terms.size();
    r.excluded = field.values.size() - terms.size();
    r.l1 = pairwise_sum(terms);
    return r;
}

DbarResidual dbar_residual_scattered(std::span<const cplx> points, std::span<const cplx> values,
                                     const ScatterOptions& options, std::span<const double> weights,
                                     std::span<const std::uint8_t> aggregate_mask) {
    const std::size_t n = points.size();
    if (values.size() != n) throw ConfigError("scattered point/value count mismatch");
    if (!weights.empty() && weights.size() != n) throw ConfigError("weight count mismatch");
    if (!aggregate_mask.empty() && aggregate_mask.size() != n) throw ConfigError("mask count mismatch");
    const int unknowns = options.fit == ScatterFit::quadratic ? 6 : 3;
    const int k = std::max(options.neighbors, unknowns - 1);

    DbarResidual r;
    r.pointwise.assign(n, kNaN);
    detail::parallel_for(n, [&](std::size_t i) {
        std::vector<std::pair<double, std::size_t>> dist;
        dist.reserve(n);
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const double d = std::norm(points[j] - points[i]);
            if (std::isfinite(d) && std::isfinite(std::norm(values[j]))) dist.emplace_back(d, j);
        }
        const std::size_t m = std::min<std::size_t>(static_cast<std::size_t>(k), dist.size());
        if (static_cast<int>(m) < options.min_neighbors || static_cast<int>(m) + 1 < unknowns) return;
        std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(m), dist.end());
        const double scale = std::sqrt(dist[m - 1].first);
        if (!(scale > 0.0)) return;

        Eigen::MatrixXcd a(static_cast<Eigen::Index>(m + 1), unknowns);
        Eigen::VectorXcd rhs(static_cast<Eigen::Index>(m + 1));
        for (std::size_t row = 0; row <= m; ++row) {
            const std::size_t j = row == 0 ? i : dist[row - 1].second;
            const cplx dz = (points[j] - points[i]) / scale;
            const auto ri = static_cast<Eigen::Index>(row);
            a(ri, 0) = 1.0;
            a(ri, 1) = dz;
            a(ri, 2) = std::conj(dz);
            if (unknowns == 6) {
                a(ri, 3) = dz * dz;
                a(ri, 4) = dz * std::conj(dz);
                a(ri, 5) = std::conj(dz * dz);
            }
            rhs(ri) = values[j];
        }
        const Eigen::VectorXcd c = a.colPivHouseholderQr().solve(rhs);
        r.pointwise[i] = std::abs(c(2)) / scale;
    });

    std::vector<double> terms;
    for (std::size_t i = 0; i < n; ++i) {
        if (!aggregate_mask.empty() && aggregate_mask[i] == 0) continue;
        const double v = r.pointwise[i];
        if (!std::isfinite(v)) {
            ++r.excluded;
            continue;
        }
        terms.push_back(v * (weights.empty() ? 1.0 : weights[i]));
        r.linf = std::max(r.linf, v);
    }
    r.counted = terms.size();
    r.l1 = pairwise_sum(terms);
    return r;
}

// ---------------------------------------------------------------------------
// Conformal weight
// ---------------------------------------------------------------------------

std::string to_string(WeightKind kind) {
    switch (kind) {
        case WeightKind::euclidean: return "euclidean";
        case WeightKind::hyperbolic: return "hyperbolic";
        case WeightKind::tabulated: return "tabulated";
    }
    return "euclidean";
}

WeightKind weight_from_string(const std::string& name) {
    if (name == "euclidean") return WeightKind::euclidean;
    if (name == "hyperbolic") return WeightKind::hyperbolic;
    if (name == "tabulated") return WeightKind::tabulated;
    throw ConfigError("unknown weight '" + name + "'");
}

WeightSpec::WeightSpec(WeightKind kind, const TriGrid& grid, EtaFn eta, LogGradFn log_grad)
    : kind_(kind), eta_(std::move(eta)), log_grad_(std::move(log_grad)) {
    const auto shapes = grid.shapes();
    values_.resize(shapes.size());
    log_gradient_.resize(shapes.size());
    for (std::size_t t = 0; t < shapes.size(); ++t) {
        values_[t] = eta_(shapes[t].centroid);
        log_gradient_[t] = log_grad_(shapes[t].centroid);
        if (!(values_[t] > 0.0) || !std::isfinite(values_[t])) {
            throw ConfigError("weight must be positive and finite");
        }
    }
}

WeightSpec WeightSpec::tabulated(const TriGrid& grid, EtaFn eta, LogGradFn log_grad) {
    return WeightSpec(WeightKind::tabulated, grid, std::move(eta), std::move(log_grad));
}

WeightSpec weight_eval(WeightKind kind, const TriGrid& grid) {
    switch (kind) {
        case WeightKind::euclidean:
            return WeightSpec(kind, grid, [](cplx) { return 1.0; }, [](cplx) { return cplx{}; });
        case WeightKind::hyperbolic:
            if (grid.domain() != DomainKind::disk_truncated) {
                throw ConfigError("hyperbolic weight requires the disk_truncated domain");
            }
            return WeightSpec(
                kind, grid,
                [](cplx z) {
                    const double s = 1.0 - std::norm(z);
                    return 1.0 / (s * s);
                },
                [](cplx z) { return 2.0 * std::conj(z) / (1.0 - std::norm(z)); });
        case WeightKind::tabulated:
            break;
    }
    throw ConfigError("tabulated weight needs explicit values");
}

// ---------------------------------------------------------------------------
// Extensions
// ---------------------------------------------------------------------------

std::vector<Triplet> cotangent_laplacian(std::span<const cplx> positions,
                                         std::span<const std::array<int, 3>> triangles) {
    std::vector<Triplet> out;
    out.reserve(triangles.size() * 9);
    for (const auto& tri : triangles) {
        for (int c = 0; c < 3; ++c) {
            const int i = tri[(c + 1) % 3];
            const int j = tri[(c + 2) % 3];
            const cplx e1 = positions[i] - positions[tri[c]];
            const cplx e2 = positions[j] - positions[tri[c]];
            const double w = 0.5 * (e1.real() * e2.real() + e1.imag() * e2.imag()) / std::abs(cross(e1, e2));
            out.push_back({i, i, w});
            out.push_back({j, j, w});
            out.push_back({i, j, -w});
            out.push_back({j, i, -w});
        }
    }
    return out;
}

std::vector<cplx> harmonic_extension_on_mesh(std::span<const cplx> positions,
                                             std::span<const std::array<int, 3>> triangles,
                                             std::span<const std::uint8_t> boundary_mask,
                                             std::span<const cplx> boundary_values) {
    const std::size_t n = positions.size();
    std::vector<int> index(n, -1);
    int free = 0;
    for (std::size_t k = 0; k < n; ++k) {
        if (boundary_mask[k] == 0) index[k] = free++;
    }
    std::vector<cplx> out(boundary_values.begin(), boundary_values.end());
    if (free == 0) return out;

    std::vector<Eigen::Triplet<double>> entries;
    Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(free);
    for (const Triplet& t : cotangent_laplacian(positions, triangles)) {
        const int r = index[t.row];
        if (r < 0) continue;
        const int c = index[t.col];
        if (c >= 0) {
            entries.emplace_back(r, c, t.value);
        } else {
            rhs(r) -= t.value * boundary_values[t.col];
        }
    }
    Eigen::SparseMatrix<double> lap(free, free);
    lap.setFromTriplets(entries.begin(), entries.end());
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(lap);
    if (solver.info() != Eigen::Success) throw std::runtime_error("laplacian factorisation failed");
    const Eigen::VectorXd re = solver.solve(rhs.real().eval());
    const Eigen::VectorXd im = solver.solve(rhs.imag().eval());
    for (std::size_t k = 0; k < n; ++k) {
        if (index[k] >= 0) out[k] = cplx(re(index[k]), im(index[k]));
    }
    return out;
}

MapField harmonic_extension(const MapField& boundary_source) {
    const TriGrid& g = boundary_source.grid();
    std::vector<cplx> values(boundary_source.values().begin(), boundary_source.values().end());
    return MapField(boundary_source.grid_ptr(),
                    harmonic_extension_on_mesh(g.nodes(), g.triangles(), g.boundary_mask(), values));
}

MapField affine_extension(const MapField& boundary_source) {
    const TriGrid& g = boundary_source.grid();
    const auto bnodes = g.boundary_nodes();
    Eigen::MatrixXcd a(static_cast<Eigen::Index>(bnodes.size()), 3);
    Eigen::VectorXcd rhs(static_cast<Eigen::Index>(bnodes.size()));
    for (std::size_t r = 0; r < bnodes.size(); ++r) {
        const cplx z = g.nodes()[bnodes[r]];
        const auto ri = static_cast<Eigen::Index>(r);
        a(ri, 0) = 1.0;
        a(ri, 1) = z;
        a(ri, 2) = std::conj(z);
        rhs(ri) = boundary_source.values()[bnodes[r]];
    }
    const Eigen::VectorXcd c = a.colPivHouseholderQr().solve(rhs);
    MapField out = boundary_source;
    std::vector<cplx> interior;
    for (int k : g.interior_nodes()) {
        const cplx z = g.nodes()[k];
        interior.push_back(c(0) + c(1) * z + c(2) * std::conj(z));
    }
    out.set_interior_values(interior);
    return out;
}

double pairwise_sum(std::span<const double> values) {
    if (values.size() <= 8) {
        double s = 0.0;
        for (double v : values) s += v;
        return s;
    }
    const std::size_t half = values.size() / 2;
    return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

}  // namespace expdist
