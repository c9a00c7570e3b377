#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace expdist {

using cplx = std::complex<double>;

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// ---------------------------------------------------------------------------
// TriGrid
// ---------------------------------------------------------------------------

enum class DomainKind : std::uint8_t { unit_square, disk_truncated };

[[nodiscard]] std::string to_string(DomainKind kind);
[[nodiscard]] DomainKind domain_from_string(const std::string& name);

// Per-triangle data of the reference configuration. For the P1 basis
// function phi_i of local vertex i, dz[i] = (phi_i)_z; (phi_i)_zbar is its
// conjugate.
struct TriangleShape {
    double area = 0.0;
    cplx centroid{};
    std::array<cplx, 3> dz{};
};

// Structured triangulation: an nx-by-ny lattice of nodes, each lattice cell
// split into two positively oriented triangles (2q and 2q + 1 for cell q).
// Every triangle has at least one interior node.
// The disk domain is the image of the square lattice under the elliptical
// square-to-disk map, scaled to radius 1 - delta.
class TriGrid {
public:
    [[nodiscard]] static std::shared_ptr<const TriGrid> unit_square(int n);
    [[nodiscard]] static std::shared_ptr<const TriGrid> disk_truncated(int n, double delta = 0.05);

    [[nodiscard]] int nx() const noexcept { return nx_; }
    [[nodiscard]] int ny() const noexcept { return ny_; }
    // Lattice spacing in the logical square (before the disk map).
    [[nodiscard]] double spacing() const noexcept { return spacing_; }
    [[nodiscard]] DomainKind domain() const noexcept { return domain_; }
    [[nodiscard]] double delta() const noexcept { return delta_; }

    [[nodiscard]] std::size_t num_nodes() const noexcept { return nodes_.size(); }
    [[nodiscard]] std::size_t num_triangles() const noexcept { return triangles_.size(); }
    [[nodiscard]] std::size_t num_cells() const noexcept {
        return static_cast<std::size_t>(nx_ - 1) * static_cast<std::size_t>(ny_ - 1);
    }

    [[nodiscard]] int node_index(int i, int j) const noexcept { return j * nx_ + i; }
    [[nodiscard]] std::span<const cplx> nodes() const noexcept { return nodes_; }
    [[nodiscard]] std::span<const std::array<int, 3>> triangles() const noexcept { return triangles_; }
    [[nodiscard]] std::span<const TriangleShape> shapes() const noexcept { return shapes_; }
    [[nodiscard]] std::span<const std::uint8_t> boundary_mask() const noexcept { return boundary_; }
    [[nodiscard]] std::span<const int> interior_nodes() const noexcept { return interior_; }
    [[nodiscard]] std::span<const int> boundary_nodes() const noexcept { return boundary_nodes_; }
    // Position of each node among the interior unknowns, or -1.
    [[nodiscard]] std::span<const int> free_index() const noexcept { return free_index_; }

    // Reference position of fractional lattice coordinates (i, j).
    [[nodiscard]] cplx reference_point(double i, double j) const;
    // Node indices of lattice cell q, counter-clockwise from (i, j).
    [[nodiscard]] std::array<int, 4> cell_corners(std::size_t q) const;
    // Reference centre of lattice cell q (mean of its four corners mapped).
    [[nodiscard]] cplx cell_center(std::size_t q) const;
    // Distance from a reference point to the domain boundary.
    [[nodiscard]] double distance_to_boundary(cplx z) const;
    [[nodiscard]] double total_area() const;

private:
    TriGrid(int nx, int ny, double spacing, DomainKind domain, double delta);
    void build(const std::function<cplx(double, double)>& place);

    int nx_;
    int ny_;
    double spacing_;
    DomainKind domain_;
    double delta_;
    std::vector<cplx> nodes_;
    std::vector<std::array<int, 3>> triangles_;
    std::vector<TriangleShape> shapes_;
    std::vector<std::uint8_t> boundary_;
    std::vector<int> interior_;
    std::vector<int> boundary_nodes_;
    std::vector<int> free_index_;
};

// ---------------------------------------------------------------------------
// MapField
// ---------------------------------------------------------------------------

// Piecewise-affine map on a TriGrid. Boundary node values always equal the
// Dirichlet trace; only interior values can be changed after construction.
class MapField {
public:
    MapField(std::shared_ptr<const TriGrid> grid, std::vector<cplx> values);
    // Builds the field from a function sampled at every node.
    static MapField sample(std::shared_ptr<const TriGrid> grid, const std::function<cplx(cplx)>& f);

    [[nodiscard]] const TriGrid& grid() const noexcept { return *grid_; }
    [[nodiscard]] const std::shared_ptr<const TriGrid>& grid_ptr() const noexcept { return grid_; }
    [[nodiscard]] std::span<const cplx> values() const noexcept { return values_; }
    [[nodiscard]] std::vector<cplx> boundary_trace() const;

    [[nodiscard]] std::vector<cplx> interior_values() const;
    void set_interior_values(std::span<const cplx> interior);

private:
    std::shared_ptr<const TriGrid> grid_;
    std::vector<cplx> values_;
};

// ---------------------------------------------------------------------------
// Wirtinger calculus
// ---------------------------------------------------------------------------

struct DerivedField {
    std::vector<cplx> fz;
    std::vector<cplx> fzbar;
    std::vector<double> jacobian;
    std::vector<cplx> mu;
    // +inf where the jacobian is not positive.
    std::vector<double> big_k;

    [[nodiscard]] std::size_t size() const noexcept { return fz.size(); }
    [[nodiscard]] bool orientation_preserving() const;
    [[nodiscard]] std::size_t count_non_positive() const;
};

// Exact constant derivatives of the piecewise-affine interpolant per triangle.
[[nodiscard]] DerivedField wirtinger(const MapField& map);

// Derivatives per lattice cell: area-weighted mean over the two triangles.
// On the square lattice this is the centred difference at the cell centre.
[[nodiscard]] DerivedField wirtinger_cells(const MapField& map);

// Fills jacobian, mu and big_k from fz and fzbar.
void complete_derived(DerivedField& d);

// ---------------------------------------------------------------------------
// dbar residuals
// ---------------------------------------------------------------------------

struct DbarResidual {
    // Per-point |dbar field|; NaN where undefined (not enough neighbours or
    // a point on the lattice edge).
    std::vector<double> pointwise;
    double l1 = 0.0;
    double linf = 0.0;
    std::size_t counted = 0;
    std::size_t excluded = 0;
};

// Field sampled on a regular lattice with the given origin and spacing.
struct LatticeField {
    int nx = 0;
    int ny = 0;
    double spacing = 1.0;
    cplx origin{};
    std::vector<cplx> values;
};

// Centred differences at interior lattice nodes; l1 is the sum of |dbar| h^2.
[[nodiscard]] DbarResidual dbar_residual(const LatticeField& field);

enum class ScatterFit : std::uint8_t { affine, quadratic };

struct ScatterOptions {
    int neighbors = 8;
    int min_neighbors = 6;
    ScatterFit fit = ScatterFit::affine;
};

// Local least-squares fit F ~ a + b dz + c conj(dz) (+ second-order terms)
// over the k nearest neighbours; reports |c|. Aggregates use `weights`
// (defaulting to 1) and skip points where `aggregate_mask` is zero.
[[nodiscard]] DbarResidual dbar_residual_scattered(std::span<const cplx> points,
                                                   std::span<const cplx> values,
                                                   const ScatterOptions& options = {},
                                                   std::span<const double> weights = {},
                                                   std::span<const std::uint8_t> aggregate_mask = {});

// ---------------------------------------------------------------------------
// Conformal weight
// ---------------------------------------------------------------------------

enum class WeightKind : std::uint8_t { euclidean, hyperbolic, tabulated };

[[nodiscard]] std::string to_string(WeightKind kind);
[[nodiscard]] WeightKind weight_from_string(const std::string& name);

// eta > 0 per triangle centroid with its log-gradient eta_z / eta. Point
// evaluation is available for every kind.
class WeightSpec {
public:
    using EtaFn = std::function<double(cplx)>;
    using LogGradFn = std::function<cplx(cplx)>;

    [[nodiscard]] WeightKind kind() const noexcept { return kind_; }
    [[nodiscard]] std::span<const double> values() const noexcept { return values_; }
    [[nodiscard]] std::span<const cplx> log_gradient() const noexcept { return log_gradient_; }

    [[nodiscard]] double eta(cplx z) const { return eta_(z); }
    [[nodiscard]] cplx log_gradient_at(cplx z) const { return log_grad_(z); }

    static WeightSpec tabulated(const TriGrid& grid, EtaFn eta, LogGradFn log_grad);

private:
    friend WeightSpec weight_eval(WeightKind kind, const TriGrid& grid);
    WeightSpec(WeightKind kind, const TriGrid& grid, EtaFn eta, LogGradFn log_grad);

    WeightKind kind_;
    EtaFn eta_;
    LogGradFn log_grad_;
    std::vector<double> values_;
    std::vector<cplx> log_gradient_;
};

// Throws ConfigError for a hyperbolic weight on the unit square and for
// `tabulated`, which needs explicit functions.
[[nodiscard]] WeightSpec weight_eval(WeightKind kind, const TriGrid& grid);

// ---------------------------------------------------------------------------
// Harmonic and affine extensions of boundary data
// ---------------------------------------------------------------------------

// Discrete Laplace (cotangent weights) extension of the current boundary
// values into the interior.
[[nodiscard]] MapField harmonic_extension(const MapField& boundary_source);

// Least-squares affine map of the boundary trace, evaluated at interior nodes.
[[nodiscard]] MapField affine_extension(const MapField& boundary_source);

// Cotangent-weight Laplacian of the triangulation with the given node positions,
// returned as triplets (row, col, weight) over all nodes.
struct Triplet {
    int row;
    int col;
    double value;
};
[[nodiscard]] std::vector<Triplet> cotangent_laplacian(std::span<const cplx> positions,
                                                       std::span<const std::array<int, 3>> triangles);

// Discrete harmonic extension on an arbitrary triangulation: positions give the
// mesh, values hold boundary data at nodes where mask != 0.
[[nodiscard]] std::vector<cplx> harmonic_extension_on_mesh(
    std::span<const cplx> positions, std::span<const std::array<int, 3>> triangles,
    std::span<const std::uint8_t> boundary_mask, std::span<const cplx> boundary_values);

// Sequential pairwise sum; fixed order for reproducible reductions.
[[nodiscard]] double pairwise_sum(std::span<const double> values);

}  // namespace expdist
