#include "expdist/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "parallel.hpp"

namespace expdist {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();
const cplx kI{0.0, 1.0};

double log_sum_exp(std::span<const double> x) {
    double m = -kInf;
    for (double v : x) m = std::max(m, v);
    if (!std::isfinite(m)) return m;
    std::vector<double> e(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) e[i] = std::exp(x[i] - m);
    return m + std::log(pairwise_sum(e));
}

double domain_width(const TriGrid& g) {
    return g.domain() == DomainKind::unit_square ? 1.0 : 2.0 * (1.0 - g.delta());
}

double physical_spacing(const TriGrid& g) {
    return g.domain() == DomainKind::unit_square ? g.spacing() : g.spacing() * (1.0 - g.delta());
}

// Quantities on the lattice of cells (cell q = (i, j) at q = j * (nx - 1) + i).
struct CellLattice {
    int nx = 0;
    int ny = 0;
    std::vector<cplx> centers;
    std::vector<cplx> images;
    std::vector<double> ref_area;
    std::vector<double> image_area;
    std::vector<std::uint8_t> interior;
    DerivedField d;
};

CellLattice cell_lattice(const MapField& map, double margin) {
    const TriGrid& g = map.grid();
    CellLattice c;
    c.nx = g.nx() - 1;
    c.ny = g.ny() - 1;
    const std::size_t n = g.num_cells();
    c.d = wirtinger_cells(map);
    const auto shapes = g.shapes();
    const auto f = map.values();
    const DerivedField tri = wirtinger(map);
    const double cut = margin * domain_width(g);
    c.centers.resize(n);
    c.images.resize(n);
    c.ref_area.resize(n);
    c.image_area.resize(n);
    c.interior.resize(n);
    for (std::size_t q = 0; q < n; ++q) {
        const auto corner = g.cell_corners(q);
        c.centers[q] = g.cell_center(q);
        c.images[q] = 0.25 * (f[corner[0]] + f[corner[1]] + f[corner[2]] + f[corner[3]]);
        c.ref_area[q] = shapes[2 * q].area + shapes[2 * q + 1].area;
        c.image_area[q] = tri.jacobian[2 * q] * shapes[2 * q].area + tri.jacobian[2 * q + 1] * shapes[2 * q + 1].area;
        c.interior[q] = g.distance_to_boundary(c.centers[q]) >= cut && c.d.jacobian[q] > 0.0 ? 1 : 0;
    }
    return c;
}

// Wirtinger derivatives of a lattice field by centred differences in the
// lattice directions, mapped through the lattice positions z.
bool lattice_wirtinger(int nx, int ny, std::span<const cplx> z, std::span<const cplx> f, int i, int j,
                       cplx& fz, cplx& fzbar) {
    if (i < 1 || j < 1 || i + 1 >= nx || j + 1 >= ny) return false;
    const auto at = [nx](int a, int b) { return static_cast<std::size_t>(b * nx + a); };
    const cplx zs = 0.5 * (z[at(i + 1, j)] - z[at(i - 1, j)]);
    const cplx zt = 0.5 * (z[at(i, j + 1)] - z[at(i, j - 1)]);
    const cplx fs = 0.5 * (f[at(i + 1, j)] - f[at(i - 1, j)]);
    const cplx ft = 0.5 * (f[at(i, j + 1)] - f[at(i, j - 1)]);
    const cplx det = zs * std::conj(zt) - zt * std::conj(zs);
    if (std::abs(det) == 0.0) return false;
    fz = (fs * std::conj(zt) - ft * std::conj(zs)) / det;
    fzbar = (zs * ft - zt * fs) / det;
    return true;
}

// log of dPsi/dK (plain distortion K) for the integrand.
double log_psi_prime(const IntegrandSpec& integrand, double big_k, double mu2) {
    if (integrand.kind == IntegrandKind::exp_p_lambda) {
        const double l2 = integrand.params.lambda * integrand.params.lambda;
        const double kl = (l2 + mu2) / (l2 - mu2);
        const double dkl = l2 * (1.0 - mu2) * (1.0 - mu2) / ((l2 - mu2) * (l2 - mu2));
        return integrand.log_psi_of_k(kl) + std::log(integrand.dlog_psi_dk(kl) * dkl);
    }
    return integrand.log_psi_of_k(big_k) + std::log(integrand.dlog_psi_dk(big_k));
}

std::uint64_t next_u64(std::mt19937_64& rng) { return rng(); }
double uniform01(std::mt19937_64& rng) { return static_cast<double>(next_u64(rng) >> 11) * 0x1.0p-53; }

// Natural cubic spline in both lattice directions of a complex node field.
class SplineSurface {
public:
    SplineSurface(int nx, int ny, std::span<const cplx> values)
        : nx_(nx), ny_(ny), values_(values.begin(), values.end()), row_m_(values.size()) {
        std::vector<cplx> row(nx), m;
        for (int j = 0; j < ny; ++j) {
            for (int i = 0; i < nx; ++i) row[i] = values_[j * nx + i];
            m = second_derivatives(row);
            for (int i = 0; i < nx; ++i) row_m_[j * nx + i] = m[i];
        }
    }

    // Value and derivatives in the lattice coordinates.
    void eval(double u, double v, cplx& f, cplx& fu, cplx& fv) const {
        std::vector<cplx> col(ny_), dcol(ny_);
        for (int j = 0; j < ny_; ++j) {
            eval_1d(std::span<const cplx>(values_).subspan(j * nx_, nx_),
                    std::span<const cplx>(row_m_).subspan(j * nx_, nx_), u, col[j], dcol[j]);
        }
        const std::vector<cplx> mc = second_derivatives(col);
        const std::vector<cplx> md = second_derivatives(dcol);
        cplx unused;
        eval_1d(col, mc, v, f, fv);
        eval_1d(dcol, md, v, fu, unused);
    }

private:
    static std::vector<cplx> second_derivatives(std::span<const cplx> y) {
        const int n = static_cast<int>(y.size());
        std::vector<cplx> m(n, cplx{});
        if (n < 3) return m;
        // Thomas algorithm for m[i-1] + 4 m[i] + m[i+1] = 6 (y[i+1] - 2 y[i] + y[i-1]).
        std::vector<double> c(n, 0.0);
        std::vector<cplx> d(n, cplx{});
        for (int i = 1; i + 1 < n; ++i) {
            const cplx rhs = 6.0 * (y[i + 1] - 2.0 * y[i] + y[i - 1]);
            const double denom = 4.0 - (i > 1 ? c[i - 1] : 0.0);
            c[i] = 1.0 / denom;
            d[i] = (rhs - (i > 1 ? d[i - 1] : cplx{})) / denom;
        }
        for (int i = n - 2; i >= 1; --i) m[i] = d[i] - c[i] * m[i + 1];
        return m;
    }

    static void eval_1d(std::span<const cplx> y, std::span<const cplx> m, double x, cplx& s, cplx& ds) {
        const int n = static_cast<int>(y.size());
        const int i = std::clamp(static_cast<int>(std::floor(x)), 0, n - 2);
        const double t = x - i;
        const double r = 1.0 - t;
        s = r * y[i] + t * y[i + 1] + ((r * r * r - r) * m[i] + (t * t * t - t) * m[i + 1]) / 6.0;
        ds = y[i + 1] - y[i] + ((1.0 - 3.0 * r * r) * m[i] + (3.0 * t * t - 1.0) * m[i + 1]) / 6.0;
    }

    int nx_;
    int ny_;
    std::vector<cplx> values_;
    std::vector<cplx> row_m_;
};

struct InverseDetail {
    InverseSample sample;
    std::vector<cplx> logical;
};

InverseDetail invert_detail(const MapField& map, int points, double margin) {
    if (points < 3) throw ConfigError("tension lattice needs at least 3 points per side");
    const TriGrid& g = map.grid();
    const auto f = map.values();
    const auto tris = g.triangles();
    const SplineSurface spline(g.nx(), g.ny(), f);

    double xmin = kInf, xmax = -kInf, ymin = kInf, ymax = -kInf;
    for (const cplx& w : f) {
        xmin = std::min(xmin, w.real());
        xmax = std::max(xmax, w.real());
        ymin = std::min(ymin, w.imag());
        ymax = std::max(ymax, w.imag());
    }
    const double spacing = std::max(xmax - xmin, ymax - ymin) / (points - 1);
    InverseDetail out;
    LatticeField& h = out.sample.h;
    h.spacing = spacing;
    h.origin = cplx(xmin, ymin);
    h.nx = static_cast<int>(std::floor((xmax - xmin) / spacing + 1e-9)) + 1;
    h.ny = static_cast<int>(std::floor((ymax - ymin) / spacing + 1e-9)) + 1;
    const std::size_t n = static_cast<std::size_t>(h.nx) * h.ny;
    h.values.assign(n, cplx(kNaN, kNaN));
    out.sample.valid.assign(n, 0);
    out.logical.assign(n, cplx(kNaN, kNaN));
    const double lim_u = g.nx() - 1.0;
    const double lim_v = g.ny() - 1.0;
    const double cut = margin * std::max(lim_u, lim_v);

    detail::parallel_for(n, [&](std::size_t k) {
        const int a = static_cast<int>(k % h.nx);
        const int b = static_cast<int>(k / h.nx);
        const cplx w = h.origin + spacing * cplx(a, b);
        // Seed from the piecewise-affine preimage.
        double u = kNaN, v = kNaN;
        for (const auto& tri : tris) {
            const cplx p0 = f[tri[0]], e1 = f[tri[1]] - p0, e2 = f[tri[2]] - p0, r = w - p0;
            const double det = e1.real() * e2.imag() - e1.imag() * e2.real();
            if (det == 0.0) continue;
            const double l1 = (r.real() * e2.imag() - r.imag() * e2.real()) / det;
            const double l2 = (e1.real() * r.imag() - e1.imag() * r.real()) / det;
            if (l1 < -1e-12 || l2 < -1e-12 || l1 + l2 > 1.0 + 1e-12) continue;
            const auto uv = [&](int node) { return cplx(node % g.nx(), node / g.nx()); };
            const cplx q = uv(tri[0]) + l1 * (uv(tri[1]) - uv(tri[0])) + l2 * (uv(tri[2]) - uv(tri[0]));
            u = q.real();
            v = q.imag();
            break;
        }
        if (!std::isfinite(u)) return;
        if (std::min({u, v, lim_u - u, lim_v - v}) < cut) return;
        bool ok = false;
        for (int it = 0; it < 50; ++it) {
            cplx s, su, sv;
            spline.eval(u, v, s, su, sv);
            const cplx r = s - w;
            if (std::abs(r) <= 1e-14 * (1.0 + std::abs(w))) {
                ok = true;
                break;
            }
            // Solve [Re su Re sv; Im su Im sv] [du dv] = -r.
            const double det = su.real() * sv.imag() - sv.real() * su.imag();
            if (det == 0.0) break;
            const double du = -(r.real() * sv.imag() - sv.real() * r.imag()) / det;
            const double dv = -(su.real() * r.imag() - r.real() * su.imag()) / det;
            u = std::clamp(u + du, 0.0, lim_u);
            v = std::clamp(v + dv, 0.0, lim_v);
            if (std::abs(du) + std::abs(dv) < 1e-15 * (1.0 + lim_u)) {
                ok = true;
                break;
            }
        }
        if (!ok || std::min({u, v, lim_u - u, lim_v - v}) < cut) return;
        h.values[k] = g.reference_point(u, v);
        out.logical[k] = cplx(u, v);
        out.sample.valid[k] = 1;
    });
    for (std::uint8_t vflag : out.sample.valid) out.sample.outside += vflag ? 0 : 1;
    return out;
}

}  // namespace

double log_phi_factor(const IntegrandSpec& integrand, double big_k, double mu_abs2) {
    if (integrand.kind == IntegrandKind::exp_p_lambda) {
        const double l2 = integrand.params.lambda * integrand.params.lambda;
        const double kl = (l2 + mu_abs2) / (l2 - mu_abs2);
        const double ratio = (1.0 - mu_abs2) / (l2 - mu_abs2);
        return integrand.log_psi_of_k(kl) + 2.0 * std::log(ratio);
    }
    if (integrand.kind == IntegrandKind::truncated) {
        return log_psi_prime(integrand, big_k, mu_abs2) - std::log(integrand.params.p);
    }
    return integrand.params.p * big_k;
}

QuadDifferentialField ahlfors_hopf(const MapField& map, const WeightSpec& weight,
                                   const IntegrandSpec& integrand, const DiagnosticOptions& options) {
    const CellLattice c = cell_lattice(map, options.margin);
    const std::size_t n = c.centers.size();
    QuadDifferentialField out;
    out.support = PhiSupport::scattered;
    out.sources = c.centers;
    out.points = c.images;
    out.values.assign(n, cplx{});
    out.weights.assign(n, 0.0);
    out.interior = c.interior;
    out.h = physical_spacing(map.grid());
    double jmax = 0.0;
    for (double j : c.d.jacobian) jmax = std::max(jmax, j);
    for (std::size_t q = 0; q < n; ++q) {
        const double jac = c.d.jacobian[q];
        if (!(jac > 1e-12 * jmax)) {
            out.interior[q] = 0;
            ++out.excluded;
            continue;
        }
        const double mu2 = std::norm(c.d.mu[q]);
        const double lf = log_phi_factor(integrand, c.d.big_k[q], mu2);
        const cplx pull = -std::conj(c.d.fz[q] * c.d.fzbar[q]) / (jac * jac) * weight.eta(c.centers[q]);
        out.values[q] = std::exp(lf) * pull;
        out.weights[q] = c.image_area[q];
    }
    std::vector<double> mags;
    std::vector<double> terms(n);
    for (std::size_t q = 0; q < n; ++q) {
        terms[q] = std::abs(out.values[q]) * out.weights[q];
        if (out.weights[q] > 0.0) mags.push_back(std::abs(out.values[q]));
    }
    out.l1_norm = pairwise_sum(terms);
    if (!mags.empty()) {
        std::nth_element(mags.begin(), mags.begin() + static_cast<std::ptrdiff_t>(mags.size() / 2), mags.end());
        out.median_abs = mags[mags.size() / 2];
    }
    const double thr = options.zero_threshold * out.median_abs;
    for (std::size_t q = 0; q < n; ++q) {
        if (out.weights[q] > 0.0 && std::abs(out.values[q]) < thr) {
            out.zero_candidates.push_back(out.points[q]);
            out.zero_indices.push_back(q);
        }
    }
    const DbarResidual r =
        dbar_residual_scattered(out.points, out.values, options.scatter, out.weights, out.interior);
    out.dbar_pointwise = r.pointwise;
    out.dbar_residual_l1 = r.l1;
    out.dbar_residual_linf = r.linf;
    out.excluded += r.excluded;
    return out;
}

InnerVariationResult inner_variation_residual(const MapField& map, const WeightSpec& weight,
                                              const IntegrandSpec& integrand, const DiagnosticOptions& options) {
    const TriGrid& g = map.grid();
    const DerivedField d = wirtinger(map);
    const auto shapes = g.shapes();
    const std::size_t nt = shapes.size();
    if (!d.orientation_preserving()) throw std::domain_error("inner variation of a non-admissible map");

    // Psi and Psi'(K) 2 conj(mu) / (1 - |mu|^2), scaled by a common factor.
    std::vector<double> log_psi(nt), log_dpsi(nt);
    double top = -kInf;
    for (std::size_t t = 0; t < nt; ++t) {
        const double mu2 = std::norm(d.mu[t]);
        const LogIntegrand li = integrand.evaluate(std::norm(d.fz[t]), std::norm(d.fzbar[t]));
        if (!li.admissible) throw std::domain_error("inner variation of a non-admissible map");
        log_psi[t] = li.value;
        log_dpsi[t] = log_psi_prime(integrand, d.big_k[t], mu2);
        top = std::max({top, log_psi[t], log_dpsi[t]});
    }
    std::vector<double> psi(nt);
    std::vector<cplx> coef(nt);
    std::vector<double> eta(nt);
    for (std::size_t t = 0; t < nt; ++t) {
        psi[t] = std::exp(log_psi[t] - top);
        coef[t] = std::exp(log_dpsi[t] - top) * 2.0 * std::conj(d.mu[t]) / (1.0 - std::norm(d.mu[t]));
        eta[t] = weight.eta(shapes[t].centroid);
    }

    std::mt19937_64 rng(options.seed);
    const double width = domain_width(g);
    const bool square = g.domain() == DomainKind::unit_square;
    InnerVariationResult out;
    std::vector<cplx> lhs_terms(nt), rhs_terms(nt);
    std::vector<double> lre(nt), lim(nt), den(nt);
    const auto nodes = g.nodes();
    const auto tris = g.triangles();
    std::vector<double> bump(nodes.size()), ebump(nodes.size());
    for (int attempt = 0; out.evaluated < options.battery_size && attempt < 20 * options.battery_size; ++attempt) {
        cplx center;
        if (square) {
            center = cplx(uniform01(rng), uniform01(rng));
        } else {
            const double rad = 1.0 - g.delta();
            center = cplx((2.0 * uniform01(rng) - 1.0) * rad, (2.0 * uniform01(rng) - 1.0) * rad);
        }
        const double r = width * (0.1 + 0.2 * uniform01(rng));
        if (g.distance_to_boundary(center) <= r) {
            ++out.skipped;
            continue;
        }
        // Bump and eta * bump interpolated at the nodes (P1 test functions).
        for (std::size_t k = 0; k < nodes.size(); ++k) {
            const double rho2 = std::norm(nodes[k] - center) / (r * r);
            const double expo = rho2 < 1.0 ? 1.0 / (rho2 - 1.0) : -kInf;
            bump[k] = expo > -700.0 ? std::exp(expo) : 0.0;
            ebump[k] = bump[k] * weight.eta(nodes[k]);
        }
        for (std::size_t t = 0; t < nt; ++t) {
            cplx phi_z{}, psi_z{};
            for (int v = 0; v < 3; ++v) {
                phi_z += bump[tris[t][v]] * shapes[t].dz[v];
                psi_z += ebump[tris[t][v]] * shapes[t].dz[v];
            }
            const double a = shapes[t].area;
            const cplx diff = psi[t] * psi_z * a - coef[t] * eta[t] * std::conj(phi_z) * a;
            lre[t] = diff.real();
            lim[t] = diff.imag();
            den[t] = psi[t] * eta[t] * 2.0 * std::abs(phi_z) * a;
        }
        const double scale = pairwise_sum(den);
        if (!(scale > 0.0)) {
            ++out.skipped;
            continue;
        }
        const double res = std::hypot(pairwise_sum(lre), pairwise_sum(lim)) / scale;
        out.residual = std::max(out.residual, res);
        ++out.evaluated;
    }
    return out;
}

double mu_equation_residual(const MapField& map, const WeightSpec& weight, const DistortionParams& params,
                            const DiagnosticOptions& options) {
    const CellLattice c = cell_lattice(map, options.margin);
    const double p = params.p;
    std::vector<double> terms;
    for (int j = 1; j + 1 < c.ny; ++j) {
        for (int i = 1; i + 1 < c.nx; ++i) {
            const std::size_t q = static_cast<std::size_t>(j * c.nx + i);
            if (!c.interior[q]) continue;
            cplx mz, mzb;
            if (!lattice_wirtinger(c.nx, c.ny, c.centers, c.d.mu, i, j, mz, mzb)) continue;
            const cplx mu = c.d.mu[q];
            const double t2 = std::norm(mu);
            const double gamma = 1.0 + (4.0 * p - 3.0) * t2 + (4.0 * p * p - 4.0 * p + 3.0) * t2 * t2 - t2 * t2 * t2;
            const double alpha = std::pow(1.0 - t2, 3);
            const double beta = 2.0 * p * (1.0 + 2.0 * p * t2 - t2 * t2);
            const cplx lg = weight.log_gradient_at(c.centers[q]);
            const cplx phi = -(1.0 - t2) * (1.0 - t2) * (1.0 + (2.0 * p - 1.0) * t2) * mu * lg -
                             std::pow(1.0 - t2, 3) * t2 * std::conj(lg);
            const cplx r = gamma * mz - alpha * std::conj(mu) * mzb + beta * mu * mu * std::conj(mzb) - phi;
            terms.push_back(std::abs(r) * c.ref_area[q]);
        }
    }
    return pairwise_sum(terms);
}

InverseSample invert_on_lattice(const MapField& map, int points, double margin) {
    return invert_detail(map, points, margin).sample;
}

TensionResult tension_residual(const InverseSample& inverse, std::span<const cplx> log_metric_z) {
    const LatticeField& h = inverse.h;
    if (log_metric_z.size() != h.values.size()) throw ConfigError("metric sample count mismatch");
    const double s = h.spacing;
    TensionResult out;
    std::vector<double> terms;
    for (int b = 0; b < h.ny; ++b) {
        for (int a = 0; a < h.nx; ++a) {
            const std::size_t k = static_cast<std::size_t>(b * h.nx + a);
            if (!inverse.valid[k]) continue;
            if (a == 0 || b == 0 || a + 1 == h.nx || b + 1 == h.ny) {
                ++out.excluded;
                continue;
            }
            const std::size_t e = k + 1, wst = k - 1, n = k + h.nx, so = k - h.nx;
            if (!inverse.valid[e] || !inverse.valid[wst] || !inverse.valid[n] || !inverse.valid[so]) {
                ++out.excluded;
                continue;
            }
            const cplx hx = (h.values[e] - h.values[wst]) / (2.0 * s);
            const cplx hy = (h.values[n] - h.values[so]) / (2.0 * s);
            const cplx lap = (h.values[e] + h.values[wst] + h.values[n] + h.values[so] - 4.0 * h.values[k]) / (s * s);
            const cplx hw = 0.5 * (hx - kI * hy);
            const cplx hwb = 0.5 * (hx + kI * hy);
            const cplx r = 0.25 * lap + log_metric_z[k] * hw * hwb;
            terms.push_back(std::abs(r) * s * s);
        }
    }
    out.counted = terms.size();
    out.residual = pairwise_sum(terms);
    return out;
}

TensionResult tension_of_map(const MapField& map, const WeightSpec& weight, const DistortionParams& params,
                             const DiagnosticOptions& options) {
    const InverseDetail inv = invert_detail(map, options.tension_points, options.margin);
    const std::size_t n = inv.sample.h.values.size();
    std::vector<cplx> lmz(n, cplx{});

    // p K_z on the cell lattice, interpolated bilinearly at the preimages.
    CellLattice c;
    std::vector<cplx> kz;
    // Below 3 cells per side K cannot be differenced; the metric gradient is
    // then the weight's alone.
    const bool with_k = options.full_metric && map.grid().nx() >= 4 && map.grid().ny() >= 4;
    if (with_k) {
        c = cell_lattice(map, 0.0);
        std::vector<cplx> bigk(c.d.big_k.begin(), c.d.big_k.end());
        kz.assign(bigk.size(), cplx{});
        for (int j = 1; j + 1 < c.ny; ++j) {
            for (int i = 1; i + 1 < c.nx; ++i) {
                cplx a, b;
                const std::size_t q = static_cast<std::size_t>(j * c.nx + i);
                if (lattice_wirtinger(c.nx, c.ny, c.centers, bigk, i, j, a, b)) kz[q] = a;
            }
        }
    }
    for (std::size_t k = 0; k < n; ++k) {
        if (!inv.sample.valid[k]) continue;
        const cplx z = inv.sample.h.values[k];
        lmz[k] = weight.log_gradient_at(z);
        if (!with_k) continue;
        const double x = std::clamp(inv.logical[k].real() - 0.5, 1.0, c.nx - 2.0);
        const double y = std::clamp(inv.logical[k].imag() - 0.5, 1.0, c.ny - 2.0);
        const int i = std::min(static_cast<int>(x), c.nx - 3);
        const int j = std::min(static_cast<int>(y), c.ny - 3);
        const double tx = x - i, ty = y - j;
        const auto at = [&](int a, int b) { return kz[static_cast<std::size_t>(b * c.nx + a)]; };
        const cplx v = (1 - tx) * (1 - ty) * at(i, j) + tx * (1 - ty) * at(i + 1, j) + (1 - tx) * ty * at(i, j + 1) +
                       tx * ty * at(i + 1, j + 1);
        lmz[k] += params.p * v;
    }
    return tension_residual(inv.sample, lmz);
}

TeichmullerPhase teichmuller_phase_residual(const MapField& map, const WeightSpec& weight,
                                            const IntegrandSpec& integrand, const DiagnosticOptions& options) {
    const QuadDifferentialField phi = ahlfors_hopf(map, weight, integrand, options);
    const CellLattice c = cell_lattice(map, options.margin);
    const std::size_t n = phi.values.size();
    double top = 0.0;
    for (const cplx& v : phi.values) top = std::max(top, std::abs(v));
    if (!(top > 0.0)) throw std::domain_error("Ahlfors-Hopf differential vanishes everywhere");

    std::vector<std::uint8_t> use(phi.interior.begin(), phi.interior.end());
    const double thr = options.zero_threshold * phi.median_abs;
    for (std::size_t q = 0; q < n; ++q) {
        if (std::abs(phi.values[q]) <= thr || !(std::abs(phi.values[q]) > 0.0)) use[q] = 0;
    }
    for (std::size_t z : phi.zero_indices) {
        const int zi = static_cast<int>(z % c.nx), zj = static_cast<int>(z / c.nx);
        for (int dj = -2; dj <= 2; ++dj) {
            for (int di = -2; di <= 2; ++di) {
                const int i = zi + di, j = zj + dj;
                if (i >= 0 && j >= 0 && i < c.nx && j < c.ny) use[static_cast<std::size_t>(j * c.nx + i)] = 0;
            }
        }
    }
    std::vector<double> w, phase, k;
    for (std::size_t q = 0; q < n; ++q) {
        if (!use[q]) continue;
        const cplx fz = c.d.fz[q];
        const cplx mu_h = -c.d.mu[q] * fz / std::conj(fz);
        w.push_back(phi.weights[q]);
        k.push_back(std::abs(mu_h));
        phase.push_back(std::abs(mu_h) > 1e-14 ? std::abs(std::arg(mu_h * phi.values[q])) : 0.0);
    }
    TeichmullerPhase out;
    out.counted = w.size();
    if (w.empty()) throw std::domain_error("no points away from the zero set of Phi");
    const double wsum = pairwise_sum(w);
    std::vector<double> tmp(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) tmp[i] = w[i] * phase[i];
    out.residual = pairwise_sum(tmp) / wsum;
    for (std::size_t i = 0; i < w.size(); ++i) tmp[i] = w[i] * k[i];
    out.k_estimate = pairwise_sum(tmp) / wsum;
    for (std::size_t i = 0; i < w.size(); ++i) tmp[i] = w[i] * (k[i] - out.k_estimate) * (k[i] - out.k_estimate);
    out.k_dispersion = std::sqrt(pairwise_sum(tmp) / wsum);
    return out;
}

double f_identity_point(double mu_abs, const DistortionParams& params) {
    if (mu_abs == 0.0) return 0.0;
    const double p = params.p;
    const double k = big_k_from_mu(mu_abs);
    const double x = p * (k - 1.0);
    // log(expm1(x)) without overflow for large x.
    const double log_s = p + (x > 30.0 ? x + std::log1p(-std::exp(-x)) : std::log(std::expm1(x)));
    const double lhs = log_a_p_from_log_s(log_s, params);
    const double rhs = p * k + std::log(2.0 * p * mu_abs / ((1.0 - mu_abs) * (1.0 + mu_abs)));
    return std::abs(std::expm1(lhs - rhs));
}

double f_identity_residual(const MapField& map, const DistortionParams& params) {
    const DerivedField d = wirtinger(map);
    double worst = 0.0;
    for (std::size_t t = 0; t < d.size(); ++t) {
        if (!(d.jacobian[t] > 0.0)) continue;
        worst = std::max(worst, f_identity_point(std::abs(d.mu[t]), params));
    }
    return worst;
}

std::vector<HamiltonEntry> hamilton_sequence(const MapField& map, const WeightSpec& weight,
                                             const DistortionParams& params, std::span<const int> orders) {
    const CellLattice c = cell_lattice(map, 0.0);
    const std::size_t n = c.centers.size();
    const double p = params.p;
    // log(|pullback| * image area); -inf where excluded.
    std::vector<double> base(n, -kInf), full(n, -kInf);
    for (std::size_t q = 0; q < n; ++q) {
        const double jac = c.d.jacobian[q];
        if (!(jac > 0.0) || !(c.image_area[q] > 0.0)) continue;
        const double pull = std::abs(c.d.fz[q] * c.d.fzbar[q]) / (jac * jac) * weight.eta(c.centers[q]);
        if (!(pull > 0.0)) continue;
        base[q] = std::log(pull * c.image_area[q]);
        full[q] = base[q] + p * c.d.big_k[q];
    }
    const double log_full = log_sum_exp(full);
    std::vector<HamiltonEntry> out;
    for (int order : orders) {
        if (order < 1) throw ConfigError("Hamilton sequence orders start at 1");
        const IntegrandSpec partial = IntegrandSpec::truncated(p, order - 1);
        std::vector<double> part(n, -kInf);
        for (std::size_t q = 0; q < n; ++q) {
            if (std::isfinite(base[q])) part[q] = base[q] + partial.log_psi_of_k(c.d.big_k[q]);
        }
        const double log_part = log_sum_exp(part);
        std::vector<double> dist(n, 0.0);
        for (std::size_t q = 0; q < n; ++q) {
            if (!std::isfinite(base[q])) continue;
            dist[q] = std::abs(std::exp(part[q] - log_part) - std::exp(full[q] - log_full));
        }
        HamiltonEntry e;
        e.n = order;
        e.log_norm = log_part;
        e.norm = std::exp(log_part);
        e.distance = pairwise_sum(dist);
        e.ratio = std::exp(log_part - log_full);
        out.push_back(e);
    }
    return out;
}

ResidualBundle residual_bundle(const MapField& map, const WeightSpec& weight, const IntegrandSpec& integrand,
                               const DiagnosticOptions& options) {
    ResidualBundle b;
    b.h = physical_spacing(map.grid());
    b.inner_variation = inner_variation_residual(map, weight, integrand, options).residual;
    const QuadDifferentialField phi = ahlfors_hopf(map, weight, integrand, options);
    b.ahlfors_hopf_dbar = phi.dbar_residual_l1;
    b.phi_l1 = phi.l1_norm;
    {
        std::vector<double> w;
        std::vector<double> re, im;
        for (std::size_t q = 0; q < phi.values.size(); ++q) {
            if (!phi.interior[q]) continue;
            w.push_back(phi.weights[q]);
            re.push_back(phi.weights[q] * phi.values[q].real());
            im.push_back(phi.weights[q] * phi.values[q].imag());
        }
        const double ws = pairwise_sum(w);
        const cplx mean = cplx(pairwise_sum(re), pairwise_sum(im)) / ws;
        std::vector<double> dev;
        std::size_t idx = 0;
        for (std::size_t q = 0; q < phi.values.size(); ++q) {
            if (!phi.interior[q]) continue;
            dev.push_back(w[idx++] * std::norm(phi.values[q] - mean));
        }
        b.phi_dispersion = std::abs(mean) > 0.0 ? std::sqrt(pairwise_sum(dev) / ws) / std::abs(mean) : kNaN;
    }
    b.mu_equation = mu_equation_residual(map, weight, integrand.params, options);
    b.tension = tension_of_map(map, weight, integrand.params, options).residual;
    try {
        const TeichmullerPhase t = teichmuller_phase_residual(map, weight, integrand, options);
        b.teichmuller_phase = t.residual;
        b.k_estimate = t.k_estimate;
        b.k_dispersion = t.k_dispersion;
    } catch (const std::domain_error&) {
        b.teichmuller_phase = kNaN;
        b.k_estimate = kNaN;
        b.k_dispersion = kNaN;
    }
    b.f_identity = f_identity_residual(map, integrand.params);
    return b;
}

}  // namespace expdist
