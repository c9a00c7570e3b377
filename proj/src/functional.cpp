#include "expdist/functional.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "parallel.hpp"

namespace expdist {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double log_sum_exp(std::span<const double> x) {
    double m = -kInf;
    for (double v : x) m = std::max(m, v);
    if (!std::isfinite(m)) return m;
    std::vector<double> e(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) e[i] = std::exp(x[i] - m);
    return m + std::log(pairwise_sum(e));
}

struct ElementTable {
    std::vector<LogIntegrand> terms;
    // log Psi + log(eta area); +inf where not admissible.
    std::vector<double> log_terms;
    DerivedField derived;
    std::size_t bad = 0;
};

ElementTable tabulate(const MapField& map, const WeightSpec& weight, const IntegrandSpec& integrand) {
    ElementTable tab;
    tab.derived = wirtinger(map);
    const auto shapes = map.grid().shapes();
    const auto eta = weight.values();
    const std::size_t n = shapes.size();
    tab.terms.resize(n);
    tab.log_terms.resize(n);
    detail::parallel_for(n, [&](std::size_t t) {
        const LogIntegrand li =
            integrand.evaluate(std::norm(tab.derived.fz[t]), std::norm(tab.derived.fzbar[t]));
        tab.terms[t] = li;
        tab.log_terms[t] = li.admissible ? li.value + std::log(eta[t] * shapes[t].area) : kInf;
    });
    for (const auto& li : tab.terms) tab.bad += li.admissible ? 0 : 1;
    return tab;
}

}  // namespace

std::string to_string(IntegrandKind kind) {
    switch (kind) {
        case IntegrandKind::exp_p: return "exp_p";
        case IntegrandKind::exp_p_lambda: return "exp_p_lambda";
        case IntegrandKind::truncated: return "truncated";
    }
    return "exp_p";
}

IntegrandKind integrand_from_string(const std::string& name) {
    if (name == "exp_p") return IntegrandKind::exp_p;
    if (name == "exp_p_lambda") return IntegrandKind::exp_p_lambda;
    if (name == "truncated") return IntegrandKind::truncated;
    throw ConfigError("unknown integrand '" + name + "'");
}

IntegrandSpec IntegrandSpec::exp_p(double p) {
    IntegrandSpec s{IntegrandKind::exp_p, {p, 1.0}, 0};
    s.validate();
    return s;
}

IntegrandSpec IntegrandSpec::exp_p_lambda(double p, double lambda) {
    IntegrandSpec s{IntegrandKind::exp_p_lambda, {p, lambda}, 0};
    s.validate();
    return s;
}

IntegrandSpec IntegrandSpec::truncated(double p, int n) {
    IntegrandSpec s{IntegrandKind::truncated, {p, 1.0}, n};
    s.validate();
    return s;
}

void IntegrandSpec::validate() const {
    try {
        params.validate();
    } catch (const std::domain_error& e) {
        throw ConfigError(e.what());
    }
    if (kind == IntegrandKind::truncated && truncation < 0) {
        throw ConfigError("truncation order must be non-negative");
    }
}

std::string IntegrandSpec::name() const {
    if (kind == IntegrandKind::truncated) return "truncated(" + std::to_string(truncation) + ")";
    return to_string(kind);
}

double IntegrandSpec::log_psi_of_k(double k) const {
    if (kind != IntegrandKind::truncated) return params.p * k;
    const double lx = std::log(params.p * k);
    std::vector<double> terms(static_cast<std::size_t>(truncation) + 1);
    for (int n = 0; n <= truncation; ++n) terms[n] = n * lx - std::lgamma(n + 1.0);
    return log_sum_exp(terms);
}

double IntegrandSpec::dlog_psi_dk(double k) const {
    if (kind != IntegrandKind::truncated) return params.p;
    if (truncation == 0) return 0.0;
    const double lx = std::log(params.p * k);
    std::vector<double> terms(static_cast<std::size_t>(truncation) + 1);
    for (int n = 0; n <= truncation; ++n) terms[n] = n * lx - std::lgamma(n + 1.0);
    const double all = log_sum_exp(terms);
    const double lower = log_sum_exp(std::span<const double>(terms).first(terms.size() - 1));
    return params.p * std::exp(lower - all);
}

LogIntegrand IntegrandSpec::evaluate(double a, double b) const {
    LogIntegrand out;
    const double l2 = kind == IntegrandKind::exp_p_lambda ? params.lambda * params.lambda : 1.0;
    const double den = l2 * a - b;
    if (!(den > 0.0) || !std::isfinite(den)) {
        out.value = kInf;
        out.distortion = kInf;
        out.admissible = false;
        return out;
    }
    // K = (l2 A + B)/(l2 A - B); l2 = 1 gives the plain distortion.
    const double k = (l2 * a + b) / den;
    const double dk_da = -2.0 * l2 * b / (den * den);
    const double dk_db = 2.0 * l2 * a / (den * den);
    const double g = dlog_psi_dk(k);
    out.value = log_psi_of_k(k);
    out.d_a = g * dk_da;
    out.d_b = g * dk_db;
    out.distortion = kind == IntegrandKind::exp_p_lambda ? (a + b) / (a - b) : k;
    return out;
}

EnergyReport energy(const MapField& map, const WeightSpec& weight, const IntegrandSpec& integrand,
                    bool keep_per_element) {
    const ElementTable tab = tabulate(map, weight, integrand);
    const auto shapes = map.grid().shapes();
    const auto eta = weight.values();
    EnergyReport r;
    r.integrand = integrand.name();
    r.p = integrand.params.p;
    r.lambda = integrand.params.lambda;
    std::vector<double> measure(shapes.size());
    std::vector<double> dist(shapes.size());
    r.max_distortion = 0.0;
    for (std::size_t t = 0; t < shapes.size(); ++t) {
        measure[t] = eta[t] * shapes[t].area;
        dist[t] = tab.derived.big_k[t];
        r.max_distortion = std::max(r.max_distortion, dist[t]);
    }
    r.weighted_area = pairwise_sum(measure);
    std::vector<double> weighted(shapes.size());
    for (std::size_t t = 0; t < shapes.size(); ++t) weighted[t] = dist[t] * measure[t];
    r.mean_distortion = pairwise_sum(weighted) / r.weighted_area;
    r.non_admissible_elements = tab.bad;
    r.admissible = tab.bad == 0;
    if (r.admissible) {
        r.log_energy = log_sum_exp(tab.log_terms);
        r.energy = std::exp(r.log_energy);
        r.normalized = (r.log_energy - std::log(r.weighted_area)) / integrand.params.p;
    } else {
        r.log_energy = kInf;
        r.energy = kInf;
        r.normalized = kInf;
    }
    if (keep_per_element) r.per_element = std::move(dist);
    return r;
}

LogEnergyGradient log_energy_gradient(const MapField& map, const WeightSpec& weight,
                                      const IntegrandSpec& integrand, bool with_gradient) {
    const ElementTable tab = tabulate(map, weight, integrand);
    LogEnergyGradient out;
    if (tab.bad > 0) {
        out.admissible = false;
        out.log_energy = kInf;
        out.log_sup_norm = kInf;
        return out;
    }
    out.log_energy = log_sum_exp(tab.log_terms);
    if (!with_gradient) return out;

    const TriGrid& g = map.grid();
    const auto tris = g.triangles();
    const auto shapes = g.shapes();
    const auto free = g.free_index();
    // Per-triangle contributions to each vertex, gathered per node afterwards
    // in a fixed order.
    std::vector<std::array<cplx, 3>> local(tris.size());
    detail::parallel_for(tris.size(), [&](std::size_t t) {
        const double w = std::exp(tab.log_terms[t] - out.log_energy);
        const cplx ga = w * tab.terms[t].d_a * 2.0 * tab.derived.fz[t];
        const cplx gb = w * tab.terms[t].d_b * 2.0 * tab.derived.fzbar[t];
        for (int i = 0; i < 3; ++i) {
            const cplx alpha = shapes[t].dz[i];
            local[t][i] = ga * std::conj(alpha) + gb * alpha;
        }
    });
    out.gradient.assign(g.interior_nodes().size(), cplx{});
    for (std::size_t t = 0; t < tris.size(); ++t) {
        for (int i = 0; i < 3; ++i) {
            const int f = free[tris[t][i]];
            if (f >= 0) out.gradient[f] += local[t][i];
        }
    }
    double sup = 0.0;
    for (const cplx& v : out.gradient) sup = std::max(sup, std::abs(v));
    out.log_sup_norm = std::log(sup) + out.log_energy;
    return out;
}

std::vector<cplx> energy_gradient(const MapField& map, const WeightSpec& weight,
                                  const IntegrandSpec& integrand) {
    LogEnergyGradient lg = log_energy_gradient(map, weight, integrand);
    if (!lg.admissible) throw std::domain_error("energy gradient of a non-admissible map");
    const double e = std::exp(lg.log_energy);
    for (cplx& v : lg.gradient) v *= e;
    return lg.gradient;
}

double log_energy_difference(const MapField& from, const MapField& to, const WeightSpec& weight,
                             const IntegrandSpec& integrand) {
    const ElementTable a = tabulate(from, weight, integrand);
    const ElementTable b = tabulate(to, weight, integrand);
    if (b.bad > 0) return kInf;
    if (a.bad > 0) return -kInf;
    const double log_e = log_sum_exp(a.log_terms);
    std::vector<double> change(a.log_terms.size());
    for (std::size_t t = 0; t < change.size(); ++t) {
        change[t] = std::exp(a.log_terms[t] - log_e) * std::expm1(b.log_terms[t] - a.log_terms[t]);
    }
    return std::log1p(pairwise_sum(change));
}

EnergyReport inverse_energy(const MapField& map, const WeightSpec& weight,
                            const IntegrandSpec& integrand) {
    const DerivedField d = wirtinger(map);
    const TriGrid& g = map.grid();
    const auto tris = g.triangles();
    const auto shapes = g.shapes();
    const auto f = map.values();
    EnergyReport r;
    r.integrand = integrand.name();
    r.p = integrand.params.p;
    r.lambda = integrand.params.lambda;
    std::vector<double> log_terms(tris.size());
    std::vector<double> measure(tris.size());
    std::vector<double> weighted(tris.size());
    r.max_distortion = 0.0;
    for (std::size_t t = 0; t < tris.size(); ++t) {
        const LogIntegrand li = integrand.evaluate(std::norm(d.fz[t]), std::norm(d.fzbar[t]));
        const cplx image = (f[tris[t][0]] + f[tris[t][1]] + f[tris[t][2]]) / 3.0;
        const double jac = d.jacobian[t];
        if (!li.admissible || !(jac > 0.0)) {
            ++r.non_admissible_elements;
            log_terms[t] = kInf;
            measure[t] = 0.0;
        } else {
            measure[t] = weight.eta(image) * jac * shapes[t].area;
            log_terms[t] = li.value + std::log(measure[t]);
        }
        weighted[t] = d.big_k[t] * measure[t];
        r.max_distortion = std::max(r.max_distortion, d.big_k[t]);
    }
    r.weighted_area = pairwise_sum(measure);
    r.admissible = r.non_admissible_elements == 0;
    r.mean_distortion = r.admissible ? pairwise_sum(weighted) / r.weighted_area : kInf;
    if (r.admissible) {
        r.log_energy = log_sum_exp(log_terms);
        r.energy = std::exp(r.log_energy);
        r.normalized = (r.log_energy - std::log(r.weighted_area)) / integrand.params.p;
    } else {
        r.log_energy = r.energy = r.normalized = kInf;
    }
    r.per_element = d.big_k;
    return r;
}

}  // namespace expdist
