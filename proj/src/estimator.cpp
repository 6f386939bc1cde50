#include "afem/estimator.hpp"

#include <charconv>
#include <cmath>
#include <fstream>

#include "afem/errors.hpp"

namespace afem {

namespace {

std::array<Vec2, 3> edge_midpoints(const Mesh& mesh, int e) {
    Vec2 p0 = mesh.point(e, 0), p1 = mesh.point(e, 1), p2 = mesh.point(e, 2);
    return {midpoint(p1, p2), midpoint(p2, p0), midpoint(p0, p1)};
}

Vec2 element_flux(const Mesh& mesh, const ProblemSpec& spec, const DiscreteFunction& v,
                  int e) {
    Vec2 g = element_gradient(mesh, v, e);
    if (spec.kind == ProblemKind::scalar_nonlinear) {
        double t = dot(g, g);
        if (spec.a_is_constant_in_x) return spec.a(mesh.point(e, 0), t) * g;
        auto q = edge_midpoints(mesh, e);
        double coeff = (spec.a(q[0], t) + spec.a(q[1], t) + spec.a(q[2], t)) / 3.0;
        return coeff * g;
    }
    Mat2 A = spec.diffusion ? spec.diffusion(mesh.point(e, 0)) : Mat2{};
    if (!spec.diffusion_is_constant) {
        auto q = edge_midpoints(mesh, e);
        Mat2 m0 = spec.diffusion(q[0]), m1 = spec.diffusion(q[1]), m2 = spec.diffusion(q[2]);
        const double w = 1.0 / 3.0;
        A = {w * (m0.a00 + m1.a00 + m2.a00), w * (m0.a01 + m1.a01 + m2.a01),
             w * (m0.a10 + m1.a10 + m2.a10), w * (m0.a11 + m1.a11 + m2.a11)};
    }
    return apply(A, g);
}

/// div(flux(v)) at x for elementwise-constant grad v; analytic when the
/// divergence is supplied, otherwise central differences with a step scaled
/// by the element diameter.
double flux_divergence(const Mesh& mesh, const ProblemSpec& spec, const DiscreteFunction& v,
                       int e, Vec2 x) {
    Vec2 g = element_gradient(mesh, v, e);
    if (spec.kind == ProblemKind::scalar_nonlinear) {
        if (spec.a_is_constant_in_x) return 0.0;
        double t = dot(g, g);
        double h = 1e-6 * mesh.diameter(e);
        double dax = (spec.a({x.x + h, x.y}, t) - spec.a({x.x - h, x.y}, t)) / (2 * h);
        double day = (spec.a({x.x, x.y + h}, t) - spec.a({x.x, x.y - h}, t)) / (2 * h);
        return dax * g.x + day * g.y;
    }
    if (spec.diffusion_is_constant) return 0.0;
    Vec2 d;
    if (spec.diffusion_div) {
        d = spec.diffusion_div(x);
    } else {
        double h = 1e-6 * mesh.diameter(e);
        Mat2 xp = spec.diffusion({x.x + h, x.y}), xm = spec.diffusion({x.x - h, x.y});
        Mat2 yp = spec.diffusion({x.x, x.y + h}), ym = spec.diffusion({x.x, x.y - h});
        d.x = (xp.a00 - xm.a00) / (2 * h) + (yp.a10 - ym.a10) / (2 * h);
        d.y = (xp.a01 - xm.a01) / (2 * h) + (yp.a11 - ym.a11) / (2 * h);
    }
    return dot(d, g);
}

bool constant_data(const ProblemSpec& spec) {
    bool coeff = spec.kind == ProblemKind::scalar_nonlinear ? spec.a_is_constant_in_x
                                                            : spec.diffusion_is_constant;
    return coeff && spec.load_is_constant;
}

}  // namespace

double IndicatorField::total_sq() const {
    double s = 0.0;
    for (double x : eta_sq) s += x;
    return s;
}

double IndicatorField::total() const { return std::sqrt(total_sq()); }

IndicatorField indicators(const Mesh& mesh, const ProblemSpec& spec,
                          const DiscreteFunction& v) {
    if (v.mesh_generation != mesh.generation_id)
        throw InputError("indicator input bound to a different mesh generation");

    const int ne = mesh.num_elements();
    IndicatorField field;
    field.mesh_generation = mesh.generation_id;
    field.eta_sq.assign(ne, 0.0);

    std::vector<Vec2> flux(ne);
    for (int e = 0; e < ne; ++e) flux[e] = element_flux(mesh, spec, v, e);

    std::vector<double> jump_sq(ne, 0.0);
    for (int e = 0; e < ne; ++e) {
        for (int k = 0; k < 3; ++k) {
            int nb = mesh.neighbor[e][k];
            if (nb < 0 || nb < e) continue;  // boundary or already handled
            auto [a, b] = edge_vertices(mesh.elements[e], k);
            Vec2 t = mesh.vertices[b] - mesh.vertices[a];
            double len = norm(t);
            Vec2 n = (1.0 / len) * perp(t);
            double j = dot(flux[e] - flux[nb], n);
            double contrib = len * j * j;
            jump_sq[e] += contrib;
            jump_sq[nb] += contrib;
        }
    }

    for (int e = 0; e < ne; ++e) {
        const double area = mesh.area(e);
        double vol_integral;
        if (constant_data(spec)) {
            Vec2 c = mesh.point(e, 0);
            double r = (spec.load ? spec.load(c) : 1.0) + flux_divergence(mesh, spec, v, e, c);
            vol_integral = r * r * area;
        } else {
            auto q = edge_midpoints(mesh, e);
            double s = 0.0;
            for (const auto& x : q) {
                double r = (spec.load ? spec.load(x) : 1.0) +
                           flux_divergence(mesh, spec, v, e, x);
                s += r * r;
            }
            vol_integral = (area / 3.0) * s;
        }
        field.eta_sq[e] = area * vol_integral + std::sqrt(area) * jump_sq[e];
    }
    return field;
}

double subset_sq(const IndicatorField& field, const std::vector<int>& elements) {
    double s = 0.0;
    for (int e : elements) {
        if (e < 0 || e >= static_cast<int>(field.eta_sq.size()))
            throw InputError("indicator subset id out of range");
        s += field.eta_sq[e];
    }
    return s;
}

void write_indicator_csv(const IndicatorField& field, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw InputError("cannot open for writing: " + path);
    std::string buf = "element_id,eta_sq\n";
    char num[32];
    for (std::size_t e = 0; e < field.eta_sq.size(); ++e) {
        buf += std::to_string(e);
        buf += ',';
        auto res = std::to_chars(num, num + sizeof(num), field.eta_sq[e]);
        buf.append(num, res.ptr);
        buf += '\n';
    }
    f << buf;
    if (!f.good()) throw InputError("write failed: " + path);
}

std::pair<double, double> check_stability(const Mesh& coarse, const Mesh& fine,
                                          const RefinementRelation& relation,
                                          const ProblemSpec& spec,
                                          const DiscreteFunction& v_fine,
                                          const DiscreteFunction& w_coarse,
                                          const std::vector<int>& subset_fine) {
    IndicatorField eta_f = indicators(fine, spec, v_fine);
    IndicatorField eta_c = indicators(coarse, spec, w_coarse);
    std::vector<int> subset_coarse;
    subset_coarse.reserve(subset_fine.size());
    for (int id : subset_fine) {
        if (id < 0 || id >= fine.num_elements() || !relation.is_unchanged_fine(id))
            throw InputError("stability subset must consist of unchanged elements");
        subset_coarse.push_back(relation.parent_of[id]);
    }
    double lhs = std::abs(std::sqrt(subset_sq(eta_f, subset_fine)) -
                          std::sqrt(subset_sq(eta_c, subset_coarse)));
    DiscreteFunction w_up = prolongate(relation, coarse, fine, w_coarse);
    return {lhs, energy_dist(fine, spec, v_fine, w_up)};
}

std::pair<double, double> check_reduction(const Mesh& coarse, const Mesh& fine,
                                          const RefinementRelation& relation,
                                          const ProblemSpec& spec,
                                          const DiscreteFunction& v_coarse) {
    DiscreteFunction v_up = prolongate(relation, coarse, fine, v_coarse);
    IndicatorField eta_f = indicators(fine, spec, v_up);
    IndicatorField eta_c = indicators(coarse, spec, v_coarse);
    double fine_sq = 0.0, coarse_sq = 0.0;
    for (int c = 0; c < coarse.num_elements(); ++c) {
        if (relation.children_of[c].size() < 2) continue;
        coarse_sq += eta_c.eta_sq[c];
        for (int child : relation.children_of[c]) fine_sq += eta_f.eta_sq[child];
    }
    return {std::sqrt(fine_sq), kReductionFactor * std::sqrt(coarse_sq)};
}

}  // namespace afem
