#include "afem/fem.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>

#include "afem/errors.hpp"

namespace afem {

namespace {

void check_bound(const Mesh& mesh, const DiscreteFunction& v) {
    if (v.mesh_generation != mesh.generation_id)
        throw InputError("discrete function bound to a different mesh generation");
    if (v.values.size() != mesh.vertices.size())
        throw InputError("discrete function has wrong length");
}

/// Midpoints of the three element edges; an order-2 quadrature with equal
/// weights |T|/3.
std::array<Vec2, 3> edge_midpoints(const Mesh& mesh, int e) {
    Vec2 p0 = mesh.point(e, 0), p1 = mesh.point(e, 1), p2 = mesh.point(e, 2);
    return {midpoint(p1, p2), midpoint(p2, p0), midpoint(p0, p1)};
}

Mat2 diffusion_at(const ProblemSpec& spec, Vec2 x) {
    return spec.diffusion ? spec.diffusion(x) : Mat2{};
}

/// Effective diffusion matrix on one element (exact for constant A).
Mat2 element_diffusion(const Mesh& mesh, const ProblemSpec& spec, int e) {
    if (spec.diffusion_is_constant || !spec.diffusion)
        return diffusion_at(spec, mesh.point(e, 0));
    auto q = edge_midpoints(mesh, e);
    Mat2 m0 = spec.diffusion(q[0]), m1 = spec.diffusion(q[1]), m2 = spec.diffusion(q[2]);
    const double w = 1.0 / 3.0;
    return {w * (m0.a00 + m1.a00 + m2.a00), w * (m0.a01 + m1.a01 + m2.a01),
            w * (m0.a10 + m1.a10 + m2.a10), w * (m0.a11 + m1.a11 + m2.a11)};
}

double load_at(const ProblemSpec& spec, Vec2 x) { return spec.load ? spec.load(x) : 1.0; }

/// phi(x, t) with phi' = a/2; falls back to Gauss-Legendre on [0, t] when no
/// closed form is given.
double phi_at(const ProblemSpec& spec, Vec2 x, double t) {
    if (spec.phi) return spec.phi(x, t);
    static const double gl_x[12] = {0.00921968287664038, 0.04794137181476257,
                                    0.11504866290284765, 0.20634102285669128,
                                    0.31608425050090994, 0.43738329574426554,
                                    0.56261670425573446, 0.68391574949909006,
                                    0.79365897714330872, 0.88495133709715235,
                                    0.95205862818523743, 0.99078031712335962};
    static const double gl_w[12] = {0.02358766819325591, 0.05346966299765922,
                                    0.08003916427167311, 0.10158371336153296,
                                    0.11674626826917740, 0.12457352290670139,
                                    0.12457352290670139, 0.11674626826917740,
                                    0.10158371336153296, 0.08003916427167311,
                                    0.05346966299765922, 0.02358766819325591};
    double s = 0.0;
    for (int i = 0; i < 12; ++i) s += gl_w[i] * spec.a(x, t * gl_x[i]);
    return 0.5 * t * s;
}

}  // namespace

ProblemSpec ProblemSpec::linear_poisson() {
    ProblemSpec s;
    s.kind = ProblemKind::linear_diffusion;
    s.diffusion = [](Vec2) { return Mat2{}; };
    s.diffusion_is_constant = true;
    s.alpha = 1.0;
    s.lipschitz = 1.0;
    s.load = [](Vec2) { return 1.0; };
    s.load_is_constant = true;
    return s;
}

ProblemSpec ProblemSpec::nonlinear_log_diffusion() {
    ProblemSpec s;
    s.kind = ProblemKind::scalar_nonlinear;
    s.a = [](Vec2, double t) { return 1.0 + std::log1p(t) / (1.0 + t); };
    s.da_dt = [](Vec2, double t) {
        double u = 1.0 + t;
        return (1.0 - std::log1p(t)) / (u * u);
    };
    s.phi = [](Vec2, double t) {
        double l = std::log1p(t);
        return 0.5 * (t + 0.5 * l * l);
    };
    // Extrema of a(t) + 2 t a'(t), the directional derivative bounds of the
    // flux; see the verify-constants command.
    s.alpha = 0.9582898017;
    s.lipschitz = 1.542343818;
    s.load = [](Vec2) { return 1.0; };
    s.load_is_constant = true;
    return s;
}

DofMap dof_map(const Mesh& mesh) {
    DofMap d;
    d.vertex_to_free.assign(mesh.num_vertices(), -1);
    for (int v = 0; v < mesh.num_vertices(); ++v) {
        if (!mesh.vertex_on_boundary[v]) {
            d.vertex_to_free[v] = static_cast<int>(d.free_to_vertex.size());
            d.free_to_vertex.push_back(v);
        }
    }
    return d;
}

DiscreteFunction zero_function(const Mesh& mesh) {
    return {mesh.generation_id, std::vector<double>(mesh.vertices.size(), 0.0)};
}

DiscreteFunction from_free_values(const Mesh& mesh, const DofMap& dofs,
                                  const std::vector<double>& x) {
    if (static_cast<int>(x.size()) != dofs.num_free())
        throw InputError("free-value vector has wrong length");
    DiscreteFunction v = zero_function(mesh);
    for (int i = 0; i < dofs.num_free(); ++i) v.values[dofs.free_to_vertex[i]] = x[i];
    return v;
}

std::vector<double> free_values(const Mesh& mesh, const DofMap& dofs,
                                const DiscreteFunction& v) {
    check_bound(mesh, v);
    std::vector<double> x(dofs.num_free());
    for (int i = 0; i < dofs.num_free(); ++i) x[i] = v.values[dofs.free_to_vertex[i]];
    return x;
}

std::vector<double> SparseSpdMatrix::multiply(const std::vector<double>& x) const {
    std::vector<double> y(n, 0.0);
    for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int k = row_ptr[i]; k < row_ptr[i + 1]; ++k) s += val[k] * x[col[k]];
        y[i] = s;
    }
    return y;
}

std::vector<double> SparseSpdMatrix::diagonal() const {
    std::vector<double> d(n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int k = row_ptr[i]; k < row_ptr[i + 1]; ++k)
            if (col[k] == i) d[i] = val[k];
    return d;
}

void write_matrix_market(const SparseSpdMatrix& m, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw InputError("cannot open for writing: " + path);
    f << "%%MatrixMarket matrix coordinate real symmetric\n";
    std::size_t nnz_lower = 0;
    for (int i = 0; i < m.n; ++i)
        for (int k = m.row_ptr[i]; k < m.row_ptr[i + 1]; ++k)
            if (m.col[k] <= i) ++nnz_lower;
    f << m.n << " " << m.n << " " << nnz_lower << "\n";
    char buf[32];
    for (int i = 0; i < m.n; ++i) {
        for (int k = m.row_ptr[i]; k < m.row_ptr[i + 1]; ++k) {
            if (m.col[k] > i) continue;
            auto res = std::to_chars(buf, buf + sizeof(buf), m.val[k]);
            f << (i + 1) << " " << (m.col[k] + 1) << " "
              << std::string_view(buf, res.ptr - buf) << "\n";
        }
    }
    if (!f.good()) throw InputError("write failed: " + path);
}

std::array<Vec2, 3> basis_gradients(const Mesh& mesh, int element) {
    Vec2 p0 = mesh.point(element, 0), p1 = mesh.point(element, 1), p2 = mesh.point(element, 2);
    double inv2a = 1.0 / cross(p1 - p0, p2 - p0);
    return {inv2a * perp(p2 - p1), inv2a * perp(p0 - p2), inv2a * perp(p1 - p0)};
}

Vec2 element_gradient(const Mesh& mesh, const DiscreteFunction& v, int element) {
    auto g = basis_gradients(mesh, element);
    const auto& ids = mesh.elements[element].v;
    Vec2 s{0.0, 0.0};
    for (int k = 0; k < 3; ++k) s = s + v.values[ids[k]] * g[k];
    return s;
}

LinearSystem assemble_linear(const Mesh& mesh, const ProblemSpec& spec) {
    DofMap dofs = dof_map(mesh);
    const int n = dofs.num_free();
    LinearSystem sys;
    sys.rhs.assign(n, 0.0);

    // Triplet pass with a row-linked structure: count, then fill.
    std::vector<std::array<int, 3>> free_ids(mesh.num_elements());
    std::vector<int> row_count(n, 0);
    for (int e = 0; e < mesh.num_elements(); ++e) {
        for (int k = 0; k < 3; ++k)
            free_ids[e][k] = dofs.vertex_to_free[mesh.elements[e].v[k]];
        for (int i = 0; i < 3; ++i)
            if (free_ids[e][i] >= 0)
                for (int j = 0; j < 3; ++j)
                    if (free_ids[e][j] >= 0) ++row_count[free_ids[e][i]];
    }
    std::vector<int> start(n + 1, 0);
    for (int i = 0; i < n; ++i) start[i + 1] = start[i] + row_count[i];
    std::vector<int> tcol(start[n]);
    std::vector<double> tval(start[n]);
    std::vector<int> cursor(start.begin(), start.end() - 1);

    const bool weighted = spec.kind == ProblemKind::linear_diffusion;
    for (int e = 0; e < mesh.num_elements(); ++e) {
        auto grads = basis_gradients(mesh, e);
        const double area = mesh.area(e);
        Mat2 A = weighted ? element_diffusion(mesh, spec, e) : Mat2{};
        std::array<Vec2, 3> Ag;
        for (int j = 0; j < 3; ++j) Ag[j] = apply(A, grads[j]);

        auto q = edge_midpoints(mesh, e);
        std::array<double, 3> fq;
        for (int k = 0; k < 3; ++k) fq[k] = load_at(spec, q[k]);

        for (int i = 0; i < 3; ++i) {
            int fi = free_ids[e][i];
            if (fi < 0) continue;
            // quadrature point k sits on the edge opposite vertex k
            double b = (area / 3.0) * 0.5 * (fq[(i + 1) % 3] + fq[(i + 2) % 3]);
            sys.rhs[fi] += b;
            for (int j = 0; j < 3; ++j) {
                int fj = free_ids[e][j];
                if (fj < 0) continue;
                tcol[cursor[fi]] = fj;
                tval[cursor[fi]] = area * dot(grads[i], Ag[j]);
                ++cursor[fi];
            }
        }
    }

    // Merge duplicate column entries per row.
    SparseSpdMatrix& M = sys.matrix;
    M.n = n;
    M.row_ptr.assign(n + 1, 0);
    for (int i = 0; i < n; ++i) {
        std::vector<std::pair<int, double>> row;
        row.reserve(row_count[i]);
        for (int k = start[i]; k < start[i] + row_count[i]; ++k)
            row.emplace_back(tcol[k], tval[k]);
        std::sort(row.begin(), row.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
        for (const auto& [c, x] : row) {
            if (static_cast<int>(M.col.size()) > M.row_ptr[i] && M.col.back() == c) {
                M.val.back() += x;
            } else {
                M.col.push_back(c);
                M.val.push_back(x);
            }
        }
        M.row_ptr[i + 1] = static_cast<int>(M.col.size());
    }
    return sys;
}

std::vector<double> apply_nonlinear(const Mesh& mesh, const ProblemSpec& spec,
                                    const DiscreteFunction& v) {
    check_bound(mesh, v);
    DofMap dofs = dof_map(mesh);
    std::vector<double> r(dofs.num_free(), 0.0);
    for (int e = 0; e < mesh.num_elements(); ++e) {
        auto grads = basis_gradients(mesh, e);
        const double area = mesh.area(e);
        Vec2 g = element_gradient(mesh, v, e);
        auto q = edge_midpoints(mesh, e);

        Vec2 flux{0.0, 0.0};
        if (spec.kind == ProblemKind::scalar_nonlinear) {
            double t = dot(g, g);
            double coeff = (spec.a(q[0], t) + spec.a(q[1], t) + spec.a(q[2], t)) / 3.0;
            flux = coeff * g;
        } else {
            flux = apply(element_diffusion(mesh, spec, e), g);
        }

        std::array<double, 3> fq;
        for (int k = 0; k < 3; ++k) fq[k] = load_at(spec, q[k]);
        for (int i = 0; i < 3; ++i) {
            int fi = dofs.vertex_to_free[mesh.elements[e].v[i]];
            if (fi < 0) continue;
            double b = (area / 3.0) * 0.5 * (fq[(i + 1) % 3] + fq[(i + 2) % 3]);
            r[fi] += area * dot(flux, grads[i]) - b;
        }
    }
    return r;
}

double energy(const Mesh& mesh, const ProblemSpec& spec, const DiscreteFunction& v) {
    check_bound(mesh, v);
    double total = 0.0;
    for (int e = 0; e < mesh.num_elements(); ++e) {
        const double area = mesh.area(e);
        Vec2 g = element_gradient(mesh, v, e);
        auto q = edge_midpoints(mesh, e);
        const auto& ids = mesh.elements[e].v;

        double bulk = 0.0;
        if (spec.kind == ProblemKind::scalar_nonlinear) {
            double t = dot(g, g);
            bulk = (phi_at(spec, q[0], t) + phi_at(spec, q[1], t) + phi_at(spec, q[2], t)) / 3.0;
        } else {
            Mat2 A = element_diffusion(mesh, spec, e);
            bulk = 0.5 * dot(g, apply(A, g));
        }

        double load_term = 0.0;
        for (int k = 0; k < 3; ++k) {
            double vq = 0.5 * (v.values[ids[(k + 1) % 3]] + v.values[ids[(k + 2) % 3]]);
            load_term += load_at(spec, q[k]) * vq;
        }
        total += area * bulk - (area / 3.0) * load_term;
    }
    return total;
}

namespace {

double weighted_h1_sq(const Mesh& mesh, const ProblemSpec& spec,
                      const std::vector<double>& values) {
    double s = 0.0;
    for (int e = 0; e < mesh.num_elements(); ++e) {
        auto grads = basis_gradients(mesh, e);
        const auto& ids = mesh.elements[e].v;
        Vec2 g{0.0, 0.0};
        for (int k = 0; k < 3; ++k) g = g + values[ids[k]] * grads[k];
        if (spec.kind == ProblemKind::linear_diffusion) {
            Mat2 A = element_diffusion(mesh, spec, e);
            s += mesh.area(e) * dot(g, apply(A, g));
        } else {
            s += mesh.area(e) * dot(g, g);
        }
    }
    return s;
}

}  // namespace

double energy_norm(const Mesh& mesh, const ProblemSpec& spec, const DiscreteFunction& v) {
    check_bound(mesh, v);
    return std::sqrt(weighted_h1_sq(mesh, spec, v.values));
}

double energy_dist(const Mesh& mesh, const ProblemSpec& spec, const DiscreteFunction& v,
                   const DiscreteFunction& w) {
    check_bound(mesh, v);
    check_bound(mesh, w);
    std::vector<double> d(v.values.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = v.values[i] - w.values[i];
    return std::sqrt(weighted_h1_sq(mesh, spec, d));
}

DiscreteFunction prolongate(const RefinementRelation& relation, const Mesh& coarse,
                            const Mesh& fine, const DiscreteFunction& v) {
    check_bound(coarse, v);
    if (relation.coarse_vertex_count != coarse.num_vertices() ||
        relation.parent_of.size() != fine.elements.size())
        throw InputError("refinement relation does not match the given meshes");
    DiscreteFunction out;
    out.mesh_generation = fine.generation_id;
    out.values.assign(fine.vertices.size(), 0.0);
    std::copy(v.values.begin(), v.values.end(), out.values.begin());
    for (const auto& [id, a, b] : relation.new_vertices)
        out.values[id] = 0.5 * (out.values[a] + out.values[b]);
    return out;
}

}  // namespace afem
