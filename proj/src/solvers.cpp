#include "afem/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "afem/errors.hpp"

namespace afem {

double solver_distance(const Mesh& mesh, const ProblemSpec& spec, const DiscreteFunction& w,
                       const DiscreteFunction& v, DistanceMode mode) {
    if (mode == DistanceMode::energy)
        return std::sqrt(std::abs(energy(mesh, spec, v) - energy(mesh, spec, w)));
    return energy_dist(mesh, spec, w, v);
}

Preconditioner identity_preconditioner() {
    return [](const std::vector<double>& r) { return r; };
}

Preconditioner jacobi_preconditioner(const SparseSpdMatrix& m) {
    std::vector<double> d = m.diagonal();
    for (double& x : d) {
        if (x <= 0.0) throw NumericalError("non-positive diagonal in Jacobi preconditioner");
        x = 1.0 / x;
    }
    return [d = std::move(d)](const std::vector<double>& r) {
        std::vector<double> z(r.size());
        for (std::size_t i = 0; i < r.size(); ++i) z[i] = d[i] * r[i];
        return z;
    };
}

PcgState pcg_init(const SparseSpdMatrix& m, const Preconditioner& precond,
                  const std::vector<double>& b, std::vector<double> x0) {
    if (static_cast<int>(b.size()) != m.n || x0.size() != b.size())
        throw InputError("pcg dimensions do not match");
    PcgState s;
    s.x = std::move(x0);
    std::vector<double> mx = m.multiply(s.x);
    s.r.resize(m.n);
    for (int i = 0; i < m.n; ++i) s.r[i] = b[i] - mx[i];
    bool zero = std::all_of(s.r.begin(), s.r.end(), [](double v) { return v == 0.0; });
    if (zero) {
        s.converged_exactly = true;
        s.z.assign(m.n, 0.0);
        s.p.assign(m.n, 0.0);
        return s;
    }
    s.z = precond(s.r);
    s.p = s.z;
    s.rz = 0.0;
    for (int i = 0; i < m.n; ++i) s.rz += s.r[i] * s.z[i];
    if (s.rz <= 0.0) throw NumericalError("preconditioner is not positive definite");
    return s;
}

void pcg_step(const SparseSpdMatrix& m, const Preconditioner& precond, PcgState& s) {
    if (s.converged_exactly || m.n == 0) return;
    std::vector<double> q = m.multiply(s.p);
    double pq = 0.0;
    for (int i = 0; i < m.n; ++i) pq += s.p[i] * q[i];
    if (pq <= 0.0) throw NumericalError("matrix is not positive definite");
    double alpha = s.rz / pq;
    for (int i = 0; i < m.n; ++i) {
        s.x[i] += alpha * s.p[i];
        s.r[i] -= alpha * q[i];
    }
    ++s.iterations;
    bool zero = std::all_of(s.r.begin(), s.r.end(), [](double v) { return v == 0.0; });
    if (zero) {
        s.converged_exactly = true;
        return;
    }
    s.z = precond(s.r);
    double rz_new = 0.0;
    for (int i = 0; i < m.n; ++i) rz_new += s.r[i] * s.z[i];
    if (rz_new < 0.0) throw NumericalError("preconditioner is not positive definite");
    double beta = rz_new / s.rz;
    for (int i = 0; i < m.n; ++i) s.p[i] = s.z[i] + beta * s.p[i];
    s.rz = rz_new;
}

MultilevelPreconditioner::MultilevelPreconditioner(const Mesh& initial,
                                                   const ProblemSpec& spec)
    : spec_(&spec), top_generation_(initial.generation_id) {
    DofMap dofs = dof_map(initial);
    Level base;
    base.n = dofs.num_free();
    base.active.resize(base.n);
    for (int i = 0; i < base.n; ++i) base.active[i] = i;
    std::vector<double> diag = assemble_linear(initial, spec).matrix.diagonal();
    base.inv_diag.resize(base.n);
    for (int i = 0; i < base.n; ++i) {
        if (diag[i] <= 0.0) throw NumericalError("non-positive stiffness diagonal");
        base.inv_diag[i] = 1.0 / diag[i];
    }
    levels_.push_back(std::move(base));
}

void MultilevelPreconditioner::push_level(const Mesh& coarse, const Mesh& fine,
                                          const RefinementRelation& relation) {
    if (coarse.generation_id != top_generation_)
        throw InputError("hierarchy must be extended from its finest mesh");
    DofMap cd = dof_map(coarse);
    DofMap fd = dof_map(fine);

    std::unordered_map<int, std::pair<int, int>> parents;
    parents.reserve(relation.new_vertices.size());
    for (const auto& [id, a, b] : relation.new_vertices) parents.emplace(id, std::make_pair(a, b));

    Level lvl;
    lvl.n = fd.num_free();
    lvl.prol_ptr.reserve(lvl.n + 1);
    lvl.prol_ptr.push_back(0);
    for (int i = 0; i < lvl.n; ++i) {
        int vert = fd.free_to_vertex[i];
        if (vert < relation.coarse_vertex_count) {
            int c = cd.vertex_to_free[vert];
            if (c < 0) throw NumericalError("free vertex became constrained on refinement");
            lvl.prol_col.push_back(c);
            lvl.prol_val.push_back(1.0);
        } else {
            auto [a, b] = parents.at(vert);
            for (int parent : {a, b}) {
                int c = cd.vertex_to_free[parent];
                if (c >= 0) {
                    lvl.prol_col.push_back(c);
                    lvl.prol_val.push_back(0.5);
                }
            }
        }
        lvl.prol_ptr.push_back(static_cast<int>(lvl.prol_col.size()));
    }

    // Smoothing set: new vertices plus every vertex sharing an edge with one.
    std::vector<char> is_active(fine.num_vertices(), 0);
    for (const auto& [id, a, b] : relation.new_vertices) is_active[id] = 1;
    std::vector<char> grown = is_active;
    for (const auto& el : fine.elements) {
        for (int k = 0; k < 3; ++k) {
            auto [a, b] = edge_vertices(el, k);
            if (is_active[a]) grown[b] = 1;
            if (is_active[b]) grown[a] = 1;
        }
    }
    std::vector<double> diag = assemble_linear(fine, *spec_).matrix.diagonal();
    for (int i = 0; i < lvl.n; ++i) {
        if (grown[fd.free_to_vertex[i]]) {
            if (diag[i] <= 0.0) throw NumericalError("non-positive stiffness diagonal");
            lvl.active.push_back(i);
            lvl.inv_diag.push_back(1.0 / diag[i]);
        }
    }
    levels_.push_back(std::move(lvl));
    top_generation_ = fine.generation_id;
}

std::vector<double> MultilevelPreconditioner::apply(const std::vector<double>& r) const {
    const int top = static_cast<int>(levels_.size()) - 1;
    if (static_cast<int>(r.size()) != levels_[top].n)
        throw InputError("residual size does not match the finest level");

    std::vector<std::vector<double>> res(levels_.size());
    res[top] = r;
    for (int l = top; l >= 1; --l) {
        const Level& lvl = levels_[l];
        std::vector<double> down(levels_[l - 1].n, 0.0);
        for (int i = 0; i < lvl.n; ++i)
            for (int k = lvl.prol_ptr[i]; k < lvl.prol_ptr[i + 1]; ++k)
                down[lvl.prol_col[k]] += lvl.prol_val[k] * res[l][i];
        res[l - 1] = std::move(down);
    }

    std::vector<double> s(levels_[0].n, 0.0);
    for (std::size_t k = 0; k < levels_[0].active.size(); ++k)
        s[levels_[0].active[k]] = levels_[0].inv_diag[k] * res[0][levels_[0].active[k]];
    for (int l = 1; l <= top; ++l) {
        const Level& lvl = levels_[l];
        std::vector<double> up(lvl.n, 0.0);
        for (int i = 0; i < lvl.n; ++i) {
            double v = 0.0;
            for (int k = lvl.prol_ptr[i]; k < lvl.prol_ptr[i + 1]; ++k)
                v += lvl.prol_val[k] * s[lvl.prol_col[k]];
            up[i] = v;
        }
        for (std::size_t k = 0; k < lvl.active.size(); ++k)
            up[lvl.active[k]] += lvl.inv_diag[k] * res[l][lvl.active[k]];
        s = std::move(up);
    }
    return s;
}

Preconditioner MultilevelPreconditioner::as_preconditioner() const {
    return [this](const std::vector<double>& r) { return apply(r); };
}

struct SparseFactorization::Impl {
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
    int n = 0;
};

SparseFactorization::SparseFactorization(const SparseSpdMatrix& m)
    : impl_(std::make_unique<Impl>()) {
    impl_->n = m.n;
    if (m.n == 0) return;
    Eigen::SparseMatrix<double> em(m.n, m.n);
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(m.val.size());
    for (int i = 0; i < m.n; ++i)
        for (int k = m.row_ptr[i]; k < m.row_ptr[i + 1]; ++k)
            trip.emplace_back(i, m.col[k], m.val[k]);
    em.setFromTriplets(trip.begin(), trip.end());
    impl_->ldlt.compute(em);
    if (impl_->ldlt.info() != Eigen::Success)
        throw NumericalError("sparse factorization failed");
}

SparseFactorization::~SparseFactorization() = default;
SparseFactorization::SparseFactorization(SparseFactorization&&) noexcept = default;
SparseFactorization& SparseFactorization::operator=(SparseFactorization&&) noexcept = default;

std::vector<double> SparseFactorization::solve(const std::vector<double>& b) const {
    if (static_cast<int>(b.size()) != impl_->n)
        throw InputError("factorization dimension mismatch");
    if (impl_->n == 0) return {};
    Eigen::VectorXd eb = Eigen::Map<const Eigen::VectorXd>(b.data(), b.size());
    Eigen::VectorXd ex = impl_->ldlt.solve(eb);
    if (impl_->ldlt.info() != Eigen::Success) throw NumericalError("sparse solve failed");
    return std::vector<double>(ex.data(), ex.data() + ex.size());
}

ZarantonelloSolver::ZarantonelloSolver(const Mesh& mesh, const ProblemSpec& spec)
    : mesh_(mesh), spec_(spec), dofs_(dof_map(mesh)), sys_(assemble_linear(mesh, spec)) {
    fact_ = std::make_unique<SparseFactorization>(sys_.matrix);
}

DiscreteFunction ZarantonelloSolver::step(const DiscreteFunction& v) const {
    const double damping = spec_.alpha / (spec_.lipschitz * spec_.lipschitz);
    std::vector<double> y = free_values(mesh_, dofs_, v);
    if (y.empty()) return v;
    std::vector<double> residual = apply_nonlinear(mesh_, spec_, v);
    std::vector<double> rhs = sys_.matrix.multiply(y);
    for (std::size_t i = 0; i < rhs.size(); ++i) rhs[i] -= damping * residual[i];
    return from_free_values(mesh_, dofs_, fact_->solve(rhs));
}

DiscreteFunction zarantonello_step(const Mesh& mesh, const ProblemSpec& spec,
                                   const DiscreteFunction& v) {
    return ZarantonelloSolver(mesh, spec).step(v);
}

DiscreteFunction solve_linear_direct(const Mesh& mesh, const ProblemSpec& spec) {
    DofMap dofs = dof_map(mesh);
    LinearSystem sys = assemble_linear(mesh, spec);
    SparseFactorization fact(sys.matrix);
    return from_free_values(mesh, dofs, fact.solve(sys.rhs));
}

DiscreteFunction solve_nonlinear_picard(const Mesh& mesh, const ProblemSpec& spec,
                                        double tol, int max_iterations) {
    ZarantonelloSolver solver(mesh, spec);
    DiscreteFunction u = zero_function(mesh);
    for (int it = 0; it < max_iterations; ++it) {
        DiscreteFunction next = solver.step(u);
        double inc = energy_dist(mesh, spec, next, u);
        u = std::move(next);
        if (inc <= tol) return u;
    }
    throw NumericalError("fixed-point iteration did not reach the requested tolerance");
}

}  // namespace afem
