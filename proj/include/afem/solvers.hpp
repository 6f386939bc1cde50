#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "afem/fem.hpp"
#include "afem/mesh.hpp"

namespace afem {

/// How solver progress is measured: square root of the energy difference, or
/// the problem norm of the iterate difference.
enum class DistanceMode { energy, norm };

double solver_distance(const Mesh& mesh, const ProblemSpec& spec, const DiscreteFunction& w,
                       const DiscreteFunction& v, DistanceMode mode);

/// z = P^{-1} r for a symmetric positive definite P.
using Preconditioner = std::function<std::vector<double>(const std::vector<double>&)>;

Preconditioner identity_preconditioner();
Preconditioner jacobi_preconditioner(const SparseSpdMatrix& m);

struct PcgState {
    std::vector<double> x, r, z, p;
    double rz = 0.0;
    int iterations = 0;
    bool converged_exactly = false;  // residual identically zero
};

PcgState pcg_init(const SparseSpdMatrix& m, const Preconditioner& precond,
                  const std::vector<double>& b, std::vector<double> x0);

/// One iteration: one matrix apply, one preconditioner apply, O(n) vector
/// updates. Throws NumericalError if the operators are not positive definite.
void pcg_step(const SparseSpdMatrix& m, const Preconditioner& precond, PcgState& state);

/// Local multilevel diagonal scaling over a refinement hierarchy. Level 0
/// smooths every free vertex of the initial mesh; each finer level smooths
/// only the vertices created by that refinement plus their edge neighbors,
/// with basis corrections carried through the prolongation chain. The
/// condition number of the preconditioned stiffness matrix stays bounded
/// over adaptively refined hierarchies.
class MultilevelPreconditioner {
public:
    MultilevelPreconditioner(const Mesh& initial, const ProblemSpec& spec);

    /// Extend the hierarchy by one refinement step.
    void push_level(const Mesh& coarse, const Mesh& fine, const RefinementRelation& relation);

    /// Apply to a residual on the finest level's free dofs.
    std::vector<double> apply(const std::vector<double>& r) const;
    Preconditioner as_preconditioner() const;

    int num_levels() const { return static_cast<int>(levels_.size()); }

private:
    struct Level {
        int n = 0;                     // free dofs on this level
        std::vector<int> prol_ptr;     // row-compressed prolongation, fine row ->
        std::vector<int> prol_col;     //   up to two coarse dofs with weights
        std::vector<double> prol_val;
        std::vector<int> active;       // dofs smoothed on this level
        std::vector<double> inv_diag;  // 1 / a(z, z), aligned with `active`
    };
    std::vector<Level> levels_;
    const ProblemSpec* spec_;
    long top_generation_ = 0;
};

/// Direct sparse symmetric factorization (reference solves, inner solves).
class SparseFactorization {
public:
    explicit SparseFactorization(const SparseSpdMatrix& m);
    ~SparseFactorization();
    SparseFactorization(SparseFactorization&&) noexcept;
    SparseFactorization& operator=(SparseFactorization&&) noexcept;

    std::vector<double> solve(const std::vector<double>& b) const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Damped fixed-point linearization of the strongly monotone problem
/// (Zarantonello iteration). Each step solves one symmetric Poisson-type
/// system, assembled and factorized once per mesh:
///   <grad u_next, grad w> = <grad v, grad w> - (alpha/L^2) (<flux(v), grad w> - <f, w>).
/// With damping alpha/L^2 the map contracts with factor sqrt(1 - alpha^2/L^2)
/// in the H^1 seminorm.
class ZarantonelloSolver {
public:
    ZarantonelloSolver(const Mesh& mesh, const ProblemSpec& spec);

    DiscreteFunction step(const DiscreteFunction& v) const;

    const LinearSystem& system() const { return sys_; }
    const DofMap& dofs() const { return dofs_; }

private:
    const Mesh& mesh_;
    const ProblemSpec& spec_;
    DofMap dofs_;
    LinearSystem sys_;
    std::unique_ptr<SparseFactorization> fact_;
};

/// One-off step without caching.
DiscreteFunction zarantonello_step(const Mesh& mesh, const ProblemSpec& spec,
                                   const DiscreteFunction& v);

/// Exact discrete solution of the linear problem by direct factorization.
DiscreteFunction solve_linear_direct(const Mesh& mesh, const ProblemSpec& spec);

/// Fixed-point iteration run until the H^1 increment drops below `tol`.
DiscreteFunction solve_nonlinear_picard(const Mesh& mesh, const ProblemSpec& spec,
                                        double tol, int max_iterations = 20000);

}  // namespace afem
