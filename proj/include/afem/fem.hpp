#pragma once

#include <functional>
#include <string>
#include <vector>

#include "afem/geometry.hpp"
#include "afem/mesh.hpp"

namespace afem {

enum class ProblemKind { linear_diffusion, scalar_nonlinear };

/// Model problem on H^1_0: either -div(A(x) grad u) = f with symmetric
/// positive definite A, or the quasilinear -div(a(x, |grad u|^2) grad u) = f
/// with a strongly monotone flux. `alpha` and `lipschitz` are the
/// monotonicity and Lipschitz constants of the flux in the problem norm:
/// the A-weighted H^1 seminorm for the linear kind (alpha = lipschitz = 1),
/// the plain H^1 seminorm for the nonlinear kind.
struct ProblemSpec {
    ProblemKind kind = ProblemKind::linear_diffusion;

    std::function<Mat2(Vec2)> diffusion;            // A(x), linear kind
    bool diffusion_is_constant = true;
    /// Columnwise divergence of A, so that div(A grad v) = diffusion_div . grad v
    /// for elementwise-constant grad v. Optional; finite differences otherwise.
    std::function<Vec2(Vec2)> diffusion_div;

    std::function<double(Vec2, double)> a;          // a(x, t), nonlinear kind
    bool a_is_constant_in_x = true;
    std::function<double(Vec2, double)> da_dt;      // d/dt a(x, t)
    std::function<double(Vec2, double)> phi;        // phi(x, t), phi' = a/2; optional

    double alpha = 1.0;
    double lipschitz = 1.0;

    std::function<double(Vec2)> load;               // f
    bool load_is_constant = true;

    /// A = I, f = 1.
    static ProblemSpec linear_poisson();
    /// a(x, t) = 1 + ln(1+t)/(1+t), f = 1, with the known monotonicity and
    /// Lipschitz constants of this flux.
    static ProblemSpec nonlinear_log_diffusion();
};

/// Piecewise linear function given by vertex values; entries at Dirichlet
/// boundary vertices are exactly zero. Bound to one mesh generation.
struct DiscreteFunction {
    long mesh_generation = 0;
    std::vector<double> values;
};

/// Free (interior) degrees of freedom of a mesh.
struct DofMap {
    std::vector<int> vertex_to_free;  // -1 at Dirichlet vertices
    std::vector<int> free_to_vertex;
    int num_free() const { return static_cast<int>(free_to_vertex.size()); }
};

DofMap dof_map(const Mesh& mesh);

DiscreteFunction zero_function(const Mesh& mesh);
DiscreteFunction from_free_values(const Mesh& mesh, const DofMap& dofs,
                                  const std::vector<double>& x);
std::vector<double> free_values(const Mesh& mesh, const DofMap& dofs,
                                const DiscreteFunction& v);

/// Symmetric positive definite matrix in compressed-row storage over the
/// free degrees of freedom.
struct SparseSpdMatrix {
    int n = 0;
    std::vector<int> row_ptr;  // size n + 1
    std::vector<int> col;
    std::vector<double> val;

    std::vector<double> multiply(const std::vector<double>& x) const;
    std::vector<double> diagonal() const;
    std::size_t nonzeros() const { return val.size(); }
};

/// Coordinate-format export for external inspection.
void write_matrix_market(const SparseSpdMatrix& m, const std::string& path);

struct LinearSystem {
    SparseSpdMatrix matrix;
    std::vector<double> rhs;
};

/// Stiffness matrix and load vector on the free dofs. For the linear kind
/// this is the A-weighted form; for the nonlinear kind it is the plain
/// grad-grad form used by the fixed-point solver and the norm. Element
/// integrals are exact for constant data, otherwise an order-2 midpoint rule
/// is used (exact here since P1 gradients are elementwise constant).
LinearSystem assemble_linear(const Mesh& mesh, const ProblemSpec& spec);

/// Residual of the weak form at v: entries <flux(v), grad z_i> - <f, z_i>
/// over the free dofs. Works for both kinds (the linear kind uses A grad v).
std::vector<double> apply_nonlinear(const Mesh& mesh, const ProblemSpec& spec,
                                    const DiscreteFunction& v);

/// Dirichlet energy: integral of phi(x, |grad v|^2) - f v (nonlinear kind)
/// or of (1/2) A grad v . grad v - f v (linear kind).
double energy(const Mesh& mesh, const ProblemSpec& spec, const DiscreteFunction& v);

/// Problem norm ||| v ||| (weighted H^1 seminorm, see ProblemSpec).
double energy_norm(const Mesh& mesh, const ProblemSpec& spec, const DiscreteFunction& v);
double energy_dist(const Mesh& mesh, const ProblemSpec& spec, const DiscreteFunction& v,
                   const DiscreteFunction& w);

/// Exact embedding of a coarse P1 function into the refined space.
DiscreteFunction prolongate(const RefinementRelation& relation, const Mesh& coarse,
                            const Mesh& fine, const DiscreteFunction& v);

/// Gradient of v on one element (constant for P1).
Vec2 element_gradient(const Mesh& mesh, const DiscreteFunction& v, int element);
/// Gradients of the three barycentric basis functions on one element.
std::array<Vec2, 3> basis_gradients(const Mesh& mesh, int element);

}  // namespace afem
