#pragma once

#include <string>
#include <utility>
#include <vector>

#include "afem/fem.hpp"
#include "afem/mesh.hpp"

namespace afem {

/// Squared residual error indicators, one per element:
///   eta(T)^2 = |T| * || f + div(flux(v)) ||^2_{L2(T)}
///            + |T|^{1/2} * || [flux(v) . n] ||^2_{L2(boundary of T inside the domain)}
/// where flux(v) = A grad v resp. a(x, |grad v|^2) grad v. Interior edges
/// contribute to both adjacent elements, each with its own area weight.
struct IndicatorField {
    long mesh_generation = 0;
    std::vector<double> eta_sq;

    double total_sq() const;
    /// eta = sqrt(sum of eta_sq).
    double total() const;
};

IndicatorField indicators(const Mesh& mesh, const ProblemSpec& spec,
                          const DiscreteFunction& v);

/// Sum of eta_sq over a subset of element ids.
double subset_sq(const IndicatorField& field, const std::vector<int>& elements);

/// CSV export, columns `element_id,eta_sq`.
void write_indicator_csv(const IndicatorField& field, const std::string& path);

/// Reduction factor of the estimator on bisected elements (on eta, not
/// eta^2): each bisection halves the area weight.
inline const double kReductionFactor = 0.8408964152537145;  // 2^(-1/4)

/// Stability comparison on non-refined elements. `subset_fine` lists fine
/// element ids carried over unchanged; returns
///   ( |eta_fine(S, v_fine) - eta_coarse(S, w_coarse)| , ||| v_fine - w_coarse ||| ).
/// The quotient of the two is the stability constant sample.
std::pair<double, double> check_stability(const Mesh& coarse, const Mesh& fine,
                                          const RefinementRelation& relation,
                                          const ProblemSpec& spec,
                                          const DiscreteFunction& v_fine,
                                          const DiscreteFunction& w_coarse,
                                          const std::vector<int>& subset_fine);

/// Reduction comparison on refined elements for the same function (the
/// coarse v embedded into the fine space). Returns
///   ( eta_fine(refined zone, v) , kReductionFactor * eta_coarse(refined zone, v) );
/// first <= second for elementwise-constant diffusion.
std::pair<double, double> check_reduction(const Mesh& coarse, const Mesh& fine,
                                          const RefinementRelation& relation,
                                          const ProblemSpec& spec,
                                          const DiscreteFunction& v_coarse);

}  // namespace afem
