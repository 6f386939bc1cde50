#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include <afem/estimator.hpp>
#include <afem/fem.hpp>
#include <afem/mesh.hpp>
#include <afem/validation.hpp>

#include "support/oracles.hpp"

using namespace afem;
using oracles::random_function;

TEST_CASE("indicator of the zero function is a pure volume term") {
    Mesh sq = make_initial_mesh("unit_square");
    ProblemSpec spec = ProblemSpec::linear_poisson();
    IndicatorField field = indicators(sq, spec, zero_function(sq));
    REQUIRE(field.eta_sq.size() == 2);
    // Per element: |T| * ||f||^2_{L2(T)} = (1/2) * (1/2) = 1/4, no jumps.
    CHECK(field.eta_sq[0] == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(field.eta_sq[1] == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(field.total_sq() == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(field.total() == doctest::Approx(std::sqrt(0.5)).epsilon(1e-14));

    // Zero load and zero function: every indicator vanishes identically.
    ProblemSpec quiet = spec;
    quiet.load = [](Vec2) { return 0.0; };
    IndicatorField zero = indicators(sq, quiet, zero_function(sq));
    for (double v : zero.eta_sq) CHECK(v == 0.0);
    CHECK(zero.total() == 0.0);
}

TEST_CASE("indicator on the one-dof patch matches the hand computation") {
    Mesh patch = oracles::crisscross_square();
    ProblemSpec spec = ProblemSpec::linear_poisson();

    // u = c at the center: gradients rotate by 90 degrees between the four
    // triangles, so each spoke edge carries a constant flux jump of 2*sqrt(2)*c
    // and squared edge norm 4*sqrt(2)*c^2. Two spokes per element and area
    // weight |T|^{1/2} = 1/2 give eta^2 = 1/16 + 4*sqrt(2)*c^2.
    const double c = 1.0 / 12.0;
    DiscreteFunction u = zero_function(patch);
    u.values[4] = c;
    IndicatorField field = indicators(patch, spec, u);
    REQUIRE(field.eta_sq.size() == 4);
    const double expected = 1.0 / 16.0 + 4.0 * std::sqrt(2.0) * c * c;
    for (double v : field.eta_sq) CHECK(v == doctest::Approx(expected).epsilon(1e-13));
    CHECK(subset_sq(field, {0, 2}) ==
          doctest::Approx(2 * expected).epsilon(1e-13));
    CHECK(field.total_sq() == doctest::Approx(4 * expected).epsilon(1e-13));
}

TEST_CASE("globally affine functions produce no jump contributions") {
    Mesh mesh = make_initial_mesh("l_shape");
    for (int r = 0; r < 2; ++r) {
        std::vector<int> all(mesh.num_elements());
        for (int i = 0; i < mesh.num_elements(); ++i) all[i] = i;
        mesh = refine_nvb(mesh, all).first;
    }
    ProblemSpec spec = ProblemSpec::linear_poisson();

    DiscreteFunction v;
    v.mesh_generation = mesh.generation_id;
    v.values.resize(mesh.num_vertices());
    for (int i = 0; i < mesh.num_vertices(); ++i)
        v.values[i] = 0.7 + 1.3 * mesh.vertices[i].x - 0.4 * mesh.vertices[i].y;

    IndicatorField field = indicators(mesh, spec, v);
    for (int e = 0; e < mesh.num_elements(); ++e) {
        double a = mesh.area(e);
        CHECK(field.eta_sq[e] == doctest::Approx(a * a).epsilon(1e-12));
    }
}

TEST_CASE("reduction factor constant") {
    CHECK(kReductionFactor == 0.8408964152537145);
    CHECK(kReductionFactor == doctest::Approx(std::pow(2.0, -0.25)).epsilon(1e-15));
}

TEST_CASE("stability and reduction hold on refined pairs") {
    Rng rng(3);
    Mesh coarse = make_initial_mesh("l_shape");
    for (int r = 0; r < 3; ++r) coarse = random_refinement(coarse, rng, 0.4);
    ProblemSpec spec = ProblemSpec::linear_poisson();
    DofMap dofs = dof_map(coarse);

    DiscreteFunction w = random_function(coarse, dofs, rng, 1.0);
    RefinementRelation rel;
    Mesh fine = random_refinement(coarse, rng, 0.3, &rel);
    DiscreteFunction v = prolongate(rel, coarse, fine, w);

    std::vector<int> unchanged_fine;
    for (auto [c, f] : rel.unchanged) unchanged_fine.push_back(f);

    // Same function on both meshes: the stability difference degenerates to
    // roundoff while the distance is exactly zero.
    auto [lhs, dist] = check_stability(coarse, fine, rel, spec, v, w, unchanged_fine);
    CHECK(dist == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(lhs <= 1e-10);

    // Embedded coarse function: the estimator contracts on the refined zone.
    auto [fine_zone, bound] = check_reduction(coarse, fine, rel, spec, w);
    CHECK(fine_zone <= bound * (1.0 + 1e-10));

    // Two-phase calibration over random pairs for both problem kinds.
    StabilityReport lin_rep =
        check_stability_bound(ProblemSpec::linear_poisson(), "l_shape", 40, 40, rng);
    CHECK(lin_rep.pass);
    StabilityReport nl_rep = check_stability_bound(ProblemSpec::nonlinear_log_diffusion(),
                                                   "l_shape", 40, 40, rng);
    CHECK(nl_rep.pass);
    ReductionReport red =
        check_reduction_bound(ProblemSpec::nonlinear_log_diffusion(), "z_shape", 20, rng);
    CHECK(red.pass);
    CHECK(red.max_ratio <= 1.0 + 1e-10);
}

TEST_CASE("indicator csv export is deterministic") {
    IndicatorField field;
    field.eta_sq = {0.25, 0.125, 0.0};
    std::string path = "/tmp/afem_test_indicators.csv";
    write_indicator_csv(field, path);
    CHECK(oracles::read_file(path) ==
          "element_id,eta_sq\n"
          "0,0.25\n"
          "1,0.125\n"
          "2,0\n");
}
