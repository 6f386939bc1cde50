#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include <afem/adaptivity.hpp>
#include <afem/errors.hpp>
#include <afem/fem.hpp>
#include <afem/mesh.hpp>
#include <afem/validation.hpp>

#include "support/oracles.hpp"

using namespace afem;

namespace {

LoopRecord synthetic_record(const std::vector<long>& dofs,
                            const std::vector<double>& eta) {
    LoopRecord rec;
    long cum = 0;
    for (std::size_t ell = 0; ell < dofs.size(); ++ell) {
        cum += 2 * dofs[ell];
        rec.rows.push_back(LoopRow{static_cast<int>(ell), 1,
                                   static_cast<long>(ell), 2 * dofs[ell], dofs[ell],
                                   eta[ell], 0.0, cum, 0.0});
        rec.steps_per_level.push_back(1);
    }
    return rec;
}

}  // namespace

TEST_CASE("bulk marking picks the minimal prefix of sorted indicators") {
    std::vector<double> eta_sq = {9, 4, 4, 1, 1, 1};
    // theta^2 * total = 10; the two largest indicators reach it.
    CHECK(doerfler_mark(eta_sq, std::sqrt(0.5)) == std::vector<int>{0, 1});
    // theta = 1 marks every positive indicator, never the zero ones.
    CHECK(doerfler_mark({2.0, 0.0, 3.0}, 1.0) == std::vector<int>{0, 2});
    // Ties resolve toward the lower element id.
    CHECK(doerfler_mark({4.0, 4.0, 9.0}, std::sqrt(13.0 / 17.0) - 1e-12) ==
          std::vector<int>{0, 2});
    // All-zero field: nothing to mark.
    CHECK(doerfler_mark({0.0, 0.0}, 0.5).empty());
    // A tiny theta still marks at least the largest element.
    CHECK(doerfler_mark(eta_sq, 1e-8) == std::vector<int>{0});

    CHECK_THROWS_AS(doerfler_mark(eta_sq, 0.0), InputError);
    CHECK_THROWS_AS(doerfler_mark(eta_sq, 1.5), InputError);
    CHECK_THROWS_AS(doerfler_mark({1.0, -0.5}, 0.5), InputError);

    Rng rng(47);
    MarkingReport rep = check_marking_minimality(120, 11, rng);
    CHECK(rep.pass);
    CHECK(rep.exhaustive_checks == 120);
}

TEST_CASE("rate estimation recovers synthetic slopes") {
    std::vector<long> dofs;
    std::vector<double> eta;
    for (int ell = 0; ell < 12; ++ell) {
        long n = 4L << ell;
        dofs.push_back(n);
        eta.push_back(std::pow(static_cast<double>(n), -0.5));
    }
    LoopRecord rec = synthetic_record(dofs, eta);
    CHECK(estimate_rate(rec, RateAxis::dofs, 0.5) ==
          doctest::Approx(-0.5).epsilon(1e-12));
    CHECK(estimate_rate(rec, RateAxis::dofs, 1.0) ==
          doctest::Approx(-0.5).epsilon(1e-12));

    // Multiplicative 1% noise moves the fit by far less than 0.02.
    std::vector<double> noisy = eta;
    for (std::size_t i = 0; i < noisy.size(); ++i)
        noisy[i] *= 1.0 + 0.01 * ((i % 2 == 0) ? 1.0 : -1.0);
    LoopRecord noisy_rec = synthetic_record(dofs, noisy);
    CHECK(std::abs(estimate_rate(noisy_rec, RateAxis::dofs, 1.0) + 0.5) < 0.02);

    // Geometric growth: the cumulative-cost axis sees the same slope.
    CHECK(estimate_rate(rec, RateAxis::cum_cost, 0.5) ==
          doctest::Approx(-0.5).epsilon(0.05));

    // The history helper exposes one point per level with increasing x.
    auto pts = level_history(rec, RateAxis::dofs);
    REQUIRE(pts.size() == dofs.size());
    for (std::size_t i = 1; i < pts.size(); ++i) CHECK(pts[i].first > pts[i - 1].first);

    LoopRecord tiny = synthetic_record({4, 8, 16}, {1.0, 0.7, 0.5});
    CHECK_THROWS_AS(estimate_rate(tiny, RateAxis::dofs, 0.5), InputError);
}

TEST_CASE("geometric decay of the step proxy is fitted exactly") {
    LoopRecord rec;
    for (int n = 0; n < 20; ++n) {
        LoopRow r;
        r.ell = n;
        r.k = 1;
        r.eta = std::pow(2.0, -n);
        r.dl_increment = std::pow(2.0, -n);
        rec.rows.push_back(r);
    }
    auto [c, q] = check_full_linear_convergence(rec);
    CHECK(q == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(c == doctest::Approx(1.0).epsilon(1e-12));

    LoopRecord flat;
    for (int n = 0; n < 10; ++n) {
        LoopRow r;
        r.eta = 1.0;
        r.dl_increment = 0.0;
        flat.rows.push_back(r);
    }
    auto [cf, qf] = check_full_linear_convergence(flat);
    CHECK(qf == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(cf == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("zero load terminates with the exact solution") {
    ProblemSpec spec = ProblemSpec::linear_poisson();
    spec.load = [](Vec2) { return 0.0; };
    AdaptiveConfig cfg;
    cfg.max_dofs = 1000;
    AdaptiveResult res = run_adaptive(spec, make_initial_mesh("l_shape"), cfg);
    CHECK(res.status == RunStatus::exact_solution);
    CHECK(res.record.rows.size() == 2);  // initial row plus one solver step
    CHECK(res.record.steps_per_level == std::vector<int>{1});
    for (double v : res.solution.values) CHECK(v == 0.0);
}

TEST_CASE("the stopping parameter controls the steps per level") {
    ProblemSpec spec = ProblemSpec::linear_poisson();
    AdaptiveConfig loose;
    loose.theta = 0.5;
    loose.lambda_ctr = 1e6;
    loose.max_dofs = 300;
    AdaptiveResult res = run_adaptive(spec, make_initial_mesh("l_shape"), loose);
    for (int k : res.record.steps_per_level) CHECK(k == 1);

    AdaptiveConfig tight = loose;
    tight.lambda_ctr = 1e-6;
    AdaptiveResult res2 = run_adaptive(spec, make_initial_mesh("l_shape"), tight);
    CHECK(res2.record.rows.size() >= res.record.rows.size());
    long total_steps = 0;
    for (int k : res2.record.steps_per_level) {
        CHECK(k >= 1);
        total_steps += k;
    }
    CHECK(total_steps + 1 == static_cast<long>(res2.record.rows.size()));
}

TEST_CASE("adaptive run on the corner singularity reaches its budget") {
    AdaptiveConfig cfg;
    cfg.theta = 0.5;
    cfg.lambda_ctr = 1e-2;
    cfg.max_dofs = 4000;

    int levels_seen = 0, refines_seen = 0;
    AdaptiveHooks hooks;
    hooks.on_level = [&](const Mesh&, const DiscreteFunction&, const IndicatorField&) {
        ++levels_seen;
    };
    std::vector<int> last_marked;
    hooks.on_mark = [&](const Mesh&, const IndicatorField& eta,
                        const std::vector<int>& marked) {
        last_marked = marked;
        CHECK(marked == doerfler_mark(eta.eta_sq, 0.5));
        CHECK_FALSE(marked.empty());
    };
    hooks.on_refine = [&](const Mesh& coarse, const Mesh& fine,
                          const RefinementRelation& rel, const std::vector<int>& marked) {
        ++refines_seen;
        CHECK(fine.num_elements() > coarse.num_elements());
        for (int id : marked) CHECK(rel.children_of[id].size() >= 2);
    };

    ProblemSpec spec = ProblemSpec::linear_poisson();
    AdaptiveResult res = run_adaptive(spec, make_initial_mesh("l_shape"), cfg, hooks);
    CHECK(res.status == RunStatus::dof_budget_reached);
    CHECK(levels_seen == static_cast<int>(res.record.steps_per_level.size()));
    CHECK(refines_seen == levels_seen - 1);
    CHECK(dof_map(res.mesh).num_free() >= cfg.max_dofs);

    auto pts = level_history(res.record, RateAxis::dofs);
    REQUIRE(pts.size() >= 5);
    CHECK(pts.back().second < pts[1].second);
    double slope = estimate_rate(res.record, RateAxis::dofs, 0.5);
    CHECK(slope < -0.35);
    CHECK(slope > -0.65);

    // Step budget cut-off reports the partial record.
    AdaptiveConfig clipped = cfg;
    clipped.max_total_steps = 3;
    AdaptiveResult part = run_adaptive(spec, make_initial_mesh("l_shape"), clipped);
    CHECK(part.status == RunStatus::step_budget_reached);
    CHECK(part.record.rows.size() <= 5);

    CHECK_THROWS_AS(run_adaptive(spec, make_initial_mesh("l_shape"),
                                 [] {
                                     AdaptiveConfig bad;
                                     bad.theta = 1.5;
                                     return bad;
                                 }()),
                    InputError);
}

TEST_CASE("audited adaptive runs satisfy counting and marking audits") {
    AdaptiveConfig cfg;
    cfg.theta = 0.5;
    cfg.lambda_ctr = 1e-2;
    cfg.max_dofs = 1500;
    AuditedRun audit = run_adaptive_audited(ProblemSpec::nonlinear_log_diffusion(),
                                            make_initial_mesh("z_shape"), cfg);
    CHECK(audit.result.status == RunStatus::dof_budget_reached);
    CHECK(audit.counts_ok);
    CHECK(audit.marking_threshold_ok);
    CHECK(audit.marking_minimal_ok);
    CHECK(audit.minimal_checks >= 1);
    CHECK(audit.refinements >= 4);
    CHECK(audit.marked_total >= 1);
    CHECK(audit.closure_ratio <= 8.0);
}

TEST_CASE("loop record csv format") {
    AdaptiveConfig cfg;
    cfg.theta = 1.0;
    cfg.lambda_ctr = 1e-2;
    cfg.max_dofs = 120;
    AdaptiveResult res =
        run_adaptive(ProblemSpec::linear_poisson(), make_initial_mesh("l_shape"), cfg);

    std::string path = "/tmp/afem_test_record.csv";
    write_record_csv(res.record, path);
    oracles::Csv csv = oracles::parse_csv(path);
    CHECK(csv.header == std::vector<std::string>{"ell", "k", "total_step",
                                                 "num_elements", "num_free_dofs", "eta",
                                                 "dl_increment", "cum_elements",
                                                 "wall_time_ms"});
    REQUIRE(csv.rows.size() == res.record.rows.size());
    long cum = 0;
    for (std::size_t i = 0; i < csv.rows.size(); ++i) {
        CHECK(csv.rows[i][2] == std::to_string(i));
        cum += std::stol(csv.rows[i][3]);
        CHECK(std::stol(csv.rows[i][7]) == cum);
        CHECK(std::stod(csv.rows[i][8]) >= 0.0);
    }
    CHECK(csv.rows[0][0] == "0");
    CHECK(csv.rows[0][1] == "0");
}
