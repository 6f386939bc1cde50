#pragma once

#include <string>
#include <vector>

#include "afem/adaptivity.hpp"

namespace afem {

/// Deterministic 64-bit generator (splitmix64), used by all audits so that
/// trial data does not depend on library-specific distributions.
struct Rng {
    unsigned long long state = 0;
    explicit Rng(unsigned long long seed) : state(seed) {}
    unsigned long long next_u64();
    double next_double();     // uniform [0, 1)
    double next_symmetric();  // uniform [-1, 1)
    int next_index(int n);    // uniform {0, ..., n-1}
};

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

std::string format_results(const std::vector<CheckResult>& results);
bool all_pass(const std::vector<CheckResult>& results);

// ---- mesh refinement audits ------------------------------------------------

/// Child-count double inequality for one refinement step, with at most 4
/// children per element: #refined + #coarse <= #fine <= 4 #refined + #unchanged.
bool refinement_counts_ok(const RefinementRelation& rel, std::string* detail = nullptr);

/// Refine a random element subset of the given fraction (at least one).
Mesh random_refinement(const Mesh& mesh, Rng& rng, double mark_fraction,
                       RefinementRelation* rel = nullptr);

struct OverlayReport {
    int trials = 0;
    long max_excess = 0;  // worst #overlay - (#a + #b - #ancestor)
    bool refines_both = true;
    bool idempotent = true;
    bool symmetric = true;
    bool pass = false;
};
/// Overlay cardinality bound, idempotence, symmetry of the element count,
/// and geometric containment in both inputs, over random refinement pairs.
OverlayReport check_overlay(const std::string& geometry, int trials, Rng& rng);

struct ClosureReport {
    long marked_total = 0;
    long created_total = 0;
    double ratio = 0.0;
    double bound = 0.0;
    bool pass = false;
};
/// Long run of single-element markings; elements created by closure stay
/// within `bound` times the marked count.
ClosureReport check_closure(const std::string& geometry, int steps, double bound, Rng& rng);

// ---- estimator audits ------------------------------------------------------

struct StabilityReport {
    double c_stab = 0.0;     // max ratio over the calibration batch
    double fresh_max = 0.0;  // max ratio over the fresh batch
    int calibration_trials = 0;
    int fresh_trials = 0;
    bool pass = false;  // fresh_max <= 1.05 * c_stab
};
/// Two-phase audit of estimator stability on unrefined elements: calibrate
/// the constant on one batch of random (mesh, pair) samples, then require a
/// disjoint batch to stay within 5 percent of it.
StabilityReport check_stability_bound(const ProblemSpec& spec, const std::string& geometry,
                                      int calibration_trials, int fresh_trials, Rng& rng);

struct ReductionReport {
    int trials = 0;
    double max_ratio = 0.0;  // eta_fine(zone) / (q_red * eta_coarse(zone))
    bool pass = false;       // max_ratio <= 1 + 1e-10
};
/// Estimator reduction on bisected elements for the embedded coarse
/// function, with the 2^(-1/4) factor.
ReductionReport check_reduction_bound(const ProblemSpec& spec, const std::string& geometry,
                                      int trials, Rng& rng);

// ---- solver audits ---------------------------------------------------------

struct ContractionReport {
    int trials = 0;
    double q_bound = 0.0;           // sqrt(1 - alpha^2 / L^2)
    double max_ratio = 0.0;         // |||u* - Phi v||| / |||u* - v|||
    double energy_bound = 0.0;      // (L / alpha) q_bound^2
    double max_energy_ratio = 0.0;  // (E(Phi v) - E*) / (E(v) - E*)
    bool pass = false;
};
/// Norm contraction of the damped fixed-point map, and the energy
/// contraction implied by L / alpha below the golden ratio, measured against
/// brute-force solutions on small adaptive meshes.
ContractionReport check_zarantonello_contraction(const ProblemSpec& spec,
                                                 const std::string& geometry, int trials,
                                                 long max_dofs, Rng& rng);

struct IncrementLemmaReport {
    int trials = 0;
    double q_used = 0.0;
    double worst_slack = 0.0;  // min over trials of (rhs - lhs) / max(1, scale)
    bool pass = false;         // worst_slack >= -1e-10
};
/// The three stopping inequalities linking d(u*, v), d(u*, Phi v), and
/// d(v, Phi v) for a contraction Phi with factor q: one solver step of the
/// problem's iteration, in the given distance mode.
IncrementLemmaReport check_increment_lemma(const ProblemSpec& spec, const Mesh& mesh,
                                           DistanceMode mode, int trials, Rng& rng);

struct PcgLevelStats {
    int level = 0;
    long dofs = 0;
    double cond = 1.0;     // condition number of the preconditioned matrix
    double q_bound = 0.0;  // sqrt(1 - 1 / cond)
    double max_step_ratio = 0.0;
    bool contraction_ok = true;
};
struct PcgReport {
    std::vector<PcgLevelStats> levels;
    double cond_spread = 0.0;  // max / min condition number over levels
    double spread_bound = 0.0;
    bool pass = false;
};
/// Builds an adaptive hierarchy of the linear problem, measures the extreme
/// eigenvalues of the preconditioned stiffness matrix per level (Lanczos in
/// the energy inner product), and checks that every PCG step from random
/// starts contracts the energy-norm error by at most sqrt(1 - 1/cond).
PcgReport check_pcg_optimality(const std::string& geometry, int num_levels,
                               double spread_bound, Rng& rng);

struct GateauxReport {
    int trials = 0;
    double max_rel_err = 0.0;
    bool pass = false;  // max_rel_err <= 1e-6
};
/// Central-difference directional derivatives of the energy against the
/// assembled residual, random functions and directions.
GateauxReport check_gateaux_consistency(const ProblemSpec& spec, const Mesh& mesh, int trials,
                                        Rng& rng);

struct MarkingReport {
    int trials = 0;
    long exhaustive_checks = 0;
    bool thresholds_ok = true;
    bool minimal_ok = true;
    bool pass = false;
};
/// Random indicator vectors: the marked set meets the bulk threshold, and
/// for sizes up to `max_n` its cardinality equals the exhaustive minimum.
MarkingReport check_marking_minimality(int trials, int max_n, Rng& rng);

struct ReliabilityReport {
    std::vector<long> level_dofs;
    std::vector<double> ratios;  // error / eta, final iterate per level
    double max_ratio = 0.0;
    double tail_spread = 0.0;  // max |r - mean| / mean over the last 5 levels
    bool pass = false;
};
/// Error/estimator ratio per level against a reference solution two uniform
/// refinements finer; must stay below `bound` and settle within 20 percent
/// over the last five levels.
ReliabilityReport check_reliability(const ProblemSpec& spec, const std::string& geometry,
                                    const AdaptiveConfig& config, double bound);

// ---- audited adaptive runs -------------------------------------------------

struct AuditedRun {
    AdaptiveResult result;
    long refinements = 0;
    bool counts_ok = true;  // child-count inequality on every refinement
    bool marking_threshold_ok = true;
    bool marking_minimal_ok = true;  // exhaustive check whenever <= 12 elements
    long minimal_checks = 0;
    long marked_total = 0;
    long created_total = 0;
    double closure_ratio = 0.0;  // created / marked over the whole run
};
/// run_adaptive with per-step audits of the refinement counts, the marking
/// threshold, and marking minimality on small meshes.
AuditedRun run_adaptive_audited(const ProblemSpec& spec, const Mesh& initial,
                                const AdaptiveConfig& config);

/// The full audit behind the `axioms` command: refinement counts, overlay,
/// closure overhead, estimator stability and reduction, solver contractions,
/// the stopping inequalities, marking minimality, and derivative consistency.
std::vector<CheckResult> run_axiom_suite(const std::string& geometry, unsigned long long seed);

}  // namespace afem
