#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "afem/estimator.hpp"
#include "afem/fem.hpp"
#include "afem/mesh.hpp"
#include "afem/solvers.hpp"

namespace afem {

/// Bulk marking of minimal cardinality: the smallest element set M with
/// theta^2 * sum(eta_sq) <= sum over M of eta_sq, found by sorting the
/// indicators in descending order (ties broken by element id). Returns
/// element ids in ascending order.
std::vector<int> doerfler_mark(const std::vector<double>& eta_sq, double theta);

struct AdaptiveConfig {
    double theta = 0.5;
    double lambda_ctr = 1e-2;       // solver stopping parameter
    DistanceMode mode = DistanceMode::norm;
    long max_dofs = 1000000;        // refine until this many free dofs
    long max_total_steps = 10000;   // total solver steps across all levels
    int max_steps_per_level = 500;
};

enum class RunStatus { dof_budget_reached, step_budget_reached, exact_solution, solver_stalled };

/// One row per solver step, plus one row for the initial guess. The index
/// pair (ell, k) with k = steps_per_level[ell] and the pair (ell+1, 0) name
/// the same iterate; only the former is recorded, so total_step increases by
/// exactly 1 per row.
struct LoopRow {
    int ell = 0;
    int k = 0;
    long total_step = 0;
    long num_elements = 0;
    long num_free_dofs = 0;
    double eta = 0.0;           // estimator of the current iterate
    double dl_increment = 0.0;  // solver distance to the previous iterate
    long cum_elements = 0;      // sum of num_elements over all rows so far
    double wall_time_ms = 0.0;
};

struct LoopRecord {
    std::vector<LoopRow> rows;
    std::vector<int> steps_per_level;
};

/// Observation points for property audits; all optional.
struct AdaptiveHooks {
    /// Fires when the stopping criterion is met, with the level's final iterate.
    std::function<void(const Mesh&, const DiscreteFunction&, const IndicatorField&)> on_level;
    std::function<void(const Mesh&, const IndicatorField&, const std::vector<int>& marked)>
        on_mark;
    std::function<void(const Mesh& coarse, const Mesh& fine, const RefinementRelation&,
                       const std::vector<int>& marked)>
        on_refine;
};

struct AdaptiveResult {
    LoopRecord record;
    Mesh mesh;                  // finest mesh reached
    DiscreteFunction solution;  // last iterate on that mesh
    RunStatus status = RunStatus::dof_budget_reached;
};

/// The adaptive loop: iterate the contractive solver on the current mesh
/// until the increment is below lambda_ctr times the estimator, then mark,
/// refine, and carry the iterate over by prolongation (nested iteration).
/// The linear kind uses preconditioned CG with the multilevel diagonal
/// scaling over the emerging hierarchy; the nonlinear kind uses the damped
/// fixed-point iteration with one factorized Poisson solve per step.
AdaptiveResult run_adaptive(const ProblemSpec& spec, const Mesh& initial,
                            const AdaptiveConfig& config, const AdaptiveHooks& hooks = {});

/// CSV export with columns
/// ell,k,total_step,num_elements,num_free_dofs,eta,dl_increment,cum_elements,wall_time_ms
void write_record_csv(const LoopRecord& record, const std::string& path);

enum class RateAxis { dofs, cum_cost };

/// Least-squares slope of log(eta) against log(x) over the last-step row of
/// each level, restricted to the final `tail_fraction` of levels. The x axis
/// is num_free_dofs or cum_elements. Requires at least 4 levels.
double estimate_rate(const LoopRecord& record, RateAxis axis, double tail_fraction = 0.5);

/// Rows (num_free_dofs, eta) of the last step per level, for plotting.
std::vector<std::pair<double, double>> level_history(const LoopRecord& record, RateAxis axis);

/// Geometric-decay fit of the per-step proxy eta + dl_increment. Returns
/// (C, q) such that proxy(n+m) <= C * q^m * proxy(n) for all recorded pairs,
/// with q from a least-squares fit and C minimal for that q. Decay holds
/// when q < 1.
std::pair<double, double> check_full_linear_convergence(const LoopRecord& record);

}  // namespace afem
