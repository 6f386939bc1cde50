#pragma once

#include <string>
#include <utility>
#include <vector>

#include "afem/adaptivity.hpp"
#include "afem/fem.hpp"

namespace afem {

/// Plain-text manifest, one `key = value` per line, lists comma-separated,
/// `#` starts a comment. Keys: problem, geometry, theta, lambda, mode,
/// max_dofs, max_total_steps, out, seed, plots, tail_fraction.
struct ExperimentManifest {
    std::string problem = "poisson_linear";  // poisson_linear | scalar_nonlinear
    std::string geometry = "l_shape";        // l_shape | z_shape | unit_square
    std::vector<double> theta_list{0.5};
    std::vector<double> lambda_list{1e-2};
    std::string mode = "norm";  // norm | energy
    long max_dofs = 200000;
    long max_total_steps = 100000;
    std::string output_dir = "out";
    unsigned long long seed = 1;
    bool plots = true;
    double tail_fraction = 0.5;
};

ExperimentManifest parse_manifest_file(const std::string& path);
std::string serialize_manifest(const ExperimentManifest& m);
/// Apply one key/value pair (shared by the file parser and CLI overrides).
void apply_manifest_entry(ExperimentManifest& m, const std::string& key,
                          const std::string& value);
void validate_manifest(const ExperimentManifest& m);

ProblemSpec problem_from_name(const std::string& name);
DistanceMode mode_from_name(const std::string& name);

struct RunSummary {
    double theta = 0.0;
    double lambda = 0.0;
    double slope_vs_dofs = 0.0;
    double slope_vs_cost = 0.0;
    double final_eta = 0.0;
    long final_dofs = 0;
    long total_steps = 0;
    RunStatus status = RunStatus::dof_budget_reached;
    LoopRecord record;
};

/// One adaptive run for a single (theta, lambda) pair of the manifest.
RunSummary run_single(const ExperimentManifest& m, double theta, double lambda);

/// Full sweep: one record CSV per (theta, lambda), a rates.csv summary with
/// columns theta,lambda,slope_vs_dofs,slope_vs_cost,final_eta,final_dofs,total_steps
/// and optional log-log SVG plots (estimator vs dofs, vs cumulative cost,
/// solver steps per level).
void cmd_run(const ExperimentManifest& m);

/// Writes successively refined meshes of the geometry to `mesh_<i>.txt`,
/// marking the elements at the domain's corner vertex each step.
void cmd_mesh_demo(const std::string& geometry, int steps, const std::string& output_dir);

struct ConstantsReport {
    double inf_value = 0.0, inf_arg = 0.0;
    double sup_value = 0.0, sup_arg = 0.0;
    double limit_at_zero = 0.0, limit_at_cap = 0.0;
    double spec_alpha = 0.0, spec_lipschitz = 0.0;
    bool matches_spec = false;   // within 1e-6 of the stored constants
    double ratio = 0.0;          // lipschitz / alpha
    bool golden_ok = false;      // ratio < (1 + sqrt 5) / 2
};

/// Extrema of g(t) = a(t) + 2 t a'(t) over [0, 1e6]: coarse bracketing scan,
/// then golden-section refinement of each bracket to width 1e-10.
ConstantsReport verify_constants(const ProblemSpec& spec);
std::string format_report(const ConstantsReport& r);

/// Minimal static SVG plotting, log-log by default.
struct PlotSeries {
    std::string label;
    std::vector<std::pair<double, double>> points;
};

struct PlotSpec {
    std::string title, xlabel, ylabel;
    bool log_y = true;
    std::vector<PlotSeries> series;
    std::vector<double> reference_slopes;  // drawn as slope triangles
};

void write_svg_plot(const std::string& path, const PlotSpec& spec);

}  // namespace afem
