#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "afem/errors.hpp"
#include "afem/experiment.hpp"
#include "afem/validation.hpp"

int main(int argc, char** argv) {
    CLI::App app{"adaptive finite element engine with contractive solvers"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "parameter sweep writing CSV traces and SVG plots");
    std::string manifest_path, geometry, problem, mode, out_dir;
    std::vector<double> thetas, lambdas;
    long max_dofs = -1, max_total_steps = -1;
    long long seed = -1;
    bool no_plots = false;
    run->add_option("--manifest", manifest_path, "manifest file, one key = value per line");
    run->add_option("--theta", thetas, "marking parameters in (0, 1]")->delimiter(',');
    run->add_option("--lambda", lambdas, "solver stopping parameters > 0")->delimiter(',');
    run->add_option("--geometry", geometry, "l_shape | z_shape | unit_square");
    run->add_option("--problem", problem, "poisson_linear | scalar_nonlinear");
    run->add_option("--max-dofs", max_dofs, "stop refining at this many free dofs");
    run->add_option("--max-total-steps", max_total_steps, "total solver step budget");
    run->add_option("--mode", mode, "solver distance: norm | energy");
    run->add_option("--out", out_dir, "output directory");
    run->add_option("--seed", seed, "seed recorded with the manifest");
    run->add_flag("--no-plots", no_plots, "skip SVG output");

    auto* vc = app.add_subcommand("verify-constants",
                                  "extrema of the nonlinearity coefficient a(t) + 2 t a'(t)");
    std::string vc_problem = "scalar_nonlinear";
    vc->add_option("--problem", vc_problem, "poisson_linear | scalar_nonlinear");

    auto* ax = app.add_subcommand("axioms",
                                  "property audit of refinement, estimator, and solvers");
    std::string ax_geometry = "l_shape";
    unsigned long long ax_seed = 1;
    ax->add_option("--geometry", ax_geometry, "l_shape | z_shape | unit_square");
    ax->add_option("--seed", ax_seed, "seed for the randomized trials");

    auto* md = app.add_subcommand("mesh-demo", "export a refinement sequence as mesh files");
    std::string md_geometry = "l_shape", md_out = "mesh-demo";
    int md_steps = 8;
    md->add_option("--geometry", md_geometry, "l_shape | z_shape | unit_square");
    md->add_option("--steps", md_steps, "number of refinement steps");
    md->add_option("--out", md_out, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*run) {
            afem::ExperimentManifest m;
            if (!manifest_path.empty()) m = afem::parse_manifest_file(manifest_path);
            if (!thetas.empty()) m.theta_list = thetas;
            if (!lambdas.empty()) m.lambda_list = lambdas;
            if (!geometry.empty()) m.geometry = geometry;
            if (!problem.empty()) m.problem = problem;
            if (!mode.empty()) m.mode = mode;
            if (!out_dir.empty()) m.output_dir = out_dir;
            if (max_dofs >= 0) m.max_dofs = max_dofs;
            if (max_total_steps >= 0) m.max_total_steps = max_total_steps;
            if (seed >= 0) m.seed = static_cast<unsigned long long>(seed);
            if (no_plots) m.plots = false;
            afem::cmd_run(m);
            return 0;
        }
        if (*vc) {
            afem::ConstantsReport r = afem::verify_constants(afem::problem_from_name(vc_problem));
            std::fputs(afem::format_report(r).c_str(), stdout);
            return (r.matches_spec && r.golden_ok) ? 0 : 4;
        }
        if (*ax) {
            std::vector<afem::CheckResult> results = afem::run_axiom_suite(ax_geometry, ax_seed);
            std::fputs(afem::format_results(results).c_str(), stdout);
            return afem::all_pass(results) ? 0 : 4;
        }
        if (*md) {
            afem::cmd_mesh_demo(md_geometry, md_steps, md_out);
            return 0;
        }
    } catch (const afem::InputError& e) {
        std::fprintf(stderr, "input error: %s\n", e.what());
        return 2;
    } catch (const afem::NumericalError& e) {
        std::fprintf(stderr, "numerical error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
    return 0;
}
