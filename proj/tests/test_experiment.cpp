#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <afem/errors.hpp>
#include <afem/experiment.hpp>
#include <afem/mesh.hpp>

#include "support/oracles.hpp"

using namespace afem;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

int cli(const std::string& args) {
    std::string cmd = std::string(AFEM_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    int rc = std::system(cmd.c_str());
    REQUIRE(rc != -1);
    return WEXITSTATUS(rc);
}

// Drop the final (wall-time) column of every line so reruns compare equal.
std::string mask_last_column(const std::string& csv) {
    std::string out;
    std::string line;
    for (char ch : csv) {
        if (ch == '\n') {
            size_t comma = line.rfind(',');
            out += line.substr(0, comma);
            out += '\n';
            line.clear();
        } else {
            line.push_back(ch);
        }
    }
    return out;
}

}  // namespace

TEST_CASE("manifest files parse, serialize, and reject bad input") {
    ExperimentManifest def;
    CHECK(def.theta_list == std::vector<double>{0.5});
    CHECK(def.lambda_list == std::vector<double>{1e-2});

    fs::path dir = fresh_dir("afem_unit_manifest");
    write_text(dir / "m.txt",
               "# experiment configuration\n"
               "problem = scalar_nonlinear\n"
               "\n"
               "geometry= z_shape # trailing comment\n"
               "theta = 0.3, 0.6\n"
               "lambda=0.001\n"
               "mode = energy\n"
               "max_dofs = 12345\n"
               "max_total_steps = 777\n"
               "out = results\n"
               "seed = 9\n"
               "plots = no\n"
               "tail_fraction = 0.4\n");
    ExperimentManifest m = parse_manifest_file((dir / "m.txt").string());
    CHECK(m.problem == "scalar_nonlinear");
    CHECK(m.geometry == "z_shape");
    CHECK(m.theta_list == std::vector<double>{0.3, 0.6});
    CHECK(m.lambda_list == std::vector<double>{0.001});
    CHECK(m.mode == "energy");
    CHECK(m.max_dofs == 12345);
    CHECK(m.max_total_steps == 777);
    CHECK(m.output_dir == "results");
    CHECK(m.seed == 9);
    CHECK_FALSE(m.plots);
    CHECK(m.tail_fraction == 0.4);
    validate_manifest(m);

    // Serialization round-trips through the parser.
    write_text(dir / "round.txt", serialize_manifest(m));
    ExperimentManifest m2 = parse_manifest_file((dir / "round.txt").string());
    CHECK(serialize_manifest(m2) == serialize_manifest(m));

    // Both spellings of the output key work.
    ExperimentManifest alias;
    apply_manifest_entry(alias, "output_dir", "elsewhere");
    CHECK(alias.output_dir == "elsewhere");

    ExperimentManifest bad;
    CHECK_THROWS_AS(apply_manifest_entry(bad, "colour", "red"), InputError);
    CHECK_THROWS_AS(apply_manifest_entry(bad, "theta", "fast"), InputError);
    CHECK_THROWS_AS(apply_manifest_entry(bad, "theta", " , "), InputError);
    CHECK_THROWS_AS(apply_manifest_entry(bad, "plots", "maybe"), InputError);
    CHECK_THROWS_AS(apply_manifest_entry(bad, "max_dofs", "1.5"), InputError);

    write_text(dir / "noeq.txt", "problem poisson_linear\n");
    CHECK_THROWS_AS(parse_manifest_file((dir / "noeq.txt").string()), InputError);
    CHECK_THROWS_AS(parse_manifest_file((dir / "missing.txt").string()), InputError);

    ExperimentManifest invalid;
    invalid.theta_list = {1.5};
    CHECK_THROWS_AS(validate_manifest(invalid), InputError);
    invalid = ExperimentManifest{};
    invalid.lambda_list = {-1.0};
    CHECK_THROWS_AS(validate_manifest(invalid), InputError);
    invalid = ExperimentManifest{};
    invalid.geometry = "pentagon";
    CHECK_THROWS_AS(validate_manifest(invalid), InputError);
    invalid = ExperimentManifest{};
    invalid.output_dir = "";
    CHECK_THROWS_AS(validate_manifest(invalid), InputError);
}

TEST_CASE("coefficient extrema match the stored monotonicity constants") {
    ConstantsReport lin = verify_constants(ProblemSpec::linear_poisson());
    CHECK(lin.inf_value == 1.0);
    CHECK(lin.sup_value == 1.0);
    CHECK(lin.matches_spec);
    CHECK(lin.golden_ok);
    CHECK(lin.ratio == 1.0);

    ConstantsReport r = verify_constants(ProblemSpec::nonlinear_log_diffusion());
    CHECK(std::abs(r.inf_value - 0.9582898017) <= 1e-6);
    CHECK(std::abs(r.sup_value - 1.542343818) <= 1e-6);
    CHECK(r.matches_spec);
    CHECK(r.golden_ok);
    CHECK(r.ratio < 0.5 * (1.0 + std::sqrt(5.0)));
    CHECK(r.inf_value <= r.limit_at_zero);
    CHECK(r.inf_value <= r.limit_at_cap);
    CHECK(r.sup_value >= r.limit_at_zero);

    std::string report = format_report(r);
    CHECK(report.find("inf g") != std::string::npos);
    CHECK(report.find("NO") == std::string::npos);
}

TEST_CASE("a single run produces a summary consistent with its record") {
    ExperimentManifest m;
    m.problem = "poisson_linear";
    m.geometry = "l_shape";
    m.max_dofs = 800;
    RunSummary s = run_single(m, 0.5, 1e-2);
    CHECK(s.status == RunStatus::dof_budget_reached);
    CHECK(s.final_dofs >= 800);
    CHECK(s.theta == 0.5);
    CHECK(s.lambda == 1e-2);
    CHECK(s.total_steps == s.record.rows.back().total_step);
    CHECK(s.final_eta == s.record.rows.back().eta);
    CHECK(std::isfinite(s.slope_vs_dofs));
    CHECK(s.slope_vs_dofs < 0.0);
    CHECK(std::isfinite(s.slope_vs_cost));
    CHECK(s.slope_vs_cost < 0.0);
    CHECK(s.slope_vs_dofs == estimate_rate(s.record, RateAxis::dofs, m.tail_fraction));
}

TEST_CASE("the sweep command writes manifests, records, rates, and plots") {
    fs::path dir = fresh_dir("afem_unit_sweep");
    ExperimentManifest m;
    m.problem = "poisson_linear";
    m.geometry = "l_shape";
    m.theta_list = {0.4, 0.7};
    m.lambda_list = {0.01};
    m.max_dofs = 500;
    m.output_dir = (dir / "out").string();
    cmd_run(m);

    CHECK(oracles::read_file((dir / "out" / "manifest.txt").string()) ==
          serialize_manifest(m));

    oracles::Csv rates = oracles::parse_csv((dir / "out" / "rates.csv").string());
    CHECK(rates.header == std::vector<std::string>{"theta", "lambda", "slope_vs_dofs",
                                                   "slope_vs_cost", "final_eta", "final_dofs",
                                                   "total_steps"});
    REQUIRE(rates.rows.size() == 2);
    CHECK(rates.rows[0][0] == "0.4");
    CHECK(rates.rows[1][0] == "0.7");
    CHECK(rates.rows[0][1] == "0.01");
    for (const auto& row : rates.rows) {
        REQUIRE(row.size() == 7);
        CHECK(std::stod(row[2]) < 0.0);
        CHECK(std::stol(row[5]) >= 500);
    }

    for (const char* tag : {"theta0.4_lambda0.01", "theta0.7_lambda0.01"}) {
        oracles::Csv rec =
            oracles::parse_csv((dir / "out" / ("record_" + std::string(tag) + ".csv")).string());
        CHECK(rec.header.front() == "ell");
        CHECK(rec.header.back() == "wall_time_ms");
        CHECK(rec.rows.size() >= 5);
    }

    for (const char* plot :
         {"plot_eta_vs_dofs.svg", "plot_eta_vs_cost.svg", "plot_iterations.svg"}) {
        std::string svg = oracles::read_file((dir / "out" / plot).string());
        CHECK(svg.rfind("<svg ", 0) == 0);
        CHECK(svg.find("</svg>") != std::string::npos);
        CHECK(svg.find("polyline") != std::string::npos);
    }

    // Re-running the same manifest reproduces every artifact except timings.
    ExperimentManifest m2 = m;
    m2.output_dir = (dir / "out2").string();
    cmd_run(m2);
    CHECK(oracles::read_file((dir / "out" / "rates.csv").string()) ==
          oracles::read_file((dir / "out2" / "rates.csv").string()));
    std::string a =
        oracles::read_file((dir / "out" / "record_theta0.4_lambda0.01.csv").string());
    std::string b =
        oracles::read_file((dir / "out2" / "record_theta0.4_lambda0.01.csv").string());
    CHECK(mask_last_column(a) == mask_last_column(b));

    // Plot suppression leaves no SVG behind.
    ExperimentManifest quiet = m;
    quiet.plots = false;
    quiet.output_dir = (dir / "out3").string();
    cmd_run(quiet);
    CHECK_FALSE(fs::exists(dir / "out3" / "plot_eta_vs_dofs.svg"));
    CHECK(fs::exists(dir / "out3" / "rates.csv"));
}

TEST_CASE("the mesh demo writes a loadable refinement sequence") {
    fs::path dir = fresh_dir("afem_unit_meshdemo");
    cmd_mesh_demo("z_shape", 4, dir.string());
    long prev = 0;
    for (int i = 0; i <= 4; ++i) {
        Mesh mesh = load_mesh((dir / ("mesh_" + std::to_string(i) + ".txt")).string());
        CHECK(mesh.num_elements() > prev);
        prev = mesh.num_elements();
    }
    CHECK_THROWS_AS(cmd_mesh_demo("z_shape", -1, dir.string()), InputError);
    CHECK_THROWS_AS(cmd_mesh_demo("z_shape", 41, dir.string()), InputError);
}

TEST_CASE("command line exit codes") {
    fs::path dir = fresh_dir("afem_unit_cli");
    CHECK(cli("verify-constants") == 0);
    CHECK(cli("verify-constants --problem poisson_linear") == 0);
    CHECK(cli("verify-constants --problem bogus") == 2);
    CHECK(cli("--definitely-not-a-flag") == 2);
    CHECK(cli("run --manifest " + (dir / "missing.txt").string()) == 2);
    CHECK(cli("run --theta 2.0 --max-dofs 50 --out " + (dir / "bad").string()) == 2);
    CHECK(cli("mesh-demo --geometry unit_square --steps 2 --out " +
              (dir / "meshes").string()) == 0);
    CHECK(fs::exists(dir / "meshes" / "mesh_2.txt"));
    CHECK(cli("run --geometry l_shape --problem poisson_linear --theta 0.5 "
              "--lambda 0.01 --max-dofs 150 --no-plots --out " +
              (dir / "run").string()) == 0);
    CHECK(fs::exists(dir / "run" / "rates.csv"));
}
