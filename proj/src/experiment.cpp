#include "afem/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "afem/errors.hpp"

namespace afem {

namespace {

std::string fmt(double x) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

double parse_double(const std::string& s) {
    const std::string t = trim(s);
    try {
        size_t used = 0;
        double v = std::stod(t, &used);
        if (used != t.size()) throw InputError("trailing characters in number: " + s);
        return v;
    } catch (const InputError&) {
        throw;
    } catch (const std::exception&) {
        throw InputError("not a number: " + s);
    }
}

long parse_long(const std::string& s) {
    const std::string t = trim(s);
    try {
        size_t used = 0;
        long v = std::stol(t, &used);
        if (used != t.size()) throw InputError("trailing characters in integer: " + s);
        return v;
    } catch (const InputError&) {
        throw;
    } catch (const std::exception&) {
        throw InputError("not an integer: " + s);
    }
}

std::vector<double> parse_list(const std::string& s) {
    std::vector<double> out;
    for (const std::string& piece : split(s, ',')) {
        if (trim(piece).empty()) continue;
        out.push_back(parse_double(piece));
    }
    if (out.empty()) throw InputError("empty list value: " + s);
    return out;
}

bool parse_bool(const std::string& s) {
    const std::string t = trim(s);
    if (t == "1" || t == "true" || t == "yes" || t == "on") return true;
    if (t == "0" || t == "false" || t == "no" || t == "off") return false;
    throw InputError("not a boolean: " + s);
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot open for writing: " + path);
    return out;
}

}  // namespace

void apply_manifest_entry(ExperimentManifest& m, const std::string& key,
                          const std::string& value) {
    if (key == "problem") {
        m.problem = trim(value);
    } else if (key == "geometry") {
        m.geometry = trim(value);
    } else if (key == "theta") {
        m.theta_list = parse_list(value);
    } else if (key == "lambda") {
        m.lambda_list = parse_list(value);
    } else if (key == "mode") {
        m.mode = trim(value);
    } else if (key == "max_dofs") {
        m.max_dofs = parse_long(value);
    } else if (key == "max_total_steps") {
        m.max_total_steps = parse_long(value);
    } else if (key == "out" || key == "output_dir") {
        m.output_dir = trim(value);
    } else if (key == "seed") {
        m.seed = static_cast<unsigned long long>(parse_long(value));
    } else if (key == "plots") {
        m.plots = parse_bool(value);
    } else if (key == "tail_fraction") {
        m.tail_fraction = parse_double(value);
    } else {
        throw InputError("unknown manifest key: " + key);
    }
}

ExperimentManifest parse_manifest_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open manifest: " + path);
    ExperimentManifest m;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw InputError("manifest line " + std::to_string(lineno) + " has no '=': " + line);
        apply_manifest_entry(m, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return m;
}

std::string serialize_manifest(const ExperimentManifest& m) {
    std::ostringstream out;
    auto join = [](const std::vector<double>& v) {
        std::string s;
        for (size_t i = 0; i < v.size(); ++i) {
            if (i) s += ",";
            s += fmt(v[i]);
        }
        return s;
    };
    out << "problem = " << m.problem << "\n";
    out << "geometry = " << m.geometry << "\n";
    out << "theta = " << join(m.theta_list) << "\n";
    out << "lambda = " << join(m.lambda_list) << "\n";
    out << "mode = " << m.mode << "\n";
    out << "max_dofs = " << m.max_dofs << "\n";
    out << "max_total_steps = " << m.max_total_steps << "\n";
    out << "out = " << m.output_dir << "\n";
    out << "seed = " << m.seed << "\n";
    out << "plots = " << (m.plots ? "1" : "0") << "\n";
    out << "tail_fraction = " << fmt(m.tail_fraction) << "\n";
    return out.str();
}

ProblemSpec problem_from_name(const std::string& name) {
    if (name == "poisson_linear") return ProblemSpec::linear_poisson();
    if (name == "scalar_nonlinear") return ProblemSpec::nonlinear_log_diffusion();
    throw InputError("unknown problem: " + name +
                     " (expected poisson_linear or scalar_nonlinear)");
}

DistanceMode mode_from_name(const std::string& name) {
    if (name == "norm") return DistanceMode::norm;
    if (name == "energy") return DistanceMode::energy;
    throw InputError("unknown distance mode: " + name + " (expected norm or energy)");
}

void validate_manifest(const ExperimentManifest& m) {
    problem_from_name(m.problem);
    make_initial_mesh(m.geometry);  // throws on unknown geometry
    mode_from_name(m.mode);
    for (double t : m.theta_list)
        if (!(t > 0.0 && t <= 1.0)) throw InputError("theta out of (0, 1]: " + fmt(t));
    for (double l : m.lambda_list)
        if (!(l > 0.0)) throw InputError("lambda must be positive: " + fmt(l));
    if (m.max_dofs < 1) throw InputError("max_dofs must be at least 1");
    if (m.max_total_steps < 1) throw InputError("max_total_steps must be at least 1");
    if (!(m.tail_fraction > 0.0 && m.tail_fraction <= 1.0))
        throw InputError("tail_fraction out of (0, 1]");
    if (m.output_dir.empty()) throw InputError("output directory must not be empty");
}

RunSummary run_single(const ExperimentManifest& m, double theta, double lambda) {
    const ProblemSpec spec = problem_from_name(m.problem);
    const Mesh initial = make_initial_mesh(m.geometry);
    AdaptiveConfig cfg;
    cfg.theta = theta;
    cfg.lambda_ctr = lambda;
    cfg.mode = mode_from_name(m.mode);
    cfg.max_dofs = m.max_dofs;
    cfg.max_total_steps = m.max_total_steps;
    AdaptiveResult res = run_adaptive(spec, initial, cfg);

    RunSummary s;
    s.theta = theta;
    s.lambda = lambda;
    s.record = std::move(res.record);
    s.status = res.status;
    const LoopRow& last = s.record.rows.back();
    s.final_eta = last.eta;
    s.final_dofs = last.num_free_dofs;
    s.total_steps = last.total_step;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    try {
        s.slope_vs_dofs = estimate_rate(s.record, RateAxis::dofs, m.tail_fraction);
    } catch (const InputError&) {
        s.slope_vs_dofs = nan;
    }
    try {
        s.slope_vs_cost = estimate_rate(s.record, RateAxis::cum_cost, m.tail_fraction);
    } catch (const InputError&) {
        s.slope_vs_cost = nan;
    }
    return s;
}

namespace {

std::string pair_tag(double theta, double lambda) {
    return "theta" + fmt(theta) + "_lambda" + fmt(lambda);
}

std::string pair_label(double theta, double lambda) {
    return "theta=" + fmt(theta) + " lambda=" + fmt(lambda);
}

}  // namespace

void cmd_run(const ExperimentManifest& m) {
    validate_manifest(m);
    std::filesystem::create_directories(m.output_dir);
    const std::string dir = m.output_dir + "/";

    {
        auto out = open_out(dir + "manifest.txt");
        out << serialize_manifest(m);
    }

    std::vector<RunSummary> sweep;
    for (double theta : m.theta_list) {
        for (double lambda : m.lambda_list) {
            std::printf("run %s: ", pair_label(theta, lambda).c_str());
            std::fflush(stdout);
            RunSummary s = run_single(m, theta, lambda);
            std::printf("levels=%zu steps=%ld dofs=%ld eta=%.3e slope=%.3f\n",
                        s.record.steps_per_level.size(), s.total_steps, s.final_dofs,
                        s.final_eta, s.slope_vs_dofs);
            write_record_csv(s.record, dir + "record_" + pair_tag(theta, lambda) + ".csv");
            sweep.push_back(std::move(s));
        }
    }

    {
        auto out = open_out(dir + "rates.csv");
        out << "theta,lambda,slope_vs_dofs,slope_vs_cost,final_eta,final_dofs,total_steps\n";
        for (const RunSummary& s : sweep) {
            out << fmt(s.theta) << "," << fmt(s.lambda) << "," << fmt(s.slope_vs_dofs) << ","
                << fmt(s.slope_vs_cost) << "," << fmt(s.final_eta) << "," << s.final_dofs
                << "," << s.total_steps << "\n";
        }
    }

    if (!m.plots) return;

    PlotSpec dofs_plot;
    dofs_plot.title = "estimator vs free dofs (" + m.problem + ", " + m.geometry + ")";
    dofs_plot.xlabel = "free dofs";
    dofs_plot.ylabel = "eta";
    dofs_plot.reference_slopes = {-0.5};
    PlotSpec cost_plot;
    cost_plot.title = "estimator vs cumulative cost (" + m.problem + ", " + m.geometry + ")";
    cost_plot.xlabel = "cumulative elements";
    cost_plot.ylabel = "eta";
    cost_plot.reference_slopes = {-0.5};
    PlotSpec iter_plot;
    iter_plot.title = "solver steps per level (" + m.problem + ", " + m.geometry + ")";
    iter_plot.xlabel = "free dofs";
    iter_plot.ylabel = "solver steps";
    iter_plot.log_y = false;

    for (const RunSummary& s : sweep) {
        const std::string label = pair_label(s.theta, s.lambda);
        dofs_plot.series.push_back({label, level_history(s.record, RateAxis::dofs)});
        cost_plot.series.push_back({label, level_history(s.record, RateAxis::cum_cost)});
        PlotSeries iter{label, {}};
        auto levels = level_history(s.record, RateAxis::dofs);
        size_t n = std::min(levels.size(), s.record.steps_per_level.size());
        for (size_t i = 0; i < n; ++i)
            iter.points.push_back({levels[i].first, double(s.record.steps_per_level[i])});
        iter_plot.series.push_back(std::move(iter));
    }

    write_svg_plot(dir + "plot_eta_vs_dofs.svg", dofs_plot);
    write_svg_plot(dir + "plot_eta_vs_cost.svg", cost_plot);
    write_svg_plot(dir + "plot_iterations.svg", iter_plot);
}

void cmd_mesh_demo(const std::string& geometry, int steps, const std::string& output_dir) {
    if (steps < 0 || steps > 40) throw InputError("mesh-demo steps out of [0, 40]");
    std::filesystem::create_directories(output_dir);
    Mesh mesh = make_initial_mesh(geometry);

    // Focus on the vertex closest to the origin (the reentrant corner of the
    // l_shape and z_shape domains).
    int focus = 0;
    double best = std::numeric_limits<double>::infinity();
    for (int v = 0; v < mesh.num_vertices(); ++v) {
        double d = norm(mesh.vertices[v]);
        if (d < best) {
            best = d;
            focus = v;
        }
    }

    save_mesh(mesh, output_dir + "/mesh_0.txt");
    for (int s = 1; s <= steps; ++s) {
        std::vector<int> marked;
        for (int e = 0; e < mesh.num_elements(); ++e) {
            const Element& el = mesh.elements[e];
            if (el.v[0] == focus || el.v[1] == focus || el.v[2] == focus)
                marked.push_back(e);
        }
        mesh = refine_nvb(mesh, marked).first;
        save_mesh(mesh, output_dir + "/mesh_" + std::to_string(s) + ".txt");
    }
    std::printf("wrote %d meshes to %s (final: %d elements)\n", steps + 1,
                output_dir.c_str(), mesh.num_elements());
}

namespace {

// Golden-section search for the minimum of f on [a, b], assuming a single
// interior minimum; shrinks the bracket below the tolerance.
template <class F>
std::pair<double, double> golden_min(F f, double a, double b, double tol) {
    const double inv_phi = 0.5 * (std::sqrt(5.0) - 1.0);
    double c = b - inv_phi * (b - a);
    double d = a + inv_phi * (b - a);
    double fc = f(c), fd = f(d);
    for (int it = 0; it < 400 && (b - a) > tol; ++it) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    double x = 0.5 * (a + b);
    return {x, f(x)};
}

}  // namespace

ConstantsReport verify_constants(const ProblemSpec& spec) {
    ConstantsReport r;
    r.spec_alpha = spec.alpha;
    r.spec_lipschitz = spec.lipschitz;

    if (spec.kind == ProblemKind::linear_diffusion || !spec.a) {
        // Constant-coefficient energy; the monotonicity and Lipschitz
        // constants of the identity diffusion are both 1.
        r.inf_value = r.sup_value = 1.0;
        r.inf_arg = r.sup_arg = 0.0;
        r.limit_at_zero = r.limit_at_cap = 1.0;
    } else {
        const Vec2 x0{0.25, 0.25};
        auto g = [&](double t) { return spec.a(x0, t) + 2.0 * t * spec.da_dt(x0, t); };

        // Coarse scan over [0, 1e6]: t = 0 plus log-spaced samples, to
        // bracket every interior extremum of this slowly varying function.
        std::vector<double> ts{0.0};
        const int n = 4096;
        for (int i = 0; i <= n; ++i)
            ts.push_back(std::pow(10.0, -8.0 + 14.0 * double(i) / double(n)));
        std::vector<double> gs(ts.size());
        for (size_t i = 0; i < ts.size(); ++i) gs[i] = g(ts[i]);

        r.limit_at_zero = gs.front();
        r.limit_at_cap = gs.back();
        size_t imin = 0, imax = 0;
        for (size_t i = 1; i < ts.size(); ++i) {
            if (gs[i] < gs[imin]) imin = i;
            if (gs[i] > gs[imax]) imax = i;
        }
        r.inf_value = gs[imin];
        r.inf_arg = ts[imin];
        r.sup_value = gs[imax];
        r.sup_arg = ts[imax];

        // Refine interior extrema by golden section to bracket width 1e-10.
        if (imin > 0 && imin + 1 < ts.size()) {
            auto [x, v] = golden_min(g, ts[imin - 1], ts[imin + 1], 1e-10);
            if (v < r.inf_value) {
                r.inf_value = v;
                r.inf_arg = x;
            }
        }
        if (imax > 0 && imax + 1 < ts.size()) {
            auto neg = [&](double t) { return -g(t); };
            auto [x, v] = golden_min(neg, ts[imax - 1], ts[imax + 1], 1e-10);
            if (-v > r.sup_value) {
                r.sup_value = -v;
                r.sup_arg = x;
            }
        }
    }

    r.matches_spec = std::abs(r.inf_value - r.spec_alpha) <= 1e-6 &&
                     std::abs(r.sup_value - r.spec_lipschitz) <= 1e-6;
    r.ratio = r.sup_value / r.inf_value;
    r.golden_ok = r.ratio < 0.5 * (1.0 + std::sqrt(5.0));
    return r;
}

std::string format_report(const ConstantsReport& r) {
    char buf[256];
    std::ostringstream out;
    out << "coefficient extrema of g(t) = a(t) + 2 t a'(t) over [0, 1e6]\n";
    std::snprintf(buf, sizeof(buf), "  inf g = %.12f at t = %.6e\n", r.inf_value, r.inf_arg);
    out << buf;
    std::snprintf(buf, sizeof(buf), "  sup g = %.12f at t = %.6e\n", r.sup_value, r.sup_arg);
    out << buf;
    std::snprintf(buf, sizeof(buf), "  boundary values: g(0) = %.12f, g(1e6) = %.12f\n",
                  r.limit_at_zero, r.limit_at_cap);
    out << buf;
    std::snprintf(buf, sizeof(buf),
                  "  stored: alpha = %.10f, lipschitz = %.10f -> agreement within 1e-6: %s\n",
                  r.spec_alpha, r.spec_lipschitz, r.matches_spec ? "yes" : "NO");
    out << buf;
    std::snprintf(buf, sizeof(buf),
                  "  lipschitz / alpha = %.10f, golden ratio = %.10f -> below: %s\n", r.ratio,
                  0.5 * (1.0 + std::sqrt(5.0)), r.golden_ok ? "yes" : "NO");
    out << buf;
    return out.str();
}

namespace {

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '&')
            out += "&amp;";
        else if (c == '<')
            out += "&lt;";
        else if (c == '>')
            out += "&gt;";
        else
            out.push_back(c);
    }
    return out;
}

const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                          "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
const int kPaletteSize = 10;

struct Canvas {
    double x0, y0, w, h;  // plot box in pixels, y grows downward
};

std::string px(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

}  // namespace

void write_svg_plot(const std::string& path, const PlotSpec& spec) {
    const double width = 780, height = 540;
    const Canvas c{70, 46, width - 70 - 190, height - 46 - 60};

    // Data ranges (x is always log scaled; skip nonpositive or nan points).
    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
    double ymin = xmin, ymax = -xmin;
    for (const PlotSeries& s : spec.series) {
        for (auto [x, y] : s.points) {
            if (!(x > 0.0) || !std::isfinite(x) || !std::isfinite(y)) continue;
            if (spec.log_y && !(y > 0.0)) continue;
            xmin = std::min(xmin, x);
            xmax = std::max(xmax, x);
            ymin = std::min(ymin, y);
            ymax = std::max(ymax, y);
        }
    }
    if (!(xmin < xmax)) {
        xmin = 1.0;
        xmax = 10.0;
    }
    if (!(ymin <= ymax)) {
        ymin = spec.log_y ? 0.1 : 0.0;
        ymax = 1.0;
    }
    if (ymin == ymax) {
        ymin -= spec.log_y ? 0.5 * ymin : 1.0;
        ymax += spec.log_y ? 0.5 * ymax : 1.0;
    }

    double lx0 = std::log10(xmin), lx1 = std::log10(xmax);
    double pad = 0.04 * (lx1 - lx0 + 1e-12);
    lx0 -= pad;
    lx1 += pad;
    double ly0, ly1;
    if (spec.log_y) {
        ly0 = std::log10(ymin);
        ly1 = std::log10(ymax);
        double p = 0.06 * (ly1 - ly0 + 1e-12);
        ly0 -= p;
        ly1 += p;
    } else {
        double span = ymax - ymin;
        ly0 = ymin - 0.08 * span;
        ly1 = ymax + 0.08 * span;
        if (ymin >= 0.0 && ly0 < 0.0) ly0 = 0.0;
    }

    auto tx = [&](double x) { return c.x0 + (std::log10(x) - lx0) / (lx1 - lx0) * c.w; };
    auto ty = [&](double y) {
        double v = spec.log_y ? std::log10(y) : y;
        return c.y0 + c.h - (v - ly0) / (ly1 - ly0) * c.h;
    };

    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot open for writing: " + path);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    out << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
    out << "<text x=\"" << px(c.x0 + c.w / 2) << "\" y=\"26\" text-anchor=\"middle\" "
        << "font-family=\"sans-serif\" font-size=\"15\">" << xml_escape(spec.title)
        << "</text>\n";

    // Axes box.
    out << "<rect x=\"" << px(c.x0) << "\" y=\"" << px(c.y0) << "\" width=\"" << px(c.w)
        << "\" height=\"" << px(c.h) << "\" fill=\"none\" stroke=\"black\"/>\n";

    // Decade ticks on x.
    for (int d = (int)std::ceil(lx0); d <= (int)std::floor(lx1); ++d) {
        double X = tx(std::pow(10.0, d));
        out << "<line x1=\"" << px(X) << "\" y1=\"" << px(c.y0) << "\" x2=\"" << px(X)
            << "\" y2=\"" << px(c.y0 + c.h) << "\" stroke=\"#dddddd\"/>\n";
        out << "<text x=\"" << px(X) << "\" y=\"" << px(c.y0 + c.h + 18)
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">1e" << d
            << "</text>\n";
    }
    // y ticks: decades when log, 6 even steps otherwise.
    if (spec.log_y) {
        for (int d = (int)std::ceil(ly0); d <= (int)std::floor(ly1); ++d) {
            double Y = ty(std::pow(10.0, d));
            out << "<line x1=\"" << px(c.x0) << "\" y1=\"" << px(Y) << "\" x2=\""
                << px(c.x0 + c.w) << "\" y2=\"" << px(Y) << "\" stroke=\"#dddddd\"/>\n";
            out << "<text x=\"" << px(c.x0 - 6) << "\" y=\"" << px(Y + 4)
                << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\">1e" << d
                << "</text>\n";
        }
    } else {
        for (int i = 0; i <= 6; ++i) {
            double v = ly0 + (ly1 - ly0) * double(i) / 6.0;
            double Y = ty(v);
            char lab[32];
            std::snprintf(lab, sizeof(lab), "%g", v);
            out << "<line x1=\"" << px(c.x0) << "\" y1=\"" << px(Y) << "\" x2=\""
                << px(c.x0 + c.w) << "\" y2=\"" << px(Y) << "\" stroke=\"#dddddd\"/>\n";
            out << "<text x=\"" << px(c.x0 - 6) << "\" y=\"" << px(Y + 4)
                << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\">" << lab
                << "</text>\n";
        }
    }

    // Axis labels.
    out << "<text x=\"" << px(c.x0 + c.w / 2) << "\" y=\"" << px(height - 14)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">"
        << xml_escape(spec.xlabel) << "</text>\n";
    out << "<text x=\"18\" y=\"" << px(c.y0 + c.h / 2)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
        << "transform=\"rotate(-90 18 " << px(c.y0 + c.h / 2) << ")\">"
        << xml_escape(spec.ylabel) << "</text>\n";

    // Series.
    for (size_t si = 0; si < spec.series.size(); ++si) {
        const PlotSeries& s = spec.series[si];
        const char* color = kPalette[si % kPaletteSize];
        std::string pts;
        for (auto [x, y] : s.points) {
            if (!(x > 0.0) || !std::isfinite(x) || !std::isfinite(y)) continue;
            if (spec.log_y && !(y > 0.0)) continue;
            pts += px(tx(x)) + "," + px(ty(y)) + " ";
        }
        if (!pts.empty()) {
            out << "<polyline points=\"" << pts << "\" fill=\"none\" stroke=\"" << color
                << "\" stroke-width=\"1.5\"/>\n";
            // Small markers.
            std::istringstream ps(pts);
            std::string tok;
            while (ps >> tok) {
                size_t comma = tok.find(',');
                out << "<circle cx=\"" << tok.substr(0, comma) << "\" cy=\""
                    << tok.substr(comma + 1) << "\" r=\"2.2\" fill=\"" << color << "\"/>\n";
            }
        }
        // Legend entry.
        double ly = c.y0 + 12 + 18.0 * double(si);
        double lxx = c.x0 + c.w + 14;
        out << "<line x1=\"" << px(lxx) << "\" y1=\"" << px(ly) << "\" x2=\"" << px(lxx + 22)
            << "\" y2=\"" << px(ly) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
        out << "<text x=\"" << px(lxx + 28) << "\" y=\"" << px(ly + 4)
            << "\" font-family=\"sans-serif\" font-size=\"11\">" << xml_escape(s.label)
            << "</text>\n";
    }

    // Reference slope triangles (log-log only).
    if (spec.log_y) {
        for (size_t ri = 0; ri < spec.reference_slopes.size(); ++ri) {
            double slope = spec.reference_slopes[ri];
            double ax = lx0 + (0.55 + 0.12 * double(ri)) * (lx1 - lx0);
            double bx = ax + 0.18 * (lx1 - lx0);
            double ay = ly0 + (0.72 - 0.16 * double(ri)) * (ly1 - ly0);
            double by = ay + slope * (bx - ax);
            auto TX = [&](double lx) { return c.x0 + (lx - lx0) / (lx1 - lx0) * c.w; };
            auto TY = [&](double ly_) { return c.y0 + c.h - (ly_ - ly0) / (ly1 - ly0) * c.h; };
            out << "<polyline points=\"" << px(TX(ax)) << "," << px(TY(ay)) << " " << px(TX(bx))
                << "," << px(TY(ay)) << " " << px(TX(bx)) << "," << px(TY(by)) << " "
                << px(TX(ax)) << "," << px(TY(ay))
                << "\" fill=\"none\" stroke=\"#444444\" stroke-width=\"1\"/>\n";
            char lab[32];
            std::snprintf(lab, sizeof(lab), "%g", slope);
            out << "<text x=\"" << px(TX(bx) + 5) << "\" y=\"" << px(0.5 * (TY(ay) + TY(by)))
                << "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#444444\">" << lab
                << "</text>\n";
        }
    }

    out << "</svg>\n";
    if (!out) throw InputError("write failed: " + path);
}

}  // namespace afem
