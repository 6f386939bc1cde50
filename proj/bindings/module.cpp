#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "afem/adaptivity.hpp"
#include "afem/errors.hpp"
#include "afem/experiment.hpp"
#include "afem/mesh.hpp"
#include "afem/solvers.hpp"
#include "afem/validation.hpp"

namespace py = pybind11;
using namespace afem;

namespace {

ProblemSpec spec_by_name(const std::string& name) { return problem_from_name(name); }

py::dict row_to_dict(const LoopRow& r) {
    py::dict d;
    d["ell"] = r.ell;
    d["k"] = r.k;
    d["total_step"] = r.total_step;
    d["num_elements"] = r.num_elements;
    d["num_free_dofs"] = r.num_free_dofs;
    d["eta"] = r.eta;
    d["dl_increment"] = r.dl_increment;
    d["cum_elements"] = r.cum_elements;
    d["wall_time_ms"] = r.wall_time_ms;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Adaptive P1 finite elements with contractive solvers";

    py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
    py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

    py::class_<Mesh>(m, "Mesh")
        .def_property_readonly("num_vertices", &Mesh::num_vertices)
        .def_property_readonly("num_elements", &Mesh::num_elements)
        .def_property_readonly("vertices",
                               [](const Mesh& mesh) {
                                   std::vector<std::pair<double, double>> out;
                                   for (const Vec2& p : mesh.vertices)
                                       out.emplace_back(p.x, p.y);
                                   return out;
                               })
        .def_property_readonly("elements",
                               [](const Mesh& mesh) {
                                   std::vector<std::array<int, 3>> out;
                                   for (const Element& e : mesh.elements) out.push_back(e.v);
                                   return out;
                               })
        .def_property_readonly("levels",
                               [](const Mesh& mesh) {
                                   std::vector<int> out;
                                   for (const Element& e : mesh.elements)
                                       out.push_back(e.level);
                                   return out;
                               })
        .def("min_angle", &Mesh::min_angle)
        .def("__repr__", [](const Mesh& mesh) {
            return "Mesh(" + std::to_string(mesh.num_vertices()) + " vertices, " +
                   std::to_string(mesh.num_elements()) + " elements)";
        });

    m.def("make_initial_mesh", &make_initial_mesh, py::arg("geometry"),
          "Initial triangulation: unit_square, l_shape, or z_shape");
    m.def(
        "refine",
        [](const Mesh& mesh, const std::vector<int>& marked) {
            return refine_nvb(mesh, marked).first;
        },
        py::arg("mesh"), py::arg("marked"),
        "Newest-vertex bisection of the marked elements with conforming closure");
    m.def("overlay", &overlay, py::arg("a"), py::arg("b"), py::arg("common_ancestor"),
          "Coarsest common refinement of two meshes");
    m.def(
        "save_mesh",
        [](const Mesh& mesh, const std::string& path) { save_mesh(mesh, path); },
        py::arg("mesh"), py::arg("path"));
    m.def("load_mesh", [](const std::string& path) { return load_mesh(path); },
          py::arg("path"));

    m.def(
        "solve",
        [](const std::string& problem, const Mesh& mesh, double tol) {
            ProblemSpec spec = spec_by_name(problem);
            DiscreteFunction u = spec.kind == ProblemKind::linear_diffusion
                                     ? solve_linear_direct(mesh, spec)
                                     : solve_nonlinear_picard(mesh, spec, tol);
            return u.values;
        },
        py::arg("problem"), py::arg("mesh"), py::arg("tol") = 1e-10,
        "Exact discrete solution; returns one value per vertex");
    m.def(
        "estimate",
        [](const std::string& problem, const Mesh& mesh, const std::vector<double>& values) {
            ProblemSpec spec = spec_by_name(problem);
            DiscreteFunction u{mesh.generation_id, values};
            return indicators(mesh, spec, u).eta_sq;
        },
        py::arg("problem"), py::arg("mesh"), py::arg("values"),
        "Squared error indicators, one per element");
    m.def("mark", &doerfler_mark, py::arg("eta_sq"), py::arg("theta"),
          "Minimal-cardinality bulk marking; returns element ids");

    m.def(
        "run_adaptive",
        [](const std::string& problem, const std::string& geometry, double theta,
           double lambda_ctr, const std::string& mode, long max_dofs) {
            ProblemSpec spec = spec_by_name(problem);
            AdaptiveConfig cfg;
            cfg.theta = theta;
            cfg.lambda_ctr = lambda_ctr;
            cfg.mode = mode_from_name(mode);
            cfg.max_dofs = max_dofs;
            AdaptiveResult res = run_adaptive(spec, make_initial_mesh(geometry), cfg);
            py::list rows;
            for (const LoopRow& r : res.record.rows) rows.append(row_to_dict(r));
            py::dict out;
            out["rows"] = rows;
            out["steps_per_level"] = res.record.steps_per_level;
            out["num_elements"] = res.mesh.num_elements();
            out["solution"] = res.solution.values;
            double slope_dofs = 0.0, slope_cost = 0.0;
            try {
                slope_dofs = estimate_rate(res.record, RateAxis::dofs);
                slope_cost = estimate_rate(res.record, RateAxis::cum_cost);
            } catch (const InputError&) {
            }
            out["slope_vs_dofs"] = slope_dofs;
            out["slope_vs_cost"] = slope_cost;
            return out;
        },
        py::arg("problem"), py::arg("geometry"), py::arg("theta") = 0.5,
        py::arg("lambda_ctr") = 1e-2, py::arg("mode") = "norm",
        py::arg("max_dofs") = 10000,
        "Adaptive loop; returns the per-step record and fitted rates");

    m.def(
        "verify_constants",
        [](const std::string& problem) {
            ConstantsReport r = verify_constants(spec_by_name(problem));
            py::dict out;
            out["inf"] = r.inf_value;
            out["inf_arg"] = r.inf_arg;
            out["sup"] = r.sup_value;
            out["sup_arg"] = r.sup_arg;
            out["matches"] = r.matches_spec;
            out["ratio"] = r.ratio;
            out["golden_ok"] = r.golden_ok;
            return out;
        },
        py::arg("problem") = "scalar_nonlinear",
        "Extrema of the nonlinearity coefficient a(t) + 2 t a'(t)");

    m.def(
        "run_axioms",
        [](const std::string& geometry, unsigned long long seed) {
            py::list out;
            for (const CheckResult& r : run_axiom_suite(geometry, seed)) {
                py::dict d;
                d["name"] = r.name;
                d["pass"] = r.pass;
                d["detail"] = r.detail;
                out.append(d);
            }
            return out;
        },
        py::arg("geometry") = "l_shape", py::arg("seed") = 1,
        "Property audit; returns one entry per check");
}
