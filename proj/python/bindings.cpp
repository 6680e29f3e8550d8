/*
 Copyright 2026 The ddpc Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/
#include "ddpc/behavior.hpp"
#include "ddpc/chance.hpp"
#include "ddpc/deepc.hpp"
#include "ddpc/harness.hpp"
#include "ddpc/linsys.hpp"
#include "ddpc/qpsolve.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace ddpc;

namespace {

py::dict metrics_dict(const harness::Metrics& m) {
    py::dict d;
    d["min_pairwise_distance"] = m.min_pairwise_distance;
    d["terminal_error"] = m.terminal_error;
    d["max_input_violation"] = m.max_input_violation;
    d["mean_solve_seconds"] = m.mean_solve_seconds;
    d["max_solve_seconds"] = m.max_solve_seconds;
    d["total_qp_iterations"] = m.total_qp_iterations;
    d["max_qp_iterations"] = m.max_qp_iterations;
    d["soft_steps"] = m.soft_steps;
    d["w_norm_2"] = m.w_norm_2;
    d["w_norm_inf"] = m.w_norm_inf;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Data-driven predictive control for multi-agent collision avoidance";

    py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
    py::register_exception<NumericalError>(m, "NumericalError", PyExc_RuntimeError);
    py::register_exception<harness::ScenarioError>(m, "ScenarioError", PyExc_ValueError);

    // linsys
    py::class_<linsys::StateSpace>(m, "StateSpace")
        .def(py::init<Matrix, Matrix, Matrix, Matrix, double>(), py::arg("A"), py::arg("B"), py::arg("C"),
             py::arg("D"), py::arg("dt"))
        .def_property_readonly("A", &linsys::StateSpace::A)
        .def_property_readonly("B", &linsys::StateSpace::B)
        .def_property_readonly("C", &linsys::StateSpace::C)
        .def_property_readonly("D", &linsys::StateSpace::D)
        .def_property_readonly("dt", &linsys::StateSpace::dt)
        .def_property_readonly("n", &linsys::StateSpace::n)
        .def_property_readonly("m", &linsys::StateSpace::m)
        .def_property_readonly("q", &linsys::StateSpace::q);
    m.def("make_drone_model", &linsys::make_drone_model);
    m.def(
        "step",
        [](const linsys::StateSpace& s, const Vector& x, const Vector& u) {
            auto r = linsys::step(s, x, u);
            return py::make_tuple(r.x_next, r.y);
        },
        py::arg("model"), py::arg("x"), py::arg("u"), "Returns (x_next, y).");
    m.def("spectral_radius", &linsys::spectral_radius);
    m.def(
        "design_stabilizing_gain",
        [](const linsys::StateSpace& s, const Matrix& Q, const Matrix& R) {
            return linsys::design_stabilizing_gain(s, Q, R).K;
        },
        py::arg("model"), py::arg("state_weight"), py::arg("input_weight"));
    m.def(
        "simulate_closed_loop",
        [](const linsys::StateSpace& s, const Matrix& K, const Matrix& ur, const Vector& x0) {
            auto d = linsys::simulate_closed_loop(s, {K}, ur, x0);
            return py::make_tuple(d.u, d.y);
        },
        py::arg("model"), py::arg("K"), py::arg("excitation"), py::arg("x0"), "Returns (u, y), one column per sample.");
    m.def(
        "simulate_open_loop",
        [](const linsys::StateSpace& s, const Matrix& u, const Vector& x0) {
            return linsys::simulate_open_loop(s, u, x0).y;
        },
        py::arg("model"), py::arg("inputs"), py::arg("x0"));
    m.def("uniform_excitation", &linsys::uniform_excitation, py::arg("m"), py::arg("T"), py::arg("lo"),
          py::arg("hi"), py::arg("seed"));

    // behavior
    m.def("hankel", &behavior::hankel, py::arg("seq"), py::arg("L"));
    m.def("is_persistently_exciting", &behavior::is_persistently_exciting, py::arg("seq"), py::arg("L"),
          py::arg("tol") = 1e-9);
    m.def("min_samples", &behavior::min_samples, py::arg("m"), py::arg("L"));
    m.def("excitation_order", &behavior::excitation_order, py::arg("T_p"), py::arg("T_f"), py::arg("n"));
    m.def(
        "behavior_matrix",
        [](const Matrix& u, const Matrix& y, int T_p, int T_f) {
            return behavior::build_behavior_matrix({u, y, 1.0}, T_p, T_f).W();
        },
        py::arg("u"), py::arg("y"), py::arg("T_p"), py::arg("T_f"), "W = [U_p; Y_p; U_f; Y_f].");
    m.def(
        "span_residual",
        [](const Matrix& u_data, const Matrix& y_data, int T_p, int T_f, const Matrix& u, const Matrix& y) {
            return behavior::span_residual(behavior::build_behavior_matrix({u_data, y_data, 1.0}, T_p, T_f), u, y);
        },
        py::arg("u_data"), py::arg("y_data"), py::arg("T_p"), py::arg("T_f"), py::arg("u"), py::arg("y"));

    // chance
    m.def("erf", &chance::erf);
    m.def("erf_inv", &chance::erf_inv);
    m.def("normal_cdf", &chance::normal_cdf);
    m.def(
        "relax_collision",
        [](const Vector& mu_i, const Vector& mu_j, const Matrix& S_i, const Matrix& S_j, double d_safe, double phi) {
            auto c = chance::relax_collision(mu_i, mu_j, S_i, S_j, d_safe, phi);
            return py::make_tuple(c.k, c.eta);
        },
        py::arg("mu_i"), py::arg("mu_j"), py::arg("sigma_i"), py::arg("sigma_j"), py::arg("d_safe"), py::arg("phi"),
        "Returns (k, eta).");
    m.def(
        "mc_collision_probability",
        [](const Vector& mu_i, const Matrix& S_i, const Vector& mu_j, const Matrix& S_j, double d_safe, int n,
           std::uint64_t seed) {
            return chance::mc_collision_probability({mu_i, S_i}, {mu_j, S_j}, d_safe, n, seed);
        },
        py::arg("mu_i"), py::arg("sigma_i"), py::arg("mu_j"), py::arg("sigma_j"), py::arg("d_safe"),
        py::arg("n_samples"), py::arg("seed"));

    // qpsolve
    m.def(
        "solve_qp",
        [](const Matrix& P, const Vector& c, std::optional<Matrix> Aeq, std::optional<Vector> beq,
           std::optional<Matrix> Ain, std::optional<Vector> bin, std::optional<Vector> lo, std::optional<Vector> hi,
           double eps) {
            auto p = qp::QpProblem::unconstrained(P, c);
            if (Aeq) {
                p.Aeq = *Aeq;
                p.beq = beq.value_or(Vector::Zero(Aeq->rows()));
            }
            if (Ain) {
                p.Ain = *Ain;
                p.bin = bin.value_or(Vector::Zero(Ain->rows()));
            }
            if (lo) p.lo = *lo;
            if (hi) p.hi = *hi;
            qp::QpSettings s;
            s.eps_prim = s.eps_dual = eps;
            auto sol = qp::solve(p, s);
            py::dict out;
            out["z"] = sol.z;
            out["y_eq"] = sol.y_eq;
            out["y_in"] = sol.y_in;
            out["y_box"] = sol.y_box;
            out["objective"] = sol.objective;
            out["status"] = qp::to_string(sol.status);
            out["iterations"] = sol.iterations;
            out["residuals"] = py::make_tuple(sol.residuals.primal, sol.residuals.dual, sol.residuals.gap);
            return out;
        },
        py::arg("P"), py::arg("c"), py::arg("Aeq") = py::none(), py::arg("beq") = py::none(),
        py::arg("Ain") = py::none(), py::arg("bin") = py::none(), py::arg("lo") = py::none(),
        py::arg("hi") = py::none(), py::arg("eps") = 1e-6,
        "min 1/2 z'Pz + c'z  s.t. Aeq z = beq, Ain z <= bin, lo <= z <= hi.");

    // harness
    m.def(
        "load_scenario",
        [](const std::filesystem::path& p) { return harness::parse_scenario(p).to_json(); },
        py::arg("path"), "Validated scenario with defaults filled in, as a JSON string.");
    m.def(
        "collect",
        [](const std::filesystem::path& scenario, const std::filesystem::path& out) {
            auto r = harness::cmd_collect(harness::parse_scenario(scenario), out);
            py::list agents;
            for (const auto& a : r.agents) {
                py::dict d;
                d["rows"] = a.w_rows;
                d["cols"] = a.w_cols;
                d["norm_2"] = a.w_norm_2;
                d["norm_inf"] = a.w_norm_inf;
                d["K"] = a.gain.K;
                agents.append(d);
            }
            return agents;
        },
        py::arg("scenario"), py::arg("out"));
    m.def(
        "run",
        [](const std::filesystem::path& scenario, const std::filesystem::path& data, const std::filesystem::path& out,
           std::optional<int> steps) {
            auto cfg = harness::parse_scenario(scenario);
            if (steps) {
                harness::Overrides o;
                o.steps = steps;
                harness::apply_overrides(cfg, o);
            }
            harness::RunResult r;
            {
                py::gil_scoped_release release;
                r = harness::cmd_run(cfg, data, out);
            }
            py::dict d = metrics_dict(r.metrics);
            d["ok"] = r.ok;
            d["steps"] = r.log.steps.size();
            d["aborted"] = r.log.aborted;
            return d;
        },
        py::arg("scenario"), py::arg("data"), py::arg("out"), py::arg("steps") = py::none());
    m.def(
        "compare",
        [](const std::filesystem::path& a, const std::filesystem::path& b) {
            auto c = harness::cmd_compare(a, b);
            py::dict d;
            d["steps"] = c.steps;
            d["input_diff"] = c.input_diff;
            d["output_diff"] = c.output_diff;
            d["max_input_diff"] = c.max_input_diff;
            d["max_output_diff"] = c.max_output_diff;
            d["max_input_diff_relative"] = c.max_input_diff_relative;
            d["max_output_diff_relative"] = c.max_output_diff_relative;
            return d;
        },
        py::arg("log_a"), py::arg("log_b"));
    m.def("plotdata", &harness::cmd_plotdata, py::arg("log"), py::arg("out"));
}
