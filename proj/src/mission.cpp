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
#include "ddpc/deepc.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>

namespace ddpc::deepc {

std::vector<std::vector<Vector>> MissionLog::state_history() const {
    std::vector<std::vector<Vector>> out;
    out.reserve(steps.size() + 1);
    for (const auto& s : steps) {
        out.push_back(s.x);
    }
    if (!final_x.empty()) {
        out.push_back(final_x);
    }
    return out;
}

namespace {

Vector unit_or_empty(const Vector& v) {
    const double n = v.norm();
    return n > 1e-9 ? Vector(v / n) : Vector();
}

/// Unit vector perpendicular to `dir` (3-D), preferring dir x axis.
Vector lateral_direction(const Vector& dir, const Vector& axis) {
    const Eigen::Vector3d d = dir.head<3>();
    Vector w = unit_or_empty(d.cross(Eigen::Vector3d(axis.head<3>())));
    if (w.size() == 0) {
        for (int k = 0; k < 3 && w.size() == 0; ++k) {
            w = unit_or_empty(d.cross(Eigen::Vector3d::Unit(k)));
        }
    }
    return w;
}

Vector latest_output(const AgentWindow& w, int q) { return w.y_p.tail(q); }

void push_window(AgentWindow& w, const Vector& u, const Vector& y) {
    const auto m = u.size();
    const auto q = y.size();
    const auto nu = w.u_p.size();
    const auto ny = w.y_p.size();
    if (nu > m) w.u_p.head(nu - m) = w.u_p.tail(nu - m).eval();
    if (ny > q) w.y_p.head(ny - q) = w.y_p.tail(ny - q).eval();
    w.u_p.tail(m) = u;
    w.y_p.tail(q) = y;
}

double min_slack(const std::vector<chance::CollisionConstraint>& constraints, const std::vector<Vector>& mu,
                 const std::vector<Matrix>& extract, int* active) {
    double lowest = std::numeric_limits<double>::infinity();
    *active = 0;
    for (const auto& c : constraints) {
        const auto qi = extract[c.i].cols();
        const auto qj = extract[c.j].cols();
        const double s = c.slack(extract[c.i] * mu[c.i].segment(c.step * qi, qi),
                                 extract[c.j] * mu[c.j].segment(c.step * qj, qj));
        lowest = std::min(lowest, s);
        if (s <= 1e-6) ++*active;
    }
    return lowest;
}

}  // namespace

std::vector<Vector> initial_anchors(const MissionSetup& setup, const std::vector<AgentWindow>& windows) {
    std::vector<Vector> anchors;
    anchors.reserve(setup.agents.size());
    for (std::size_t i = 0; i < setup.agents.size(); ++i) {
        const auto& spec = setup.agents[i].spec;
        const int q = spec.q(), Tf = spec.T_f();
        const Vector current = latest_output(windows[i], q);
        Vector anchor = straight_line_anchor(current, spec.r, Tf, setup.anchor_speed * setup.agents[i].plant.dt());
        if (setup.anchor_swirl != 0.0) {
            const Matrix& M = spec.geometry.pos_extract;
            detail::require(M.rows() == 3, "anchor swirl needs three position coordinates");
            detail::require_dims(setup.swirl_axis.size() == 3, "swirl axis must be a 3-vector");
            const Vector travel = M * (spec.r.segment((Tf - 1) * q, q) - current);
            const Vector w = lateral_direction(travel, setup.swirl_axis);
            if (travel.norm() > 1e-9 && w.size() == 3) {
                for (int k = 0; k < Tf; ++k) {
                    const double s = std::sin(std::numbers::pi * (k + 1) / Tf);
                    anchor.segment(k * q, q) += M.transpose() * (setup.anchor_swirl * s * w);
                }
            }
        }
        anchors.push_back(std::move(anchor));
    }
    return anchors;
}

MissionLog run_mission(const MissionSetup& setup) {
    const auto N = static_cast<int>(setup.agents.size());
    detail::require(N >= 1, "at least one agent is required");
    detail::require(setup.steps >= 0, "mission length must be non-negative");
    detail::require_dims(setup.phi.rows() >= N && setup.phi.cols() >= N, "phi must be N x N");

    MissionLog log;
    log.agents = N;
    log.dt = setup.agents.front().plant.dt();

    std::vector<Vector> x;
    std::vector<AgentWindow> windows;
    std::vector<AgentSpec> specs;
    std::vector<Matrix> extract;
    for (const auto& a : setup.agents) {
        detail::require_dims(a.x0.size() == a.plant.n(), "x0 must have n entries");
        a.spec.validate();
        x.push_back(a.x0);
        windows.push_back(a.initial_window);
        specs.push_back(a.spec);
        extract.push_back(a.spec.geometry.pos_extract);
    }
    const int Tf = specs.front().T_f();

    std::vector<Vector> anchors;
    for (int t = 0; t < setup.steps; ++t) {
        anchors = t == 0 ? initial_anchors(setup, windows) : anchors;
        StepRecord rec;
        rec.x = x;
        std::vector<Vector> inputs;
        std::vector<Vector> mu;
        std::vector<chance::CollisionConstraint> constraints;
        const auto start = std::chrono::steady_clock::now();
        try {
            if (setup.controller == Controller::deepc) {
                StepSolution sol = solve_step(specs, windows, anchors, setup.d_safe, setup.phi, setup.options);
                rec.objective = sol.objective;
                rec.status = sol.status;
                rec.soft = sol.soft;
                rec.qp_iterations = sol.qp_iterations;
                rec.scp_iterations = sol.scp_iterations;
                for (auto& p : sol.agents) {
                    inputs.push_back(p.first_input);
                    mu.push_back(p.mu);
                }
                constraints = std::move(sol.constraints);
            } else {
                std::vector<ModelAgent> agents;
                for (int i = 0; i < N; ++i) {
                    const auto& a = setup.agents[i];
                    agents.push_back(ModelAgent{a.plant, x[i], a.spec.Q, a.spec.R, a.spec.r, a.spec.bounds_u,
                                                a.spec.bounds_y, a.spec.geometry});
                }
                ModelStepSolution sol = model_mpc_step(agents, Tf, anchors, setup.d_safe, setup.phi, setup.options);
                rec.objective = sol.objective;
                rec.status = sol.status;
                rec.soft = sol.soft;
                rec.qp_iterations = sol.qp_iterations;
                rec.scp_iterations = 1;
                for (auto& p : sol.agents) {
                    inputs.push_back(p.first_input);
                    mu.push_back(p.mu);
                }
                constraints = std::move(sol.constraints);
            }
        } catch (const std::exception& e) {
            log.aborted = true;
            log.error = fmt::format("step {}: {}", t, e.what());
            spdlog::error("mission aborted at {}", log.error);
            log.final_x = x;
            return log;
        }
        rec.solve_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        rec.min_constraint_slack = min_slack(constraints, mu, extract, &rec.active_constraints);
        if (rec.soft) {
            spdlog::warn("step {} solved with softened collision constraints", t);
        }

        for (int i = 0; i < N; ++i) {
            const auto r = linsys::step(setup.agents[i].plant, x[i], inputs[i]);
            rec.y.push_back(r.y);
            push_window(windows[i], inputs[i], r.y);
            x[i] = r.x_next;
        }
        rec.u = inputs;
        rec.mu = mu;
        for (int i = 0; i < N; ++i) {
            anchors[i] = shift_anchor(mu[i], specs[i].q());
        }
        spdlog::debug("step {} objective {:.6g} iterations {}", t, rec.objective, rec.qp_iterations);
        log.steps.push_back(std::move(rec));
    }
    log.final_x = x;
    return log;
}

}  // namespace ddpc::deepc
