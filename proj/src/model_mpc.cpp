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

#include <algorithm>
#include <cmath>

namespace ddpc::deepc {

PredictionMatrices prediction_matrices(const linsys::StateSpace& model, int T_f) {
    detail::require(T_f >= 1, "T_f must be >= 1");
    const int n = model.n(), m = model.m(), q = model.q();
    PredictionMatrices pm;
    pm.Gx = Matrix::Zero(n * T_f, n);
    pm.Hx = Matrix::Zero(n * T_f, m * T_f);
    pm.Gy = Matrix::Zero(q * T_f, n);
    pm.Hy = Matrix::Zero(q * T_f, m * T_f);

    // powers[k] = A^k
    std::vector<Matrix> powers(static_cast<std::size_t>(T_f + 1));
    powers[0] = Matrix::Identity(n, n);
    for (int k = 1; k <= T_f; ++k) {
        powers[k] = model.A() * powers[k - 1];
    }
    for (int k = 0; k < T_f; ++k) {
        pm.Gx.block(k * n, 0, n, n) = powers[k + 1];
        pm.Gy.block(k * q, 0, q, n) = model.C() * powers[k];
        for (int j = 0; j <= k; ++j) {
            pm.Hx.block(k * n, j * m, n, m) = powers[k - j] * model.B();
            pm.Hy.block(k * q, j * m, q, m) = j == k ? model.D() : Matrix(model.C() * powers[k - j - 1] * model.B());
        }
    }
    return pm;
}

namespace {

struct ModelBlocks {
    PredictionMatrices pm;
    Vector free_y;  // Gy x_t
};

Vector positions_at(const Matrix& M, const Vector& traj, int step) {
    return M * traj.segment(step * M.cols(), M.cols());
}

}  // namespace

ModelStepSolution model_mpc_step(const std::vector<ModelAgent>& agents, int T_f, const std::vector<Vector>& anchors,
                                 double d_safe, const Matrix& phi, const StepOptions& options) {
    const auto N = static_cast<int>(agents.size());
    detail::require(N >= 1, "at least one agent is required");
    detail::require(options.n_scp >= 1, "n_scp must be >= 1");

    std::vector<ModelBlocks> blocks;
    std::vector<int> offsets;
    std::vector<CollisionGeometry> geometry;
    int nu = 0;
    for (const auto& a : agents) {
        const int m = a.model.m(), q = a.model.q();
        detail::require_dims(a.x_t.size() == a.model.n(), "x_t must have n entries");
        detail::require_dims(a.Q.rows() == q * T_f && a.Q.cols() == q * T_f, "Q must be qT_f x qT_f");
        detail::require_dims(a.R.rows() == m * T_f && a.R.cols() == m * T_f, "R must be mT_f x mT_f");
        detail::require_dims(a.r.size() == q * T_f, "reference must have length qT_f");
        detail::require_dims(a.bounds_u.lo.size() == m && a.bounds_u.hi.size() == m, "input bounds must be m-vectors");
        ModelBlocks b;
        b.pm = prediction_matrices(a.model, T_f);
        b.free_y = b.pm.Gy * a.x_t;
        blocks.push_back(std::move(b));
        offsets.push_back(nu);
        nu += m * T_f;
        geometry.push_back(a.geometry);
    }

    qp::QpSettings settings = options.solver;
    settings.check_convexity = false;

    std::vector<Vector> current = anchors;
    bool soft = options.soft_collisions;
    ModelStepSolution result;
    int total_iterations = 0;

    for (int iter = 0; iter < options.n_scp; ++iter) {
        auto constraints = N > 1 ? linearize_collisions(geometry, current, T_f, d_safe, phi)
                                 : std::vector<chance::CollisionConstraint>{};

        // Samples no input can move (D = 0 at the current output) are only evaluated.
        std::vector<int> imposed;
        const auto fixed = [&](int agent, int step) {
            const int qa = agents[agent].model.q();
            const Matrix sens = agents[agent].geometry.pos_extract * blocks[agent].pm.Hy.middleRows(step * qa, qa);
            return sens.cwiseAbs().maxCoeff() == 0.0;
        };
        for (std::size_t idx = 0; idx < constraints.size(); ++idx) {
            const auto& con = constraints[idx];
            if (!(fixed(con.i, con.step) && fixed(con.j, con.step))) {
                imposed.push_back(static_cast<int>(idx));
            }
        }

        const auto build = [&](bool with_slack) {
            const int ns = with_slack ? static_cast<int>(imposed.size()) : 0;
            const int d = nu + ns;
            qp::QpProblem qp;
            qp.P = Matrix::Zero(d, d);
            qp.c = Vector::Zero(d);
            qp.lo = Vector::Constant(d, -qp::kInf);
            qp.hi = Vector::Constant(d, qp::kInf);
            qp.Aeq = Matrix::Zero(0, d);
            qp.beq = Vector::Zero(0);
            std::vector<Vector> rows;
            std::vector<double> rhs;
            double constant = 0.0;
            for (int i = 0; i < N; ++i) {
                const auto& a = agents[i];
                const auto& b = blocks[i];
                const int m = a.model.m(), q = a.model.q();
                const int off = offsets[i];
                const Vector e = b.free_y - a.r;
                Matrix Pi = 2.0 * (b.pm.Hy.transpose() * a.Q * b.pm.Hy + a.R);
                qp.P.block(off, off, m * T_f, m * T_f) = 0.5 * (Pi + Pi.transpose());
                qp.c.segment(off, m * T_f) = 2.0 * b.pm.Hy.transpose() * (a.Q * e);
                constant += e.dot(a.Q * e);
                for (int k = 0; k < T_f; ++k) {
                    qp.lo.segment(off + k * m, m) = a.bounds_u.lo;
                    qp.hi.segment(off + k * m, m) = a.bounds_u.hi;
                }
                if (a.bounds_y) {
                    for (int k = 0; k < T_f; ++k) {
                        for (int c = 0; c < q; ++c) {
                            const Vector h = b.pm.Hy.row(k * q + c).transpose();
                            const double f = b.free_y(k * q + c);
                            if (std::isfinite(a.bounds_y->hi(c))) {
                                Vector row = Vector::Zero(d);
                                row.segment(off, m * T_f) = h;
                                rows.push_back(std::move(row));
                                rhs.push_back(a.bounds_y->hi(c) - f);
                            }
                            if (std::isfinite(a.bounds_y->lo(c))) {
                                Vector row = Vector::Zero(d);
                                row.segment(off, m * T_f) = -h;
                                rows.push_back(std::move(row));
                                rhs.push_back(f - a.bounds_y->lo(c));
                            }
                        }
                    }
                }
            }
            for (std::size_t n = 0; n < imposed.size(); ++n) {
                const auto& con = constraints[static_cast<std::size_t>(imposed[n])];
                const auto& ai = agents[con.i];
                const auto& aj = agents[con.j];
                const int qi = ai.model.q(), qj = aj.model.q();
                const Vector wi = ai.geometry.pos_extract.transpose() * con.k;
                const Vector wj = aj.geometry.pos_extract.transpose() * con.k;
                Vector row = Vector::Zero(d);
                row.segment(offsets[con.i], ai.model.m() * T_f) -=
                    blocks[con.i].pm.Hy.middleRows(con.step * qi, qi).transpose() * wi;
                row.segment(offsets[con.j], aj.model.m() * T_f) +=
                    blocks[con.j].pm.Hy.middleRows(con.step * qj, qj).transpose() * wj;
                const double fixed = wi.dot(blocks[con.i].free_y.segment(con.step * qi, qi)) -
                                     wj.dot(blocks[con.j].free_y.segment(con.step * qj, qj));
                if (with_slack) {
                    const int s = nu + static_cast<int>(n);
                    row(s) = -1.0;
                    qp.c(s) = options.soft_penalty;
                    qp.lo(s) = 0.0;
                }
                rows.push_back(std::move(row));
                rhs.push_back(fixed - (con.d_safe + con.eta));
            }
            qp.Ain = Matrix(static_cast<Eigen::Index>(rows.size()), d);
            qp.bin = Vector(static_cast<Eigen::Index>(rows.size()));
            for (std::size_t k = 0; k < rows.size(); ++k) {
                qp.Ain.row(static_cast<Eigen::Index>(k)) = rows[k].transpose();
                qp.bin(static_cast<Eigen::Index>(k)) = rhs[k];
            }
            return std::make_pair(std::move(qp), constant);
        };

        auto [problem, constant] = build(soft && !imposed.empty());
        qp::QpSolution sol = qp::solve(problem, settings);
        total_iterations += sol.iterations;
        if (sol.status != qp::QpStatus::optimal && !soft && !imposed.empty() && options.soft_fallback) {
            soft = true;
            std::tie(problem, constant) = build(true);
            sol = qp::solve(problem, settings);
            total_iterations += sol.iterations;
        }
        if (sol.status != qp::QpStatus::optimal) {
            throw StepFailure("model step QP failed with status " + qp::to_string(sol.status));
        }

        ModelStepSolution step;
        step.status = sol.status;
        step.soft = soft;
        step.qp_iterations = total_iterations;
        step.objective = sol.objective + constant;
        double change = 0.0;
        for (int i = 0; i < N; ++i) {
            const auto& a = agents[i];
            const int m = a.model.m();
            ModelPlan plan;
            plan.u = sol.z.segment(offsets[i], m * T_f);
            plan.mu = blocks[i].free_y + blocks[i].pm.Hy * plan.u;
            plan.x = blocks[i].pm.Gx * a.x_t + blocks[i].pm.Hx * plan.u;
            plan.first_input = plan.u.head(m).cwiseMax(a.bounds_u.lo).cwiseMin(a.bounds_u.hi);
            for (int tau = 0; tau < T_f; ++tau) {
                change = std::max(change, (positions_at(a.geometry.pos_extract, plan.mu, tau) -
                                           positions_at(a.geometry.pos_extract, current[i], tau))
                                              .norm());
            }
            current[i] = plan.mu;
            step.agents.push_back(std::move(plan));
        }
        step.constraints = std::move(constraints);
        result = std::move(step);
        if (change < options.scp_tol) {
            break;
        }
    }
    return result;
}

}  // namespace ddpc::deepc
