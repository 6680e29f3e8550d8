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

namespace {

constexpr double kActiveSlack = 1e-6;

bool is_selection_matrix(const Matrix& M) {
    std::vector<Eigen::Index> used;
    for (Eigen::Index r = 0; r < M.rows(); ++r) {
        Eigen::Index hit = -1;
        for (Eigen::Index c = 0; c < M.cols(); ++c) {
            if (M(r, c) == 1.0 && hit < 0) {
                hit = c;
            } else if (M(r, c) != 0.0) {
                return false;
            }
        }
        if (hit < 0 || std::find(used.begin(), used.end(), hit) != used.end()) {
            return false;
        }
        used.push_back(hit);
    }
    return true;
}

void check_psd(const Matrix& M, const std::string& name) {
    const double scale = std::max(1.0, M.cwiseAbs().maxCoeff());
    detail::require((M - M.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * scale, name + " must be symmetric");
    Eigen::LLT<Matrix> llt(M + 1e-9 * scale * Matrix::Identity(M.rows(), M.cols()));
    detail::require(llt.info() == Eigen::Success, name + " must be positive semidefinite");
}

void check_box(const Box& box, int dim, const std::string& name) {
    detail::require_dims(box.lo.size() == dim && box.hi.size() == dim, name + " bounds must have one entry per channel");
    for (int k = 0; k < dim; ++k) {
        detail::require(box.lo(k) <= box.hi(k), name + " lower bound exceeds upper bound");
    }
}

/// Position rows of output block `step` (p x qT_f selector applied to a trajectory).
Vector positions_at(const Matrix& pos_extract, const Vector& trajectory, int step) {
    const auto q = pos_extract.cols();
    return pos_extract * trajectory.segment(step * q, q);
}

}  // namespace

std::vector<Matrix> covariance_schedule(const Matrix& sigma, double growth, int T_f) {
    detail::require(growth >= 1.0, "covariance growth must be >= 1");
    detail::require(T_f >= 1, "T_f must be >= 1");
    std::vector<Matrix> out;
    out.reserve(static_cast<std::size_t>(T_f));
    double factor = 1.0;
    for (int tau = 1; tau <= T_f; ++tau) {
        factor *= growth;
        out.push_back(factor * sigma);
    }
    return out;
}

Matrix selection_matrix(const std::vector<int>& indices, int q) {
    Matrix M = Matrix::Zero(static_cast<Eigen::Index>(indices.size()), q);
    for (std::size_t r = 0; r < indices.size(); ++r) {
        detail::require_dims(indices[r] >= 0 && indices[r] < q, "selection index out of range");
        M(static_cast<Eigen::Index>(r), indices[r]) = 1.0;
    }
    return M;
}

void AgentSpec::validate() const {
    const int qT = q() * T_f();
    const int mT = m() * T_f();
    detail::require_dims(Q.rows() == qT && Q.cols() == qT, "Q must be qT_f x qT_f");
    detail::require_dims(R.rows() == mT && R.cols() == mT, "R must be mT_f x mT_f");
    detail::require_dims(r.size() == qT, "reference must have length qT_f");
    check_psd(Q, "Q");
    check_psd(R, "R");
    check_box(bounds_u, m(), "input");
    if (bounds_y) {
        check_box(*bounds_y, q(), "output");
    }
    detail::require_dims(geometry.pos_extract.cols() == q() && geometry.pos_extract.rows() >= 1,
                         "position extractor must be p x q");
    detail::require(is_selection_matrix(geometry.pos_extract),
                    "position extractor rows must be distinct standard basis vectors");
    detail::require_dims(static_cast<int>(geometry.sigma_schedule.size()) == T_f(),
                         "covariance schedule must have T_f entries");
    for (const auto& S : geometry.sigma_schedule) {
        detail::require_dims(S.rows() == q() && S.cols() == q(), "covariances must be q x q");
    }
}

AgentQpBlocks assemble_agent_qp_blocks(const AgentSpec& spec, const AgentWindow& window) {
    spec.validate();
    const auto& W = spec.behavior;
    const int m = spec.m(), q = spec.q(), Tp = spec.T_p(), Tf = spec.T_f();
    detail::require_dims(window.u_p.size() == m * Tp && window.y_p.size() == q * Tp,
                         "window must hold m T_p inputs and q T_p outputs");

    AgentQpBlocks b;
    const int nc = W.n_cols();
    b.g_offset = 0;
    b.u_offset = nc;
    b.mu_offset = nc + m * Tf;
    b.dim = nc + (m + q) * Tf;

    b.P = Matrix::Zero(b.dim, b.dim);
    b.P.block(b.u_offset, b.u_offset, m * Tf, m * Tf) = 2.0 * spec.R;
    b.P.block(b.mu_offset, b.mu_offset, q * Tf, q * Tf) = 2.0 * spec.Q;
    b.c = Vector::Zero(b.dim);
    b.c.segment(b.mu_offset, q * Tf) = -2.0 * spec.Q * spec.r;
    b.constant = spec.r.dot(spec.Q * spec.r);

    b.Aeq = Matrix::Zero(W.rows(), b.dim);
    b.Aeq.leftCols(nc) = W.W();
    b.Aeq.block(W.uf_offset(), b.u_offset, m * Tf, m * Tf) = -Matrix::Identity(m * Tf, m * Tf);
    b.Aeq.block(W.yf_offset(), b.mu_offset, q * Tf, q * Tf) = -Matrix::Identity(q * Tf, q * Tf);
    b.beq = Vector::Zero(W.rows());
    b.beq.segment(W.up_offset(), m * Tp) = window.u_p;
    b.beq.segment(W.yp_offset(), q * Tp) = window.y_p;

    b.lo = Vector::Constant(b.dim, -qp::kInf);
    b.hi = Vector::Constant(b.dim, qp::kInf);
    for (int k = 0; k < Tf; ++k) {
        b.lo.segment(b.u_offset + k * m, m) = spec.bounds_u.lo;
        b.hi.segment(b.u_offset + k * m, m) = spec.bounds_u.hi;
        if (spec.bounds_y) {
            b.lo.segment(b.mu_offset + k * q, q) = spec.bounds_y->lo;
            b.hi.segment(b.mu_offset + k * q, q) = spec.bounds_y->hi;
        }
    }
    return b;
}

Vector straight_line_anchor(const Vector& current_output, const Vector& reference, int T_f, double max_step) {
    const auto q = current_output.size();
    detail::require_dims(reference.size() == q * T_f, "reference must have length qT_f");
    detail::require(max_step > 0.0, "anchor step length must be positive");
    const double length = (reference.tail(q) - current_output).norm();
    Vector anchor(q * T_f);
    for (int k = 0; k < T_f; ++k) {
        double frac = static_cast<double>(k + 1) / static_cast<double>(T_f);
        if (length > 0.0) {
            frac = std::min(frac, (k + 1) * max_step / length);
        }
        anchor.segment(k * q, q) = current_output + frac * (reference.segment(k * q, q) - current_output);
    }
    return anchor;
}

Vector shift_anchor(const Vector& plan, int q) {
    detail::require_dims(q >= 1 && plan.size() % q == 0 && plan.size() >= q, "plan length must be a multiple of q");
    const auto n = plan.size();
    Vector out(n);
    out.head(n - q) = plan.tail(n - q);
    out.tail(q) = plan.tail(q);
    return out;
}

std::vector<chance::CollisionConstraint> linearize_collisions(const std::vector<CollisionGeometry>& agents,
                                                              const std::vector<Vector>& anchors, int T_f,
                                                              double d_safe, const Matrix& phi) {
    const auto N = static_cast<int>(agents.size());
    detail::require_dims(static_cast<int>(anchors.size()) == N, "one anchor trajectory per agent is required");
    detail::require_dims(phi.rows() >= N && phi.cols() >= N, "phi must be N x N");
    for (int i = 0; i < N; ++i) {
        detail::require_dims(anchors[i].size() == agents[i].pos_extract.cols() * T_f,
                             "anchor trajectories must have length qT_f");
        detail::require_dims(static_cast<int>(agents[i].sigma_schedule.size()) == T_f,
                             "covariance schedule must have T_f entries");
    }

    std::vector<chance::CollisionConstraint> out;
    out.reserve(static_cast<std::size_t>(N * (N - 1) / 2 * T_f));
    for (int i = 0; i < N; ++i) {
        for (int j = i + 1; j < N; ++j) {
            const auto& Mi = agents[i].pos_extract;
            const auto& Mj = agents[j].pos_extract;
            detail::require_dims(Mi.rows() == Mj.rows(), "agents must expose the same number of positions");
            Vector previous_k;
            for (int tau = 0; tau < T_f; ++tau) {
                const Vector p_i = positions_at(Mi, anchors[i], tau);
                const Vector p_j = positions_at(Mj, anchors[j], tau);
                const Matrix S_i = Mi * agents[i].sigma_schedule[tau] * Mi.transpose();
                const Matrix S_j = Mj * agents[j].sigma_schedule[tau] * Mj.transpose();
                chance::CollisionConstraint c;
                try {
                    c = chance::relax_collision(p_i, p_j, S_i, S_j, d_safe, phi(i, j));
                } catch (const chance::DegenerateDirection&) {
                    c.k = previous_k.size() > 0 ? previous_k : Vector::Unit(p_i.size(), 0);
                    c.eta = chance::collision_tightening(c.k, S_i, S_j, phi(i, j));
                    c.d_safe = d_safe;
                }
                c.i = i;
                c.j = j;
                c.step = tau;
                previous_k = c.k;
                out.push_back(std::move(c));
            }
        }
    }
    return out;
}

std::vector<chance::CollisionConstraint> linearize_collisions(const std::vector<AgentSpec>& specs,
                                                              const std::vector<Vector>& anchors, double d_safe,
                                                              const Matrix& phi) {
    detail::require(!specs.empty(), "at least one agent is required");
    std::vector<CollisionGeometry> geometry;
    geometry.reserve(specs.size());
    for (const auto& s : specs) {
        detail::require(s.T_f() == specs.front().T_f(), "all agents must share T_f");
        geometry.push_back(s.geometry);
    }
    return linearize_collisions(geometry, anchors, specs.front().T_f(), d_safe, phi);
}

namespace {

/// Row builder for the stacked problem.
struct RowSet {
    std::vector<Vector> rows;
    std::vector<double> rhs;

    void add(Vector row, double b) {
        rows.push_back(std::move(row));
        rhs.push_back(b);
    }
    Matrix matrix(int d) const {
        Matrix A(static_cast<Eigen::Index>(rows.size()), d);
        for (std::size_t k = 0; k < rows.size(); ++k) {
            A.row(static_cast<Eigen::Index>(k)) = rows[k].transpose();
        }
        return A;
    }
    Vector vector() const {
        return Eigen::Map<const Vector>(rhs.data(), static_cast<Eigen::Index>(rhs.size()));
    }
};

Vector past_window(const AgentWindow& window) {
    Vector w(window.u_p.size() + window.y_p.size());
    w << window.u_p, window.y_p;
    return w;
}

struct Layout {
    std::vector<int> agent;     // start of each agent block
    std::vector<int> noisy;     // start of each agent's regularisation block (or -1)
    int slack = -1;             // collision slack block
    int dim = 0;
};

}  // namespace

std::optional<DataPredictor> data_predictor(const behavior::BehaviorMatrix& W, double tol) {
    const int n_past = (W.m() + W.q()) * W.T_p();
    const int n_in = W.m() * W.T_f();
    Matrix Z(n_past + n_in, W.n_cols());
    Z << W.U_p(), W.Y_p(), W.U_f();
    // Past outputs may be tied to past inputs (q T_p > n); that is fine as long
    // as every future input sequence stays reachable.
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod_past(Z.topRows(n_past));
    cod_past.setThreshold(tol);
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(Z);
    cod.setThreshold(tol);
    if (cod.rank() != cod_past.rank() + n_in) {
        return std::nullopt;
    }
    const Matrix Zpinv = cod.pseudoInverse();
    const Matrix Yf = W.Y_f();
    const Matrix K = Yf * Zpinv;
    const double scale = std::max(1.0, Yf.cwiseAbs().maxCoeff());
    if ((Yf - K * Z).cwiseAbs().maxCoeff() > 1e-6 * scale) {
        return std::nullopt;
    }
    DataPredictor p;
    p.mu_past = K.leftCols(n_past);
    p.mu_input = K.rightCols(n_in);
    p.g_past = Zpinv.leftCols(n_past);
    p.g_input = Zpinv.rightCols(n_in);
    return p;
}

bool window_consistent(const behavior::BehaviorMatrix& W, const DataPredictor& p, const Vector& w, double tol) {
    const Vector g = p.g_past * w;
    Vector err(w.size() + W.U_f().rows());
    err << W.U_p() * g, W.Y_p() * g, W.U_f() * g;
    err.head(w.size()) -= w;
    return err.lpNorm<Eigen::Infinity>() <= tol * std::max(1.0, w.lpNorm<Eigen::Infinity>());
}

StepQp build_step_qp(const std::vector<AgentSpec>& specs, const std::vector<AgentWindow>& windows,
                     const std::vector<chance::CollisionConstraint>& constraints, bool soft,
                     const StepOptions& options) {
    const auto N = static_cast<int>(specs.size());
    detail::require(N >= 1, "at least one agent is required");
    detail::require_dims(static_cast<int>(windows.size()) == N, "one window per agent is required");
    const bool noisy = options.noisy.enabled;

    // The predictor form needs exact data and no coefficient regularisation.
    Formulation form = options.formulation;
    std::vector<DataPredictor> preds;
    if (form == Formulation::predictor) {
        form = noisy ? Formulation::condensed : Formulation::predictor;
        for (int i = 0; i < N && form == Formulation::predictor; ++i) {
            auto p = data_predictor(specs[i].behavior);
            if (p && window_consistent(specs[i].behavior, *p, past_window(windows[i]))) {
                preds.push_back(std::move(*p));
            } else {
                form = Formulation::condensed;
            }
        }
        if (form != Formulation::predictor) {
            preds.clear();
        }
    }
    const bool condensed = form == Formulation::condensed;
    const bool predictor = form == Formulation::predictor;

    // Horizon samples whose positions no decision can move (the current output
    // of a strictly proper plant) are left out: they are evaluated, not imposed.
    std::vector<std::vector<bool>> fixed_block(static_cast<std::size_t>(N));
    for (int i = 0; i < N; ++i) {
        const int q = specs[i].q(), Tf = specs[i].T_f();
        fixed_block[i].assign(static_cast<std::size_t>(Tf), false);
        std::optional<DataPredictor> p;
        if (predictor) {
            p = preds[i];
        } else if (!constraints.empty() && !noisy) {
            p = data_predictor(specs[i].behavior);
        }
        if (!p) continue;
        const double scale = std::max(1.0, p->mu_input.cwiseAbs().maxCoeff());
        for (int k = 0; k < Tf; ++k) {
            const Matrix sens = specs[i].geometry.pos_extract * p->mu_input.middleRows(k * q, q);
            fixed_block[i][k] = sens.cwiseAbs().maxCoeff() <= 1e-9 * scale;
        }
    }
    std::vector<int> imposed;
    for (std::size_t idx = 0; idx < constraints.size(); ++idx) {
        const auto& con = constraints[idx];
        if (!(fixed_block[con.i][con.step] && fixed_block[con.j][con.step])) {
            imposed.push_back(static_cast<int>(idx));
        }
    }
    std::vector<Vector> free_response;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        free_response.push_back(preds[i].mu_past * past_window(windows[i]));
    }

    // Per-agent dimensions.
    Layout layout;
    std::vector<AgentQpBlocks> blocks;
    blocks.reserve(static_cast<std::size_t>(N));
    for (int i = 0; i < N; ++i) {
        detail::require(specs[i].T_f() == specs.front().T_f(), "all agents must share T_f");
        detail::require_dims(windows[i].u_p.size() == specs[i].m() * specs[i].T_p() &&
                                 windows[i].y_p.size() == specs[i].q() * specs[i].T_p(),
                             "window does not match the behaviour matrix");
        if (form == Formulation::full) {
            blocks.push_back(assemble_agent_qp_blocks(specs[i], windows[i]));
        }
    }
    for (int i = 0; i < N; ++i) {
        layout.agent.push_back(layout.dim);
        if (predictor) {
            layout.dim += specs[i].m() * specs[i].T_f();
        } else {
            layout.dim += condensed ? specs[i].behavior.n_cols() : blocks[i].dim;
        }
    }
    for (int i = 0; i < N; ++i) {
        if (noisy) {
            // t_g (n_cols), sigma (q T_p), t_s (q T_p)
            layout.noisy.push_back(layout.dim);
            layout.dim += specs[i].behavior.n_cols() + 2 * specs[i].q() * specs[i].T_p();
        } else {
            layout.noisy.push_back(-1);
        }
    }
    if (soft && !imposed.empty()) {
        layout.slack = layout.dim;
        layout.dim += static_cast<int>(imposed.size());
    }
    const int d = layout.dim;

    StepQp out;
    out.formulation = form;
    out.imposed = imposed;
    out.agent_offsets = layout.agent;
    out.collision_slack_offset = layout.slack;
    auto& qp = out.problem;
    qp.P = Matrix::Zero(d, d);
    qp.c = Vector::Zero(d);
    qp.lo = Vector::Constant(d, -qp::kInf);
    qp.hi = Vector::Constant(d, qp::kInf);
    RowSet eq, in;

    // Maps from an agent's output trajectory entries to decision rows. In the
    // predictor form mu = f + G u, in the condensed form mu = Y_f g; in the
    // full form they are decision entries of their own.
    const auto mu_row = [&](int agent, int entry) {
        Vector row = Vector::Zero(d);
        const auto& W = specs[agent].behavior;
        if (predictor) {
            const int mT = specs[agent].m() * specs[agent].T_f();
            row.segment(layout.agent[agent], mT) = preds[agent].mu_input.row(entry).transpose();
        } else if (condensed) {
            row.segment(layout.agent[agent], W.n_cols()) = W.Y_f().row(entry).transpose();
        } else {
            row(layout.agent[agent] + blocks[agent].mu_offset + entry) = 1.0;
        }
        return row;
    };
    // Constant part of the same entry (nonzero in the predictor form only).
    const auto mu_const = [&](int agent, int entry) { return predictor ? free_response[agent](entry) : 0.0; };

    for (int i = 0; i < N; ++i) {
        const auto& spec = specs[i];
        const auto& W = spec.behavior;
        const int off = layout.agent[i];
        const int nc = W.n_cols();
        const int m = spec.m(), q = spec.q(), Tp = spec.T_p(), Tf = spec.T_f();

        if (predictor) {
            const Matrix& G = preds[i].mu_input;
            const Vector e = free_response[i] - spec.r;
            const int mT = m * Tf;
            const Matrix QG = spec.Q * G;
            Matrix Pi = 2.0 * (G.transpose() * QG + spec.R);
            qp.P.block(off, off, mT, mT) = 0.5 * (Pi + Pi.transpose());
            qp.c.segment(off, mT) = 2.0 * QG.transpose() * e;
            out.constant += e.dot(spec.Q * e);
            for (int k = 0; k < Tf; ++k) {
                qp.lo.segment(off + k * m, m) = spec.bounds_u.lo;
                qp.hi.segment(off + k * m, m) = spec.bounds_u.hi;
            }
            if (spec.bounds_y) {
                for (int k = 0; k < Tf; ++k) {
                    for (int c = 0; c < q; ++c) {
                        const int entry = k * q + c;
                        if (std::isfinite(spec.bounds_y->hi(c))) {
                            in.add(mu_row(i, entry), spec.bounds_y->hi(c) - mu_const(i, entry));
                        }
                        if (std::isfinite(spec.bounds_y->lo(c))) {
                            in.add(-mu_row(i, entry), mu_const(i, entry) - spec.bounds_y->lo(c));
                        }
                    }
                }
            }
            out.predictors.push_back(preds[i]);
        } else if (condensed) {
            out.constant += spec.r.dot(spec.Q * spec.r);
            const Matrix Uf = W.U_f();
            const Matrix Yf = W.Y_f();
            qp.P.block(off, off, nc, nc) = 2.0 * (Yf.transpose() * spec.Q * Yf + Uf.transpose() * spec.R * Uf);
            qp.P.block(off, off, nc, nc) = 0.5 * (qp.P.block(off, off, nc, nc) +
                                                  qp.P.block(off, off, nc, nc).transpose()).eval();
            qp.c.segment(off, nc) = -2.0 * Yf.transpose() * (spec.Q * spec.r);
            for (int r = 0; r < m * Tp; ++r) {
                Vector row = Vector::Zero(d);
                row.segment(off, nc) = W.U_p().row(r).transpose();
                eq.add(std::move(row), windows[i].u_p(r));
            }
            for (int r = 0; r < q * Tp; ++r) {
                Vector row = Vector::Zero(d);
                row.segment(off, nc) = W.Y_p().row(r).transpose();
                if (noisy) {
                    row(layout.noisy[i] + nc + r) = -1.0;
                }
                eq.add(std::move(row), windows[i].y_p(r));
            }
            const auto add_bounds = [&](const Matrix& block, const Box& box, int dim) {
                for (int k = 0; k < Tf; ++k) {
                    for (int c = 0; c < dim; ++c) {
                        const Vector coeff = block.row(k * dim + c).transpose();
                        if (std::isfinite(box.hi(c))) {
                            Vector row = Vector::Zero(d);
                            row.segment(off, nc) = coeff;
                            in.add(std::move(row), box.hi(c));
                        }
                        if (std::isfinite(box.lo(c))) {
                            Vector row = Vector::Zero(d);
                            row.segment(off, nc) = -coeff;
                            in.add(std::move(row), -box.lo(c));
                        }
                    }
                }
            };
            add_bounds(Uf, spec.bounds_u, m);
            if (spec.bounds_y) {
                add_bounds(Yf, *spec.bounds_y, q);
            }
        } else {
            const auto& b = blocks[i];
            out.constant += b.constant;
            qp.P.block(off, off, b.dim, b.dim) = b.P;
            qp.c.segment(off, b.dim) = b.c;
            qp.lo.segment(off, b.dim) = b.lo;
            qp.hi.segment(off, b.dim) = b.hi;
            for (Eigen::Index r = 0; r < b.Aeq.rows(); ++r) {
                Vector row = Vector::Zero(d);
                row.segment(off, b.dim) = b.Aeq.row(r).transpose();
                if (noisy && r >= W.yp_offset() && r < W.yp_offset() + q * Tp) {
                    row(layout.noisy[i] + nc + (static_cast<int>(r) - W.yp_offset())) = -1.0;
                }
                eq.add(std::move(row), b.beq(r));
            }
        }

        if (noisy) {
            // |g| <= t_g, |sigma| <= t_s, cost lambda_g sum t_g + lambda_s sum t_s
            const int base = layout.noisy[i];
            const int ns = q * Tp;
            for (int k = 0; k < nc; ++k) {
                Vector row = Vector::Zero(d);
                row(off + k) = 1.0;
                row(base + k) = -1.0;
                in.add(row, 0.0);
                row(off + k) = -1.0;
                in.add(std::move(row), 0.0);
                qp.c(base + k) = options.noisy.lambda_g;
            }
            for (int k = 0; k < ns; ++k) {
                Vector row = Vector::Zero(d);
                row(base + nc + k) = 1.0;
                row(base + nc + ns + k) = -1.0;
                in.add(row, 0.0);
                row(base + nc + k) = -1.0;
                in.add(std::move(row), 0.0);
                qp.c(base + nc + ns + k) = options.noisy.lambda_s;
            }
        }
    }

    // k'(M mu_i(tau) - M mu_j(tau)) >= d_safe + eta, written as <=.
    for (std::size_t n = 0; n < imposed.size(); ++n) {
        const auto& con = constraints[static_cast<std::size_t>(imposed[n])];
        const int q_i = specs[con.i].q();
        const int q_j = specs[con.j].q();
        const Vector a_i = specs[con.i].geometry.pos_extract.transpose() * con.k;
        const Vector a_j = specs[con.j].geometry.pos_extract.transpose() * con.k;
        Vector row = Vector::Zero(d);
        double offset = 0.0;
        for (int e = 0; e < q_i; ++e) {
            if (a_i(e) != 0.0) {
                row -= a_i(e) * mu_row(con.i, con.step * q_i + e);
                offset -= a_i(e) * mu_const(con.i, con.step * q_i + e);
            }
        }
        for (int e = 0; e < q_j; ++e) {
            if (a_j(e) != 0.0) {
                row += a_j(e) * mu_row(con.j, con.step * q_j + e);
                offset += a_j(e) * mu_const(con.j, con.step * q_j + e);
            }
        }
        if (layout.slack >= 0) {
            const int sidx = layout.slack + static_cast<int>(n);
            row(sidx) = -1.0;
            qp.c(sidx) = options.soft_penalty;
            qp.lo(sidx) = 0.0;
        }
        in.add(std::move(row), -(con.d_safe + con.eta) - offset);
    }

    qp.Aeq = eq.matrix(d);
    qp.beq = eq.vector();
    qp.Ain = in.matrix(d);
    qp.bin = in.vector();
    return out;
}

StepSolution solve_step(const std::vector<AgentSpec>& specs, const std::vector<AgentWindow>& windows,
                        const std::vector<Vector>& anchors, double d_safe, const Matrix& phi,
                        const StepOptions& options) {
    const auto N = static_cast<int>(specs.size());
    detail::require(N >= 1, "at least one agent is required");
    detail::require(options.n_scp >= 1, "n_scp must be >= 1");
    qp::QpSettings settings = options.solver;
    // Gram-built Hessians are PSD by construction.
    settings.check_convexity = false;

    std::vector<Vector> current = anchors;
    StepSolution result;
    bool soft = options.soft_collisions;

    for (int iter = 0; iter < options.n_scp; ++iter) {
        auto constraints = N > 1 ? linearize_collisions(specs, current, d_safe, phi)
                                 : std::vector<chance::CollisionConstraint>{};
        StepQp stacked = build_step_qp(specs, windows, constraints, soft, options);
        qp::QpSolution sol = qp::solve(stacked.problem, settings);
        int iterations = sol.iterations;
        if (sol.status != qp::QpStatus::optimal && !soft && !stacked.imposed.empty() && options.soft_fallback) {
            soft = true;
            stacked = build_step_qp(specs, windows, constraints, soft, options);
            sol = qp::solve(stacked.problem, settings);
            iterations += sol.iterations;
        }
        if (sol.status != qp::QpStatus::optimal) {
            throw StepFailure("step QP failed with status " + qp::to_string(sol.status));
        }

        StepSolution step;
        step.status = sol.status;
        step.residuals = sol.residuals;
        step.soft = soft;
        step.qp_iterations = result.qp_iterations + iterations;
        step.scp_iterations = iter + 1;
        step.objective = sol.objective + stacked.constant;
        for (int i = 0; i < N; ++i) {
            const auto& spec = specs[i];
            const auto& W = spec.behavior;
            const int off = stacked.agent_offsets[i];
            const int nc = W.n_cols();
            AgentPlan plan;
            if (stacked.formulation == Formulation::predictor) {
                const auto& pred = stacked.predictors[i];
                const Vector w = past_window(windows[i]);
                plan.u = sol.z.segment(off, spec.m() * spec.T_f());
                plan.mu = pred.mu_past * w + pred.mu_input * plan.u;
                plan.g = pred.g_past * w + pred.g_input * plan.u;
            } else if (stacked.formulation == Formulation::condensed) {
                plan.g = sol.z.segment(off, nc);
                plan.u = W.U_f() * plan.g;
                plan.mu = W.Y_f() * plan.g;
            } else {
                const int mT = spec.m() * spec.T_f();
                plan.g = sol.z.segment(off, nc);
                plan.u = sol.z.segment(off + nc, mT);
                plan.mu = sol.z.segment(off + nc + mT, spec.q() * spec.T_f());
            }
            plan.first_input = plan.u.head(spec.m()).cwiseMax(spec.bounds_u.lo).cwiseMin(spec.bounds_u.hi);
            step.agents.push_back(std::move(plan));
        }
        if (soft && stacked.collision_slack_offset >= 0) {
            // Slack values are part of the objective but not the tracking cost.
        }
        step.constraints = std::move(constraints);
        for (std::size_t k = 0; k < step.constraints.size(); ++k) {
            const auto& con = step.constraints[k];
            const Vector p_i = positions_at(specs[con.i].geometry.pos_extract, step.agents[con.i].mu, con.step);
            const Vector p_j = positions_at(specs[con.j].geometry.pos_extract, step.agents[con.j].mu, con.step);
            const double slack = con.slack(p_i, p_j);
            step.slacks.push_back(slack);
            if (slack <= kActiveSlack) {
                step.active.push_back(static_cast<int>(k));
            }
        }

        double change = 0.0;
        for (int i = 0; i < N; ++i) {
            const auto& M = specs[i].geometry.pos_extract;
            for (int tau = 0; tau < specs[i].T_f(); ++tau) {
                change = std::max(change, (positions_at(M, step.agents[i].mu, tau) - positions_at(M, current[i], tau))
                                              .norm());
            }
            current[i] = step.agents[i].mu;
        }
        result = std::move(step);
        if (change < options.scp_tol) {
            break;
        }
    }
    return result;
}

}  // namespace ddpc::deepc
