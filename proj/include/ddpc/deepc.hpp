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
#ifndef DDPC_DEEPC_HPP
#define DDPC_DEEPC_HPP

#include "ddpc/behavior.hpp"
#include "ddpc/chance.hpp"
#include "ddpc/linsys.hpp"
#include "ddpc/qpsolve.hpp"
#include "ddpc/types.hpp"

#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace ddpc::deepc {

/// Per-sample box, applied identically at every horizon step.
struct Box {
    Vector lo;
    Vector hi;
};

/// Position extraction and per-step output covariance of one agent.
struct CollisionGeometry {
    Matrix pos_extract;                 // p x q, rows are distinct unit vectors
    std::vector<Matrix> sigma_schedule;  // T_f entries, q x q
};

/// Covariance schedule Sigma * growth^tau for tau = 1..T_f.
std::vector<Matrix> covariance_schedule(const Matrix& sigma, double growth, int T_f);

/// Selection matrix picking `indices` out of a q-vector.
Matrix selection_matrix(const std::vector<int>& indices, int q);

struct AgentSpec {
    behavior::BehaviorMatrix behavior;
    Matrix Q;  // qT_f x qT_f
    Matrix R;  // mT_f x mT_f
    Vector r;  // qT_f
    Box bounds_u;
    std::optional<Box> bounds_y;
    CollisionGeometry geometry;

    int m() const { return behavior.m(); }
    int q() const { return behavior.q(); }
    int T_p() const { return behavior.T_p(); }
    int T_f() const { return behavior.T_f(); }

    void validate() const;
};

/// Most recent T_p inputs and outputs, oldest first.
struct AgentWindow {
    Vector u_p;  // m T_p
    Vector y_p;  // q T_p
};

/**
 * Per-agent QP data over z = (g, u, mu):
 *   cost  (mu - r)'Q(mu - r) + u'R u  =  1/2 z'P z + c'z + constant
 *   rows  W g - [u_p; y_p; u; mu] = 0
 *   box   u in bounds_u, mu in bounds_y.
 */
struct AgentQpBlocks {
    int g_offset = 0;
    int u_offset = 0;
    int mu_offset = 0;
    int dim = 0;
    Matrix P;
    Vector c;
    double constant = 0.0;
    Matrix Aeq;
    Vector beq;
    Vector lo;
    Vector hi;
};

AgentQpBlocks assemble_agent_qp_blocks(const AgentSpec& spec, const AgentWindow& window);

/// Output trajectory (qT_f) moving linearly from `current` to the reference,
/// covering at most `max_step` (output units) per horizon step.
Vector straight_line_anchor(const Vector& current_output, const Vector& reference, int T_f,
                            double max_step = std::numeric_limits<double>::infinity());

/// Previous plan advanced one step, last sample repeated.
Vector shift_anchor(const Vector& plan, int q);

/**
 * Half-space collision constraints for every pair i < j and every horizon
 * step, linearised at the anchor output trajectories. Coinciding anchors
 * reuse the pair's direction from the previous step (e_1 on the first).
 */
std::vector<chance::CollisionConstraint> linearize_collisions(const std::vector<CollisionGeometry>& agents,
                                                              const std::vector<Vector>& anchors, int T_f,
                                                              double d_safe, const Matrix& phi);

std::vector<chance::CollisionConstraint> linearize_collisions(const std::vector<AgentSpec>& specs,
                                                              const std::vector<Vector>& anchors, double d_safe,
                                                              const Matrix& phi);

enum class Formulation {
    predictor,  // u only, through the exact data predictor (falls back to condensed)
    condensed,  // g only, u = U_f g and mu = Y_f g substituted
    full,       // z = (g, u, mu) per agent
};

/**
 * Affine maps implied by the data when Y_f lies in the row space of
 * Z = [U_p; Y_p; U_f] and the U_f rows are independent of the past rows:
 *   mu = mu_past [u_p; y_p] + mu_input u,   g = g_past [u_p; y_p] + g_input u
 * where g is the minimum-norm coefficient vector. For a window in the span of
 * [U_p; Y_p] the set of (u, mu) reachable through W g is exactly the graph of
 * the first map.
 */
struct DataPredictor {
    Matrix mu_past, mu_input;
    Matrix g_past, g_input;
};

/// Empty when the rank conditions fail (relative tolerance `tol`).
std::optional<DataPredictor> data_predictor(const behavior::BehaviorMatrix& W, double tol = 1e-8);

/// Whether the past window [u_p; y_p] lies in the span of [U_p; Y_p] (relative `tol`).
bool window_consistent(const behavior::BehaviorMatrix& W, const DataPredictor& p, const Vector& window,
                       double tol = 1e-7);

/// Optional 1-norm regularisation for noisy data: lambda_g |g|_1 + lambda_s |sigma|_1
/// with slack sigma on the y_p rows.
struct NoisyDataRegularization {
    bool enabled = false;
    double lambda_g = 0.1;
    double lambda_s = 1e5;
};

struct StepOptions {
    qp::QpSettings solver;
    Formulation formulation = Formulation::predictor;
    int n_scp = 1;
    double scp_tol = 1e-4;  // m
    bool soft_collisions = false;
    double soft_penalty = 1e4;  // per metre of violation
    NoisyDataRegularization noisy;
    /// Whether a hard-mode failure falls back to soft constraints.
    bool soft_fallback = true;
};

struct AgentPlan {
    Vector g;
    Vector u;
    Vector mu;
    Vector first_input;  // first m-block of u, clipped onto bounds_u
};

struct StepSolution {
    std::vector<AgentPlan> agents;
    qp::QpStatus status = qp::QpStatus::max_iters;
    qp::KktResiduals residuals;
    bool soft = false;
    int qp_iterations = 0;
    int scp_iterations = 0;
    double objective = 0.0;  // including the constant tracking term
    std::vector<chance::CollisionConstraint> constraints;
    std::vector<double> slacks;  // constraint slack at the returned plan
    std::vector<int> active;     // indices into constraints with slack <= 1e-6
};

/// Thrown when a step cannot be solved even with softened collision constraints.
class StepFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/**
 * Solve the coupled multi-agent problem once per SCP iteration, re-linearising
 * collision directions at the latest predicted outputs.
 */
StepSolution solve_step(const std::vector<AgentSpec>& specs, const std::vector<AgentWindow>& windows,
                        const std::vector<Vector>& anchors, double d_safe, const Matrix& phi,
                        const StepOptions& options = {});

/// Stacked QP for one linearisation (exposed for inspection and dumping).
struct StepQp {
    qp::QpProblem problem;
    Formulation formulation = Formulation::condensed;  // the one actually built
    std::vector<DataPredictor> predictors;             // predictor form only
    std::vector<int> agent_offsets;
    /// Constraints present as rows, in row order; the rest act on outputs no
    /// decision can change and are only evaluated.
    std::vector<int> imposed;
    int collision_slack_offset = -1;
    double constant = 0.0;
};

StepQp build_step_qp(const std::vector<AgentSpec>& specs, const std::vector<AgentWindow>& windows,
                     const std::vector<chance::CollisionConstraint>& constraints, bool soft,
                     const StepOptions& options);

// ---------------------------------------------------------------------------
// Model-based baseline

/// Stacked prediction matrices over a horizon of T_f steps.
///   states  x(t+1..t+T_f) = Gx x_t + Hx u
///   outputs y(t..t+T_f-1) = Gy x_t + Hy u
struct PredictionMatrices {
    Matrix Gx, Hx, Gy, Hy;
};

PredictionMatrices prediction_matrices(const linsys::StateSpace& model, int T_f);

struct ModelAgent {
    linsys::StateSpace model;
    Vector x_t;
    Matrix Q;
    Matrix R;
    Vector r;
    Box bounds_u;
    std::optional<Box> bounds_y;
    CollisionGeometry geometry;
};

struct ModelPlan {
    Vector u;
    Vector mu;  // outputs y(t..t+T_f-1)
    Vector x;   // states x(t+1..t+T_f)
    Vector first_input;
};

struct ModelStepSolution {
    std::vector<ModelPlan> agents;
    qp::QpStatus status = qp::QpStatus::max_iters;
    bool soft = false;
    int qp_iterations = 0;
    double objective = 0.0;
    std::vector<chance::CollisionConstraint> constraints;
};

/// Same tracking problem as solve_step, over u only with the exact model.
ModelStepSolution model_mpc_step(const std::vector<ModelAgent>& agents, int T_f, const std::vector<Vector>& anchors,
                                 double d_safe, const Matrix& phi, const StepOptions& options = {});

// ---------------------------------------------------------------------------
// Receding-horizon mission

enum class Controller { deepc, model };

struct MissionAgent {
    linsys::StateSpace plant;
    Vector x0;
    AgentSpec spec;
    AgentWindow initial_window;
};

struct MissionSetup {
    std::vector<MissionAgent> agents;
    double d_safe = 0.3;
    Matrix phi;  // N x N, upper triangle used
    int steps = 150;
    StepOptions options;
    Controller controller = Controller::deepc;
    /// Lateral offset (m) added to first-step anchors; 0 gives plain straight lines.
    double anchor_swirl = 0.0;
    /// Nominal speed (m/s) of the first-step anchors; infinite reaches the
    /// reference at the end of the horizon.
    double anchor_speed = std::numeric_limits<double>::infinity();
    Vector swirl_axis;  // position-space axis for the lateral offset
};

struct StepRecord {
    std::vector<Vector> x;   // state at the start of the step
    std::vector<Vector> y;   // measured output
    std::vector<Vector> u;   // applied input
    std::vector<Vector> mu;  // predicted outputs
    double objective = 0.0;
    qp::QpStatus status = qp::QpStatus::max_iters;
    bool soft = false;
    int qp_iterations = 0;
    int scp_iterations = 0;
    double solve_seconds = 0.0;
    double min_constraint_slack = 0.0;
    int active_constraints = 0;
};

struct MissionLog {
    int agents = 0;
    double dt = 0.0;
    std::vector<StepRecord> steps;
    std::vector<Vector> final_x;  // state after the last applied input
    bool aborted = false;
    std::string error;

    /// States at times 0..steps (inclusive).
    std::vector<std::vector<Vector>> state_history() const;
};

/// First-step anchors: straight lines to the reference plus an optional
/// deterministic lateral offset that breaks head-on symmetry.
std::vector<Vector> initial_anchors(const MissionSetup& setup, const std::vector<AgentWindow>& windows);

MissionLog run_mission(const MissionSetup& setup);

}  // namespace ddpc::deepc

#endif  // DDPC_DEEPC_HPP
