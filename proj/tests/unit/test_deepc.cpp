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
#include "ddpc/harness.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <algorithm>

using namespace ddpc;
using namespace ddpc::deepc;

namespace {

double rel(const Vector& a, const Vector& b) { return (a - b).norm() / std::max(b.norm(), 1e-12); }

/// Drone mission inputs for a bundled scenario, optionally with agent positions replaced.
MissionSetup drone_setup(const std::string& name, const std::vector<harness::AgentConfig>& agents = {}) {
    auto cfg = harness::parse_scenario(std::filesystem::path(DDPC_SCENARIO_DIR) / (name + ".json"));
    if (!agents.empty()) {
        cfg.agents = agents;
        cfg.phi = Matrix::Constant(cfg.N(), cfg.N(), cfg.phi(0, 0));
    }
    std::vector<linsys::TrajectoryDataset> data;
    for (int i = 0; i < cfg.N(); ++i) data.push_back(harness::collect_agent(cfg, i).data);
    return harness::mission_setup(cfg, data);
}

struct Parts {
    std::vector<AgentSpec> specs;
    std::vector<AgentWindow> windows;
    std::vector<Vector> anchors;
};

Parts parts(const MissionSetup& s) {
    Parts p;
    for (const auto& a : s.agents) {
        p.specs.push_back(a.spec);
        p.windows.push_back(a.initial_window);
    }
    p.anchors = initial_anchors(s, p.windows);
    return p;
}

}  // namespace

TEST(AgentBlocks, DroneDimensions) {
    auto s = drone_setup("hover1");
    const auto& a = s.agents[0];
    auto b = assemble_agent_qp_blocks(a.spec, a.initial_window);
    EXPECT_EQ(b.dim, 184 + 120 + 360);
    EXPECT_EQ(b.Aeq.rows(), (4 + 12) * 31);
    EXPECT_EQ(b.Aeq.cols(), b.dim);
    EXPECT_EQ(b.u_offset, 184);
    EXPECT_EQ(b.mu_offset, 304);
}

TEST(AgentBlocks, GradientVanishesAtReference) {
    std::mt19937_64 rng(3);
    auto c = testutil::make_oracle_case(testutil::random_stable_plant(2, 1, 2, rng), 2, 4, rng, 0.0);
    auto b = assemble_agent_qp_blocks(c.spec, c.window);
    Vector z = Vector::Zero(b.dim);
    z.segment(b.mu_offset, c.spec.r.size()) = c.spec.r;
    EXPECT_LE((b.P * z + b.c).norm(), 1e-12);
    EXPECT_NEAR(0.5 * z.dot(b.P * z) + b.c.dot(z) + b.constant, 0.0, 1e-12);
}

TEST(AgentSpecTest, RejectsBadShapes) {
    std::mt19937_64 rng(4);
    auto c = testutil::make_oracle_case(testutil::random_stable_plant(2, 1, 2, rng), 2, 4, rng);
    auto bad = c.spec;
    bad.r = Vector::Zero(3);
    EXPECT_THROW(bad.validate(), DimensionError);
    bad = c.spec;
    bad.geometry.pos_extract = Matrix::Ones(1, 2);
    EXPECT_THROW(bad.validate(), std::invalid_argument);
    bad = c.spec;
    bad.bounds_u.lo(0) = 2e3;
    EXPECT_ANY_THROW(bad.validate());
}

TEST(Anchors, StraightLineAndSpeedCap) {
    Vector cur = Vector::Zero(2), ref = Eigen::Vector2d(1.0, 0.0).replicate(4, 1);
    Vector a = straight_line_anchor(cur, ref, 4);
    EXPECT_NEAR(a(6), 1.0, 1e-15);  // reaches the reference at the last step
    EXPECT_NEAR(a(0), 0.25, 1e-15);
    Vector capped = straight_line_anchor(cur, ref, 4, 0.1);
    EXPECT_NEAR(capped(6), 0.4, 1e-15);
    Vector shifted = shift_anchor(a, 2);
    EXPECT_EQ(shifted.head(6), a.tail(6));
    EXPECT_EQ(shifted.tail(2), a.tail(2));
}

TEST(Collisions, CountsPerPairAndStep) {
    const int Tf = 30;
    std::vector<CollisionGeometry> geo(8, {selection_matrix({0, 1, 2}, 12),
                                           covariance_schedule(0.01 * Matrix::Identity(12, 12), 1.0, Tf)});
    std::vector<Vector> anchors;
    for (int i = 0; i < 8; ++i) {
        Vector y = Vector::Zero(12);
        y.head(3) = Eigen::Vector3d(i & 1 ? 1 : -1, i & 2 ? 1 : -1, i & 4 ? 1 : -1);
        anchors.push_back(y.replicate(Tf, 1));
    }
    Matrix phi = Matrix::Constant(8, 8, 0.1);
    EXPECT_EQ(linearize_collisions(geo, anchors, Tf, 0.3, phi).size(), 840u);
    std::vector<CollisionGeometry> two(geo.begin(), geo.begin() + 2);
    std::vector<Vector> two_anchors(anchors.begin(), anchors.begin() + 2);
    auto cs = linearize_collisions(two, two_anchors, Tf, 0.3, phi.topLeftCorner(2, 2));
    ASSERT_EQ(cs.size(), 30u);
    for (const auto& c : cs) {
        EXPECT_GT(c.slack(anchors[c.i].head(3), anchors[c.j].head(3)), 0.0);
        EXPECT_NEAR(c.eta, 0.18123876048736466, 1e-9);
    }
}

TEST(Predictor, ExistsForPersistentlyExcitedData) {
    std::mt19937_64 rng(6);
    auto c = testutil::make_oracle_case(testutil::random_stable_plant(3, 2, 2, rng), 3, 5, rng);
    auto pred = data_predictor(c.spec.behavior);
    ASSERT_TRUE(pred.has_value());
    // The map reproduces every data column.
    const auto& W = c.spec.behavior;
    Matrix past(W.rows() - W.U_f().rows() - W.Y_f().rows(), W.n_cols());
    past << W.U_p(), W.Y_p();
    Matrix mu = pred->mu_past * past + pred->mu_input * W.U_f();
    EXPECT_LE((mu - W.Y_f()).norm() / W.Y_f().norm(), 1e-9);
}

TEST(Predictor, AbsentWhenRowsAreDependent) {
    // Too few columns: Z = [U_p; Y_p; U_f] cannot have full row rank.
    std::mt19937_64 rng(7);
    auto plant = testutil::random_stable_plant(2, 1, 1, rng);
    auto data = linsys::simulate_open_loop(plant, linsys::uniform_excitation(1, 12, -1, 1, 3), Vector::Zero(2));
    EXPECT_FALSE(data_predictor(behavior::build_behavior_matrix(data, 2, 4)).has_value());
}

TEST(SolveStep, MatchesModelBasedController) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 4; ++trial) {
        auto c = testutil::make_oracle_case(testutil::random_stable_plant(3, 2, 2, rng, 0.8, trial % 2 == 1), 3, 6, rng);
        Matrix phi = Matrix::Constant(1, 1, 0.1);
        auto d = solve_step({c.spec}, {c.window}, {c.spec.r}, 0.3, phi);
        auto m = model_mpc_step({c.model}, 6, {c.spec.r}, 0.3, phi);
        ASSERT_EQ(d.status, qp::QpStatus::optimal);
        ASSERT_EQ(m.status, qp::QpStatus::optimal);
        EXPECT_LE(rel(d.agents[0].u, m.agents[0].u), 1e-4) << "trial " << trial;
        EXPECT_LE(rel(d.agents[0].mu, m.agents[0].mu), 1e-4) << "trial " << trial;
    }
}

TEST(SolveStep, FormulationsAgree) {
    std::mt19937_64 rng(12);
    auto c = testutil::make_oracle_case(testutil::random_stable_plant(3, 1, 2, rng), 3, 5, rng);
    c.spec.bounds_u = {Vector::Constant(1, -0.3), Vector::Constant(1, 0.3)};
    Matrix phi = Matrix::Constant(1, 1, 0.1);
    StepOptions opt;
    std::vector<Vector> u;
    for (auto f : {Formulation::predictor, Formulation::condensed, Formulation::full}) {
        opt.formulation = f;
        auto s = solve_step({c.spec}, {c.window}, {c.spec.r}, 0.3, phi, opt);
        ASSERT_EQ(s.status, qp::QpStatus::optimal);
        EXPECT_LE(s.agents[0].u.lpNorm<Eigen::Infinity>(), 0.3 + 1e-6);
        // The plan is consistent with the data.
        EXPECT_LE((c.spec.behavior.W() * s.agents[0].g -
                   (Vector(c.spec.behavior.rows()) << c.window.u_p, c.window.y_p, s.agents[0].u, s.agents[0].mu)
                       .finished())
                      .norm(),
                  1e-5);
        u.push_back(s.agents[0].u);
    }
    EXPECT_LE(rel(u[1], u[0]), 1e-4);
    EXPECT_LE(rel(u[2], u[0]), 1e-4);
}

TEST(SolveStep, HoverAtTargetIsFree) {
    auto s = drone_setup("hover1");
    auto p = parts(s);
    auto sol = solve_step(p.specs, p.windows, p.anchors, s.d_safe, s.phi, s.options);
    ASSERT_EQ(sol.status, qp::QpStatus::optimal);
    const auto& plan = sol.agents[0];
    EXPECT_TRUE((plan.first_input.array() >= -0.7007).all() && (plan.first_input.array() <= 0.2993).all());
    // Only positions are weighted; velocities and angles are free.
    for (int k = 0; k < 30; ++k) {
        EXPECT_LE((plan.mu - p.specs[0].r).segment(12 * k, 3).lpNorm<Eigen::Infinity>(), 1e-5) << "step " << k;
    }
    EXPECT_NEAR(sol.objective, 0.0, 1e-8);
}

TEST(SolveStep, HeadOnPairKeepsLinearisedConstraints) {
    auto s = drone_setup("swap2", {{Eigen::Vector3d(-0.1, 0, 0), Eigen::Vector3d(1, 0, 0)},
                                   {Eigen::Vector3d(0.1, 0, 0), Eigen::Vector3d(-1, 0, 0)}});
    auto p = parts(s);
    auto sol = solve_step(p.specs, p.windows, p.anchors, s.d_safe, s.phi, s.options);
    ASSERT_EQ(sol.status, qp::QpStatus::optimal);
    ASSERT_EQ(sol.constraints.size(), 30u);
    ASSERT_EQ(sol.slacks.size(), 30u);
    if (!sol.soft) {
        // The first horizon output is the measured one and cannot move; the
        // rest must clear the tightened half-space.
        for (std::size_t k = 0; k < sol.slacks.size(); ++k) {
            if (sol.constraints[k].step == 0) continue;
            EXPECT_GE(sol.slacks[k], -1e-6) << "constraint " << k;
        }
    }
}

TEST(SolveStep, SoftModeReportsViolation) {
    auto s = drone_setup("swap2", {{Eigen::Vector3d(-0.1, 0, 0), Eigen::Vector3d(1, 0, 0)},
                                   {Eigen::Vector3d(0.1, 0, 0), Eigen::Vector3d(-1, 0, 0)}});
    s.options.soft_collisions = true;
    auto p = parts(s);
    auto sol = solve_step(p.specs, p.windows, p.anchors, s.d_safe, s.phi, s.options);
    ASSERT_EQ(sol.status, qp::QpStatus::optimal);
    EXPECT_TRUE(sol.soft);
}

TEST(ModelMpc, PredictionBlocks) {
    std::mt19937_64 rng(14);
    auto plant = testutil::random_stable_plant(3, 2, 2, rng, 0.8, true);
    auto pm = prediction_matrices(plant, 5);
    EXPECT_EQ(pm.Gx.topRows(3), plant.A());
    EXPECT_EQ(pm.Hx.topLeftCorner(3, 2), plant.B());
    EXPECT_TRUE(pm.Hx.topRightCorner(3, 8).isZero(0.0));
    EXPECT_EQ(pm.Gy.topRows(2), plant.C());
    EXPECT_EQ(pm.Hy.topLeftCorner(2, 2), plant.D());
}

TEST(ModelMpc, AlreadyOnReference) {
    const int Tf = 5;
    linsys::StateSpace plant(Matrix::Identity(2, 2), Matrix::Identity(2, 2), Matrix::Identity(2, 2),
                             Matrix::Zero(2, 2), 0.1);
    Vector x = Eigen::Vector2d(0.4, -0.2);
    ModelAgent a{plant,
                 x,
                 Matrix::Identity(2 * Tf, 2 * Tf),
                 Matrix::Identity(2 * Tf, 2 * Tf),
                 x.replicate(Tf, 1),
                 {Vector::Constant(2, -1.0), Vector::Constant(2, 1.0)},
                 std::nullopt,
                 {selection_matrix({0}, 2), covariance_schedule(Matrix::Zero(2, 2), 1.0, Tf)}};
    auto sol = model_mpc_step({a}, Tf, {a.r}, 0.3, Matrix::Constant(1, 1, 0.1));
    ASSERT_EQ(sol.status, qp::QpStatus::optimal);
    EXPECT_LE(sol.agents[0].u.lpNorm<Eigen::Infinity>(), 1e-6);
}

TEST(ModelMpc, PlanMatchesSimulation) {
    std::mt19937_64 rng(15);
    const auto drone = linsys::make_drone_model();
    const int Tf = 10;
    Vector x = testutil::random_vector(12, rng, 0.3);
    ModelAgent a{drone,
                 x,
                 Matrix::Identity(12 * Tf, 12 * Tf),
                 0.01 * Matrix::Identity(4 * Tf, 4 * Tf),
                 Vector::Zero(12 * Tf),
                 {Vector::Constant(4, -1e3), Vector::Constant(4, 1e3)},
                 std::nullopt,
                 {selection_matrix({0, 1, 2}, 12), covariance_schedule(Matrix::Zero(12, 12), 1.0, Tf)}};
    auto sol = model_mpc_step({a}, Tf, {a.r}, 0.3, Matrix::Constant(1, 1, 0.1));
    ASSERT_EQ(sol.status, qp::QpStatus::optimal);
    const auto& plan = sol.agents[0];
    for (int k = 0; k < Tf; ++k) {
        auto r = linsys::step(drone, x, plan.u.segment(4 * k, 4));
        EXPECT_LE((r.y - plan.mu.segment(12 * k, 12)).norm(), 1e-10);
        EXPECT_LE((r.x_next - plan.x.segment(12 * k, 12)).norm(), 1e-10);
        x = r.x_next;
    }
}

TEST(Mission, ZeroLengthKeepsInitialCondition) {
    auto s = drone_setup("hover1");
    s.steps = 0;
    auto log = run_mission(s);
    EXPECT_TRUE(log.steps.empty());
    EXPECT_FALSE(log.aborted);
    auto h = log.state_history();
    ASSERT_EQ(h.size(), 1u);
    EXPECT_EQ(h[0][0], s.agents[0].x0);
}

TEST(Mission, HoverHoldsPosition) {
    auto s = drone_setup("hover1");
    s.steps = 50;
    auto log = run_mission(s);
    ASSERT_FALSE(log.aborted) << log.error;
    ASSERT_EQ(log.steps.size(), 50u);
    for (const auto& x : log.state_history()) EXPECT_LE(x[0].head(3).norm(), 1e-3);
    // With R = 0 and yaw unweighted a small differential torque is as good as
    // none, so inputs are near hover rather than exactly zero.
    for (const auto& st : log.steps) EXPECT_LE(st.u[0].lpNorm<Eigen::Infinity>(), 1e-2);
}
