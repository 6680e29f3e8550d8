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
#include "ddpc/qpsolve.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace ddpc;
using namespace ddpc::qp;

namespace {

QpProblem with_rows(QpProblem p, Matrix Aeq, Vector beq, Matrix Ain, Vector bin) {
    p.Aeq = std::move(Aeq);
    p.beq = std::move(beq);
    p.Ain = std::move(Ain);
    p.bin = std::move(bin);
    return p;
}

QpProblem min_norm_on_line() {
    auto p = QpProblem::unconstrained(2.0 * Matrix::Identity(2, 2), Vector::Zero(2));
    return with_rows(p, Matrix::Ones(1, 2), Vector::Ones(1), Matrix::Zero(0, 2), Vector::Zero(0));
}

QpProblem clipped_parabola() {
    auto p = QpProblem::unconstrained(Matrix::Constant(1, 1, 2.0), Vector::Constant(1, -2.0));
    p.hi(0) = 0.0;
    return p;
}

/// Random feasible QP: PSD P (possibly singular), equality rows with a known
/// feasible point, inequalities and bounds loose around it.
QpProblem random_qp(std::mt19937_64& rng, int d, int n_eq, int n_in) {
    std::uniform_int_distribution<int> rank_dist(1, d);
    auto p = QpProblem::unconstrained(testutil::random_psd(d, rank_dist(rng), rng) + 1e-3 * Matrix::Identity(d, d),
                                      testutil::random_vector(d, rng));
    Vector z0 = testutil::random_vector(d, rng);
    Matrix Aeq = testutil::random_matrix(n_eq, d, rng);
    Matrix Ain = testutil::random_matrix(n_in, d, rng);
    std::uniform_real_distribution<double> margin(0.0, 1.0);
    Vector bin = Ain * z0;
    for (int i = 0; i < n_in; ++i) bin(i) += margin(rng);
    p = with_rows(p, Aeq, Aeq * z0, Ain, bin);
    for (int k = 0; k < d; ++k) {
        p.lo(k) = z0(k) - 1.0 - margin(rng);
        p.hi(k) = z0(k) + 1.0 + margin(rng);
    }
    return p;
}

}  // namespace

TEST(Solve, ClippedUnconstrainedMinimum) {
    auto sol = solve(clipped_parabola());
    ASSERT_EQ(sol.status, QpStatus::optimal);
    EXPECT_NEAR(sol.z(0), 0.0, 1e-6);
    EXPECT_NEAR(sol.objective, 0.0, 1e-6);
    EXPECT_NEAR(sol.y_box(0), 2.0, 1e-5);
}

TEST(Solve, UnconstrainedQuadratic) {
    auto sol = solve(QpProblem::unconstrained(2.0 * Matrix::Identity(2, 2), Eigen::Vector2d(-2.0, -4.0)));
    ASSERT_EQ(sol.status, QpStatus::optimal);
    EXPECT_NEAR(sol.z(0), 1.0, 1e-8);
    EXPECT_NEAR(sol.z(1), 2.0, 1e-8);
    EXPECT_NEAR(sol.objective, -5.0, 1e-8);
}

TEST(Solve, MinimumNormOnLine) {
    auto sol = solve(min_norm_on_line());
    ASSERT_EQ(sol.status, QpStatus::optimal);
    EXPECT_NEAR(sol.z(0), 0.5, 1e-8);
    EXPECT_NEAR(sol.z(1), 0.5, 1e-8);
    EXPECT_NEAR(sol.y_eq(0), -1.0, 1e-6);
}

TEST(Solve, InequalityActive) {
    // min (z1-2)^2 + (z2-2)^2  s.t.  z1 + z2 <= 2  ->  (1, 1), multiplier 2.
    auto p = QpProblem::unconstrained(2.0 * Matrix::Identity(2, 2), Eigen::Vector2d(-4.0, -4.0));
    p = with_rows(p, Matrix::Zero(0, 2), Vector::Zero(0), Matrix::Ones(1, 2), Vector::Constant(1, 2.0));
    auto sol = solve(p);
    ASSERT_EQ(sol.status, QpStatus::optimal);
    EXPECT_NEAR(sol.z(0), 1.0, 1e-6);
    EXPECT_NEAR(sol.z(1), 1.0, 1e-6);
    EXPECT_NEAR(sol.y_in(0), 2.0, 1e-5);
}

TEST(Solve, LinearProgram) {
    // min -z1 - z2 on the unit box.
    auto p = QpProblem::unconstrained(Matrix::Zero(2, 2), Eigen::Vector2d(-1.0, -1.0));
    p.lo.setZero();
    p.hi.setOnes();
    auto sol = solve(p);
    ASSERT_EQ(sol.status, QpStatus::optimal);
    EXPECT_NEAR(sol.z(0), 1.0, 1e-6);
    EXPECT_NEAR(sol.z(1), 1.0, 1e-6);
}

TEST(Solve, DetectsPrimalInfeasibility) {
    auto p = QpProblem::unconstrained(Matrix::Identity(2, 2), Vector::Zero(2));
    Matrix Ain(2, 2);
    Ain << 1, 1, -1, -1;
    p = with_rows(p, Matrix::Zero(0, 2), Vector::Zero(0), Ain, Eigen::Vector2d(-1.0, -1.0));
    EXPECT_EQ(solve(p).status, QpStatus::primal_infeasible);
}

TEST(Solve, DetectsInconsistentEqualities) {
    auto p = QpProblem::unconstrained(Matrix::Identity(2, 2), Vector::Zero(2));
    Matrix Aeq(2, 2);
    Aeq << 1, 1, 1, 1;
    p = with_rows(p, Aeq, Eigen::Vector2d(0.0, 1.0), Matrix::Zero(0, 2), Vector::Zero(0));
    EXPECT_EQ(solve(p).status, QpStatus::primal_infeasible);
}

TEST(Solve, DetectsUnboundedness) {
    auto p = QpProblem::unconstrained(Matrix::Zero(2, 2), Eigen::Vector2d(-1.0, 0.0));
    p.lo.setZero();
    EXPECT_EQ(solve(p).status, QpStatus::dual_infeasible);
}

TEST(Solve, RedundantEqualitiesAreFine) {
    auto p = QpProblem::unconstrained(2.0 * Matrix::Identity(2, 2), Vector::Zero(2));
    Matrix Aeq(2, 2);
    Aeq << 1, 1, 2, 2;
    p = with_rows(p, Aeq, Eigen::Vector2d(1.0, 2.0), Matrix::Zero(0, 2), Vector::Zero(0));
    auto sol = solve(p);
    ASSERT_EQ(sol.status, QpStatus::optimal);
    EXPECT_NEAR(sol.z(0), 0.5, 1e-7);
}

TEST(Solve, DeterministicAndGuessIndependent) {
    std::mt19937_64 rng(77);
    auto p = random_qp(rng, 8, 2, 5);
    auto a = solve(p), b = solve(p);
    ASSERT_EQ(a.status, QpStatus::optimal);
    EXPECT_EQ(a.z, b.z);
    EXPECT_EQ(a.iterations, b.iterations);
    auto c = solve(p, {}, Vector(Vector::Ones(8) * 3.0));
    ASSERT_EQ(c.status, QpStatus::optimal);
    EXPECT_NEAR((a.z - c.z).norm(), 0.0, 1e-4 * (1.0 + a.z.norm()));
}

TEST(Solve, RandomProblemsCertified) {
    std::mt19937_64 rng(2024);
    QpSettings s;
    for (int trial = 0; trial < 60; ++trial) {
        auto p = random_qp(rng, 3 + trial % 9, trial % 3, trial % 7);
        auto sol = solve(p, s);
        ASSERT_EQ(sol.status, QpStatus::optimal) << "trial " << trial;
        auto r = kkt_residuals(p, sol);
        EXPECT_LE(r.primal, s.eps_prim);
        EXPECT_LE(r.dual, s.eps_dual);
        EXPECT_LE(r.gap, s.eps_dual);
        EXPECT_EQ(r.primal, sol.residuals.primal);
    }
}

TEST(Validate, RejectsMalformedProblems) {
    auto p = min_norm_on_line();
    p.c = Vector::Zero(3);
    EXPECT_THROW(p.validate(), std::invalid_argument);
    p = min_norm_on_line();
    p.P(0, 1) = 1.0;  // asymmetric
    EXPECT_THROW(p.validate(), std::invalid_argument);
    p = min_norm_on_line();
    p.lo(0) = 1.0;
    p.hi(0) = 0.0;
    EXPECT_THROW(p.validate(), std::invalid_argument);
    p = min_norm_on_line();
    p.P(0, 0) = -1.0;  // not PSD
    EXPECT_NO_THROW(p.validate());
    EXPECT_THROW(solve(p), std::invalid_argument);
}

TEST(Residuals, HandWrittenOptimum) {
    QpSolution s;
    s.z = Eigen::Vector2d(0.5, 0.5);
    s.y_eq = Vector::Constant(1, -1.0);
    s.y_in = Vector::Zero(0);
    s.y_box = Vector::Zero(2);
    auto r = kkt_residuals(min_norm_on_line(), s);
    EXPECT_LE(r.primal, 1e-12);
    EXPECT_LE(r.dual, 1e-12);
    EXPECT_LE(r.gap, 1e-12);
}

TEST(Residuals, PerturbedBoundActivePoint) {
    QpSolution s;
    s.z = Vector::Constant(1, 0.1);
    s.y_eq = Vector::Zero(0);
    s.y_in = Vector::Zero(0);
    s.y_box = Vector::Constant(1, 2.0);
    EXPECT_NEAR(kkt_residuals(clipped_parabola(), s).primal, 0.1, 1e-12);
}

TEST(Residuals, GapNonNegativeAtRandomFeasiblePoints) {
    std::mt19937_64 rng(5);
    for (int t = 0; t < 50; ++t) {
        auto p = random_qp(rng, 6, 0, 4);
        QpSolution s;
        s.z = (p.lo + p.hi) / 2.0;
        s.y_eq = Vector::Zero(0);
        s.y_in = testutil::random_vector(4, rng).cwiseAbs();
        s.y_box = testutil::random_vector(6, rng);
        EXPECT_GE(kkt_residuals(p, s).gap, 0.0);
    }
}

TEST(ProblemJson, RoundTripKeepsInfiniteBounds) {
    std::mt19937_64 rng(8);
    auto p = random_qp(rng, 5, 1, 2);
    p.lo(1) = -kInf;
    p.hi(3) = kInf;
    auto back = problem_from_json(problem_to_json(p));
    EXPECT_EQ(back.P, p.P);
    EXPECT_EQ(back.c, p.c);
    EXPECT_EQ(back.Aeq, p.Aeq);
    EXPECT_EQ(back.bin, p.bin);
    EXPECT_EQ(back.lo, p.lo);
    EXPECT_EQ(back.hi, p.hi);
}
