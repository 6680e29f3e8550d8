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
#include "ddpc/linsys.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace ddpc;
using linsys::StateSpace;

namespace {

StateSpace scalar(double a, double b = 1.0, double c = 1.0, double d = 0.0) {
    return StateSpace(Matrix::Constant(1, 1, a), Matrix::Constant(1, 1, b), Matrix::Constant(1, 1, c),
                      Matrix::Constant(1, 1, d), 0.1);
}

linsys::FeedbackGain gain(double k) { return {Matrix::Constant(1, 1, k)}; }

}  // namespace

TEST(StateSpace, RejectsMismatchedShapes) {
    EXPECT_THROW(StateSpace(Matrix::Zero(2, 2), Matrix::Zero(3, 1), Matrix::Zero(1, 2), Matrix::Zero(1, 1), 0.1),
                 DimensionError);
    EXPECT_THROW(StateSpace(Matrix::Zero(2, 3), Matrix::Zero(2, 1), Matrix::Zero(1, 2), Matrix::Zero(1, 1), 0.1),
                 DimensionError);
    EXPECT_THROW(StateSpace(Matrix::Zero(1, 1), Matrix::Zero(1, 1), Matrix::Zero(1, 1), Matrix::Zero(1, 1), 0.0),
                 std::invalid_argument);
}

TEST(DroneModel, MatchesPublishedEntries) {
    const auto drone = linsys::make_drone_model();
    EXPECT_EQ(drone.n(), 12);
    EXPECT_EQ(drone.m(), 4);
    EXPECT_EQ(drone.q(), 12);
    EXPECT_DOUBLE_EQ(drone.dt(), 0.1);
    EXPECT_DOUBLE_EQ(drone.A()(0, 3), 0.1);
    EXPECT_DOUBLE_EQ(drone.B()(2, 0), 1.75e-2);
    EXPECT_EQ(drone.D().rows(), 12);
    EXPECT_EQ(drone.D().cols(), 4);
    EXPECT_TRUE(drone.D().isZero(0.0));
    EXPECT_TRUE(drone.C().isIdentity(0.0));
}

TEST(Step, ZeroStaysZero) {
    const auto drone = linsys::make_drone_model();
    auto r = linsys::step(drone, Vector::Zero(12), Vector::Zero(4));
    EXPECT_TRUE(r.x_next.isZero(0.0));
    EXPECT_TRUE(r.y.isZero(0.0));
}

TEST(Step, IdentityTransitionKeepsState) {
    StateSpace I(Matrix::Identity(3, 3), Matrix::Zero(3, 2), Matrix::Identity(3, 3), Matrix::Zero(3, 2), 1.0);
    Vector v(3);
    v << 1.0, -2.0, 3.5;
    auto r = linsys::step(I, v, Vector::Constant(2, 7.0));
    EXPECT_EQ(r.x_next, v);
    EXPECT_EQ(r.y, v);
}

TEST(Step, DroneThrustRaisesAltitude) {
    auto r = linsys::step(linsys::make_drone_model(), Vector::Zero(12), Vector::Ones(4));
    EXPECT_NEAR(r.x_next(2), 0.07, 1e-15);
}

TEST(Step, RejectsWrongSizes) {
    EXPECT_THROW(linsys::step(scalar(0.5), Vector::Zero(2), Vector::Zero(1)), DimensionError);
}

TEST(SpectralRadius, Examples) {
    Matrix M(2, 2);
    M << 0.5, 0.0, 0.0, -0.9;
    EXPECT_NEAR(linsys::spectral_radius(M), 0.9, 1e-14);
    EXPECT_NEAR(linsys::spectral_radius(Matrix::Identity(5, 5)), 1.0, 1e-14);
    M << 0.0, 1.0, -0.25, 0.0;
    EXPECT_NEAR(linsys::spectral_radius(M), 0.5, 1e-14);
}

TEST(Stabilizing, ScalarCases) {
    EXPECT_TRUE(linsys::is_stabilizing(scalar(0.5), gain(0.0), 0.1));
    EXPECT_FALSE(linsys::is_stabilizing(scalar(2.0), gain(0.0), 0.01));
    EXPECT_TRUE(linsys::is_stabilizing(scalar(2.0), gain(-1.8), 0.5));
    EXPECT_NEAR(linsys::closed_loop_matrix(scalar(2.0), gain(-1.8))(0, 0), 0.2, 1e-15);
}

TEST(Stabilizing, FeedthroughLoopIsFolded) {
    // x+ = 2x + u, y = x + 0.5u, u = -y  =>  u = -x/1.5, x+ = (2 - 1/1.5) x
    EXPECT_NEAR(linsys::closed_loop_matrix(scalar(2.0, 1.0, 1.0, 0.5), gain(-1.0))(0, 0), 2.0 - 1.0 / 1.5, 1e-14);
}

TEST(Simulate, RestStaysAtRest) {
    const auto drone = linsys::make_drone_model();
    const auto K = linsys::design_stabilizing_gain(drone, Matrix::Identity(12, 12), Matrix::Identity(4, 4));
    auto d = linsys::simulate_closed_loop(drone, K, Matrix::Zero(4, 20), Vector::Zero(12));
    EXPECT_EQ(d.length(), 20);
    EXPECT_TRUE(d.u.isZero(0.0));
    EXPECT_TRUE(d.y.isZero(0.0));
}

TEST(Simulate, ZeroGainInjectsExcitation) {
    std::mt19937_64 rng(3);
    auto plant = testutil::random_stable_plant(3, 2, 2, rng);
    Matrix ur = testutil::random_matrix(2, 15, rng);
    auto d = linsys::simulate_closed_loop(plant, {Matrix::Zero(2, 2)}, ur, Vector::Zero(3));
    EXPECT_EQ(d.u, ur);
    auto o = linsys::simulate_open_loop(plant, ur, Vector::Zero(3));
    EXPECT_EQ(o.y, d.y);
}

TEST(Simulate, ScalarHandSteps) {
    Matrix ur(1, 2);
    ur << 1.0, 0.0;
    auto d = linsys::simulate_closed_loop(scalar(0.5), gain(0.0), ur, Vector::Zero(1));
    EXPECT_DOUBLE_EQ(d.y(0, 0), 0.0);
    EXPECT_DOUBLE_EQ(d.y(0, 1), 1.0);
}

TEST(Simulate, SingularLoopThrows) {
    // K D = 1 makes I - K D singular.
    EXPECT_THROW(linsys::simulate_closed_loop(scalar(0.5, 1.0, 1.0, 1.0), gain(1.0), Matrix::Ones(1, 3),
                                              Vector::Zero(1)),
                 NumericalError);
}

TEST(Gain, DeadbeatPlant) {
    StateSpace p(Matrix::Zero(2, 2), Matrix::Identity(2, 2), Matrix::Identity(2, 2), Matrix::Zero(2, 2), 0.1);
    auto K = linsys::design_stabilizing_gain(p, Matrix::Identity(2, 2), Matrix::Identity(2, 2));
    EXPECT_LE(linsys::spectral_radius(linsys::closed_loop_matrix(p, K)), 1.0);
}

TEST(Gain, ScalarRiccatiFixedPoint) {
    // P = 2 + sqrt(5), K = -(1 + sqrt(5)) / 2, closed-loop pole (3 - sqrt(5)) / 2.
    auto K = linsys::design_stabilizing_gain(scalar(2.0), Matrix::Ones(1, 1), Matrix::Ones(1, 1));
    EXPECT_NEAR(K.K(0, 0), -1.6180339887498949, 1e-9);
    EXPECT_NEAR(linsys::closed_loop_matrix(scalar(2.0), K)(0, 0), 0.3819660112501052, 1e-9);
}

TEST(Gain, DroneIsStabilized) {
    const auto drone = linsys::make_drone_model();
    auto K = linsys::design_stabilizing_gain(drone, Matrix::Identity(12, 12), Matrix::Identity(4, 4));
    EXPECT_EQ(K.K.rows(), 4);
    EXPECT_EQ(K.K.cols(), 12);
    EXPECT_TRUE(linsys::is_stabilizing(drone, K, 0.0));
}

TEST(Gain, RejectsRankDeficientOutput) {
    StateSpace p(Matrix::Identity(2, 2) * 1.1, Matrix::Identity(2, 2), Matrix::Ones(1, 2), Matrix::Zero(1, 2), 0.1);
    EXPECT_ANY_THROW(linsys::design_stabilizing_gain(p, Matrix::Identity(2, 2), Matrix::Identity(2, 2)));
}

TEST(Excitation, DeterministicAndInRange) {
    Matrix a = linsys::uniform_excitation(4, 300, -0.5, 0.5, 11);
    Matrix b = linsys::uniform_excitation(4, 300, -0.5, 0.5, 11);
    Matrix c = linsys::uniform_excitation(4, 300, -0.5, 0.5, 12);
    EXPECT_EQ(a, b);
    EXPECT_NE(a, c);
    EXPECT_GE(a.minCoeff(), -0.5);
    EXPECT_LE(a.maxCoeff(), 0.5);
}

TEST(ModelJson, RoundTripIsExact) {
    std::mt19937_64 rng(5);
    auto p = testutil::random_stable_plant(3, 2, 2, rng, 0.7, true);
    auto back = linsys::model_from_json(linsys::model_to_json(p));
    EXPECT_EQ(back.A(), p.A());
    EXPECT_EQ(back.B(), p.B());
    EXPECT_EQ(back.C(), p.C());
    EXPECT_EQ(back.D(), p.D());
    EXPECT_EQ(back.dt(), p.dt());
}

TEST(ModelJson, RejectsBadDocuments) {
    EXPECT_ANY_THROW(linsys::model_from_json("{"));
    EXPECT_ANY_THROW(linsys::model_from_json(R"({"n":1,"m":1,"q":1,"dt":0.1,"A":[[1]],"B":[[1]],"C":[[1]]})"));
}
