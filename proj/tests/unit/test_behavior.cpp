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
#include "ddpc/digest.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace ddpc;
using namespace ddpc::behavior;

namespace {

Matrix row(std::initializer_list<double> v) {
    Matrix M(1, static_cast<int>(v.size()));
    int k = 0;
    for (double x : v) M(0, k++) = x;
    return M;
}

linsys::TrajectoryDataset pe_dataset(const linsys::StateSpace& plant, int T, std::uint64_t seed) {
    Matrix u = linsys::uniform_excitation(plant.m(), T, -1.0, 1.0, seed);
    return linsys::simulate_open_loop(plant, u, Vector::Zero(plant.n()));
}

}  // namespace

TEST(Hankel, ScalarSequence) {
    Matrix H = hankel(row({1, 2, 3, 4, 5}), 2);
    Matrix expect(2, 4);
    expect << 1, 2, 3, 4, 2, 3, 4, 5;
    EXPECT_EQ(H, expect);
}

TEST(Hankel, FullLengthGivesOneColumn) {
    Matrix H = hankel(row({4, 5, 6}), 3);
    ASSERT_EQ(H.cols(), 1);
    EXPECT_EQ(H.col(0), row({4, 5, 6}).transpose().col(0));
}

TEST(Hankel, VectorSequence) {
    Matrix seq(2, 3);
    seq << 1, 0, 1, 0, 1, 1;
    Matrix expect(4, 2);
    expect << 1, 0, 0, 1, 0, 1, 1, 1;
    EXPECT_EQ(hankel(seq, 2), expect);
}

TEST(Hankel, RejectsBadDepth) {
    EXPECT_ANY_THROW(hankel(row({1, 2}), 3));
    EXPECT_ANY_THROW(hankel(row({1, 2}), 0));
}

TEST(Excitation, Examples) {
    EXPECT_FALSE(is_persistently_exciting(row({1, 1, 1, 1}), 2));
    EXPECT_TRUE(is_persistently_exciting(row({1, 0, 0, 1, 0}), 2));
    // 3 samples, L = 2: two columns for two rows would be enough, but not for m = 2.
    Matrix seq(2, 3);
    seq << 1, 0, 1, 0, 1, 1;
    EXPECT_FALSE(is_persistently_exciting(seq, 2));
}

TEST(Excitation, CountingRules) {
    EXPECT_EQ(min_samples(4, 43), 214);
    EXPECT_EQ(min_samples(1, 1), 1);
    EXPECT_EQ(min_samples(2, 10), 29);
    EXPECT_EQ(excitation_order(1, 30, 12), 43);
    EXPECT_EQ(excitation_order(1, 1, 0), 2);
    EXPECT_EQ(excitation_order(2, 5, 3), 10);
}

TEST(BehaviorMatrixTest, DroneDimensions) {
    const auto drone = linsys::make_drone_model();
    auto K = linsys::design_stabilizing_gain(drone, Matrix::Identity(12, 12), Matrix::Identity(4, 4));
    auto data = linsys::simulate_closed_loop(drone, K, linsys::uniform_excitation(4, 214, -0.5, 0.5, 1),
                                             Vector::Zero(12));
    auto W = build_behavior_matrix(data, 1, 30);
    EXPECT_EQ(W.rows(), 496);
    EXPECT_EQ(W.n_cols(), 184);
    EXPECT_EQ(W.U_p().rows(), 4);
    EXPECT_EQ(W.Y_p().rows(), 12);
    EXPECT_EQ(W.U_f().rows(), 120);
    EXPECT_EQ(W.Y_f().rows(), 360);
}

TEST(BehaviorMatrixTest, SingleColumnStack) {
    linsys::TrajectoryDataset d{row({1, 2}), row({3, 4}), 0.1};
    auto W = build_behavior_matrix(d, 1, 1);
    ASSERT_EQ(W.rows(), 4);
    ASSERT_EQ(W.n_cols(), 1);
    Vector expect(4);
    expect << 1, 3, 2, 4;
    EXPECT_EQ(W.W().col(0), expect);
}

TEST(BehaviorMatrixTest, ColumnsAreDirectWindows) {
    std::mt19937_64 rng(9);
    auto plant = testutil::random_stable_plant(2, 2, 3, rng);
    auto data = pe_dataset(plant, 60, 4);
    const int Tp = 3, Tf = 5;
    auto W = build_behavior_matrix(data, Tp, Tf);
    ASSERT_EQ(W.n_cols(), 60 - Tp - Tf + 1);
    for (int k = 0; k < W.n_cols(); ++k) {
        Vector expect = W.stack(data.u.middleCols(k, Tp + Tf), data.y.middleCols(k, Tp + Tf));
        EXPECT_EQ(W.W().col(k), expect) << "column " << k;
        // Partition order u_p, y_p, u_f, y_f.
        EXPECT_EQ(W.W().col(k).segment(W.yp_offset(), 3), data.y.col(k));
        EXPECT_EQ(W.W().col(k).segment(W.uf_offset(), 2), data.u.col(k + Tp));
    }
}

TEST(BehaviorMatrixTest, TooShortDataThrows) {
    linsys::TrajectoryDataset d{row({1, 2}), row({3, 4}), 0.1};
    EXPECT_ANY_THROW(build_behavior_matrix(d, 2, 1));
}

TEST(PastWindow, PinsStateOnlyWhenObservable) {
    EXPECT_TRUE(past_window_pins_state(linsys::make_drone_model(), 1));
    std::mt19937_64 rng(2);
    auto plant = testutil::random_stable_plant(3, 1, 1, rng);
    EXPECT_FALSE(past_window_pins_state(plant, 2));
    EXPECT_TRUE(past_window_pins_state(plant, 3));
}

TEST(SpanResidual, ColumnsAndCombinations) {
    std::mt19937_64 rng(21);
    auto plant = testutil::random_stable_plant(3, 1, 2, rng);
    auto data = pe_dataset(plant, 120, 8);
    const int Tp = 3, Tf = 6, L = Tp + Tf;
    auto W = build_behavior_matrix(data, Tp, Tf);
    auto window = [&](int k) {
        return span_residual(W, data.u.middleCols(k, L), data.y.middleCols(k, L));
    };
    EXPECT_LE(window(0), 1e-10);
    EXPECT_LE(window(17), 1e-10);
    Matrix u2 = data.u.middleCols(3, L) + data.u.middleCols(40, L);
    Matrix y2 = data.y.middleCols(3, L) + data.y.middleCols(40, L);
    EXPECT_LE(span_residual(W, u2, y2), 1e-10);
}

TEST(SpanResidual, FreshTrajectoryLiesInSpan) {
    std::mt19937_64 rng(22);
    auto plant = testutil::random_stable_plant(4, 2, 2, rng);
    const int Tp = 4, Tf = 8, L = Tp + Tf;
    auto K = linsys::FeedbackGain{Matrix::Zero(2, 2)};
    auto data = linsys::simulate_closed_loop(plant, K, linsys::uniform_excitation(2, 200, -1, 1, 3),
                                             Vector::Zero(4));
    ASSERT_TRUE(is_persistently_exciting(data.u, excitation_order(Tp, Tf, 4)));
    auto W = build_behavior_matrix(data, Tp, Tf);
    auto fresh = linsys::simulate_open_loop(plant, linsys::uniform_excitation(2, L, -1, 1, 99),
                                            testutil::random_vector(4, rng));
    EXPECT_LE(span_residual(W, fresh.u, fresh.y), 1e-8);
    // A trajectory the plant cannot produce is far from the span.
    Matrix y_bad = fresh.y;
    y_bad(0, 5) += 1.0;
    EXPECT_GT(span_residual(W, fresh.u, y_bad), 1e-3);
}

TEST(Norms, Examples) {
    Matrix M(2, 2);
    M << 3, -4, 0, 1;
    EXPECT_NEAR(norm_inf(M), 7.0, 0.0);
    EXPECT_NEAR(norm_2(Matrix::Identity(3, 3) * 2.5), 2.5, 1e-14);
}

TEST(DatasetJson, RoundTripAndDigest) {
    std::mt19937_64 rng(4);
    auto plant = testutil::random_stable_plant(2, 1, 2, rng);
    auto data = pe_dataset(plant, 30, 2);
    auto back = dataset_from_json(dataset_to_json(data, R"({"note":"x"})"));
    EXPECT_EQ(back.u, data.u);
    EXPECT_EQ(back.y, data.y);
    EXPECT_EQ(back.dt, data.dt);
    EXPECT_EQ(dataset_digest(back), dataset_digest(data));
    back.y(1, 3) += 1e-12;
    EXPECT_NE(dataset_digest(back), dataset_digest(data));
}

TEST(DatasetJson, FileRoundTrip) {
    testutil::TempDir dir("dataset");
    std::mt19937_64 rng(6);
    auto data = pe_dataset(testutil::random_stable_plant(2, 2, 2, rng), 25, 6);
    save_dataset(data, dir.path() / "d.json");
    auto back = load_dataset(dir.path() / "d.json");
    EXPECT_EQ(back.u, data.u);
    EXPECT_EQ(back.y, data.y);
}

TEST(Digest, KnownVectors) {
    EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
