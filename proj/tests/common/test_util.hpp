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
#ifndef DDPC_TESTS_TEST_UTIL_HPP
#define DDPC_TESTS_TEST_UTIL_HPP

#include "ddpc/behavior.hpp"
#include "ddpc/deepc.hpp"
#include "ddpc/linsys.hpp"

#include <Eigen/Eigenvalues>

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

namespace ddpc::testutil {

inline Matrix random_matrix(int r, int c, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> nd(0.0, scale);
    Matrix M(r, c);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) M(i, j) = nd(rng);
    return M;
}

inline Vector random_vector(int n, std::mt19937_64& rng, double scale = 1.0) {
    return random_matrix(n, 1, rng, scale).col(0);
}

/// Random PSD matrix of the given rank.
inline Matrix random_psd(int n, int rank, std::mt19937_64& rng) {
    Matrix F = random_matrix(n, rank, rng);
    return F * F.transpose();
}

/// Random Schur-stable plant with spectral radius `rho`, observable and
/// controllable with probability one.
inline linsys::StateSpace random_stable_plant(int n, int m, int q, std::mt19937_64& rng, double rho = 0.8,
                                              bool feedthrough = false) {
    Matrix A = random_matrix(n, n, rng);
    const double r = linsys::spectral_radius(A);
    if (r > 0) A *= rho / r;
    Matrix B = random_matrix(n, m, rng);
    Matrix C = random_matrix(q, n, rng);
    Matrix D = feedthrough ? random_matrix(q, m, rng, 0.5) : Matrix::Zero(q, m);
    return linsys::StateSpace(A, B, C, D, 0.1);
}

/// One agent posed both ways: DeePC over PE data and MPC over the true model,
/// with the same window, weights and reference.
struct OracleCase {
    linsys::StateSpace plant;
    linsys::TrajectoryDataset data;
    deepc::AgentSpec spec;
    deepc::AgentWindow window;
    deepc::ModelAgent model;
};

inline OracleCase make_oracle_case(const linsys::StateSpace& plant, int T_p, int T_f, std::mt19937_64& rng,
                                   double input_weight = 0.1) {
    const int n = plant.n(), m = plant.m(), q = plant.q();
    const int T_num = behavior::min_samples(m, behavior::excitation_order(T_p, T_f, n)) + 20;
    std::uniform_int_distribution<std::uint64_t> seeds;
    auto data = linsys::simulate_open_loop(plant, linsys::uniform_excitation(m, T_num, -1.0, 1.0, seeds(rng)),
                                           random_vector(n, rng));

    // Past window from a random state: T_p inputs applied, outputs before each.
    Vector x = random_vector(n, rng);
    Matrix u_p = random_matrix(m, T_p, rng);
    Matrix y_p(q, T_p);
    for (int k = 0; k < T_p; ++k) {
        auto r = linsys::step(plant, x, u_p.col(k));
        y_p.col(k) = r.y;
        x = r.x_next;
    }
    deepc::AgentWindow window{u_p.reshaped(), y_p.reshaped()};

    deepc::Box box{Vector::Constant(m, -1e3), Vector::Constant(m, 1e3)};
    deepc::CollisionGeometry geometry{deepc::selection_matrix({0}, q),
                                      deepc::covariance_schedule(Matrix::Zero(q, q), 1.0, T_f)};
    Matrix Q = Matrix::Identity(q * T_f, q * T_f);
    Matrix R = input_weight * Matrix::Identity(m * T_f, m * T_f);
    Vector r = random_vector(q * T_f, rng);
    deepc::AgentSpec spec{behavior::build_behavior_matrix(data, T_p, T_f), Q, R, r, box, std::nullopt, geometry};
    deepc::ModelAgent model{plant, x, Q, R, r, box, std::nullopt, geometry};
    return {plant, std::move(data), std::move(spec), std::move(window), std::move(model)};
}

/// Scratch directory removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("ddpc_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

}  // namespace ddpc::testutil

#endif  // DDPC_TESTS_TEST_UTIL_HPP
