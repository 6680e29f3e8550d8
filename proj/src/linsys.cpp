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

#include "json_util.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <random>

namespace ddpc::linsys {

namespace {

std::string shape(const Matrix& M) {
    return std::to_string(M.rows()) + "x" + std::to_string(M.cols());
}

}  // namespace

StateSpace::StateSpace(Matrix A, Matrix B, Matrix C, Matrix D, double dt)
    : A_(std::move(A)), B_(std::move(B)), C_(std::move(C)), D_(std::move(D)), dt_(dt) {
    const auto n = A_.rows();
    detail::require_dims(n >= 1 && A_.cols() == n, "A must be square and non-empty, got " + shape(A_));
    detail::require_dims(B_.rows() == n && B_.cols() >= 1, "B must be n x m, got " + shape(B_));
    detail::require_dims(C_.cols() == n && C_.rows() >= 1, "C must be q x n, got " + shape(C_));
    detail::require_dims(D_.rows() == C_.rows() && D_.cols() == B_.cols(),
                         "D must be q x m, got " + shape(D_));
    detail::require(std::isfinite(dt_) && dt_ > 0.0, "dt must be positive");
}

void TrajectoryDataset::validate() const {
    detail::require_dims(u.cols() == y.cols(), "u_d and y_d must have equal length");
    detail::require_dims(u.cols() >= 1, "dataset must hold at least one sample");
    detail::require_dims(u.rows() >= 1 && y.rows() >= 1, "dataset signals must be non-empty");
    detail::require(std::isfinite(dt) && dt > 0.0, "dataset dt must be positive");
}

StateSpace make_drone_model() {
    Matrix A = Matrix::Identity(12, 12);
    // translational kinematics
    A(0, 3) = 0.1;
    A(1, 4) = 0.1;
    A(2, 5) = 0.1;
    // attitude coupling into position and velocity
    A(0, 7) = 0.049;
    A(0, 10) = 0.0016;
    A(1, 6) = -0.049;
    A(1, 9) = -0.0016;
    A(3, 7) = 0.981;
    A(3, 10) = 0.049;
    A(4, 6) = -0.981;
    A(4, 9) = 0.049;
    // rotational kinematics
    A(6, 9) = 0.1;
    A(7, 10) = 0.1;
    A(8, 11) = 0.1;

    Matrix B(12, 4);
    // clang-format off
    B << -2.3e-5,  0.0,      2.3e-5,   0.0,
          0.0,    -2.3e-5,   0.0,      2.3e-5,
          1.75e-2, 1.75e-2,  1.75e-2,  1.75e-2,
         -9.21e-4, 0.0,      9.21e-4,  0.0,
          0.0,    -9.21e-4,  0.0,      9.21e-4,
          0.35,    0.35,     0.35,     0.35,
          0.0,     2.8e-3,   0.0,     -2.8e-3,
         -2.8e-3,  0.0,      2.8e-3,   0.0,
          3.7e-3, -3.7e-3,   3.7e-3,  -3.7e-3,
          0.0,     5.6e-2,   0.0,     -5.6e-2,
         -5.6e-2,  0.0,      5.6e-2,   0.0,
          7.3e-2, -7.3e-2,   7.3e-2,  -7.3e-2;
    // clang-format on

    return StateSpace(std::move(A), std::move(B), Matrix::Identity(12, 12), Matrix::Zero(12, 4), 0.1);
}

StepResult step(const StateSpace& model, const Vector& x, const Vector& u) {
    detail::require_dims(x.size() == model.n(), "state has dimension " + std::to_string(x.size()) +
                                                    ", model expects " + std::to_string(model.n()));
    detail::require_dims(u.size() == model.m(), "input has dimension " + std::to_string(u.size()) +
                                                    ", model expects " + std::to_string(model.m()));
    return {model.A() * x + model.B() * u, model.C() * x + model.D() * u};
}

double spectral_radius(const Matrix& M) {
    detail::require_dims(M.rows() == M.cols() && M.rows() >= 1, "spectral_radius needs a square matrix");
    if (M.rows() == 1) {
        return std::abs(M(0, 0));
    }
    Eigen::EigenSolver<Matrix> es(M, /*computeEigenvectors=*/false);
    if (es.info() != Eigen::Success) {
        throw NumericalError("eigenvalue iteration did not converge");
    }
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

Matrix closed_loop_matrix(const StateSpace& model, const FeedbackGain& gain) {
    const auto& K = gain.K;
    detail::require_dims(K.rows() == model.m() && K.cols() == model.q(),
                         "gain must be m x q, got " + shape(K));
    if (model.D().isZero(0.0)) {
        return model.A() + model.B() * K * model.C();
    }
    const Matrix loop = Matrix::Identity(model.m(), model.m()) - K * model.D();
    Eigen::FullPivLU<Matrix> lu(loop);
    if (!lu.isInvertible()) {
        throw NumericalError("algebraic loop I - K D is singular");
    }
    return model.A() + model.B() * lu.solve(K * model.C());
}

bool is_stabilizing(const StateSpace& model, const FeedbackGain& gain, double margin) {
    detail::require(margin >= 0.0 && margin <= 1.0, "stability margin must lie in [0, 1]");
    return spectral_radius(closed_loop_matrix(model, gain)) <= 1.0 - margin;
}

TrajectoryDataset simulate_closed_loop(const StateSpace& model,
                                       const FeedbackGain& gain,
                                       const Matrix& excitation,
                                       const Vector& x0) {
    const auto& K = gain.K;
    detail::require_dims(K.rows() == model.m() && K.cols() == model.q(),
                         "gain must be m x q, got " + shape(K));
    detail::require_dims(excitation.rows() == model.m(), "excitation must have m rows");
    detail::require_dims(x0.size() == model.n(), "initial state must have dimension n");

    const bool feedthrough = !model.D().isZero(0.0);
    Eigen::FullPivLU<Matrix> loop;
    if (feedthrough) {
        loop.compute(Matrix::Identity(model.m(), model.m()) - K * model.D());
        if (!loop.isInvertible()) {
            throw NumericalError("algebraic loop I - K D is singular");
        }
    }

    const auto T = excitation.cols();
    TrajectoryDataset data{Matrix(model.m(), T), Matrix(model.q(), T), model.dt()};
    Vector x = x0;
    for (Eigen::Index k = 0; k < T; ++k) {
        Vector u;
        if (feedthrough) {
            u = loop.solve(K * (model.C() * x) + excitation.col(k));
        } else {
            u = K * (model.C() * x) + excitation.col(k);
        }
        data.u.col(k) = u;
        data.y.col(k) = model.C() * x + model.D() * u;
        x = model.A() * x + model.B() * u;
    }
    return data;
}

TrajectoryDataset simulate_open_loop(const StateSpace& model, const Matrix& inputs, const Vector& x0) {
    detail::require_dims(inputs.rows() == model.m(), "inputs must have m rows");
    detail::require_dims(x0.size() == model.n(), "initial state must have dimension n");
    const auto T = inputs.cols();
    TrajectoryDataset data{inputs, Matrix(model.q(), T), model.dt()};
    Vector x = x0;
    for (Eigen::Index k = 0; k < T; ++k) {
        data.y.col(k) = model.C() * x + model.D() * inputs.col(k);
        x = model.A() * x + model.B() * inputs.col(k);
    }
    return data;
}

FeedbackGain design_stabilizing_gain(const StateSpace& model,
                                     const Matrix& state_weight,
                                     const Matrix& input_weight,
                                     int max_iters,
                                     double tol) {
    const int n = model.n();
    const int m = model.m();
    detail::require_dims(state_weight.rows() == n && state_weight.cols() == n, "state weight must be n x n");
    detail::require_dims(input_weight.rows() == m && input_weight.cols() == m, "input weight must be m x m");
    detail::require(max_iters >= 1 && tol > 0.0, "max_iters must be >= 1 and tol > 0");

    const Matrix& A = model.A();
    const Matrix& B = model.B();
    Matrix P = state_weight;
    bool settled = false;
    for (int it = 0; it < max_iters; ++it) {
        const Matrix BtP = B.transpose() * P;
        const Matrix S = input_weight + BtP * B;
        Eigen::LDLT<Matrix> ldlt(S);
        if (ldlt.info() != Eigen::Success) {
            throw NumericalError("Riccati recursion: R + B'PB is not invertible");
        }
        Matrix next = state_weight + A.transpose() * P * A - (BtP * A).transpose() * ldlt.solve(BtP * A);
        next = 0.5 * (next + next.transpose()).eval();
        if (!next.allFinite()) {
            throw NumericalError("Riccati recursion diverged");
        }
        const double change = (next - P).cwiseAbs().maxCoeff();
        P = std::move(next);
        if (change < tol * std::max(1.0, P.cwiseAbs().maxCoeff())) {
            settled = true;
            break;
        }
    }
    if (!settled) {
        throw NumericalError("Riccati recursion did not settle within " + std::to_string(max_iters) +
                             " iterations");
    }

    const Matrix BtP = B.transpose() * P;
    const Matrix state_gain = -(input_weight + BtP * B).ldlt().solve(BtP * A);

    // Output feedback reproducing the state feedback: K (C + D Kx) = Kx.
    const Matrix output_map = model.C() + model.D() * state_gain;
    Eigen::ColPivHouseholderQR<Matrix> qr(output_map);
    if (qr.rank() < n) {
        throw std::invalid_argument("output feedback needs C to have full column rank");
    }
    const Matrix pinv = output_map.completeOrthogonalDecomposition().pseudoInverse();
    FeedbackGain gain{state_gain * pinv};

    if (!(spectral_radius(closed_loop_matrix(model, gain)) < 1.0)) {
        throw NumericalError("designed gain does not stabilise the loop");
    }
    return gain;
}

Matrix uniform_excitation(int m, int T, double lo, double hi, std::uint64_t seed) {
    detail::require(m >= 1 && T >= 0, "excitation needs m >= 1 and T >= 0");
    detail::require(lo <= hi, "excitation bounds must satisfy lo <= hi");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(lo, hi);
    Matrix out(m, T);
    for (int k = 0; k < T; ++k) {
        for (int i = 0; i < m; ++i) {
            out(i, k) = dist(rng);
        }
    }
    return out;
}

std::string model_to_json(const StateSpace& model) {
    detail::json doc;
    doc["n"] = model.n();
    doc["m"] = model.m();
    doc["q"] = model.q();
    doc["dt"] = model.dt();
    doc["A"] = detail::matrix_to_json(model.A());
    doc["B"] = detail::matrix_to_json(model.B());
    doc["C"] = detail::matrix_to_json(model.C());
    doc["D"] = detail::matrix_to_json(model.D());
    return doc.dump(2);
}

StateSpace model_from_json(const std::string& text) {
    const auto doc = detail::json::parse(text);
    for (const auto& key : {"n", "m", "q", "dt", "A", "B", "C", "D"}) {
        if (!doc.contains(key)) {
            throw std::invalid_argument(std::string("model document is missing '") + key + "'");
        }
    }
    const int n = doc.at("n").get<int>();
    const int m = doc.at("m").get<int>();
    const int q = doc.at("q").get<int>();
    StateSpace model(detail::matrix_from_json(doc.at("A"), "A", n), detail::matrix_from_json(doc.at("B"), "B", m),
                     detail::matrix_from_json(doc.at("C"), "C", n), detail::matrix_from_json(doc.at("D"), "D", m),
                     doc.at("dt").get<double>());
    detail::require_dims(model.n() == n && model.m() == m && model.q() == q,
                         "model dimensions disagree with n/m/q fields");
    return model;
}

void save_model(const StateSpace& model, const std::filesystem::path& path) {
    detail::write_text_file(path, model_to_json(model) + "\n");
}

StateSpace load_model(const std::filesystem::path& path) {
    return model_from_json(detail::read_text_file(path));
}

}  // namespace ddpc::linsys
