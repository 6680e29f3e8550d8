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
#ifndef DDPC_LINSYS_HPP
#define DDPC_LINSYS_HPP

#include "ddpc/types.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace ddpc::linsys {

/**
 * @brief Discrete-time LTI model
 *
 *   x(k+1) = A x(k) + B u(k)
 *   y(k)   = C x(k) + D u(k)
 *
 * Shapes are validated on construction and the object is immutable afterwards.
 */
class StateSpace {
public:
    StateSpace(Matrix A, Matrix B, Matrix C, Matrix D, double dt);

    const Matrix& A() const { return A_; }
    const Matrix& B() const { return B_; }
    const Matrix& C() const { return C_; }
    const Matrix& D() const { return D_; }
    double dt() const { return dt_; }

    int n() const { return static_cast<int>(A_.rows()); }
    int m() const { return static_cast<int>(B_.cols()); }
    int q() const { return static_cast<int>(C_.rows()); }

private:
    Matrix A_, B_, C_, D_;
    double dt_;
};

/// Output-feedback gain u = K y, K is m x q.
struct FeedbackGain {
    Matrix K;
};

/// Paired input/output samples from one collection run. Column k of `u` and
/// `y` holds the k-th sample.
struct TrajectoryDataset {
    Matrix u;  // m x T_num
    Matrix y;  // q x T_num
    double dt = 0.0;

    int m() const { return static_cast<int>(u.rows()); }
    int q() const { return static_cast<int>(y.rows()); }
    int length() const { return static_cast<int>(u.cols()); }

    /// Throws if the invariants (equal length >= 1, dt > 0) do not hold.
    void validate() const;
};

struct StepResult {
    Vector x_next;
    Vector y;
};

/// 12-state, 4-input quadrotor linearisation sampled at 0.1 s. C = I, D = 0.
/// State order: position (3), velocity (3), attitude (3), angular rate (3).
StateSpace make_drone_model();

/// One step of the difference equation. `y` is evaluated at the pre-step state.
StepResult step(const StateSpace& model, const Vector& x, const Vector& u);

/// max |eig(M)|.
double spectral_radius(const Matrix& M);

/// Closed-loop transition matrix for u = K y + u_r. Equals A + B K C when D = 0;
/// otherwise the algebraic loop is folded in via (I - K D)^-1.
Matrix closed_loop_matrix(const StateSpace& model, const FeedbackGain& gain);

/// True iff spectral_radius(closed loop) <= 1 - margin, margin in [0, 1].
bool is_stabilizing(const StateSpace& model, const FeedbackGain& gain, double margin);

/**
 * Simulate the data-collection loop u_d(k) = K y_d(k) + u_r(k).
 *
 * `excitation` is m x T (one column per step). With D != 0 the loop is
 * solved exactly through (I - K D)^-1; a singular loop throws NumericalError.
 * Stability of the loop is the caller's responsibility.
 */
TrajectoryDataset simulate_closed_loop(const StateSpace& model,
                                       const FeedbackGain& gain,
                                       const Matrix& excitation,
                                       const Vector& x0);

/// Open-loop simulation driven directly by `inputs` (m x T).
TrajectoryDataset simulate_open_loop(const StateSpace& model, const Matrix& inputs,
                                     const Vector& x0);

/**
 * LQR-style output-feedback gain from the fixed point of the discrete Riccati
 * recursion (successive substitution).
 *
 * The state-feedback gain is mapped through the left inverse of C, so C must
 * have full column rank. Throws NumericalError if the recursion does not
 * settle within `max_iters` or the resulting loop is not Schur stable.
 */
FeedbackGain design_stabilizing_gain(const StateSpace& model,
                                     const Matrix& state_weight,
                                     const Matrix& input_weight,
                                     int max_iters = 100000,
                                     double tol = 1e-10);

/// Uniform i.i.d. excitation on [lo, hi]^m, T columns, deterministic in `seed`.
Matrix uniform_excitation(int m, int T, double lo, double hi, std::uint64_t seed);

// Model documents: {"n", "m", "q", "dt", "A", "B", "C", "D"} with matrices as
// row-major nested arrays.
std::string model_to_json(const StateSpace& model);
StateSpace model_from_json(const std::string& text);
void save_model(const StateSpace& model, const std::filesystem::path& path);
StateSpace load_model(const std::filesystem::path& path);

}  // namespace ddpc::linsys

#endif  // DDPC_LINSYS_HPP
