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
#ifndef DDPC_BEHAVIOR_HPP
#define DDPC_BEHAVIOR_HPP

#include "ddpc/linsys.hpp"
#include "ddpc/types.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace ddpc::behavior {

/// Generalized (block) Hankel matrix of depth L. `seq` is d x T with one
/// sample per column; the result is dL x (T - L + 1) and column j stacks
/// seq(:, j), ..., seq(:, j + L - 1).
Matrix hankel(const Matrix& seq, int L);

/// Full row rank test of hankel(seq, L). Singular values above tol * sigma_max count.
bool is_persistently_exciting(const Matrix& seq, int L, double tol = 1e-9);

/// Numerical rank with a relative singular-value threshold.
int numerical_rank(const Matrix& M, double tol = 1e-9);

/// Fewest samples that can be persistently exciting of order L: (m + 1) L - 1.
int min_samples(int m, int L);

/// Excitation order needed for the data to span all length T_p + T_f trajectories.
int excitation_order(int T_p, int T_f, int n);

/**
 * Non-parametric trajectory model W = [U_p; Y_p; U_f; Y_f].
 *
 * Built once from a dataset and never modified. Blocks are copies of the
 * corresponding row ranges of W.
 */
class BehaviorMatrix {
public:
    BehaviorMatrix(Matrix W, int m, int q, int T_p, int T_f);

    const Matrix& W() const { return W_; }
    int m() const { return m_; }
    int q() const { return q_; }
    int T_p() const { return T_p_; }
    int T_f() const { return T_f_; }
    int n_cols() const { return static_cast<int>(W_.cols()); }
    int rows() const { return static_cast<int>(W_.rows()); }

    // Row offsets of each partition inside W.
    int up_offset() const { return 0; }
    int yp_offset() const { return m_ * T_p_; }
    int uf_offset() const { return (m_ + q_) * T_p_; }
    int yf_offset() const { return (m_ + q_) * T_p_ + m_ * T_f_; }

    auto U_p() const { return W_.middleRows(up_offset(), m_ * T_p_); }
    auto Y_p() const { return W_.middleRows(yp_offset(), q_ * T_p_); }
    auto U_f() const { return W_.middleRows(uf_offset(), m_ * T_f_); }
    auto Y_f() const { return W_.middleRows(yf_offset(), q_ * T_f_); }

    /// Stacks a trajectory in partition order [u_p; y_p; u_f; y_f]. `u` is
    /// m x (T_p + T_f), `y` is q x (T_p + T_f).
    Vector stack(const Matrix& u, const Matrix& y) const;

private:
    Matrix W_;
    int m_, q_, T_p_, T_f_;
};

/// Hankel both signals at depth T_p + T_f and interleave past/future blocks.
BehaviorMatrix build_behavior_matrix(const linsys::TrajectoryDataset& data, int T_p, int T_f);

/// Same as above; additionally warns when the past window of the given plant
/// cannot determine its state.
BehaviorMatrix build_behavior_matrix(const linsys::TrajectoryDataset& data, int T_p, int T_f,
                                     const linsys::StateSpace& plant);

/// True iff [C; CA; ...; CA^{T_p-1}] has full column rank, i.e. T_p past
/// outputs (with known inputs) determine the current state.
bool past_window_pins_state(const linsys::StateSpace& plant, int T_p);

/// Relative least-squares residual ||W g* - w|| / max(1, ||w||) of a trajectory
/// against the column span of W. `u` is m x (T_p + T_f), `y` is q x (T_p + T_f).
double span_residual(const BehaviorMatrix& behavior, const Matrix& u, const Matrix& y);

/// Spectral norm (largest singular value).
double norm_2(const Matrix& M);
/// Max absolute row sum.
double norm_inf(const Matrix& M);

// Dataset documents: {"m", "q", "dt", "T_num", "u_d", "y_d", ...}. u_d/y_d are
// T_num rows of one sample each. `extra` fields (JSON object text, may be empty)
// are merged in verbatim.
std::string dataset_to_json(const linsys::TrajectoryDataset& data, const std::string& extra = {});
linsys::TrajectoryDataset dataset_from_json(const std::string& text);
void save_dataset(const linsys::TrajectoryDataset& data, const std::filesystem::path& path,
                  const std::string& extra = {});
linsys::TrajectoryDataset load_dataset(const std::filesystem::path& path);

/// SHA-256 of the dataset's canonical serialisation (hex).
std::string dataset_digest(const linsys::TrajectoryDataset& data);

}  // namespace ddpc::behavior

#endif  // DDPC_BEHAVIOR_HPP
