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
#include "json_util.hpp"

#include <Eigen/SVD>
#include <spdlog/spdlog.h>

#include <cmath>

namespace ddpc::behavior {

Matrix hankel(const Matrix& seq, int L) {
    detail::require(L >= 1, "Hankel depth must be >= 1");
    const auto d = seq.rows();
    const auto T = seq.cols();
    if (T < L) {
        throw DimensionError("sequence of length " + std::to_string(T) + " is shorter than depth " +
                             std::to_string(L));
    }
    const auto cols = T - L + 1;
    Matrix H(d * L, cols);
    for (Eigen::Index j = 0; j < cols; ++j) {
        for (int i = 0; i < L; ++i) {
            H.block(i * d, j, d, 1) = seq.col(j + i);
        }
    }
    return H;
}

int numerical_rank(const Matrix& M, double tol) {
    if (M.size() == 0) {
        return 0;
    }
    Eigen::BDCSVD<Matrix> svd(M);
    const Vector& s = svd.singularValues();
    if (s.size() == 0 || s(0) == 0.0) {
        return 0;
    }
    const double cutoff = tol * s(0);
    int rank = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        if (s(i) > cutoff) {
            ++rank;
        }
    }
    return rank;
}

bool is_persistently_exciting(const Matrix& seq, int L, double tol) {
    const Matrix H = hankel(seq, L);
    if (H.cols() < H.rows()) {
        return false;
    }
    return numerical_rank(H, tol) == H.rows();
}

int min_samples(int m, int L) {
    detail::require(m >= 1 && L >= 1, "min_samples needs m >= 1 and L >= 1");
    return (m + 1) * L - 1;
}

int excitation_order(int T_p, int T_f, int n) {
    detail::require(T_p >= 1 && T_f >= 1 && n >= 0, "excitation_order needs T_p, T_f >= 1 and n >= 0");
    return T_p + T_f + n;
}

BehaviorMatrix::BehaviorMatrix(Matrix W, int m, int q, int T_p, int T_f)
    : W_(std::move(W)), m_(m), q_(q), T_p_(T_p), T_f_(T_f) {
    detail::require(m >= 1 && q >= 1 && T_p >= 1 && T_f >= 1, "behavior matrix needs m, q, T_p, T_f >= 1");
    detail::require_dims(W_.rows() == static_cast<Eigen::Index>(m + q) * (T_p + T_f),
                         "W must have (m + q)(T_p + T_f) rows");
    detail::require_dims(W_.cols() >= 1, "W must have at least one column");
}

Vector BehaviorMatrix::stack(const Matrix& u, const Matrix& y) const {
    const int L = T_p_ + T_f_;
    detail::require_dims(u.rows() == m_ && u.cols() == L, "trajectory input must be m x (T_p + T_f)");
    detail::require_dims(y.rows() == q_ && y.cols() == L, "trajectory output must be q x (T_p + T_f)");
    Vector w(rows());
    const auto flat = [](const Matrix& M, int first, int count) {
        Matrix block = M.middleCols(first, count);
        return Eigen::Map<const Vector>(block.data(), block.size()).eval();
    };
    w.segment(up_offset(), m_ * T_p_) = flat(u, 0, T_p_);
    w.segment(yp_offset(), q_ * T_p_) = flat(y, 0, T_p_);
    w.segment(uf_offset(), m_ * T_f_) = flat(u, T_p_, T_f_);
    w.segment(yf_offset(), q_ * T_f_) = flat(y, T_p_, T_f_);
    return w;
}

BehaviorMatrix build_behavior_matrix(const linsys::TrajectoryDataset& data, int T_p, int T_f) {
    data.validate();
    detail::require(T_p >= 1 && T_f >= 1, "T_p and T_f must be >= 1");
    const int L = T_p + T_f;
    if (data.length() < L) {
        throw DimensionError("dataset has " + std::to_string(data.length()) + " samples, need at least T_p + T_f = " +
                             std::to_string(L));
    }
    const int m = data.m();
    const int q = data.q();
    const Matrix Hu = hankel(data.u, L);
    const Matrix Hy = hankel(data.y, L);
    Matrix W(Hu.rows() + Hy.rows(), Hu.cols());
    W << Hu.topRows(m * T_p), Hy.topRows(q * T_p), Hu.bottomRows(m * T_f), Hy.bottomRows(q * T_f);
    return BehaviorMatrix(std::move(W), m, q, T_p, T_f);
}

bool past_window_pins_state(const linsys::StateSpace& plant, int T_p) {
    detail::require(T_p >= 1, "T_p must be >= 1");
    const int n = plant.n();
    const int q = plant.q();
    Matrix O(q * T_p, n);
    Matrix block = plant.C();
    for (int k = 0; k < T_p; ++k) {
        O.middleRows(k * q, q) = block;
        block = block * plant.A();
    }
    return Eigen::ColPivHouseholderQR<Matrix>(O).rank() == n;
}

BehaviorMatrix build_behavior_matrix(const linsys::TrajectoryDataset& data, int T_p, int T_f,
                                     const linsys::StateSpace& plant) {
    if (!past_window_pins_state(plant, T_p)) {
        spdlog::warn("past window T_p = {} does not determine the plant state; predictions may not be unique", T_p);
    }
    return build_behavior_matrix(data, T_p, T_f);
}

double span_residual(const BehaviorMatrix& behavior, const Matrix& u, const Matrix& y) {
    const Vector w = behavior.stack(u, y);
    Eigen::BDCSVD<Matrix> svd(behavior.W(), Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector g = svd.solve(w);
    return (behavior.W() * g - w).norm() / std::max(1.0, w.norm());
}

double norm_2(const Matrix& M) {
    if (M.size() == 0) {
        return 0.0;
    }
    return Eigen::BDCSVD<Matrix>(M).singularValues()(0);
}

double norm_inf(const Matrix& M) {
    if (M.size() == 0) {
        return 0.0;
    }
    return M.cwiseAbs().rowwise().sum().maxCoeff();
}

std::string dataset_to_json(const linsys::TrajectoryDataset& data, const std::string& extra) {
    data.validate();
    detail::json doc = extra.empty() ? detail::json::object() : detail::json::parse(extra);
    doc["m"] = data.m();
    doc["q"] = data.q();
    doc["dt"] = data.dt;
    doc["T_num"] = data.length();
    doc["u_d"] = detail::matrix_to_json(data.u.transpose());
    doc["y_d"] = detail::matrix_to_json(data.y.transpose());
    return doc.dump(1);
}

linsys::TrajectoryDataset dataset_from_json(const std::string& text) {
    const auto doc = detail::json::parse(text);
    for (const auto& key : {"m", "q", "dt", "T_num", "u_d", "y_d"}) {
        if (!doc.contains(key)) {
            throw std::invalid_argument(std::string("dataset document is missing '") + key + "'");
        }
    }
    const int m = doc.at("m").get<int>();
    const int q = doc.at("q").get<int>();
    const int T = doc.at("T_num").get<int>();
    linsys::TrajectoryDataset data{detail::matrix_from_json(doc.at("u_d"), "u_d", m).transpose(),
                                   detail::matrix_from_json(doc.at("y_d"), "y_d", q).transpose(),
                                   doc.at("dt").get<double>()};
    detail::require_dims(data.m() == m && data.q() == q && data.length() == T,
                         "dataset rows disagree with m/q/T_num fields");
    data.validate();
    return data;
}

void save_dataset(const linsys::TrajectoryDataset& data, const std::filesystem::path& path,
                  const std::string& extra) {
    detail::write_text_file(path, dataset_to_json(data, extra) + "\n");
}

linsys::TrajectoryDataset load_dataset(const std::filesystem::path& path) {
    return dataset_from_json(detail::read_text_file(path));
}

std::string dataset_digest(const linsys::TrajectoryDataset& data) {
    return sha256_hex(dataset_to_json(data));
}

}  // namespace ddpc::behavior
