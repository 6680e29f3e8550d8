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
#include "ddpc/chance.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

namespace ddpc::chance {

namespace {

constexpr double kPsdTolerance = 1e-10;
constexpr double kSamplingJitter = 1e-12;

void check_phi_open(double phi) {
    if (!(phi > 0.0 && phi < 1.0)) {
        throw std::invalid_argument("confidence level phi must lie in (0, 1)");
    }
}

Matrix sampling_factor(const Matrix& Sigma) {
    const auto n = Sigma.rows();
    Eigen::LLT<Matrix> llt(Sigma + kSamplingJitter * Matrix::Identity(n, n));
    if (llt.info() != Eigen::Success) {
        throw std::invalid_argument("covariance is not positive semidefinite");
    }
    return llt.matrixL();
}

}  // namespace

GaussianVector::GaussianVector(Vector mu, Matrix Sigma) : mu_(std::move(mu)), Sigma_(std::move(Sigma)) {
    detail::require_dims(Sigma_.rows() == Sigma_.cols() && Sigma_.rows() == mu_.size(),
                         "covariance must be square with side dim(mu)");
    if (mu_.size() == 0) {
        return;
    }
    const double scale = std::max(1.0, Sigma_.cwiseAbs().maxCoeff());
    if (!(Sigma_ - Sigma_.transpose()).isZero(1e-12 * scale)) {
        throw std::invalid_argument("covariance must be symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Matrix> es(Sigma_, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -kPsdTolerance) {
        throw std::invalid_argument("covariance must be positive semidefinite");
    }
}

double CollisionConstraint::slack(const Vector& p_i, const Vector& p_j) const {
    return k.dot(p_i - p_j) - d_safe - eta;
}

double erf(double x) {
    if (std::isnan(x)) {
        throw std::domain_error("erf of NaN");
    }
    return std::erf(x);
}

double erf_inv(double p) {
    if (std::isnan(p) || !(p > -1.0 && p < 1.0)) {
        throw std::domain_error("erf_inv is only defined on (-1, 1)");
    }
    if (p == 0.0) {
        return 0.0;
    }
    const double target = std::abs(p);

    // Bracket [lo, hi] with erf(lo) <= target <= erf(hi).
    double lo = 0.0;
    double hi = 1.0;
    while (std::erf(hi) < target) {
        lo = hi;
        hi *= 2.0;
    }

    // Winitzki's closed form as a starting point.
    constexpr double a = 0.147;
    const double ln = std::log1p(-target * target);
    const double t = 2.0 / (std::numbers::pi * a) + 0.5 * ln;
    double x = std::sqrt(std::sqrt(t * t - ln / a) - t);
    if (!(x > lo && x < hi)) {
        x = 0.5 * (lo + hi);
    }

    const double slope_scale = 2.0 / std::sqrt(std::numbers::pi);
    for (int it = 0; it < 200; ++it) {
        const double f = std::erf(x) - target;
        if (f == 0.0) {
            break;
        }
        if (f < 0.0) {
            lo = x;
        } else {
            hi = x;
        }
        const double slope = slope_scale * std::exp(-x * x);
        double next = x - f / slope;
        if (!(next > lo && next < hi) || !std::isfinite(next)) {
            next = 0.5 * (lo + hi);
        }
        if (std::abs(next - x) <= 2.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, x)) {
            x = next;
            break;
        }
        x = next;
    }
    return p < 0.0 ? -x : x;
}

double normal_cdf(double x) {
    return 0.5 * (1.0 + erf(x / std::numbers::sqrt2));
}

ScalarRelaxation relax_scalar(const Vector& a, double b, const GaussianVector& X, double phi) {
    detail::require_dims(a.size() == X.dim(), "direction and Gaussian dimensions differ");
    if (a.isZero(0.0)) {
        throw std::invalid_argument("constraint direction a must be nonzero");
    }
    check_phi_open(phi);
    const double variance = std::max(0.0, a.dot(X.Sigma() * a));
    const double eta = std::sqrt(2.0 * variance) * erf_inv(1.0 - 2.0 * phi);
    return {eta, a.dot(X.mu()) - b >= eta};
}

double collision_tightening(const Vector& k, const Matrix& Sigma_i, const Matrix& Sigma_j, double phi) {
    detail::require_dims(Sigma_i.rows() == k.size() && Sigma_i.cols() == k.size() &&
                             Sigma_j.rows() == k.size() && Sigma_j.cols() == k.size(),
                         "covariances must match the direction dimension");
    const double variance = std::max(0.0, k.dot((Sigma_i + Sigma_j) * k));
    return std::sqrt(2.0 * variance) * erf_inv(1.0 - 2.0 * phi);
}

CollisionConstraint relax_collision(const Vector& mu_i, const Vector& mu_j, const Matrix& Sigma_i,
                                    const Matrix& Sigma_j, double d_safe, double phi) {
    detail::require_dims(mu_i.size() == mu_j.size() && mu_i.size() >= 1, "position means must share a dimension");
    if (!(phi > 0.0 && phi <= 0.5)) {
        throw std::invalid_argument("collision confidence level phi must lie in (0, 0.5]");
    }
    if (!(d_safe > 0.0)) {
        throw std::invalid_argument("d_safe must be positive");
    }
    const Vector diff = mu_i - mu_j;
    const double dist = diff.norm();
    if (!(dist > kDegenerateSeparation)) {
        throw DegenerateDirection("position means coincide; collision direction is undefined");
    }
    CollisionConstraint c;
    c.k = diff / dist;
    c.eta = collision_tightening(c.k, Sigma_i, Sigma_j, phi);
    c.d_safe = d_safe;
    return c;
}

CollisionSampleStats mc_collision_stats(const GaussianVector& X_i, const GaussianVector& X_j, const Vector& k,
                                        double d_safe, int n_samples, std::uint64_t seed) {
    detail::require(n_samples >= 1, "n_samples must be >= 1");
    detail::require_dims(X_i.dim() == X_j.dim(), "Gaussians must share a dimension");
    detail::require_dims(k.size() == 0 || k.size() == X_i.dim(), "direction has the wrong dimension");
    const Matrix L_i = sampling_factor(X_i.Sigma());
    const Matrix L_j = sampling_factor(X_j.Sigma());
    const auto d = X_i.dim();

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector z_i(d), z_j(d);
    CollisionSampleStats stats;
    stats.samples = n_samples;
    for (int s = 0; s < n_samples; ++s) {
        for (Eigen::Index r = 0; r < d; ++r) {
            z_i(r) = normal(rng);
        }
        for (Eigen::Index r = 0; r < d; ++r) {
            z_j(r) = normal(rng);
        }
        const Vector delta = (X_i.mu() + L_i * z_i) - (X_j.mu() + L_j * z_j);
        const bool sphere = delta.norm() <= d_safe;
        const bool half = k.size() > 0 && k.dot(delta) <= d_safe;
        stats.in_sphere += sphere;
        stats.in_halfspace += half;
        stats.domination_failures += (sphere && k.size() > 0 && !half);
    }
    return stats;
}

double mc_collision_probability(const GaussianVector& X_i, const GaussianVector& X_j, double d_safe,
                                int n_samples, std::uint64_t seed) {
    const auto stats = mc_collision_stats(X_i, X_j, Vector(), d_safe, n_samples, seed);
    return static_cast<double>(stats.in_sphere) / static_cast<double>(stats.samples);
}

}  // namespace ddpc::chance
