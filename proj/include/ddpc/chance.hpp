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
#ifndef DDPC_CHANCE_HPP
#define DDPC_CHANCE_HPP

#include "ddpc/types.hpp"

#include <cstdint>

namespace ddpc::chance {

/// Multivariate Gaussian N(mu, Sigma). Sigma must be symmetric PSD (eigenvalues >= -1e-10).
class GaussianVector {
public:
    GaussianVector(Vector mu, Matrix Sigma);

    const Vector& mu() const { return mu_; }
    const Matrix& Sigma() const { return Sigma_; }
    int dim() const { return static_cast<int>(mu_.size()); }

private:
    Vector mu_;
    Matrix Sigma_;
};

/// Linearised pairwise collision constraint  k' (p_i - p_j) - d_safe >= eta.
struct CollisionConstraint {
    int i = 0;
    int j = 0;
    int step = 0;
    Vector k;
    double eta = 0.0;
    double d_safe = 0.0;

    /// k' (p_i - p_j) - d_safe - eta; non-negative when satisfied.
    double slack(const Vector& p_i, const Vector& p_j) const;
};

/// Thrown by relax_collision when the means are too close to define a direction.
class DegenerateDirection : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Separation below which the collision direction is considered undefined (m).
inline constexpr double kDegenerateSeparation = 1e-9;

/// Error function. Throws on NaN.
double erf(double x);

/// Inverse error function on (-1, 1) by safeguarded Newton iteration on erf.
double erf_inv(double p);

/// Standard normal CDF.
double normal_cdf(double x);

struct ScalarRelaxation {
    double eta = 0.0;
    bool satisfied = false;
};

/// Deterministic equivalent of Pr(a' X <= b) <= phi:  a' mu - b >= eta with
/// eta = sqrt(2 a' Sigma a) erf_inv(1 - 2 phi).
ScalarRelaxation relax_scalar(const Vector& a, double b, const GaussianVector& X, double phi);

/**
 * Half-space relaxation of Pr(||y_i - y_j|| <= d_safe) <= phi.
 *
 * k = (mu_i - mu_j) / ||mu_i - mu_j||, eta = sqrt(2 k'(Sigma_i + Sigma_j) k) erf_inv(1 - 2 phi).
 * phi must lie in (0, 0.5]. Throws DegenerateDirection when the means coincide.
 */
CollisionConstraint relax_collision(const Vector& mu_i, const Vector& mu_j, const Matrix& Sigma_i,
                                    const Matrix& Sigma_j, double d_safe, double phi);

/// Tightening for a fixed unit direction k.
double collision_tightening(const Vector& k, const Matrix& Sigma_i, const Matrix& Sigma_j, double phi);

/// Fraction of n_samples independent draws (y_i, y_j) with ||y_i - y_j|| <= d_safe.
double mc_collision_probability(const GaussianVector& X_i, const GaussianVector& X_j, double d_safe,
                                int n_samples, std::uint64_t seed);

struct CollisionSampleStats {
    long long samples = 0;
    long long in_sphere = 0;      // ||d|| <= d_safe
    long long in_halfspace = 0;   // k'd <= d_safe
    long long domination_failures = 0;  // in sphere but not in half-space
};

/// Same draws as mc_collision_probability (for equal seed), also classifying
/// each sample against the half-space k' d <= d_safe.
CollisionSampleStats mc_collision_stats(const GaussianVector& X_i, const GaussianVector& X_j, const Vector& k,
                                        double d_safe, int n_samples, std::uint64_t seed);

}  // namespace ddpc::chance

#endif  // DDPC_CHANCE_HPP
