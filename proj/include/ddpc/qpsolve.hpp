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
#ifndef DDPC_QPSOLVE_HPP
#define DDPC_QPSOLVE_HPP

#include "ddpc/types.hpp"

#include <filesystem>
#include <limits>
#include <optional>
#include <string>

namespace ddpc::qp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/**
 * Convex QP
 *
 *   minimize    1/2 z'P z + c'z
 *   subject to  Aeq z  = beq
 *               Ain z <= bin
 *               lo <= z <= hi      (entries may be -inf / +inf)
 *
 * Empty constraint matrices must still have d columns.
 */
struct QpProblem {
    Matrix P;
    Vector c;
    Matrix Aeq;
    Vector beq;
    Matrix Ain;
    Vector bin;
    Vector lo;
    Vector hi;

    int dim() const { return static_cast<int>(c.size()); }

    /// Problem with no constraints and infinite bounds.
    static QpProblem unconstrained(Matrix P, Vector c);

    /// Shape, finiteness, symmetry and bound-order checks; throws std::invalid_argument.
    /// Convexity is checked by solve().
    void validate() const;

    double objective(const Vector& z) const;
};

enum class QpStatus { optimal, max_iters, primal_infeasible, dual_infeasible };

std::string to_string(QpStatus status);

struct KktResiduals {
    double primal = 0.0;  // worst equality / inequality / bound violation
    double dual = 0.0;    // stationarity + dual sign violations
    double gap = 0.0;     // sum of |multiplier * constraint slack|
};

/**
 * Solver output. Multiplier conventions:
 *   P z + c + Aeq' y_eq + Ain' y_in + y_box = 0,  y_in >= 0,
 *   y_box > 0 on active upper bounds, < 0 on active lower bounds.
 */
struct QpSolution {
    Vector z;
    Vector y_eq;
    Vector y_in;
    Vector y_box;
    double objective = 0.0;
    QpStatus status = QpStatus::max_iters;
    KktResiduals residuals;
    int iterations = 0;
    /// Diagonal shift used for factorisation (not part of the objective).
    double regularization = 0.0;
};

struct QpSettings {
    double eps_prim = 1e-6;
    double eps_dual = 1e-6;
    int max_iters = 20000;
    /// Primal diagonal shift for the Newton systems.
    double regularization = 1e-8;
    /// Fraction-to-boundary factor for interior steps.
    double step_fraction = 0.995;
    /// Relative tolerance for Farkas / unboundedness certificates.
    double eps_infeasible = 1e-7;
    /// Iterations without merit improvement before giving up.
    int stall_iters = 60;
    /// Skip the PSD factorisation check (callers that build P as a Gram matrix).
    bool check_convexity = true;
};

/**
 * Primal-dual interior-point solve (Mehrotra predictor-corrector).
 *
 * Deterministic for identical inputs. Never reports `optimal` unless the
 * recomputed KKT residuals meet the tolerances. `initial_guess` only seeds
 * the primal iterate.
 */
QpSolution solve(const QpProblem& qp, const QpSettings& settings = {},
                 const std::optional<Vector>& initial_guess = std::nullopt);

/// Recompute residuals of (z, multipliers) from the problem data alone.
KktResiduals kkt_residuals(const QpProblem& qp, const QpSolution& sol);

/// JSON document with P, c, Aeq, beq, Ain, bin, lo, hi (infinite bounds as null).
std::string problem_to_json(const QpProblem& qp);
QpProblem problem_from_json(const std::string& text);
void dump_problem(const QpProblem& qp, const std::filesystem::path& path);

}  // namespace ddpc::qp

#endif  // DDPC_QPSOLVE_HPP
