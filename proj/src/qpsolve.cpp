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
#include "ddpc/qpsolve.hpp"

#include <spdlog/spdlog.h>

#include "json_util.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <vector>

namespace ddpc::qp {

namespace {

double inf_norm(const Vector& v) {
    return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff();
}

std::vector<int> finite_indices(const Vector& v) {
    std::vector<int> idx;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (std::isfinite(v(i))) {
            idx.push_back(static_cast<int>(i));
        }
    }
    return idx;
}

/**
 * Accumulates A' diag(w) A into the lower triangle of a dense matrix.
 *
 * Rows are grouped by their column support; each group contributes a small
 * dense Gram block. Falls back to one dense rank update when grouping would
 * not save work.
 */
class WeightedGram {
public:
    explicit WeightedGram(const Matrix& A) : A_(A) {
        std::map<std::vector<int>, std::size_t> index;
        for (Eigen::Index r = 0; r < A.rows(); ++r) {
            std::vector<int> support;
            for (Eigen::Index c = 0; c < A.cols(); ++c) {
                if (A(r, c) != 0.0) {
                    support.push_back(static_cast<int>(c));
                }
            }
            if (support.empty()) {
                continue;
            }
            auto [it, inserted] = index.try_emplace(support, groups_.size());
            if (inserted) {
                groups_.push_back({{}, support, {}});
            }
            groups_[it->second].rows.push_back(static_cast<int>(r));
        }
        double grouped = 0.0;
        for (auto& g : groups_) {
            const auto nr = static_cast<Eigen::Index>(g.rows.size());
            const auto nc = static_cast<Eigen::Index>(g.cols.size());
            g.block.resize(nr, nc);
            for (Eigen::Index a = 0; a < nr; ++a) {
                for (Eigen::Index b = 0; b < nc; ++b) {
                    g.block(a, b) = A(g.rows[a], g.cols[b]);
                }
            }
            grouped += static_cast<double>(nr) * static_cast<double>(nc) * static_cast<double>(nc);
        }
        const double dense = static_cast<double>(A.rows()) * static_cast<double>(A.cols()) *
                             static_cast<double>(A.cols());
        use_groups_ = grouped < 0.5 * dense;
    }

    void accumulate(const Vector& w, Matrix& H) const {
        if (A_.rows() == 0) {
            return;
        }
        if (!use_groups_) {
            const Matrix B = w.cwiseSqrt().asDiagonal() * A_;
            H.selfadjointView<Eigen::Lower>().rankUpdate(B.transpose());
            return;
        }
        for (const auto& g : groups_) {
            Vector sw(static_cast<Eigen::Index>(g.rows.size()));
            for (std::size_t a = 0; a < g.rows.size(); ++a) {
                sw(static_cast<Eigen::Index>(a)) = std::sqrt(w(g.rows[a]));
            }
            const Matrix B = sw.asDiagonal() * g.block;
            Matrix G = Matrix::Zero(B.cols(), B.cols());
            G.selfadjointView<Eigen::Lower>().rankUpdate(B.transpose());
            for (Eigen::Index b = 0; b < G.cols(); ++b) {
                for (Eigen::Index a = b; a < G.rows(); ++a) {
                    H(g.cols[a], g.cols[b]) += G(a, b);
                }
            }
        }
    }

private:
    struct Group {
        std::vector<int> rows;
        std::vector<int> cols;
        Matrix block;
    };
    const Matrix& A_;
    std::vector<Group> groups_;
    bool use_groups_ = false;
};

double max_step(const Vector& v, const Vector& dv) {
    double alpha = 1.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (dv(i) < 0.0) {
            alpha = std::min(alpha, -v(i) / dv(i));
        }
    }
    return alpha;
}

Vector gather(const Vector& v, const std::vector<int>& idx) {
    Vector out(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) {
        out(static_cast<Eigen::Index>(k)) = v(idx[k]);
    }
    return out;
}

void scatter_add(Vector& target, const std::vector<int>& idx, const Vector& v, double sign = 1.0) {
    for (std::size_t k = 0; k < idx.size(); ++k) {
        target(idx[k]) += sign * v(static_cast<Eigen::Index>(k));
    }
}

}  // namespace

QpProblem QpProblem::unconstrained(Matrix P, Vector c) {
    const auto d = c.size();
    QpProblem qp;
    qp.P = std::move(P);
    qp.c = std::move(c);
    qp.Aeq = Matrix(0, d);
    qp.beq = Vector(0);
    qp.Ain = Matrix(0, d);
    qp.bin = Vector(0);
    qp.lo = Vector::Constant(d, -kInf);
    qp.hi = Vector::Constant(d, kInf);
    return qp;
}

void QpProblem::validate() const {
    const auto d = c.size();
    detail::require_dims(P.rows() == d && P.cols() == d, "P must be d x d");
    detail::require_dims(Aeq.cols() == d && Aeq.rows() == beq.size(), "Aeq must be me x d with beq of length me");
    detail::require_dims(Ain.cols() == d && Ain.rows() == bin.size(), "Ain must be mi x d with bin of length mi");
    detail::require_dims(lo.size() == d && hi.size() == d, "bounds must have length d");
    detail::require(P.allFinite() && c.allFinite() && Aeq.allFinite() && beq.allFinite() && Ain.allFinite(),
                    "QP data must be finite");
    for (Eigen::Index i = 0; i < bin.size(); ++i) {
        detail::require(std::isfinite(bin(i)), "inequality right-hand sides must be finite");
    }
    for (Eigen::Index i = 0; i < d; ++i) {
        detail::require(!std::isnan(lo(i)) && !std::isnan(hi(i)), "bounds must not be NaN");
        detail::require(lo(i) <= hi(i), "lower bound exceeds upper bound at index " + std::to_string(i));
        detail::require(lo(i) < kInf && hi(i) > -kInf, "bounds must leave a non-empty interval");
    }
    if (d > 0) {
        const double scale = std::max(1.0, P.cwiseAbs().maxCoeff());
        detail::require((P - P.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * scale, "P must be symmetric");
    }
}

double QpProblem::objective(const Vector& z) const {
    return 0.5 * z.dot(P * z) + c.dot(z);
}

std::string to_string(QpStatus status) {
    switch (status) {
        case QpStatus::optimal:
            return "optimal";
        case QpStatus::max_iters:
            return "max_iters";
        case QpStatus::primal_infeasible:
            return "primal_infeasible";
        case QpStatus::dual_infeasible:
            return "dual_infeasible";
    }
    return "unknown";
}

KktResiduals kkt_residuals(const QpProblem& qp, const QpSolution& sol) {
    const auto d = qp.dim();
    detail::require_dims(sol.z.size() == d, "solution has the wrong dimension");
    const Vector y_eq = sol.y_eq.size() == qp.beq.size() ? sol.y_eq : Vector::Zero(qp.beq.size());
    const Vector y_in = sol.y_in.size() == qp.bin.size() ? sol.y_in : Vector::Zero(qp.bin.size());
    const Vector y_box = sol.y_box.size() == d ? sol.y_box : Vector::Zero(d);
    const Vector& z = sol.z;

    KktResiduals r;
    if (qp.beq.size() > 0) {
        r.primal = std::max(r.primal, inf_norm(qp.Aeq * z - qp.beq));
    }
    Vector in_slack;
    if (qp.bin.size() > 0) {
        in_slack = qp.bin - qp.Ain * z;
        r.primal = std::max(r.primal, std::max(0.0, -in_slack.minCoeff()));
    }
    for (Eigen::Index i = 0; i < d; ++i) {
        r.primal = std::max(r.primal, std::max(0.0, qp.lo(i) - z(i)));
        r.primal = std::max(r.primal, std::max(0.0, z(i) - qp.hi(i)));
    }

    Vector stationarity = qp.P * z + qp.c + y_box;
    if (qp.beq.size() > 0) {
        stationarity += qp.Aeq.transpose() * y_eq;
    }
    if (qp.bin.size() > 0) {
        stationarity += qp.Ain.transpose() * y_in;
    }
    r.dual = inf_norm(stationarity);
    for (Eigen::Index k = 0; k < y_in.size(); ++k) {
        r.dual = std::max(r.dual, std::max(0.0, -y_in(k)));
        r.gap += std::abs(y_in(k) * in_slack(k));
    }
    for (Eigen::Index i = 0; i < d; ++i) {
        const double upper = std::max(0.0, y_box(i));
        const double lower = std::max(0.0, -y_box(i));
        // A multiplier on an infinite bound is a sign violation.
        if (upper > 0.0) {
            if (std::isfinite(qp.hi(i))) {
                r.gap += std::abs(upper * (qp.hi(i) - z(i)));
            } else {
                r.dual = std::max(r.dual, upper);
            }
        }
        if (lower > 0.0) {
            if (std::isfinite(qp.lo(i))) {
                r.gap += std::abs(lower * (z(i) - qp.lo(i)));
            } else {
                r.dual = std::max(r.dual, lower);
            }
        }
    }
    return r;
}

namespace {

/// Pseudo-inverse of the (small) equality Schur complement. Rank-deficient
/// equality rows are tolerated; eigenvalues below 1e-13 of the largest are
/// dropped.
class SchurInverse {
public:
    void compute(const Matrix& S) {
        Eigen::SelfAdjointEigenSolver<Matrix> es(S);
        if (es.info() != Eigen::Success) {
            throw NumericalError("interior-point equality Schur complement could not be factorised");
        }
        V_ = es.eigenvectors();
        const Vector& ev = es.eigenvalues();
        const double cut = 1e-13 * std::max(ev.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
        inv_ = ev.unaryExpr([cut](double l) { return l > cut ? 1.0 / l : 0.0; });
    }
    Vector solve(const Vector& b) const { return V_ * inv_.cwiseProduct(V_.transpose() * b); }

private:
    Matrix V_;
    Vector inv_;
};

/// Cholesky factor of S H S with S = diag(s) chosen to give a unit diagonal.
struct Factor {
    Eigen::LLT<Matrix> llt;
    Vector s;
    Vector solve(const Vector& b) const { return s.cwiseProduct(llt.solve(s.cwiseProduct(b))); }
};

/// Diagonal scalings of an equilibrated problem:
///   P^ = sigma D P D, c^ = sigma D c, A^ = E A D, z = D z^.
struct Scaling {
    Vector D, e_eq, e_in;
    double sigma = 1.0;
};

double clip_scale(double norm) {
    return norm < 1e-4 ? 1.0 : 1.0 / std::sqrt(std::min(norm, 1e8));
}

/// Ruiz equilibration followed by cost normalisation.
QpProblem equilibrate(const QpProblem& qp, Scaling& sc) {
    const auto d = qp.c.size();
    QpProblem out = qp;
    sc.D = Vector::Ones(d);
    sc.e_eq = Vector::Ones(qp.beq.size());
    sc.e_in = Vector::Ones(qp.bin.size());
    sc.sigma = 1.0;
    if (d == 0) return out;
    for (int pass = 0; pass < 15; ++pass) {
        Vector col = out.P.cwiseAbs().colwise().maxCoeff().transpose();
        if (out.Aeq.rows() > 0) col = col.cwiseMax(out.Aeq.cwiseAbs().colwise().maxCoeff().transpose());
        if (out.Ain.rows() > 0) col = col.cwiseMax(out.Ain.cwiseAbs().colwise().maxCoeff().transpose());
        const Vector dv = col.unaryExpr(&clip_scale);
        Vector er = Vector::Ones(out.Aeq.rows());
        Vector ei = Vector::Ones(out.Ain.rows());
        if (out.Aeq.rows() > 0) er = (out.Aeq * dv.asDiagonal()).cwiseAbs().rowwise().maxCoeff().unaryExpr(&clip_scale);
        if (out.Ain.rows() > 0) ei = (out.Ain * dv.asDiagonal()).cwiseAbs().rowwise().maxCoeff().unaryExpr(&clip_scale);
        out.P = dv.asDiagonal() * out.P * dv.asDiagonal();
        out.c = dv.cwiseProduct(out.c);
        out.Aeq = er.asDiagonal() * out.Aeq * dv.asDiagonal();
        out.Ain = ei.asDiagonal() * out.Ain * dv.asDiagonal();
        sc.D = sc.D.cwiseProduct(dv);
        sc.e_eq = sc.e_eq.cwiseProduct(er);
        sc.e_in = sc.e_in.cwiseProduct(ei);
        if ((dv.array() - 1.0).abs().maxCoeff() < 1e-3 && (er.size() == 0 || (er.array() - 1.0).abs().maxCoeff() < 1e-3) &&
            (ei.size() == 0 || (ei.array() - 1.0).abs().maxCoeff() < 1e-3)) {
            break;
        }
    }
    // Normalise by the curvature when there is any; large linear penalties
    // would otherwise shrink the tracking part below the dual tolerance.
    const double p_norm = out.P.cwiseAbs().colwise().maxCoeff().mean();
    const double cost = p_norm > 0.0 ? p_norm : inf_norm(out.c);
    sc.sigma = cost > 0.0 ? std::clamp(1.0 / cost, 1e-4, 1e4) : 1.0;
    out.P *= sc.sigma;
    out.c *= sc.sigma;
    out.beq = sc.e_eq.cwiseProduct(qp.beq);
    out.bin = sc.e_in.cwiseProduct(qp.bin);
    out.lo = qp.lo.cwiseQuotient(sc.D);
    out.hi = qp.hi.cwiseQuotient(sc.D);
    // Keep P exactly symmetric after the diagonal products.
    out.P = 0.5 * (out.P + out.P.transpose()).eval();
    return out;
}

}  // namespace

QpSolution solve(const QpProblem& original, const QpSettings& st, const std::optional<Vector>& initial_guess) {
    original.validate();
    const int d = original.dim();
    const auto me = original.beq.size();
    const auto mi = original.bin.size();
    detail::require(st.eps_prim > 0.0 && st.eps_dual > 0.0 && st.max_iters >= 1, "invalid solver settings");

    if (st.check_convexity && d > 0) {
        Eigen::LLT<Matrix> llt(original.P + 1e-8 * Matrix::Identity(d, d));
        if (llt.info() != Eigen::Success) {
            throw std::invalid_argument("P is not positive semidefinite");
        }
    }

    // The iteration runs on an equilibrated copy; convergence is judged on
    // the original data.
    Scaling sc;
    const QpProblem qp = equilibrate(original, sc);

    const std::vector<int> lower = finite_indices(qp.lo);
    const std::vector<int> upper = finite_indices(qp.hi);
    const auto nl = static_cast<Eigen::Index>(lower.size());
    const auto nu = static_cast<Eigen::Index>(upper.size());
    const Vector lo_f = gather(qp.lo, lower);
    const Vector hi_f = gather(qp.hi, upper);
    const double n_comp = static_cast<double>(mi + nl + nu);

    const WeightedGram gram(qp.Ain);
    const Matrix AeqT = qp.Aeq.transpose();
    const Matrix AinT = qp.Ain.transpose();

    // Factorise [H Aeq'; Aeq 0] through a Jacobi-scaled Cholesky of H and
    // the Schur complement Aeq H^-1 Aeq'. Returns the relative shift used.
    const auto factorise = [&](const Matrix& H0, Factor& f, SchurInverse& schur) {
        f.s = H0.diagonal().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
        // Only the lower triangle is read by the factorisation.
        const Matrix Hs = f.s.asDiagonal() * H0 * f.s.asDiagonal();
        double delta = 1e-14;
        for (int attempt = 0; attempt < 8; ++attempt) {
            Matrix H = Hs;
            // Keep the shift at least st.regularization in absolute terms.
            H.diagonal() += (delta * Vector::Ones(d)).cwiseMax(st.regularization * f.s.cwiseAbs2());
            f.llt.compute(H);
            if (f.llt.info() == Eigen::Success) {
                break;
            }
            delta *= 100.0;
        }
        if (f.llt.info() != Eigen::Success) {
            throw NumericalError("interior-point Newton matrix could not be factorised");
        }
        if (me > 0) {
            const Matrix V = f.llt.matrixL().solve(f.s.asDiagonal() * AeqT);
            schur.compute(V.transpose() * V);
        }
        return delta;
    };

    // Solve [H0 Aeq'; Aeq 0] [dz; dy] = [r1; r2] with refinement on the
    // unregularised matrix.
    const auto kkt_solve = [&](const Matrix& H0, const Factor& f, const SchurInverse& schur,
                               const Vector& r1, const Vector& r2, Vector& dz, Vector& dy) {
        dz = Vector::Zero(d);
        dy = Vector::Zero(me);
        Vector e1 = r1;
        Vector e2 = r2;
        const double scale = std::max({1.0, inf_norm(r1), inf_norm(r2)});
        double previous = kInf;
        for (int pass = 0; pass < 3; ++pass) {
            Vector ddz, ddy;
            if (me > 0) {
                const Vector t = f.solve(e1);
                ddy = schur.solve(qp.Aeq * t - e2);
                ddz = f.solve(e1 - AeqT * ddy);
            } else {
                ddz = f.solve(e1);
                ddy = Vector(0);
            }
            dz += ddz;
            dy += ddy;
            e1 = r1 - H0.selfadjointView<Eigen::Lower>() * dz;
            if (me > 0) {
                e1 -= AeqT * dy;
                e2 = r2 - qp.Aeq * dz;
            }
            const double err = std::max(inf_norm(e1), inf_norm(e2));
            if (err <= 1e-14 * scale || err > 0.5 * previous) {
                break;
            }
            previous = err;
        }
    };

    // Starting point: minimise 1/2 z'Pz + c'z + 1/2 |slacks|^2 subject to the
    // equalities, then shift slacks and multipliers into the interior.
    Vector z, y;
    {
        Matrix H0 = qp.P.triangularView<Eigen::Lower>();
        gram.accumulate(Vector::Ones(mi), H0);
        Vector r1 = -qp.c;
        if (mi > 0) r1 += AinT * qp.bin;
        for (Eigen::Index k = 0; k < nl; ++k) {
            H0(lower[k], lower[k]) += 1.0;
            r1(lower[k]) += lo_f(k);
        }
        for (Eigen::Index k = 0; k < nu; ++k) {
            H0(upper[k], upper[k]) += 1.0;
            r1(upper[k]) += hi_f(k);
        }
        Factor f;
        SchurInverse schur;
        factorise(H0, f, schur);
        kkt_solve(H0, f, schur, r1, qp.beq, z, y);
    }
    if (initial_guess) {
        detail::require_dims(initial_guess->size() == d, "initial guess has the wrong dimension");
        z = initial_guess->cwiseQuotient(sc.D);
    }
    const auto shifted = [](Vector v) {
        if (v.size() == 0) return v;
        const double worst = -v.minCoeff();
        if (worst >= -1e-8 * std::max(1.0, inf_norm(v))) {
            v.array() += 1.0 + worst;
        }
        return v;
    };
    const Vector s_raw = mi > 0 ? Vector(qp.bin - qp.Ain * z) : Vector(0);
    const Vector tl_raw = gather(z, lower) - lo_f;
    const Vector tu_raw = hi_f - gather(z, upper);
    Vector s = shifted(s_raw);
    Vector lam = shifted(-s_raw);
    Vector tl = shifted(tl_raw);
    Vector vl = shifted(-tl_raw);
    Vector tu = shifted(tu_raw);
    Vector vu = shifted(-tu_raw);

    QpSolution sol;
    sol.regularization = st.regularization;

    const auto pack = [&](QpSolution& out) {
        out.z = sc.D.cwiseProduct(z);
        out.y_eq = sc.e_eq.cwiseProduct(y) / sc.sigma;
        out.y_in = sc.e_in.cwiseProduct(lam) / sc.sigma;
        Vector box = Vector::Zero(d);
        scatter_add(box, upper, vu);
        scatter_add(box, lower, vl, -1.0);
        out.y_box = box.cwiseQuotient(sc.D) / sc.sigma;
        out.objective = original.objective(out.z);
        out.residuals = kkt_residuals(original, out);
    };

    // Farkas certificate on a dual direction (dy, dlam, dvl, dvu).
    const auto primal_certificate = [&](const Vector& dy, const Vector& dlam, const Vector& dvl,
                                        const Vector& dvu) {
        const double scale = std::max({inf_norm(dy), inf_norm(dlam), inf_norm(dvl), inf_norm(dvu)});
        if (!(scale > 0.0) || (mi > 0 && dlam.minCoeff() < 0.0) || (nl > 0 && dvl.minCoeff() < 0.0) ||
            (nu > 0 && dvu.minCoeff() < 0.0)) {
            return false;
        }
        Vector combo = Vector::Zero(d);
        double support = 0.0;
        if (me > 0) {
            combo += AeqT * dy;
            support += qp.beq.dot(dy);
        }
        if (mi > 0) {
            combo += AinT * dlam;
            support += qp.bin.dot(dlam);
        }
        scatter_add(combo, upper, dvu);
        scatter_add(combo, lower, dvl, -1.0);
        support += hi_f.dot(dvu) - lo_f.dot(dvl);
        return inf_norm(combo) <= st.eps_infeasible * scale && support < -st.eps_infeasible * scale;
    };

    // Recession direction along which the objective decreases without bound.
    const auto dual_certificate = [&](const Vector& dz) {
        const double scale = inf_norm(dz);
        if (!(scale > 0.0)) {
            return false;
        }
        const double tol = st.eps_infeasible * scale;
        if (inf_norm(qp.P * dz) > tol || !(qp.c.dot(dz) < -tol)) {
            return false;
        }
        if (me > 0 && inf_norm(qp.Aeq * dz) > tol) {
            return false;
        }
        if (mi > 0 && (qp.Ain * dz).maxCoeff() > tol) {
            return false;
        }
        for (int i : lower) {
            if (dz(i) < -tol) {
                return false;
            }
        }
        for (int i : upper) {
            if (dz(i) > tol) {
                return false;
            }
        }
        return true;
    };

    const double mu_floor = n_comp > 0 ? 0.01 * st.eps_dual * sc.sigma / n_comp : 0.0;
    double best_merit = kInf;
    int since_improvement = 0;
    Vector dz_prev, dy_prev, dlam_prev, dvl_prev, dvu_prev;

    for (int it = 0; it <= st.max_iters; ++it) {
        sol.iterations = it;
        pack(sol);
        const auto& res = sol.residuals;
        if (res.primal <= st.eps_prim && res.dual <= st.eps_dual && res.gap <= st.eps_dual) {
            sol.status = QpStatus::optimal;
            return sol;
        }
        if (it > 0) {
            if (primal_certificate(y, lam, vl, vu) ||
                primal_certificate(dy_prev, dlam_prev, dvl_prev, dvu_prev)) {
                sol.status = QpStatus::primal_infeasible;
                return sol;
            }
            if (dual_certificate(dz_prev)) {
                sol.status = QpStatus::dual_infeasible;
                const Vector ray = sc.D.cwiseProduct(dz_prev);
                sol.z = ray / inf_norm(ray);
                return sol;
            }
        }
        if (it == st.max_iters) {
            break;
        }
        const double merit = std::max({res.primal / st.eps_prim, res.dual / st.eps_dual, res.gap / st.eps_dual});
        if (merit < 0.9 * best_merit) {
            best_merit = merit;
            since_improvement = 0;
        } else if (++since_improvement >= st.stall_iters) {
            break;
        }

        // Residuals of the perturbed KKT conditions.
        Vector r_d = qp.P * z + qp.c;
        if (me > 0) r_d += AeqT * y;
        if (mi > 0) r_d += AinT * lam;
        scatter_add(r_d, upper, vu);
        scatter_add(r_d, lower, vl, -1.0);
        const Vector r_e = me > 0 ? Vector(qp.Aeq * z - qp.beq) : Vector(0);
        const Vector r_i = mi > 0 ? Vector(qp.Ain * z + s - qp.bin) : Vector(0);
        const Vector r_l = gather(z, lower) - tl - lo_f;
        const Vector r_u = gather(z, upper) + tu - hi_f;
        const double mu = n_comp > 0 ? (s.dot(lam) + tl.dot(vl) + tu.dot(vu)) / n_comp : 0.0;

        const Vector D_in = lam.cwiseQuotient(s);
        const Vector D_l = vl.cwiseQuotient(tl);
        const Vector D_u = vu.cwiseQuotient(tu);

        // Reduced Newton matrix (lower triangle only).
        Matrix H0 = qp.P.triangularView<Eigen::Lower>();
        gram.accumulate(D_in, H0);
        for (Eigen::Index k = 0; k < nl; ++k) H0(lower[k], lower[k]) += D_l(k);
        for (Eigen::Index k = 0; k < nu; ++k) H0(upper[k], upper[k]) += D_u(k);

        Factor f;
        SchurInverse schur;
        const double delta = factorise(H0, f, schur);
        sol.regularization = std::max(sol.regularization, delta);
        const auto reduced_solve = [&](const Vector& r1, const Vector& r2, Vector& dz, Vector& dy) {
            kkt_solve(H0, f, schur, r1, r2, dz, dy);
        };

        struct Direction {
            Vector dz, dy, ds, dlam, dtl, dvl, dtu, dvu;
        };
        const auto direction = [&](const Vector& r_s, const Vector& r_tl, const Vector& r_tu) {
            Direction dir;
            const Vector w_i = (lam.cwiseProduct(r_i) - r_s).cwiseQuotient(s);
            const Vector w_l = -(r_tl + vl.cwiseProduct(r_l)).cwiseQuotient(tl);
            const Vector w_u = (vu.cwiseProduct(r_u) - r_tu).cwiseQuotient(tu);
            Vector r1 = -r_d;
            if (mi > 0) r1 -= AinT * w_i;
            scatter_add(r1, lower, w_l);
            scatter_add(r1, upper, w_u, -1.0);
            reduced_solve(r1, -r_e, dir.dz, dir.dy);
            const Vector Adz = mi > 0 ? Vector(qp.Ain * dir.dz) : Vector(0);
            dir.dlam = D_in.cwiseProduct(Adz) + w_i;
            dir.ds = -r_i - Adz;
            const Vector dz_l = gather(dir.dz, lower);
            const Vector dz_u = gather(dir.dz, upper);
            dir.dvl = -D_l.cwiseProduct(dz_l) + w_l;
            dir.dtl = dz_l + r_l;
            dir.dvu = D_u.cwiseProduct(dz_u) + w_u;
            dir.dtu = -r_u - dz_u;
            return dir;
        };
        const auto step_to_boundary = [&](const Direction& dir) {
            return std::min({max_step(s, dir.ds), max_step(lam, dir.dlam), max_step(tl, dir.dtl),
                             max_step(vl, dir.dvl), max_step(tu, dir.dtu), max_step(vu, dir.dvu)});
        };

        // Predictor.
        const Direction aff = direction(s.cwiseProduct(lam), tl.cwiseProduct(vl), tu.cwiseProduct(vu));
        Direction dir = aff;
        if (n_comp > 0) {
            const double a_aff = step_to_boundary(aff);
            const double mu_aff = ((s + a_aff * aff.ds).dot(lam + a_aff * aff.dlam) +
                                   (tl + a_aff * aff.dtl).dot(vl + a_aff * aff.dvl) +
                                   (tu + a_aff * aff.dtu).dot(vu + a_aff * aff.dvu)) /
                                  n_comp;
            const double sigma = std::pow(std::clamp(mu_aff / mu, 0.0, 1.0), 3);
            // Complementarity far below the gap tolerance only hurts conditioning.
            const double target = std::max(sigma * mu, mu_floor);
            // Corrector with the second-order term.
            dir = direction((s.cwiseProduct(lam) + aff.ds.cwiseProduct(aff.dlam)).array() - target,
                            (tl.cwiseProduct(vl) + aff.dtl.cwiseProduct(aff.dvl)).array() - target,
                            (tu.cwiseProduct(vu) + aff.dtu.cwiseProduct(aff.dvu)).array() - target);
        }
        const double alpha = n_comp > 0 ? std::min(1.0, st.step_fraction * step_to_boundary(dir)) : 1.0;

        spdlog::trace("ipm {:3d} prim {:.2e} dual {:.2e} gap {:.2e} mu {:.2e} alpha {:.3f} reg {:.1e}", it,
                      res.primal, res.dual, res.gap, mu, alpha, delta);

        z += alpha * dir.dz;
        y += alpha * dir.dy;
        s += alpha * dir.ds;
        lam += alpha * dir.dlam;
        tl += alpha * dir.dtl;
        vl += alpha * dir.dvl;
        tu += alpha * dir.dtu;
        vu += alpha * dir.dvu;
        // Guard against round-off pushing interior variables onto the boundary.
        constexpr double tiny = 1e-300;
        s = s.cwiseMax(tiny);
        lam = lam.cwiseMax(tiny);
        tl = tl.cwiseMax(tiny);
        vl = vl.cwiseMax(tiny);
        tu = tu.cwiseMax(tiny);
        vu = vu.cwiseMax(tiny);

        dz_prev = dir.dz;
        dy_prev = dir.dy;
        dlam_prev = dir.dlam;
        dvl_prev = dir.dvl;
        dvu_prev = dir.dvu;
    }

    pack(sol);
    sol.status = QpStatus::max_iters;
    // Inconsistent equalities leave the iteration stuck at a least-squares
    // point without a growing multiplier; their residual is a certificate.
    if (me > 0 && sol.residuals.primal > st.eps_prim) {
        const Eigen::CompleteOrthogonalDecomposition<Matrix> cod(qp.Aeq);
        const Vector r = qp.beq - qp.Aeq * cod.solve(qp.beq);
        if (primal_certificate(-r, Vector::Zero(mi), Vector::Zero(nl), Vector::Zero(nu))) {
            sol.status = QpStatus::primal_infeasible;
        }
    }
    return sol;
}

namespace {

detail::json bounds_to_json(const Vector& v) {
    detail::json out = detail::json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (std::isfinite(v(i))) {
            out.push_back(v(i));
        } else {
            out.push_back(nullptr);
        }
    }
    return out;
}

Vector bounds_from_json(const detail::json& j, double missing) {
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        v(static_cast<Eigen::Index>(i)) = j[i].is_null() ? missing : j[i].get<double>();
    }
    return v;
}

}  // namespace

std::string problem_to_json(const QpProblem& qp) {
    detail::json doc;
    doc["d"] = qp.dim();
    doc["P"] = detail::matrix_to_json(qp.P);
    doc["c"] = detail::vector_to_json(qp.c);
    doc["Aeq"] = detail::matrix_to_json(qp.Aeq);
    doc["beq"] = detail::vector_to_json(qp.beq);
    doc["Ain"] = detail::matrix_to_json(qp.Ain);
    doc["bin"] = bounds_to_json(qp.bin);
    doc["lo"] = bounds_to_json(qp.lo);
    doc["hi"] = bounds_to_json(qp.hi);
    return doc.dump();
}

QpProblem problem_from_json(const std::string& text) {
    const auto doc = detail::json::parse(text);
    const auto d = doc.at("d").get<Eigen::Index>();
    QpProblem qp;
    qp.P = detail::matrix_from_json(doc.at("P"), "P", d);
    qp.c = detail::vector_from_json(doc.at("c"), "c");
    qp.Aeq = detail::matrix_from_json(doc.at("Aeq"), "Aeq", d);
    qp.beq = detail::vector_from_json(doc.at("beq"), "beq");
    qp.Ain = detail::matrix_from_json(doc.at("Ain"), "Ain", d);
    qp.bin = bounds_from_json(doc.at("bin"), kInf);
    qp.lo = bounds_from_json(doc.at("lo"), -kInf);
    qp.hi = bounds_from_json(doc.at("hi"), kInf);
    qp.validate();
    return qp;
}

void dump_problem(const QpProblem& qp, const std::filesystem::path& path) {
    detail::write_text_file(path, problem_to_json(qp) + "\n");
}

}  // namespace ddpc::qp
