#include "gridqcd/qp_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace gridqcd {

namespace {

using Index = Eigen::Index;

Matrix rows_of(const Matrix& a, const std::vector<Index>& rows) {
    Matrix out(static_cast<Index>(rows.size()), a.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = a.row(rows[i]);
    return out;
}

}  // namespace

KktResiduals kkt_residuals(const MarketQP& qp, const Vector& xi, const Vector& x, const Vector& mu) {
    KktResiduals r;
    const Vector slack = qp.rhs(xi) - qp.A * x;
    r.primal = std::max(0.0, -slack.minCoeff());
    r.dual = std::max(0.0, -mu.minCoeff());
    r.complementarity = (mu.array() * slack.array()).abs().maxCoeff();
    r.stationarity = (qp.Q * x + qp.q + qp.A.transpose() * mu).lpNorm<Eigen::Infinity>();
    return r;
}

PrimalDualSolution solve(const MarketQP& qp, const Vector& xi, const SolverOptions& options) {
    if (xi.size() != qp.num_params())
        throw InputError("perturbation has dimension " + std::to_string(xi.size()) + ", expected " +
                         std::to_string(qp.num_params()));

    Eigen::LLT<Matrix> chol(qp.Q);
    if (chol.info() != Eigen::Success) throw NumericError("Q is not positive definite");

    const Vector r = qp.rhs(xi);
    const Index m = qp.num_rows();
    const Vector row_norm = qp.A.rowwise().norm();

    Vector x = -chol.solve(qp.q);
    std::vector<Index> working;  // rows in the active set, in insertion order
    Vector u;                    // multipliers of `working`
    std::vector<char> in_working(static_cast<std::size_t>(m), 0);

    int iter = 0;
    auto fail = [&](const std::string& what) {
        Vector mu = Vector::Zero(m);
        for (std::size_t i = 0; i < working.size(); ++i) mu(working[i]) = u(static_cast<Index>(i));
        throw SolverNonconvergence(what, kkt_residuals(qp, xi, x, mu));
    };

    while (true) {
        // Most violated constraint, measured as distance to its hyperplane.
        Index p = -1;
        double worst = 0.0;
        for (Index i = 0; i < m; ++i) {
            if (in_working[static_cast<std::size_t>(i)] || row_norm(i) == 0.0) continue;
            const double s = r(i) - qp.A.row(i).dot(x);
            if (s >= -options.feasibility_tol * (1.0 + std::abs(r(i)))) continue;
            const double dist = s / row_norm(i);
            if (dist < worst) {
                worst = dist;
                p = i;
            }
        }
        if (p < 0) break;

        double u_p = 0.0;
        while (true) {
            if (++iter > options.max_iterations) fail("QP solver exceeded the iteration limit");

            const Vector qinv_ap = chol.solve(qp.A.row(p).transpose());
            Vector coupling;  // r~ = (A_W Q^-1 A_W')^-1 A_W Q^-1 A_p'
            Vector z;
            if (working.empty()) {
                z = -qinv_ap;
            } else {
                const Matrix aw = rows_of(qp.A, working);
                const Matrix m_w = aw * chol.solve(aw.transpose());
                coupling = m_w.ldlt().solve(aw * qinv_ap);
                z = chol.solve(-qp.A.row(p).transpose() + aw.transpose() * coupling);
            }

            // Partial step: the first working multiplier to reach zero.
            double t1 = std::numeric_limits<double>::infinity();
            std::size_t drop = 0;
            for (std::size_t j = 0; j < working.size(); ++j) {
                const double rj = coupling(static_cast<Index>(j));
                if (rj > 1e-14) {
                    const double ratio = u(static_cast<Index>(j)) / rj;
                    if (ratio < t1) {
                        t1 = ratio;
                        drop = j;
                    }
                }
            }

            const double curvature = -qp.A.row(p).dot(z);  // projected norm of A_p, >= 0
            const double scale = qp.A.row(p).dot(qinv_ap);
            const bool dependent = curvature <= 1e-12 * std::max(scale, 1e-300);
            double t2 = std::numeric_limits<double>::infinity();
            if (!dependent) {
                const double s_p = r(p) - qp.A.row(p).dot(x);
                t2 = -s_p / curvature;
            }

            if (dependent && !std::isfinite(t1)) {
                std::ostringstream msg;
                msg << "market QP is infeasible: constraint row " << p << " (" << qp.row_labels[static_cast<std::size_t>(p)].str()
                    << ") cannot be satisfied";
                throw InfeasibleProblem(msg.str());
            }

            const double t = std::min(t1, t2);
            if (!dependent) x += t * z;
            if (!working.empty()) u -= t * coupling;
            u_p += t;

            if (!dependent && t2 <= t1) {
                working.push_back(p);
                in_working[static_cast<std::size_t>(p)] = 1;
                u.conservativeResize(u.size() + 1);
                u(u.size() - 1) = u_p;
                break;
            }
            // Drop the blocking constraint and retry with the same violated row.
            in_working[static_cast<std::size_t>(working[drop])] = 0;
            working.erase(working.begin() + static_cast<std::ptrdiff_t>(drop));
            Vector shrunk(u.size() - 1);
            for (Index j = 0, k = 0; j < u.size(); ++j)
                if (j != static_cast<Index>(drop)) shrunk(k++) = u(j);
            u = shrunk;
        }
    }

    PrimalDualSolution sol;
    sol.x = x;
    sol.mu = Vector::Zero(m);
    for (std::size_t i = 0; i < working.size(); ++i) sol.mu(working[i]) = std::max(0.0, u(static_cast<Index>(i)));
    sol.objective = 0.5 * x.dot(qp.Q * x) + qp.q.dot(x);
    sol.residuals = kkt_residuals(qp, xi, sol.x, sol.mu);
    sol.iterations = iter;
    sol.active = classify_active(sol, qp, xi, options.active_tol, options.dual_tol);

    const double stat_bound = 1e-6 * (1.0 + qp.q.lpNorm<Eigen::Infinity>());
    if (sol.residuals.stationarity > stat_bound) fail("QP solver terminated with a stationarity residual above tolerance");
    return sol;
}

ActiveSet classify_active(const PrimalDualSolution& sol, const MarketQP& qp, const Vector& xi, double tol, double dual_tol) {
    const Vector r = qp.rhs(xi);
    const Vector slack = r - qp.A * sol.x;
    const double dual_scale = 1.0 + sol.mu.lpNorm<Eigen::Infinity>();
    ActiveSet out;
    for (Index i = 0; i < qp.num_rows(); ++i) {
        if (slack(i) <= tol * (1.0 + std::abs(r(i)))) {
            out.rows.push_back(i);
            if (sol.mu(i) <= dual_tol * dual_scale) out.degenerate.push_back(i);
        }
    }
    return out;
}

}  // namespace gridqcd
