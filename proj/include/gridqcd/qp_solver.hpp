#pragma once

#include "gridqcd/errors.hpp"
#include "gridqcd/market_qp.hpp"

#include <vector>

namespace gridqcd {

struct SolverOptions {
    /// Relative slack threshold for activity: slack <= tol * (1 + |rhs|).
    double active_tol = 1e-7;
    /// Constraint violation accepted at termination, relative to 1 + |rhs|.
    double feasibility_tol = 1e-9;
    /// Duals below this (relative to 1 + max dual) count as zero when
    /// flagging weakly active rows.
    double dual_tol = 1e-9;
    int max_iterations = 1000;
};

struct KktResiduals {
    double primal = 0.0;          // max(Ax - B xi - b)+
    double dual = 0.0;            // max(-mu)+
    double complementarity = 0.0; // max |mu_i * slack_i|
    double stationarity = 0.0;    // ||Qx + q + A'mu||_inf
};

struct ActiveSet {
    std::vector<Eigen::Index> rows;        // ascending
    std::vector<Eigen::Index> degenerate;  // active rows with (near) zero dual
};

struct PrimalDualSolution {
    Vector x;   // [p; l_shed]
    Vector mu;  // one dual per constraint row
    ActiveSet active;
    double objective = 0.0;
    KktResiduals residuals;
    int iterations = 0;
};

class InfeasibleProblem : public NumericError {
public:
    using NumericError::NumericError;
};

class SolverNonconvergence : public NumericError {
public:
    SolverNonconvergence(const std::string& what, KktResiduals residuals)
        : NumericError(what), residuals_(residuals) {}
    [[nodiscard]] const KktResiduals& residuals() const { return residuals_; }

private:
    KktResiduals residuals_;
};

/// Solves the market QP at perturbation xi with a dense dual active-set
/// method (Goldfarb-Idnani). Q must be positive definite.
PrimalDualSolution solve(const MarketQP& qp, const Vector& xi, const SolverOptions& options = {});

/// Rows whose slack is within tol * (1 + |rhs|); weakly active rows are
/// reported in `degenerate` as well.
ActiveSet classify_active(const PrimalDualSolution& sol, const MarketQP& qp, const Vector& xi, double tol,
                          double dual_tol = 1e-9);

KktResiduals kkt_residuals(const MarketQP& qp, const Vector& xi, const Vector& x, const Vector& mu);

/// LMPs of a solution.
inline Vector solution_lmp(const MarketQP& qp, const PrimalDualSolution& sol) { return qp.Lambda * sol.mu; }

}  // namespace gridqcd
