#pragma once

#include "gridqcd/market_qp.hpp"
#include "gridqcd/qp_solver.hpp"

#include <vector>

namespace gridqcd {

/// Polyhedral set of perturbations over which one active set stays optimal,
/// together with its affine primal and dual maps:
///   x*(xi) = P xi + p,   mu~*(xi) = D xi + d,   region = {xi : H xi <= h}.
struct CriticalRegion {
    int id = -1;
    /// Constraint rows used for the maps (linearly independent), ascending.
    std::vector<Eigen::Index> active;
    /// Rows that were active at the generating point but dropped as linearly
    /// dependent. Non-empty means the region is flagged degenerate.
    std::vector<Eigen::Index> dropped;

    Matrix D;  // |active| x dim(xi)
    Vector d;
    Matrix P;  // dim(x) x dim(xi)
    Vector p;

    /// Rows normalized to unit length so that tolerances are distances in MW.
    Matrix H;
    Vector h;
    /// true for rows from primal feasibility of inactive constraints (strict
    /// in the exact definition), false for dual feasibility rows.
    std::vector<char> strict;

    /// Columns of Lambda for the active balance and flow rows.
    Matrix lambda_tilde;
    /// Positions within `active` that `lambda_tilde` columns refer to.
    std::vector<Eigen::Index> lmp_rows;

    /// Perturbation the region was generated from.
    Vector representative;

    [[nodiscard]] bool degenerate() const { return !dropped.empty(); }
    [[nodiscard]] Vector primal(const Vector& xi) const { return P * xi + p; }
    [[nodiscard]] Vector dual(const Vector& xi) const { return D * xi + d; }
    /// Full-length dual vector (zeros on inactive rows).
    [[nodiscard]] Vector full_dual(const Vector& xi, Eigen::Index num_rows) const;
};

class DegenerateRegionError : public NumericError {
public:
    DegenerateRegionError(const std::string& what, std::vector<Eigen::Index> active, Vector sample)
        : NumericError(what), active_(std::move(active)), sample_(std::move(sample)) {}
    [[nodiscard]] const std::vector<Eigen::Index>& active_set() const { return active_; }
    [[nodiscard]] const Vector& sample() const { return sample_; }

private:
    std::vector<Eigen::Index> active_;
    Vector sample_;
};

struct RegionOptions {
    SolverOptions solver;
    /// Membership tolerance shared by all facets (MW).
    double region_tol = 1e-8;
    /// Maximum mismatch between the affine map and the solver at the
    /// generating point before the region is rejected.
    double map_check_tol = 1e-6;
};

/// Builds the critical region containing xi from a fresh QP solve.
CriticalRegion region_from_point(const MarketQP& qp, const Vector& xi, const RegionOptions& options = {});

/// Builds the region for a prescribed active set (the rows must be
/// linearly independent). `xi` is stored as representative.
CriticalRegion region_from_active_set(const MarketQP& qp, const std::vector<Eigen::Index>& active, const Vector& xi);

/// H xi <= h + tol on every row. Strict rows use the same tolerance.
bool contains(const CriticalRegion& region, const Vector& xi, double tol = 1e-8);

/// Largest facet violation max(H xi - h); negative inside.
double max_violation(const CriticalRegion& region, const Vector& xi);

}  // namespace gridqcd
