#include "gridqcd/region.hpp"

#include <algorithm>
#include <sstream>

namespace gridqcd {

namespace {

using Index = Eigen::Index;

std::string rows_str(const MarketQP& qp, const std::vector<Index>& rows) {
    std::ostringstream out;
    out << "{";
    for (std::size_t i = 0; i < rows.size(); ++i) out << (i ? ", " : "") << qp.row_labels[static_cast<std::size_t>(rows[i])].str();
    out << "}";
    return out.str();
}

// Greedy selection of a linearly independent subset, trying rows with a
// positive dual before weakly active ones.
std::vector<Index> independent_rows(const Matrix& a, const std::vector<Index>& candidates,
                                    const std::vector<Index>& weak, std::vector<Index>& dropped) {
    std::vector<Index> ordered;
    for (auto r : candidates)
        if (std::find(weak.begin(), weak.end(), r) == weak.end()) ordered.push_back(r);
    for (auto r : candidates)
        if (std::find(weak.begin(), weak.end(), r) != weak.end()) ordered.push_back(r);

    std::vector<Index> chosen;
    Matrix basis(a.cols(), 0);
    for (auto r : ordered) {
        Matrix trial(a.cols(), basis.cols() + 1);
        trial << basis, a.row(r).transpose();
        Eigen::ColPivHouseholderQR<Matrix> qr(trial);
        qr.setThreshold(1e-10);
        if (qr.rank() == trial.cols()) {
            basis = trial;
            chosen.push_back(r);
        } else {
            dropped.push_back(r);
        }
    }
    std::sort(chosen.begin(), chosen.end());
    std::sort(dropped.begin(), dropped.end());
    return chosen;
}

}  // namespace

Vector CriticalRegion::full_dual(const Vector& xi, Index num_rows) const {
    Vector mu = Vector::Zero(num_rows);
    const Vector mt = dual(xi);
    for (std::size_t i = 0; i < active.size(); ++i) mu(active[i]) = mt(static_cast<Index>(i));
    return mu;
}

CriticalRegion region_from_active_set(const MarketQP& qp, const std::vector<Index>& active, const Vector& xi) {
    const Index na = static_cast<Index>(active.size());
    const Index nx = qp.num_vars();
    const Index nk = qp.num_params();

    Matrix at(na, nx), bt(na, nk);
    Vector rt(na);
    for (Index i = 0; i < na; ++i) {
        at.row(i) = qp.A.row(active[static_cast<std::size_t>(i)]);
        bt.row(i) = qp.B.row(active[static_cast<std::size_t>(i)]);
        rt(i) = qp.b(active[static_cast<std::size_t>(i)]);
    }

    Eigen::LLT<Matrix> chol(qp.Q);
    const Vector qinv_q = chol.solve(qp.q);

    CriticalRegion reg;
    reg.active = active;
    reg.representative = xi;
    if (na > 0) {
        const Matrix qinv_at = chol.solve(at.transpose());  // nx x na
        const Matrix m = at * qinv_at;
        Eigen::FullPivLU<Matrix> lu(m);
        if (!lu.isInvertible())
            throw DegenerateRegionError("active-set Gram matrix is singular for active set " + rows_str(qp, active), active, xi);
        reg.D = -lu.solve(bt);
        reg.d = -lu.solve(rt + at * qinv_q);
        reg.P = -qinv_at * reg.D;
        reg.p = -qinv_q - qinv_at * reg.d;
    } else {
        reg.D = Matrix::Zero(0, nk);
        reg.d = Vector::Zero(0);
        reg.P = Matrix::Zero(nx, nk);
        reg.p = -qinv_q;
    }

    // Primal feasibility of inactive rows, then dual feasibility of active rows.
    std::vector<Index> inactive;
    for (Index r = 0; r < qp.num_rows(); ++r)
        if (!std::binary_search(active.begin(), active.end(), r)) inactive.push_back(r);

    std::vector<Vector> rows;
    std::vector<double> rhs;
    for (auto r : inactive) {
        Vector g = (qp.A.row(r) * reg.P - qp.B.row(r)).transpose();
        double c = qp.b(r) - qp.A.row(r).dot(reg.p);
        rows.push_back(g);
        rhs.push_back(c);
        reg.strict.push_back(1);
    }
    for (Index i = 0; i < na; ++i) {
        rows.push_back(-reg.D.row(i).transpose());
        rhs.push_back(reg.d(i));
        reg.strict.push_back(0);
    }

    // Normalize; drop rows that do not depend on xi and are trivially satisfied.
    std::vector<Vector> kept_rows;
    std::vector<double> kept_rhs;
    std::vector<char> kept_strict;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const double norm = rows[i].norm();
        const double scale = 1.0 + std::abs(rhs[i]);
        if (norm <= 1e-12 * scale) {
            if (rhs[i] >= -1e-9 * scale) continue;
            // Never satisfiable; keep as an explicit empty-set row.
            kept_rows.push_back(Vector::Zero(nk));
            kept_rhs.push_back(-1.0);
            kept_strict.push_back(reg.strict[i]);
            continue;
        }
        kept_rows.push_back(rows[i] / norm);
        kept_rhs.push_back(rhs[i] / norm);
        kept_strict.push_back(reg.strict[i]);
    }
    reg.H.resize(static_cast<Index>(kept_rows.size()), nk);
    reg.h.resize(static_cast<Index>(kept_rows.size()));
    for (std::size_t i = 0; i < kept_rows.size(); ++i) {
        reg.H.row(static_cast<Index>(i)) = kept_rows[i].transpose();
        reg.h(static_cast<Index>(i)) = kept_rhs[i];
    }
    reg.strict = std::move(kept_strict);

    for (Index i = 0; i < na; ++i) {
        const auto kind = qp.row_labels[static_cast<std::size_t>(active[static_cast<std::size_t>(i)])].kind;
        if (kind == RowKind::Balance || kind == RowKind::FlowUpper || kind == RowKind::FlowLower) reg.lmp_rows.push_back(i);
    }
    reg.lambda_tilde.resize(qp.Lambda.rows(), static_cast<Index>(reg.lmp_rows.size()));
    for (std::size_t c = 0; c < reg.lmp_rows.size(); ++c)
        reg.lambda_tilde.col(static_cast<Index>(c)) = qp.Lambda.col(active[static_cast<std::size_t>(reg.lmp_rows[c])]);
    return reg;
}

CriticalRegion region_from_point(const MarketQP& qp, const Vector& xi, const RegionOptions& options) {
    const auto sol = solve(qp, xi, options.solver);
    std::vector<Index> dropped;
    const auto rows = independent_rows(qp.A, sol.active.rows, sol.active.degenerate, dropped);
    auto reg = region_from_active_set(qp, rows, xi);
    reg.dropped = dropped;

    const double x_err = (reg.primal(xi) - sol.x).lpNorm<Eigen::Infinity>();
    if (x_err > options.map_check_tol * (1.0 + sol.x.lpNorm<Eigen::Infinity>())) {
        std::ostringstream msg;
        msg << "affine map disagrees with the solver at the generating point (|dx| = " << x_err << ") for active set "
            << rows_str(qp, sol.active.rows);
        throw DegenerateRegionError(msg.str(), sol.active.rows, xi);
    }
    if (!contains(reg, xi, std::max(options.region_tol, 1e-7))) {
        std::ostringstream msg;
        msg << "generating point lies outside its own region (violation " << max_violation(reg, xi) << ") for active set "
            << rows_str(qp, sol.active.rows);
        throw DegenerateRegionError(msg.str(), sol.active.rows, xi);
    }
    return reg;
}

double max_violation(const CriticalRegion& region, const Vector& xi) {
    if (region.H.rows() == 0) return -std::numeric_limits<double>::infinity();
    return (region.H * xi - region.h).maxCoeff();
}

bool contains(const CriticalRegion& region, const Vector& xi, double tol) {
    return max_violation(region, xi) <= tol;
}

}  // namespace gridqcd
