#pragma once

#include "gridqcd/network.hpp"
#include "gridqcd/qp_solver.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <stdexcept>
#include <string>

namespace testsupport {

using gridqcd::Matrix;
using gridqcd::Vector;

inline std::filesystem::path data_path(const std::string& name) { return std::filesystem::path(GRIDQCD_DATA_DIR) / name; }

inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("gridqcd_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline gridqcd::NetworkCase with_shed_costs(gridqcd::NetworkCase net) {
    const auto n = static_cast<Eigen::Index>(net.loads.size());
    net.shed_quadratic = 0.1 * Matrix::Identity(n, n);
    net.shed_linear = Vector::Constant(n, 1000.0);
    return net;
}

/// Bus 1 (slack) and bus 2 joined by one line; generator at bus 1, load at bus 2.
inline gridqcd::NetworkCase two_bus(double limit = 1000.0, double demand = 100.0) {
    gridqcd::NetworkCase net;
    net.name = "two_bus";
    net.buses = {1, 2};
    net.slack_bus = 1;
    net.lines = {{1, 2, 10.0, limit}};
    net.generators = {{1, 0.0, 1000.0, 0.01, 10.0}};
    net.loads = {{2, demand, 50.0}};
    return with_shed_costs(net);
}

/// Ring 1-2-3 with equal susceptances.
inline gridqcd::NetworkCase three_ring(double limit12 = 1000.0) {
    gridqcd::NetworkCase net;
    net.name = "three_ring";
    net.buses = {1, 2, 3};
    net.slack_bus = 1;
    net.lines = {{1, 2, 10.0, limit12}, {1, 3, 10.0, 1000.0}, {2, 3, 10.0, 1000.0}};
    net.generators = {{1, 0.0, 500.0, 0.02, 10.0}, {3, 0.0, 300.0, 0.05, 25.0}};
    net.loads = {{2, 150.0, 60.0}, {3, 100.0, 60.0}};
    return with_shed_costs(net);
}

struct OracleSolution {
    Vector x;
    Vector mu;
    double objective = 0.0;
};

/// Reference solver for min 1/2 x'Qx + q'x s.t. Ax <= r: Mehrotra
/// predictor-corrector interior point method, followed by an equality
/// constrained refinement on the rows it finds active.
inline OracleSolution oracle_qp(const Matrix& Q, const Vector& q, const Matrix& A, const Vector& r) {
    const Eigen::Index n = Q.rows(), m = A.rows();
    Vector x = Vector::Zero(n);
    Vector s = (r - A * x).cwiseMax(1.0);
    Vector z = Vector::Ones(m);
    const double scale = 1.0 + std::max({q.cwiseAbs().maxCoeff(), r.cwiseAbs().maxCoeff(), 1.0});

    auto step_to_boundary = [](const Vector& v, const Vector& dv) {
        double alpha = 1.0;
        for (Eigen::Index i = 0; i < v.size(); ++i)
            if (dv(i) < 0.0) alpha = std::min(alpha, -v(i) / dv(i));
        return alpha;
    };

    for (int iter = 0; iter < 200; ++iter) {
        const Vector rd = Q * x + q + A.transpose() * z;
        const Vector rp = A * x + s - r;
        const double gap = s.dot(z) / static_cast<double>(m);
        if (rd.lpNorm<Eigen::Infinity>() < 1e-11 * scale && rp.lpNorm<Eigen::Infinity>() < 1e-11 * scale &&
            gap < 1e-13 * scale)
            break;

        const Vector w = z.cwiseQuotient(s);
        const Matrix K = Q + A.transpose() * w.asDiagonal() * A;
        const Eigen::LDLT<Matrix> ldlt(K);

        auto direction = [&](const Vector& rs, Vector& dx, Vector& dz, Vector& ds) {
            const Vector t = w.cwiseProduct(rp) - rs.cwiseQuotient(s);
            dx = ldlt.solve(-rd - A.transpose() * t);
            dz = w.cwiseProduct(A * dx + rp) - rs.cwiseQuotient(s);
            ds = -rp - A * dx;
        };

        Vector dx, dz, ds;
        direction(s.cwiseProduct(z), dx, dz, ds);
        const double a_aff = std::min(step_to_boundary(s, ds), step_to_boundary(z, dz));
        const double gap_aff = (s + a_aff * ds).dot(z + a_aff * dz) / static_cast<double>(m);
        const double sigma = std::pow(gap_aff / gap, 3);
        const Vector rs = s.cwiseProduct(z) + ds.cwiseProduct(dz) - Vector::Constant(m, sigma * gap);
        direction(rs, dx, dz, ds);
        const double alpha = 0.99 * std::min(step_to_boundary(s, ds), step_to_boundary(z, dz));
        x += alpha * dx;
        s += alpha * ds;
        z += alpha * dz;
    }

    OracleSolution out{x, z, 0.5 * x.dot(Q * x) + q.dot(x)};

    // Refinement: solve the KKT system of the detected active rows exactly.
    std::vector<Eigen::Index> active;
    for (Eigen::Index i = 0; i < m; ++i)
        if (s(i) < 1e-7 * (1.0 + std::abs(r(i)))) active.push_back(i);
    const auto k = static_cast<Eigen::Index>(active.size());
    Matrix kkt = Matrix::Zero(n + k, n + k);
    Vector rhs(n + k);
    kkt.topLeftCorner(n, n) = Q;
    rhs.head(n) = -q;
    for (Eigen::Index j = 0; j < k; ++j) {
        kkt.block(0, n + j, n, 1) = A.row(active[j]).transpose();
        kkt.block(n + j, 0, 1, n) = A.row(active[j]);
        rhs(n + j) = r(active[j]);
    }
    const Vector sol = kkt.completeOrthogonalDecomposition().solve(rhs);
    Vector xr = sol.head(n);
    Vector zr = Vector::Zero(m);
    for (Eigen::Index j = 0; j < k; ++j) zr(active[j]) = sol(n + j);
    const double infeas = (A * xr - r).maxCoeff();
    const double stat = (Q * xr + q + A.transpose() * zr).lpNorm<Eigen::Infinity>();
    if (infeas < 1e-9 * scale && zr.minCoeff() > -1e-9 * scale && stat < 1e-8 * scale) {
        out.x = xr;
        out.mu = zr;
        out.objective = 0.5 * xr.dot(Q * xr) + q.dot(xr);
    }
    return out;
}

inline OracleSolution oracle_market(const gridqcd::MarketQP& qp, const Vector& xi) {
    return oracle_qp(qp.Q, qp.q, qp.A, qp.rhs(xi));
}

}  // namespace testsupport
