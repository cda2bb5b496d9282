#include "gridqcd/density.hpp"

#include <cmath>

namespace gridqcd {

namespace {

using Index = Eigen::Index;

constexpr double kLog2Pi = 1.8378770664093454836;  // log(2 pi)

}  // namespace

void NoiseModel::validate() const {
    if (sigma.rows() != sigma.cols()) throw InputError("noise covariance must be square");
    if (bounds.lower.size() != sigma.rows() || bounds.upper.size() != sigma.rows())
        throw InputError("perturbation box dimension does not match the noise covariance");
    if (!sigma.isApprox(sigma.transpose(), 1e-12)) throw InputError("noise covariance is not symmetric");
    Eigen::SelfAdjointEigenSolver<Matrix> eig(sigma, Eigen::EigenvaluesOnly);
    if (sigma.size() > 0 && eig.eigenvalues().minCoeff() < -1e-12 * (1.0 + sigma.cwiseAbs().maxCoeff()))
        throw InputError("noise covariance is not positive semidefinite");
    if (!bounds.lower.allFinite() || !bounds.upper.allFinite()) throw InputError("perturbation bounds must be finite");
    if ((bounds.lower.array() > bounds.upper.array()).any()) throw InputError("perturbation box has lower > upper");
}

std::vector<char> selection_mask(const NoiseModel& noise, const Vector& xi_prev, const Vector& xi) {
    const Index n = noise.dim();
    std::vector<char> mask(static_cast<std::size_t>(n), 0);
    const auto& lo = noise.bounds.lower;
    const auto& hi = noise.bounds.upper;
    const double tol = noise.boundary_tol;
    auto interior = [&](const Vector& v, Index i) { return v(i) >= lo(i) + tol && v(i) <= hi(i) - tol; };
    for (Index i = 0; i < n; ++i) mask[static_cast<std::size_t>(i)] = interior(xi_prev, i) && interior(xi, i);
    return mask;
}

std::pair<Matrix, Vector> lmp_map(const CriticalRegion& region) {
    const Index k = static_cast<Index>(region.lmp_rows.size());
    Matrix d_rows(k, region.D.cols());
    Vector d_off(k);
    for (Index i = 0; i < k; ++i) {
        d_rows.row(i) = region.D.row(region.lmp_rows[static_cast<std::size_t>(i)]);
        d_off(i) = region.d(region.lmp_rows[static_cast<std::size_t>(i)]);
    }
    return {region.lambda_tilde * d_rows, region.lambda_tilde * d_off};
}

std::pair<Matrix, Vector> dispatch_map(const CriticalRegion& region) {
    Matrix row = region.P.colwise().sum();
    Vector off(1);
    off(0) = region.p.sum();
    return {row, off};
}

IncrementDensity increment_covariance(const CriticalRegion& region, const NoiseModel& noise, Channel channel,
                                      const std::vector<char>& selection, const DensityOptions& options) {
    if (static_cast<Index>(selection.size()) != noise.dim())
        throw InputError("selection mask length does not match the perturbation dimension");
    std::vector<Index> keep;
    for (Index i = 0; i < noise.dim(); ++i)
        if (selection[static_cast<std::size_t>(i)]) keep.push_back(i);
    if (keep.empty()) throw DegenerateDensityError("all perturbation components are frozen at their bounds");

    const Matrix map = channel == Channel::Lmp ? lmp_map(region).first : dispatch_map(region).first;
    const Index ks = static_cast<Index>(keep.size());
    Matrix map_s(map.rows(), ks);
    Matrix sigma_s(ks, ks);
    for (Index a = 0; a < ks; ++a) {
        map_s.col(a) = map.col(keep[static_cast<std::size_t>(a)]);
        for (Index b = 0; b < ks; ++b) sigma_s(a, b) = noise.sigma(keep[static_cast<std::size_t>(a)], keep[static_cast<std::size_t>(b)]);
    }

    auto out = finalize_density(map_s * sigma_s * map_s.transpose(), channel, options);
    out.region_id = region.id;
    return out;
}

IncrementDensity finalize_density(Matrix covariance, Channel channel, const DensityOptions& options) {
    IncrementDensity out;
    out.channel = channel;
    out.covariance = 0.5 * (covariance + covariance.transpose());
    const Index dim = out.covariance.rows();

    if (options.pseudo_inverse) {
        Eigen::SelfAdjointEigenSolver<Matrix> eig(out.covariance);
        const Vector& ev = eig.eigenvalues();
        const double cut = options.support_tol * std::max(ev.maxCoeff(), options.eps_floor);
        Vector inv = Vector::Zero(dim);
        double log_pdet = 0.0;
        Index rank = 0;
        for (Index i = 0; i < dim; ++i) {
            if (ev(i) > cut) {
                inv(i) = 1.0 / ev(i);
                log_pdet += std::log(ev(i));
                ++rank;
            }
        }
        out.regularized = out.covariance;
        out.precision = eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
        out.log_det = log_pdet;
        out.rank = rank;
        out.log_normalizer = -0.5 * (static_cast<double>(rank) * kLog2Pi + log_pdet);
        return out;
    }

    const double eps = std::max(options.eps_rel * out.covariance.trace() / static_cast<double>(dim), options.eps_floor);
    out.regularized = out.covariance + eps * Matrix::Identity(dim, dim);
    Eigen::LLT<Matrix> llt(out.regularized);
    if (llt.info() != Eigen::Success) throw NumericError("regularized increment covariance is not positive definite");
    out.precision = llt.solve(Matrix::Identity(dim, dim));
    const auto& lmat = llt.matrixL();
    double log_det = 0.0;
    for (Index i = 0; i < dim; ++i) log_det += 2.0 * std::log(lmat(i, i));
    out.log_det = log_det;
    out.rank = dim;
    out.log_normalizer = -0.5 * (static_cast<double>(dim) * kLog2Pi + log_det);
    return out;
}

IncrementDensity blended_density(const IncrementDensity& a, const IncrementDensity& b, const DensityOptions& options) {
    if (a.dim() != b.dim() || a.channel != b.channel) throw InputError("blended densities need the same channel and dimension");
    auto out = finalize_density(0.5 * (a.covariance + b.covariance), a.channel, options);
    out.region_id = b.region_id;
    return out;
}

double log_density(const IncrementDensity& density, const Vector& delta) {
    if (delta.size() != density.dim()) throw InputError("increment dimension does not match the density");
    return density.log_normalizer - 0.5 * delta.dot(density.precision * delta);
}

double kl_divergence(const IncrementDensity& post, const IncrementDensity& nominal) {
    if (post.dim() != nominal.dim()) throw InputError("KL divergence needs densities of equal dimension");
    const double k = static_cast<double>(post.dim());
    const double trace_term = (nominal.precision * post.regularized).trace();
    const double kl = 0.5 * (trace_term - k + nominal.log_det - post.log_det);
    return std::max(kl, 0.0);
}

}  // namespace gridqcd
