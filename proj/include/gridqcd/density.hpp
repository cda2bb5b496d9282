#pragma once

#include "gridqcd/atlas.hpp"
#include "gridqcd/region.hpp"

#include <utility>
#include <vector>

namespace gridqcd {

/// Wiener-process demand perturbation: increments xi_t - xi_{t-1} ~ N(0, sigma).
struct NoiseModel {
    Matrix sigma;  // MW^2
    PerturbationBox bounds;
    /// A component counts as interior when it is at least this far (MW) from
    /// both box faces.
    double boundary_tol = 1e-6;

    [[nodiscard]] Eigen::Index dim() const { return sigma.rows(); }
    void validate() const;
};

/// Components of xi strictly inside their box at both t-1 and t. A load
/// with a zero-width box is never selected.
std::vector<char> selection_mask(const NoiseModel& noise, const Vector& xi_prev, const Vector& xi);

enum class Channel { Lmp, Dispatch };

struct DensityOptions {
    /// Regularization eps = eps_rel * trace(cov) / dim, floored at eps_floor.
    double eps_rel = 1e-6;
    double eps_floor = 1e-12;
    /// Use the pseudo-inverse and pseudo-determinant on the covariance
    /// support instead of eps * I (sensitivity studies).
    bool pseudo_inverse = false;
    /// Relative eigenvalue cut-off defining the support in pseudo-inverse mode.
    double support_tol = 1e-9;
};

/// Zero-mean Gaussian model of one observable's increments inside a region.
struct IncrementDensity {
    int region_id = -1;
    Channel channel = Channel::Lmp;
    Matrix covariance;
    Matrix regularized;
    /// Inverse of the regularized covariance (pseudo-inverse in that mode).
    Matrix precision;
    double log_normalizer = 0.0;  // -1/2 log det(2 pi regularized)
    double log_det = 0.0;         // log det(regularized), pseudo-determinant in that mode
    Eigen::Index rank = 0;        // support dimension in pseudo-inverse mode

    [[nodiscard]] Eigen::Index dim() const { return covariance.rows(); }
};

class DegenerateDensityError : public NumericError {
public:
    using NumericError::NumericError;
};

/// LMP map of a region: lambda(xi) = M xi + m with M = Lambda~ D, m = Lambda~ d.
std::pair<Matrix, Vector> lmp_map(const CriticalRegion& region);
/// Aggregate dispatch map: g(xi) = 1'P xi + 1'p, returned as a 1 x dim row.
std::pair<Matrix, Vector> dispatch_map(const CriticalRegion& region);

/// Covariance of the channel's increments with unselected loads frozen.
/// Throws DegenerateDensityError when no load is selected.
IncrementDensity increment_covariance(const CriticalRegion& region, const NoiseModel& noise, Channel channel,
                                      const std::vector<char>& selection, const DensityOptions& options = {});

/// Regularizes a raw increment covariance and fills in precision and
/// normalizer (shared by the region and region-pair densities).
IncrementDensity finalize_density(Matrix covariance, Channel channel, const DensityOptions& options = {});

/// Density of an increment whose endpoints lie in two different regions:
/// the raw covariances are averaged before regularization.
IncrementDensity blended_density(const IncrementDensity& a, const IncrementDensity& b, const DensityOptions& options = {});

/// Gaussian log-density including the normalizer.
double log_density(const IncrementDensity& density, const Vector& delta);

/// KL(post || nominal) between zero-mean Gaussians with the regularized
/// covariances.
double kl_divergence(const IncrementDensity& post, const IncrementDensity& nominal);

}  // namespace gridqcd
