#include "support.hpp"

#include "gridqcd/density.hpp"
#include "gridqcd/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace gridqcd;
using namespace testsupport;

namespace {

NoiseModel noise_for(Eigen::Index dim, double sigma, double half_width) {
    NoiseModel noise;
    noise.sigma = sigma * sigma * Matrix::Identity(dim, dim);
    noise.bounds = {Vector::Constant(dim, -half_width), Vector::Constant(dim, half_width)};
    return noise;
}

std::vector<char> all_selected(Eigen::Index dim) { return std::vector<char>(static_cast<std::size_t>(dim), 1); }

IncrementDensity scalar_density(double variance) {
    return finalize_density(Matrix::Constant(1, 1, variance), Channel::Lmp, DensityOptions{0.0, 1e-300, false, 1e-9});
}

IncrementDensity density_from(const Matrix& cov) {
    return finalize_density(cov, Channel::Lmp, DensityOptions{0.0, 1e-300, false, 1e-9});
}

Vector gaussian(Rng& rng, const Eigen::LLT<Matrix>& chol) {
    Vector z(chol.matrixL().rows());
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.normal();
    return chol.matrixL() * z;
}

}  // namespace

TEST_CASE("uncongested region: every bus shares one price, so the LMP map has rank one") {
    const auto qp = assemble_qp(three_ring());
    const auto region = region_from_point(qp, Vector::Zero(2));
    const auto [M, m] = lmp_map(region);
    CHECK(M.rows() == 3);
    for (Eigen::Index i = 1; i < 3; ++i) CHECK((M.row(i) - M.row(0)).norm() < 1e-12);
    Eigen::JacobiSVD<Matrix> svd(M);
    CHECK(svd.singularValues()(1) < 1e-12 * (1.0 + svd.singularValues()(0)));
}

TEST_CASE("congested region: LMP map equals Lambda restricted to the active rows times the dual map") {
    const auto net = load_case(data_path("case3_desk.json"));
    const auto qp = assemble_qp(net);
    Vector xi(2);
    xi << 40.0, 0.0;
    const auto region = region_from_point(qp, xi);
    const auto [M, m] = lmp_map(region);
    Matrix expected = Matrix::Zero(3, 2);
    Vector offset = Vector::Zero(3);
    for (std::size_t a = 0; a < region.active.size(); ++a) {
        expected += qp.Lambda.col(region.active[a]) * region.D.row(static_cast<Eigen::Index>(a));
        offset += qp.Lambda.col(region.active[a]) * region.d(static_cast<Eigen::Index>(a));
    }
    CHECK((M - expected).norm() < 1e-10);
    CHECK((m - offset).norm() < 1e-8);
    // prices differ across buses
    CHECK(std::abs((M * xi + m)(1) - (M * xi + m)(0)) > 1.0);
}

TEST_CASE("LMPs from the region map equal the solver's LMPs at the generating point") {
    const auto net = load_case(data_path("case5_pjm.json"));
    const auto qp = assemble_qp(net);
    PerturbationBox box{Vector(3), Vector(3)};
    box.lower << -300, -300, 0;
    box.upper << 300, 300, 0;
    const auto atlas = build_atlas(qp, sampling_plan(box, 41));
    for (const auto& r : atlas.regions()) {
        if (r->degenerate()) continue;  // duals not unique
        const auto [M, m] = lmp_map(*r);
        const Vector lmp = solution_lmp(qp, solve(qp, r->representative));
        CHECK((M * r->representative + m - lmp).lpNorm<Eigen::Infinity>() < 1e-6);
    }
}

TEST_CASE("increment covariance is M Sigma M' with rank inherited from the map") {
    const auto qp = assemble_qp(three_ring());
    const auto region = region_from_point(qp, Vector::Zero(2));
    const auto noise = noise_for(2, 3.0, 50.0);
    const auto dens = increment_covariance(region, noise, Channel::Lmp, all_selected(2));
    const Matrix M = lmp_map(region).first;
    CHECK((dens.covariance - 9.0 * M * M.transpose()).norm() < 1e-12);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(dens.covariance);
    CHECK(eig.eigenvalues()(1) < 1e-12 * eig.eigenvalues()(2));
    // regularization: eps = max(eps_rel * trace / dim, floor)
    const double eps = std::max(1e-6 * dens.covariance.trace() / 3.0, 1e-12);
    CHECK((dens.regularized - dens.covariance - eps * Matrix::Identity(3, 3)).norm() < 1e-15);
    CHECK((dens.precision * dens.regularized - Matrix::Identity(3, 3)).norm() < 1e-6);
}

TEST_CASE("dropping a load equals zeroing its row and column of the noise covariance") {
    const auto net = load_case(data_path("case3_desk.json"));
    const auto qp = assemble_qp(net);
    Vector xi(2);
    xi << 40.0, 0.0;
    const auto region = region_from_point(qp, xi);
    NoiseModel noise = noise_for(2, 8.0, 60.0);
    noise.sigma(0, 1) = noise.sigma(1, 0) = 20.0;
    const auto dropped = increment_covariance(region, noise, Channel::Lmp, {1, 0});
    Matrix zeroed = noise.sigma;
    zeroed.row(1).setZero();
    zeroed.col(1).setZero();
    const Matrix M = lmp_map(region).first;
    CHECK((dropped.covariance - M * zeroed * M.transpose()).norm() < 1e-10);
    CHECK_THROWS_AS(increment_covariance(region, noise, Channel::Lmp, {0, 0}), DegenerateDensityError);
}

TEST_CASE("selection keeps only loads strictly inside their box at both endpoints") {
    NoiseModel noise = noise_for(3, 1.0, 10.0);
    noise.bounds.lower(2) = noise.bounds.upper(2) = 0.0;  // frozen load
    Vector a(3), b(3);
    a << 0.0, 10.0, 0.0;
    b << 9.9, 5.0, 0.0;
    CHECK(selection_mask(noise, a, b) == std::vector<char>{1, 0, 0});
    b(0) = -10.0;
    CHECK(selection_mask(noise, a, b) == std::vector<char>{0, 0, 0});
}

TEST_CASE("log-density identities") {
    const auto d = scalar_density(4.0);
    CHECK(log_density(d, Vector::Zero(1)) == doctest::Approx(d.log_normalizer));
    CHECK(log_density(d, Vector::Constant(1, 2.0)) == doctest::Approx(d.log_normalizer - 0.5));
    CHECK(d.log_normalizer == doctest::Approx(-0.5 * std::log(2.0 * std::numbers::pi * 4.0)));
}

TEST_CASE("densities integrate to one (quadrature in 1-D and 2-D)") {
    const auto d1 = scalar_density(2.5);
    double sum = 0.0;
    const double h1 = 0.001;
    for (double x = -15.0; x <= 15.0; x += h1) sum += std::exp(log_density(d1, Vector::Constant(1, x))) * h1;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));

    Matrix cov(2, 2);
    cov << 2.0, 0.8, 0.8, 1.0;
    const auto d2 = density_from(cov);
    const double h2 = 0.02;
    double sum2 = 0.0;
    for (double x = -10.0; x <= 10.0; x += h2)
        for (double y = -8.0; y <= 8.0; y += h2) {
            Vector v(2);
            v << x, y;
            sum2 += std::exp(log_density(d2, v)) * h2 * h2;
        }
    CHECK(sum2 == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("KL divergence: zero for equal densities, closed form for scalars") {
    const auto a = scalar_density(1.0);
    CHECK(kl_divergence(a, a) == doctest::Approx(0.0));
    const auto b = scalar_density(2.0);
    CHECK(kl_divergence(b, a) == doctest::Approx(0.5 * (2.0 - 1.0 + std::log(0.5))));
    CHECK(kl_divergence(b, a) == doctest::Approx(0.1534).epsilon(1e-3));
}

TEST_CASE("KL divergence matches a Monte Carlo estimate within 5%") {
    Matrix cp(3, 3), cn(3, 3);
    cp << 3.0, 0.5, 0.2, 0.5, 1.0, 0.1, 0.2, 0.1, 0.5;
    cn << 1.0, -0.2, 0.0, -0.2, 2.0, 0.3, 0.0, 0.3, 1.0;
    const auto post = density_from(cp);
    const auto nominal = density_from(cn);
    const Eigen::LLT<Matrix> chol(cp);
    Rng rng(42);
    double sum = 0.0;
    const int n = 1000000;
    for (int i = 0; i < n; ++i) {
        const Vector v = gaussian(rng, chol);
        sum += log_density(post, v) - log_density(nominal, v);
    }
    const double mc = sum / n;
    const double exact = kl_divergence(post, nominal);
    CHECK(exact > 0.0);
    CHECK(std::abs(mc - exact) < 0.05 * exact);
}

TEST_CASE("aggregate dispatch variance matches simulated increments inside one region") {
    const auto net = three_ring();
    const auto qp = assemble_qp(net);
    const Vector centre = Vector::Zero(2);
    const auto region = region_from_point(qp, centre);
    NoiseModel noise = noise_for(2, 1.0, 50.0);
    const auto dens = increment_covariance(region, noise, Channel::Dispatch, all_selected(2));
    const double g0 = solve(qp, centre).x.head(2).sum();
    Rng rng(17);
    double ss = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        Vector xi(2);
        xi << rng.normal(), rng.normal();
        const auto sol = solve(qp, xi);
        const double g = sol.x.head(2).sum();
        ss += (g - g0) * (g - g0);
    }
    CHECK(ss / n == doctest::Approx(dens.covariance(0, 0)).epsilon(0.02));
}

TEST_CASE("pseudo-inverse mode works on the covariance support") {
    Matrix cov = Matrix::Zero(3, 3);
    cov(0, 0) = 4.0;
    cov(1, 1) = 1.0;
    DensityOptions opts;
    opts.pseudo_inverse = true;
    const auto d = finalize_density(cov, Channel::Lmp, opts);
    CHECK(d.rank == 2);
    CHECK(d.log_det == doctest::Approx(std::log(4.0)));
    CHECK(d.precision(0, 0) == doctest::Approx(0.25));
    CHECK(d.precision(2, 2) == doctest::Approx(0.0));
}

TEST_CASE("absolute regularization floor dominates small covariances") {
    Matrix cov = Matrix::Zero(2, 2);
    cov(0, 0) = 1e-3;
    DensityOptions opts;
    opts.eps_floor = 0.12;
    const auto d = finalize_density(cov, Channel::Lmp, opts);
    CHECK(d.regularized(1, 1) == doctest::Approx(0.12));
    CHECK(d.regularized(0, 0) == doctest::Approx(0.121));
}

TEST_CASE("blended density averages the raw covariances") {
    const auto a = scalar_density(1.0);
    const auto b = scalar_density(3.0);
    const auto c = blended_density(a, b, DensityOptions{0.0, 1e-300, false, 1e-9});
    CHECK(c.covariance(0, 0) == doctest::Approx(2.0));
}
