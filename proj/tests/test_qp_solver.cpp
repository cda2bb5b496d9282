#include "support.hpp"

#include "gridqcd/market_qp.hpp"
#include "gridqcd/qp_solver.hpp"

#include <doctest.h>

#include <random>

using namespace gridqcd;
using namespace testsupport;

TEST_CASE("single uncongested generator: dispatch equals demand and the balance dual is c + C l") {
    const auto qp = assemble_qp(two_bus());
    const auto sol = solve(qp, Vector::Zero(1));
    CHECK(sol.x(0) == doctest::Approx(100.0).epsilon(1e-10));
    CHECK(std::abs(sol.x(1)) < 1e-9);
    CHECK(sol.mu(0) == doctest::Approx(10.0 + 0.01 * 100.0).epsilon(1e-10));
    const Vector lmp = solution_lmp(qp, sol);
    CHECK(lmp(0) == doctest::Approx(11.0));
    CHECK(lmp(1) == doctest::Approx(11.0));
    // balance plus the zero-shedding bound; no flow or generator limit binds
    std::vector<RowKind> kinds;
    for (auto r : sol.active.rows) kinds.push_back(qp.row_labels[static_cast<std::size_t>(r)].kind);
    CHECK(kinds == std::vector<RowKind>{RowKind::Balance, RowKind::ShedLower});
}

TEST_CASE("demand fully cancelled by the perturbation gives the zero dispatch") {
    const auto net = two_bus();
    const auto qp = assemble_qp(net);
    Vector xi(1);
    xi << -100.0;
    const auto sol = solve(qp, xi);
    CHECK(sol.x.norm() < 1e-9);
    CHECK(std::abs(sol.objective) < 1e-9);
}

TEST_CASE("solutions satisfy KKT and match the interior-point reference on random perturbations") {
    std::mt19937_64 gen(11);
    for (const char* name : {"case5_pjm.json", "case3_desk.json"}) {
        const auto net = load_case(data_path(name));
        const auto qp = assemble_qp(net);
        std::uniform_real_distribution<double> u(-60.0, 60.0);
        for (int trial = 0; trial < 200; ++trial) {
            Vector xi(qp.num_params());
            for (Eigen::Index i = 0; i < xi.size(); ++i) xi(i) = u(gen);
            const auto sol = solve(qp, xi);
            const auto ref = oracle_market(qp, xi);
            CHECK(sol.objective == doctest::Approx(ref.objective).epsilon(1e-8));
            CHECK((sol.x - ref.x).lpNorm<Eigen::Infinity>() < 1e-6);
            const auto res = kkt_residuals(qp, xi, sol.x, sol.mu);
            CHECK(res.primal < 1e-7);
            CHECK(res.dual < 1e-9);
            CHECK(res.stationarity < 1e-7);
            CHECK(res.complementarity < 1e-6);
        }
    }
}

TEST_CASE("random strictly convex QPs agree with the reference solver") {
    std::mt19937_64 gen(5);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 4 + trial % 4, m = 10 + trial % 7;
        Matrix R(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) R(i, j) = g(gen);
        MarketQP qp;
        qp.Q = R * R.transpose() + 0.5 * Matrix::Identity(n, n);
        qp.q = Vector::NullaryExpr(n, [&](Eigen::Index) { return g(gen); });
        qp.A = Matrix::NullaryExpr(m, n, [&](Eigen::Index, Eigen::Index) { return g(gen); });
        qp.B = Matrix::Zero(m, 1);
        qp.b = Vector::NullaryExpr(m, [&](Eigen::Index) { return 0.5 + std::abs(g(gen)); });  // x = 0 feasible
        qp.Lambda = Matrix::Zero(1, m);
        qp.row_labels.assign(static_cast<std::size_t>(m), RowLabel{});
        const Vector xi = Vector::Zero(1);
        const auto sol = solve(qp, xi);
        const auto ref = oracle_qp(qp.Q, qp.q, qp.A, qp.b);
        CHECK(sol.objective == doctest::Approx(ref.objective).epsilon(1e-6));
        CHECK((sol.x - ref.x).norm() < 1e-6);
    }
}

TEST_CASE("a line held at its limit is reported active") {
    const auto net = two_bus(80.0);
    const auto qp = assemble_qp(net);
    const auto sol = solve(qp, Vector::Zero(1));
    // 100 MW demand behind an 80 MW line: 20 MW is shed
    CHECK(sol.x(1) == doctest::Approx(20.0).epsilon(1e-9));
    bool upper_flow_active = false;
    for (auto r : sol.active.rows)
        if (qp.row_labels[static_cast<std::size_t>(r)].kind == RowKind::FlowUpper) upper_flow_active = true;
    CHECK(upper_flow_active);
    const Vector lmp = solution_lmp(qp, sol);
    CHECK(lmp(1) > lmp(0) + 100.0);
}

TEST_CASE("zero slack with zero dual is flagged as weakly active") {
    // Two identical units share 200 MW equally; the second one's 100 MW cap
    // touches without carrying a price (the active rows are independent, so
    // the zero dual is unique).
    auto net = two_bus(1000.0, 200.0);
    net.generators.push_back({1, 0.0, 100.0, 0.01, 10.0});
    const auto qp = assemble_qp(net);
    const Vector xi = Vector::Zero(1);
    const auto sol = solve(qp, xi);
    CHECK(sol.x(1) == doctest::Approx(100.0));
    const auto act = classify_active(sol, qp, xi, 1e-7);
    bool flagged = false;
    for (auto r : act.degenerate) {
        const auto& label = qp.row_labels[static_cast<std::size_t>(r)];
        if (label.kind == RowKind::GenUpper && label.element == 1) flagged = true;
    }
    CHECK(flagged);
}

TEST_CASE("infeasible problems are reported as numeric errors") {
    MarketQP qp;
    qp.Q = Matrix::Identity(1, 1);
    qp.q = Vector::Zero(1);
    qp.A = Matrix(2, 1);
    qp.A << 1.0, -1.0;
    qp.B = Matrix::Zero(2, 1);
    qp.b = Vector(2);
    qp.b << -1.0, -1.0;  // x <= -1 and x >= 1
    qp.Lambda = Matrix::Zero(1, 2);
    qp.row_labels.assign(2, RowLabel{});
    CHECK_THROWS_AS(solve(qp, Vector::Zero(1)), NumericError);
}
