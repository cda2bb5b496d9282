#include "support.hpp"

#include "gridqcd/errors.hpp"
#include "gridqcd/network.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <random>

using namespace gridqcd;
using namespace testsupport;

namespace {

// Line flows of an injection vector from the nodal DC equations with the
// slack angle fixed at zero.
Vector dc_flows(const NetworkCase& net, const Vector& injection) {
    const auto nb = static_cast<Eigen::Index>(net.num_buses());
    Matrix bbus = Matrix::Zero(nb, nb);
    for (const auto& ln : net.lines) {
        const auto i = static_cast<Eigen::Index>(net.bus_index(ln.from_bus));
        const auto j = static_cast<Eigen::Index>(net.bus_index(ln.to_bus));
        bbus(i, i) += ln.susceptance;
        bbus(j, j) += ln.susceptance;
        bbus(i, j) -= ln.susceptance;
        bbus(j, i) -= ln.susceptance;
    }
    const auto slack = static_cast<Eigen::Index>(net.bus_index(net.slack_bus));
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < nb; ++i)
        if (i != slack) keep.push_back(i);
    Matrix reduced(nb - 1, nb - 1);
    Vector p(nb - 1);
    for (Eigen::Index a = 0; a < nb - 1; ++a) {
        p(a) = injection(keep[a]);
        for (Eigen::Index b = 0; b < nb - 1; ++b) reduced(a, b) = bbus(keep[a], keep[b]);
    }
    const Vector theta_r = reduced.fullPivLu().solve(p);
    Vector theta = Vector::Zero(nb);
    for (Eigen::Index a = 0; a < nb - 1; ++a) theta(keep[a]) = theta_r(a);
    Vector flows(static_cast<Eigen::Index>(net.num_lines()));
    for (std::size_t k = 0; k < net.num_lines(); ++k) {
        const auto& ln = net.lines[k];
        flows(static_cast<Eigen::Index>(k)) =
            ln.susceptance * (theta(static_cast<Eigen::Index>(net.bus_index(ln.from_bus))) -
                              theta(static_cast<Eigen::Index>(net.bus_index(ln.to_bus))));
    }
    return flows;
}

}  // namespace

TEST_CASE("two-bus PTDF: injection at bus 2 flows back over the single line") {
    const auto F = compute_ptdf(two_bus());
    REQUIRE(F.rows() == 1);
    REQUIRE(F.cols() == 2);
    CHECK(F(0, 0) == doctest::Approx(0.0));
    CHECK(F(0, 1) == doctest::Approx(-1.0));
}

TEST_CASE("three-bus ring splits a bus-2 injection 2/3 direct and 1/3 around the ring") {
    const auto net = three_ring();
    const auto F = compute_ptdf(net);
    Vector inj = Vector::Zero(3);
    inj(1) = 1.0;
    inj(0) = -1.0;
    const Vector oracle = dc_flows(net, inj);
    const Vector flows = F * inj;
    CHECK((flows - oracle).norm() < 1e-12);
    CHECK(flows(0) == doctest::Approx(-2.0 / 3.0));
    CHECK(flows(1) == doctest::Approx(-1.0 / 3.0));
    CHECK(flows(2) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("PTDF flows of balanced injections match a direct nodal solve on every bundled case") {
    std::mt19937_64 gen(7);
    std::uniform_real_distribution<double> u(-100.0, 100.0);
    for (const char* name : {"case5_pjm.json", "case3_desk.json"}) {
        const auto net = load_case(data_path(name));
        const auto F = compute_ptdf(net);
        for (int trial = 0; trial < 20; ++trial) {
            Vector inj(static_cast<Eigen::Index>(net.num_buses()));
            for (Eigen::Index i = 0; i < inj.size(); ++i) inj(i) = u(gen);
            inj(static_cast<Eigen::Index>(net.bus_index(net.slack_bus))) -= inj.sum();
            CHECK((F * inj - dc_flows(net, inj)).lpNorm<Eigen::Infinity>() < 1e-9);
        }
        // A uniform shift of a balanced vector only moves the slack entry.
        Vector uniform = Vector::Constant(static_cast<Eigen::Index>(net.num_buses()), 10.0);
        uniform(static_cast<Eigen::Index>(net.bus_index(net.slack_bus))) -= uniform.sum();
        CHECK((F * uniform - dc_flows(net, uniform)).lpNorm<Eigen::Infinity>() < 1e-9);
    }
}

TEST_CASE("PTDF columns do not depend on line orientation beyond the flow sign") {
    auto net = three_ring();
    const auto F = compute_ptdf(net);
    std::swap(net.lines[2].from_bus, net.lines[2].to_bus);
    const auto G = compute_ptdf(net);
    CHECK((G.row(2) + F.row(2)).norm() < 1e-12);
    CHECK((G.topRows(2) - F.topRows(2)).norm() < 1e-12);
}

TEST_CASE("incidence matrices place generators and loads on their buses") {
    const auto net = load_case(data_path("case3_desk.json"));
    const Matrix Mp = net.generator_incidence();
    const Matrix Ml = net.load_incidence();
    CHECK(Mp.rows() == 3);
    CHECK(Mp.cols() == 2);
    CHECK(Mp(0, 0) == 1.0);
    CHECK(Mp(2, 1) == 1.0);
    CHECK(Mp.sum() == 2.0);
    CHECK(Ml(1, 0) == 1.0);
    CHECK(Ml(2, 1) == 1.0);
    CHECK(net.mean_demand()(0) == 150.0);
}

TEST_CASE("case validation rejects malformed and islanded networks") {
    auto net = three_ring();
    net.lines[0].flow_limit = 0.0;
    CHECK_THROWS_AS(net.validate(), InputError);

    net = three_ring();
    net.generators[0].cost_quadratic = 0.0;
    CHECK_THROWS_AS(net.validate(), InputError);

    net = three_ring();
    net.loads[1].bus = 2;
    CHECK_THROWS_AS(net.validate(), InputError);

    net = three_ring();
    net.buses.push_back(4);
    CHECK_THROWS_AS(net.validate(), StructuralError);

    net = three_ring();
    net.loads[0].bus = 9;
    CHECK_THROWS_AS(net.validate(), InputError);

    CHECK(is_connected(three_ring(), 0));
    CHECK_FALSE(is_connected(two_bus(), 0));
}

TEST_CASE("case JSON round-trips and reports unreadable files") {
    const auto net = load_case(data_path("case5_pjm.json"));
    const auto again = case_from_json(case_to_json(net));
    CHECK(again.num_buses() == net.num_buses());
    CHECK(again.num_lines() == 6);
    CHECK((compute_ptdf(again) - compute_ptdf(net)).norm() < 1e-12);
    CHECK(again.loads[1].perturbation_bound.value_or(-1) == 300.0);
    CHECK_THROWS_AS(load_case("/nonexistent/case.json"), IoError);
    CHECK_THROWS_AS(case_from_json(nlohmann::json::parse(R"({"buses": [1]})")), InputError);
}

TEST_CASE("removing lines keeps the rest of the case") {
    const auto net = load_case(data_path("case5_pjm.json"));
    const auto reduced = net.without_lines({2});
    CHECK(reduced.num_lines() == 5);
    CHECK(reduced.lines[2].from_bus == net.lines[3].from_bus);
    CHECK(reduced.num_generators() == net.num_generators());
}
