#include "fixtures.hpp"
#include "scenarios.hpp"

#include "vopf/powerflow.hpp"

#include <doctest.h>

#include <cmath>

using namespace vopf;

namespace {

ControlPoint controls(std::initializer_list<double> v) {
    ControlPoint u;
    u.u.resize(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) u.u[i++] = x;
    return u;
}

// Bus 2 held at 1 pu by a zero-output generator, so the line angle has a closed form.
Network two_bus_pv(double load_p) {
    Network net;
    net.buses.push_back({.id = 1, .kind = BusKind::Slack});
    net.buses.push_back({.id = 2, .kind = BusKind::PV, .pd = load_p});
    net.gens.push_back({.bus = 1, .pmin = 0.0, .pmax = 10.0, .qmin = -10.0, .qmax = 10.0, .cost = {0.0, 1.0, 0.0}});
    net.gens.push_back({.bus = 2, .pmin = 0.0, .pmax = 0.0, .qmin = -10.0, .qmax = 10.0, .cost = {}});
    BranchRecord br;
    br.from = 1;
    br.to = 2;
    br.x = 0.1;
    net.branches.push_back(br);
    net.finalize();
    return net;
}

}  // namespace

TEST_CASE("flat no-load solution") {
    const auto net = vopf::test::two_bus(0.0, 0.1, 0.0);
    const auto st = solve(net, controls({1.0}));
    REQUIRE(st.converged);
    CHECK(st.va.cwiseAbs().maxCoeff() < 1e-12);
    for (const auto& s : bus_injections(net, st.vm, st.va)) CHECK(std::abs(s) < 1e-12);
    for (const auto& s : branch_flows(net, st).sf) CHECK(std::abs(s) < 1e-12);
}

TEST_CASE("single line closed form") {
    const auto net = two_bus_pv(0.5);
    const auto st = solve(net, controls({0.0, 1.0, 1.0}));
    REQUIRE(st.converged);
    CHECK(st.va[0] == 0.0);
    CHECK(st.va[1] == doctest::Approx(-std::asin(0.05)).epsilon(1e-10));
    CHECK(st.pg[0] == doctest::Approx(0.5).epsilon(1e-10));
}

TEST_CASE("warm start and non-convergence") {
    const auto& net = vopf::test::case9();
    const auto u = controls({0.648, 1.178, 0.9064, 0.9255, 0.9326});
    const auto cold = solve(net, u);
    REQUIRE(cold.converged);
    const auto warm = solve(net, u, cold);
    CHECK(warm.converged);
    CHECK(warm.iterations <= 1);

    // Far more load than the line can carry at these voltages.
    const auto heavy = vopf::test::two_bus(0.0, 0.1, 8.0);
    const auto st = solve(heavy, controls({1.0}));
    CHECK_FALSE(st.converged);
    CHECK(st.iterations > 0);
}

TEST_CASE("9-bus local optimum") {
    const auto& net = vopf::test::case9();
    const auto st = solve(net, controls({0.648, 1.178, 0.9064, 0.9255, 0.9326}));
    REQUIRE(st.converged);
    CHECK(total_cost(net, st.pg) == doctest::Approx(3398.03).epsilon(1e-3));

    // At the converged optimum every generator sits on its Q lower limit.
    const auto lo = repro::case9_local(net);
    const auto st2 = solve(net, lo.control);
    REQUIRE(st2.converged);
    const auto h = inequality_values(net, lo.control, st2);
    const auto rows = limit_rows(net);
    int qmin = 0;
    for (std::size_t k = 0; k < rows.size(); ++k) {
        if (rows[k].kind != LimitKind::ReactiveMin) continue;
        ++qmin;
        CHECK(std::abs(h[static_cast<Eigen::Index>(k)]) < 1e-6);
    }
    CHECK(qmin == 3);
}

TEST_CASE("lossy line flows") {
    const double r = 0.05, x = 0.2;
    auto net = vopf::test::two_bus(r, x, 1.0, 0.3);
    net.branches[0].b = 0.04;
    net.finalize();
    const auto st = solve(net, controls({1.02}));
    REQUIRE(st.converged);
    const auto fl = branch_flows(net, st);
    CHECK(std::abs(fl.sf[0]) > std::abs(fl.st[0]));

    const Complex vf = std::polar(st.vm[0], st.va[0]);
    const Complex vt = std::polar(st.vm[1], st.va[1]);
    const Complex is = (vf - vt) / Complex(r, x);
    const Complex loss = std::norm(is) * Complex(r, x) - Complex(0.0, 0.02) * (std::norm(vf) + std::norm(vt));
    CHECK(std::abs(fl.sf[0] + fl.st[0] - loss) < 1e-10);
}

TEST_CASE("inequality values") {
    auto net = vopf::test::two_bus(0.01, 0.1, 0.5, 0.1);
    net.branches[0].smax = 5.0;
    net.finalize();
    const auto rows = limit_rows(net);
    CHECK(rows.size() == 2 * 2 + 2 + 2 + 2);

    const auto u_in = controls({1.0});
    const auto h_in = inequality_values(net, u_in, solve(net, u_in));
    CHECK(h_in.maxCoeff() < 0.0);

    const auto u_max = controls({1.1});
    const auto h_max = inequality_values(net, u_max, solve(net, u_max));
    for (std::size_t k = 0; k < rows.size(); ++k)
        if (rows[k].kind == LimitKind::VoltageMax && rows[k].element == 0) CHECK(h_max[static_cast<Eigen::Index>(k)] == 0.0);
}

TEST_CASE("control_of inverts solve") {
    const auto& net = vopf::test::case9();
    const auto u = controls({1.0, 0.8, 1.0, 1.01, 0.99});
    const auto st = solve(net, u);
    REQUIRE(st.converged);
    CHECK((control_of(net, st).u - u.u).cwiseAbs().maxCoeff() < 1e-12);
}
