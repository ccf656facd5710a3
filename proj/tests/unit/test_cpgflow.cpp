#include "fixtures.hpp"
#include "scenarios.hpp"

#include "vopf/cpgflow.hpp"

#include <doctest.h>

#include <Eigen/Dense>

#include <algorithm>
#include <random>
#include <sstream>

using namespace vopf;
using vopf::test::ToyFlow;

namespace {

Vector v2(double a, double b) {
    Vector v(2);
    v << a, b;
    return v;
}

HalfspaceSet box_around(const Vector& c, double half) {
    HalfspaceSet r;
    for (Eigen::Index i = 0; i < c.size(); ++i) {
        Vector e = Vector::Zero(c.size());
        e[i] = 1.0;
        r.faces.push_back({e, c[i] + half});
        r.faces.push_back({-e, -(c[i] - half)});
    }
    return r;
}

ControlPoint controls(std::initializer_list<double> v) {
    ControlPoint u;
    u.u.resize(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) u.u[i++] = x;
    return u;
}

}  // namespace

TEST_CASE("projector on an axis constraint") {
    Eigen::MatrixXd J(1, 2);
    J << 1.0, 0.0;
    const auto P = tangent_projector(J);
    CHECK(P(0, 0) == doctest::Approx(0.0));
    CHECK(P(0, 1) == doctest::Approx(0.0));
    CHECK(P(1, 1) == doctest::Approx(1.0));
    Eigen::MatrixXd bad(2, 2);
    bad << 1.0, 2.0, 2.0, 4.0;
    CHECK_THROWS_AS(tangent_projector(bad), RankDeficient);
}

TEST_CASE("projector laws on random matrices") {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> d;
    for (int t = 0; t < 20; ++t) {
        const Eigen::Index m = 1 + t % 5, n = m + 1 + t % 4;
        Eigen::MatrixXd J(m, n);
        for (Eigen::Index i = 0; i < J.size(); ++i) J.data()[i] = d(rng);
        const auto P = tangent_projector(J);
        CHECK((P * P - P).cwiseAbs().maxCoeff() < 1e-10);
        CHECK((J * P).cwiseAbs().maxCoeff() < 1e-10);
        Eigen::FullPivLU<Eigen::MatrixXd> lu(P);
        lu.setThreshold(1e-8);
        CHECK(lu.rank() == n - m);
    }
}

TEST_CASE("toy psi") {
    const ToyFlow toy;
    CHECK(psi(toy, v2(0.5, 0.5)).velocity.cwiseAbs().maxCoeff() < 1e-14);

    // g = 0 leaves -P grad f = -(1, -1)
    const auto r = psi(toy, v2(1.0, 0.0));
    CHECK(r.velocity[0] == doctest::Approx(-1.0));
    CHECK(r.velocity[1] == doctest::Approx(1.0));

    const ToyFlow flat(true);
    const auto s = psi(flat, v2(0.0, 0.0));
    CHECK(s.velocity[0] == doctest::Approx(0.5));
    CHECK(s.velocity[1] == doctest::Approx(0.5));

    // Dense and sparse paths agree.
    const auto a = psi(toy, v2(0.2, -0.3), 1.0, LinearSolver::Dense);
    const auto b = psi(toy, v2(0.2, -0.3), 1.0, LinearSolver::Sparse);
    CHECK((a.velocity - b.velocity).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("restoration and descent terms are orthogonal") {
    const ToyFlow toy;
    const ToyFlow flat(true);
    std::mt19937_64 rng(23);
    for (int t = 0; t < 10; ++t) {
        const auto x = vopf::test::uniform_vector(rng, 2, -2.0, 2.0);
        const Vector restore = psi(flat, x).velocity;
        const Vector total = psi(toy, x).velocity;
        CHECK(std::abs(restore.dot(total - restore)) < 1e-12);
    }
}

TEST_CASE("toy integration") {
    const ToyFlow toy;
    const auto out = integrate(toy, v2(0.0, 0.0), HalfspaceSet{});
    CHECK(out.kind == OutcomeKind::Converged);
    CHECK(out.endpoint.x[0] == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(out.endpoint.x[1] == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(out.g_inf <= 1e-8);
    CHECK(kkt_residual(toy, out.endpoint.x) <= 1e-5);

    const auto stable = integrate(toy, v2(0.5, 0.5), HalfspaceSet{});
    CHECK(stable.kind == OutcomeKind::AlreadyStable);
    CHECK(stable.endpoint.x == v2(0.5, 0.5));
    CHECK(stable.path_length == 0);

    const auto hit = integrate(toy, v2(1.0, 0.0), box_around(v2(1.0, 0.0), 1e-3));
    CHECK(hit.kind == OutcomeKind::BoundaryHit);
    CHECK(hit.face < 4);
    CHECK(box_around(v2(1.0, 0.0), 1e-3).max_violation(hit.endpoint.x) <= 1e-8);
}

TEST_CASE("residual norm never grows along a trajectory") {
    const ToyFlow toy;
    std::ostringstream csv;
    FlowOptions o;
    o.trace = &csv;
    const auto out = integrate(toy, v2(3.0, -1.5), HalfspaceSet{}, o);
    CHECK(out.kind == OutcomeKind::Converged);
    std::istringstream in(csv.str());
    std::string line;
    double prev = 1e300;
    int rows = 0;
    while (std::getline(in, line)) {
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream row(line);
        double t, f, g, p, xn;
        REQUIRE(static_cast<bool>(row >> t >> f >> g >> p >> xn));
        CHECK(g <= prev + 10.0 * (o.atol + o.rtol * xn));
        prev = g;
        ++rows;
    }
    CHECK(rows > 2);
}

TEST_CASE("toy equilibrium test") {
    const ToyFlow toy;
    CHECK(is_equilibrium(toy, v2(0.5, 0.5), 1e-8));
    CHECK_FALSE(is_equilibrium(toy, v2(1.0, 0.0), 1e-8));
    CHECK_FALSE(is_equilibrium(toy, v2(0.0, 0.0), 1e-8));
}

TEST_CASE("9-bus optimum is a stable equilibrium") {
    const auto& net = vopf::test::case9();
    const auto glob = repro::local_optimum(net, controls({1.2537, 0.5703, 0.9095, 0.9218, 0.9388}));
    CHECK(glob.cost == doctest::Approx(3087.8).epsilon(1e-3));
    const auto st = solve(net, glob.control);
    REQUIRE(st.converged);
    const auto x = lift(net, glob.control, st);
    const OpfFlowSystem sys(net);
    CHECK(is_equilibrium(net, x, 1e-5));
    CHECK(kkt_residual(sys, x.x, auto_cost_scale(net)) <= 1e-5);

    // Nearby starts flow back to the same optimum.
    std::mt19937_64 rng(29);
    for (int t = 0; t < 3; ++t) {
        ControlPoint p = glob.control;
        p.u += vopf::test::uniform_vector(rng, 5, -2e-3, 2e-3);
        CHECK(repro::local_optimum(net, p).cost == doctest::Approx(glob.cost).epsilon(1e-5));
    }

    const auto interior = controls({1.0, 0.8, 1.0, 1.02, 1.01});
    const auto s2 = solve(net, interior);
    CHECK_FALSE(is_equilibrium(net, lift(net, interior, s2), 1e-5));
}

TEST_CASE("auto cost scale") {
    CHECK(auto_cost_scale(vopf::test::case9()) > 1.0);
    auto net = vopf::test::two_bus(0.0, 0.1, 0.5);
    net.gens[0].cost = {};
    CHECK(auto_cost_scale(net) == 1.0);
}
