#include "fixtures.hpp"

#include "vopf/problem.hpp"

#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>
#include <random>

using namespace vopf;

namespace {

// Lossless two-bus line carrying 0.5 pu; the slack generator limit decides h for its Pmax row.
Network loaded_pair(double pmax) {
    auto net = vopf::test::two_bus(0.0, 0.1, 0.5);
    net.gens[0].pmax = pmax;
    net.finalize();
    return net;
}

Eigen::Index row_of(const Network& net, LimitKind kind, std::size_t element) {
    const auto rows = limit_rows(net);
    for (std::size_t k = 0; k < rows.size(); ++k)
        if (rows[k].kind == kind && rows[k].element == element) return static_cast<Eigen::Index>(k);
    return -1;
}

ControlPoint one(double v) { return ControlPoint{Vector::Constant(1, v)}; }

FullPoint random_point(const Network& net, std::mt19937_64& rng) {
    const VariableLayout lay(net);
    std::uniform_real_distribution<double> d(0.0, 1.0);
    FullPoint x{Vector(lay.n())};
    for (std::size_t i = 0; i < net.num_buses(); ++i) {
        x.x[lay.v(i)] = 0.9 + 0.2 * d(rng);
        if (lay.theta(i) >= 0) x.x[lay.theta(i)] = -0.4 + 0.8 * d(rng);
    }
    for (std::size_t g = 0; g < net.num_gens(); ++g) {
        x.x[lay.pg(g)] = net.gens[g].pmin + (net.gens[g].pmax - net.gens[g].pmin) * d(rng);
        x.x[lay.qg(g)] = net.gens[g].qmin + (net.gens[g].qmax - net.gens[g].qmin) * d(rng);
    }
    for (std::size_t k = 0; k < lay.num_slacks(); ++k) x.x[lay.s(k)] = d(rng);
    return x;
}

// Power balance, limits and slacks written out from polar sums over a dense Y.
Vector reference_g(const Network& net, const FullPoint& x) {
    const VariableLayout lay(net);
    const auto nb = net.num_buses();
    const Eigen::Matrix<Complex, -1, -1> Y = Eigen::Matrix<Complex, -1, -1>(net.Y);
    Vector vm(nb), va(nb);
    for (std::size_t i = 0; i < nb; ++i) {
        vm[i] = x.x[lay.v(i)];
        va[i] = lay.theta(i) < 0 ? 0.0 : x.x[lay.theta(i)];
    }
    const auto rows = limit_rows(net);
    Vector g(lay.m());
    for (std::size_t i = 0; i < nb; ++i) {
        double p = 0.0, q = 0.0;
        for (std::size_t k = 0; k < nb; ++k) {
            const double G = Y(i, k).real(), B = Y(i, k).imag(), t = va[i] - va[k];
            p += vm[i] * vm[k] * (G * std::cos(t) + B * std::sin(t));
            q += vm[i] * vm[k] * (G * std::sin(t) - B * std::cos(t));
        }
        double pg = 0.0, qg = 0.0;
        for (std::size_t k = 0; k < net.num_gens(); ++k) {
            if (net.gen_bus[k] != i) continue;
            pg += x.x[lay.pg(k)];
            qg += x.x[lay.qg(k)];
        }
        g[i] = p + net.buses[i].pd - pg;
        g[nb + i] = q + net.buses[i].qd - qg;
    }
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const auto e = rows[k].element;
        double h = 0.0;
        auto flow2 = [&](bool from) {
            const auto& br = net.branches[e];
            const Complex ys = 1.0 / Complex(br.r, br.x), half(0.0, br.b / 2.0);
            const Complex a = br.tap * std::polar(1.0, br.shift);
            const auto f = net.branch_from[e], t = net.branch_to[e];
            const Complex vf = std::polar(vm[f], va[f]), vt = std::polar(vm[t], va[t]);
            const Complex i_f = (ys + half) / std::norm(a) * vf - ys / std::conj(a) * vt;
            const Complex i_t = -ys / a * vf + (ys + half) * vt;
            const Complex s = from ? vf * std::conj(i_f) : vt * std::conj(i_t);
            return std::norm(s) - br.smax * br.smax;
        };
        switch (rows[k].kind) {
            case LimitKind::VoltageMax: h = vm[e] - net.buses[e].vmax; break;
            case LimitKind::VoltageMin: h = net.buses[e].vmin - vm[e]; break;
            case LimitKind::ActiveMax: h = x.x[lay.pg(e)] - net.gens[e].pmax; break;
            case LimitKind::ActiveMin: h = net.gens[e].pmin - x.x[lay.pg(e)]; break;
            case LimitKind::ReactiveMax: h = x.x[lay.qg(e)] - net.gens[e].qmax; break;
            case LimitKind::ReactiveMin: h = net.gens[e].qmin - x.x[lay.qg(e)]; break;
            case LimitKind::FlowFrom: h = flow2(true); break;
            case LimitKind::FlowTo: h = flow2(false); break;
        }
        const double s = x.x[lay.s(k)];
        g[static_cast<Eigen::Index>(2 * nb + k)] = h + s * s;
    }
    return g;
}

}  // namespace

TEST_CASE("layout accounting") {
    const VariableLayout lay(vopf::test::case9());
    // 9 V, 8 theta, 3 P, 3 Q, then 18 + 6 + 6 + 18 slacks
    CHECK(lay.n() == 71);
    CHECK(lay.m() == 66);
    CHECK(lay.theta(0) == -1);
    CHECK(lay.control_positions().size() == 5);
}

TEST_CASE("lift slacks") {
    SUBCASE("h = -4 gives s = 2") {
        const auto net = loaded_pair(4.5);
        const auto st = solve(net, one(1.0));
        REQUIRE(st.converged);
        const auto x = lift(net, one(1.0), st);
        CHECK(x.x[VariableLayout(net).s(static_cast<std::size_t>(row_of(net, LimitKind::ActiveMax, 0)))] ==
              doctest::Approx(2.0).epsilon(1e-9));
    }
    SUBCASE("h = 0 gives s = 0") {
        const auto net = loaded_pair(0.5);
        const auto st = solve(net, one(1.0));
        const auto x = lift(net, one(1.0), st);
        CHECK(std::abs(x.x[VariableLayout(net).s(static_cast<std::size_t>(row_of(net, LimitKind::ActiveMax, 0)))]) < 1e-5);
    }
    SUBCASE("violated h = 0.25 gives s = 0 and g = 0.25") {
        const auto net = loaded_pair(0.25);
        const auto st = solve(net, one(1.0));
        const auto x = lift(net, one(1.0), st);
        const auto k = row_of(net, LimitKind::ActiveMax, 0);
        CHECK(x.x[VariableLayout(net).s(static_cast<std::size_t>(k))] == 0.0);
        CHECK(residual_g(net, x)[2 * 2 + k] == doctest::Approx(0.25).epsilon(1e-9));
    }
    SUBCASE("unconverged state") {
        const auto net = loaded_pair(4.5);
        auto st = solve(net, one(1.0));
        st.converged = false;
        CHECK_THROWS_AS(lift(net, one(1.0), st), NotConverged);
        CHECK_NOTHROW(lift_unchecked(net, st));
    }
}

TEST_CASE("residual at a feasible lift") {
    const auto& net = vopf::test::case9();
    ControlPoint u{Vector(5)};
    u.u << 1.0, 0.8, 1.0, 1.02, 1.01;
    const auto st = solve(net, u);
    REQUIRE(st.converged);
    auto x = lift(net, u, st);
    CHECK(residual_g(net, x).head(18).cwiseAbs().maxCoeff() <= 1e-9);

    x.x[VariableLayout(net).v(4)] += 0.01;
    CHECK(residual_g(net, x).head(18).cwiseAbs().maxCoeff() > 1e-4);

    CHECK((control_part(net, lift(net, u, st)).u - u.u).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("residual matches an independent evaluator") {
    std::mt19937_64 rng(11);
    for (const auto* name : {"case9mod.m", "wb5mod.m", "case39mod2.m"}) {
        const auto net = parse_case_file(vopf::test::data_file(name));
        for (int t = 0; t < 5; ++t) {
            const auto x = random_point(net, rng);
            const Vector a = residual_g(net, x), b = reference_g(net, x);
            CHECK((a - b).cwiseAbs().maxCoeff() < 1e-10 * (1.0 + b.cwiseAbs().maxCoeff()));
        }
    }
}

TEST_CASE("jacobian against central differences") {
    std::mt19937_64 rng(5);
    const auto& net = vopf::test::case9();
    for (int t = 0; t < 5; ++t) {
        const auto x = random_point(net, rng);
        const Eigen::MatrixXd J = Eigen::MatrixXd(jacobian_g(net, x));
        Eigen::MatrixXd fd(J.rows(), J.cols());
        for (Eigen::Index j = 0; j < J.cols(); ++j) {
            FullPoint a = x, b = x;
            const double h = 1e-6 * std::max(1.0, std::abs(x.x[j]));
            a.x[j] += h;
            b.x[j] -= h;
            fd.col(j) = (residual_g(net, a) - residual_g(net, b)) / (2.0 * h);
        }
        CHECK((J - fd).cwiseAbs().maxCoeff() / std::max(1.0, J.cwiseAbs().maxCoeff()) < 1e-6);

        // d(h_k + s_k^2)/ds_k = 2 s_k
        const VariableLayout lay(net);
        for (std::size_t k = 0; k < lay.num_slacks(); k += 7)
            CHECK(J(static_cast<Eigen::Index>(18 + k), lay.s(k)) == doctest::Approx(2.0 * x.x[lay.s(k)]));
    }
}

TEST_CASE("jacobian has full row rank at a feasible point") {
    const auto& net = vopf::test::case9();
    ControlPoint u{Vector(5)};
    u.u << 1.0, 0.8, 1.0, 1.02, 1.01;
    const auto st = solve(net, u);
    REQUIRE(st.converged);
    const Eigen::MatrixXd J = Eigen::MatrixXd(jacobian_g(net, lift(net, u, st)));
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(J.transpose());
    CHECK(qr.rank() == 66);
}

TEST_CASE("gradient") {
    auto net = vopf::test::two_bus(0.0, 0.1, 0.5);
    net.gens[0].cost = {1.0, 2.0, 0.0};
    const VariableLayout lay(net);
    FullPoint x{Vector::Zero(lay.n())};
    x.x[lay.pg(0)] = 3.0;
    const auto g = grad_f(net, x);
    CHECK(g[lay.pg(0)] == doctest::Approx(8.0));
    CHECK(g.cwiseAbs().sum() == doctest::Approx(8.0));
    CHECK(cost_of(net, x) == doctest::Approx(15.0));

    net.gens[0].cost = {};
    CHECK(grad_f(net, x).cwiseAbs().maxCoeff() == 0.0);

    std::mt19937_64 rng(3);
    const auto& n9 = vopf::test::case9();
    const VariableLayout l9(n9);
    const auto y = random_point(n9, rng);
    const auto gy = grad_f(n9, y);
    for (std::size_t k = 0; k < n9.num_gens(); ++k) {
        FullPoint a = y, b = y;
        a.x[l9.pg(k)] += 1e-6;
        b.x[l9.pg(k)] -= 1e-6;
        const double fd = (cost_of(n9, a) - cost_of(n9, b)) / 2e-6;
        CHECK(std::abs(fd - gy[l9.pg(k)]) < 1e-8 * std::abs(gy[l9.pg(k)]) + 1e-6);
    }
}

TEST_CASE("classify") {
    const auto feasible = loaded_pair(4.5);
    const auto r3 = classify(feasible, one(1.0));
    CHECK(r3.category == Category::III);
    CHECK(r3.f_p == r3.f);
    CHECK(r3.state.has_value());

    const auto over = loaded_pair(0.4);
    ClassifyOptions opts;
    opts.penalty_c = 3000.0;
    const auto r2 = classify(over, one(1.0), opts);
    CHECK(r2.category == Category::II);
    CHECK(r2.violation == doctest::Approx(0.1).epsilon(1e-8));
    CHECK(r2.f_p == doctest::Approx(r2.f + 300.0).epsilon(1e-10));

    const auto heavy = vopf::test::two_bus(0.0, 0.1, 8.0);
    const auto r1 = classify(heavy, one(1.0));
    CHECK(r1.category == Category::I);
    CHECK(std::isnan(r1.f));

    std::vector<SampleRecord> archive{r1, r2, r3};
    CHECK(category_one_sentinel(archive) == doctest::Approx(1e9));
    archive[1].f_p = 2e8;
    CHECK(category_one_sentinel(archive) == doctest::Approx(2e9));
}
