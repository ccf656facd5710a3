#pragma once

#include "vopf/cpgflow.hpp"
#include "vopf/network.hpp"

#include <random>
#include <string>

#ifndef VOPF_TEST_DATA
#define VOPF_TEST_DATA "data"
#endif

namespace vopf::test {

inline std::string data_file(const std::string& name) { return std::string(VOPF_TEST_DATA) + "/" + name; }

inline const Network& case9() {
    static const Network net = parse_case_file(data_file("case9mod.m"));
    return net;
}

/// Slack bus 1 feeding a PQ load at bus 2 through one branch.
inline Network two_bus(double r, double x, double load_p, double load_q = 0.0, double tap = 1.0) {
    Network net;
    net.buses.push_back({.id = 1, .kind = BusKind::Slack});
    net.buses.push_back({.id = 2, .kind = BusKind::PQ, .pd = load_p, .qd = load_q});
    net.gens.push_back({.bus = 1, .pmin = 0.0, .pmax = 10.0, .qmin = -10.0, .qmax = 10.0, .cost = {0.0, 1.0, 0.0}});
    BranchRecord br;
    br.from = 1;
    br.to = 2;
    br.r = r;
    br.x = x;
    br.tap = tap;
    net.branches.push_back(br);
    net.finalize();
    return net;
}

/// min |x|^2 (or 0 when `zero_cost`) subject to x1 + x2 = 1.
class ToyFlow final : public FlowSystem {
public:
    explicit ToyFlow(bool zero_cost = false) : zero_(zero_cost) {}

    [[nodiscard]] Eigen::Index dim() const override { return 2; }
    [[nodiscard]] Eigen::Index rows() const override { return 1; }
    [[nodiscard]] Vector residual(const Vector& x) const override { return Vector::Constant(1, x[0] + x[1] - 1.0); }
    [[nodiscard]] SparseMatrix jacobian(const Vector&) const override {
        SparseMatrix j(1, 2);
        j.insert(0, 0) = 1.0;
        j.insert(0, 1) = 1.0;
        return j;
    }
    [[nodiscard]] Vector gradient(const Vector& x) const override { return zero_ ? Vector::Zero(2) : Vector(2.0 * x); }
    [[nodiscard]] double cost(const Vector& x) const override { return zero_ ? 0.0 : x.squaredNorm(); }

private:
    bool zero_;
};

inline Vector uniform_vector(std::mt19937_64& rng, Eigen::Index n, double lo = 0.0, double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = d(rng);
    return v;
}

}  // namespace vopf::test
