#include "vopf/problem.hpp"

#include <cmath>
#include <limits>

namespace vopf {
namespace {

using Index = Eigen::Index;
using Triplet = Eigen::Triplet<double>;

Index idx(std::size_t i) { return static_cast<Index>(i); }

void check_dim(const VariableLayout& lay, const FullPoint& x, const char* what) {
    if (x.x.size() != lay.n()) {
        throw DimensionMismatch(std::string(what) + ": x has " + std::to_string(x.x.size()) + " entries, expected " +
                                std::to_string(lay.n()));
    }
}

struct Unpacked {
    Vector vm, va, pg, qg, s;
};

Unpacked unpack(const Network& net, const VariableLayout& lay, const Vector& x) {
    Unpacked u;
    const auto nb = net.num_buses();
    const auto ng = net.num_gens();
    u.vm = x.head(idx(nb));
    u.va = Vector::Zero(idx(nb));
    for (std::size_t i = 0; i < nb; ++i) {
        if (lay.theta(i) >= 0) u.va[idx(i)] = x[lay.theta(i)];
    }
    u.pg = x.segment(lay.pg(0), idx(ng));
    u.qg = x.segment(lay.qg(0), idx(ng));
    u.s = x.tail(idx(lay.num_slacks()));
    return u;
}

FullPoint assemble(const Network& net, const SystemState& state) {
    const VariableLayout lay(net);
    FullPoint p;
    p.x.setZero(lay.n());
    for (std::size_t i = 0; i < net.num_buses(); ++i) {
        p.x[lay.v(i)] = state.vm[idx(i)];
        if (lay.theta(i) >= 0) p.x[lay.theta(i)] = state.va[idx(i)];
    }
    for (std::size_t g = 0; g < net.num_gens(); ++g) {
        p.x[lay.pg(g)] = state.pg[idx(g)];
        p.x[lay.qg(g)] = state.qg[idx(g)];
    }
    const Vector h = inequality_values(net, state.vm, state.va, state.pg, state.qg);
    for (std::size_t k = 0; k < lay.num_slacks(); ++k) {
        p.x[lay.s(k)] = h[idx(k)] < 0.0 ? std::sqrt(-h[idx(k)]) : 0.0;
    }
    return p;
}

}  // namespace

VariableLayout::VariableLayout(const Network& net)
    : nb_(net.num_buses()), ng_(net.num_gens()), nk_(limit_rows(net).size()) {
    theta_pos_.assign(nb_, -1);
    Index next = idx(nb_);
    for (std::size_t i = 0; i < nb_; ++i) {
        if (i != net.slack_bus) theta_pos_[i] = next++;
    }
    pg0_ = next;
    qg0_ = pg0_ + idx(ng_);
    s0_ = qg0_ + idx(ng_);
    for (auto g : controlled_generators(net)) control_pos_.push_back(pg(g));
    for (auto b : net.gen_buses) control_pos_.push_back(v(b));
}

FullPoint lift(const Network& net, const ControlPoint& control, const SystemState& state) {
    if (!state.converged) throw NotConverged("lift: state is not a converged power-flow solution");
    const auto box_dim = controlled_generators(net).size() + net.gen_buses.size();
    if (static_cast<std::size_t>(control.u.size()) != box_dim) throw DimensionMismatch("lift: control dimension");
    return assemble(net, state);
}

FullPoint lift_unchecked(const Network& net, const SystemState& state) {
    if (static_cast<std::size_t>(state.vm.size()) != net.num_buses() || !state.vm.allFinite() || !state.va.allFinite()) {
        throw NotConverged("lift: state has no usable iterate");
    }
    return assemble(net, state);
}

Vector residual_g(const Network& net, const FullPoint& x) {
    const VariableLayout lay(net);
    check_dim(lay, x, "residual_g");
    const auto u = unpack(net, lay, x.x);
    const auto nb = net.num_buses();

    Vector g(lay.m());
    const auto sbus = bus_injections(net, u.vm, u.va);
    for (std::size_t i = 0; i < nb; ++i) {
        g[idx(i)] = sbus[i].real() + net.buses[i].pd;
        g[idx(nb + i)] = sbus[i].imag() + net.buses[i].qd;
    }
    for (std::size_t k = 0; k < net.num_gens(); ++k) {
        g[idx(net.gen_bus[k])] -= u.pg[idx(k)];
        g[idx(nb + net.gen_bus[k])] -= u.qg[idx(k)];
    }
    const Vector h = inequality_values(net, u.vm, u.va, u.pg, u.qg);
    g.tail(h.size()) = h + u.s.cwiseProduct(u.s);
    return g;
}

SparseMatrix jacobian_g(const Network& net, const FullPoint& x) {
    const VariableLayout lay(net);
    check_dim(lay, x, "jacobian_g");
    const auto u = unpack(net, lay, x.x);
    const auto nb = net.num_buses();

    std::vector<Complex> v(nb);
    for (std::size_t i = 0; i < nb; ++i) v[i] = std::polar(u.vm[idx(i)], u.va[idx(i)]);
    std::vector<Complex> current(nb, Complex(0.0, 0.0));
    for (Index r = 0; r < net.Y.outerSize(); ++r) {
        for (AdmittanceMatrix::InnerIterator e(net.Y, r); e; ++e) {
            current[static_cast<std::size_t>(r)] += e.value() * v[static_cast<std::size_t>(e.col())];
        }
    }

    std::vector<Triplet> trip;
    trip.reserve(static_cast<std::size_t>(8 * net.Y.nonZeros()) + 4 * lay.num_slacks() + 4 * net.num_gens());

    auto add_complex = [&](std::size_t bus, Index col, Complex d) {
        if (col < 0) return;
        trip.emplace_back(idx(bus), col, d.real());
        trip.emplace_back(idx(nb + bus), col, d.imag());
    };
    for (Index r = 0; r < net.Y.outerSize(); ++r) {
        const auto i = static_cast<std::size_t>(r);
        for (AdmittanceMatrix::InnerIterator e(net.Y, r); e; ++e) {
            const auto j = static_cast<std::size_t>(e.col());
            const Complex unit = std::polar(1.0, u.va[idx(j)]);
            Complex d_va = Complex(0.0, 1.0) * v[i] * std::conj(-e.value() * v[j]);
            Complex d_vm = v[i] * std::conj(e.value() * unit);
            if (i == j) {
                d_va += Complex(0.0, 1.0) * v[i] * std::conj(current[i]);
                d_vm += std::conj(current[i]) * unit;
            }
            add_complex(i, lay.theta(j), d_va);
            add_complex(i, lay.v(j), d_vm);
        }
    }
    for (std::size_t k = 0; k < net.num_gens(); ++k) {
        trip.emplace_back(idx(net.gen_bus[k]), lay.pg(k), -1.0);
        trip.emplace_back(idx(nb + net.gen_bus[k]), lay.qg(k), -1.0);
    }

    const auto rows = limit_rows(net);
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const Index row = idx(2 * nb + k);
        const auto e = rows[k].element;
        switch (rows[k].kind) {
            case LimitKind::VoltageMax: trip.emplace_back(row, lay.v(e), 1.0); break;
            case LimitKind::VoltageMin: trip.emplace_back(row, lay.v(e), -1.0); break;
            case LimitKind::ActiveMax: trip.emplace_back(row, lay.pg(e), 1.0); break;
            case LimitKind::ActiveMin: trip.emplace_back(row, lay.pg(e), -1.0); break;
            case LimitKind::ReactiveMax: trip.emplace_back(row, lay.qg(e), 1.0); break;
            case LimitKind::ReactiveMin: trip.emplace_back(row, lay.qg(e), -1.0); break;
            case LimitKind::FlowFrom:
            case LimitKind::FlowTo: {
                // S = conj(y_self) |V_a|^2 + conj(y_mut) V_a conj(V_b), a the measured end.
                const bool from = rows[k].kind == LimitKind::FlowFrom;
                const auto& y = net.branch_y[e];
                const auto a = from ? net.branch_from[e] : net.branch_to[e];
                const auto b = from ? net.branch_to[e] : net.branch_from[e];
                const Complex ys = std::conj(from ? y.yff : y.ytt);
                const Complex ym = std::conj(from ? y.yft : y.ytf);
                const Complex cross = ym * v[a] * std::conj(v[b]);
                const Complex s = ys * std::norm(v[a]) + cross;
                const Complex d_vma = 2.0 * ys * u.vm[idx(a)] + cross / u.vm[idx(a)];
                const Complex d_vmb = cross / u.vm[idx(b)];
                const Complex d_vaa = Complex(0.0, 1.0) * cross;
                const Complex d_vab = -d_vaa;
                auto dnorm = [&](Complex d) { return 2.0 * (s.real() * d.real() + s.imag() * d.imag()); };
                trip.emplace_back(row, lay.v(a), dnorm(d_vma));
                trip.emplace_back(row, lay.v(b), dnorm(d_vmb));
                if (lay.theta(a) >= 0) trip.emplace_back(row, lay.theta(a), dnorm(d_vaa));
                if (lay.theta(b) >= 0) trip.emplace_back(row, lay.theta(b), dnorm(d_vab));
                break;
            }
        }
        trip.emplace_back(row, lay.s(k), 2.0 * u.s[idx(k)]);
    }

    SparseMatrix jac(lay.m(), lay.n());
    jac.setFromTriplets(trip.begin(), trip.end());
    jac.makeCompressed();
    return jac;
}

Vector grad_f(const Network& net, const FullPoint& x) {
    const VariableLayout lay(net);
    check_dim(lay, x, "grad_f");
    Vector grad = Vector::Zero(lay.n());
    for (std::size_t g = 0; g < net.num_gens(); ++g) grad[lay.pg(g)] = net.gens[g].cost.derivative(x.x[lay.pg(g)]);
    return grad;
}

double cost_of(const Network& net, const FullPoint& x) {
    const VariableLayout lay(net);
    check_dim(lay, x, "cost_of");
    return total_cost(net, x.x.segment(lay.pg(0), idx(net.num_gens())));
}

ControlPoint control_part(const Network& net, const FullPoint& x) {
    const VariableLayout lay(net);
    check_dim(lay, x, "control_part");
    const auto& pos = lay.control_positions();
    ControlPoint c;
    c.u.resize(idx(pos.size()));
    for (std::size_t k = 0; k < pos.size(); ++k) c.u[idx(k)] = x.x[pos[k]];
    return c;
}

SystemState state_part(const Network& net, const FullPoint& x) {
    const VariableLayout lay(net);
    check_dim(lay, x, "state_part");
    const auto u = unpack(net, lay, x.x);
    SystemState s;
    s.vm = u.vm;
    s.va = u.va;
    s.pg = u.pg;
    s.qg = u.qg;
    const Vector g = residual_g(net, x);
    s.max_mismatch = g.head(idx(2 * net.num_buses())).cwiseAbs().maxCoeff();
    s.converged = s.max_mismatch <= 1e-8;
    return s;
}

SampleRecord classify(const Network& net, const ControlPoint& control, const ClassifyOptions& opts) {
    SampleRecord rec;
    rec.control = control;
    const auto state = solve(net, control, std::nullopt, opts.pf);
    if (!state.converged) {
        rec.category = Category::I;
        rec.f = std::numeric_limits<double>::quiet_NaN();
        rec.f_p = opts.sentinel;
        if (state.vm.allFinite() && state.va.allFinite() && state.pg.allFinite() && state.qg.allFinite()) {
            rec.state = state;
        }
        return rec;
    }
    rec.state = state;
    rec.f = total_cost(net, state.pg);
    const Vector h = inequality_values(net, control, state);
    double viol = 0.0;
    bool violated = false;
    for (Index k = 0; k < h.size(); ++k) {
        if (h[k] > 0.0) viol += h[k];
        if (h[k] > opts.feas_tol) violated = true;
    }
    rec.violation = viol;
    if (violated) {
        rec.category = Category::II;
        rec.f_p = rec.f + opts.penalty_c * viol;
    } else {
        rec.category = Category::III;
        rec.f_p = rec.f;
    }
    return rec;
}

double category_one_sentinel(const std::vector<SampleRecord>& archive) {
    double worst = -std::numeric_limits<double>::infinity();
    for (const auto& r : archive) {
        if (r.category != Category::I && std::isfinite(r.f_p)) worst = std::max(worst, r.f_p);
    }
    return std::isfinite(worst) ? std::max(1e9, 10.0 * worst) : 1e9;
}

const char* to_string(Category c) {
    switch (c) {
        case Category::I: return "I";
        case Category::II: return "II";
        case Category::III: return "III";
    }
    return "?";
}

}  // namespace vopf
