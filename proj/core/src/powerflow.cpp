#include "vopf/powerflow.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace vopf {
namespace {

using Index = Eigen::Index;

Index idx(std::size_t i) { return static_cast<Index>(i); }

std::vector<Complex> voltages(const Vector& vm, const Vector& va) {
    std::vector<Complex> v(static_cast<std::size_t>(vm.size()));
    for (Index i = 0; i < vm.size(); ++i) v[static_cast<std::size_t>(i)] = std::polar(vm[i], va[i]);
    return v;
}

// Distributes a bus's reactive output over its generators in proportion to their ranges.
void split_reactive(const Network& net, std::size_t bus, double q_total, Vector& qg) {
    std::vector<std::size_t> at;
    for (std::size_t g = 0; g < net.num_gens(); ++g) {
        if (net.gen_bus[g] == bus) at.push_back(g);
    }
    if (at.size() == 1) {
        qg[idx(at.front())] = q_total;
        return;
    }
    double qmin = 0.0, range = 0.0;
    for (auto g : at) {
        qmin += net.gens[g].qmin;
        range += net.gens[g].qmax - net.gens[g].qmin;
    }
    if (range <= 0.0 || range > 1e8) {
        for (auto g : at) qg[idx(g)] = q_total / static_cast<double>(at.size());
        return;
    }
    const double alpha = (q_total - qmin) / range;
    for (auto g : at) qg[idx(g)] = net.gens[g].qmin + alpha * (net.gens[g].qmax - net.gens[g].qmin);
}

void recover_injections(const Network& net, const ControlPoint& control, SystemState& s) {
    const auto pgens = controlled_generators(net);
    s.pg.setZero(idx(net.num_gens()));
    s.qg.setZero(idx(net.num_gens()));
    for (std::size_t k = 0; k < pgens.size(); ++k) s.pg[idx(pgens[k])] = control.u[idx(k)];

    const auto sbus = bus_injections(net, s.vm, s.va);
    const auto slack = net.slack_bus;
    double p_slack = sbus[slack].real() + net.buses[slack].pd;
    for (std::size_t g = 0; g < net.num_gens(); ++g) {
        if (g != net.slack_gen && net.gen_bus[g] == slack) p_slack -= s.pg[idx(g)];
    }
    s.pg[idx(net.slack_gen)] = p_slack;
    for (auto b : net.gen_buses) split_reactive(net, b, sbus[b].imag() + net.buses[b].qd, s.qg);
}

}  // namespace

std::vector<Complex> bus_injections(const Network& net, const Vector& vm, const Vector& va) {
    const auto v = voltages(vm, va);
    std::vector<Complex> s(v.size());
    for (Index r = 0; r < net.Y.outerSize(); ++r) {
        Complex current(0.0, 0.0);
        for (AdmittanceMatrix::InnerIterator it(net.Y, r); it; ++it) current += it.value() * v[static_cast<std::size_t>(it.col())];
        s[static_cast<std::size_t>(r)] = v[static_cast<std::size_t>(r)] * std::conj(current);
    }
    return s;
}

ControlPoint control_of(const Network& net, const SystemState& state) {
    const auto pgens = controlled_generators(net);
    ControlPoint c;
    c.u.resize(idx(pgens.size() + net.gen_buses.size()));
    Index k = 0;
    for (auto g : pgens) c.u[k++] = state.pg[idx(g)];
    for (auto b : net.gen_buses) c.u[k++] = state.vm[idx(b)];
    return c;
}

SystemState solve(const Network& net, const ControlPoint& control, const std::optional<SystemState>& warm,
                  const PowerFlowOptions& opts) {
    const auto box_dim = controlled_generators(net).size() + net.gen_buses.size();
    if (static_cast<std::size_t>(control.u.size()) != box_dim) {
        throw DimensionMismatch("power flow: control has " + std::to_string(control.u.size()) + " entries, expected " +
                                std::to_string(box_dim));
    }
    const auto nb = net.num_buses();
    const auto pgens = controlled_generators(net);

    SystemState s;
    if (warm && static_cast<std::size_t>(warm->vm.size()) == nb) {
        s.vm = warm->vm;
        s.va = warm->va;
    } else {
        s.vm = Vector::Ones(idx(nb));
        s.va = Vector::Zero(idx(nb));
    }
    for (std::size_t k = 0; k < net.gen_buses.size(); ++k) s.vm[idx(net.gen_buses[k])] = control.u[idx(pgens.size() + k)];
    s.va[idx(net.slack_bus)] = 0.0;

    // Scheduled net injections.
    Vector p_sched = Vector::Zero(idx(nb));
    Vector q_sched = Vector::Zero(idx(nb));
    for (std::size_t i = 0; i < nb; ++i) {
        p_sched[idx(i)] = -net.buses[i].pd;
        q_sched[idx(i)] = -net.buses[i].qd;
    }
    for (std::size_t k = 0; k < pgens.size(); ++k) p_sched[idx(net.gen_bus[pgens[k]])] += control.u[idx(k)];

    std::vector<std::size_t> angle_bus, mag_bus;  // unknowns
    std::vector<Index> angle_pos(nb, -1), mag_pos(nb, -1);
    for (std::size_t i = 0; i < nb; ++i) {
        if (i == net.slack_bus) continue;
        angle_pos[i] = idx(angle_bus.size());
        angle_bus.push_back(i);
    }
    for (std::size_t i = 0; i < nb; ++i) {
        if (net.buses[i].kind != BusKind::PQ) continue;
        mag_pos[i] = idx(angle_bus.size() + mag_bus.size());
        mag_bus.push_back(i);
    }
    const Index dim = idx(angle_bus.size() + mag_bus.size());

    Vector f(dim);
    auto mismatch = [&]() {
        const auto sbus = bus_injections(net, s.vm, s.va);
        for (std::size_t k = 0; k < angle_bus.size(); ++k) {
            const auto i = angle_bus[k];
            f[idx(k)] = sbus[i].real() - p_sched[idx(i)];
        }
        for (std::size_t k = 0; k < mag_bus.size(); ++k) {
            const auto i = mag_bus[k];
            f[idx(angle_bus.size() + k)] = sbus[i].imag() - q_sched[idx(i)];
        }
        return dim == 0 ? 0.0 : f.cwiseAbs().maxCoeff();
    };

    double err = mismatch();
    int it = 0;
    Eigen::MatrixXd jac(dim, dim);
    while (std::isfinite(err) && err > opts.tol && it < opts.max_iter) {
        // dS/dVa = j diag(V) conj(diag(I) - Y diag(V)), dS/dVm = diag(V) conj(Y diag(V/|V|)) + diag(conj(I)) diag(V/|V|)
        const auto v = voltages(s.vm, s.va);
        std::vector<Complex> current(nb, Complex(0.0, 0.0));
        for (Index r = 0; r < net.Y.outerSize(); ++r) {
            for (AdmittanceMatrix::InnerIterator e(net.Y, r); e; ++e) current[static_cast<std::size_t>(r)] += e.value() * v[static_cast<std::size_t>(e.col())];
        }
        jac.setZero();
        for (Index r = 0; r < net.Y.outerSize(); ++r) {
            const auto i = static_cast<std::size_t>(r);
            const Index prow = angle_pos[i];
            const Index qrow = mag_pos[i];
            if (prow < 0 && qrow < 0) continue;
            for (AdmittanceMatrix::InnerIterator e(net.Y, r); e; ++e) {
                const auto j = static_cast<std::size_t>(e.col());
                const Complex vj_unit = v[j] / s.vm[idx(j)];
                Complex ds_dva = Complex(0.0, 1.0) * v[i] * std::conj(-e.value() * v[j]);
                Complex ds_dvm = v[i] * std::conj(e.value() * vj_unit);
                if (i == j) {
                    ds_dva += Complex(0.0, 1.0) * v[i] * std::conj(current[i]);
                    ds_dvm += std::conj(current[i]) * vj_unit;
                }
                if (prow >= 0 && angle_pos[j] >= 0) jac(prow, angle_pos[j]) += ds_dva.real();
                if (prow >= 0 && mag_pos[j] >= 0) jac(prow, mag_pos[j]) += ds_dvm.real();
                if (qrow >= 0 && angle_pos[j] >= 0) jac(qrow, angle_pos[j]) += ds_dva.imag();
                if (qrow >= 0 && mag_pos[j] >= 0) jac(qrow, mag_pos[j]) += ds_dvm.imag();
            }
        }
        const Vector dx = jac.partialPivLu().solve(-f);
        if (!dx.allFinite()) break;
        for (std::size_t k = 0; k < angle_bus.size(); ++k) s.va[idx(angle_bus[k])] += dx[idx(k)];
        for (std::size_t k = 0; k < mag_bus.size(); ++k) s.vm[idx(mag_bus[k])] += dx[idx(angle_bus.size() + k)];
        ++it;
        err = mismatch();
        if (!(err < 1e8)) break;  // diverging
    }

    s.iterations = it;
    s.max_mismatch = std::isfinite(err) ? err : std::numeric_limits<double>::infinity();
    s.converged = std::isfinite(err) && err <= opts.tol && s.vm.allFinite() && s.va.allFinite() &&
                  (s.vm.array() > 0.0).all();
    if (!s.vm.allFinite() || !s.va.allFinite()) {
        s.pg.setZero(idx(net.num_gens()));
        s.qg.setZero(idx(net.num_gens()));
        return s;
    }
    recover_injections(net, control, s);
    return s;
}

FlowReport branch_flows(const Network& net, const SystemState& state) {
    const auto v = voltages(state.vm, state.va);
    FlowReport rep;
    rep.sf.reserve(net.num_branches());
    rep.st.reserve(net.num_branches());
    for (std::size_t l = 0; l < net.num_branches(); ++l) {
        const auto& y = net.branch_y[l];
        const auto vf = v[net.branch_from[l]];
        const auto vt = v[net.branch_to[l]];
        rep.sf.push_back(vf * std::conj(y.yff * vf + y.yft * vt));
        rep.st.push_back(vt * std::conj(y.ytf * vf + y.ytt * vt));
    }
    return rep;
}

std::vector<LimitRow> limit_rows(const Network& net) {
    std::vector<LimitRow> rows;
    rows.reserve(2 * net.num_buses() + 4 * net.num_gens() + 2 * net.num_rated());
    for (std::size_t i = 0; i < net.num_buses(); ++i) {
        rows.push_back({LimitKind::VoltageMax, i});
        rows.push_back({LimitKind::VoltageMin, i});
    }
    for (std::size_t g = 0; g < net.num_gens(); ++g) {
        rows.push_back({LimitKind::ActiveMax, g});
        rows.push_back({LimitKind::ActiveMin, g});
    }
    for (std::size_t g = 0; g < net.num_gens(); ++g) {
        rows.push_back({LimitKind::ReactiveMax, g});
        rows.push_back({LimitKind::ReactiveMin, g});
    }
    for (std::size_t l = 0; l < net.num_branches(); ++l) {
        if (!net.branches[l].rated()) continue;
        rows.push_back({LimitKind::FlowFrom, l});
        rows.push_back({LimitKind::FlowTo, l});
    }
    return rows;
}

std::string describe(const Network& net, const LimitRow& row) {
    auto bus_label = [&](std::size_t b) { return std::to_string(net.buses[b].id); };
    switch (row.kind) {
        case LimitKind::VoltageMax: return "Vmax bus " + bus_label(row.element);
        case LimitKind::VoltageMin: return "Vmin bus " + bus_label(row.element);
        case LimitKind::ActiveMax: return "Pmax gen " + std::to_string(row.element + 1) + " (bus " + std::to_string(net.gens[row.element].bus) + ")";
        case LimitKind::ActiveMin: return "Pmin gen " + std::to_string(row.element + 1) + " (bus " + std::to_string(net.gens[row.element].bus) + ")";
        case LimitKind::ReactiveMax: return "Qmax gen " + std::to_string(row.element + 1) + " (bus " + std::to_string(net.gens[row.element].bus) + ")";
        case LimitKind::ReactiveMin: return "Qmin gen " + std::to_string(row.element + 1) + " (bus " + std::to_string(net.gens[row.element].bus) + ")";
        case LimitKind::FlowFrom: return "Smax from-end branch " + std::to_string(row.element + 1);
        case LimitKind::FlowTo: return "Smax to-end branch " + std::to_string(row.element + 1);
    }
    return {};
}

Vector inequality_values(const Network& net, const Vector& vm, const Vector& va, const Vector& pg, const Vector& qg) {
    if (static_cast<std::size_t>(vm.size()) != net.num_buses() || static_cast<std::size_t>(va.size()) != net.num_buses() ||
        static_cast<std::size_t>(pg.size()) != net.num_gens() || static_cast<std::size_t>(qg.size()) != net.num_gens()) {
        throw DimensionMismatch("inequality_values: state dimensions do not match the network");
    }
    const auto rows = limit_rows(net);
    Vector h(idx(rows.size()));
    const auto v = voltages(vm, va);
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const auto e = rows[k].element;
        double val = 0.0;
        switch (rows[k].kind) {
            case LimitKind::VoltageMax: val = vm[idx(e)] - net.buses[e].vmax; break;
            case LimitKind::VoltageMin: val = net.buses[e].vmin - vm[idx(e)]; break;
            case LimitKind::ActiveMax: val = pg[idx(e)] - net.gens[e].pmax; break;
            case LimitKind::ActiveMin: val = net.gens[e].pmin - pg[idx(e)]; break;
            case LimitKind::ReactiveMax: val = qg[idx(e)] - net.gens[e].qmax; break;
            case LimitKind::ReactiveMin: val = net.gens[e].qmin - qg[idx(e)]; break;
            case LimitKind::FlowFrom:
            case LimitKind::FlowTo: {
                const auto& y = net.branch_y[e];
                const auto vf = v[net.branch_from[e]];
                const auto vt = v[net.branch_to[e]];
                const Complex s = rows[k].kind == LimitKind::FlowFrom ? vf * std::conj(y.yff * vf + y.yft * vt)
                                                                       : vt * std::conj(y.ytf * vf + y.ytt * vt);
                const double smax = net.branches[e].smax;
                val = std::norm(s) - smax * smax;
                break;
            }
        }
        h[idx(k)] = val;
    }
    return h;
}

Vector inequality_values(const Network& net, const ControlPoint& control, const SystemState& state) {
    const auto box_dim = controlled_generators(net).size() + net.gen_buses.size();
    if (static_cast<std::size_t>(control.u.size()) != box_dim) {
        throw DimensionMismatch("inequality_values: control has wrong dimension");
    }
    return inequality_values(net, state.vm, state.va, state.pg, state.qg);
}

}  // namespace vopf
