#pragma once

#include "vopf/network.hpp"

#include <optional>
#include <string>
#include <vector>

namespace vopf {

/// A point of the control space, ControlBox ordering. Box membership is not required.
struct ControlPoint {
    Vector u;
};

struct SystemState {
    Vector vm;  // per bus, pu
    Vector va;  // per bus, rad; slack entry is exactly 0
    Vector pg;  // per generator, pu
    Vector qg;
    bool converged = false;
    int iterations = 0;
    double max_mismatch = 0.0;
};

struct FlowReport {
    std::vector<Complex> sf;  // from-end apparent power, pu
    std::vector<Complex> st;  // to-end apparent power, pu
};

struct PowerFlowOptions {
    double tol = 1e-10;
    int max_iter = 30;
};

/// Newton-Raphson power flow for a control point. Non-convergence is reported
/// through `converged`, never thrown; the returned state then holds the last iterate.
SystemState solve(const Network& net, const ControlPoint& control,
                  const std::optional<SystemState>& warm = std::nullopt, const PowerFlowOptions& opts = {});

/// Complex bus injections V .* conj(Y V).
std::vector<Complex> bus_injections(const Network& net, const Vector& vm, const Vector& va);

FlowReport branch_flows(const Network& net, const SystemState& state);

/// Kind of each inequality row, in inequality_values order.
enum class LimitKind { VoltageMax, VoltageMin, ActiveMax, ActiveMin, ReactiveMax, ReactiveMin, FlowFrom, FlowTo };

struct LimitRow {
    LimitKind kind;
    std::size_t element;  // bus, generator or branch index
};

/// Inequality layout: 2 rows per bus (V), 2 per generator (P), 2 per generator (Q),
/// 2 per rated branch (|S|^2 at each end). Unrated branches contribute nothing.
std::vector<LimitRow> limit_rows(const Network& net);
std::string describe(const Network& net, const LimitRow& row);

/// Values h(u, y) with feasibility meaning h <= 0. Flow rows use |S|^2 - Smax^2.
Vector inequality_values(const Network& net, const ControlPoint& control, const SystemState& state);
Vector inequality_values(const Network& net, const Vector& vm, const Vector& va, const Vector& pg, const Vector& qg);

/// Control vector implied by a state (P of controlled gens, V at generator buses).
ControlPoint control_of(const Network& net, const SystemState& state);

}  // namespace vopf
