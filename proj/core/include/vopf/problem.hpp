#pragma once

#include "vopf/network.hpp"
#include "vopf/powerflow.hpp"

#include <Eigen/SparseCore>

#include <optional>

namespace vopf {

using SparseMatrix = Eigen::SparseMatrix<double>;

/// Index map of the full variable vector x = [V, theta (no slack), P_G, Q_G, s].
class VariableLayout {
public:
    VariableLayout() = default;
    explicit VariableLayout(const Network& net);

    [[nodiscard]] Eigen::Index v(std::size_t bus) const { return static_cast<Eigen::Index>(bus); }
    /// -1 for the slack bus, whose angle is fixed at zero.
    [[nodiscard]] Eigen::Index theta(std::size_t bus) const { return theta_pos_[bus]; }
    [[nodiscard]] Eigen::Index pg(std::size_t gen) const { return pg0_ + static_cast<Eigen::Index>(gen); }
    [[nodiscard]] Eigen::Index qg(std::size_t gen) const { return qg0_ + static_cast<Eigen::Index>(gen); }
    [[nodiscard]] Eigen::Index s(std::size_t k) const { return s0_ + static_cast<Eigen::Index>(k); }

    [[nodiscard]] std::size_t num_buses() const { return nb_; }
    [[nodiscard]] std::size_t num_gens() const { return ng_; }
    [[nodiscard]] std::size_t num_slacks() const { return nk_; }
    [[nodiscard]] Eigen::Index n() const { return s0_ + static_cast<Eigen::Index>(nk_); }
    /// Equality rows: 2 N_B mismatches then one row per inequality.
    [[nodiscard]] Eigen::Index m() const { return static_cast<Eigen::Index>(2 * nb_ + nk_); }

    /// Positions of the control coordinates inside x, ControlBox order.
    [[nodiscard]] const std::vector<Eigen::Index>& control_positions() const { return control_pos_; }

private:
    std::size_t nb_ = 0, ng_ = 0, nk_ = 0;
    Eigen::Index pg0_ = 0, qg0_ = 0, s0_ = 0;
    std::vector<Eigen::Index> theta_pos_;
    std::vector<Eigen::Index> control_pos_;
};

struct FullPoint {
    Vector x;
};

/// Builds x from a state. s_k = sqrt(-h_k) where h_k <= 0, else 0.
/// Throws NotConverged unless the state is a converged power-flow solution.
FullPoint lift(const Network& net, const ControlPoint& control, const SystemState& state);
/// Same assembly without the convergence check (last Newton iterate of a failed solve).
FullPoint lift_unchecked(const Network& net, const SystemState& state);

Vector residual_g(const Network& net, const FullPoint& x);
SparseMatrix jacobian_g(const Network& net, const FullPoint& x);
Vector grad_f(const Network& net, const FullPoint& x);
double cost_of(const Network& net, const FullPoint& x);

/// Control coordinates of x (P of controlled gens, V at gen buses).
ControlPoint control_part(const Network& net, const FullPoint& x);
/// V, theta, P_G, Q_G read back from x; `converged` mirrors the mismatch rows.
SystemState state_part(const Network& net, const FullPoint& x);

enum class Category { I, II, III };

struct SampleRecord {
    ControlPoint control;
    Category category = Category::I;
    double f = 0.0;    // NaN for category I
    double f_p = 0.0;  // penalized cost
    double violation = 0.0;  // sum of max(0, h_k)
    std::optional<SystemState> state;  // category I keeps the last iterate when finite
    bool used_as_initial = false;
};

struct ClassifyOptions {
    double penalty_c = 3000.0;
    /// h_k above this counts as a violation; absorbs power-flow round-off at binding limits.
    double feas_tol = 1e-7;
    /// f_p given to category I points; the archive owner rescales it.
    double sentinel = 1e9;
    PowerFlowOptions pf;
};

SampleRecord classify(const Network& net, const ControlPoint& control, const ClassifyOptions& opts = {});

/// max(1e9, 10 x largest finite f_p among category II/III records).
double category_one_sentinel(const std::vector<SampleRecord>& archive);

const char* to_string(Category c);

}  // namespace vopf
