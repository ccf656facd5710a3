#pragma once

#include "vopf/geometry.hpp"
#include "vopf/problem.hpp"

#include <Eigen/Dense>

#include <iosfwd>

namespace vopf {

/// An equality-constrained problem min f(x) s.t. g(x) = 0, seen by the flow.
class FlowSystem {
public:
    virtual ~FlowSystem() = default;
    [[nodiscard]] virtual Eigen::Index dim() const = 0;
    [[nodiscard]] virtual Eigen::Index rows() const = 0;
    [[nodiscard]] virtual Vector residual(const Vector& x) const = 0;
    [[nodiscard]] virtual SparseMatrix jacobian(const Vector& x) const = 0;
    [[nodiscard]] virtual Vector gradient(const Vector& x) const = 0;
    [[nodiscard]] virtual double cost(const Vector& x) const = 0;
    /// Coordinates the region halfspaces act on.
    [[nodiscard]] virtual Vector region_coords(const Vector& x) const { return x; }
    /// Entries of x that are squared slacks (subject to the slack floor).
    [[nodiscard]] virtual std::vector<Eigen::Index> slack_positions() const { return {}; }
};

/// The OPF in full-variable form; region coordinates are the normalized controls.
class OpfFlowSystem final : public FlowSystem {
public:
    explicit OpfFlowSystem(const Network& net);

    [[nodiscard]] Eigen::Index dim() const override { return layout_.n(); }
    [[nodiscard]] Eigen::Index rows() const override { return layout_.m(); }
    [[nodiscard]] Vector residual(const Vector& x) const override;
    [[nodiscard]] SparseMatrix jacobian(const Vector& x) const override;
    [[nodiscard]] Vector gradient(const Vector& x) const override;
    [[nodiscard]] double cost(const Vector& x) const override;
    [[nodiscard]] Vector region_coords(const Vector& x) const override;
    [[nodiscard]] std::vector<Eigen::Index> slack_positions() const override;

    [[nodiscard]] const Network& network() const { return net_; }
    [[nodiscard]] const VariableLayout& layout() const { return layout_; }
    [[nodiscard]] const ControlBox& box() const { return box_; }

private:
    const Network& net_;
    VariableLayout layout_;
    ControlBox box_;
};

/// Largest |df/dP_g| at a load-proportional dispatch, at least 1.
double auto_cost_scale(const Network& net);

enum class LinearSolver { Auto, Dense, Sparse };

struct FlowOptions {
    double eq_tol = 1e-6;        // on ||psi||_inf
    double feas_tol = 1e-8;      // on ||g||_inf for convergence
    double h_init = 1e-3;
    double h_min = 1e-12;
    double h_max = 2.0;          // restoration decays like e^-t; larger steps sit at the RK stability edge
    double t_max = 1e5;
    int max_steps = 20000;
    double boundary_tol = 1e-9;
    double rtol = 1e-6;
    double atol = 1e-9;
    /// Divides grad f. 0 selects auto_cost_scale for OPF systems and 1 otherwise.
    double cost_scale = 0.0;
    /// Slack entries with |s| below this are raised to it before integrating; 0 disables.
    double slack_floor = 1e-3;
    LinearSolver solver = LinearSolver::Auto;
    Eigen::Index dense_rows_max = 100;
    std::ostream* trace = nullptr;  // CSV rows t,f,g_inf,psi_inf,x_inf, one per accepted step
};

struct PsiResult {
    Vector velocity;
    Vector multipliers;
};

/// I - J^T (J J^T)^{-1} J. Throws RankDeficient.
Eigen::MatrixXd tangent_projector(const Eigen::MatrixXd& jac);

PsiResult psi(const FlowSystem& sys, const Vector& x, double cost_scale = 1.0,
              LinearSolver solver = LinearSolver::Auto, Eigen::Index dense_rows_max = 100);
/// OPF flow with the automatic cost scale.
PsiResult psi(const Network& net, const FullPoint& x);

enum class OutcomeKind { AlreadyStable, Converged, BoundaryHit, Stalled };
const char* to_string(OutcomeKind k);

struct IntegrationOutcome {
    OutcomeKind kind = OutcomeKind::Stalled;
    FullPoint endpoint;
    double f_at_end = 0.0;
    int path_length = 0;  // accepted steps
    double t_end = 0.0;
    double g_inf = 0.0;
    double psi_inf = 0.0;
    std::size_t face = 0;  // crossed halfspace for BoundaryHit
};

IntegrationOutcome integrate(const FlowSystem& sys, const Vector& x0, const HalfspaceSet& region,
                             const FlowOptions& opts = {});
IntegrationOutcome integrate(const Network& net, const FullPoint& x0, const HalfspaceSet& region,
                             const FlowOptions& opts = {});

bool is_equilibrium(const FlowSystem& sys, const Vector& x, double tol, double cost_scale = 1.0,
                    double feas_tol = 1e-8);
bool is_equilibrium(const Network& net, const FullPoint& x, double tol);

/// ||grad f / scale + J^T lambda||_inf with lambda from psi.
double kkt_residual(const FlowSystem& sys, const Vector& x, double cost_scale = 1.0);

}  // namespace vopf
