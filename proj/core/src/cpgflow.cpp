#include "vopf/cpgflow.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

namespace vopf {
namespace {

using Index = Eigen::Index;

constexpr double kPivotRatio = 1e-15;

double inf_norm(const Vector& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

template <typename Diag>
void check_pivots(const Diag& d, const Vector& x) {
    if (d.size() == 0) return;
    const double hi = d.cwiseAbs().maxCoeff();
    const double lo = d.minCoeff();
    if (!(hi > 0.0) || !(lo > kPivotRatio * hi)) {
        throw RankDeficient("J J^T is singular to working precision (LICQ fails)", x);
    }
}

// Solves (J J^T) [a b] = [g, J w] and returns both.
std::pair<Vector, Vector> solve_normal(const SparseMatrix& jac, const Vector& g, const Vector& w, const Vector& x,
                                       LinearSolver solver, Index dense_rows_max) {
    const bool dense = solver == LinearSolver::Dense || (solver == LinearSolver::Auto && jac.rows() <= dense_rows_max);
    const Vector jw = jac * w;
    if (dense) {
        const Eigen::MatrixXd jd(jac);
        const Eigen::MatrixXd a = jd * jd.transpose();
        Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
        if (ldlt.info() != Eigen::Success) throw RankDeficient("J J^T factorization failed", x);
        check_pivots(ldlt.vectorD(), x);
        return {ldlt.solve(g), ldlt.solve(jw)};
    }
    const SparseMatrix a = jac * SparseMatrix(jac.transpose());
    Eigen::SimplicialLDLT<SparseMatrix> ldlt(a);
    if (ldlt.info() != Eigen::Success) throw RankDeficient("J J^T factorization failed", x);
    check_pivots(ldlt.vectorD(), x);
    return {ldlt.solve(g), ldlt.solve(jw)};
}

double resolve_scale(const FlowSystem& sys, double requested) {
    if (requested > 0.0) return requested;
    if (const auto* opf = dynamic_cast<const OpfFlowSystem*>(&sys)) return auto_cost_scale(opf->network());
    return 1.0;
}

// Dormand-Prince 5(4) tableau.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784, a76 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200, e6 = 22.0 / 525,
                 e7 = -1.0 / 40;
constexpr double d1 = -12715105075.0 / 11282082432, d3 = 87487479700.0 / 32700410799,
                 d4 = -10690763975.0 / 1880347072, d5 = 701980252875.0 / 199316789632,
                 d6 = -1453857185.0 / 822651844, d7 = 69997945.0 / 29380423;

struct Dense {
    Vector r1, r2, r3, r4, r5;
    double t0 = 0.0, h = 0.0;

    [[nodiscard]] Vector at(double t) const {
        const double s = (t - t0) / h;
        const double s1 = 1.0 - s;
        return r1 + s * (r2 + s1 * (r3 + s * (r4 + s1 * r5)));
    }
};

}  // namespace

OpfFlowSystem::OpfFlowSystem(const Network& net) : net_(net), layout_(net), box_(control_box(net)) {}

Vector OpfFlowSystem::residual(const Vector& x) const { return residual_g(net_, FullPoint{x}); }
SparseMatrix OpfFlowSystem::jacobian(const Vector& x) const { return jacobian_g(net_, FullPoint{x}); }
Vector OpfFlowSystem::gradient(const Vector& x) const { return grad_f(net_, FullPoint{x}); }
double OpfFlowSystem::cost(const Vector& x) const { return cost_of(net_, FullPoint{x}); }

Vector OpfFlowSystem::region_coords(const Vector& x) const {
    const auto& pos = layout_.control_positions();
    Vector z(static_cast<Index>(pos.size()));
    for (std::size_t k = 0; k < pos.size(); ++k) {
        const auto i = static_cast<Index>(k);
        z[i] = (x[pos[k]] - box_.lower[i]) / (box_.upper[i] - box_.lower[i]);
    }
    return z;
}

std::vector<Index> OpfFlowSystem::slack_positions() const {
    std::vector<Index> out;
    out.reserve(layout_.num_slacks());
    for (std::size_t k = 0; k < layout_.num_slacks(); ++k) out.push_back(layout_.s(k));
    return out;
}

double auto_cost_scale(const Network& net) {
    // Largest marginal cost at a dispatch sharing the load in proportion to Pmax.
    double load = 0.0, cap = 0.0;
    for (const auto& b : net.buses) load += b.pd;
    for (const auto& g : net.gens) cap += g.pmax;
    double scale = 0.0;
    for (const auto& g : net.gens) {
        const double share = cap > 0.0 ? load * g.pmax / cap : 0.0;
        scale = std::max(scale, std::abs(g.cost.derivative(std::clamp(share, g.pmin, g.pmax))));
    }
    return std::max(1.0, scale);
}

Eigen::MatrixXd tangent_projector(const Eigen::MatrixXd& jac) {
    const Eigen::MatrixXd a = jac * jac.transpose();
    Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
    if (ldlt.info() != Eigen::Success) throw RankDeficient("tangent_projector: J J^T factorization failed");
    check_pivots(ldlt.vectorD(), Vector());
    const auto n = jac.cols();
    return Eigen::MatrixXd::Identity(n, n) - jac.transpose() * ldlt.solve(jac);
}

PsiResult psi(const FlowSystem& sys, const Vector& x, double cost_scale, LinearSolver solver, Index dense_rows_max) {
    const Vector g = sys.residual(x);
    const SparseMatrix jac = sys.jacobian(x);
    const Vector w = sys.gradient(x) / cost_scale;
    auto [a, b] = solve_normal(jac, g, w, x, solver, dense_rows_max);
    PsiResult out;
    out.multipliers = a - b;
    out.velocity = -w - jac.transpose() * out.multipliers;
    return out;
}

PsiResult psi(const Network& net, const FullPoint& x) {
    const OpfFlowSystem sys(net);
    return psi(sys, x.x, auto_cost_scale(net));
}

const char* to_string(OutcomeKind k) {
    switch (k) {
        case OutcomeKind::AlreadyStable: return "AlreadyStable";
        case OutcomeKind::Converged: return "Converged";
        case OutcomeKind::BoundaryHit: return "BoundaryHit";
        case OutcomeKind::Stalled: return "Stalled";
    }
    return "?";
}

IntegrationOutcome integrate(const FlowSystem& sys, const Vector& x0, const HalfspaceSet& region,
                             const FlowOptions& opts) {
    const double scale = resolve_scale(sys, opts.cost_scale);
    auto field = [&](const Vector& x) { return psi(sys, x, scale, opts.solver, opts.dense_rows_max).velocity; };

    IntegrationOutcome out;
    auto finish = [&](OutcomeKind kind, const Vector& x, double t, const Vector& v) {
        out.kind = kind;
        out.endpoint.x = x;
        out.f_at_end = sys.cost(x);
        out.t_end = t;
        out.g_inf = inf_norm(sys.residual(x));
        out.psi_inf = inf_norm(v);
        return out;
    };

    // Several limits active with zero slack make J rank deficient at x0 itself; such a
    // start cannot be an equilibrium and is regularized by the slack floor below.
    Vector v0;
    bool regular = true;
    try {
        v0 = field(x0);
    } catch (const RankDeficient&) {
        if (opts.slack_floor <= 0.0) throw;
        regular = false;
    }
    if (regular && inf_norm(v0) <= opts.eq_tol && inf_norm(sys.residual(x0)) <= opts.feas_tol) {
        return finish(OutcomeKind::AlreadyStable, x0, 0.0, v0);
    }
    if (region.max_violation(sys.region_coords(x0)) > opts.boundary_tol) {
        return finish(OutcomeKind::BoundaryHit, x0, 0.0, regular ? v0 : Vector::Zero(x0.size()));
    }

    Vector x = x0;
    if (opts.slack_floor > 0.0) {
        bool moved = false;
        for (auto p : sys.slack_positions()) {
            if (std::abs(x[p]) < opts.slack_floor) {
                x[p] = std::copysign(opts.slack_floor, x[p] == 0.0 ? 1.0 : x[p]);
                moved = true;
            }
        }
        if (moved || !regular) v0 = field(x);
    }

    auto trace_row = [&](double t, const Vector& xs, const Vector& v) {
        if (opts.trace) {
            const auto prec = opts.trace->precision(17);
            *opts.trace << t << ',' << sys.cost(xs) << ',' << inf_norm(sys.residual(xs)) << ',' << inf_norm(v) << ','
                        << inf_norm(xs) << '\n';
            opts.trace->precision(prec);
        }
    };
    trace_row(0.0, x, v0);

    double t = 0.0;
    double h = std::clamp(opts.h_init, opts.h_min, opts.h_max);
    Vector k1 = v0;
    Vector k2, k3, k4, k5, k6, k7, y1;
    int accepted = 0;
    int attempts = 0;
    const int attempt_cap = 4 * opts.max_steps;

    while (t < opts.t_max && accepted < opts.max_steps && attempts < attempt_cap) {
        ++attempts;
        h = std::min(h, opts.t_max - t);
        try {
            k2 = field(x + h * (a21 * k1));
            k3 = field(x + h * (a31 * k1 + a32 * k2));
            k4 = field(x + h * (a41 * k1 + a42 * k2 + a43 * k3));
            k5 = field(x + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
            k6 = field(x + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
            y1 = x + h * (a71 * k1 + a73 * k3 + a74 * k4 + a75 * k5 + a76 * k6);
            k7 = field(y1);
        } catch (const RankDeficient&) {
            // A trial stage left the regular region; shrink unless the step is already minimal.
            if (h <= opts.h_min) throw;
            h = std::max(opts.h_min, 0.25 * h);
            continue;
        }
        const Vector err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
        double acc = 0.0;
        for (Index i = 0; i < err.size(); ++i) {
            const double sc = opts.atol + opts.rtol * std::max(std::abs(x[i]), std::abs(y1[i]));
            acc += (err[i] / sc) * (err[i] / sc);
        }
        const double enorm = std::sqrt(acc / static_cast<double>(std::max<Index>(1, err.size())));
        if (!std::isfinite(enorm) || enorm > 1.0) {
            const double fac = std::isfinite(enorm) ? std::max(0.2, 0.9 * std::pow(enorm, -0.2)) : 0.2;
            if (h <= opts.h_min) break;
            h = std::max(opts.h_min, h * fac);
            continue;
        }

        // Accepted step; look for a region crossing inside it.
        const Vector z1 = sys.region_coords(y1);
        if (region.max_violation(z1) > opts.boundary_tol) {
            Dense dense;
            dense.t0 = t;
            dense.h = h;
            dense.r1 = x;
            dense.r2 = y1 - x;
            dense.r3 = h * k1 - dense.r2;
            dense.r4 = dense.r2 - h * k7 - dense.r3;
            dense.r5 = h * (d1 * k1 + d3 * k3 + d4 * k4 + d5 * k5 + d6 * k6 + d7 * k7);

            double best_t = t + h;
            std::size_t best_face = 0;
            for (std::size_t f = 0; f < region.faces.size(); ++f) {
                const auto& face = region.faces[f];
                auto viol = [&](double s) { return face.normal.dot(sys.region_coords(dense.at(s))) - face.offset; };
                if (face.normal.dot(z1) - face.offset <= opts.boundary_tol) continue;
                double lo = t, hi = t + h;
                for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, hi); ++it) {
                    const double mid = 0.5 * (lo + hi);
                    const double vm = viol(mid);
                    if (vm > 0.0) {
                        hi = mid;
                    } else {
                        lo = mid;
                        if (vm >= -opts.boundary_tol) break;
                    }
                }
                if (lo < best_t) {
                    best_t = lo;
                    best_face = f;
                }
            }
            const Vector xb = dense.at(best_t);
            ++accepted;
            out.path_length = accepted;
            out.face = best_face;
            const Vector vb = field(xb);
            trace_row(best_t, xb, vb);
            return finish(OutcomeKind::BoundaryHit, xb, best_t, vb);
        }

        t += h;
        x = y1;
        k1 = k7;
        ++accepted;
        trace_row(t, x, k1);
        const double fac = enorm > 0.0 ? std::min(5.0, std::max(0.2, 0.9 * std::pow(enorm, -0.2))) : 5.0;
        h = std::clamp(h * fac, opts.h_min, opts.h_max);

        if (inf_norm(k1) <= opts.eq_tol && inf_norm(sys.residual(x)) <= opts.feas_tol) {
            out.path_length = accepted;
            return finish(OutcomeKind::Converged, x, t, k1);
        }
    }
    out.path_length = accepted;
    return finish(OutcomeKind::Stalled, x, t, k1);
}

IntegrationOutcome integrate(const Network& net, const FullPoint& x0, const HalfspaceSet& region,
                             const FlowOptions& opts) {
    const OpfFlowSystem sys(net);
    return integrate(sys, x0.x, region, opts);
}

bool is_equilibrium(const FlowSystem& sys, const Vector& x, double tol, double cost_scale, double feas_tol) {
    const auto v = psi(sys, x, cost_scale).velocity;
    return inf_norm(v) <= tol && inf_norm(sys.residual(x)) <= feas_tol;
}

bool is_equilibrium(const Network& net, const FullPoint& x, double tol) {
    const OpfFlowSystem sys(net);
    return is_equilibrium(sys, x.x, tol, auto_cost_scale(net));
}

double kkt_residual(const FlowSystem& sys, const Vector& x, double cost_scale) {
    const auto r = psi(sys, x, cost_scale);
    const Vector w = sys.gradient(x) / cost_scale;
    return inf_norm(w + sys.jacobian(x).transpose() * r.multipliers);
}

}  // namespace vopf
