#pragma once

#include "vopf/error.hpp"

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <complex>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace vopf {

using Complex = std::complex<double>;
using Vector = Eigen::VectorXd;

enum class BusKind { Slack, PV, PQ };

struct BusRecord {
    int id = 0;
    BusKind kind = BusKind::PQ;
    double pd = 0.0;  // pu on base_mva
    double qd = 0.0;
    double vmin = 0.9;
    double vmax = 1.1;
    double gs = 0.0;  // shunt conductance, pu
    double bs = 0.0;  // shunt susceptance, pu
};

/// Quadratic generator cost in $/hr with P in per-unit.
struct CostPoly {
    double a2 = 0.0;
    double a1 = 0.0;
    double a0 = 0.0;

    [[nodiscard]] double operator()(double p) const { return (a2 * p + a1) * p + a0; }
    [[nodiscard]] double derivative(double p) const { return 2.0 * a2 * p + a1; }
};

struct GeneratorRecord {
    int bus = 0;  // external bus id
    double pmin = 0.0;
    double pmax = 0.0;
    double qmin = 0.0;
    double qmax = 0.0;
    CostPoly cost;
};

struct BranchRecord {
    int from = 0;  // external bus ids
    int to = 0;
    double r = 0.0;
    double x = 0.0;
    double b = 0.0;      // total line charging, pu
    double tap = 1.0;    // off-nominal ratio, 1 when absent
    double shift = 0.0;  // radians
    double smax = 0.0;   // pu; 0 means unrated

    [[nodiscard]] bool rated() const { return smax > 0.0; }
};

/// Complex bus admittance matrix, stored sparse.
using AdmittanceMatrix = Eigen::SparseMatrix<Complex, Eigen::RowMajor>;

/// Two-port admittances of one branch: I_f = yff V_f + yft V_t, I_t = ytf V_f + ytt V_t.
struct BranchAdmittance {
    Complex yff, yft, ytf, ytt;
};

/// Validated network. Bus and generator references are stored as dense
/// internal indices; `buses[i].id` keeps the external label.
class Network {
public:
    double base_mva = 100.0;
    std::vector<BusRecord> buses;
    std::vector<GeneratorRecord> gens;
    std::vector<BranchRecord> branches;

    // Derived topology, filled by finalize().
    std::vector<std::size_t> gen_bus;     // generator -> internal bus index
    std::vector<std::size_t> branch_from; // branch -> internal bus index
    std::vector<std::size_t> branch_to;
    std::size_t slack_bus = 0;
    std::size_t slack_gen = 0;
    std::vector<std::size_t> gen_buses;   // distinct buses with generators, ascending
    std::vector<BranchAdmittance> branch_y;
    AdmittanceMatrix Y;

    [[nodiscard]] std::size_t num_buses() const { return buses.size(); }
    [[nodiscard]] std::size_t num_gens() const { return gens.size(); }
    [[nodiscard]] std::size_t num_branches() const { return branches.size(); }
    [[nodiscard]] std::size_t num_rated() const;
    [[nodiscard]] std::size_t bus_index(int id) const;

    /// Validates invariants, resolves ids and builds Y. Throws InvalidTopology.
    void finalize();
};

/// Bounds on the control vector u.
///
/// Ordering: active power of every generator except the slack generator (in
/// generator-table order), then voltage magnitude at each generator bus in
/// ascending bus order (slack bus included).
struct ControlBox {
    Vector lower;
    Vector upper;
    std::size_t num_power = 0;  // leading P entries

    [[nodiscard]] std::size_t dim() const { return static_cast<std::size_t>(lower.size()); }
};

/// Parses MATPOWER v2-style case text (bus, gen, branch, gencost, baseMVA).
Network parse_case(std::string_view text);
Network parse_case_file(const std::string& path);

/// Writes a MATPOWER-compatible case text that parse_case reads back identically.
std::string serialize_case(const Network& net, std::string_view name = "case");
std::string network_json(const Network& net);

BranchAdmittance branch_admittance(const BranchRecord& br);
AdmittanceMatrix ybus(const Network& net);

/// Sum of generator costs, P_G per generator (slack included), pu.
double total_cost(const Network& net, const Vector& pg);

ControlBox control_box(const Network& net);

/// Generator indices whose P is a control, in ControlBox order.
std::vector<std::size_t> controlled_generators(const Network& net);

}  // namespace vopf
