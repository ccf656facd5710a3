#include "vopf/network.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <unordered_map>

namespace vopf {

std::size_t Network::num_rated() const {
    return static_cast<std::size_t>(
        std::count_if(branches.begin(), branches.end(), [](const BranchRecord& b) { return b.rated(); }));
}

std::size_t Network::bus_index(int id) const {
    for (std::size_t i = 0; i < buses.size(); ++i) {
        if (buses[i].id == id) return i;
    }
    throw InvalidTopology("unknown bus id " + std::to_string(id));
}

void Network::finalize() {
    if (buses.empty()) throw InvalidTopology("network has no buses");
    if (gens.empty()) throw InvalidTopology("network has no generators");
    if (branches.empty()) throw InvalidTopology("network has no branches");
    if (!(base_mva > 0.0)) throw InvalidTopology("baseMVA must be positive");

    std::unordered_map<int, std::size_t> index;
    for (std::size_t i = 0; i < buses.size(); ++i) {
        const auto& b = buses[i];
        if (!index.emplace(b.id, i).second) throw InvalidTopology("duplicate bus id " + std::to_string(b.id));
        if (!(b.vmin < b.vmax)) throw InvalidTopology("bus " + std::to_string(b.id) + ": Vmin must be below Vmax");
    }
    auto lookup = [&](int id, const char* what) {
        auto it = index.find(id);
        if (it == index.end()) throw InvalidTopology(std::string(what) + " references missing bus " + std::to_string(id));
        return it->second;
    };

    std::size_t slack_count = 0;
    for (std::size_t i = 0; i < buses.size(); ++i) {
        if (buses[i].kind == BusKind::Slack) {
            slack_bus = i;
            ++slack_count;
        }
    }
    if (slack_count != 1) throw InvalidTopology("expected exactly one slack bus, found " + std::to_string(slack_count));

    gen_bus.clear();
    for (const auto& g : gens) {
        if (!(g.pmin <= g.pmax)) throw InvalidTopology("generator at bus " + std::to_string(g.bus) + ": Pmin > Pmax");
        if (!(g.qmin <= g.qmax)) throw InvalidTopology("generator at bus " + std::to_string(g.bus) + ": Qmin > Qmax");
        for (double c : {g.cost.a2, g.cost.a1, g.cost.a0}) {
            if (!std::isfinite(c)) throw InvalidTopology("non-finite cost coefficient");
        }
        gen_bus.push_back(lookup(g.bus, "generator"));
    }

    auto slack_it = std::find(gen_bus.begin(), gen_bus.end(), slack_bus);
    if (slack_it == gen_bus.end()) throw InvalidTopology("slack bus has no generator");
    slack_gen = static_cast<std::size_t>(slack_it - gen_bus.begin());

    // Generator buses regulate voltage; the table's bus type is advisory.
    gen_buses = gen_bus;
    std::sort(gen_buses.begin(), gen_buses.end());
    gen_buses.erase(std::unique(gen_buses.begin(), gen_buses.end()), gen_buses.end());
    for (std::size_t i = 0; i < buses.size(); ++i) {
        if (i == slack_bus) continue;
        const bool has_gen = std::binary_search(gen_buses.begin(), gen_buses.end(), i);
        buses[i].kind = has_gen ? BusKind::PV : BusKind::PQ;
    }

    branch_from.clear();
    branch_to.clear();
    branch_y.clear();
    for (const auto& br : branches) {
        if (!(br.r * br.r + br.x * br.x > 0.0)) throw InvalidTopology("branch with zero impedance");
        if (!(br.tap > 0.0)) throw InvalidTopology("branch with non-positive tap ratio");
        if (br.smax < 0.0) throw InvalidTopology("negative branch rating");
        const auto f = lookup(br.from, "branch");
        const auto t = lookup(br.to, "branch");
        if (f == t) throw InvalidTopology("branch connects bus " + std::to_string(br.from) + " to itself");
        branch_from.push_back(f);
        branch_to.push_back(t);
        branch_y.push_back(branch_admittance(br));
    }

    // Single island only.
    std::vector<std::vector<std::size_t>> adj(buses.size());
    for (std::size_t l = 0; l < branches.size(); ++l) {
        adj[branch_from[l]].push_back(branch_to[l]);
        adj[branch_to[l]].push_back(branch_from[l]);
    }
    std::vector<char> seen(buses.size(), 0);
    std::queue<std::size_t> q;
    q.push(slack_bus);
    seen[slack_bus] = 1;
    std::size_t reached = 1;
    while (!q.empty()) {
        const auto u = q.front();
        q.pop();
        for (auto v : adj[u]) {
            if (!seen[v]) {
                seen[v] = 1;
                ++reached;
                q.push(v);
            }
        }
    }
    if (reached != buses.size()) throw InvalidTopology("network is not connected (multiple islands)");

    Y = ybus(*this);
}

BranchAdmittance branch_admittance(const BranchRecord& br) {
    const Complex ys = 1.0 / Complex(br.r, br.x);
    const Complex charging(0.0, br.b / 2.0);
    const Complex t = std::polar(br.tap, br.shift);
    BranchAdmittance y;
    y.yff = (ys + charging) / (br.tap * br.tap);
    y.yft = -ys / std::conj(t);
    y.ytf = -ys / t;
    y.ytt = ys + charging;
    return y;
}

AdmittanceMatrix ybus(const Network& net) {
    const auto nb = net.num_buses();
    std::vector<Eigen::Triplet<Complex>> trip;
    trip.reserve(4 * net.num_branches() + nb);
    for (std::size_t l = 0; l < net.branches.size(); ++l) {
        const auto y = branch_admittance(net.branches[l]);
        const auto f = static_cast<int>(net.bus_index(net.branches[l].from));
        const auto t = static_cast<int>(net.bus_index(net.branches[l].to));
        trip.emplace_back(f, f, y.yff);
        trip.emplace_back(f, t, y.yft);
        trip.emplace_back(t, f, y.ytf);
        trip.emplace_back(t, t, y.ytt);
    }
    for (std::size_t i = 0; i < nb; ++i) {
        const auto& b = net.buses[i];
        if (b.gs != 0.0 || b.bs != 0.0) trip.emplace_back(static_cast<int>(i), static_cast<int>(i), Complex(b.gs, b.bs));
    }
    AdmittanceMatrix y(static_cast<Eigen::Index>(nb), static_cast<Eigen::Index>(nb));
    y.setFromTriplets(trip.begin(), trip.end());
    y.makeCompressed();
    return y;
}

double total_cost(const Network& net, const Vector& pg) {
    if (static_cast<std::size_t>(pg.size()) != net.num_gens()) {
        throw DimensionMismatch("total_cost: expected " + std::to_string(net.num_gens()) + " generator outputs, got " +
                                std::to_string(pg.size()));
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < net.num_gens(); ++i) sum += net.gens[i].cost(pg[static_cast<Eigen::Index>(i)]);
    return sum;
}

std::vector<std::size_t> controlled_generators(const Network& net) {
    std::vector<std::size_t> out;
    for (std::size_t g = 0; g < net.num_gens(); ++g) {
        if (g != net.slack_gen) out.push_back(g);
    }
    return out;
}

ControlBox control_box(const Network& net) {
    const auto pgens = controlled_generators(net);
    const auto n = pgens.size() + net.gen_buses.size();
    ControlBox box;
    box.lower.resize(static_cast<Eigen::Index>(n));
    box.upper.resize(static_cast<Eigen::Index>(n));
    box.num_power = pgens.size();
    Eigen::Index k = 0;
    for (auto g : pgens) {
        box.lower[k] = net.gens[g].pmin;
        box.upper[k] = net.gens[g].pmax;
        ++k;
    }
    for (auto b : net.gen_buses) {
        box.lower[k] = net.buses[b].vmin;
        box.upper[k] = net.buses[b].vmax;
        ++k;
    }
    return box;
}

}  // namespace vopf
