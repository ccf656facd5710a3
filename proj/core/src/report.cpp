#include "vopf/optimizer.hpp"

#include "json.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace vopf {
namespace {

using nlohmann::json;
using Index = Eigen::Index;

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

std::string solution_json(const Network& net, const Solution& sol) {
    const double base = net.base_mva;
    json j;
    j["cost"] = sol.cost;
    j["category"] = to_string(sol.best.category);
    j["archive_id"] = sol.best_id;
    j["equilibrium"] = sol.equilibrium;
    j["polished"] = sol.polished;
    j["iterations"] = sol.trace.size();
    j["archive_size"] = sol.archive_size;
    j["category_counts"] = {{"I", sol.category_counts[0]}, {"II", sol.category_counts[1]}, {"III", sol.category_counts[2]}};

    const auto box = control_box(net);
    const auto pgens = controlled_generators(net);
    auto& ctrl = j["control"] = json::array();
    for (std::size_t k = 0; k < box.dim(); ++k) {
        const double u = sol.control.u[static_cast<Index>(k)];
        if (k < box.num_power) {
            const auto g = pgens[k];
            ctrl.push_back({{"name", "P gen " + std::to_string(g + 1)}, {"bus", net.gens[g].bus}, {"pu", u}, {"MW", u * base}});
        } else {
            const auto b = net.gen_buses[k - box.num_power];
            ctrl.push_back({{"name", "V bus " + std::to_string(net.buses[b].id)}, {"bus", net.buses[b].id}, {"pu", u}});
        }
    }

    const auto& s = sol.state;
    auto& buses = j["buses"] = json::array();
    for (std::size_t i = 0; i < net.num_buses(); ++i) {
        const auto ii = static_cast<Index>(i);
        buses.push_back({{"id", net.buses[i].id}, {"vm", s.vm[ii]}, {"va_deg", s.va[ii] * 180.0 / std::numbers::pi}});
    }
    auto& gens = j["gens"] = json::array();
    for (std::size_t g = 0; g < net.num_gens(); ++g) {
        const auto gi = static_cast<Index>(g);
        gens.push_back({{"bus", net.gens[g].bus},
                        {"pg_pu", s.pg[gi]},
                        {"qg_pu", s.qg[gi]},
                        {"pg_MW", s.pg[gi] * base},
                        {"qg_Mvar", s.qg[gi] * base}});
    }

    const auto rows = limit_rows(net);
    const Vector h = inequality_values(net, s.vm, s.va, s.pg, s.qg);
    auto& binding = j["binding"] = json::array();
    for (std::size_t k = 0; k < rows.size(); ++k) {
        if (h[static_cast<Index>(k)] >= -1e-6) binding.push_back(describe(net, rows[k]));
    }
    j["control_vector_pu"] = to_std(sol.control.u);
    return j.dump(2) + "\n";
}

std::string trace_csv(const std::vector<IterationTrace>& trace) {
    std::ostringstream os;
    os.precision(10);
    os << "iter,tentative_id,tentative_f_p,start_kind,k,outcome,perturbed,rank_deficient,steps,"
          "added_id_1,added_f_p_1,added_id_2,added_f_p_2,added_id_3,added_f_p_3,best_f_p,wall_time_s\n";
    for (const auto& t : trace) {
        os << t.iter << ',' << t.tentative_id << ',' << t.tentative_f_p << ',' << to_string(t.start_kind) << ',' << t.k
           << ',' << to_string(t.outcome) << ',' << int(t.perturbed) << ',' << int(t.rank_deficient) << ','
           << t.path_length;
        for (std::size_t k = 0; k < 3; ++k) os << ',' << t.added_ids[k] << ',' << t.added_f_p[k];
        os << ',' << t.best_f_p << ',' << t.wall_time << '\n';
    }
    return os.str();
}

}  // namespace vopf
