#pragma once

#include "vopf/optimizer.hpp"

#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace vopf::repro {

struct Check {
    std::string name;
    double measured = 0.0;
    std::string target;
    bool pass = false;
};

struct ScenarioOptions {
    std::string data_dir;
    unsigned threads = 1;
    std::ostream* log = nullptr;  // one line per iteration when set
};

struct ScenarioReport {
    std::string name;
    std::vector<Check> checks;
    std::optional<Solution> solution;
    double wall_time = 0.0;

    [[nodiscard]] bool passed() const;
};

const std::vector<std::string>& scenario_names();

/// Throws std::invalid_argument for names outside scenario_names().
ScenarioReport run_scenario(const std::string& name, const ScenarioOptions& opts);

/// Local optimum reached by integrating the flow, without a region, from the
/// power flow at `start`.
struct LocalOptimum {
    ControlPoint control;
    double cost = 0.0;
    OutcomeKind outcome = OutcomeKind::Stalled;
};
LocalOptimum local_optimum(const Network& net, const ControlPoint& start, const FlowOptions& flow = {});

/// Generator buses at 1 pu and every controlled P at its load-proportional share, clamped to its limits.
ControlPoint flat_start(const Network& net);

/// The 9-bus seeding: the local optimum near the published 3398.03 point plus
/// random samples that all cost more.
SolverConfig case9_config(const Network& net, const LocalOptimum& s_local, double penalty = 3000.0);
LocalOptimum case9_local(const Network& net);

/// --cluster-max default: off below N = 20, 25 up to N = 60, 110 beyond.
std::size_t default_cluster_max(std::size_t dim);

/// What a tracked run saw after each iteration.
struct TrackedRun {
    Solution solution;
    std::vector<double> best_cost;            // archive best category-III cost (infinity while none)
    std::vector<ControlPoint> added;          // added points in archive order
    std::vector<std::size_t> added_ids;
    double wall_time = 0.0;
};
TrackedRun run_tracked(const Network& net, const SolverConfig& cfg, std::ostream* log = nullptr);

/// Every change in the per-iteration best cost is a decrease.
bool never_worsens(const std::vector<double>& best);

std::string format_report(const ScenarioReport& report);

}  // namespace vopf::repro
