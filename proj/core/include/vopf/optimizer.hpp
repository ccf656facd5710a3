#pragma once

#include "vopf/cpgflow.hpp"
#include "vopf/geometry.hpp"
#include "vopf/problem.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace vopf {

/// Region confining an integration started from a farthest Voronoi vertex.
/// NearestSample: the cell of the sample nearest the vertex. OwnCell: the cell the
/// vertex would own if it were a sample. Unconfined: no bisectors at all.
enum class FarthestRegion { Unconfined, NearestSample, OwnCell };

struct SolverConfig {
    std::optional<std::size_t> init_samples;  // nullopt: 10(N+1)
    int iterations = 10;
    double penalty_c = 3000.0;
    std::uint64_t seed = 42;
    std::size_t cluster_max = 0;  // 0: no clustering
    FlowOptions flow;
    double perturb_radius = 0.01;
    double feas_tol = 1e-7;
    unsigned threads = 1;

    /// Known points (e.g. a local optimum) placed first in the archive.
    std::vector<ControlPoint> injected;
    /// Random seeds are drawn from this sub-box of [0,1]^N; empty means the whole box.
    Vector sample_lo, sample_hi;
    /// Random seeds failing this are redrawn (up to 1000 times each).
    std::function<bool(const SampleRecord&)> accept;
    /// Run the final unconstrained integration when the best sample is not an equilibrium.
    bool polish = true;
    FarthestRegion farthest_region = FarthestRegion::Unconfined;
};

/// Checks the documented invariants; throws Error.
void validate(const SolverConfig& config);

enum class StartKind { TentativeOptimum, KthFarthest };

struct IterationTrace {
    int iter = 0;
    double tentative_f_p = 0.0;
    std::size_t tentative_id = 0;
    StartKind start_kind = StartKind::TentativeOptimum;
    std::size_t k = 0;  // farthest rank for KthFarthest
    OutcomeKind outcome = OutcomeKind::Stalled;
    bool perturbed = false;
    bool rank_deficient = false;
    int path_length = 0;
    std::array<std::size_t, 3> added_ids{};
    std::array<double, 3> added_f_p{};
    double best_f_p = 0.0;  // after the iteration
    double wall_time = 0.0; // seconds
};

struct SolverState {
    std::vector<SampleRecord> archive;
    ClusterPartition partition;
    std::size_t tentative = 0;
    std::vector<IterationTrace> trace;
    std::vector<Vector> used_starts;  // normalized controls of every integration start
};

struct Solution {
    SampleRecord best;
    std::size_t best_id = 0;  // archive id the result came from
    double cost = 0.0;
    ControlPoint control;
    SystemState state;
    bool equilibrium = false;
    bool polished = false;
    std::vector<IterationTrace> trace;
    std::array<std::size_t, 3> category_counts{};  // I, II, III
    std::size_t archive_size = 0;
};

/// No category III sample was found; `best_infeasible` is the lowest-f_p category II record.
class NoFeasibleSample : public Error {
public:
    NoFeasibleSample(const std::string& what, std::optional<SampleRecord> best)
        : Error(what), best_infeasible(std::move(best)) {}
    std::optional<SampleRecord> best_infeasible;
};

std::vector<SampleRecord> seed_samples(const Network& net, const SolverConfig& config);

/// Archive from seed_samples with the tentative optimum set.
SolverState initial_state(const Network& net, const SolverConfig& config);

/// One outer iteration. Throws GeometryFailure, in which case no state is changed.
SolverState step(const Network& net, const SolverState& state, const SolverConfig& config);

using IterationObserver = std::function<void(const SolverState&)>;
Solution run(const Network& net, const SolverConfig& config, const IterationObserver& observer = {});
/// Continues from a prepared state (the iteration budget counts from the state's trace length).
Solution run_from(const Network& net, SolverState state, const SolverConfig& config,
                  const IterationObserver& observer = {});

/// Best category-III record (argmin f_p, ties by lowest id), or nullopt.
std::optional<std::size_t> best_feasible(const std::vector<SampleRecord>& archive);
std::size_t tentative_of(const std::vector<SampleRecord>& archive);

const char* to_string(StartKind k);

// Outputs.
std::string solution_json(const Network& net, const Solution& sol);
std::string trace_csv(const std::vector<IterationTrace>& trace);

}  // namespace vopf
