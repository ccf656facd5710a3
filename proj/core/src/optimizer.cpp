#include "vopf/optimizer.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <random>
#include <thread>

namespace vopf {
namespace {

using Index = Eigen::Index;

constexpr double kSameStart = 1e-9;    // normalized distance for "already used" starts
constexpr double kSameEndpoint = 1e-6; // endpoint this close to its start counts as no progress

template <typename F>
void parallel_for(std::size_t n, unsigned threads, F&& fn) {
    const auto workers = static_cast<std::size_t>(std::max(1u, threads));
    if (workers == 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < std::min(workers, n); ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

void refresh_sentinel(std::vector<SampleRecord>& archive) {
    const double s = category_one_sentinel(archive);
    for (auto& r : archive) {
        if (r.category == Category::I) r.f_p = s;
    }
}

ClassifyOptions classify_options(const SolverConfig& cfg) {
    ClassifyOptions o;
    o.penalty_c = cfg.penalty_c;
    o.feas_tol = cfg.feas_tol;
    return o;
}

std::vector<SampleRecord> classify_all(const Network& net, const std::vector<ControlPoint>& controls,
                                       const SolverConfig& cfg) {
    std::vector<SampleRecord> out(controls.size());
    const auto opts = classify_options(cfg);
    parallel_for(controls.size(), cfg.threads, [&](std::size_t i) { out[i] = classify(net, controls[i], opts); });
    return out;
}

// State used to lift a start without a converged power flow.
SystemState flat_state(const Network& net, const ControlPoint& control) {
    SystemState s;
    const auto nb = static_cast<Index>(net.num_buses());
    s.vm = Vector::Ones(nb);
    s.va = Vector::Zero(nb);
    s.pg = Vector::Zero(static_cast<Index>(net.num_gens()));
    s.qg = Vector::Zero(static_cast<Index>(net.num_gens()));
    const auto pgens = controlled_generators(net);
    double load = 0.0;
    for (const auto& b : net.buses) load += b.pd;
    double others = 0.0;
    for (std::size_t k = 0; k < pgens.size(); ++k) {
        s.pg[static_cast<Index>(pgens[k])] = control.u[static_cast<Index>(k)];
        others += control.u[static_cast<Index>(k)];
    }
    s.pg[static_cast<Index>(net.slack_gen)] = load - others;
    for (std::size_t k = 0; k < net.gen_buses.size(); ++k) {
        s.vm[static_cast<Index>(net.gen_buses[k])] = control.u[static_cast<Index>(pgens.size() + k)];
    }
    return s;
}

FullPoint lift_record(const Network& net, const SampleRecord& rec) {
    if (rec.state && rec.state->converged) return lift(net, rec.control, *rec.state);
    if (rec.state) {
        const auto& vm = rec.state->vm;
        // A wildly diverged Newton iterate is a worse start than the flat profile.
        if ((vm.array() > 0.2).all() && (vm.array() < 2.0).all()) return lift_unchecked(net, *rec.state);
    }
    return lift_unchecked(net, flat_state(net, rec.control));
}

struct Geometry {
    std::vector<Vector> z;                    // per archive id
    std::vector<NormalizedPoint> samples;     // distinct locations, archive ids
    ClusterPartition partition;               // over `samples` positions
    std::vector<std::vector<std::size_t>> cluster_ids;  // archive ids per cluster
    std::vector<Triangulation> tris;
    std::vector<std::size_t> cluster_of;      // per archive id (duplicates map to their original's cluster)
    std::vector<std::size_t> representative;  // per archive id, the archive id kept in `samples`
};

Vector clamp01(const Vector& z) { return z.cwiseMax(0.0).cwiseMin(1.0); }

Geometry build_geometry(const std::vector<SampleRecord>& archive, const ControlBox& box, const SolverConfig& cfg,
                        int iter) {
    Geometry geo;
    geo.z.reserve(archive.size());
    geo.representative.resize(archive.size());
    for (std::size_t i = 0; i < archive.size(); ++i) {
        geo.z.push_back(normalize(box, archive[i].control, i, 1e-6).z);
        geo.representative[i] = i;
        for (const auto& s : geo.samples) {
            // Endpoints that reconverge to a known optimum land within rounding of it.
            if ((s.z - geo.z[i]).norm() <= 1e-8) {
                geo.representative[i] = s.id;
                break;
            }
        }
        if (geo.representative[i] == i) geo.samples.push_back({geo.z[i], i});
    }

    const auto seed = cfg.seed ^ (0x5851f42d4c957f2dULL * static_cast<std::uint64_t>(iter));
    if (cfg.cluster_max > 0 && geo.samples.size() > cfg.cluster_max) {
        geo.partition = partition(geo.samples, cfg.cluster_max, seed);
    } else {
        geo.partition.assignment.assign(geo.samples.size(), 0);
        geo.partition.centroids.assign(1, Vector::Zero(static_cast<Index>(box.dim())));
        geo.partition.max_size = cfg.cluster_max;
    }
    const auto nc = geo.partition.num_clusters();
    geo.cluster_ids.assign(nc, {});
    std::vector<std::size_t> cluster_of_sample(archive.size(), 0);
    for (std::size_t p = 0; p < geo.samples.size(); ++p) {
        geo.cluster_ids[geo.partition.assignment[p]].push_back(geo.samples[p].id);
        cluster_of_sample[geo.samples[p].id] = geo.partition.assignment[p];
    }
    geo.cluster_of.resize(archive.size());
    for (std::size_t i = 0; i < archive.size(); ++i) geo.cluster_of[i] = cluster_of_sample[geo.representative[i]];

    geo.tris.resize(nc);
    DelaunayOptions dopts;
    dopts.seed = cfg.seed;
    auto triangulate = [&](std::size_t c) {
        std::vector<NormalizedPoint> pts;
        pts.reserve(geo.cluster_ids[c].size());
        for (auto id : geo.cluster_ids[c]) pts.push_back({geo.z[id], id});
        geo.tris[c] = delaunay(pts, dopts);
    };
    std::vector<char> flat(nc, 0);
    parallel_for(nc, cfg.threads, [&](std::size_t c) {
        try {
            triangulate(c);
        } catch (const DegenerateInput&) {
            if (nc == 1) throw;
            flat[c] = 1;
        }
    });

    // A cluster made mostly of earlier added triples can be flat. Its members move
    // one by one to the nearest full-dimensional cluster, which stays near the cap.
    if (std::find(flat.begin(), flat.end(), 1) != flat.end()) {
        std::vector<std::size_t> keep;
        for (std::size_t c = 0; c < nc; ++c)
            if (!flat[c]) keep.push_back(c);
        if (keep.empty()) throw DegenerateInput("every cluster is flat");
        std::vector<std::size_t> remap(nc, 0);
        for (std::size_t k = 0; k < keep.size(); ++k) remap[keep[k]] = k;
        std::vector<char> touched(nc, 0);
        for (std::size_t p = 0; p < geo.samples.size(); ++p) {
            auto& a = geo.partition.assignment[p];
            if (!flat[a]) continue;
            std::size_t into = keep.front();
            double best = std::numeric_limits<double>::infinity();
            for (auto o : keep) {
                const double d = (geo.partition.centroids[o] - geo.samples[p].z).squaredNorm();
                if (d < best) best = d, into = o;
            }
            a = into;
            touched[into] = 1;
        }
        std::vector<Triangulation> tris;
        std::vector<Vector> centroids;
        for (auto c : keep) {
            tris.push_back(std::move(geo.tris[c]));
            centroids.push_back(geo.partition.centroids[c]);
        }
        geo.tris = std::move(tris);
        geo.partition.centroids = std::move(centroids);
        for (auto& a : geo.partition.assignment) a = remap[a];
        geo.cluster_ids.assign(keep.size(), {});
        for (std::size_t p = 0; p < geo.samples.size(); ++p) {
            geo.cluster_ids[geo.partition.assignment[p]].push_back(geo.samples[p].id);
            cluster_of_sample[geo.samples[p].id] = geo.partition.assignment[p];
        }
        for (std::size_t i = 0; i < archive.size(); ++i) geo.cluster_of[i] = cluster_of_sample[geo.representative[i]];
        std::vector<std::size_t> redo;
        for (std::size_t k = 0; k < keep.size(); ++k)
            if (touched[keep[k]]) redo.push_back(k);
        parallel_for(redo.size(), cfg.threads, [&](std::size_t r) { triangulate(redo[r]); });
    }
    return geo;
}

HalfspaceSet region_of_sample(const Geometry& geo, std::size_t id) {
    const auto rep = geo.representative[id];
    const auto c = geo.cluster_of[rep];
    std::vector<NormalizedPoint> pts;
    for (auto m : geo.cluster_ids[c]) pts.push_back({geo.z[m], m});
    // The box bounds are also limit rows of g, so the flow itself enforces them.
    auto region = candidate_region(pts, rep, geo.tris[c], false);
    if (geo.cluster_ids.size() > 1) append_cross_cluster(region, geo.samples, rep, geo.cluster_ids[c]);
    return region;
}

Vector perturb_within(const Vector& center, const HalfspaceSet& region, double radius, std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const auto n = center.size();
    for (int halvings = 0; halvings < 60; ++halvings) {
        for (int tries = 0; tries < 100; ++tries) {
            Vector dir(n);
            for (Index k = 0; k < n; ++k) dir[k] = gauss(rng);
            const double len = dir.norm();
            if (!(len > 0.0)) continue;
            const double r = radius * std::pow(unif(rng), 1.0 / static_cast<double>(n));
            const Vector cand = center + (r / len) * dir;
            if (region.contains(cand) && (cand.array() >= 0.0).all() && (cand.array() <= 1.0).all()) return cand;
        }
        radius *= 0.5;
    }
    return center;
}

bool used_before(const std::vector<Vector>& used, const Vector& z) {
    return std::any_of(used.begin(), used.end(), [&](const Vector& u) { return (u - z).norm() <= kSameStart; });
}

}  // namespace

void validate(const SolverConfig& cfg) {
    if (cfg.iterations < 0) throw Error("iterations must be non-negative");
    if (!(cfg.penalty_c > 0.0)) throw Error("penalty_c must be positive");
    if (!(cfg.perturb_radius > 0.0 && cfg.perturb_radius <= 0.05)) throw Error("perturb_radius must lie in (0, 0.05]");
    if (cfg.sample_lo.size() != cfg.sample_hi.size()) throw Error("sample_lo and sample_hi differ in size");
    if (!(cfg.flow.h_min <= cfg.flow.h_init && cfg.flow.h_init <= cfg.flow.h_max)) {
        throw Error("flow step sizes must satisfy h_min <= h_init <= h_max");
    }
    if (!(cfg.flow.eq_tol > 0.0 && cfg.flow.t_max > 0.0 && cfg.flow.boundary_tol > 0.0)) {
        throw Error("flow tolerances must be positive");
    }
}

std::size_t tentative_of(const std::vector<SampleRecord>& archive) {
    std::size_t arg = 0;
    for (std::size_t i = 1; i < archive.size(); ++i) {
        if (archive[i].f_p < archive[arg].f_p) arg = i;
    }
    return arg;
}

std::optional<std::size_t> best_feasible(const std::vector<SampleRecord>& archive) {
    std::optional<std::size_t> arg;
    for (std::size_t i = 0; i < archive.size(); ++i) {
        if (archive[i].category != Category::III) continue;
        if (!arg || archive[i].f_p < archive[*arg].f_p) arg = i;
    }
    return arg;
}

const char* to_string(StartKind k) {
    return k == StartKind::TentativeOptimum ? "TentativeOptimum" : "KthFarthest";
}

std::vector<SampleRecord> seed_samples(const Network& net, const SolverConfig& cfg) {
    validate(cfg);
    const auto box = control_box(net);
    const auto n = static_cast<Index>(box.dim());
    const std::size_t total = cfg.init_samples.value_or(10 * (box.dim() + 1));

    auto archive = classify_all(net, cfg.injected, cfg);

    Vector lo = cfg.sample_lo.size() ? cfg.sample_lo : Vector::Zero(n);
    Vector hi = cfg.sample_hi.size() ? cfg.sample_hi : Vector::Ones(n);
    if (lo.size() != n) throw DimensionMismatch("sampling sub-box dimension does not match the control box");

    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::size_t rounds = 0;
    while (archive.size() < total) {
        if (++rounds > 1000) throw Error("seed_samples: acceptance filter rejected too many draws");
        std::vector<ControlPoint> draws;
        for (std::size_t k = archive.size(); k < total; ++k) {
            Vector z(n);
            for (Index j = 0; j < n; ++j) z[j] = lo[j] + (hi[j] - lo[j]) * unif(rng);
            draws.push_back(denormalize(box, z));
        }
        auto recs = classify_all(net, draws, cfg);
        for (auto& r : recs) {
            if (archive.size() >= total) break;
            if (cfg.accept && !cfg.accept(r)) continue;
            archive.push_back(std::move(r));
        }
    }
    refresh_sentinel(archive);
    return archive;
}

SolverState initial_state(const Network& net, const SolverConfig& cfg) {
    SolverState st;
    st.archive = seed_samples(net, cfg);
    if (st.archive.empty()) throw Error("initial archive is empty");
    st.tentative = tentative_of(st.archive);
    return st;
}

SolverState step(const Network& net, const SolverState& in, const SolverConfig& cfg) {
    const auto clock0 = std::chrono::steady_clock::now();
    SolverState st = in;
    const auto box = control_box(net);
    const OpfFlowSystem sys(net);
    const int iter = static_cast<int>(st.trace.size()) + 1;

    Geometry geo;
    std::vector<RankedVertex> ranked;
    try {
        geo = build_geometry(st.archive, box, cfg, iter);
        std::vector<const Triangulation*> tris;
        for (const auto& t : geo.tris) tris.push_back(&t);
        ranked = ranked_vertices(tris, geo.samples);
        if (ranked.empty()) throw RankOutOfRange("no Voronoi vertices");
    } catch (const GeometryFailure&) {
        throw;
    } catch (const Error& e) {
        throw GeometryFailure("iteration " + std::to_string(iter) + ": " + e.what());
    }

    IterationTrace tr;
    tr.iter = iter;
    tr.tentative_id = st.tentative;
    tr.tentative_f_p = st.archive[st.tentative].f_p;

    std::mt19937_64 rng(cfg.seed * 0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(iter));

    auto run_flow = [&](const FullPoint& x0, const HalfspaceSet& region) {
        try {
            return integrate(sys, x0.x, region, cfg.flow);
        } catch (const RankDeficient& e) {
            tr.rank_deficient = true;
            IntegrationOutcome out;
            out.kind = OutcomeKind::Stalled;
            out.endpoint.x = e.point.size() == x0.x.size() ? e.point : x0.x;
            return out;
        }
    };

    Vector z_end;
    auto& tent = st.archive[st.tentative];
    if (!tent.used_as_initial) {
        tr.start_kind = StartKind::TentativeOptimum;
        HalfspaceSet region;
        try {
            region = region_of_sample(geo, st.tentative);
        } catch (const Error& e) {
            throw GeometryFailure("iteration " + std::to_string(iter) + ": " + e.what());
        }
        const Vector z_start = geo.z[st.tentative];
        tent.used_as_initial = true;
        st.used_starts.push_back(z_start);
        const auto out = run_flow(lift_record(net, tent), region);
        tr.outcome = out.kind;
        tr.path_length = out.path_length;
        z_end = clamp01(sys.region_coords(out.endpoint.x));
        const bool stuck = out.kind == OutcomeKind::AlreadyStable ||
                           (out.kind == OutcomeKind::Converged && (z_end - z_start).norm() <= kSameEndpoint);
        if (stuck) {
            tr.perturbed = true;
            z_end = perturb_within(z_start, region, cfg.perturb_radius, rng);
        }
    } else {
        tr.start_kind = StartKind::KthFarthest;
        std::size_t pick = ranked.size();
        for (std::size_t r = std::min<std::size_t>(1, ranked.size() - 1); r < ranked.size(); ++r) {
            if (!used_before(st.used_starts, ranked[r].clamped)) {
                pick = r;
                break;
            }
        }
        if (pick == ranked.size()) {
            throw GeometryFailure("iteration " + std::to_string(iter) + ": every Voronoi vertex was already used as a start");
        }
        tr.k = pick + 1;
        const Vector q = ranked[pick].clamped;
        st.used_starts.push_back(q);
        const auto start = classify(net, denormalize(box, q), classify_options(cfg));
        HalfspaceSet region;
        if (cfg.farthest_region == FarthestRegion::OwnCell) {
            region = point_region(geo.samples, q, false);
        } else if (cfg.farthest_region == FarthestRegion::NearestSample) {
            std::size_t near = geo.samples.front().id;
            double best = std::numeric_limits<double>::infinity();
            for (const auto& s : geo.samples) {
                if (const double d = (s.z - q).norm(); d < best) {
                    best = d;
                    near = s.id;
                }
            }
            region = region_of_sample(geo, near);
        }
        const auto out = run_flow(lift_record(net, start), region);
        tr.outcome = out.kind;
        tr.path_length = out.path_length;
        z_end = clamp01(sys.region_coords(out.endpoint.x));
    }

    const Vector z_far = ranked.front().clamped;
    const Vector z_mid = 0.5 * (z_end + z_far);
    const std::vector<ControlPoint> added{denormalize(box, z_end), denormalize(box, z_far), denormalize(box, z_mid)};
    auto recs = classify_all(net, added, cfg);
    for (std::size_t k = 0; k < 3; ++k) {
        tr.added_ids[k] = st.archive.size();
        st.archive.push_back(std::move(recs[k]));
    }
    refresh_sentinel(st.archive);
    for (std::size_t k = 0; k < 3; ++k) tr.added_f_p[k] = st.archive[tr.added_ids[k]].f_p;
    st.tentative = tentative_of(st.archive);
    st.partition = std::move(geo.partition);
    tr.best_f_p = st.archive[st.tentative].f_p;
    tr.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - clock0).count();
    st.trace.push_back(tr);
    return st;
}

Solution run_from(const Network& net, SolverState st, const SolverConfig& cfg, const IterationObserver& observer) {
    validate(cfg);
    while (static_cast<int>(st.trace.size()) < cfg.iterations) {
        st = step(net, st, cfg);
        if (observer) observer(st);
    }

    Solution sol;
    sol.trace = st.trace;
    sol.archive_size = st.archive.size();
    for (const auto& r : st.archive) ++sol.category_counts[static_cast<std::size_t>(r.category)];

    const auto best = best_feasible(st.archive);
    if (!best) {
        std::optional<SampleRecord> diag;
        for (const auto& r : st.archive) {
            if (r.category == Category::II && (!diag || r.f_p < diag->f_p)) diag = r;
        }
        throw NoFeasibleSample("no fully feasible sample in an archive of " + std::to_string(st.archive.size()), diag);
    }
    sol.best_id = *best;
    sol.best = st.archive[*best];

    const OpfFlowSystem sys(net);
    const double scale = cfg.flow.cost_scale > 0.0 ? cfg.flow.cost_scale : auto_cost_scale(net);
    auto equilibrium_at = [&](const SampleRecord& r) {
        try {
            return is_equilibrium(sys, lift(net, r.control, *r.state).x, cfg.flow.eq_tol, scale, cfg.flow.feas_tol);
        } catch (const RankDeficient&) {
            return false;
        }
    };
    sol.equilibrium = equilibrium_at(sol.best);

    if (!sol.equilibrium && cfg.polish) {
        try {
            const auto out = integrate(sys, lift(net, sol.best.control, *sol.best.state).x, HalfspaceSet{}, cfg.flow);
            const bool settled = out.kind == OutcomeKind::Converged || out.kind == OutcomeKind::AlreadyStable;
            auto rec = classify(net, control_part(net, out.endpoint), classify_options(cfg));
            // Re-deriving slacks from a fresh power flow can put an exact equilibrium a hair
            // over eq_tol, so a settled flow from the best point also counts.
            const double slop = 1e-9 * std::max(1.0, std::abs(sol.best.f_p));
            if (rec.category == Category::III && rec.f_p <= sol.best.f_p + slop) {
                if (rec.f_p < sol.best.f_p - slop) {
                    sol.best = std::move(rec);
                    sol.polished = true;
                }
                sol.equilibrium = settled || equilibrium_at(sol.best);
            }
        } catch (const RankDeficient&) {
            // keep the archive best
        }
    }
    sol.cost = sol.best.f;
    sol.control = sol.best.control;
    sol.state = *sol.best.state;
    return sol;
}

Solution run(const Network& net, const SolverConfig& cfg, const IterationObserver& observer) {
    return run_from(net, initial_state(net, cfg), cfg, observer);
}

}  // namespace vopf
