#include "vopf/geometry.hpp"

#include "quickhull.hpp"

#include "json.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <unordered_map>

namespace vopf {
namespace {

using Index = Eigen::Index;

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Joggle depends only on (seed, sample id), so it is independent of input order.
double joggle_unit(std::uint64_t seed, std::size_t id) {
    const auto bits = splitmix(splitmix(seed) ^ (static_cast<std::uint64_t>(id) * 0xd1b54a32d192ed03ULL));
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

// |det| of the edge matrix over the product of edge lengths; 1 for orthogonal edges.
double hadamard_ratio(const Eigen::MatrixXd& edges) {
    double prod = 1.0;
    for (Index k = 0; k < edges.rows(); ++k) {
        const double len = edges.row(k).norm();
        if (!(len > 0.0)) return 0.0;
        prod *= len;
    }
    return std::abs(edges.partialPivLu().determinant()) / prod;
}

std::unordered_map<std::size_t, std::size_t> position_of(const std::vector<NormalizedPoint>& samples) {
    std::unordered_map<std::size_t, std::size_t> pos;
    pos.reserve(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) pos.emplace(samples[i].id, i);
    return pos;
}

Halfspace bisector(const Vector& own, const Vector& other) {
    return {other - own, 0.5 * (other.squaredNorm() - own.squaredNorm())};
}

void append_box(HalfspaceSet& set, std::size_t dim) {
    for (std::size_t k = 0; k < dim; ++k) {
        Vector e = Vector::Zero(static_cast<Index>(dim));
        e[static_cast<Index>(k)] = 1.0;
        set.faces.push_back({e, 1.0});
        set.faces.push_back({-e, 0.0});
    }
}

}  // namespace

NormalizedPoint normalize(const ControlBox& box, const ControlPoint& u, std::size_t id, double tol) {
    if (u.u.size() != box.lower.size()) throw DimensionMismatch("normalize: control dimension does not match the box");
    NormalizedPoint p;
    p.id = id;
    p.z.resize(u.u.size());
    for (Index k = 0; k < u.u.size(); ++k) {
        const double span = box.upper[k] - box.lower[k];
        if (!(span > 0.0)) throw DegenerateInput("control box has a zero-width coordinate " + std::to_string(k));
        double z = (u.u[k] - box.lower[k]) / span;
        if (!std::isfinite(z) || z < -tol || z > 1.0 + tol) {
            throw OutOfBox("control coordinate " + std::to_string(k) + " = " + std::to_string(u.u[k]) + " outside [" +
                           std::to_string(box.lower[k]) + ", " + std::to_string(box.upper[k]) + "]");
        }
        p.z[k] = std::clamp(z, 0.0, 1.0);
    }
    return p;
}

ControlPoint denormalize(const ControlBox& box, const Vector& z) {
    if (z.size() != box.lower.size()) throw DimensionMismatch("denormalize: dimension does not match the box");
    ControlPoint u;
    u.u = box.lower.array() + z.array() * (box.upper - box.lower).array();
    return u;
}

bool HalfspaceSet::contains(const Vector& z, double tol) const { return max_violation(z) <= tol; }

double HalfspaceSet::max_violation(const Vector& z) const {
    double worst = -std::numeric_limits<double>::infinity();
    for (const auto& f : faces) worst = std::max(worst, f.normal.dot(z) - f.offset);
    return worst;
}

HalfspaceSet unit_box(std::size_t dim) {
    HalfspaceSet s;
    append_box(s, dim);
    return s;
}

std::vector<std::size_t> Triangulation::sample_neighbors(std::size_t id) const {
    std::set<std::size_t> out;
    for (const auto& s : simplices) {
        if (!std::binary_search(s.vertices.begin(), s.vertices.end(), id)) continue;
        for (auto v : s.vertices) {
            if (v != id) out.insert(v);
        }
    }
    return {out.begin(), out.end()};
}

bool Triangulation::contains_sample(std::size_t id) const {
    return std::any_of(simplices.begin(), simplices.end(), [&](const Simplex& s) {
        return std::binary_search(s.vertices.begin(), s.vertices.end(), id);
    });
}

Sphere circumcenter(const std::vector<Vector>& vertices, double sliver_ratio) {
    if (vertices.empty()) throw DegenerateSimplex("circumcenter of an empty vertex set");
    const auto n = vertices.front().size();
    if (static_cast<Index>(vertices.size()) != n + 1) {
        throw DimensionMismatch("circumcenter needs N+1 vertices in R^N");
    }
    Eigen::MatrixXd edges(n, n);
    Vector rhs(n);
    for (Index k = 0; k < n; ++k) {
        edges.row(k) = (vertices[static_cast<std::size_t>(k + 1)] - vertices[0]).transpose();
        rhs[k] = 0.5 * edges.row(k).squaredNorm();
    }
    if (hadamard_ratio(edges) < sliver_ratio) throw DegenerateSimplex("simplex is degenerate (sliver)");
    const Vector offset = edges.partialPivLu().solve(rhs);
    Sphere s;
    s.center = vertices[0] + offset;
    s.radius = offset.norm();
    return s;
}

Triangulation delaunay(const std::vector<NormalizedPoint>& points, const DelaunayOptions& opts) {
    if (points.empty()) throw DegenerateInput("delaunay: no points");
    const auto n = static_cast<std::size_t>(points.front().z.size());
    if (n == 0) throw DegenerateInput("delaunay: zero-dimensional points");
    if (points.size() < n + 1) {
        throw DegenerateInput("delaunay: " + std::to_string(points.size()) + " points cannot span " + std::to_string(n) +
                              " dimensions");
    }

    Triangulation tri;
    tri.dim = n;

    if (n == 1) {
        // A sorted chain; the hull machinery needs d >= 2 in the lifted space anyway, but 1-D is simpler direct.
        std::vector<std::size_t> order(points.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return points[a].z[0] < points[b].z[0] || (points[a].z[0] == points[b].z[0] && points[a].id < points[b].id);
        });
        for (std::size_t k = 0; k + 1 < order.size(); ++k) {
            const auto& a = points[order[k]];
            const auto& b = points[order[k + 1]];
            if (!(b.z[0] - a.z[0] > 0.0)) continue;
            Simplex s;
            s.vertices = {std::min(a.id, b.id), std::max(a.id, b.id)};
            s.center = 0.5 * (a.z + b.z);
            s.radius = 0.5 * (b.z[0] - a.z[0]);
            s.has_center = true;
            tri.simplices.push_back(std::move(s));
        }
        if (tri.simplices.empty()) throw DegenerateInput("delaunay: all points coincide");
        tri.adjacency.resize(tri.simplices.size());
        for (std::size_t k = 0; k + 1 < tri.simplices.size(); ++k) {
            tri.adjacency[k].push_back(k + 1);
            tri.adjacency[k + 1].push_back(k);
        }
        return tri;
    }

    if (points.size() == n + 1) {
        // Too few points for a lifted hull: the triangulation is the one simplex.
        std::vector<Vector> verts;
        Simplex s;
        for (const auto& p : points) {
            verts.push_back(p.z);
            s.vertices.push_back(p.id);
        }
        std::sort(s.vertices.begin(), s.vertices.end());
        Eigen::MatrixXd edges(static_cast<Index>(n), static_cast<Index>(n));
        for (std::size_t k = 1; k < verts.size(); ++k) edges.row(static_cast<Index>(k - 1)) = (verts[k] - verts[0]).transpose();
        // A flat set (the added points of one iteration are collinear) keeps its
        // neighbour structure but contributes no Voronoi vertex.
        if (hadamard_ratio(edges) >= opts.sliver_ratio) {
            const auto sphere = circumcenter(verts, opts.sliver_ratio);
            s.center = sphere.center;
            s.radius = sphere.radius;
            s.has_center = true;
        }
        tri.simplices.push_back(std::move(s));
        tri.adjacency.resize(1);
        return tri;
    }

    std::vector<Vector> lifted;
    lifted.reserve(points.size());
    for (const auto& p : points) {
        Vector l(static_cast<Index>(n + 1));
        l.head(static_cast<Index>(n)) = p.z;
        l[static_cast<Index>(n)] = p.z.squaredNorm() + opts.joggle * joggle_unit(opts.seed, p.id);
        lifted.push_back(std::move(l));
    }
    const auto hull = detail::convex_hull(lifted);

    std::vector<long> simplex_of(hull.size(), -1);
    for (std::size_t f = 0; f < hull.size(); ++f) {
        const auto& facet = hull[f];
        const double down = facet.normal[static_cast<Index>(n)];
        if (!(down < 0.0)) continue;

        std::vector<Vector> verts;
        verts.reserve(facet.vertices.size());
        for (auto v : facet.vertices) verts.push_back(points[v].z);
        Eigen::MatrixXd edges(static_cast<Index>(n), static_cast<Index>(n));
        for (std::size_t k = 1; k < verts.size(); ++k) edges.row(static_cast<Index>(k - 1)) = (verts[k] - verts[0]).transpose();
        const double ratio = hadamard_ratio(edges);
        // Near-vertical hull facets over coplanar boundary points project to flat simplices.
        if (ratio < opts.sliver_ratio && down > -1e-6) continue;

        Simplex s;
        for (auto v : facet.vertices) s.vertices.push_back(points[v].id);
        std::sort(s.vertices.begin(), s.vertices.end());
        if (ratio >= opts.sliver_ratio) {
            const auto sphere = circumcenter(verts, opts.sliver_ratio);
            s.center = sphere.center;
            s.radius = sphere.radius;
            s.has_center = true;
        }
        simplex_of[f] = static_cast<long>(tri.simplices.size());
        tri.simplices.push_back(std::move(s));
    }
    if (tri.simplices.empty()) throw DegenerateInput("delaunay: no lower hull facets");

    tri.adjacency.resize(tri.simplices.size());
    for (std::size_t f = 0; f < hull.size(); ++f) {
        if (simplex_of[f] < 0) continue;
        for (auto nb : hull[f].neighbors) {
            if (simplex_of[nb] >= 0) tri.adjacency[static_cast<std::size_t>(simplex_of[f])].push_back(static_cast<std::size_t>(simplex_of[nb]));
        }
        auto& adj = tri.adjacency[static_cast<std::size_t>(simplex_of[f])];
        std::sort(adj.begin(), adj.end());
    }
    return tri;
}

double nearest_distance(const Vector& z, const std::vector<NormalizedPoint>& samples) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& s : samples) best = std::min(best, (s.z - z).squaredNorm());
    return std::sqrt(best);
}

namespace {

// Up to this dimension the 2N+1 copies needed by boundary_vertices are cheap.
constexpr std::size_t kReflectMaxDim = 3;

// Vertices of the Voronoi diagram clipped to the unit box that lie on the box
// boundary. Mirroring every sample across each face turns the face into a
// bisector, so those vertices become ordinary Voronoi vertices of the larger set.
std::vector<RankedVertex> boundary_vertices(const std::vector<NormalizedPoint>& samples) {
    if (samples.empty()) return {};
    const auto dim = static_cast<std::size_t>(samples.front().z.size());
    std::size_t stride = 1;
    for (const auto& s : samples) stride = std::max(stride, s.id + 1);

    std::vector<NormalizedPoint> pts(samples);
    for (std::size_t f = 0; f < 2 * dim; ++f) {
        const auto axis = static_cast<Index>(f / 2);
        for (const auto& s : samples) {
            NormalizedPoint m{s.z, (f + 1) * stride + s.id};
            m.z[axis] = f % 2 == 0 ? -s.z[axis] : 2.0 - s.z[axis];
            if (std::abs(m.z[axis] - s.z[axis]) > 1e-12) pts.push_back(std::move(m));
        }
    }
    const auto tri = delaunay(pts);

    constexpr double tol = 1e-9;
    std::vector<RankedVertex> out;
    for (const auto& s : tri.simplices) {
        if (!s.has_center) continue;
        const auto& c = s.center;
        if (c.minCoeff() < -tol || c.maxCoeff() > 1.0 + tol) continue;
        if (c.minCoeff() > tol && c.maxCoeff() < 1.0 - tol) continue;  // interior, already a vertex of the samples
        RankedVertex rv;
        rv.vertex.q = c;
        rv.vertex.r = s.radius;
        for (auto id : s.vertices) rv.vertex.defining.push_back(id % stride);
        std::sort(rv.vertex.defining.begin(), rv.vertex.defining.end());
        rv.vertex.defining.erase(std::unique(rv.vertex.defining.begin(), rv.vertex.defining.end()),
                                 rv.vertex.defining.end());
        rv.clamped = c.cwiseMax(0.0).cwiseMin(1.0);
        rv.distance = nearest_distance(rv.clamped, samples);
        out.push_back(std::move(rv));
    }
    return out;
}

}  // namespace

std::vector<RankedVertex> ranked_vertices(const std::vector<const Triangulation*>& tris,
                                          const std::vector<NormalizedPoint>& samples) {
    std::vector<RankedVertex> all;
    if (!samples.empty() && static_cast<std::size_t>(samples.front().z.size()) <= kReflectMaxDim)
        all = boundary_vertices(samples);
    for (const auto* tri : tris) {
        for (const auto& s : tri->simplices) {
            if (!s.has_center) continue;
            RankedVertex rv;
            rv.vertex.q = s.center;
            rv.vertex.r = s.radius;
            rv.vertex.defining = s.vertices;
            rv.clamped = s.center.cwiseMax(0.0).cwiseMin(1.0);
            rv.distance = nearest_distance(rv.clamped, samples);
            all.push_back(std::move(rv));
        }
    }
    std::sort(all.begin(), all.end(), [](const RankedVertex& a, const RankedVertex& b) {
        if (a.distance != b.distance) return a.distance > b.distance;
        return a.vertex.defining < b.vertex.defining;
    });

    std::vector<RankedVertex> kept;
    kept.reserve(all.size());
    for (auto& rv : all) {
        bool dup = false;
        for (auto it = kept.rbegin(); it != kept.rend() && it->distance - rv.distance <= 1e-12; ++it) {
            if ((it->clamped - rv.clamped).norm() <= 1e-12) {
                dup = true;
                break;
            }
        }
        if (!dup) kept.push_back(std::move(rv));
    }
    return kept;
}

RankedVertex farthest_vertex(const std::vector<const Triangulation*>& tris, const std::vector<NormalizedPoint>& samples,
                             std::size_t rank) {
    auto ranked = ranked_vertices(tris, samples);
    if (rank == 0 || rank > ranked.size()) {
        throw RankOutOfRange("rank " + std::to_string(rank) + " requested, " + std::to_string(ranked.size()) +
                             " Voronoi vertices available");
    }
    return std::move(ranked[rank - 1]);
}

RankedVertex farthest_vertex(const Triangulation& tri, const std::vector<NormalizedPoint>& samples, std::size_t rank) {
    return farthest_vertex(std::vector<const Triangulation*>{&tri}, samples, rank);
}

HalfspaceSet candidate_region(const std::vector<NormalizedPoint>& samples, std::size_t id, const Triangulation& tri,
                              bool with_box) {
    const auto pos = position_of(samples);
    const auto self = pos.find(id);
    if (self == pos.end()) throw IsolatedSample("sample " + std::to_string(id) + " is not in the sample set");
    const auto nbrs = tri.sample_neighbors(id);
    if (nbrs.empty()) throw IsolatedSample("sample " + std::to_string(id) + " has no Delaunay neighbours");
    HalfspaceSet set;
    const auto& zi = samples[self->second].z;
    for (auto j : nbrs) {
        const auto it = pos.find(j);
        if (it == pos.end()) continue;
        set.faces.push_back(bisector(zi, samples[it->second].z));
    }
    if (with_box) append_box(set, static_cast<std::size_t>(zi.size()));
    return set;
}

HalfspaceSet point_region(const std::vector<NormalizedPoint>& samples, const Vector& q, bool with_box) {
    HalfspaceSet set;
    for (const auto& s : samples) {
        if ((s.z - q).norm() > 0.0) set.faces.push_back(bisector(q, s.z));
    }
    if (with_box) append_box(set, static_cast<std::size_t>(q.size()));
    return set;
}

void append_cross_cluster(HalfspaceSet& region, const std::vector<NormalizedPoint>& samples, std::size_t id,
                          const std::vector<std::size_t>& own) {
    const auto pos = position_of(samples);
    const auto self = pos.find(id);
    if (self == pos.end()) return;
    const auto& zi = samples[self->second].z;
    std::vector<char> mine(samples.size(), 0);
    for (auto o : own) {
        const auto it = pos.find(o);
        if (it != pos.end()) mine[it->second] = 1;
    }
    double nn = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < samples.size(); ++k) {
        if (k != self->second) nn = std::min(nn, (samples[k].z - zi).norm());
    }
    if (!std::isfinite(nn)) return;
    for (std::size_t k = 0; k < samples.size(); ++k) {
        if (mine[k] || k == self->second) continue;
        if ((samples[k].z - zi).norm() <= 2.0 * nn) region.faces.push_back(bisector(zi, samples[k].z));
    }
}

std::string triangulation_json(const Triangulation& tri, const std::vector<NormalizedPoint>& samples) {
    using nlohmann::json;
    json j;
    j["dim"] = tri.dim;
    auto& pts = j["samples"] = json::array();
    for (const auto& s : samples) {
        pts.push_back({{"id", s.id}, {"z", std::vector<double>(s.z.data(), s.z.data() + s.z.size())}});
    }
    auto& simp = j["simplices"] = json::array();
    for (std::size_t k = 0; k < tri.simplices.size(); ++k) {
        const auto& s = tri.simplices[k];
        json e{{"vertices", s.vertices}, {"neighbors", tri.adjacency[k]}};
        if (s.has_center) {
            e["circumcenter"] = std::vector<double>(s.center.data(), s.center.data() + s.center.size());
            e["radius"] = s.radius;
        } else {
            e["circumcenter"] = nullptr;
        }
        simp.push_back(std::move(e));
    }
    return j.dump(2);
}

}  // namespace vopf
