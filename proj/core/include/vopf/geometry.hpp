#pragma once

#include "vopf/network.hpp"
#include "vopf/powerflow.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace vopf {

struct NormalizedPoint {
    Vector z;
    std::size_t id = 0;
};

/// z_k = (u_k - lower_k) / (upper_k - lower_k). Inputs outside the box (beyond
/// `tol` in normalized units) throw OutOfBox; inputs within `tol` are snapped onto the face.
NormalizedPoint normalize(const ControlBox& box, const ControlPoint& u, std::size_t id = 0, double tol = 0.0);
ControlPoint denormalize(const ControlBox& box, const Vector& z);

struct Halfspace {
    Vector normal;
    double offset = 0.0;  // member iff normal . z <= offset
};

struct HalfspaceSet {
    std::vector<Halfspace> faces;

    [[nodiscard]] bool contains(const Vector& z, double tol = 0.0) const;
    /// Largest normal . z - offset over the faces (negative when strictly inside).
    [[nodiscard]] double max_violation(const Vector& z) const;
    [[nodiscard]] std::size_t size() const { return faces.size(); }
};

/// The 2N faces of [0,1]^N.
HalfspaceSet unit_box(std::size_t dim);

struct Simplex {
    std::vector<std::size_t> vertices;  // sample ids, ascending
    Vector center;
    double radius = 0.0;
    bool has_center = false;  // false for slivers (no Voronoi vertex)
};

struct Triangulation {
    std::size_t dim = 0;
    std::vector<Simplex> simplices;
    std::vector<std::vector<std::size_t>> adjacency;  // simplex -> simplices sharing a facet

    /// Delaunay neighbours of a sample (ids sharing a simplex), ascending.
    [[nodiscard]] std::vector<std::size_t> sample_neighbors(std::size_t id) const;
    [[nodiscard]] bool contains_sample(std::size_t id) const;
};

struct DelaunayOptions {
    std::uint64_t seed = 0;      // joggle stream
    double joggle = 1e-10;       // amplitude on the lifted coordinate
    double sliver_ratio = 1e-10; // |det| / prod(edge lengths) below this gives no Voronoi vertex
};

/// Delaunay triangulation by lifting onto the paraboloid and taking the lower hull.
/// Throws DegenerateInput when the points do not span N dimensions.
Triangulation delaunay(const std::vector<NormalizedPoint>& points, const DelaunayOptions& opts = {});

struct Sphere {
    Vector center;
    double radius = 0.0;
};

/// Circumsphere of N+1 points in R^N. Throws DegenerateSimplex for slivers.
Sphere circumcenter(const std::vector<Vector>& vertices, double sliver_ratio = 1e-10);

struct VoronoiVertex {
    Vector q;        // circumcenter, possibly outside the box
    double r = 0.0;  // circumradius
    std::vector<std::size_t> defining;
};

struct RankedVertex {
    VoronoiVertex vertex;
    Vector clamped;         // q clamped to [0,1]^N
    double distance = 0.0;  // distance from `clamped` to the nearest sample
};

/// All Voronoi vertices of the given triangulations, clamped into the box, scored
/// against every sample, sorted by decreasing score. Coincident clamped locations
/// are reported once. For N <= 3 the vertices the box-clipped diagram has on the
/// box boundary (face crossings, corners) are candidates too.
std::vector<RankedVertex> ranked_vertices(const std::vector<const Triangulation*>& tris,
                                          const std::vector<NormalizedPoint>& samples);

/// rank-th entry (1-based) of ranked_vertices. Throws RankOutOfRange.
RankedVertex farthest_vertex(const std::vector<const Triangulation*>& tris, const std::vector<NormalizedPoint>& samples,
                             std::size_t rank);
RankedVertex farthest_vertex(const Triangulation& tri, const std::vector<NormalizedPoint>& samples, std::size_t rank);

/// Distance from z to the nearest sample.
double nearest_distance(const Vector& z, const std::vector<NormalizedPoint>& samples);

/// Bisector halfspaces against the Delaunay neighbours of sample `id`, plus the box
/// faces unless `with_box` is false. Throws IsolatedSample when `id` has no neighbours.
HalfspaceSet candidate_region(const std::vector<NormalizedPoint>& samples, std::size_t id, const Triangulation& tri,
                              bool with_box = true);

/// Voronoi cell a new point q would own among `samples`, plus the box.
HalfspaceSet point_region(const std::vector<NormalizedPoint>& samples, const Vector& q, bool with_box = true);

/// Appends bisectors against samples outside `own` that lie within twice the
/// nearest-neighbour distance of sample `id`.
void append_cross_cluster(HalfspaceSet& region, const std::vector<NormalizedPoint>& samples, std::size_t id,
                          const std::vector<std::size_t>& own);

struct ClusterPartition {
    std::vector<std::size_t> assignment;  // per sample (position in the input), cluster index
    std::vector<Vector> centroids;
    std::size_t max_size = 0;

    [[nodiscard]] std::size_t num_clusters() const { return centroids.size(); }
    /// Input positions belonging to cluster c, ascending.
    [[nodiscard]] std::vector<std::size_t> members(std::size_t c) const;
};

/// Lloyd k-means with k-means++ seeding; stops when centroids move less than 1e-8 or after max_rounds.
ClusterPartition kmeans(const std::vector<Vector>& points, std::size_t k, std::uint64_t seed, int max_rounds = 100);

/// Size-capped partition: k = ceil(b / max_size), then oversize clusters shed
/// their farthest points and undersize ones (< N+1) absorb nearest points.
ClusterPartition partition(const std::vector<NormalizedPoint>& samples, std::size_t max_size, std::uint64_t seed);

/// JSON dump of simplices, circumcenters and radii.
std::string triangulation_json(const Triangulation& tri, const std::vector<NormalizedPoint>& samples);

}  // namespace vopf
