#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <vector>

namespace vopf::detail {

struct HullFacet {
    std::vector<std::size_t> vertices;   // d point indices
    std::vector<std::size_t> neighbors;  // neighbors[i] is the facet across the ridge without vertices[i]
    Eigen::VectorXd normal;              // unit, outward
    double offset = 0.0;                 // normal . x = offset on the facet
};

/// Convex hull of points in R^d with d >= 2, simplicial facets. Facet neighbour
/// indices refer to the returned vector. Throws DegenerateInput when the points
/// do not span d dimensions.
std::vector<HullFacet> convex_hull(const std::vector<Eigen::VectorXd>& points);

}  // namespace vopf::detail
