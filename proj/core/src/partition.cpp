#include "vopf/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace vopf {
namespace {

std::size_t nearest_centroid(const Vector& p, const std::vector<Vector>& centroids) {
    std::size_t arg = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centroids.size(); ++c) {
        const double d = (p - centroids[c]).squaredNorm();
        if (d < best) {
            best = d;
            arg = c;
        }
    }
    return arg;
}

std::vector<Vector> centroids_of(const std::vector<Vector>& points, const std::vector<std::size_t>& assign,
                                 const std::vector<Vector>& previous) {
    std::vector<Vector> sum(previous.size(), Vector::Zero(points.front().size()));
    std::vector<std::size_t> count(previous.size(), 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
        sum[assign[i]] += points[i];
        ++count[assign[i]];
    }
    for (std::size_t c = 0; c < sum.size(); ++c) sum[c] = count[c] ? Vector(sum[c] / static_cast<double>(count[c])) : previous[c];
    return sum;
}

}  // namespace

std::vector<std::size_t> ClusterPartition::members(std::size_t c) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < assignment.size(); ++i) {
        if (assignment[i] == c) out.push_back(i);
    }
    return out;
}

ClusterPartition kmeans(const std::vector<Vector>& points, std::size_t k, std::uint64_t seed, int max_rounds) {
    ClusterPartition part;
    if (points.empty()) return part;
    k = std::clamp<std::size_t>(k, 1, points.size());
    std::mt19937_64 rng(seed);

    // k-means++ seeding.
    std::vector<Vector> centers;
    centers.push_back(points[std::uniform_int_distribution<std::size_t>(0, points.size() - 1)(rng)]);
    std::vector<double> d2(points.size(), std::numeric_limits<double>::infinity());
    while (centers.size() < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < points.size(); ++i) {
            d2[i] = std::min(d2[i], (points[i] - centers.back()).squaredNorm());
            total += d2[i];
        }
        std::size_t pick = 0;
        if (total > 0.0) {
            double r = std::uniform_real_distribution<double>(0.0, total)(rng);
            for (pick = 0; pick + 1 < points.size(); ++pick) {
                r -= d2[pick];
                if (r < 0.0 && d2[pick] > 0.0) break;
            }
        } else {
            pick = centers.size() % points.size();
        }
        centers.push_back(points[pick]);
    }

    std::vector<std::size_t> assign(points.size(), 0);
    for (int round = 0; round < max_rounds; ++round) {
        for (std::size_t i = 0; i < points.size(); ++i) assign[i] = nearest_centroid(points[i], centers);
        auto next = centroids_of(points, assign, centers);
        double moved = 0.0;
        for (std::size_t c = 0; c < k; ++c) moved = std::max(moved, (next[c] - centers[c]).norm());
        centers = std::move(next);
        if (moved < 1e-8) break;
    }
    for (std::size_t i = 0; i < points.size(); ++i) assign[i] = nearest_centroid(points[i], centers);

    part.assignment = std::move(assign);
    part.centroids = std::move(centers);
    return part;
}

ClusterPartition partition(const std::vector<NormalizedPoint>& samples, std::size_t max_size, std::uint64_t seed) {
    ClusterPartition part;
    part.max_size = max_size;
    if (samples.empty()) return part;
    const auto b = samples.size();
    const auto need = static_cast<std::size_t>(samples.front().z.size()) + 1;

    std::vector<Vector> pts;
    pts.reserve(b);
    for (const auto& s : samples) pts.push_back(s.z);

    auto single = [&] {
        part.assignment.assign(b, 0);
        part.centroids = centroids_of(pts, part.assignment, {Vector::Zero(pts.front().size())});
        return part;
    };
    if (max_size == 0 || b <= max_size || max_size < need) return single();

    auto k = (b + max_size - 1) / max_size;
    if (k * need > b) k = b / need;
    if (k <= 1) return single();

    auto km = kmeans(pts, k, seed);
    auto& assign = km.assignment;
    auto& cent = km.centroids;
    std::vector<std::size_t> size(k, 0);
    for (auto a : assign) ++size[a];

    auto dist2 = [&](std::size_t i, std::size_t c) { return (pts[i] - cent[c]).squaredNorm(); };

    // Shed the farthest member of an oversize cluster to the nearest cluster with room.
    for (bool changed = true; changed;) {
        changed = false;
        for (std::size_t c = 0; c < k; ++c) {
            while (size[c] > max_size) {
                std::size_t arg = b;
                double far = -1.0;
                for (std::size_t i = 0; i < b; ++i) {
                    if (assign[i] == c && dist2(i, c) > far) {
                        far = dist2(i, c);
                        arg = i;
                    }
                }
                std::size_t dest = k;
                double near = std::numeric_limits<double>::infinity();
                for (std::size_t o = 0; o < k; ++o) {
                    if (o != c && size[o] < max_size && dist2(arg, o) < near) {
                        near = dist2(arg, o);
                        dest = o;
                    }
                }
                if (dest == k) break;
                assign[arg] = dest;
                --size[c];
                ++size[dest];
                changed = true;
            }
        }
    }

    // Undersize clusters take the nearest point from a cluster that can spare one.
    for (bool changed = true; changed;) {
        changed = false;
        for (std::size_t c = 0; c < k; ++c) {
            while (size[c] < need) {
                std::size_t arg = b;
                double near = std::numeric_limits<double>::infinity();
                for (std::size_t i = 0; i < b; ++i) {
                    if (assign[i] != c && size[assign[i]] > need && dist2(i, c) < near) {
                        near = dist2(i, c);
                        arg = i;
                    }
                }
                if (arg == b) break;
                --size[assign[arg]];
                assign[arg] = c;
                ++size[c];
                changed = true;
            }
        }
    }

    // Anything still undersize is merged into the cluster of the nearest centroid.
    for (std::size_t c = 0; c < k; ++c) {
        if (size[c] == 0 || size[c] >= need) continue;
        std::size_t dest = k;
        double near = std::numeric_limits<double>::infinity();
        for (std::size_t o = 0; o < k; ++o) {
            if (o != c && size[o] > 0 && (cent[o] - cent[c]).squaredNorm() < near) {
                near = (cent[o] - cent[c]).squaredNorm();
                dest = o;
            }
        }
        if (dest == k) continue;
        for (auto& a : assign) {
            if (a == c) a = dest;
        }
        size[dest] += size[c];
        size[c] = 0;
    }

    // Compact cluster ids in order of first appearance.
    std::vector<std::size_t> remap(k, k);
    std::size_t next = 0;
    for (auto& a : assign) {
        if (remap[a] == k) remap[a] = next++;
        a = remap[a];
    }
    part.assignment = assign;
    part.centroids = centroids_of(pts, part.assignment, std::vector<Vector>(next, Vector::Zero(pts.front().size())));
    return part;
}

}  // namespace vopf
