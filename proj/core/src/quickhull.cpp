#include "quickhull.hpp"

#include "vopf/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

namespace vopf::detail {
namespace {

using Index = Eigen::Index;
using Vec = Eigen::VectorXd;

struct Facet {
    std::vector<std::size_t> vertices;
    std::vector<std::size_t> neighbors;
    Vec normal;
    double offset = 0.0;
    std::vector<std::size_t> outside;
    bool alive = true;
    std::size_t visit = 0;
};

class Builder {
public:
    explicit Builder(const std::vector<Vec>& pts) : pts_(pts), d_(static_cast<std::size_t>(pts.front().size())) {
        double scale = 1.0;
        for (const auto& p : pts_) scale = std::max(scale, p.cwiseAbs().maxCoeff());
        eps_ = 1e-13 * scale * static_cast<double>(d_);
    }

    std::vector<HullFacet> run() {
        initial_simplex();
        std::size_t cursor = 0;
        while (true) {
            // Process facets in creation order; deterministic.
            while (cursor < facets_.size() && (!facets_[cursor].alive || facets_[cursor].outside.empty())) ++cursor;
            if (cursor == facets_.size()) break;
            add_point(cursor);
        }
        return collect();
    }

private:
    double dist(const Facet& f, std::size_t p) const { return f.normal.dot(pts_[p]) - f.offset; }

    void plane(Facet& f) const {
        const auto d = static_cast<Index>(d_);
        Eigen::MatrixXd a(d, d - 1);
        const Vec& base = pts_[f.vertices[0]];
        for (Index k = 1; k < d; ++k) a.col(k - 1) = pts_[f.vertices[static_cast<std::size_t>(k)]] - base;
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
        Vec n = qr.householderQ() * Vec::Unit(d, d - 1);
        n.normalize();
        double off = n.dot(base);
        if (n.dot(interior_) - off > 0.0) {
            n = -n;
            off = -off;
        }
        f.normal = std::move(n);
        f.offset = off;
    }

    void initial_simplex() {
        const auto n = pts_.size();
        if (n < d_ + 1) throw DegenerateInput("need at least " + std::to_string(d_ + 1) + " points for a hull in R^" + std::to_string(d_));
        std::vector<std::size_t> chosen;
        // Start from the lexicographically smallest point.
        std::size_t first = 0;
        for (std::size_t i = 1; i < n; ++i) {
            if (std::lexicographical_compare(pts_[i].data(), pts_[i].data() + d_, pts_[first].data(), pts_[first].data() + d_)) first = i;
        }
        chosen.push_back(first);
        std::vector<Vec> basis;  // orthonormal directions of the current affine hull
        while (chosen.size() < d_ + 1) {
            double best = -1.0;
            std::size_t arg = 0;
            for (std::size_t i = 0; i < n; ++i) {
                Vec r = pts_[i] - pts_[first];
                for (const auto& b : basis) r -= b.dot(r) * b;
                const double len = r.norm();
                if (len > best + 1e-15) {
                    best = len;
                    arg = i;
                }
            }
            if (!(best > eps_ * 10.0)) {
                throw DegenerateInput("points span only " + std::to_string(chosen.size() - 1) + " of " + std::to_string(d_) + " dimensions");
            }
            Vec r = pts_[arg] - pts_[first];
            for (const auto& b : basis) r -= b.dot(r) * b;
            for (const auto& b : basis) r -= b.dot(r) * b;
            basis.push_back(r.normalized());
            chosen.push_back(arg);
        }

        interior_ = Vec::Zero(static_cast<Index>(d_));
        for (auto c : chosen) interior_ += pts_[c];
        interior_ /= static_cast<double>(chosen.size());

        for (std::size_t i = 0; i <= d_; ++i) {
            Facet f;
            for (std::size_t j = 0; j <= d_; ++j) {
                if (j != i) {
                    f.vertices.push_back(chosen[j]);
                    f.neighbors.push_back(j);  // the facet omitting chosen[j]
                }
            }
            plane(f);
            facets_.push_back(std::move(f));
        }

        std::vector<char> in_simplex(n, 0);
        for (auto c : chosen) in_simplex[c] = 1;
        for (std::size_t p = 0; p < n; ++p) {
            if (!in_simplex[p]) assign(p, 0, facets_.size());
        }
    }

    // Puts p into the outside set of the facet in [lo, hi) it is farthest above, if any.
    void assign(std::size_t p, std::size_t lo, std::size_t hi) {
        double best = eps_;
        std::size_t arg = hi;
        for (std::size_t f = lo; f < hi; ++f) {
            if (!facets_[f].alive) continue;
            const double dd = dist(facets_[f], p);
            if (dd > best) {
                best = dd;
                arg = f;
            }
        }
        if (arg != hi) facets_[arg].outside.push_back(p);
    }

    void assign_new(std::size_t p, const std::vector<std::size_t>& candidates) {
        double best = eps_;
        std::size_t arg = facets_.size();
        for (auto f : candidates) {
            const double dd = dist(facets_[f], p);
            if (dd > best) {
                best = dd;
                arg = f;
            }
        }
        if (arg != facets_.size()) facets_[arg].outside.push_back(p);
    }

    void add_point(std::size_t start) {
        Facet& sf = facets_[start];
        std::size_t apex = sf.outside.front();
        double far = dist(sf, apex);
        for (auto p : sf.outside) {
            const double dd = dist(sf, p);
            if (dd > far || (dd == far && p < apex)) {
                far = dd;
                apex = p;
            }
        }

        ++stamp_;
        std::vector<std::size_t> visible{start};
        facets_[start].visit = stamp_;
        for (std::size_t q = 0; q < visible.size(); ++q) {
            const auto f = visible[q];
            for (auto nb : facets_[f].neighbors) {
                if (facets_[nb].visit == stamp_ || !facets_[nb].alive) continue;
                if (dist(facets_[nb], apex) > eps_) {
                    facets_[nb].visit = stamp_;
                    visible.push_back(nb);
                }
            }
        }

        std::vector<std::size_t> created;
        std::map<std::vector<std::size_t>, std::pair<std::size_t, std::size_t>> ridges;
        for (auto f : visible) {
            for (std::size_t i = 0; i < d_; ++i) {
                const auto nb = facets_[f].neighbors[i];
                if (facets_[nb].visit == stamp_) continue;
                Facet nf;
                nf.vertices = facets_[f].vertices;
                nf.vertices[i] = apex;
                nf.neighbors.assign(d_, 0);
                nf.neighbors[i] = nb;
                plane(nf);
                const auto id = facets_.size();
                auto back = std::find(facets_[nb].neighbors.begin(), facets_[nb].neighbors.end(), f);
                if (back == facets_[nb].neighbors.end()) throw DegenerateInput("hull adjacency became inconsistent");
                *back = id;
                facets_.push_back(std::move(nf));
                created.push_back(id);

                for (std::size_t k = 0; k < d_; ++k) {
                    if (k == i) continue;
                    std::vector<std::size_t> key;
                    key.reserve(d_ - 1);
                    for (std::size_t v = 0; v < d_; ++v) {
                        if (v != k) key.push_back(facets_[id].vertices[v]);
                    }
                    std::sort(key.begin(), key.end());
                    auto [it, fresh] = ridges.try_emplace(std::move(key), id, k);
                    if (!fresh) {
                        facets_[id].neighbors[k] = it->second.first;
                        facets_[it->second.first].neighbors[it->second.second] = id;
                        ridges.erase(it);
                    }
                }
            }
        }
        if (!ridges.empty()) throw DegenerateInput("hull horizon is not a closed ridge cycle (near-coplanar input)");

        for (auto f : visible) {
            facets_[f].alive = false;
            for (auto p : facets_[f].outside) {
                if (p != apex) assign_new(p, created);
            }
            facets_[f].outside.clear();
            facets_[f].outside.shrink_to_fit();
        }
    }

    std::vector<HullFacet> collect() const {
        std::vector<std::size_t> remap(facets_.size(), 0);
        std::size_t next = 0;
        for (std::size_t f = 0; f < facets_.size(); ++f) {
            if (facets_[f].alive) remap[f] = next++;
        }
        std::vector<HullFacet> out;
        out.reserve(next);
        for (const auto& f : facets_) {
            if (!f.alive) continue;
            HullFacet h;
            h.vertices = f.vertices;
            h.normal = f.normal;
            h.offset = f.offset;
            for (auto nb : f.neighbors) h.neighbors.push_back(remap[nb]);
            out.push_back(std::move(h));
        }
        return out;
    }

    const std::vector<Vec>& pts_;
    std::size_t d_;
    double eps_ = 0.0;
    Vec interior_;
    std::vector<Facet> facets_;
    std::size_t stamp_ = 0;
};

}  // namespace

std::vector<HullFacet> convex_hull(const std::vector<Eigen::VectorXd>& points) {
    if (points.empty()) throw DegenerateInput("convex hull of an empty point set");
    if (points.front().size() < 2) throw DegenerateInput("convex hull needs dimension >= 2");
    return Builder(points).run();
}

}  // namespace vopf::detail
