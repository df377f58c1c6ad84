#pragma once
// Conforming triangulations of polygonal domains: structured squares,
// ear-clipped + Delaunay-flipped polygon meshes, greedy marking, and
// longest-edge bisection with recursive conformity closure.

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "clustergap/util.hpp"

namespace clustergap {

struct BoundaryEdge {
    int v0 = 0;
    int v1 = 0;
    int tag = 1;
};

struct TriMesh {
    std::vector<Eigen::Vector2d> vertices;
    std::vector<std::array<int, 3>> triangles;
    std::vector<BoundaryEdge> boundary_edges;
    // For meshes produced by refine(): index of the ancestor triangle in the
    // refine() input. Empty otherwise.
    std::vector<int> parent;

    int num_vertices() const { return static_cast<int>(vertices.size()); }
    int num_triangles() const { return static_cast<int>(triangles.size()); }

    double signed_area(int t) const {
        const auto& tr = triangles[static_cast<size_t>(t)];
        const Eigen::Vector2d a = vertices[static_cast<size_t>(tr[0])];
        const Eigen::Vector2d b = vertices[static_cast<size_t>(tr[1])];
        const Eigen::Vector2d c = vertices[static_cast<size_t>(tr[2])];
        return 0.5 * ((b.x() - a.x()) * (c.y() - a.y()) -
                      (c.x() - a.x()) * (b.y() - a.y()));
    }
    double area(int t) const { return std::abs(signed_area(t)); }
    double total_area() const {
        double s = 0.0;
        for (int t = 0; t < num_triangles(); ++t) s += area(t);
        return s;
    }
    Eigen::Vector2d centroid(int t) const {
        const auto& tr = triangles[static_cast<size_t>(t)];
        return (vertices[static_cast<size_t>(tr[0])] +
                vertices[static_cast<size_t>(tr[1])] +
                vertices[static_cast<size_t>(tr[2])]) /
               3.0;
    }
    double longest_edge_length(int t) const {
        const auto& tr = triangles[static_cast<size_t>(t)];
        double best = 0.0;
        for (int i = 0; i < 3; ++i) {
            const Eigen::Vector2d d = vertices[static_cast<size_t>(tr[(i + 1) % 3])] -
                                      vertices[static_cast<size_t>(tr[i])];
            best = std::max(best, d.norm());
        }
        return best;
    }
    double min_angle() const {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& tr : triangles) {
            for (int i = 0; i < 3; ++i) {
                const Eigen::Vector2d u = vertices[static_cast<size_t>(tr[(i + 1) % 3])] -
                                          vertices[static_cast<size_t>(tr[i])];
                const Eigen::Vector2d v = vertices[static_cast<size_t>(tr[(i + 2) % 3])] -
                                          vertices[static_cast<size_t>(tr[i])];
                const double c = u.dot(v) / (u.norm() * v.norm());
                best = std::min(best, std::acos(std::clamp(c, -1.0, 1.0)));
            }
        }
        return best;
    }

    // Conformity, orientation, and boundary consistency; throws on failure.
    void validate() const {
        const int nv = num_vertices();
        std::map<std::pair<int, int>, int> edge_count;
        for (int t = 0; t < num_triangles(); ++t) {
            const auto& tr = triangles[static_cast<size_t>(t)];
            for (int i = 0; i < 3; ++i) {
                if (tr[i] < 0 || tr[i] >= nv)
                    throw std::runtime_error("mesh: vertex index out of range");
                const int a = tr[i], b = tr[(i + 1) % 3];
                if (a == b) throw std::runtime_error("mesh: degenerate triangle");
                edge_count[{std::min(a, b), std::max(a, b)}] += 1;
            }
            if (!(signed_area(t) > 0.0))
                throw std::runtime_error("mesh: non-positive triangle orientation");
        }
        for (const auto& [e, c] : edge_count)
            if (c > 2)
                throw std::runtime_error("mesh: edge shared by more than two triangles");
        std::map<std::pair<int, int>, int> btags;
        for (const auto& be : boundary_edges) {
            const auto key = std::make_pair(std::min(be.v0, be.v1), std::max(be.v0, be.v1));
            auto it = edge_count.find(key);
            if (it == edge_count.end() || it->second != 1)
                throw std::runtime_error("mesh: boundary edge is not a one-sided edge");
            if (!btags.emplace(key, be.tag).second)
                throw std::runtime_error("mesh: duplicate boundary edge");
        }
        for (const auto& [e, c] : edge_count)
            if (c == 1 && btags.find(e) == btags.end())
                throw std::runtime_error("mesh: one-sided edge missing from boundary list");
    }
};

struct MarkSet {
    std::vector<int> marked;
    double theta = 0.9;
};

// Greedy maximum marking: K is marked iff eta_K >= theta * eta_max.
inline MarkSet greedy_mark(const std::vector<double>& eta, double theta) {
    if (!(theta > 0.0 && theta < 1.0))
        throw std::invalid_argument("marking parameter theta must lie in (0,1)");
    double eta_max = 0.0;
    for (double e : eta) {
        if (!(e >= 0.0)) throw std::invalid_argument("error indicators must be non-negative");
        eta_max = std::max(eta_max, e);
    }
    if (eta_max == 0.0)
        throw std::runtime_error("all error indicators vanish; nothing to refine");
    MarkSet m;
    m.theta = theta;
    for (size_t k = 0; k < eta.size(); ++k)
        if (eta[k] >= theta * eta_max) m.marked.push_back(static_cast<int>(k));
    return m;
}

inline TriMesh structured_square(int n) {
    if (n < 1) throw std::invalid_argument("structured_square needs n >= 1");
    TriMesh mesh;
    const auto vid = [n](int i, int j) { return j * (n + 1) + i; };
    for (int j = 0; j <= n; ++j)
        for (int i = 0; i <= n; ++i)
            mesh.vertices.emplace_back(static_cast<double>(i) / n,
                                       static_cast<double>(j) / n);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
            const int v00 = vid(i, j), v10 = vid(i + 1, j);
            const int v01 = vid(i, j + 1), v11 = vid(i + 1, j + 1);
            mesh.triangles.push_back({v00, v10, v11});
            mesh.triangles.push_back({v00, v11, v01});
        }
    for (int i = 0; i < n; ++i) {
        mesh.boundary_edges.push_back({vid(i, 0), vid(i + 1, 0), 1});
        mesh.boundary_edges.push_back({vid(i, n), vid(i + 1, n), 1});
        mesh.boundary_edges.push_back({vid(0, i), vid(0, i + 1), 1});
        mesh.boundary_edges.push_back({vid(n, i), vid(n, i + 1), 1});
    }
    mesh.validate();
    return mesh;
}

namespace detail {

using EdgeKey = std::pair<int, int>;

inline EdgeKey edge_key(int a, int b) { return {std::min(a, b), std::max(a, b)}; }

// Longest-edge bisection with recursive conformity closure. Ties on edge
// length break toward the smallest vertex index pair, giving a strict total
// order on edges and hence termination of the closure chains.
class Rivara {
public:
    explicit Rivara(const TriMesh& base) : verts_(base.vertices) {
        tris_ = base.triangles;
        alive_.assign(tris_.size(), 1);
        parent_.resize(tris_.size());
        for (size_t t = 0; t < tris_.size(); ++t) parent_[t] = static_cast<int>(t);
        for (size_t t = 0; t < tris_.size(); ++t) link_edges(static_cast<int>(t));
        for (const auto& be : base.boundary_edges)
            btag_[edge_key(be.v0, be.v1)] = be.tag;
    }

    void bisect_with_closure(int t0) {
        if (!alive_[static_cast<size_t>(t0)]) return;
        std::vector<int> stack{t0};
        while (!stack.empty()) {
            const int t = stack.back();
            if (!alive_[static_cast<size_t>(t)]) {
                stack.pop_back();
                continue;
            }
            const EdgeKey e = longest_edge(t);
            const int n = neighbor_across(t, e);
            if (n >= 0 && !(longest_edge(n) == e)) {
                stack.push_back(n);
                continue;
            }
            stack.pop_back();
            const int mid = midpoint(e);
            split(t, e, mid);
            if (n >= 0) split(n, e, mid);
        }
    }

    TriMesh finalize() const {
        TriMesh out;
        out.vertices = verts_;
        for (size_t t = 0; t < tris_.size(); ++t)
            if (alive_[t]) {
                out.triangles.push_back(tris_[t]);
                out.parent.push_back(parent_[t]);
            }
        std::map<EdgeKey, int> count;
        for (const auto& tr : out.triangles)
            for (int i = 0; i < 3; ++i)
                count[edge_key(tr[i], tr[(i + 1) % 3])] += 1;
        for (const auto& [e, c] : count)
            if (c == 1) {
                auto it = btag_.find(e);
                out.boundary_edges.push_back({e.first, e.second,
                                              it == btag_.end() ? 1 : it->second});
            }
        return out;
    }

private:
    void link_edges(int t) {
        const auto& tr = tris_[static_cast<size_t>(t)];
        for (int i = 0; i < 3; ++i) {
            auto [it, inserted] = edge2tri_.try_emplace(
                edge_key(tr[i], tr[(i + 1) % 3]), std::array<int, 2>{-1, -1});
            auto& slot = it->second;
            if (slot[0] < 0)
                slot[0] = t;
            else
                slot[1] = t;
        }
    }
    void unlink_edges(int t) {
        const auto& tr = tris_[static_cast<size_t>(t)];
        for (int i = 0; i < 3; ++i) {
            auto it = edge2tri_.find(edge_key(tr[i], tr[(i + 1) % 3]));
            if (it == edge2tri_.end()) continue;
            if (it->second[0] == t) it->second[0] = it->second[1];
            else if (it->second[1] != t) continue;
            it->second[1] = -1;
            if (it->second[0] < 0) edge2tri_.erase(it);
        }
    }
    int neighbor_across(int t, const EdgeKey& e) const {
        auto it = edge2tri_.find(e);
        if (it == edge2tri_.end()) return -1;
        if (it->second[0] == t) return it->second[1];
        return it->second[0];
    }
    double edge_len2(const EdgeKey& e) const {
        return (verts_[static_cast<size_t>(e.first)] -
                verts_[static_cast<size_t>(e.second)])
            .squaredNorm();
    }
    EdgeKey longest_edge(int t) const {
        const auto& tr = tris_[static_cast<size_t>(t)];
        EdgeKey best = edge_key(tr[0], tr[1]);
        double best_len = edge_len2(best);
        for (int i = 1; i < 3; ++i) {
            const EdgeKey e = edge_key(tr[i], tr[(i + 1) % 3]);
            const double len = edge_len2(e);
            if (len > best_len || (len == best_len && e < best)) {
                best = e;
                best_len = len;
            }
        }
        return best;
    }
    int midpoint(const EdgeKey& e) {
        auto it = mid_.find(e);
        if (it != mid_.end()) return it->second;
        verts_.push_back(0.5 * (verts_[static_cast<size_t>(e.first)] +
                                verts_[static_cast<size_t>(e.second)]));
        const int id = static_cast<int>(verts_.size()) - 1;
        mid_[e] = id;
        auto bt = btag_.find(e);
        if (bt != btag_.end()) {
            btag_[edge_key(e.first, id)] = bt->second;
            btag_[edge_key(id, e.second)] = bt->second;
            btag_.erase(bt);
        }
        return id;
    }
    void split(int t, const EdgeKey& e, int mid) {
        const auto tr = tris_[static_cast<size_t>(t)];
        int i = 0;
        while (!(edge_key(tr[i], tr[(i + 1) % 3]) == e)) ++i;
        const int u = tr[i], v = tr[(i + 1) % 3], w = tr[(i + 2) % 3];
        unlink_edges(t);
        alive_[static_cast<size_t>(t)] = 0;
        append_child({u, mid, w}, parent_[static_cast<size_t>(t)]);
        append_child({mid, v, w}, parent_[static_cast<size_t>(t)]);
    }
    void append_child(std::array<int, 3> tri, int parent) {
        tris_.push_back(tri);
        parent_.push_back(parent);
        alive_.push_back(1);
        link_edges(static_cast<int>(tris_.size()) - 1);
    }

    std::vector<Eigen::Vector2d> verts_;
    std::vector<std::array<int, 3>> tris_;
    std::vector<int> parent_;
    std::vector<char> alive_;
    std::map<EdgeKey, std::array<int, 2>> edge2tri_{};
    std::map<EdgeKey, int> mid_;
    std::map<EdgeKey, int> btag_;
};

}  // namespace detail

inline TriMesh refine(const TriMesh& mesh, const MarkSet& marks) {
    detail::Rivara worker(mesh);
    for (int t : marks.marked) {
        if (t < 0 || t >= mesh.num_triangles())
            throw std::invalid_argument("marked triangle index out of range");
        worker.bisect_with_closure(t);
    }
    TriMesh out = worker.finalize();
    out.validate();
    return out;
}

inline TriMesh uniform_refine(const TriMesh& mesh) {
    MarkSet all;
    all.theta = 0.5;
    for (int t = 0; t < mesh.num_triangles(); ++t) all.marked.push_back(t);
    // Two passes per level: every input edge gets split, halving the mesh size.
    TriMesh once = refine(mesh, all);
    MarkSet all2;
    for (int t = 0; t < once.num_triangles(); ++t) all2.marked.push_back(t);
    TriMesh twice = refine(once, all2);
    // Compose parent maps so ancestors refer to the original mesh.
    for (size_t t = 0; t < twice.parent.size(); ++t)
        twice.parent[t] = once.parent[static_cast<size_t>(twice.parent[t])];
    return twice;
}

namespace detail {

inline double cross2(const Eigen::Vector2d& o, const Eigen::Vector2d& a,
                     const Eigen::Vector2d& b) {
    return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
}

inline bool segments_intersect(const Eigen::Vector2d& a, const Eigen::Vector2d& b,
                               const Eigen::Vector2d& c, const Eigen::Vector2d& d) {
    const double d1 = cross2(c, d, a);
    const double d2 = cross2(c, d, b);
    const double d3 = cross2(a, b, c);
    const double d4 = cross2(a, b, d);
    if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) &&
        ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0)))
        return true;
    auto on_segment = [](const Eigen::Vector2d& p, const Eigen::Vector2d& q,
                         const Eigen::Vector2d& r) {
        return std::min(p.x(), q.x()) - 1e-14 <= r.x() &&
               r.x() <= std::max(p.x(), q.x()) + 1e-14 &&
               std::min(p.y(), q.y()) - 1e-14 <= r.y() &&
               r.y() <= std::max(p.y(), q.y()) + 1e-14;
    };
    if (d1 == 0 && on_segment(c, d, a)) return true;
    if (d2 == 0 && on_segment(c, d, b)) return true;
    if (d3 == 0 && on_segment(a, b, c)) return true;
    if (d4 == 0 && on_segment(a, b, d)) return true;
    return false;
}

// incircle predicate: > 0 iff d lies strictly inside the circumcircle of the
// counterclockwise triangle (a, b, c).
inline double incircle(const Eigen::Vector2d& a, const Eigen::Vector2d& b,
                       const Eigen::Vector2d& c, const Eigen::Vector2d& d) {
    Eigen::Matrix3d m;
    m << a.x() - d.x(), a.y() - d.y(), (a - d).squaredNorm(),
         b.x() - d.x(), b.y() - d.y(), (b - d).squaredNorm(),
         c.x() - d.x(), c.y() - d.y(), (c - d).squaredNorm();
    return m.determinant();
}

inline std::vector<std::array<int, 3>> ear_clip(
    const std::vector<Eigen::Vector2d>& pts) {
    const int n = static_cast<int>(pts.size());
    std::vector<int> idx(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
    double scale2 = 0.0;
    for (const auto& p : pts) scale2 = std::max(scale2, p.squaredNorm());
    const double eps = 1e-12 * (1.0 + scale2);

    std::vector<std::array<int, 3>> tris;
    while (idx.size() > 3) {
        bool clipped = false;
        for (size_t k = 0; k < idx.size(); ++k) {
            const int ip = idx[(k + idx.size() - 1) % idx.size()];
            const int ic = idx[k];
            const int in = idx[(k + 1) % idx.size()];
            const Eigen::Vector2d& a = pts[static_cast<size_t>(ip)];
            const Eigen::Vector2d& b = pts[static_cast<size_t>(ic)];
            const Eigen::Vector2d& c = pts[static_cast<size_t>(in)];
            if (cross2(a, b, c) <= eps) continue;  // reflex or degenerate corner
            bool contains_other = false;
            for (int other : idx) {
                if (other == ip || other == ic || other == in) continue;
                const Eigen::Vector2d& p = pts[static_cast<size_t>(other)];
                if (cross2(a, b, p) >= -eps && cross2(b, c, p) >= -eps &&
                    cross2(c, a, p) >= -eps) {
                    contains_other = true;
                    break;
                }
            }
            if (contains_other) continue;
            tris.push_back({ip, ic, in});
            idx.erase(idx.begin() + static_cast<long>(k));
            clipped = true;
            break;
        }
        if (!clipped)
            throw std::runtime_error("polygon triangulation failed (degenerate input?)");
    }
    tris.push_back({idx[0], idx[1], idx[2]});
    return tris;
}

// Lawson flips toward the Delaunay criterion.
inline void delaunay_flips(const std::vector<Eigen::Vector2d>& pts,
                           std::vector<std::array<int, 3>>& tris) {
    const int max_rounds = 64;
    for (int round = 0; round < max_rounds; ++round) {
        std::map<EdgeKey, std::vector<int>> e2t;
        for (size_t t = 0; t < tris.size(); ++t)
            for (size_t i = 0; i < 3; ++i)
                e2t[edge_key(tris[t][i], tris[t][(i + 1) % 3])].push_back(
                    static_cast<int>(t));
        bool flipped = false;
        for (const auto& [e, owners] : e2t) {
            if (owners.size() != 2) continue;
            const int t0 = owners[0], t1 = owners[1];
            auto opposite = [&](int t) {
                for (int i = 0; i < 3; ++i) {
                    const int v = tris[static_cast<size_t>(t)][static_cast<size_t>(i)];
                    if (v != e.first && v != e.second) return v;
                }
                return -1;
            };
            const int p = opposite(t0), q = opposite(t1);
            const Eigen::Vector2d& u = pts[static_cast<size_t>(e.first)];
            const Eigen::Vector2d& v = pts[static_cast<size_t>(e.second)];
            const Eigen::Vector2d& pp = pts[static_cast<size_t>(p)];
            const Eigen::Vector2d& qq = pts[static_cast<size_t>(q)];
            // Orient (u, v, p) counterclockwise before testing q.
            Eigen::Vector2d a = u, b = v;
            if (cross2(a, b, pp) < 0) std::swap(a, b);
            if (incircle(a, b, pp, qq) <= 1e-12 * (1.0 + (a - b).squaredNorm()))
                continue;
            // The flipped diagonal (p, q) is valid only if u and v lie on
            // opposite sides of it (convex quad).
            const double su = cross2(pp, qq, u);
            const double sv = cross2(pp, qq, v);
            if (!(su * sv < 0.0)) continue;
            std::array<int, 3> n0 = su > 0 ? std::array<int, 3>{p, q, e.first}
                                           : std::array<int, 3>{q, p, e.first};
            std::array<int, 3> n1 = sv > 0 ? std::array<int, 3>{p, q, e.second}
                                           : std::array<int, 3>{q, p, e.second};
            tris[static_cast<size_t>(t0)] = n0;
            tris[static_cast<size_t>(t1)] = n1;
            flipped = true;
            break;  // adjacency is stale after a flip; rebuild
        }
        if (!flipped) return;
    }
}

}  // namespace detail

// Triangulates a simple polygon (ear clipping + Delaunay flips), then
// bisects until every edge is at most hmax. Element quality is audited by
// callers, not guaranteed.
inline TriMesh from_polygon(const std::vector<Eigen::Vector2d>& poly, double hmax) {
    if (poly.size() < 3) throw std::invalid_argument("polygon needs at least 3 vertices");
    if (!(hmax > 0.0)) throw std::invalid_argument("hmax must be positive");
    const int n = static_cast<int>(poly.size());
    double area2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const auto& a = poly[static_cast<size_t>(i)];
        const auto& b = poly[static_cast<size_t>((i + 1) % n)];
        area2 += a.x() * b.y() - b.x() * a.y();
        if ((a - b).norm() < 1e-14)
            throw std::invalid_argument("polygon has coincident consecutive vertices");
    }
    if (std::abs(area2) < 1e-14)
        throw std::invalid_argument("polygon encloses no area");
    std::vector<Eigen::Vector2d> pts = poly;
    if (area2 < 0.0) std::reverse(pts.begin(), pts.end());
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            // skip adjacent edges (sharing an endpoint)
            if (j == i || (j + 1) % n == i || (i + 1) % n == j) continue;
            if (detail::segments_intersect(pts[static_cast<size_t>(i)],
                                           pts[static_cast<size_t>((i + 1) % n)],
                                           pts[static_cast<size_t>(j)],
                                           pts[static_cast<size_t>((j + 1) % n)]))
                throw std::invalid_argument("polygon is not simple");
        }

    TriMesh mesh;
    mesh.vertices = pts;
    mesh.triangles = detail::ear_clip(pts);
    detail::delaunay_flips(pts, mesh.triangles);
    for (int i = 0; i < n; ++i)
        mesh.boundary_edges.push_back({i, (i + 1) % n, 1});
    mesh.validate();

    while (true) {
        MarkSet marks;
        for (int t = 0; t < mesh.num_triangles(); ++t)
            if (mesh.longest_edge_length(t) > hmax) marks.marked.push_back(t);
        if (marks.marked.empty()) break;
        mesh = refine(mesh, marks);
    }
    mesh.parent.clear();
    return mesh;
}

// Text format: `nv nt nb`, then nv lines `x y`, nt lines `v0 v1 v2`,
// nb lines `v0 v1 tag`. Coordinates carry 17 significant digits.
inline void write_mesh(std::ostream& os, const TriMesh& mesh) {
    os << mesh.num_vertices() << " " << mesh.num_triangles() << " "
       << mesh.boundary_edges.size() << "\n";
    os << std::setprecision(17);
    for (const auto& v : mesh.vertices) os << v.x() << " " << v.y() << "\n";
    for (const auto& t : mesh.triangles)
        os << t[0] << " " << t[1] << " " << t[2] << "\n";
    for (const auto& b : mesh.boundary_edges)
        os << b.v0 << " " << b.v1 << " " << b.tag << "\n";
}

inline TriMesh read_mesh(std::istream& is) {
    int nv = 0, nt = 0, nb = 0;
    if (!(is >> nv >> nt >> nb))
        throw std::runtime_error("mesh file: malformed header line");
    if (nv < 3 || nt < 1 || nb < 3)
        throw std::runtime_error("mesh file: implausible element counts");
    TriMesh mesh;
    mesh.vertices.resize(static_cast<size_t>(nv));
    for (auto& v : mesh.vertices)
        if (!(is >> v.x() >> v.y()))
            throw std::runtime_error("mesh file: malformed vertex line");
    mesh.triangles.resize(static_cast<size_t>(nt));
    for (auto& t : mesh.triangles)
        if (!(is >> t[0] >> t[1] >> t[2]))
            throw std::runtime_error("mesh file: malformed triangle line");
    mesh.boundary_edges.resize(static_cast<size_t>(nb));
    for (auto& b : mesh.boundary_edges)
        if (!(is >> b.v0 >> b.v1 >> b.tag))
            throw std::runtime_error("mesh file: malformed boundary line");
    mesh.validate();
    return mesh;
}

inline std::vector<Eigen::Vector2d> lshape_polygon() {
    return {{0.0, 0.0}, {1.0, 0.0}, {1.0, 0.5}, {0.5, 0.5}, {0.5, 1.0}, {0.0, 1.0}};
}

inline std::vector<Eigen::Vector2d> unit_square_polygon() {
    return {{0.0, 0.0}, {1.0, 0.0}, {1.0, 1.0}, {0.0, 1.0}};
}

}  // namespace clustergap
