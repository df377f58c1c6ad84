#pragma once
// Finite element core on TriMesh: Lagrange spaces of degree 1..3 (with
// optional homogeneous Dirichlet trace) and lowest-order Raviart-Thomas,
// quadrature, sesquilinear form assembly, and the two discrete resolvent
// backends (Galerkin solve of the shifted pencil, and the first-order
// least-squares normal equations).

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "clustergap/mesh2d.hpp"
#include "clustergap/util.hpp"

namespace clustergap {

using SparseMatrixXc = Eigen::SparseMatrix<Complex>;
using VectorXc = Eigen::VectorXcd;

// ---------------------------------------------------------------------------
// Quadrature
// ---------------------------------------------------------------------------

struct QuadRule {
    Eigen::Matrix<double, Eigen::Dynamic, 2> points;  // reference coordinates
    Eigen::VectorXd weights;                          // sum to 1; scale by |K|
    int degree = 0;
};

namespace detail {

// Gauss-Legendre nodes/weights on [0, 1] by Newton iteration on P_n.
inline void gauss_legendre_01(int n, std::vector<double>& nodes,
                              std::vector<double>& weights) {
    nodes.assign(static_cast<size_t>(n), 0.0);
    weights.assign(static_cast<size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) {
        double x = std::cos(kPi * (static_cast<double>(i) + 0.75) /
                            (static_cast<double>(n) + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double p2 =
                    ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / static_cast<double>(k);
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        nodes[static_cast<size_t>(i)] = 0.5 * (1.0 - x);  // descending -> ascending
        weights[static_cast<size_t>(i)] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
}

}  // namespace detail

// Rule exact for polynomials of total degree <= min_degree, built as a
// Duffy-collapsed tensor Gauss rule on the reference triangle.
inline const QuadRule& triangle_rule(int min_degree) {
    static std::map<int, QuadRule> cache;
    static std::mutex mtx;
    const int n = (min_degree + 3) / 2;
    std::scoped_lock lock(mtx);
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;
    std::vector<double> gx, gw;
    detail::gauss_legendre_01(n, gx, gw);
    QuadRule rule;
    rule.degree = 2 * n - 2;
    rule.points.resize(n * n, 2);
    rule.weights.resize(n * n);
    int q = 0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j, ++q) {
            const double u = gx[static_cast<size_t>(i)];
            const double v = gx[static_cast<size_t>(j)];
            rule.points(q, 0) = u * (1.0 - v);
            rule.points(q, 1) = v;
            // Jacobian (1 - v); factor 2 normalizes the weights to sum 1.
            rule.weights(q) =
                2.0 * gw[static_cast<size_t>(i)] * gw[static_cast<size_t>(j)] * (1.0 - v);
        }
    return cache.emplace(n, std::move(rule)).first->second;
}

// Gauss rule on [0, 1] for edge integrals, exact through degree 5.
inline const std::pair<std::vector<double>, std::vector<double>>& edge_rule() {
    static const auto rule = [] {
        std::vector<double> x, w;
        detail::gauss_legendre_01(3, x, w);
        return std::make_pair(x, w);
    }();
    return rule;
}

// ---------------------------------------------------------------------------
// Lagrange reference elements
// ---------------------------------------------------------------------------

namespace detail {

struct LagrangeTable {
    int degree = 1;
    int nloc = 3;
    Eigen::Matrix<double, Eigen::Dynamic, 2> nodes;
    std::vector<std::pair<int, int>> mono;  // exponents (a, b), x^a y^b
    Eigen::MatrixXd coeff;                  // mono x nloc, basis_i = coeff.col(i)
};

inline const LagrangeTable& lagrange_table(int degree) {
    static std::map<int, LagrangeTable> cache;
    static std::mutex mtx;
    if (degree < 1 || degree > 3)
        throw std::invalid_argument("lagrange degree must be 1, 2, or 3");
    std::scoped_lock lock(mtx);
    auto it = cache.find(degree);
    if (it != cache.end()) return it->second;

    LagrangeTable tab;
    tab.degree = degree;
    const int k = degree;
    tab.nloc = (k + 1) * (k + 2) / 2;
    tab.nodes.resize(tab.nloc, 2);
    int row = 0;
    // vertices
    tab.nodes.row(row++) << 0.0, 0.0;
    tab.nodes.row(row++) << 1.0, 0.0;
    tab.nodes.row(row++) << 0.0, 1.0;
    // edge nodes, local edges (0,1), (1,2), (2,0), each walked start -> end
    const std::array<std::pair<int, int>, 3> ledges{{{0, 1}, {1, 2}, {2, 0}}};
    const Eigen::Matrix<double, 3, 2> verts =
        (Eigen::Matrix<double, 3, 2>() << 0, 0, 1, 0, 0, 1).finished();
    for (const auto& [a, b] : ledges)
        for (int i = 1; i < k; ++i)
            tab.nodes.row(row++) = verts.row(a) +
                                   (static_cast<double>(i) / k) *
                                       (verts.row(b) - verts.row(a));
    if (k == 3) tab.nodes.row(row++) << 1.0 / 3.0, 1.0 / 3.0;

    for (int a = 0; a <= k; ++a)
        for (int b = 0; b <= k - a; ++b) tab.mono.push_back({a, b});

    Eigen::MatrixXd vmat(tab.nloc, tab.nloc);
    for (int i = 0; i < tab.nloc; ++i)
        for (int j = 0; j < tab.nloc; ++j)
            vmat(i, j) = std::pow(tab.nodes(i, 0), tab.mono[static_cast<size_t>(j)].first) *
                         std::pow(tab.nodes(i, 1), tab.mono[static_cast<size_t>(j)].second);
    tab.coeff = vmat.inverse();
    return cache.emplace(degree, std::move(tab)).first->second;
}

}  // namespace detail

// Reference-element basis data at a fixed point set.
struct RefBasis {
    Eigen::MatrixXd values;                  // nloc x npts
    std::vector<Eigen::MatrixXd> gradients;  // per point: nloc x 2
    std::vector<Eigen::MatrixXd> hessians;   // per point: nloc x 3 (dxx, dxy, dyy)
};

inline RefBasis reference_basis(int degree,
                                const Eigen::Matrix<double, Eigen::Dynamic, 2>& pts) {
    const auto& tab = detail::lagrange_table(degree);
    const int npts = static_cast<int>(pts.rows());
    const int nmono = static_cast<int>(tab.mono.size());
    RefBasis rb;
    rb.values.resize(tab.nloc, npts);
    rb.gradients.assign(static_cast<size_t>(npts), Eigen::MatrixXd(tab.nloc, 2));
    rb.hessians.assign(static_cast<size_t>(npts), Eigen::MatrixXd(tab.nloc, 3));
    Eigen::VectorXd mv(nmono), mdx(nmono), mdy(nmono), mdxx(nmono), mdxy(nmono),
        mdyy(nmono);
    auto safe_pow = [](double x, int e) { return e <= 0 ? 1.0 : std::pow(x, e); };
    for (int q = 0; q < npts; ++q) {
        const double x = pts(q, 0), y = pts(q, 1);
        for (int m = 0; m < nmono; ++m) {
            const auto [a, b] = tab.mono[static_cast<size_t>(m)];
            mv(m) = safe_pow(x, a) * safe_pow(y, b);
            mdx(m) = a > 0 ? a * safe_pow(x, a - 1) * safe_pow(y, b) : 0.0;
            mdy(m) = b > 0 ? b * safe_pow(x, a) * safe_pow(y, b - 1) : 0.0;
            mdxx(m) = a > 1 ? a * (a - 1) * safe_pow(x, a - 2) * safe_pow(y, b) : 0.0;
            mdxy(m) = (a > 0 && b > 0)
                          ? a * b * safe_pow(x, a - 1) * safe_pow(y, b - 1)
                          : 0.0;
            mdyy(m) = b > 1 ? b * (b - 1) * safe_pow(x, a) * safe_pow(y, b - 2) : 0.0;
        }
        rb.values.col(q) = tab.coeff.transpose() * mv;
        rb.gradients[static_cast<size_t>(q)].col(0) = tab.coeff.transpose() * mdx;
        rb.gradients[static_cast<size_t>(q)].col(1) = tab.coeff.transpose() * mdy;
        rb.hessians[static_cast<size_t>(q)].col(0) = tab.coeff.transpose() * mdxx;
        rb.hessians[static_cast<size_t>(q)].col(1) = tab.coeff.transpose() * mdxy;
        rb.hessians[static_cast<size_t>(q)].col(2) = tab.coeff.transpose() * mdyy;
    }
    return rb;
}

// Affine map from the reference triangle onto element t.
struct ElemGeom {
    Eigen::Vector2d origin;
    Eigen::Matrix2d jac;
    Eigen::Matrix2d jac_inv;
    double det = 0.0;
    double area = 0.0;

    Eigen::Vector2d to_physical(const Eigen::Vector2d& ref) const {
        return origin + jac * ref;
    }
    Eigen::Vector2d to_reference(const Eigen::Vector2d& phys) const {
        return jac_inv * (phys - origin);
    }
};

inline ElemGeom element_geometry(const TriMesh& mesh, int t) {
    const auto& tr = mesh.triangles[static_cast<size_t>(t)];
    ElemGeom g;
    g.origin = mesh.vertices[static_cast<size_t>(tr[0])];
    g.jac.col(0) = mesh.vertices[static_cast<size_t>(tr[1])] - g.origin;
    g.jac.col(1) = mesh.vertices[static_cast<size_t>(tr[2])] - g.origin;
    g.det = g.jac.determinant();
    if (!(g.det > 0.0)) throw std::runtime_error("element with non-positive Jacobian");
    g.jac_inv = g.jac.inverse();
    g.area = 0.5 * g.det;
    return g;
}

// ---------------------------------------------------------------------------
// Spaces
// ---------------------------------------------------------------------------

struct MeshEdge {
    int v0 = 0, v1 = 0;  // v0 < v1
    int t0 = -1, t1 = -1;
    bool boundary() const { return t1 < 0; }
};

class FeSpace {
public:
    enum class Kind { lagrange, raviart_thomas };

    static FeSpace lagrange(std::shared_ptr<const TriMesh> mesh, int degree,
                            bool dirichlet = true) {
        FeSpace s;
        s.kind_ = Kind::lagrange;
        s.degree_ = degree;
        s.dirichlet_ = dirichlet;
        s.mesh_ = std::move(mesh);
        s.build_edges();
        s.build_lagrange();
        return s;
    }

    static FeSpace raviart_thomas(std::shared_ptr<const TriMesh> mesh) {
        FeSpace s;
        s.kind_ = Kind::raviart_thomas;
        s.degree_ = 1;
        s.dirichlet_ = false;
        s.mesh_ = std::move(mesh);
        s.build_edges();
        s.dof_count_ = static_cast<int>(s.edges_.size());
        return s;
    }

    Kind kind() const { return kind_; }
    int degree() const { return degree_; }
    bool dirichlet() const { return dirichlet_; }
    int dof_count() const { return dof_count_; }
    const TriMesh& mesh() const { return *mesh_; }
    std::shared_ptr<const TriMesh> mesh_ptr() const { return mesh_; }
    const std::vector<MeshEdge>& edges() const { return edges_; }
    const std::array<int, 3>& element_edges(int t) const {
        return elem_edge_[static_cast<size_t>(t)];
    }
    int local_dof_count() const {
        return (degree_ + 1) * (degree_ + 2) / 2;
    }
    // Lagrange: local -> free dof index, -1 for constrained dofs.
    const std::vector<int>& element_dofs(int t) const {
        return elem_dofs_[static_cast<size_t>(t)];
    }
    // Lagrange: coordinates of each free dof (interpolation nodes).
    const std::vector<Eigen::Vector2d>& dof_points() const { return dof_points_; }

    // Gathers free coefficients into the local nloc vector (zeros at
    // constrained slots).
    Eigen::VectorXcd local_coeffs(const VectorXc& coeffs, int t) const {
        const auto& dofs = element_dofs(t);
        Eigen::VectorXcd local = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(dofs.size()));
        for (size_t i = 0; i < dofs.size(); ++i)
            if (dofs[i] >= 0) local(static_cast<Eigen::Index>(i)) = coeffs(dofs[i]);
        return local;
    }

    // Raviart-Thomas: per-element dof signs relative to the global edge
    // normal (rotation of the smaller-to-larger vertex direction).
    const std::array<double, 3>& rt_signs(int t) const {
        return rt_signs_[static_cast<size_t>(t)];
    }

private:
    void build_edges() {
        std::map<std::pair<int, int>, int> index;
        const TriMesh& m = *mesh_;
        elem_edge_.resize(static_cast<size_t>(m.num_triangles()));
        for (int t = 0; t < m.num_triangles(); ++t) {
            const auto& tr = m.triangles[static_cast<size_t>(t)];
            for (int i = 0; i < 3; ++i) {
                const int a = tr[i], b = tr[(i + 1) % 3];
                const auto key = std::make_pair(std::min(a, b), std::max(a, b));
                auto it = index.find(key);
                if (it == index.end()) {
                    index.emplace(key, static_cast<int>(edges_.size()));
                    elem_edge_[static_cast<size_t>(t)][static_cast<size_t>(i)] =
                        static_cast<int>(edges_.size());
                    edges_.push_back({key.first, key.second, t, -1});
                } else {
                    elem_edge_[static_cast<size_t>(t)][static_cast<size_t>(i)] = it->second;
                    edges_[static_cast<size_t>(it->second)].t1 = t;
                }
            }
        }
        if (kind_ == Kind::raviart_thomas) {
            rt_signs_.resize(static_cast<size_t>(m.num_triangles()));
            for (int t = 0; t < m.num_triangles(); ++t) {
                const auto& tr = m.triangles[static_cast<size_t>(t)];
                for (int i = 0; i < 3; ++i) {
                    // local direction tr[i] -> tr[i+1] vs global min -> max
                    rt_signs_[static_cast<size_t>(t)][static_cast<size_t>(i)] =
                        tr[i] < tr[(i + 1) % 3] ? 1.0 : -1.0;
                }
            }
        }
    }

    void build_lagrange() {
        const TriMesh& m = *mesh_;
        const int k = degree_;
        const int per_edge = k - 1;
        const int per_elem = (k - 1) * (k - 2) / 2;
        const int nfull = m.num_vertices() + static_cast<int>(edges_.size()) * per_edge +
                          m.num_triangles() * per_elem;

        std::vector<char> constrained(static_cast<size_t>(nfull), 0);
        if (dirichlet_) {
            for (const auto& e : edges_) {
                if (!e.boundary()) continue;
                constrained[static_cast<size_t>(e.v0)] = 1;
                constrained[static_cast<size_t>(e.v1)] = 1;
            }
            for (size_t ei = 0; ei < edges_.size(); ++ei)
                if (edges_[ei].boundary())
                    for (int s = 0; s < per_edge; ++s)
                        constrained[static_cast<size_t>(
                            m.num_vertices() + static_cast<int>(ei) * per_edge + s)] = 1;
        }
        std::vector<int> full2free(static_cast<size_t>(nfull), -1);
        dof_count_ = 0;
        for (int i = 0; i < nfull; ++i)
            if (!constrained[static_cast<size_t>(i)]) full2free[static_cast<size_t>(i)] = dof_count_++;

        // free dof coordinates
        dof_points_.assign(static_cast<size_t>(dof_count_), Eigen::Vector2d::Zero());
        for (int v = 0; v < m.num_vertices(); ++v)
            if (full2free[static_cast<size_t>(v)] >= 0)
                dof_points_[static_cast<size_t>(full2free[static_cast<size_t>(v)])] =
                    m.vertices[static_cast<size_t>(v)];
        for (size_t ei = 0; ei < edges_.size(); ++ei) {
            const Eigen::Vector2d p0 = m.vertices[static_cast<size_t>(edges_[ei].v0)];
            const Eigen::Vector2d p1 = m.vertices[static_cast<size_t>(edges_[ei].v1)];
            for (int s = 0; s < per_edge; ++s) {
                const int full = m.num_vertices() + static_cast<int>(ei) * per_edge + s;
                if (full2free[static_cast<size_t>(full)] >= 0)
                    dof_points_[static_cast<size_t>(full2free[static_cast<size_t>(full)])] =
                        p0 + ((s + 1) / static_cast<double>(k)) * (p1 - p0);
            }
        }
        const int elem_base = m.num_vertices() + static_cast<int>(edges_.size()) * per_edge;
        for (int t = 0; t < m.num_triangles(); ++t)
            for (int s = 0; s < per_elem; ++s) {
                const int full = elem_base + t * per_elem + s;
                if (full2free[static_cast<size_t>(full)] >= 0)
                    dof_points_[static_cast<size_t>(full2free[static_cast<size_t>(full)])] =
                        m.centroid(t);
            }

        // element connectivity in the reference local ordering
        elem_dofs_.resize(static_cast<size_t>(m.num_triangles()));
        for (int t = 0; t < m.num_triangles(); ++t) {
            const auto& tr = m.triangles[static_cast<size_t>(t)];
            auto& dofs = elem_dofs_[static_cast<size_t>(t)];
            dofs.resize(static_cast<size_t>(local_dof_count()));
            int loc = 0;
            for (int i = 0; i < 3; ++i) dofs[static_cast<size_t>(loc++)] =
                full2free[static_cast<size_t>(tr[i])];
            const std::array<std::pair<int, int>, 3> ledges{{{0, 1}, {1, 2}, {2, 0}}};
            for (int le = 0; le < 3; ++le) {
                const int ei = elem_edge_[static_cast<size_t>(t)][static_cast<size_t>(le)];
                const auto [la, lb] = ledges[static_cast<size_t>(le)];
                const bool forward = tr[la] == edges_[static_cast<size_t>(ei)].v0;
                for (int i = 1; i < k; ++i) {
                    // local node at parameter i/k from la; global slot measured
                    // from the smaller vertex id
                    const int slot = forward ? i - 1 : per_edge - i;
                    const int full = m.num_vertices() + ei * per_edge + slot;
                    dofs[static_cast<size_t>(loc++)] = full2free[static_cast<size_t>(full)];
                }
            }
            for (int s = 0; s < per_elem; ++s)
                dofs[static_cast<size_t>(loc++)] =
                    full2free[static_cast<size_t>(elem_base + t * per_elem + s)];
        }
    }

    Kind kind_ = Kind::lagrange;
    int degree_ = 1;
    bool dirichlet_ = true;
    std::shared_ptr<const TriMesh> mesh_;
    int dof_count_ = 0;
    std::vector<MeshEdge> edges_;
    std::vector<std::array<int, 3>> elem_edge_;
    std::vector<std::vector<int>> elem_dofs_;
    std::vector<Eigen::Vector2d> dof_points_;
    std::vector<std::array<double, 3>> rt_signs_;
};

struct FieldVector {
    const FeSpace* space = nullptr;
    VectorXc coeffs;
};

// Piecewise-constant complex potential sampled at element centroids.
struct OperatorSpec {
    std::function<Complex(double, double)> potential;  // empty means zero

    Complex at(const Eigen::Vector2d& x) const {
        return potential ? potential(x.x(), x.y()) : Complex(0.0, 0.0);
    }
    bool is_zero() const { return !potential; }
};

// ---------------------------------------------------------------------------
// Assembly
// ---------------------------------------------------------------------------

// Local matrices on an arbitrary triangle; used directly by the assemblers
// and exposed for verification at element level.
inline std::pair<Eigen::MatrixXd, Eigen::MatrixXd> element_matrices(
    int degree, const Eigen::Vector2d& p0, const Eigen::Vector2d& p1,
    const Eigen::Vector2d& p2) {
    const QuadRule& rule = triangle_rule(std::max(4, 2 * degree));
    const RefBasis rb = reference_basis(degree, rule.points);
    Eigen::Matrix2d jac;
    jac.col(0) = p1 - p0;
    jac.col(1) = p2 - p0;
    const double det = jac.determinant();
    if (det <= 0.0) throw std::runtime_error("element_matrices: bad orientation");
    const double area = 0.5 * det;
    const Eigen::Matrix2d jinv = jac.inverse();
    const int nloc = static_cast<int>(rb.values.rows());
    Eigen::MatrixXd stiff = Eigen::MatrixXd::Zero(nloc, nloc);
    Eigen::MatrixXd mass = Eigen::MatrixXd::Zero(nloc, nloc);
    for (int q = 0; q < rule.points.rows(); ++q) {
        const double w = rule.weights(q) * area;
        const Eigen::MatrixXd grad_phys =
            rb.gradients[static_cast<size_t>(q)] * jinv;  // nloc x 2
        stiff += w * grad_phys * grad_phys.transpose();
        mass += w * rb.values.col(q) * rb.values.col(q).transpose();
    }
    return {stiff, mass};
}

struct AssembledForms {
    SparseMatrixXc stiffness;  // (grad u, grad v) + (V u, v)
    SparseMatrixXc mass;       // (u, v)
    SparseMatrixXc h1;         // (u, v) + (grad u, grad v), potential-free
    int dof_count = 0;
};

inline AssembledForms assemble_forms(const FeSpace& space, const OperatorSpec& op) {
    if (space.kind() != FeSpace::Kind::lagrange)
        throw std::invalid_argument("assemble_forms expects a Lagrange space");
    const TriMesh& mesh = space.mesh();
    const int n = space.dof_count();
    std::vector<Eigen::Triplet<Complex>> ts, tm, th;
    for (int t = 0; t < mesh.num_triangles(); ++t) {
        const auto [kloc, mloc] = element_matrices(
            space.degree(),
            mesh.vertices[static_cast<size_t>(mesh.triangles[static_cast<size_t>(t)][0])],
            mesh.vertices[static_cast<size_t>(mesh.triangles[static_cast<size_t>(t)][1])],
            mesh.vertices[static_cast<size_t>(mesh.triangles[static_cast<size_t>(t)][2])]);
        const Complex vpot = op.at(mesh.centroid(t));
        const auto& dofs = space.element_dofs(t);
        for (size_t i = 0; i < dofs.size(); ++i) {
            if (dofs[i] < 0) continue;
            for (size_t j = 0; j < dofs.size(); ++j) {
                if (dofs[j] < 0) continue;
                const double kij = kloc(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
                const double mij = mloc(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
                ts.emplace_back(dofs[i], dofs[j], Complex(kij, 0.0) + vpot * mij);
                tm.emplace_back(dofs[i], dofs[j], Complex(mij, 0.0));
                th.emplace_back(dofs[i], dofs[j], Complex(kij + mij, 0.0));
            }
        }
    }
    AssembledForms forms;
    forms.dof_count = n;
    forms.stiffness.resize(n, n);
    forms.mass.resize(n, n);
    forms.h1.resize(n, n);
    forms.stiffness.setFromTriplets(ts.begin(), ts.end());
    forms.mass.setFromTriplets(tm.begin(), tm.end());
    forms.h1.setFromTriplets(th.begin(), th.end());
    return forms;
}

// ---------------------------------------------------------------------------
// Inner products, interpolation, evaluation
// ---------------------------------------------------------------------------

enum class InnerKind { l2, h1 };

inline Complex inner_product(const AssembledForms& forms, InnerKind kind,
                             const FieldVector& u, const FieldVector& v) {
    if (u.space != v.space)
        throw std::invalid_argument("inner_product: fields from different spaces");
    const SparseMatrixXc& m = kind == InnerKind::l2 ? forms.mass : forms.h1;
    return v.coeffs.dot(m * u.coeffs);
}

inline Complex inner_product(const FeSpace& space, InnerKind kind,
                             const FieldVector& u, const FieldVector& v) {
    return inner_product(assemble_forms(space, OperatorSpec{}), kind, u, v);
}

inline FieldVector interpolate(const FeSpace& space,
                               const std::function<Complex(double, double)>& f) {
    if (space.kind() != FeSpace::Kind::lagrange)
        throw std::invalid_argument("interpolate expects a Lagrange space");
    FieldVector out;
    out.space = &space;
    out.coeffs.resize(space.dof_count());
    const auto& pts = space.dof_points();
    for (size_t i = 0; i < pts.size(); ++i)
        out.coeffs(static_cast<Eigen::Index>(i)) = f(pts[i].x(), pts[i].y());
    return out;
}

// Point evaluation by element search; intended for tests and diagnostics.
inline Complex evaluate(const FieldVector& field, const Eigen::Vector2d& x) {
    const FeSpace& space = *field.space;
    const TriMesh& mesh = space.mesh();
    for (int t = 0; t < mesh.num_triangles(); ++t) {
        const ElemGeom geom = element_geometry(mesh, t);
        const Eigen::Vector2d ref = geom.to_reference(x);
        if (ref.x() < -1e-12 || ref.y() < -1e-12 || ref.x() + ref.y() > 1.0 + 1e-12)
            continue;
        Eigen::Matrix<double, Eigen::Dynamic, 2> pt(1, 2);
        pt << ref.x(), ref.y();
        const RefBasis rb = reference_basis(space.degree(), pt);
        const Eigen::VectorXcd local = space.local_coeffs(field.coeffs, t);
        return (rb.values.col(0).cast<Complex>().cwiseProduct(local)).sum();
    }
    throw std::runtime_error("evaluate: point outside the mesh");
}

// ---------------------------------------------------------------------------
// Galerkin resolvent backend (direct sparse solve of z M - A)
// ---------------------------------------------------------------------------

class NearSingularError : public std::runtime_error {
public:
    explicit NearSingularError(double cond)
        : std::runtime_error("shifted system is numerically singular (condition estimate " +
                             std::to_string(cond) + ")"),
          condition(cond) {}
    double condition;
};

class CgSolver {
public:
    CgSolver(std::shared_ptr<const FeSpace> space, OperatorSpec op)
        : space_(std::move(space)), op_(std::move(op)),
          forms_(assemble_forms(*space_, op_)) {}

    const FeSpace& space() const { return *space_; }
    const OperatorSpec& op() const { return op_; }
    const AssembledForms& forms() const { return forms_; }

    // Solves (z M - A) u = M f; the Galerkin discrete resolvent applied to f.
    VectorXc solve(Complex z, const VectorXc& f) const {
        const Factor& fac = factor(z);
        return fac.lu->solve((forms_.mass * f).eval());
    }

    double condition_estimate(Complex z) const { return factor(z).cond; }

private:
    struct Factor {
        std::unique_ptr<Eigen::SparseLU<SparseMatrixXc>> lu;
        double cond = 0.0;
    };

    const Factor& factor(Complex z) const {
        const auto key = std::make_pair(z.real(), z.imag());
        {
            std::scoped_lock lock(mutex_);
            auto it = cache_.find(key);
            if (it != cache_.end()) return it->second;
        }
        SparseMatrixXc shifted = (z * forms_.mass - forms_.stiffness).eval();
        shifted.makeCompressed();
        auto lu = std::make_unique<Eigen::SparseLU<SparseMatrixXc>>();
        lu->compute(shifted);
        if (lu->info() != Eigen::Success) throw NearSingularError(1e300);

        // One-norm of the matrix times an inverse-power estimate of the
        // smallest singular value.
        double norm1 = 0.0;
        for (int c = 0; c < shifted.outerSize(); ++c) {
            double col = 0.0;
            for (SparseMatrixXc::InnerIterator it(shifted, c); it; ++it)
                col += std::abs(it.value());
            norm1 = std::max(norm1, col);
        }
        VectorXc v = VectorXc::Ones(shifted.rows());
        for (Eigen::Index i = 0; i < v.size(); ++i)
            if (i % 2 == 1) v(i) = Complex(-1.0, 0.3);
        v /= v.norm();
        double inv_norm = 0.0;
        for (int it = 0; it < 3; ++it) {
            VectorXc w = lu->solve(v);
            inv_norm = w.norm();
            if (!(inv_norm > 0.0) || !std::isfinite(inv_norm)) {
                inv_norm = 1e300;
                break;
            }
            v = w / inv_norm;
        }
        const double cond = norm1 * inv_norm;
        if (!(cond < 1e12)) throw NearSingularError(cond);

        std::scoped_lock lock(mutex_);
        auto [it, inserted] = cache_.try_emplace(key);
        if (inserted) {
            it->second.lu = std::move(lu);
            it->second.cond = cond;
        }
        return it->second;
    }

    std::shared_ptr<const FeSpace> space_;
    OperatorSpec op_;
    AssembledForms forms_;
    mutable std::map<std::pair<double, double>, Factor> cache_;
    mutable std::mutex mutex_;
};

inline FieldVector solve_resolvent_cg(const FeSpace& space, const OperatorSpec& op,
                                      Complex z, const FieldVector& f) {
    CgSolver solver(std::shared_ptr<const FeSpace>(&space, [](const FeSpace*) {}), op);
    FieldVector out;
    out.space = &space;
    out.coeffs = solver.solve(z, f.coeffs);
    return out;
}

// ---------------------------------------------------------------------------
// First-order least-squares resolvent (RT0 x P1)
// ---------------------------------------------------------------------------

// Minimizes ||(q + grad u, -div q + z u) - (0, f)||_{L2}^2 over RT0 x P1.
// The scalar part u_h is the resolvent value; the flux part q_h feeds the
// intrinsic least-squares error estimator.
class FoslsSolver {
public:
    explicit FoslsSolver(std::shared_ptr<const TriMesh> mesh)
        : rt_(FeSpace::raviart_thomas(mesh)),
          p1_(std::make_shared<FeSpace>(FeSpace::lagrange(mesh, 1))) {
        assemble_blocks();
    }

    const FeSpace& flux_space() const { return rt_; }
    const FeSpace& scalar_space() const { return *p1_; }
    std::shared_ptr<const FeSpace> scalar_space_ptr() const { return p1_; }
    int scalar_dofs() const { return p1_->dof_count(); }
    int flux_dofs() const { return rt_.dof_count(); }
    const Eigen::SparseMatrix<double>& scalar_mass() const { return mp_; }
    const Eigen::SparseMatrix<double>& scalar_stiffness() const { return kp_; }

    std::pair<VectorXc, VectorXc> solve(Complex z, const VectorXc& f) const {
        const auto& llt = factor(z);
        const int nq = rt_.dof_count();
        const int np = p1_->dof_count();
        VectorXc rhs(nq + np);
        rhs.head(nq) = -(cdiv_ * f);
        rhs.tail(np) = std::conj(z) * (mp_ * f);
        const VectorXc sol = llt.solve(rhs);
        return {sol.head(nq), sol.tail(np)};
    }

private:
    using LLT = Eigen::SimplicialLLT<SparseMatrixXc, Eigen::Lower>;

    void assemble_blocks() {
        const TriMesh& mesh = rt_.mesh();
        const QuadRule& rule = triangle_rule(4);
        const RefBasis rb = reference_basis(1, rule.points);
        std::vector<Eigen::Triplet<double>> t_mrt, t_drt, t_cdiv, t_cgrad, t_mp, t_kp;
        for (int t = 0; t < mesh.num_triangles(); ++t) {
            const auto& tr = mesh.triangles[static_cast<size_t>(t)];
            const ElemGeom geom = element_geometry(mesh, t);
            const auto& eids = rt_.element_edges(t);
            const auto& signs = rt_.rt_signs(t);
            // RT0 basis: for local edge (i, i+1), opposite vertex i+2
            std::array<Eigen::Vector2d, 3> opp;
            std::array<double, 3> elen{};
            for (int le = 0; le < 3; ++le) {
                opp[static_cast<size_t>(le)] =
                    mesh.vertices[static_cast<size_t>(tr[(le + 2) % 3])];
                elen[static_cast<size_t>(le)] =
                    (mesh.vertices[static_cast<size_t>(tr[le])] -
                     mesh.vertices[static_cast<size_t>(tr[(le + 1) % 3])])
                        .norm();
            }
            const auto& pdofs = p1_->element_dofs(t);
            for (int q = 0; q < rule.points.rows(); ++q) {
                const double w = rule.weights(q) * geom.area;
                const Eigen::Vector2d x =
                    geom.to_physical(rule.points.row(q).transpose());
                std::array<Eigen::Vector2d, 3> psi;
                std::array<double, 3> dpsi{};
                for (int le = 0; le < 3; ++le) {
                    const double c = signs[static_cast<size_t>(le)] *
                                     elen[static_cast<size_t>(le)] / (2.0 * geom.area);
                    psi[static_cast<size_t>(le)] = c * (x - opp[static_cast<size_t>(le)]);
                    dpsi[static_cast<size_t>(le)] = 2.0 * c;
                }
                const Eigen::MatrixXd grad_phys =
                    rb.gradients[static_cast<size_t>(q)] * geom.jac_inv;
                for (int a = 0; a < 3; ++a) {
                    for (int b = 0; b < 3; ++b) {
                        t_mrt.emplace_back(eids[static_cast<size_t>(a)], eids[static_cast<size_t>(b)],
                                           w * psi[static_cast<size_t>(a)].dot(psi[static_cast<size_t>(b)]));
                        t_drt.emplace_back(eids[static_cast<size_t>(a)], eids[static_cast<size_t>(b)],
                                           w * dpsi[static_cast<size_t>(a)] * dpsi[static_cast<size_t>(b)]);
                    }
                    for (size_t j = 0; j < pdofs.size(); ++j) {
                        if (pdofs[j] < 0) continue;
                        t_cdiv.emplace_back(eids[static_cast<size_t>(a)], pdofs[j],
                                            w * dpsi[static_cast<size_t>(a)] *
                                                rb.values(static_cast<Eigen::Index>(j), q));
                        t_cgrad.emplace_back(
                            eids[static_cast<size_t>(a)], pdofs[j],
                            w * psi[static_cast<size_t>(a)].dot(
                                    grad_phys.row(static_cast<Eigen::Index>(j)).transpose()));
                    }
                }
                for (size_t i = 0; i < pdofs.size(); ++i) {
                    if (pdofs[i] < 0) continue;
                    for (size_t j = 0; j < pdofs.size(); ++j) {
                        if (pdofs[j] < 0) continue;
                        t_mp.emplace_back(pdofs[i], pdofs[j],
                                          w * rb.values(static_cast<Eigen::Index>(i), q) *
                                              rb.values(static_cast<Eigen::Index>(j), q));
                        t_kp.emplace_back(pdofs[i], pdofs[j],
                                          w * grad_phys.row(static_cast<Eigen::Index>(i))
                                                  .dot(grad_phys.row(static_cast<Eigen::Index>(j))));
                    }
                }
            }
        }
        const int nq = rt_.dof_count();
        const int np = p1_->dof_count();
        mrt_.resize(nq, nq);
        drt_.resize(nq, nq);
        cdiv_.resize(nq, np);
        cgrad_.resize(nq, np);
        mp_.resize(np, np);
        kp_.resize(np, np);
        mrt_.setFromTriplets(t_mrt.begin(), t_mrt.end());
        drt_.setFromTriplets(t_drt.begin(), t_drt.end());
        cdiv_.setFromTriplets(t_cdiv.begin(), t_cdiv.end());
        cgrad_.setFromTriplets(t_cgrad.begin(), t_cgrad.end());
        mp_.setFromTriplets(t_mp.begin(), t_mp.end());
        kp_.setFromTriplets(t_kp.begin(), t_kp.end());
    }

    const LLT& factor(Complex z) const {
        const auto key = std::make_pair(z.real(), z.imag());
        {
            std::scoped_lock lock(mutex_);
            auto it = cache_.find(key);
            if (it != cache_.end()) return *it->second;
        }
        const int nq = rt_.dof_count();
        const int np = p1_->dof_count();
        std::vector<Eigen::Triplet<Complex>> trip;
        auto add_block = [&trip](const Eigen::SparseMatrix<double>& m, int roff, int coff,
                                 Complex scale) {
            for (int c = 0; c < m.outerSize(); ++c)
                for (Eigen::SparseMatrix<double>::InnerIterator it(m, c); it; ++it)
                    trip.emplace_back(roff + static_cast<int>(it.row()),
                                      coff + static_cast<int>(it.col()),
                                      scale * it.value());
        };
        // Normal equations of the first-order system, Hermitian by structure.
        add_block(mrt_, 0, 0, Complex(1.0, 0.0));
        add_block(drt_, 0, 0, Complex(1.0, 0.0));
        add_block(cgrad_, 0, nq, Complex(1.0, 0.0));
        add_block(cdiv_, 0, nq, -z);
        // conjugate-transposed coupling block
        for (int c = 0; c < cgrad_.outerSize(); ++c)
            for (Eigen::SparseMatrix<double>::InnerIterator it(cgrad_, c); it; ++it)
                trip.emplace_back(nq + static_cast<int>(it.col()), static_cast<int>(it.row()),
                                  Complex(it.value(), 0.0));
        for (int c = 0; c < cdiv_.outerSize(); ++c)
            for (Eigen::SparseMatrix<double>::InnerIterator it(cdiv_, c); it; ++it)
                trip.emplace_back(nq + static_cast<int>(it.col()), static_cast<int>(it.row()),
                                  -std::conj(z) * it.value());
        add_block(kp_, nq, nq, Complex(1.0, 0.0));
        add_block(mp_, nq, nq, Complex(std::norm(z), 0.0));

        SparseMatrixXc normal(nq + np, nq + np);
        normal.setFromTriplets(trip.begin(), trip.end());
        auto llt = std::make_unique<LLT>();
        llt->compute(normal);
        if (llt->info() != Eigen::Success)
            throw std::runtime_error(
                "least-squares normal equations are not positive definite at this shift");
        std::scoped_lock lock(mutex_);
        auto [it, inserted] = cache_.try_emplace(key, std::move(llt));
        return *it->second;
    }

    FeSpace rt_;
    std::shared_ptr<FeSpace> p1_;
    Eigen::SparseMatrix<double> mrt_, drt_, cdiv_, cgrad_, mp_, kp_;
    mutable std::map<std::pair<double, double>, std::unique_ptr<LLT>> cache_;
    mutable std::mutex mutex_;
};

inline std::pair<FieldVector, FieldVector> solve_resolvent_fosls(
    const FoslsSolver& solver, Complex z, const FieldVector& f) {
    auto [q, u] = solver.solve(z, f.coeffs);
    FieldVector fq, fu;
    fq.space = &solver.flux_space();
    fq.coeffs = std::move(q);
    fu.space = &solver.scalar_space();
    fu.coeffs = std::move(u);
    return {fq, fu};
}

}  // namespace clustergap
