#pragma once
// Source-problem error estimators repurposed for eigenspace error
// estimation: each maps a discrete field v_h to one payload per filter pole,
// stored as exact piecewise polynomials sampled at quadrature points so that
// inner products between estimator fields are available, not just norms.

#include <memory>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "clustergap/fem.hpp"
#include "clustergap/filters.hpp"
#include "clustergap/util.hpp"

namespace clustergap {

// Payloads of one estimator application. Element payloads carry `ncomp`
// components at the element rule points; edge payloads (explicit-residual
// estimator only) carry weighted normal-derivative jumps on interior edges,
// split half-and-half between the adjacent elements for localization.
struct EstimatorField {
    std::shared_ptr<const TriMesh> mesh;
    int npoles = 0;
    int ncomp = 1;
    std::vector<std::vector<Eigen::MatrixXcd>> elem_vals;  // [pole][element]
    std::vector<Eigen::VectorXd> elem_w;                   // [element]
    std::vector<std::vector<Eigen::VectorXcd>> edge_vals;  // [pole][iedge]
    std::vector<Eigen::VectorXd> edge_w;                   // [iedge]
    std::vector<std::array<int, 2>> edge_adj;              // [iedge]
    std::vector<std::vector<int>> elem_edges;              // element -> iedges

    bool compatible(const EstimatorField& other) const {
        return mesh.get() == other.mesh.get() && npoles == other.npoles &&
               ncomp == other.ncomp && edge_vals.size() == other.edge_vals.size() &&
               elem_w.size() == other.elem_w.size();
    }
};

inline Complex y_inner(const EstimatorField& f, const EstimatorField& g) {
    if (!f.compatible(g))
        throw std::invalid_argument("y_inner: estimator fields have different structure");
    Complex acc(0.0, 0.0);
    for (int k = 0; k < f.npoles; ++k) {
        for (size_t t = 0; t < f.elem_w.size(); ++t) {
            const Eigen::MatrixXcd& a = f.elem_vals[static_cast<size_t>(k)][t];
            const Eigen::MatrixXcd& b = g.elem_vals[static_cast<size_t>(k)][t];
            const Eigen::VectorXd& w = f.elem_w[t];
            for (Eigen::Index q = 0; q < w.size(); ++q)
                acc += w(q) * b.col(q).dot(a.col(q));  // sum of a * conj(b)
        }
        for (size_t e = 0; e < f.edge_w.size(); ++e) {
            const Eigen::VectorXcd& a = f.edge_vals[static_cast<size_t>(k)][e];
            const Eigen::VectorXcd& b = g.edge_vals[static_cast<size_t>(k)][e];
            const Eigen::VectorXd& w = f.edge_w[e];
            for (Eigen::Index q = 0; q < w.size(); ++q)
                acc += w(q) * a(q) * std::conj(b(q));
        }
    }
    return acc;
}

inline double y_norm(const EstimatorField& f) {
    return std::sqrt(std::max(0.0, std::real(y_inner(f, f))));
}

// Per-element local norms eta_K; their l2 norm equals the global Y norm.
inline Eigen::VectorXd local_norms(const EstimatorField& f) {
    const int nt = static_cast<int>(f.elem_w.size());
    Eigen::VectorXd eta2 = Eigen::VectorXd::Zero(nt);
    for (int k = 0; k < f.npoles; ++k) {
        for (int t = 0; t < nt; ++t) {
            const Eigen::MatrixXcd& a = f.elem_vals[static_cast<size_t>(k)][static_cast<size_t>(t)];
            const Eigen::VectorXd& w = f.elem_w[static_cast<size_t>(t)];
            for (Eigen::Index q = 0; q < w.size(); ++q)
                eta2(t) += w(q) * a.col(q).squaredNorm();
        }
        for (size_t e = 0; e < f.edge_w.size(); ++e) {
            const Eigen::VectorXcd& a = f.edge_vals[static_cast<size_t>(k)][e];
            const Eigen::VectorXd& w = f.edge_w[e];
            double part = 0.0;
            for (Eigen::Index q = 0; q < w.size(); ++q)
                part += w(q) * std::norm(a(q));
            eta2(f.edge_adj[e][0]) += 0.5 * part;
            eta2(f.edge_adj[e][1]) += 0.5 * part;
        }
    }
    return eta2.cwiseMax(0.0).cwiseSqrt();
}

namespace detail {

inline void init_edge_structure(const FeSpace& space, EstimatorField& field) {
    const auto& edges = space.edges();
    field.elem_edges.resize(static_cast<size_t>(space.mesh().num_triangles()));
    for (size_t e = 0; e < edges.size(); ++e) {
        if (edges[e].boundary()) continue;
        const int id = static_cast<int>(field.edge_adj.size());
        field.edge_adj.push_back({edges[e].t0, edges[e].t1});
        field.elem_edges[static_cast<size_t>(edges[e].t0)].push_back(id);
        field.elem_edges[static_cast<size_t>(edges[e].t1)].push_back(id);
        field.edge_w.push_back(Eigen::VectorXd());
    }
}

}  // namespace detail

// Intrinsic least-squares estimator: for each pole z_k, the residual of the
// first-order system at the discrete solution,
//   E_k v = (-(q_h + grad u_h), v + div q_h - z_k u_h),
// measured in plain L2. Payload components: (r_q_x, r_q_y, r_u).
inline EstimatorField fosls_estimate(const RationalFilter& filter,
                                     const FoslsSolver& solver, const FieldVector& v) {
    const FeSpace& p1 = solver.scalar_space();
    if (v.space != &p1)
        throw std::invalid_argument("fosls_estimate: field is not in the solver's scalar space");
    const TriMesh& mesh = p1.mesh();
    const int npoles = static_cast<int>(filter.poles.size());
    const QuadRule& rule = triangle_rule(4);
    const RefBasis rb = reference_basis(1, rule.points);
    const int nq = static_cast<int>(rule.points.rows());
    const int nt = mesh.num_triangles();

    EstimatorField field;
    field.mesh = p1.mesh_ptr();
    field.npoles = npoles;
    field.ncomp = 3;
    field.elem_vals.assign(static_cast<size_t>(npoles), {});
    field.elem_w.resize(static_cast<size_t>(nt));
    for (int t = 0; t < nt; ++t) {
        const ElemGeom geom = element_geometry(mesh, t);
        field.elem_w[static_cast<size_t>(t)] = rule.weights * geom.area;
    }

    parallel_for_index(npoles, [&](int k) {
        const Complex z = filter.poles[static_cast<size_t>(k)].z;
        const auto [qh, uh] = solver.solve(z, v.coeffs);
        auto& vals = field.elem_vals[static_cast<size_t>(k)];
        vals.assign(static_cast<size_t>(nt), Eigen::MatrixXcd());
        const FeSpace& rt = solver.flux_space();
        for (int t = 0; t < nt; ++t) {
            const auto& tr = mesh.triangles[static_cast<size_t>(t)];
            const ElemGeom geom = element_geometry(mesh, t);
            const Eigen::VectorXcd ul = p1.local_coeffs(uh, t);
            const Eigen::VectorXcd vl = p1.local_coeffs(v.coeffs, t);
            const auto& eids = rt.element_edges(t);
            const auto& signs = rt.rt_signs(t);
            Eigen::MatrixXcd out(3, nq);
            for (int q = 0; q < nq; ++q) {
                const Eigen::Vector2d x = geom.to_physical(rule.points.row(q).transpose());
                Eigen::Vector2cd qval = Eigen::Vector2cd::Zero();
                Complex qdiv(0.0, 0.0);
                for (int le = 0; le < 3; ++le) {
                    const Eigen::Vector2d opp =
                        mesh.vertices[static_cast<size_t>(tr[(le + 2) % 3])];
                    const double elen =
                        (mesh.vertices[static_cast<size_t>(tr[le])] -
                         mesh.vertices[static_cast<size_t>(tr[(le + 1) % 3])])
                            .norm();
                    const double c = signs[static_cast<size_t>(le)] * elen / (2.0 * geom.area);
                    const Complex dof = qh(eids[static_cast<size_t>(le)]);
                    qval += dof * (c * (x - opp));
                    qdiv += dof * (2.0 * c);
                }
                const Eigen::MatrixXd grad_phys =
                    rb.gradients[static_cast<size_t>(q)] * geom.jac_inv;
                const Eigen::Vector2cd grad_u =
                    grad_phys.transpose().cast<Complex>() * ul;
                const Complex uq = rb.values.col(q).cast<Complex>().cwiseProduct(ul).sum();
                const Complex vq = rb.values.col(q).cast<Complex>().cwiseProduct(vl).sum();
                out(0, q) = -(qval(0) + grad_u(0));
                out(1, q) = -(qval(1) + grad_u(1));
                out(2, q) = vq + qdiv - z * uq;
            }
            vals[static_cast<size_t>(t)] = std::move(out);
        }
    });
    return field;
}

// Explicit residual estimator: for each pole z_k and the Galerkin solve
// u_h = R_h(z_k) v, element payloads h_K (v - z_k u_h - lap u_h + V u_h) and
// interior-edge payloads h_e^{1/2} [du_h/dn].
inline EstimatorField residual_estimate(const RationalFilter& filter,
                                        const CgSolver& solver, const FieldVector& v) {
    const FeSpace& space = solver.space();
    if (v.space != &space)
        throw std::invalid_argument("residual_estimate: field is not in the solver's space");
    const TriMesh& mesh = space.mesh();
    const int npoles = static_cast<int>(filter.poles.size());
    const QuadRule& rule = triangle_rule(6);
    const RefBasis rb = reference_basis(space.degree(), rule.points);
    const int nq = static_cast<int>(rule.points.rows());
    const int nt = mesh.num_triangles();
    const auto& [edge_s, edge_wts] = edge_rule();
    const int neq = static_cast<int>(edge_s.size());

    EstimatorField field;
    field.mesh = space.mesh_ptr();
    field.npoles = npoles;
    field.ncomp = 1;
    field.elem_vals.assign(static_cast<size_t>(npoles), {});
    field.edge_vals.assign(static_cast<size_t>(npoles), {});
    field.elem_w.resize(static_cast<size_t>(nt));
    for (int t = 0; t < nt; ++t) {
        const ElemGeom geom = element_geometry(mesh, t);
        field.elem_w[static_cast<size_t>(t)] = rule.weights * geom.area;
    }
    detail::init_edge_structure(space, field);
    const auto& edges = space.edges();
    std::vector<int> iedge_of_edge(edges.size(), -1);
    {
        int id = 0;
        for (size_t e = 0; e < edges.size(); ++e)
            if (!edges[e].boundary()) iedge_of_edge[e] = id++;
    }
    for (size_t e = 0; e < edges.size(); ++e) {
        if (edges[e].boundary()) continue;
        const double elen = (mesh.vertices[static_cast<size_t>(edges[e].v0)] -
                             mesh.vertices[static_cast<size_t>(edges[e].v1)])
                                .norm();
        Eigen::VectorXd w(neq);
        for (int q = 0; q < neq; ++q) w(q) = edge_wts[static_cast<size_t>(q)] * elen;
        field.edge_w[static_cast<size_t>(iedge_of_edge[e])] = std::move(w);
    }

    parallel_for_index(npoles, [&](int k) {
        const Complex z = filter.poles[static_cast<size_t>(k)].z;
        const VectorXc uh = solver.solve(z, v.coeffs);
        auto& vals = field.elem_vals[static_cast<size_t>(k)];
        auto& evals = field.edge_vals[static_cast<size_t>(k)];
        vals.assign(static_cast<size_t>(nt), Eigen::MatrixXcd());
        evals.assign(field.edge_adj.size(), Eigen::VectorXcd());

        for (int t = 0; t < nt; ++t) {
            const ElemGeom geom = element_geometry(mesh, t);
            const double hk = mesh.longest_edge_length(t);
            const Complex vpot = solver.op().at(mesh.centroid(t));
            const Eigen::VectorXcd ul = space.local_coeffs(uh, t);
            const Eigen::VectorXcd vl = space.local_coeffs(v.coeffs, t);
            Eigen::MatrixXcd out(1, nq);
            // Laplacian via the affine chain rule: with H the reference
            // Hessian and S = J^{-1} J^{-T}, lap = S00 Hxx + 2 S01 Hxy + S11 Hyy.
            const Eigen::Matrix2d s = geom.jac_inv * geom.jac_inv.transpose();
            for (int q = 0; q < nq; ++q) {
                const Eigen::MatrixXd& hess = rb.hessians[static_cast<size_t>(q)];
                Complex lap(0.0, 0.0);
                for (Eigen::Index i = 0; i < ul.size(); ++i)
                    lap += ul(i) * (s(0, 0) * hess(i, 0) + 2.0 * s(0, 1) * hess(i, 1) +
                                    s(1, 1) * hess(i, 2));
                const Complex uq = rb.values.col(q).cast<Complex>().cwiseProduct(ul).sum();
                const Complex vq = rb.values.col(q).cast<Complex>().cwiseProduct(vl).sum();
                out(0, q) = hk * (vq - z * uq - lap + vpot * uq);
            }
            vals[static_cast<size_t>(t)] = std::move(out);
        }

        for (size_t e = 0; e < edges.size(); ++e) {
            if (edges[e].boundary()) continue;
            const Eigen::Vector2d p0 = mesh.vertices[static_cast<size_t>(edges[e].v0)];
            const Eigen::Vector2d p1 = mesh.vertices[static_cast<size_t>(edges[e].v1)];
            const Eigen::Vector2d dir = p1 - p0;
            const double elen = dir.norm();
            const Eigen::Vector2d normal(dir.y() / elen, -dir.x() / elen);
            Eigen::VectorXcd jump(neq);
            for (int q = 0; q < neq; ++q) {
                const Eigen::Vector2d x = p0 + edge_s[static_cast<size_t>(q)] * dir;
                Complex dn[2];
                for (int side = 0; side < 2; ++side) {
                    const int t = side == 0 ? edges[e].t0 : edges[e].t1;
                    const ElemGeom geom = element_geometry(mesh, t);
                    Eigen::Matrix<double, Eigen::Dynamic, 2> rp(1, 2);
                    const Eigen::Vector2d ref = geom.to_reference(x);
                    rp << ref.x(), ref.y();
                    const RefBasis erb = reference_basis(space.degree(), rp);
                    const Eigen::MatrixXd grad_phys = erb.gradients[0] * geom.jac_inv;
                    const Eigen::VectorXcd ul = space.local_coeffs(uh, t);
                    const Eigen::Vector2cd grad =
                        grad_phys.transpose().cast<Complex>() * ul;
                    dn[side] = grad(0) * normal.x() + grad(1) * normal.y();
                }
                jump(q) = std::sqrt(elen) * (dn[0] - dn[1]);
            }
            evals[static_cast<size_t>(iedge_of_edge[e])] = std::move(jump);
        }
    });
    return field;
}

// All-zero field with the element structure of the given mesh; handy as the
// trivial estimator stub.
inline EstimatorField zero_estimator_field(std::shared_ptr<const TriMesh> mesh,
                                           int npoles) {
    EstimatorField field;
    field.mesh = std::move(mesh);
    field.npoles = npoles;
    field.ncomp = 1;
    const int nt = field.mesh->num_triangles();
    const QuadRule& rule = triangle_rule(4);
    field.elem_vals.assign(static_cast<size_t>(npoles),
                           std::vector<Eigen::MatrixXcd>(
                               static_cast<size_t>(nt),
                               Eigen::MatrixXcd::Zero(1, rule.points.rows())));
    field.elem_w.resize(static_cast<size_t>(nt));
    for (int t = 0; t < nt; ++t) {
        const ElemGeom geom = element_geometry(*field.mesh, t);
        field.elem_w[static_cast<size_t>(t)] = rule.weights * geom.area;
    }
    field.edge_vals.assign(static_cast<size_t>(npoles), {});
    return field;
}

}  // namespace clustergap
