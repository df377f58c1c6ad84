#pragma once
// Subspace geometry in a user-supplied inner product: orthonormalization,
// gaps via cross-Gram SVD, Hausdorff distances between finite spectra, and
// the small Hermitian pencil extracting the worst estimator direction.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "clustergap/util.hpp"

namespace clustergap {

// Inner-product convention throughout: (u, v) is linear in u and conjugate
// linear in v, i.e. (u, v) = v^H B u for a Hermitian positive matrix B.
using PairInner =
    std::function<Complex(const Eigen::VectorXcd&, const Eigen::VectorXcd&)>;

inline Complex euclidean_inner(const Eigen::VectorXcd& u, const Eigen::VectorXcd& v) {
    return v.dot(u);
}

// Modified Gram-Schmidt with one reorthogonalization pass. Throws when a
// column collapses: the input was (numerically) linearly dependent.
inline Eigen::MatrixXcd orthonormalize(const Eigen::MatrixXcd& x,
                                       const PairInner& inner,
                                       double drop_tol = 1e-12) {
    const Eigen::Index n = x.rows();
    const Eigen::Index m = x.cols();
    Eigen::MatrixXcd q(n, m);
    for (Eigen::Index j = 0; j < m; ++j) {
        Eigen::VectorXcd v = x.col(j);
        const double scale0 = std::sqrt(std::abs(inner(v, v))) + 1e-300;
        for (int pass = 0; pass < 2; ++pass)
            for (Eigen::Index i = 0; i < j; ++i) {
                const Complex c = inner(v, q.col(i));
                v -= c * q.col(i);
            }
        const double nv = std::sqrt(std::max(0.0, std::real(inner(v, v))));
        if (!(nv > drop_tol * scale0))
            throw std::runtime_error("orthonormalize: linearly dependent basis");
        q.col(j) = v / nv;
    }
    return q;
}

inline Eigen::MatrixXcd orthonormalize(const Eigen::MatrixXcd& x) {
    return orthonormalize(x, euclidean_inner);
}

namespace detail {

// delta(U, W) = ||(I - Q_W) Q_U|| for inner-orthonormal bases. Forming the
// residual vectors explicitly keeps accuracy down to machine precision; the
// cross-Gram shortcut sqrt(1 - smin^2) bottoms out at sqrt(eps).
inline double directed_gap(const Eigen::MatrixXcd& qu, const Eigen::MatrixXcd& qw,
                           const PairInner& inner) {
    const Eigen::Index ku = qu.cols();
    const Eigen::Index kw = qw.cols();
    Eigen::MatrixXcd cross(kw, ku);  // cross(i, j) = (qu_j, qw_i)
    for (Eigen::Index i = 0; i < kw; ++i)
        for (Eigen::Index j = 0; j < ku; ++j)
            cross(i, j) = inner(qu.col(j), qw.col(i));
    const Eigen::MatrixXcd resid = qu - qw * cross;
    Eigen::MatrixXcd gram(ku, ku);
    for (Eigen::Index i = 0; i < ku; ++i)
        for (Eigen::Index j = 0; j < ku; ++j)
            gram(i, j) = inner(resid.col(j), resid.col(i));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(0.5 * (gram + gram.adjoint()));
    const double lam = std::max(0.0, es.eigenvalues().maxCoeff());
    return std::min(1.0, std::sqrt(lam));
}

}  // namespace detail

// gap(U, W) = max(delta(U, W), delta(W, U)) with
// delta(U, W) = ||(I - Q_W) Q_U|| in the supplied inner product.
// Bases of unequal dimension are at gap 1.
inline double subspace_gap(const Eigen::MatrixXcd& u_basis,
                           const Eigen::MatrixXcd& w_basis,
                           const PairInner& inner) {
    const Eigen::Index ku = u_basis.cols();
    const Eigen::Index kw = w_basis.cols();
    if (ku == 0 && kw == 0) return 0.0;
    if (ku == 0 || kw == 0) return 1.0;
    if (ku != kw) return 1.0;
    const Eigen::MatrixXcd qu = orthonormalize(u_basis, inner);
    const Eigen::MatrixXcd qw = orthonormalize(w_basis, inner);
    return std::max(detail::directed_gap(qu, qw, inner),
                    detail::directed_gap(qw, qu, inner));
}

inline double subspace_gap(const Eigen::MatrixXcd& u_basis,
                           const Eigen::MatrixXcd& w_basis) {
    return subspace_gap(u_basis, w_basis, euclidean_inner);
}

// Hausdorff distance between two non-empty finite sets in the plane.
inline double hausdorff(const std::vector<Complex>& s1,
                        const std::vector<Complex>& s2) {
    if (s1.empty() || s2.empty())
        throw std::invalid_argument("hausdorff distance needs non-empty sets");
    auto directed = [](const std::vector<Complex>& a, const std::vector<Complex>& b) {
        double worst = 0.0;
        for (const Complex& x : a) {
            double best = std::numeric_limits<double>::infinity();
            for (const Complex& y : b) best = std::min(best, std::abs(x - y));
            worst = std::max(worst, best);
        }
        return worst;
    };
    return std::max(directed(s1, s2), directed(s2, s1));
}

// Largest eigenpair of the Hermitian pencil G x = lambda M x with M
// positive definite, via a Cholesky congruence M = L L^H.
inline std::pair<double, Eigen::VectorXcd> worst_direction(
    const Eigen::MatrixXcd& g, const Eigen::MatrixXcd& m) {
    if (g.rows() != g.cols() || m.rows() != m.cols() || g.rows() != m.rows())
        throw std::invalid_argument("worst_direction: size mismatch");
    const Eigen::MatrixXcd gs = 0.5 * (g + g.adjoint());
    const Eigen::MatrixXcd ms = 0.5 * (m + m.adjoint());
    Eigen::LLT<Eigen::MatrixXcd> llt(ms);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error(
            "worst_direction: mass Gram matrix is not positive definite "
            "(linearly dependent basis?)");
    const Eigen::MatrixXcd x = llt.matrixL().solve(gs);
    Eigen::MatrixXcd k = llt.matrixL().solve(x.adjoint()).adjoint();
    k = 0.5 * (k + k.adjoint()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(k);
    const Eigen::Index last = k.rows() - 1;
    const double lambda_hat = std::max(0.0, es.eigenvalues()(last));
    const Eigen::VectorXcd xhat = llt.matrixU().solve(es.eigenvectors().col(last));
    return {lambda_hat, xhat};
}

}  // namespace clustergap
