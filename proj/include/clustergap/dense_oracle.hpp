#pragma once
// Dense ground truth at small scale: generalized eigenspaces by growing
// kernels, r(A) by shifted LU solves, contour-quadrature spectral
// projectors, and brute-force checks of the eigenspace mapping identity
// E_mu(r(A)) = (+) E_lambda(A) over the inverse images of mu.

#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "clustergap/filters.hpp"
#include "clustergap/subspace.hpp"
#include "clustergap/util.hpp"

namespace clustergap {

// Square complex matrix capped at oracle scale so brute-force checks stay
// sub-second.
class DenseOperator {
public:
    explicit DenseOperator(Eigen::MatrixXcd m) : m_(std::move(m)) {
        if (m_.rows() != m_.cols())
            throw std::invalid_argument("operator matrix must be square");
        if (m_.rows() < 1 || m_.rows() > 64)
            throw std::invalid_argument("oracle operators are limited to 1..64 rows");
        if (!m_.allFinite())
            throw std::invalid_argument("operator entries must be finite");
    }
    const Eigen::MatrixXcd& matrix() const { return m_; }
    Eigen::Index size() const { return m_.rows(); }

private:
    Eigen::MatrixXcd m_;
};

struct SubspaceBasis {
    Eigen::MatrixXcd vectors;  // orthonormal columns
    Eigen::Index dim() const { return vectors.cols(); }
};

inline std::vector<Complex> spectrum(const DenseOperator& a) {
    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(a.matrix(), false);
    return {es.eigenvalues().data(), es.eigenvalues().data() + a.size()};
}

// Orthonormal basis of the union over n of ker (A - lambda)^n, grown until
// the kernel dimension stagnates. Rank decisions use the threshold
// tol * sigma_max. Returns a zero-dimensional basis when lambda is not an
// eigenvalue to within tol.
inline SubspaceBasis generalized_eigenspace(const DenseOperator& a, Complex lambda,
                                            double tol = 1e-9) {
    const Eigen::Index n = a.size();
    Eigen::MatrixXcd shifted = a.matrix() - lambda * Eigen::MatrixXcd::Identity(n, n);
    const double fnorm = shifted.norm();
    if (fnorm == 0.0)  // A == lambda * I
        return {Eigen::MatrixXcd::Identity(n, n)};
    // Normalizing the factor (not the accumulated power) keeps the singular
    // values of B^k / ||B||^k meaningful: kernel directions collapse below
    // tol while surviving directions stay O(1) for well-separated spectra.
    shifted /= fnorm;
    Eigen::MatrixXcd power = shifted;
    Eigen::MatrixXcd basis(n, 0);
    Eigen::Index prev_dim = -1;
    for (Eigen::Index k = 1; k <= n; ++k) {
        Eigen::JacobiSVD<Eigen::MatrixXcd> svd(power, Eigen::ComputeFullV);
        const auto& sv = svd.singularValues();
        Eigen::Index dim = 0;
        for (Eigen::Index i = 0; i < n; ++i)
            if (sv(i) <= tol) ++dim;
        if (dim == prev_dim) break;
        prev_dim = dim;
        basis = svd.matrixV().rightCols(dim);
        if (dim == n || dim == 0) break;
        power = power * shifted;
    }
    return {basis};
}

// r(A) = omega0 I + sum_j w_j (z_j I - A)^{-1} by dense LU.
inline DenseOperator apply_filter(const DenseOperator& a, const RationalFilter& r) {
    r.validate();
    const Eigen::Index n = a.size();
    Eigen::MatrixXcd out = r.omega0 * Eigen::MatrixXcd::Identity(n, n);
    for (const auto& p : r.poles) {
        Eigen::MatrixXcd shifted =
            p.z * Eigen::MatrixXcd::Identity(n, n) - a.matrix();
        Eigen::FullPivLU<Eigen::MatrixXcd> lu(shifted);
        if (!lu.isInvertible())
            throw std::runtime_error(
                "apply_filter: pole shift is numerically singular (pole on the "
                "spectrum?)");
        out += p.weight * lu.inverse();
    }
    return DenseOperator(out);
}

struct RieszInfo {
    double max_resolvent_norm = 0.0;
    bool near_contour = false;  // resolvent norm exceeded 1e8 at a node
};

// Trapezoid quadrature of (2*pi*i)^{-1} * contour integral of (z - A)^{-1}.
inline DenseOperator riesz_projector(const DenseOperator& a, const ContourCircle& c,
                                     RieszInfo* info = nullptr) {
    c.validate();
    const Eigen::Index n = a.size();
    Eigen::MatrixXcd acc = Eigen::MatrixXcd::Zero(n, n);
    double max_norm = 0.0;
    for (int k = 0; k < c.nquad; ++k) {
        const Complex rot =
            std::exp(Complex(0.0, 2.0 * kPi * k / static_cast<double>(c.nquad)));
        const Complex offset = c.radius * c.phase * rot;
        const Complex zk = c.center + offset;
        Eigen::MatrixXcd shifted = zk * Eigen::MatrixXcd::Identity(n, n) - a.matrix();
        Eigen::FullPivLU<Eigen::MatrixXcd> lu(shifted);
        if (!lu.isInvertible())
            throw std::runtime_error("riesz_projector: quadrature node hits the spectrum");
        const Eigen::MatrixXcd res = lu.inverse();
        max_norm = std::max(max_norm, res.norm());
        acc += offset * res;
    }
    acc /= static_cast<double>(c.nquad);
    if (info) {
        info->max_resolvent_norm = max_norm;
        info->near_contour = max_norm > 1e8;
    }
    return DenseOperator(acc);
}

// Eigenvalues of the pencil A x = lambda B x with B Hermitian positive
// definite, via a Cholesky congruence.
inline std::vector<Complex> pencil_eigenvalues(const Eigen::MatrixXcd& a,
                                               const Eigen::MatrixXcd& b) {
    if (a.rows() != a.cols() || b.rows() != b.cols() || a.rows() != b.rows())
        throw std::invalid_argument("pencil_eigenvalues: size mismatch");
    Eigen::LLT<Eigen::MatrixXcd> llt(0.5 * (b + b.adjoint()));
    if (llt.info() != Eigen::Success)
        throw std::runtime_error("pencil_eigenvalues: B is not positive definite");
    const Eigen::MatrixXcd x = llt.matrixL().solve(a);
    const Eigen::MatrixXcd c = llt.matrixL().solve(x.adjoint()).adjoint();
    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(c, false);
    return {es.eigenvalues().data(), es.eigenvalues().data() + a.rows()};
}

namespace detail {

// Direct sum of generalized eigenspaces of A over the inverse images of mu
// that meet the spectrum.
inline Eigen::MatrixXcd mapped_preimage_sum(const DenseOperator& a,
                                            const RationalFilter& r, Complex mu,
                                            double match_tol) {
    const std::vector<Complex> spec = spectrum(a);
    const InverseImage inv = inverse_image(r, mu, 1e-10);
    Eigen::MatrixXcd sum(a.size(), 0);
    for (const Complex& root : inv.roots) {
        double dist = std::numeric_limits<double>::infinity();
        for (const Complex& s : spec) dist = std::min(dist, std::abs(root - s));
        if (dist > match_tol * (1.0 + std::abs(root))) continue;
        const SubspaceBasis part = generalized_eigenspace(a, root);
        if (part.dim() == 0) continue;
        Eigen::MatrixXcd grown(a.size(), sum.cols() + part.dim());
        grown << sum, part.vectors;
        sum = grown;
    }
    return sum;
}

}  // namespace detail

// Gap between the generalized eigenspace of r(A) at mu and the direct sum of
// generalized eigenspaces of A over the inverse images of mu. Near zero
// certifies the mapping identity on this instance.
inline double eigenspace_mapping_gap(const DenseOperator& a, const RationalFilter& r,
                                     Complex mu, double match_tol = 1e-5) {
    const SubspaceBasis lhs = generalized_eigenspace(apply_filter(a, r), mu);
    const Eigen::MatrixXcd rhs = detail::mapped_preimage_sum(a, r, mu, match_tol);
    if (lhs.dim() == 0 && rhs.cols() == 0) return 0.0;
    return subspace_gap(lhs.vectors, rhs);
}

// Checks m(mu, r(A)) == sum of m(lambda, A) over the inverse images of mu.
inline bool multiplicities_consistent(const DenseOperator& a, const RationalFilter& r,
                                      Complex mu, double match_tol = 1e-5) {
    const SubspaceBasis lhs = generalized_eigenspace(apply_filter(a, r), mu);
    const Eigen::MatrixXcd rhs = detail::mapped_preimage_sum(a, r, mu, match_tol);
    return lhs.dim() == rhs.cols();
}

}  // namespace clustergap
