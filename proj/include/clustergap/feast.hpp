#pragma once
// Filtered subspace iteration: repeatedly applies the rational filter of the
// discrete resolvent to a block of fields, orthonormalizes in the V inner
// product, extracts Ritz values of the underlying operator by Rayleigh-Ritz,
// and stops once the accepted Ritz set stabilizes. The converged invariant
// subspace is pulled out through a small contour-quadrature projector, which
// stays robust for defective or tightly clustered Ritz values.

#include <algorithm>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "clustergap/fem.hpp"
#include "clustergap/filters.hpp"
#include "clustergap/subspace.hpp"
#include "clustergap/util.hpp"

namespace clustergap {

// Discrete resolvent plus the inner products the iteration needs. Inner
// products follow the (u, v) = "linear in u, conjugate in v" convention.
class ResolventBackend {
public:
    virtual ~ResolventBackend() = default;
    virtual Eigen::Index dim() const = 0;
    virtual VectorXc solve(Complex z, const VectorXc& f) const = 0;
    // a(u, w): the operator's sesquilinear form (test function second).
    virtual Complex form_a(const VectorXc& u, const VectorXc& w) const = 0;
    // (u, w) in the pivot (L2-like) inner product.
    virtual Complex inner_b(const VectorXc& u, const VectorXc& w) const = 0;
    // (u, w) in the V inner product used for orthonormalization and gaps.
    virtual Complex inner_v(const VectorXc& u, const VectorXc& w) const = 0;

    PairInner v_inner_fn() const {
        return [this](const VectorXc& u, const VectorXc& w) { return inner_v(u, w); };
    }
};

class DenseBackend : public ResolventBackend {
public:
    explicit DenseBackend(Eigen::MatrixXcd a) : a_(std::move(a)) {
        if (a_.rows() != a_.cols())
            throw std::invalid_argument("dense backend needs a square matrix");
    }
    Eigen::Index dim() const override { return a_.rows(); }
    VectorXc solve(Complex z, const VectorXc& f) const override {
        return factor(z).solve(f);
    }
    Complex form_a(const VectorXc& u, const VectorXc& w) const override {
        return w.dot(a_ * u);
    }
    Complex inner_b(const VectorXc& u, const VectorXc& w) const override {
        return w.dot(u);
    }
    Complex inner_v(const VectorXc& u, const VectorXc& w) const override {
        return w.dot(u);
    }
    const Eigen::MatrixXcd& matrix() const { return a_; }

private:
    const Eigen::FullPivLU<Eigen::MatrixXcd>& factor(Complex z) const {
        const auto key = std::make_pair(z.real(), z.imag());
        std::scoped_lock lock(mutex_);
        auto it = cache_.find(key);
        if (it == cache_.end()) {
            Eigen::MatrixXcd shifted =
                z * Eigen::MatrixXcd::Identity(a_.rows(), a_.cols()) - a_;
            auto lu = std::make_unique<Eigen::FullPivLU<Eigen::MatrixXcd>>(shifted);
            if (!lu->isInvertible())
                throw std::runtime_error("dense backend: pole shift hits the spectrum");
            it = cache_.emplace(key, std::move(lu)).first;
        }
        return *it->second;
    }
    Eigen::MatrixXcd a_;
    mutable std::map<std::pair<double, double>,
                     std::unique_ptr<Eigen::FullPivLU<Eigen::MatrixXcd>>>
        cache_;
    mutable std::mutex mutex_;
};

class CgBackend : public ResolventBackend {
public:
    explicit CgBackend(std::shared_ptr<const CgSolver> solver)
        : solver_(std::move(solver)) {}
    Eigen::Index dim() const override { return solver_->forms().dof_count; }
    VectorXc solve(Complex z, const VectorXc& f) const override {
        return solver_->solve(z, f);
    }
    Complex form_a(const VectorXc& u, const VectorXc& w) const override {
        return w.dot(solver_->forms().stiffness * u);
    }
    Complex inner_b(const VectorXc& u, const VectorXc& w) const override {
        return w.dot(solver_->forms().mass * u);
    }
    Complex inner_v(const VectorXc& u, const VectorXc& w) const override {
        return w.dot(solver_->forms().h1 * u);
    }
    const CgSolver& solver() const { return *solver_; }

private:
    std::shared_ptr<const CgSolver> solver_;
};

class FoslsBackend : public ResolventBackend {
public:
    explicit FoslsBackend(std::shared_ptr<const FoslsSolver> solver)
        : solver_(std::move(solver)) {
        stiff_ = solver_->scalar_stiffness().cast<Complex>();
        mass_ = solver_->scalar_mass().cast<Complex>();
        h1_ = stiff_ + mass_;
    }
    Eigen::Index dim() const override { return solver_->scalar_dofs(); }
    VectorXc solve(Complex z, const VectorXc& f) const override {
        return solver_->solve(z, f).second;
    }
    Complex form_a(const VectorXc& u, const VectorXc& w) const override {
        return w.dot(stiff_ * u);
    }
    Complex inner_b(const VectorXc& u, const VectorXc& w) const override {
        return w.dot(mass_ * u);
    }
    Complex inner_v(const VectorXc& u, const VectorXc& w) const override {
        return w.dot(h1_ * u);
    }
    const FoslsSolver& solver() const { return *solver_; }

private:
    std::shared_ptr<const FoslsSolver> solver_;
    SparseMatrixXc stiff_, mass_, h1_;
};

// omega0 Q + sum_j w_j R(z_j) Q, with the per-pole solves independent.
inline Eigen::MatrixXcd apply_filter_block(const ResolventBackend& backend,
                                           const RationalFilter& filter,
                                           const Eigen::MatrixXcd& q) {
    filter.validate();
    const int npoles = static_cast<int>(filter.poles.size());
    std::vector<Eigen::MatrixXcd> parts(static_cast<size_t>(npoles));
    parallel_for_index(npoles, [&](int j) {
        const auto& pole = filter.poles[static_cast<size_t>(j)];
        Eigen::MatrixXcd part(q.rows(), q.cols());
        for (Eigen::Index c = 0; c < q.cols(); ++c)
            part.col(c) = backend.solve(pole.z, q.col(c));
        parts[static_cast<size_t>(j)] = pole.weight * part;
    });
    Eigen::MatrixXcd out = filter.omega0 * q;
    for (const auto& part : parts) out += part;
    return out;
}

enum class FeastStatus { converged, max_iterations, empty_contour };

struct ClusterResult {
    Eigen::MatrixXcd basis;             // V-orthonormal columns spanning E_h
    std::vector<Complex> ritz_values;   // accepted values, with multiplicity
    int iterations = 0;
    std::vector<double> residual_history;  // successive Ritz-set distances
    FeastStatus status = FeastStatus::max_iterations;
    unsigned long seed = 0;
};

namespace detail {

// Invariant-subspace coefficients for the pencil eigenvalues inside the
// circle, via a trapezoid quadrature of the resolvent of the reduced matrix.
inline Eigen::MatrixXcd small_spectral_subspace(const Eigen::MatrixXcd& reduced,
                                                Complex center, double radius,
                                                int count) {
    const Eigen::Index m = reduced.rows();
    Eigen::MatrixXcd proj = Eigen::MatrixXcd::Zero(m, m);
    const int nodes = 256;
    for (int k = 0; k < nodes; ++k) {
        const Complex rot = std::exp(Complex(0.0, 2.0 * kPi * (k + 0.5) / nodes));
        const Complex offset = radius * rot;
        proj += offset * (((center + offset) * Eigen::MatrixXcd::Identity(m, m) - reduced)
                              .partialPivLu()
                              .solve(Eigen::MatrixXcd::Identity(m, m)));
    }
    proj /= static_cast<double>(nodes);
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(proj, Eigen::ComputeFullU);
    return svd.matrixU().leftCols(count);
}

}  // namespace detail

// Filtered subspace iteration with m-column blocks. Ritz values are taken
// from the pencil (a(q_j, q_i), (q_j, q_i)_B) on the iterated block, accepted
// inside the contour with a 5% radius margin, and iterated until the
// accepted set moves less than tol * (1 + |center|) between iterations.
inline ClusterResult feast_iterate(const ResolventBackend& backend,
                                   const RationalFilter& filter,
                                   const ContourCircle& gamma, int m,
                                   unsigned long seed, double tol = 1e-10,
                                   int maxit = 50) {
    gamma.validate();
    filter.validate();
    const Eigen::Index n = backend.dim();
    if (m < 1 || m > n)
        throw std::invalid_argument("feast_iterate: block size out of range");
    const double accept_radius = gamma.radius * 1.05;

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss;
    Eigen::MatrixXcd block(n, m);
    for (Eigen::Index j = 0; j < m; ++j)
        for (Eigen::Index i = 0; i < n; ++i)
            block(i, j) = Complex(gauss(rng), gauss(rng));

    const PairInner vin = backend.v_inner_fn();
    Eigen::MatrixXcd q = orthonormalize(block, vin);

    ClusterResult result;
    result.seed = seed;
    std::vector<Complex> prev_accepted;
    int consecutive_empty = 0;

    for (int iter = 1; iter <= maxit; ++iter) {
        result.iterations = iter;
        q = orthonormalize(apply_filter_block(backend, filter, q), vin);

        Eigen::MatrixXcd a_small(m, m), b_small(m, m);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < m; ++j) {
                a_small(i, j) = backend.form_a(q.col(j), q.col(i));
                b_small(i, j) = backend.inner_b(q.col(j), q.col(i));
            }
        Eigen::LLT<Eigen::MatrixXcd> llt(0.5 * (b_small + b_small.adjoint()));
        if (llt.info() != Eigen::Success)
            throw std::runtime_error("feast_iterate: degenerate iteration block");
        const Eigen::MatrixXcd x = llt.matrixL().solve(a_small);
        const Eigen::MatrixXcd reduced = llt.matrixL().solve(x.adjoint()).adjoint();
        Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(reduced, false);

        std::vector<Complex> accepted, rejected;
        for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
            const Complex mu = es.eigenvalues()(i);
            (std::abs(mu - gamma.center) <= accept_radius ? accepted : rejected)
                .push_back(mu);
        }
        std::sort(accepted.begin(), accepted.end(), [](Complex a, Complex b) {
            return a.real() != b.real() ? a.real() < b.real() : a.imag() < b.imag();
        });

        if (accepted.empty()) {
            if (++consecutive_empty >= 5 || iter == maxit) {
                result.status = FeastStatus::empty_contour;
                result.basis.resize(n, 0);
                result.ritz_values.clear();
                return result;
            }
            prev_accepted.clear();
            continue;
        }
        consecutive_empty = 0;

        bool converged = false;
        if (!prev_accepted.empty()) {
            const double dist = hausdorff(accepted, prev_accepted);
            result.residual_history.push_back(dist);
            converged = dist < tol * (1.0 + std::abs(gamma.center));
        }
        prev_accepted = accepted;

        if (converged || iter == maxit) {
            double max_acc = 0.0;
            for (const Complex& mu : accepted)
                max_acc = std::max(max_acc, std::abs(mu - gamma.center));
            double min_rej = std::numeric_limits<double>::infinity();
            for (const Complex& mu : rejected)
                min_rej = std::min(min_rej, std::abs(mu - gamma.center));
            const double proj_radius =
                rejected.empty() ? accept_radius : 0.5 * (max_acc + min_rej);
            const Eigen::MatrixXcd y_sub = detail::small_spectral_subspace(
                reduced, gamma.center, proj_radius, static_cast<int>(accepted.size()));
            // reduced acts on y = L^H x coordinates; map back and renormalize.
            const Eigen::MatrixXcd coeff = llt.matrixU().solve(y_sub);
            result.basis = orthonormalize((q * coeff).eval(), vin);
            result.ritz_values = accepted;
            result.status =
                converged ? FeastStatus::converged : FeastStatus::max_iterations;
            return result;
        }
    }
    return result;
}

}  // namespace clustergap
