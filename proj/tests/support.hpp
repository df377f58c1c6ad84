#pragma once
// Shared generators and small oracles for the test suites.

#include <random>
#include <vector>

#include <Eigen/Dense>

#include "clustergap/filters.hpp"

namespace testsupport {

using clustergap::Complex;
using clustergap::RationalFilter;

struct JordanInstance {
    Eigen::MatrixXcd matrix;
    std::vector<std::pair<Complex, int>> eigenvalues;  // value, algebraic mult
};

// A = P J P^{-1} with prescribed Jordan blocks, well-separated eigenvalues,
// and moderate basis conditioning, so kernel ranks are unambiguous.
inline JordanInstance make_jordan_instance(std::mt19937& rng, int max_dim = 8) {
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::uniform_int_distribution<int> dim_pick(2, max_dim);
    const int n = dim_pick(rng);

    JordanInstance inst;
    Eigen::MatrixXcd jordan = Eigen::MatrixXcd::Zero(n, n);
    int filled = 0;
    while (filled < n) {
        std::uniform_int_distribution<int> bs(1, std::min(3, n - filled));
        const int block = bs(rng);
        Complex lambda;
        bool ok = false;
        while (!ok) {
            lambda = Complex(3.0 * unit(rng), 3.0 * unit(rng));
            ok = true;
            for (const auto& [mu, m] : inst.eigenvalues)
                if (std::abs(lambda - mu) < 1.0) ok = false;
        }
        inst.eigenvalues.push_back({lambda, block});
        for (int i = 0; i < block; ++i) {
            jordan(filled + i, filled + i) = lambda;
            if (i + 1 < block) jordan(filled + i, filled + i + 1) = Complex(1.0, 0.0);
        }
        filled += block;
    }

    Eigen::MatrixXcd basis;
    while (true) {
        basis = Eigen::MatrixXcd::Identity(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                basis(i, j) += 0.3 * Complex(unit(rng), unit(rng));
        Eigen::JacobiSVD<Eigen::MatrixXcd> svd(basis);
        if (svd.singularValues()(0) / svd.singularValues()(n - 1) < 25.0) break;
    }
    inst.matrix = basis * jordan * basis.inverse();
    return inst;
}

// Random simple-pole filter whose poles stay at least min_sep away from the
// given spectrum.
inline RationalFilter make_random_filter(std::mt19937& rng,
                                         const std::vector<Complex>& spectrum,
                                         double min_sep = 0.1) {
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::uniform_int_distribution<int> npoles_pick(1, 4);
    RationalFilter f;
    f.omega0 = Complex(unit(rng), unit(rng));
    const int npoles = npoles_pick(rng);
    for (int j = 0; j < npoles; ++j) {
        Complex z;
        bool ok = false;
        while (!ok) {
            z = Complex(4.0 * unit(rng), 4.0 * unit(rng));
            ok = true;
            for (const Complex& s : spectrum)
                if (std::abs(z - s) < min_sep) ok = false;
            for (const auto& p : f.poles)
                if (std::abs(z - p.z) < 0.2) ok = false;
        }
        f.poles.push_back({z, Complex(unit(rng) + 1.5, unit(rng))});
    }
    return f;
}

// Orthonormal kernel basis by SVD thresholding. With scale < 0 the
// threshold is relative to the largest singular value; otherwise it is
// tol * scale (use scale = 1 for products of norm-normalized factors).
inline Eigen::MatrixXcd kernel_basis(const Eigen::MatrixXcd& m, double tol = 1e-9,
                                     double scale = -1.0) {
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(m, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    const double ref = scale < 0.0 ? sv(0) : scale;
    Eigen::Index dim = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
        if (ref == 0.0 || sv(i) <= tol * ref) ++dim;
    return svd.matrixV().rightCols(dim);
}

// Product of norm-normalized shifted factors (alpha_i - A)^{n_i}; its kernel
// matches the unnormalized product's kernel.
inline Eigen::MatrixXcd normalized_factor_product(
    const Eigen::MatrixXcd& a,
    const std::vector<std::pair<Complex, int>>& factors) {
    const Eigen::Index n = a.rows();
    Eigen::MatrixXcd prod = Eigen::MatrixXcd::Identity(n, n);
    for (const auto& [alpha, power] : factors) {
        Eigen::MatrixXcd f = alpha * Eigen::MatrixXcd::Identity(n, n) - a;
        f /= f.norm();
        for (int k = 0; k < power; ++k) prod = prod * f;
    }
    return prod;
}

}  // namespace testsupport
