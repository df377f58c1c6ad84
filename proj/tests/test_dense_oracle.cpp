#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "clustergap/dense_oracle.hpp"
#include "support.hpp"

using namespace clustergap;
using testsupport::kernel_basis;
using testsupport::make_jordan_instance;
using testsupport::make_random_filter;

namespace {

const Complex kI(0.0, 1.0);

DenseOperator jordan_3x3() {
    Eigen::MatrixXcd a = Eigen::MatrixXcd::Zero(3, 3);
    a(0, 0) = -0.5;
    a(1, 1) = 0.5;
    a(1, 2) = 1.0;
    a(2, 2) = 0.5;
    return DenseOperator(a);
}

DenseOperator cayley_3x3() {
    Eigen::MatrixXcd a = Eigen::MatrixXcd::Zero(3, 3);
    a(0, 0) = Complex(10.0, -1.0);
    a(1, 1) = Complex(10.0, 1.0);
    a(1, 2) = 1.0;
    a(2, 2) = Complex(10.0, 1.0);
    return DenseOperator(a);
}

RationalFilter inverse_quadratic_filter() {
    RationalFilter f;
    f.poles.push_back({kI, -0.5 * kI});
    f.poles.push_back({-kI, 0.5 * kI});
    return f;
}

}  // namespace

TEST_CASE("generalized eigenspaces of the 3x3 Jordan example", "[dense_oracle]") {
    const DenseOperator a = jordan_3x3();

    const SubspaceBasis e_minus = generalized_eigenspace(a, Complex(-0.5, 0.0));
    REQUIRE(e_minus.dim() == 1);
    Eigen::VectorXcd e1 = Eigen::VectorXcd::Zero(3);
    e1(0) = 1.0;
    CHECK(subspace_gap(e_minus.vectors, e1) < 1e-10);

    const SubspaceBasis e_plus = generalized_eigenspace(a, Complex(0.5, 0.0));
    REQUIRE(e_plus.dim() == 2);
    Eigen::MatrixXcd e23 = Eigen::MatrixXcd::Zero(3, 2);
    e23(1, 0) = 1.0;
    e23(2, 1) = 1.0;
    CHECK(subspace_gap(e_plus.vectors, e23) < 1e-10);

    CHECK(generalized_eigenspace(a, Complex(7.0, 0.0)).dim() == 0);

    const DenseOperator id(Eigen::MatrixXcd::Identity(5, 5));
    CHECK(generalized_eigenspace(id, Complex(1.0, 0.0)).dim() == 5);
}

TEST_CASE("generalized eigenspaces match prescribed Jordan blocks", "[dense_oracle]") {
    std::mt19937 rng(314159u);
    for (int trial = 0; trial < 20; ++trial) {
        const auto inst = make_jordan_instance(rng, 6);
        const DenseOperator a(inst.matrix);
        int offset = 0;
        for (const auto& [lambda, mult] : inst.eigenvalues) {
            const SubspaceBasis space = generalized_eigenspace(a, lambda);
            REQUIRE(space.dim() == mult);
            // Oracle route: kernel of the explicit normalized matrix power.
            const Eigen::MatrixXcd power =
                testsupport::normalized_factor_product(inst.matrix, {{lambda, mult}});
            const Eigen::MatrixXcd oracle = kernel_basis(power, 1e-10, 1.0);
            REQUIRE(oracle.cols() == mult);
            CHECK(subspace_gap(space.vectors, oracle) < 1e-8);
            offset += mult;
        }
    }
}

TEST_CASE("filter applied to the paper matrices", "[dense_oracle]") {
    const DenseOperator a = jordan_3x3();
    const DenseOperator ra = apply_filter(a, inverse_quadratic_filter());
    for (int i = 0; i < 3; ++i)
        CHECK(std::abs(ra.matrix()(i, i) - Complex(-0.8, 0.0)) < 1e-12);
    CHECK(std::abs(ra.matrix()(1, 2) - Complex(16.0 / 25.0, 0.0)) < 1e-12);
    CHECK(std::abs(ra.matrix()(0, 1)) < 1e-12);
    CHECK(std::abs(ra.matrix()(2, 1)) < 1e-12);

    const DenseOperator ca = apply_filter(cayley_3x3(), cayley());
    CHECK(std::abs(ca.matrix()(0, 0) - Complex(1.0, -0.2)) < 1e-12);
    CHECK(std::abs(ca.matrix()(1, 1) - Complex(25.0 / 26.0, -5.0 / 26.0)) < 1e-12);
    // Derivative oracle for the Jordan coupling entry: r'(a) = 2i/(a+i)^2
    // evaluated at a = 10+i, which simplifies to (5+12i)/676.
    const Complex deriv = 2.0 * kI / std::pow(Complex(10.0, 2.0), 2.0);
    CHECK(std::abs(deriv - Complex(5.0, 12.0) / 676.0) < 1e-16);
    CHECK(std::abs(ca.matrix()(1, 2) - deriv) < 1e-12);

    RationalFilter constant;
    constant.omega0 = Complex(2.0, 0.0);
    constant.poles.push_back({Complex(40.0, 0.0), Complex(0.0, 0.0)});
    const DenseOperator twice = apply_filter(a, constant);
    CHECK((twice.matrix() - 2.0 * Eigen::MatrixXcd::Identity(3, 3)).norm() < 1e-12);

    RationalFilter on_spectrum;
    on_spectrum.poles.push_back({Complex(0.5, 0.0), Complex(1.0, 0.0)});
    CHECK_THROWS_AS(apply_filter(a, on_spectrum), std::runtime_error);
}

TEST_CASE("filter commutes with the operator", "[dense_oracle]") {
    std::mt19937 rng(99u);
    const auto inst = make_jordan_instance(rng, 6);
    const DenseOperator a(inst.matrix);
    std::vector<Complex> spec;
    for (const auto& [lam, m] : inst.eigenvalues) spec.push_back(lam);
    const RationalFilter f = make_random_filter(rng, spec);
    const Eigen::MatrixXcd ra = apply_filter(a, f).matrix();
    const double scale = ra.norm() * inst.matrix.norm();
    CHECK((ra * inst.matrix - inst.matrix * ra).norm() < 1e-10 * scale);
}

TEST_CASE("contour-quadrature spectral projector", "[dense_oracle]") {
    Eigen::MatrixXcd d = Eigen::MatrixXcd::Zero(2, 2);
    d(0, 0) = 1.0;
    d(1, 1) = 5.0;
    const DenseOperator diag(d);
    const DenseOperator p = riesz_projector(diag, make_contour(Complex(1.0, 0.0), 1.0, 64));
    Eigen::MatrixXcd expected = Eigen::MatrixXcd::Zero(2, 2);
    expected(0, 0) = 1.0;
    CHECK((p.matrix() - expected).norm() < 1e-10);

    // Projector onto the generalized eigenspace of the defective eigenvalue.
    const DenseOperator a = jordan_3x3();
    const DenseOperator pj = riesz_projector(a, make_contour(Complex(0.5, 0.0), 0.3, 64));
    Eigen::MatrixXcd e23 = Eigen::MatrixXcd::Zero(3, 2);
    e23(1, 0) = 1.0;
    e23(2, 1) = 1.0;
    CHECK((pj.matrix() * pj.matrix() - pj.matrix()).norm() < 1e-8);
    CHECK(std::abs(pj.matrix().trace() - Complex(2.0, 0.0)) < 1e-8);
    CHECK((pj.matrix() * e23 - e23).norm() < 1e-8);

    // Random normal matrix with a three-eigenvalue cluster isolated by the
    // circle; compare against the exact spectral projector.
    std::mt19937 rng(2024u);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    Eigen::MatrixXcd g(8, 8);
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j) g(i, j) = Complex(unit(rng), unit(rng));
    const Eigen::HouseholderQR<Eigen::MatrixXcd> qr(g);
    const Eigen::MatrixXcd q = qr.householderQ();
    Eigen::VectorXcd evals(8);
    const Complex center(0.0, 0.0);
    evals << Complex(0.2, 0.1), Complex(-0.3, -0.2), Complex(0.1, -0.4),
        Complex(2.0, 0.0), Complex(0.0, 2.5), Complex(-2.2, 1.0), Complex(3.0, -1.0),
        Complex(-1.8, -1.9);
    const Eigen::MatrixXcd normal = q * evals.asDiagonal() * q.adjoint();
    RieszInfo info;
    const DenseOperator proj =
        riesz_projector(DenseOperator(normal), make_contour(center, 1.0, 128), &info);
    Eigen::MatrixXcd exact = Eigen::MatrixXcd::Zero(8, 8);
    for (int k = 0; k < 3; ++k) exact += q.col(k) * q.col(k).adjoint();
    CHECK((proj.matrix() - exact).norm() < 1e-8);
    CHECK(std::abs(proj.matrix().trace() - Complex(3.0, 0.0)) < 1e-8);
    CHECK_FALSE(info.near_contour);
}

TEST_CASE("mapped eigenspace decomposition on the paper examples", "[dense_oracle]") {
    const DenseOperator a = jordan_3x3();
    const RationalFilter f = inverse_quadratic_filter();
    CHECK(eigenspace_mapping_gap(a, f, Complex(-0.8, 0.0)) < 1e-9);
    CHECK(generalized_eigenspace(apply_filter(a, f), Complex(-0.8, 0.0)).dim() == 3);
    CHECK(multiplicities_consistent(a, f, Complex(-0.8, 0.0)));

    const DenseOperator c = cayley_3x3();
    const Complex mu2(25.0 / 26.0, -5.0 / 26.0);
    CHECK(eigenspace_mapping_gap(c, cayley(), mu2) < 1e-9);
    CHECK(generalized_eigenspace(apply_filter(c, cayley()), mu2).dim() == 2);
    CHECK(multiplicities_consistent(c, cayley(), mu2));

    // Diagonal operator with an injective filter: singleton multiplicities.
    Eigen::MatrixXcd d = Eigen::MatrixXcd::Zero(3, 3);
    d(0, 0) = 1.0;
    d(1, 1) = 2.0;
    d(2, 2) = 4.0;
    CHECK(multiplicities_consistent(DenseOperator(d), cayley(), eval(cayley(), 2.0)));
}

TEST_CASE("mapped eigenspace decomposition randomized", "[dense_oracle]") {
    std::mt19937 rng(8675309u);
    int done = 0;
    while (done < 25) {
        const auto inst = make_jordan_instance(rng);
        std::vector<Complex> spec;
        for (const auto& [lam, m] : inst.eigenvalues) spec.push_back(lam);
        const RationalFilter f = make_random_filter(rng, spec);
        std::uniform_int_distribution<size_t> pick(0, spec.size() - 1);
        const Complex lambda = spec[pick(rng)];
        const Complex mu = eval(f, lambda);
        if (std::abs(mu - f.omega0) < 1e-2) continue;
        // Keep the instance generic: other mapped eigenvalues stay away
        // from mu unless they share its inverse image.
        bool clash = false;
        for (const Complex& s : spec) {
            const Complex ms = eval(f, s);
            if (std::abs(ms - mu) > 1e-12 && std::abs(ms - mu) < 1e-2) clash = true;
        }
        if (clash) continue;
        const DenseOperator a(inst.matrix);
        CHECK(eigenspace_mapping_gap(a, f, mu) < 1e-7);
        CHECK(multiplicities_consistent(a, f, mu));
        ++done;
    }
}

TEST_CASE("kernel of commuting factor products decomposes", "[dense_oracle]") {
    std::mt19937 rng(4242u);
    for (int trial = 0; trial < 10; ++trial) {
        const auto inst = make_jordan_instance(rng);
        if (inst.eigenvalues.size() < 2) continue;
        const auto [a1, n1] = inst.eigenvalues[0];
        const auto [a2, n2] = inst.eigenvalues[1];
        const Eigen::Index n = inst.matrix.rows();
        const Eigen::MatrixXcd prod = testsupport::normalized_factor_product(
            inst.matrix, {{a1, n1}, {a2, n2}});
        const Eigen::MatrixXcd lhs = kernel_basis(prod, 1e-10, 1.0);

        const Eigen::MatrixXcd k1 = kernel_basis(
            testsupport::normalized_factor_product(inst.matrix, {{a1, n1}}), 1e-10, 1.0);
        const Eigen::MatrixXcd k2 = kernel_basis(
            testsupport::normalized_factor_product(inst.matrix, {{a2, n2}}), 1e-10, 1.0);
        Eigen::MatrixXcd rhs(n, k1.cols() + k2.cols());
        rhs << k1, k2;
        REQUIRE(lhs.cols() == rhs.cols());
        CHECK(subspace_gap(lhs, orthonormalize(rhs)) < 1e-7);
    }
}

TEST_CASE("projector range matches enclosed eigenspaces", "[dense_oracle]") {
    const DenseOperator a = jordan_3x3();
    const DenseOperator p = riesz_projector(a, make_contour(Complex(0.5, 0.0), 0.4, 128));
    const Eigen::MatrixXcd range = kernel_basis(
        (p.matrix() - Eigen::MatrixXcd::Identity(3, 3)).eval(), 1e-6);
    const SubspaceBasis espace = generalized_eigenspace(a, Complex(0.5, 0.0));
    REQUIRE(range.cols() == espace.dim());
    CHECK(subspace_gap(range, espace.vectors) < 1e-6);
}

TEST_CASE("oracle scale and shape guards", "[dense_oracle]") {
    CHECK_THROWS_AS(DenseOperator(Eigen::MatrixXcd::Zero(2, 3)), std::invalid_argument);
    CHECK_THROWS_AS(DenseOperator(Eigen::MatrixXcd::Zero(65, 65)), std::invalid_argument);
}
