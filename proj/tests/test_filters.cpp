#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <sstream>

#include "clustergap/filters.hpp"

using namespace clustergap;

namespace {

const Complex kI(0.0, 1.0);

// r(z) = -1/(z^2 + 1) in partial fractions: poles i and -i with weights
// -i/2 and i/2 in the w/(z_pole - z) convention.
RationalFilter inverse_quadratic_filter() {
    RationalFilter f;
    f.omega0 = Complex(0.0, 0.0);
    f.poles.push_back({kI, -0.5 * kI});
    f.poles.push_back({-kI, 0.5 * kI});
    return f;
}

Complex butterworth_closed_form(const ContourCircle& c, Complex z) {
    return 1.0 / (1.0 - std::pow((z - c.center) / (c.radius * c.phase),
                                 static_cast<double>(c.nquad)));
}

}  // namespace

TEST_CASE("filter evaluation matches hand values", "[filters]") {
    const RationalFilter f = inverse_quadratic_filter();
    CHECK(std::abs(eval(f, Complex(0.5, 0.0)) - Complex(-0.8, 0.0)) < 1e-14);

    const RationalFilter c = cayley();
    CHECK(std::abs(eval(c, Complex(10.0, -1.0)) - Complex(1.0, -0.2)) < 1e-14);
    CHECK(std::abs(eval(c, Complex(10.0, 1.0)) - Complex(25.0 / 26.0, -5.0 / 26.0)) <
          1e-14);
    CHECK(std::abs(eval(c, Complex(0.0, 0.0)) - Complex(-1.0, 0.0)) < 1e-14);
    CHECK(std::abs(eval(c, kI)) < 1e-14);

    RationalFilter constant;
    constant.omega0 = Complex(3.0, 0.0);
    constant.poles.push_back({Complex(2.0, 2.0), Complex(0.0, 0.0)});
    CHECK(std::abs(eval(constant, Complex(-7.0, 0.3)) - Complex(3.0, 0.0)) < 1e-14);

    CHECK_THROWS_AS(eval(f, kI), std::domain_error);
}

TEST_CASE("butterworth quadrature weights and poles", "[filters]") {
    // N = 2, O = 0, R = 1, phase i: poles {i, -i} with weights {i/2, -i/2}.
    ContourCircle c;
    c.center = Complex(0.0, 0.0);
    c.radius = 1.0;
    c.phase = kI;
    c.nquad = 2;
    const RationalFilter f = butterworth(c);
    REQUIRE(f.poles.size() == 2);
    CHECK(std::abs(f.omega0) == 0.0);
    CHECK(std::abs(f.poles[0].z - kI) < 1e-15);
    CHECK(std::abs(f.poles[1].z + kI) < 1e-15);
    CHECK(std::abs(f.poles[0].weight - 0.5 * kI) < 1e-15);
    CHECK(std::abs(f.poles[1].weight + 0.5 * kI) < 1e-15);

    // Value at the center is 1 for every configuration.
    const RationalFilter f4 = butterworth(make_contour(Complex(0.0, 0.0), 1.0, 4));
    CHECK(std::abs(eval(f4, Complex(0.0, 0.0)) - 1.0) < 1e-13);

    // Partial fractions against the closed form at a frozen point.
    ContourCircle c8;
    c8.center = Complex(2.0, 0.0);
    c8.radius = 3.0;
    c8.phase = std::exp(kI * (kPi / 8.0));
    c8.nquad = 8;
    const Complex z(2.0, 1.5);
    CHECK(std::abs(eval(butterworth(c8), z) - butterworth_closed_form(c8, z)) < 1e-12);
}

TEST_CASE("butterworth identity and disk lower bound", "[filters]") {
    std::mt19937 rng(20240811u);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const std::vector<Complex> centers{Complex(0.0, 0.0), Complex(2.0, 1.0)};
    for (int n : {2, 4, 8})
        for (const Complex& center : centers)
            for (double radius : {1.0, 3.0}) {
                const ContourCircle c = make_contour(center, radius, n);
                const RationalFilter f = butterworth(c);
                for (int k = 0; k < 100; ++k) {
                    const Complex z = center +
                                      3.0 * radius *
                                          Complex(2.0 * unit(rng) - 1.0,
                                                  2.0 * unit(rng) - 1.0);
                    bool near_pole = false;
                    for (const auto& p : f.poles)
                        if (std::abs(z - p.z) < 1e-6) near_pole = true;
                    if (near_pole) continue;
                    const Complex lhs = eval(f, z);
                    const Complex rhs = butterworth_closed_form(c, z);
                    CHECK(std::abs(lhs - rhs) < 1e-10 * (1.0 + std::abs(lhs)));
                }
                for (int k = 0; k < 1000; ++k) {
                    const double rho = radius * std::sqrt(unit(rng)) * 0.9999;
                    const double phi = 2.0 * kPi * unit(rng);
                    const Complex z = center + rho * std::exp(kI * phi);
                    CHECK(std::abs(eval(f, z)) > 0.5);
                }
            }
}

TEST_CASE("inverse images of mapped values", "[filters]") {
    const RationalFilter f = inverse_quadratic_filter();
    const InverseImage inv = inverse_image(f, Complex(-0.8, 0.0));
    REQUIRE(inv.roots.size() == 2);
    std::vector<double> re{inv.roots[0].real(), inv.roots[1].real()};
    std::sort(re.begin(), re.end());
    CHECK(std::abs(re[0] + 0.5) < 1e-10);
    CHECK(std::abs(re[1] - 0.5) < 1e-10);
    CHECK(std::abs(inv.roots[0].imag()) < 1e-10);
    CHECK(std::abs(inv.roots[1].imag()) < 1e-10);

    // Moebius maps are invertible: singleton preimage.
    const Complex lam(3.0, 2.0);
    const InverseImage minv = inverse_image(cayley(), eval(cayley(), lam));
    REQUIRE(minv.roots.size() == 1);
    CHECK(std::abs(minv.roots[0] - lam) < 1e-10);

    // Quadrature filter preimages are the rotated copies of the argument.
    const ContourCircle c = make_contour(Complex(0.0, 0.0), 1.0, 4);
    const RationalFilter b = butterworth(c);
    const InverseImage binv = inverse_image(b, eval(b, Complex(0.3, 0.0)));
    REQUIRE(binv.roots.size() == 4);
    for (int l = 0; l < 4; ++l) {
        const Complex expected = 0.3 * std::exp(kI * (2.0 * kPi * l / 4.0));
        double best = 1e9;
        for (const Complex& r : binv.roots) best = std::min(best, std::abs(r - expected));
        CHECK(best < 1e-9);
    }

    RationalFilter degenerate = inverse_quadratic_filter();
    CHECK_THROWS_AS(inverse_image(degenerate, degenerate.omega0), std::invalid_argument);
}

TEST_CASE("inverse_image round trip and root count", "[filters]") {
    std::mt19937 rng(77u);
    std::uniform_real_distribution<double> unit(-2.0, 2.0);
    for (int trial = 0; trial < 50; ++trial) {
        RationalFilter f;
        f.omega0 = Complex(unit(rng), unit(rng));
        const int n = 1 + static_cast<int>(std::abs(unit(rng)));
        for (int j = 0; j < n; ++j) {
            Complex z;
            bool ok = false;
            while (!ok) {
                z = Complex(unit(rng), unit(rng));
                ok = true;
                for (const auto& p : f.poles)
                    if (std::abs(z - p.z) < 0.2) ok = false;
            }
            const double w = 0.5 + std::abs(unit(rng));
            f.poles.push_back({z, Complex(w, 0.3 * unit(rng))});
        }
        Complex lambda;
        bool ok = false;
        while (!ok) {
            lambda = Complex(unit(rng), unit(rng));
            ok = true;
            for (const auto& p : f.poles)
                if (std::abs(lambda - p.z) < 0.3) ok = false;
        }
        const Complex mu = eval(f, lambda);
        if (std::abs(mu - f.omega0) < 1e-3) continue;
        const InverseImage inv = inverse_image(f, mu);
        double best = 1e9;
        for (const Complex& r : inv.roots) best = std::min(best, std::abs(r - lambda));
        CHECK(best < 1e-8 * (1.0 + std::abs(lambda)));
        int total = inv.cancelled;
        for (int m : inv.multiplicities) total += m;
        CHECK(total == static_cast<int>(f.poles.size()));
    }
}

TEST_CASE("cluster isolation check", "[filters]") {
    const RationalFilter f = inverse_quadratic_filter();
    const std::vector<Complex> pm_half{Complex(0.5, 0.0), Complex(-0.5, 0.0)};
    CHECK(check_cluster_isolation(f, pm_half, pm_half, 1e-8).ok);

    const std::vector<Complex> cayley_spec{Complex(10.0, -1.0), Complex(10.0, 1.0)};
    CHECK(check_cluster_isolation(cayley(), cayley_spec, cayley_spec, 1e-8).ok);

    // A spectrum point at a rotated preimage inside the disk but outside the
    // cluster violates the condition.
    const RationalFilter b = butterworth(make_contour(Complex(0.0, 0.0), 1.0, 4));
    const std::vector<Complex> spectrum{Complex(0.3, 0.0), Complex(0.0, 0.3)};
    const std::vector<Complex> cluster{Complex(0.3, 0.0)};
    const IsolationReport rep = check_cluster_isolation(b, cluster, spectrum, 1e-8);
    CHECK_FALSE(rep.ok);
    CHECK_FALSE(rep.detail.empty());

    CHECK_THROWS_AS(
        check_cluster_isolation(b, {Complex(0.9, 0.9)}, spectrum, 1e-8),
        std::invalid_argument);
}

TEST_CASE("filter text round trip", "[filters]") {
    const RationalFilter f = butterworth(make_contour(Complex(1.5, -0.25), 2.0, 6, -1));
    const RationalFilter g = filter_from_text(to_text(f));
    REQUIRE(g.poles.size() == f.poles.size());
    CHECK(std::abs(g.omega0 - f.omega0) == 0.0);
    for (size_t j = 0; j < f.poles.size(); ++j) {
        CHECK(std::abs(g.poles[j].z - f.poles[j].z) == 0.0);
        CHECK(std::abs(g.poles[j].weight - f.poles[j].weight) == 0.0);
    }
    CHECK_THROWS(filter_from_text(std::string("omega0 0 0\nbogus 1 2 3 4\n")));

    RationalFilter dup;
    dup.poles.push_back({kI, Complex(1.0, 0.0)});
    dup.poles.push_back({kI, Complex(2.0, 0.0)});
    CHECK_THROWS_AS(dup.validate(), std::invalid_argument);
}
