#pragma once
// Rational spectral filters r(z) = omega0 + sum_j omega_j / (z_j - z):
// contour-quadrature (Butterworth) and Moebius/Cayley construction,
// evaluation, inverse images via companion-matrix root finding, and the
// cluster-isolation check run before a filtered subspace iteration.

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "clustergap/util.hpp"

namespace clustergap {

// Circular contour O + R*phi*exp(i*theta) discretized at nquad points.
struct ContourCircle {
    Complex center{0.0, 0.0};
    double radius = 1.0;
    Complex phase{1.0, 0.0};  // unit-modulus starting phase of the nodes
    int nquad = 4;

    void validate() const {
        if (!(radius > 0.0))
            throw std::invalid_argument("contour radius must be positive");
        if (std::abs(std::abs(phase) - 1.0) > 1e-14)
            throw std::invalid_argument("contour phase must have unit modulus");
        if (nquad < 2)
            throw std::invalid_argument("contour needs at least 2 quadrature points");
    }
};

// Standard node placement: phase = sign * exp(i*pi/N) keeps nodes off the
// real axis for real centers.
inline ContourCircle make_contour(Complex center, double radius, int nquad,
                                  int phase_sign = +1) {
    ContourCircle c;
    c.center = center;
    c.radius = radius;
    c.nquad = nquad;
    double s = phase_sign < 0 ? -1.0 : 1.0;
    c.phase = s * std::exp(Complex(0.0, kPi / static_cast<double>(nquad)));
    c.validate();
    return c;
}

// Partial-fraction filter with simple poles. Poles must be pairwise
// distinct; higher-order poles are not representable by this type.
struct RationalFilter {
    struct Pole {
        Complex z;
        Complex weight;
    };
    Complex omega0{0.0, 0.0};
    std::vector<Pole> poles;

    void validate() const {
        if (poles.empty())
            throw std::invalid_argument("filter must have at least one pole");
        for (size_t i = 0; i < poles.size(); ++i)
            for (size_t j = i + 1; j < poles.size(); ++j)
                if (std::abs(poles[i].z - poles[j].z) <
                    1e-14 * (1.0 + std::abs(poles[i].z)))
                    throw std::invalid_argument(
                        "filter poles must be pairwise distinct (only simple "
                        "poles are supported)");
    }
};

inline Complex eval(const RationalFilter& r, Complex z) {
    Complex v = r.omega0;
    for (const auto& p : r.poles) {
        if (std::abs(z - p.z) < 1e-14)
            throw std::domain_error("filter evaluated at (or too close to) a pole");
        v += p.weight / (p.z - z);
    }
    return v;
}

// Trapezoid-rule quadrature of the circular contour integral:
//   w_j = what^(j-1) * R * phi / N,   z_j = O + R * phi * what^(j-1),
// with what = exp(2*pi*i/N). Equals [1 - ((z-O)/(R*phi))^N]^(-1).
inline RationalFilter butterworth(const ContourCircle& c) {
    c.validate();
    RationalFilter r;
    r.omega0 = Complex(0.0, 0.0);
    const int n = c.nquad;
    const Complex what = std::exp(Complex(0.0, 2.0 * kPi / n));
    Complex rot(1.0, 0.0);
    r.poles.reserve(static_cast<size_t>(n));
    for (int j = 0; j < n; ++j) {
        const Complex rphi = c.radius * c.phase * rot;
        r.poles.push_back({c.center + rphi, rphi / static_cast<double>(n)});
        rot *= what;
    }
    r.validate();
    return r;
}

// Moebius map (z - i)/(z + i) sending the upper half-plane to the unit disk.
inline RationalFilter cayley() {
    RationalFilter r;
    r.omega0 = Complex(1.0, 0.0);
    r.poles.push_back({Complex(0.0, -1.0), Complex(0.0, 2.0)});
    return r;
}

namespace detail {

// Ascending-coefficient polynomials over Complex.
using Poly = std::vector<Complex>;

inline Poly poly_mul_linear(const Poly& p, Complex zj) {
    // multiply by (zj - z)
    Poly out(p.size() + 1, Complex(0.0, 0.0));
    for (size_t i = 0; i < p.size(); ++i) {
        out[i] += zj * p[i];
        out[i + 1] -= p[i];
    }
    return out;
}

inline Complex poly_eval(const Poly& p, Complex z) {
    Complex v(0.0, 0.0);
    for (size_t i = p.size(); i-- > 0;) v = v * z + p[i];
    return v;
}

inline Poly poly_derivative(const Poly& p) {
    Poly d(p.size() > 1 ? p.size() - 1 : 1, Complex(0.0, 0.0));
    for (size_t i = 1; i < p.size(); ++i) d[i - 1] = static_cast<double>(i) * p[i];
    return d;
}

// Numerator and denominator of r(z) - mu in monomial form:
//   q(z) = prod_j (z_j - z),   c(z) = p(z) - mu*q(z),
//   p(z) = omega0*q(z) + sum_j w_j * prod_{k != j} (z_k - z).
inline Poly shifted_numerator(const RationalFilter& r, Complex mu) {
    Poly q{Complex(1.0, 0.0)};
    for (const auto& p : r.poles) q = poly_mul_linear(q, p.z);
    Poly c(q.size(), Complex(0.0, 0.0));
    for (size_t i = 0; i < q.size(); ++i) c[i] = (r.omega0 - mu) * q[i];
    for (size_t j = 0; j < r.poles.size(); ++j) {
        Poly part{r.poles[j].weight};
        for (size_t k = 0; k < r.poles.size(); ++k)
            if (k != j) part = poly_mul_linear(part, r.poles[k].z);
        for (size_t i = 0; i < part.size(); ++i) c[i] += part[i];
    }
    return c;
}

inline std::vector<Complex> companion_roots(const Poly& c) {
    int deg = static_cast<int>(c.size()) - 1;
    while (deg > 0 && std::abs(c[static_cast<size_t>(deg)]) == 0.0) --deg;
    if (deg < 1) return {};
    Eigen::MatrixXcd comp = Eigen::MatrixXcd::Zero(deg, deg);
    const Complex lead = c[static_cast<size_t>(deg)];
    for (int i = 0; i < deg; ++i) comp(i, deg - 1) = -c[static_cast<size_t>(i)] / lead;
    for (int i = 1; i < deg; ++i) comp(i, i - 1) = Complex(1.0, 0.0);
    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(comp, /*computeEigenvectors=*/false);
    std::vector<Complex> roots(es.eigenvalues().data(),
                               es.eigenvalues().data() + deg);
    // Newton polish against the original coefficients.
    const Poly dc = poly_derivative(c);
    for (auto& z : roots)
        for (int it = 0; it < 3; ++it) {
            const Complex d = poly_eval(dc, z);
            if (std::abs(d) == 0.0) break;
            z -= poly_eval(c, z) / d;
        }
    return roots;
}

}  // namespace detail

// The set r^{-1}(mu), with poles removed per the common-factor cancellation
// rule. `multiplicities` are root multiplicities after cancellation and
// `cancelled` counts the removed pole matches.
struct InverseImage {
    Complex mu;
    std::vector<Complex> roots;
    std::vector<int> multiplicities;
    int cancelled = 0;
};

inline InverseImage inverse_image(const RationalFilter& r, Complex mu,
                                  double tol_root = 1e-8) {
    r.validate();
    if (std::abs(mu - r.omega0) <= 1e-14 * (1.0 + std::abs(mu)))
        throw std::invalid_argument(
            "inverse image is degenerate when mu equals the filter's constant "
            "term");

    const detail::Poly c = detail::shifted_numerator(r, mu);
    std::vector<Complex> raw = detail::companion_roots(c);

    InverseImage out;
    out.mu = mu;
    // Greedy clustering of numerically coincident roots.
    for (const Complex& z : raw) {
        bool placed = false;
        for (size_t g = 0; g < out.roots.size(); ++g) {
            if (std::abs(z - out.roots[g]) <=
                10.0 * tol_root * (1.0 + std::abs(z))) {
                const double m = static_cast<double>(out.multiplicities[g]);
                out.roots[g] = (out.roots[g] * m + z) / (m + 1.0);
                out.multiplicities[g] += 1;
                placed = true;
                break;
            }
        }
        if (!placed) {
            out.roots.push_back(z);
            out.multiplicities.push_back(1);
        }
    }

    // Cancel simple-pole matches: each coincidence removes one power.
    for (size_t g = 0; g < out.roots.size();) {
        bool at_pole = false;
        for (const auto& p : r.poles)
            if (std::abs(out.roots[g] - p.z) <= 1e-8 * (1.0 + std::abs(p.z))) {
                at_pole = true;
                break;
            }
        if (at_pole) {
            out.multiplicities[g] -= 1;
            out.cancelled += 1;
            if (out.multiplicities[g] == 0) {
                out.roots.erase(out.roots.begin() + static_cast<long>(g));
                out.multiplicities.erase(out.multiplicities.begin() +
                                         static_cast<long>(g));
                continue;
            }
        }
        ++g;
    }

    // Residual check on the retained roots.
    std::string bad;
    for (const Complex& z : out.roots) {
        const double res = std::abs(eval(r, z) - mu);
        if (!(res < tol_root * (1.0 + std::abs(mu)))) {
            std::ostringstream os;
            os << " root (" << z.real() << "," << z.imag() << ") residual " << res;
            bad += os.str();
        }
    }
    if (!bad.empty())
        throw std::runtime_error("inverse_image root finder failed:" + bad);
    return out;
}

struct IsolationReport {
    bool ok = true;
    std::string detail;
};

// Checks that the mapped cluster avoids omega0 and that every inverse image
// of a mapped cluster value that hits the spectrum stays inside the cluster.
inline IsolationReport check_cluster_isolation(const RationalFilter& r,
                                               const std::vector<Complex>& cluster,
                                               const std::vector<Complex>& spectrum,
                                               double tol) {
    auto near_any = [tol](Complex z, const std::vector<Complex>& set) {
        for (const Complex& s : set)
            if (std::abs(z - s) <= tol) return true;
        return false;
    };
    for (const Complex& c : cluster)
        if (!near_any(c, spectrum))
            throw std::invalid_argument(
                "cluster must be a subset of the spectrum (within tol)");

    IsolationReport rep;
    std::ostringstream os;
    for (const Complex& c : cluster) {
        const Complex mu = eval(r, c);
        if (std::abs(mu - r.omega0) <= tol) {
            rep.ok = false;
            os << "mapped value " << mu << " coincides with the constant term\n";
            continue;
        }
        const InverseImage inv = inverse_image(r, mu);
        for (const Complex& root : inv.roots) {
            if (near_any(root, spectrum) && !near_any(root, cluster)) {
                rep.ok = false;
                os << "inverse image " << root << " of mapped value " << mu
                   << " lies in the spectrum but outside the cluster\n";
            }
        }
    }
    rep.detail = os.str();
    return rep;
}

// Text form: one `omega0 re im` line, then one `pole zre zim wre wim` line
// per pole, all with 17 significant digits.
inline std::string to_text(const RationalFilter& r) {
    std::ostringstream os;
    os.precision(17);
    os << "omega0 " << r.omega0.real() << " " << r.omega0.imag() << "\n";
    for (const auto& p : r.poles)
        os << "pole " << p.z.real() << " " << p.z.imag() << " "
           << p.weight.real() << " " << p.weight.imag() << "\n";
    return os.str();
}

inline RationalFilter filter_from_text(std::istream& in) {
    RationalFilter r;
    bool have_omega0 = false;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag)) continue;
        if (tag == "omega0") {
            double re, im;
            if (!(ls >> re >> im))
                throw std::runtime_error("filter text line " + std::to_string(lineno) +
                                         ": malformed omega0");
            r.omega0 = Complex(re, im);
            have_omega0 = true;
        } else if (tag == "pole") {
            double zr, zi, wr, wi;
            if (!(ls >> zr >> zi >> wr >> wi))
                throw std::runtime_error("filter text line " + std::to_string(lineno) +
                                         ": malformed pole");
            r.poles.push_back({Complex(zr, zi), Complex(wr, wi)});
        } else {
            throw std::runtime_error("filter text line " + std::to_string(lineno) +
                                     ": unknown tag '" + tag + "'");
        }
    }
    if (!have_omega0)
        throw std::runtime_error("filter text is missing the omega0 line");
    r.validate();
    return r;
}

inline RationalFilter filter_from_text(const std::string& text) {
    std::istringstream is(text);
    return filter_from_text(is);
}

}  // namespace clustergap
