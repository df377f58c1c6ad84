#pragma once
// The cluster eigenspace gap estimator: Gram matrices of estimator fields
// over a computed basis, the worst direction of the small Hermitian pencil,
// and the localized per-element indicators driving adaptivity.

#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "clustergap/estimators.hpp"
#include "clustergap/fem.hpp"
#include "clustergap/subspace.hpp"

namespace clustergap {

using EstimatorFn = std::function<EstimatorField(const FieldVector&)>;
using VInnerFn = std::function<Complex(const FieldVector&, const FieldVector&)>;

struct GapEstimate {
    Eigen::MatrixXcd g;       // estimator Gram matrix
    Eigen::MatrixXcd m;       // V Gram matrix of the basis
    double lambda_hat = 0.0;  // largest pencil eigenvalue
    Eigen::VectorXcd xhat;    // its eigenvector
    FieldVector ehat;         // worst direction, unit V norm
    double eta_global = 0.0;  // Y norm of the estimator at ehat
    Eigen::VectorXd eta_local;
    double eta_max = 0.0;
    double eta_l2 = 0.0;
};

// G[i][j] = (E e^j, E e^i)_Y and M[i][j] = (e^j, e^i)_V.
inline std::pair<Eigen::MatrixXcd, Eigen::MatrixXcd> assemble_gram(
    const std::vector<FieldVector>& basis, const std::vector<EstimatorField>& fields,
    const VInnerFn& v_inner) {
    if (basis.empty() || basis.size() != fields.size())
        throw std::invalid_argument("assemble_gram: basis/field count mismatch");
    const int l = static_cast<int>(basis.size());
    Eigen::MatrixXcd g(l, l), m(l, l);
    for (int i = 0; i < l; ++i)
        for (int j = 0; j < l; ++j) {
            g(i, j) = y_inner(fields[static_cast<size_t>(j)], fields[static_cast<size_t>(i)]);
            m(i, j) = v_inner(basis[static_cast<size_t>(j)], basis[static_cast<size_t>(i)]);
        }
    g = 0.5 * (g + g.adjoint()).eval();
    m = 0.5 * (m + m.adjoint()).eval();
    return {g, m};
}

// ehat = sum_i xhat_i e^i normalized to unit V norm.
inline FieldVector combine_unit(const std::vector<FieldVector>& basis,
                                const Eigen::VectorXcd& xhat, const VInnerFn& v_inner) {
    if (basis.empty() || xhat.size() != static_cast<Eigen::Index>(basis.size()))
        throw std::invalid_argument("combine_unit: coefficient size mismatch");
    FieldVector out;
    out.space = basis.front().space;
    out.coeffs = VectorXc::Zero(basis.front().coeffs.size());
    for (size_t i = 0; i < basis.size(); ++i)
        out.coeffs += xhat(static_cast<Eigen::Index>(i)) * basis[i].coeffs;
    const double nrm = std::sqrt(std::max(0.0, std::real(v_inner(out, out))));
    if (!(nrm > 0.0))
        throw std::runtime_error("combine_unit: zero combination");
    out.coeffs /= nrm;
    return out;
}

// Runs the estimator over the basis, extracts the worst direction of
// G x = lambda M x, and localizes the estimator of that direction.
inline GapEstimate estimate_cluster_gap(const std::vector<FieldVector>& basis,
                                        const EstimatorFn& estimator,
                                        const VInnerFn& v_inner) {
    if (basis.empty())
        throw std::invalid_argument("estimate_cluster_gap: empty basis");
    std::vector<EstimatorField> fields;
    fields.reserve(basis.size());
    for (const FieldVector& e : basis) fields.push_back(estimator(e));

    GapEstimate est;
    std::tie(est.g, est.m) = assemble_gram(basis, fields, v_inner);
    std::tie(est.lambda_hat, est.xhat) = worst_direction(est.g, est.m);
    est.ehat = combine_unit(basis, est.xhat, v_inner);

    const EstimatorField hat_field = estimator(est.ehat);
    est.eta_global = y_norm(hat_field);
    est.eta_local = local_norms(hat_field);
    est.eta_max = est.eta_local.size() ? est.eta_local.maxCoeff() : 0.0;
    est.eta_l2 = est.eta_local.norm();
    return est;
}

inline std::string report(const GapEstimate& est, bool per_element = false) {
    std::ostringstream os;
    os.precision(12);
    os << "lambda_hat  " << est.lambda_hat << "\n"
       << "eta_global  " << est.eta_global << "\n"
       << "eta_max     " << est.eta_max << "\n"
       << "eta_l2      " << est.eta_l2 << "\n"
       << "dim         " << est.g.rows() << "\n";
    if (per_element) {
        os << "elem  eta\n";
        for (Eigen::Index k = 0; k < est.eta_local.size(); ++k)
            os << k << "  " << est.eta_local(k) << "\n";
    }
    return os.str();
}

}  // namespace clustergap
