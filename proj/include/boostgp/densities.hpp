#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <cmath>
#include <memory>
#include <mutex>
#include <numbers>
#include <optional>

#include "boostgp/errors.hpp"
#include "boostgp/kernel.hpp"
#include "boostgp/mathutil.hpp"

namespace boostgp {

/// Log pmf of the negative binomial with mean mu and dispersion phi
/// (variance mu + mu^2/phi). The log1p forms stay accurate when phi and mu
/// are on very different scales.
inline double log_nb_pmf(long long y, double mu, double phi) {
    const double yd = static_cast<double>(y);
    const double y_term = y == 0 ? 0.0 : yd * std::log1p(phi / mu);
    return std::lgamma(yd + phi) - std::lgamma(yd + 1.0) - std::lgamma(phi) -
           phi * std::log1p(mu / phi) - y_term;
}

/// NB log pmf at y = 0; the lgamma terms cancel.
inline double log_nb_zero(double mu, double phi) {
    return -phi * std::log1p(mu / phi);
}

enum class MarginalBranch { spatial, nonspatial };

/// Parameters of the collapsed multivariate-t marginal of the log expression
/// vector: dof = 2*a_sigma and scale multiplier b_sigma/a_sigma.
struct MvtSpec {
    double dof = 6.0;
    double scale_multiplier = 1.0 / 3.0;
    MarginalBranch branch = MarginalBranch::nonspatial;

    static MvtSpec from_shape_scale(double a_sigma, double b_sigma, MarginalBranch br) {
        return {2.0 * a_sigma, b_sigma / a_sigma, br};
    }
    double a_sigma() const { return 0.5 * dof; }
    double b_sigma() const { return 0.5 * dof * scale_multiplier; }
};

/// Cholesky factorization of M = K + h X X^T, the matrix whose inverse is the
/// collapsed marginal's precision up to the scale multiplier. The explicit
/// inverse is materialized lazily; it is only needed by the single-site
/// expression updates, which walk the quadratic form incrementally.
class MarginalFactor {
public:
    MarginalFactor(const Eigen::MatrixXd& K, const Eigen::MatrixXd& X, double h, double jitter)
        : jitter_(jitter) {
        Eigen::MatrixXd m = K + h * X * X.transpose();
        llt_.compute(m);
        if (llt_.info() != Eigen::Success)
            throw numerical_error("Cholesky factorization of the marginal scale failed");
        log_det_ = 2.0 * llt_.matrixLLT().diagonal().array().log().sum();
        n_ = m.rows();
    }

    Eigen::Index size() const { return n_; }
    double log_det() const { return log_det_; }
    double jitter() const { return jitter_; }

    /// Quadratic form v^T M^{-1} v via one triangular solve.
    double quad_form(const Eigen::VectorXd& v) const {
        return llt_.matrixL().solve(v).squaredNorm();
    }

    /// M^{-1} v.
    Eigen::VectorXd solve(const Eigen::VectorXd& v) const { return llt_.solve(v); }

    /// Explicit M^{-1}; computed once on first use, thread-safe.
    const Eigen::MatrixXd& inverse() const {
        std::call_once(inv_once_, [this] {
            inv_ = llt_.solve(Eigen::MatrixXd::Identity(n_, n_));
        });
        return inv_;
    }

private:
    Eigen::LLT<Eigen::MatrixXd> llt_;
    double log_det_ = 0.0;
    double jitter_ = 0.0;
    Eigen::Index n_ = 0;
    mutable std::once_flag inv_once_;
    mutable Eigen::MatrixXd inv_;
};

/// Builds the marginal factor for a spatial branch, escalating kernel jitter
/// until the factorization of K + h X X^T succeeds.
inline std::shared_ptr<const MarginalFactor> make_spatial_factor(const Eigen::MatrixXd& d,
                                                                 double length_scale,
                                                                 const Eigen::MatrixXd& X, double h,
                                                                 const JitterPolicy& policy = {}) {
    const double start = std::min(policy.initial(d.rows()), policy.max_jitter);
    for (double j = start; j <= policy.max_jitter; j *= policy.growth) {
        const KernelMatrix km = se_kernel(d, length_scale, j);
        try {
            return std::make_shared<MarginalFactor>(km.K, X, h, j);
        } catch (const numerical_error&) {
            // escalate
        }
    }
    throw numerical_error("marginal factorization failed at length scale " +
                          std::to_string(length_scale) + " even with maximum jitter");
}

inline std::shared_ptr<const MarginalFactor> make_nonspatial_factor(Eigen::Index n,
                                                                    const Eigen::MatrixXd& X,
                                                                    double h) {
    return std::make_shared<MarginalFactor>(Eigen::MatrixXd::Identity(n, n), X, h, 0.0);
}

/// Multivariate-t log density of the collapsed marginal, given the factor of
/// M = K + h X X^T: scale matrix (b/a) M, dof 2a, location zero.
inline double log_mvt_from_factor(const Eigen::VectorXd& v, const MarginalFactor& factor,
                                  double a_sigma, double b_sigma) {
    const double n = static_cast<double>(v.size());
    const double q = factor.quad_form(v);
    return std::lgamma(a_sigma + 0.5 * n) - std::lgamma(a_sigma) -
           0.5 * n * std::log(2.0 * a_sigma * std::numbers::pi) -
           0.5 * (n * std::log(b_sigma / a_sigma) + factor.log_det()) -
           (a_sigma + 0.5 * n) * std::log1p(q / (2.0 * b_sigma));
}

/// Same, with the quadratic form supplied by the caller (incremental paths).
inline double log_mvt_from_parts(double n, double quad, double log_det, double a_sigma,
                                 double b_sigma) {
    return std::lgamma(a_sigma + 0.5 * n) - std::lgamma(a_sigma) -
           0.5 * n * std::log(2.0 * a_sigma * std::numbers::pi) -
           0.5 * (n * std::log(b_sigma / a_sigma) + log_det) -
           (a_sigma + 0.5 * n) * std::log1p(quad / (2.0 * b_sigma));
}

/// Collapsed marginal log density of a gene's log expression vector. The
/// spatial branch uses the supplied kernel; the nonspatial branch replaces it
/// with the identity. Never forms an explicit inverse.
inline double log_mvt_marginal(const Eigen::VectorXd& log_lambda, const MvtSpec& spec,
                               const Eigen::MatrixXd& X, const Eigen::MatrixXd* K, double h) {
    if (!log_lambda.allFinite())
        throw numerical_error("log expression vector contains non-finite values");
    const Eigen::Index n = log_lambda.size();
    if (X.rows() != n) throw validation_error("design matrix row count mismatch");
    Eigen::MatrixXd Kmat;
    if (spec.branch == MarginalBranch::spatial) {
        if (K == nullptr) throw validation_error("spatial branch requires a kernel matrix");
        if (K->rows() != n || K->cols() != n)
            throw validation_error("kernel matrix shape mismatch");
        Kmat = *K;
    } else {
        Kmat = Eigen::MatrixXd::Identity(n, n);
    }
    const MarginalFactor factor(Kmat, X, h, 0.0);
    return log_mvt_from_factor(log_lambda, factor, spec.a_sigma(), spec.b_sigma());
}

} // namespace boostgp
