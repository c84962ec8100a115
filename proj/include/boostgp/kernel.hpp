#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <string>

#include "boostgp/data.hpp"
#include "boostgp/errors.hpp"

namespace boostgp {

/// Pairwise Euclidean distances; symmetric with zero diagonal.
inline Eigen::MatrixXd distance_matrix(const SpatialCoords& coords) {
    const Eigen::Index n = coords.n_spots();
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double v = (coords.coords.row(i) - coords.coords.row(j)).norm();
            d(i, j) = v;
            d(j, i) = v;
        }
    return d;
}

/// Minimum non-zero and maximum pairwise distances, and the derived
/// length-scale support [t_min/2, 2*t_max].
struct DistanceBounds {
    double t_min = 0.0;
    double t_max = 0.0;

    double length_scale_lo() const { return 0.5 * t_min; }
    double length_scale_hi() const { return 2.0 * t_max; }
};

inline DistanceBounds distance_bounds(const Eigen::MatrixXd& d) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = 0.0;
    for (Eigen::Index i = 0; i < d.rows(); ++i)
        for (Eigen::Index j = i + 1; j < d.cols(); ++j) {
            const double v = d(i, j);
            if (v > 0.0 && v < lo) lo = v;
            if (v > hi) hi = v;
        }
    if (!(hi > 0.0) || !std::isfinite(lo))
        throw validation_error("degenerate geometry: all pairwise distances are zero");
    return {lo, hi};
}

/// Squared-exponential covariance with an optional diagonal jitter.
struct KernelMatrix {
    Eigen::MatrixXd K;
    double length_scale = 0.0;
    double jitter = 0.0;
};

inline KernelMatrix se_kernel(const Eigen::MatrixXd& d, double length_scale, double jitter = 0.0) {
    if (!(length_scale > 0.0)) throw validation_error("length scale must be positive");
    KernelMatrix km;
    km.length_scale = length_scale;
    km.jitter = jitter;
    const double inv = 1.0 / (2.0 * length_scale * length_scale);
    km.K = (-d.array().square() * inv).exp();
    km.K.diagonal().array() += jitter;
    return km;
}

/// Jitter escalation policy: start at 1e-8*n, multiply by 10 on Cholesky
/// failure, give up beyond 1e-4.
struct JitterPolicy {
    double scale_per_spot = 1e-8;
    double growth = 10.0;
    double max_jitter = 1e-4;

    double initial(Eigen::Index n) const { return scale_per_spot * static_cast<double>(n); }
};

/// SE kernel that is guaranteed Cholesky-factorizable, escalating jitter per
/// the policy. Throws a numerical_error naming the length scale if even the
/// maximum jitter fails.
inline KernelMatrix se_kernel_psd(const Eigen::MatrixXd& d, double length_scale,
                                  const JitterPolicy& policy = {}) {
    const double start = std::min(policy.initial(d.rows()), policy.max_jitter);
    for (double j = start; j <= policy.max_jitter; j *= policy.growth) {
        KernelMatrix km = se_kernel(d, length_scale, j);
        Eigen::LLT<Eigen::MatrixXd> llt(km.K);
        if (llt.info() == Eigen::Success) return km;
    }
    throw numerical_error("SE kernel not positive definite at length scale " +
                          std::to_string(length_scale) + " even with maximum jitter");
}

} // namespace boostgp
