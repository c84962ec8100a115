#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "boostgp/chain.hpp"
#include "boostgp/errors.hpp"
#include "boostgp/kernel.hpp"

namespace boostgp {

enum class WeightScheme { knn, gaussian, custom };

/// Nonnegative spatial weights with zero diagonal; rows must carry mass.
struct WeightMatrix {
    Eigen::MatrixXd W;
    WeightScheme scheme = WeightScheme::custom;

    void validate() const {
        if (W.rows() != W.cols()) throw validation_error("weight matrix must be square");
        if ((W.array() < 0.0).any()) throw validation_error("weights must be nonnegative");
        for (Eigen::Index i = 0; i < W.rows(); ++i) {
            if (W(i, i) != 0.0) throw validation_error("weight matrix diagonal must be zero");
            if (W.row(i).sum() <= 0.0)
                throw validation_error("weight matrix row " + std::to_string(i + 1) +
                                       " has zero mass");
        }
    }

    static WeightMatrix custom(Eigen::MatrixXd w) {
        WeightMatrix m{std::move(w), WeightScheme::custom};
        m.validate();
        return m;
    }

    /// Gaussian decay weights; bandwidth <= 0 selects the median pairwise
    /// distance.
    static WeightMatrix gaussian(const SpatialCoords& coords, double bandwidth = 0.0) {
        const Eigen::MatrixXd d = distance_matrix(coords);
        double bw = bandwidth;
        if (bw <= 0.0) {
            std::vector<double> ds;
            for (Eigen::Index i = 0; i < d.rows(); ++i)
                for (Eigen::Index j = i + 1; j < d.cols(); ++j) ds.push_back(d(i, j));
            std::nth_element(ds.begin(), ds.begin() + ds.size() / 2, ds.end());
            bw = ds[ds.size() / 2];
            if (bw <= 0.0) throw validation_error("median pairwise distance is zero");
        }
        WeightMatrix m;
        m.scheme = WeightScheme::gaussian;
        m.W = (-d.array().square() / (2.0 * bw * bw)).exp();
        m.W.diagonal().setZero();
        m.validate();
        return m;
    }

    /// k-nearest-neighbour indicator weights (distance ties break by index).
    static WeightMatrix knn(const SpatialCoords& coords, int k = 5) {
        const Eigen::MatrixXd d = distance_matrix(coords);
        const Eigen::Index n = d.rows();
        if (k < 1 || k >= n) throw validation_error("knn requires 1 <= k < n");
        WeightMatrix m;
        m.scheme = WeightScheme::knn;
        m.W = Eigen::MatrixXd::Zero(n, n);
        std::vector<Eigen::Index> order(static_cast<size_t>(n));
        for (Eigen::Index i = 0; i < n; ++i) {
            order.clear();
            for (Eigen::Index j = 0; j < n; ++j)
                if (j != i) order.push_back(j);
            std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
                if (d(i, a) != d(i, b)) return d(i, a) < d(i, b);
                return a < b;
            });
            for (int q = 0; q < k; ++q) m.W(i, order[static_cast<size_t>(q)]) = 1.0;
        }
        m.validate();
        return m;
    }
};

/// Classical Moran's I: (n / sum W) * (sum_ij W_ij (v_i - mean)(v_j - mean))
/// / (sum_i (v_i - mean)^2).
inline double morans_i(const Eigen::VectorXd& values, const WeightMatrix& weights) {
    const Eigen::Index n = values.size();
    if (weights.W.rows() != n) throw validation_error("Moran's I: weight/value size mismatch");
    const double mean = values.mean();
    const Eigen::VectorXd z = values.array() - mean;
    const double denom = z.squaredNorm();
    if (denom <= 0.0)
        throw validation_error("Moran's I undefined for a constant field");
    const double wsum = weights.W.sum();
    const double cross = z.dot(weights.W * z);
    return (static_cast<double>(n) / wsum) * (cross / denom);
}

struct ChainHealthReport {
    std::vector<std::string> gene_ids;
    Eigen::VectorXd ppi_sd;         // across-chain standard deviation, per gene
    std::vector<bool> flagged;      // ppi_sd above the discordance threshold
    double flag_threshold = 0.25;
    std::vector<AcceptanceCounters> per_chain_acceptance;
    std::vector<std::string> warnings;
};

/// Across-chain PPI dispersion plus per-chain acceptance rates; flags genes
/// whose chains disagree.
inline ChainHealthReport chain_health(const std::vector<ChainTrace>& traces,
                                      double flag_threshold = 0.25) {
    if (traces.size() < 2)
        throw validation_error("chain health requires at least two chains");
    const Eigen::Index p = traces[0].p;
    for (const auto& t : traces) {
        t.validate();
        if (t.p != p || t.gene_ids != traces[0].gene_ids)
            throw validation_error("chain traces disagree on the gene set");
    }

    const auto n_chains = static_cast<Eigen::Index>(traces.size());
    Eigen::MatrixXd ppi(n_chains, p);
    for (Eigen::Index c = 0; c < n_chains; ++c) {
        const auto& t = traces[static_cast<size_t>(c)];
        for (Eigen::Index j = 0; j < p; ++j) {
            double acc = 0.0;
            for (long it = t.burn_in; it < t.n_iter; ++it) acc += t.gamma_at(it, j);
            ppi(c, j) = acc / static_cast<double>(t.post_burn_count());
        }
    }

    ChainHealthReport report;
    report.gene_ids = traces[0].gene_ids;
    report.flag_threshold = flag_threshold;
    report.ppi_sd.resize(p);
    report.flagged.assign(static_cast<size_t>(p), false);
    for (Eigen::Index j = 0; j < p; ++j) {
        const double mean = ppi.col(j).mean();
        const double var = (ppi.col(j).array() - mean).square().sum() /
                           static_cast<double>(n_chains - 1);
        report.ppi_sd[j] = std::sqrt(var);
        report.flagged[static_cast<size_t>(j)] = report.ppi_sd[j] > flag_threshold;
    }
    for (const auto& t : traces) {
        report.per_chain_acceptance.push_back(t.acceptance);
        for (const auto& w : t.warnings)
            report.warnings.push_back("chain " + std::to_string(t.chain_id) + ": " + w);
    }
    return report;
}

} // namespace boostgp
