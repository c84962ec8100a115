#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "boostgp/chain.hpp"
#include "boostgp/errors.hpp"
#include "boostgp/mathutil.hpp"

namespace boostgp {

/// Per-gene posterior summary and decision under the combined rule.
struct GeneResult {
    std::string gene_id;
    double ppi = 0.0;
    double log_bayes_factor = 0.0;
    double bayes_factor = 1.0; // exp(log_bayes_factor), saturated near DBL_MAX
    double p_value = 1.0;
    double p_adjusted = 1.0;
    bool selected = false;
    std::optional<double> posterior_mean_l;
    double posterior_mean_phi = 0.0;
};

namespace detail {

inline void check_traces(const std::vector<ChainTrace>& traces) {
    if (traces.empty()) throw validation_error("no chain traces supplied");
    for (const auto& t : traces) {
        t.validate();
        if (t.p != traces[0].p || t.gene_ids != traces[0].gene_ids)
            throw validation_error("chain traces disagree on the gene set");
        if (t.post_burn_count() < 1)
            throw validation_error("chain trace has no post-burn-in iterations");
    }
}

} // namespace detail

/// Marginal posterior probabilities of inclusion, pooled over the post-burn-in
/// samples of every chain.
inline Eigen::VectorXd compute_ppi(const std::vector<ChainTrace>& traces) {
    detail::check_traces(traces);
    const Eigen::Index p = traces[0].p;
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(p);
    long total = 0;
    for (const auto& t : traces) {
        for (long it = t.burn_in; it < t.n_iter; ++it)
            for (Eigen::Index j = 0; j < p; ++j) acc[j] += t.gamma_at(it, j);
        total += t.post_burn_count();
    }
    return acc / static_cast<double>(total);
}

/// Indicator vector of the visited post-burn-in sample maximizing the joint
/// of likelihood, expression marginal, and indicator prior. Ties break to the
/// earliest iteration of the earliest chain.
inline std::vector<bool> map_estimate(const std::vector<ChainTrace>& traces) {
    detail::check_traces(traces);
    const Eigen::Index p = traces[0].p;
    double best = -std::numeric_limits<double>::infinity();
    const ChainTrace* best_trace = nullptr;
    long best_it = 0;
    for (const auto& t : traces) {
        for (long it = t.burn_in; it < t.n_iter; ++it) {
            double score = t.log_prior_gamma[static_cast<size_t>(it)];
            for (Eigen::Index j = 0; j < p; ++j) {
                score += t.value_at(t.loglik, it, j);
                score += t.gamma_at(it, j) ? t.value_at(t.ld_spatial, it, j)
                                           : t.value_at(t.ld_nonspatial, it, j);
            }
            if (score > best) {
                best = score;
                best_trace = &t;
                best_it = it;
            }
        }
    }
    std::vector<bool> out(static_cast<size_t>(p));
    for (Eigen::Index j = 0; j < p; ++j) out[static_cast<size_t>(j)] = best_trace->gamma_at(best_it, j);
    return out;
}

struct BfdrSelection {
    double threshold = 0.0; // on 1 - PPI
    std::vector<bool> selected;
    double fdr = 0.0;
};

/// Largest threshold c over {1 - PPI_j} and 1 whose expected Bayesian FDR
/// stays within alpha; genes with 1 - PPI strictly below c are selected.
inline BfdrSelection bfdr_threshold(const Eigen::VectorXd& ppi, double alpha = 0.05) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw validation_error("alpha must be in (0, 1)");
    const Eigen::Index p = ppi.size();
    std::vector<double> candidates(static_cast<size_t>(p));
    for (Eigen::Index j = 0; j < p; ++j) candidates[static_cast<size_t>(j)] = 1.0 - ppi[j];
    candidates.push_back(1.0);
    std::sort(candidates.begin(), candidates.end(), std::greater<>());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

    auto fdr_at = [&](double c) {
        double num = 0.0;
        long den = 0;
        for (Eigen::Index j = 0; j < p; ++j) {
            const double q = 1.0 - ppi[j];
            if (q < c) {
                num += q;
                ++den;
            }
        }
        return den == 0 ? 0.0 : num / static_cast<double>(den);
    };

    BfdrSelection out;
    out.selected.assign(static_cast<size_t>(p), false);
    // The smallest candidate always yields an empty selection with FDR 0, so
    // the scan terminates with "select nothing" when no larger c qualifies.
    for (const double c : candidates) {
        const double f = fdr_at(c);
        if (f <= alpha) {
            for (Eigen::Index j = 0; j < p; ++j)
                out.selected[static_cast<size_t>(j)] = (1.0 - ppi[j]) < c;
            out.threshold = c;
            out.fdr = f;
            return out;
        }
    }
    return out;
}

/// Per-gene log Bayes factors: the post-burn-in average of the density ratio
/// between the spatial and nonspatial expression marginals, computed in log
/// space. Requires the per-iteration stored densities.
inline Eigen::VectorXd log_bayes_factors(const std::vector<ChainTrace>& traces) {
    detail::check_traces(traces);
    const Eigen::Index p = traces[0].p;
    long total = 0;
    for (const auto& t : traces) total += t.post_burn_count();
    Eigen::VectorXd out(p);
    std::vector<double> diffs;
    diffs.reserve(static_cast<size_t>(total));
    for (Eigen::Index j = 0; j < p; ++j) {
        diffs.clear();
        for (const auto& t : traces)
            for (long it = t.burn_in; it < t.n_iter; ++it)
                diffs.push_back(t.value_at(t.ld_spatial, it, j) -
                                t.value_at(t.ld_nonspatial, it, j));
        out[j] = log_sum_exp(diffs) - std::log(static_cast<double>(total));
    }
    return out;
}

/// Chi-square(1) upper-tail p-values of 2*log(BF), clamped to 1 when the
/// Bayes factor favors the nonspatial branch.
inline Eigen::VectorXd lr_pvalue(const std::vector<ChainTrace>& traces) {
    const Eigen::VectorXd lbf = log_bayes_factors(traces);
    Eigen::VectorXd p(lbf.size());
    for (Eigen::Index j = 0; j < lbf.size(); ++j) {
        const double stat = std::max(0.0, 2.0 * lbf[j]);
        p[j] = chisq1_upper_tail(stat);
    }
    return p;
}

/// Benjamini-Hochberg step-up adjustment.
inline Eigen::VectorXd bh_adjust(const Eigen::VectorXd& pvals) {
    const Eigen::Index m = pvals.size();
    for (Eigen::Index j = 0; j < m; ++j)
        if (!(pvals[j] >= 0.0 && pvals[j] <= 1.0))
            throw validation_error("p-values must lie in [0, 1]");
    std::vector<Eigen::Index> order(static_cast<size_t>(m));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](Eigen::Index a, Eigen::Index b) { return pvals[a] < pvals[b]; });
    Eigen::VectorXd adjusted(m);
    double running = 1.0;
    for (Eigen::Index r = m - 1; r >= 0; --r) {
        const Eigen::Index j = order[static_cast<size_t>(r)];
        const double scaled = pvals[j] * static_cast<double>(m) / static_cast<double>(r + 1);
        running = std::min(running, scaled);
        adjusted[j] = running;
    }
    return adjusted;
}

/// Assembles per-gene results under the combined selection rule:
/// BH-adjusted p-value below alpha AND PPI above the cutoff.
inline std::vector<GeneResult> summarize(const std::vector<ChainTrace>& traces,
                                         double alpha = 0.05, double ppi_cutoff = 0.5) {
    detail::check_traces(traces);
    const Eigen::Index p = traces[0].p;
    const Eigen::VectorXd ppi = compute_ppi(traces);
    const Eigen::VectorXd lbf = log_bayes_factors(traces);
    Eigen::VectorXd pvals(p);
    for (Eigen::Index j = 0; j < p; ++j)
        pvals[j] = chisq1_upper_tail(std::max(0.0, 2.0 * lbf[j]));
    const Eigen::VectorXd padj = bh_adjust(pvals);

    std::vector<GeneResult> results(static_cast<size_t>(p));
    for (Eigen::Index j = 0; j < p; ++j) {
        GeneResult& r = results[static_cast<size_t>(j)];
        r.gene_id = traces[0].gene_ids[static_cast<size_t>(j)];
        r.ppi = ppi[j];
        r.log_bayes_factor = lbf[j];
        r.bayes_factor = std::exp(std::min(lbf[j], 700.0));
        r.p_value = pvals[j];
        r.p_adjusted = padj[j];
        r.selected = (r.p_adjusted < alpha) && (r.ppi > ppi_cutoff);

        double l_sum = 0.0, phi_sum = 0.0;
        long l_count = 0, phi_count = 0;
        for (const auto& t : traces) {
            for (long it = t.burn_in; it < t.n_iter; ++it) {
                phi_sum += t.value_at(t.phi, it, j);
                ++phi_count;
                if (t.gamma_at(it, j)) {
                    l_sum += t.value_at(t.length_scale, it, j);
                    ++l_count;
                }
            }
        }
        r.posterior_mean_phi = phi_sum / static_cast<double>(phi_count);
        if (l_count > 0) r.posterior_mean_l = l_sum / static_cast<double>(l_count);
    }
    std::sort(results.begin(), results.end(), [](const GeneResult& a, const GeneResult& b) {
        if (a.ppi != b.ppi) return a.ppi > b.ppi;
        return a.gene_id < b.gene_id;
    });
    return results;
}

/// One row per gene, sorted by PPI descending (gene id tie-break).
inline void write_results(const std::vector<GeneResult>& results, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw io_error("cannot write results file: " + path);
    std::fputs("gene_id\tppi\tbayes_factor\tp_value\tp_adjusted\tselected\t"
               "posterior_mean_l\tposterior_mean_phi\n",
               f);
    for (const auto& r : results) {
        std::fprintf(f, "%s\t%.12g\t%.12g\t%.12g\t%.12g\t%d\t", r.gene_id.c_str(), r.ppi,
                     r.bayes_factor, r.p_value, r.p_adjusted, r.selected ? 1 : 0);
        if (r.posterior_mean_l)
            std::fprintf(f, "%.12g", *r.posterior_mean_l);
        else
            std::fputs("NA", f);
        std::fprintf(f, "\t%.12g\n", r.posterior_mean_phi);
    }
    std::fclose(f);
}

} // namespace boostgp
