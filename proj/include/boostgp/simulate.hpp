#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include "boostgp/data.hpp"
#include "boostgp/errors.hpp"
#include "boostgp/rng.hpp"

namespace boostgp {

enum class PatternKind { spot, linear, binary_mask };

/// Spatial effect-field template for SV genes: a radial peak at the lattice
/// center, a diagonal gradient, or a two-group mask over caller coordinates.
struct PatternSpec {
    PatternKind kind = PatternKind::spot;
    double fold_change = 6.0; // peak multiplicative effect, e-scale
    double radius = 5.0;      // spot pattern decay radius (lattice units)
    std::vector<std::uint8_t> mask; // binary-mask: 1 = high group
    SpatialCoords coords;           // binary-mask: external geometry

    static PatternSpec spot_pattern(double fold = 6.0, double radius = 5.0) {
        return {PatternKind::spot, fold, radius, {}, {}};
    }
    static PatternSpec linear_pattern(double fold = 6.0) {
        return {PatternKind::linear, fold, 5.0, {}, {}};
    }
    static PatternSpec mask_pattern(SpatialCoords coords, std::vector<std::uint8_t> mask,
                                    double fold = 3.0) {
        PatternSpec p{PatternKind::binary_mask, fold, 5.0, std::move(mask), std::move(coords)};
        if (p.mask.size() != static_cast<size_t>(p.coords.n_spots()))
            throw validation_error("mask length does not match coordinate count");
        return p;
    }
};

inline constexpr int kLatticeSide = 16;

/// The 16-by-16 integer lattice (1-based coordinates) used by the spot and
/// linear patterns.
inline SpatialCoords make_lattice_coords(int side = kLatticeSide) {
    SpatialCoords sc;
    sc.coords.resize(static_cast<Eigen::Index>(side) * side, 2);
    sc.spot_ids.reserve(static_cast<size_t>(side) * side);
    Eigen::Index k = 0;
    for (int r = 1; r <= side; ++r)
        for (int c = 1; c <= side; ++c, ++k) {
            sc.coords(k, 0) = r;
            sc.coords(k, 1) = c;
            sc.spot_ids.push_back("s" + std::to_string(k + 1));
        }
    return sc;
}

inline SpatialCoords pattern_coords(const PatternSpec& spec) {
    return spec.kind == PatternKind::binary_mask ? spec.coords : make_lattice_coords();
}

/// Per-spot log-scale effect e_i. Spot: log(fold) at the four center spots,
/// decaying linearly to zero within the radius. Linear: log(fold) at the
/// bottom-left corner, decaying linearly along the 45-degree diagonal.
/// Mask: log(fold) for the high group. fold_change = 1 degenerates to zeros.
inline Eigen::VectorXd make_effect_field(const PatternSpec& spec) {
    const double peak = std::log(spec.fold_change);
    if (spec.kind == PatternKind::binary_mask) {
        if (spec.mask.size() != static_cast<size_t>(spec.coords.n_spots()))
            throw validation_error("mask length does not match coordinate count");
        Eigen::VectorXd e(spec.coords.n_spots());
        for (Eigen::Index i = 0; i < e.size(); ++i)
            e[i] = spec.mask[static_cast<size_t>(i)] ? peak : 0.0;
        return e;
    }
    const SpatialCoords lattice = make_lattice_coords();
    const Eigen::Index n = lattice.n_spots();
    Eigen::VectorXd e(n);
    if (spec.kind == PatternKind::spot) {
        const double centers[4][2] = {{8, 8}, {8, 9}, {9, 8}, {9, 9}};
        for (Eigen::Index i = 0; i < n; ++i) {
            double d = std::numeric_limits<double>::infinity();
            for (const auto& c : centers) {
                const double dr = lattice.coords(i, 0) - c[0];
                const double dc = lattice.coords(i, 1) - c[1];
                d = std::min(d, std::hypot(dr, dc));
            }
            e[i] = peak * std::max(0.0, 1.0 - d / spec.radius);
        }
    } else {
        // Projection distance from the bottom-left corner along the diagonal,
        // normalized by the full diagonal projection length.
        const double full = 2.0 * (kLatticeSide - 1) / std::numbers::sqrt2;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double proj =
                ((lattice.coords(i, 0) - 1.0) + (lattice.coords(i, 1) - 1.0)) / std::numbers::sqrt2;
            e[i] = peak * std::max(0.0, 1.0 - proj / full);
        }
    }
    return e;
}

/// Generator configuration; defaults reproduce the benchmark scenario
/// dimensions (100 genes, 15 spatially variable, 256 lattice spots).
struct SimConfig {
    Eigen::Index n_genes = 100;
    Eigen::Index n_sv = 15;
    double beta_baseline = 2.0;
    double noise_sd = 0.3;
    double size_factor_sd = 0.2;
    double dispersion_mean = 10.0;
    double false_zero_frac = 0.0;
    std::uint64_t seed = 1;

    void validate() const {
        if (n_genes < 1 || n_sv < 0 || n_sv > n_genes)
            throw validation_error("need 0 <= n_sv <= n_genes, n_genes >= 1");
        if (!(noise_sd > 0.0) || !(size_factor_sd > 0.0) || !(dispersion_mean > 0.0))
            throw validation_error("simulation scale parameters must be positive");
        if (false_zero_frac < 0.0 || false_zero_frac > 1.0)
            throw validation_error("false_zero_frac must lie in [0, 1]");
    }
};

struct LabeledDataset {
    CountMatrix counts;
    SpatialCoords coords;
    std::vector<bool> truth; // true where the gene is spatially variable
    Eigen::MatrixXd true_lambda;
};

/// Draws counts y ~ NB(s_i * lambda_ij, phi_j) with
/// log(lambda) = baseline + effect * 1{SV} + noise, then forces
/// ceil(frac * n) spots per gene to zero. Bit-reproducible per seed.
inline LabeledDataset generate_dataset(const PatternSpec& pattern, const SimConfig& config) {
    config.validate();
    LabeledDataset out;
    out.coords = pattern_coords(pattern);
    const Eigen::VectorXd effect = make_effect_field(pattern);
    const Eigen::Index n = out.coords.n_spots();
    const Eigen::Index p = config.n_genes;

    CounterRng global(config.seed, StreamDomain::sim_global, 0, 0);
    Eigen::VectorXd s(n);
    for (Eigen::Index i = 0; i < n; ++i) s[i] = std::exp(global.normal(0.0, config.size_factor_sd));
    Eigen::VectorXd phi(p);
    for (Eigen::Index j = 0; j < p; ++j)
        phi[j] = std::max(1e-8, global.exponential(config.dispersion_mean));

    out.counts.values.resize(n, p);
    out.true_lambda.resize(n, p);
    out.truth.assign(static_cast<size_t>(p), false);
    for (Eigen::Index j = 0; j < config.n_sv; ++j) out.truth[static_cast<size_t>(j)] = true;

    const long n_zero = static_cast<long>(
        std::ceil(config.false_zero_frac * static_cast<double>(n) - 1e-12));
    std::vector<Eigen::Index> spots(static_cast<size_t>(n));

    for (Eigen::Index j = 0; j < p; ++j) {
        CounterRng rng(config.seed, StreamDomain::sim_gene, 0, static_cast<std::uint64_t>(j));
        const bool sv = out.truth[static_cast<size_t>(j)];
        for (Eigen::Index i = 0; i < n; ++i) {
            const double log_lam = config.beta_baseline + (sv ? effect[i] : 0.0) +
                                   rng.normal(0.0, config.noise_sd);
            const double lam = std::exp(log_lam);
            out.true_lambda(i, j) = lam;
            out.counts.values(i, j) =
                static_cast<int>(std::min<std::uint64_t>(rng.negative_binomial(s[i] * lam, phi[j]),
                                                         std::numeric_limits<int>::max()));
        }
        if (n_zero > 0) {
            std::iota(spots.begin(), spots.end(), 0);
            for (long k = 0; k < n_zero; ++k) {
                const auto pick = k + static_cast<long>(
                    rng.uniform_int(static_cast<std::uint64_t>(n - k)));
                std::swap(spots[static_cast<size_t>(k)], spots[static_cast<size_t>(pick)]);
                out.counts.values(spots[static_cast<size_t>(k)], j) = 0;
            }
        }
    }

    out.counts.spot_ids = out.coords.spot_ids;
    out.counts.gene_ids.reserve(static_cast<size_t>(p));
    for (Eigen::Index j = 0; j < p; ++j) out.counts.gene_ids.push_back("gene" + std::to_string(j + 1));
    out.counts.validate();
    return out;
}

inline void save_truth(const LabeledDataset& data, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw io_error("cannot write truth file: " + path);
    std::fputs("gene_id\tis_sv\n", f);
    for (size_t j = 0; j < data.truth.size(); ++j)
        std::fprintf(f, "%s\t%d\n", data.counts.gene_ids[j].c_str(), data.truth[j] ? 1 : 0);
    std::fclose(f);
}

/// One label per line ("high"/"low" or "1"/"0"), aligned with the coordinate
/// file's row order.
inline std::vector<std::uint8_t> load_mask(const std::string& path) {
    const std::string text = detail::read_file(path);
    const auto lines = detail::split_lines(text);
    std::vector<std::uint8_t> mask;
    mask.reserve(lines.size());
    for (size_t r = 0; r < lines.size(); ++r) {
        const std::string_view v = lines[r];
        if (v == "high" || v == "1")
            mask.push_back(1);
        else if (v == "low" || v == "0")
            mask.push_back(0);
        else
            throw validation_error("mask line " + std::to_string(r + 1) +
                                   ": expected high/low or 1/0, got '" + std::string(v) + "'");
    }
    if (mask.empty()) throw validation_error("mask file is empty: " + path);
    return mask;
}

/// Rank-based AUC: the probability a random positive outscores a random
/// negative, ties counted half.
inline double auc(const Eigen::VectorXd& scores, const std::vector<bool>& truth) {
    const Eigen::Index p = scores.size();
    if (static_cast<size_t>(p) != truth.size())
        throw validation_error("auc: score/truth length mismatch");
    long n_pos = 0;
    for (const bool t : truth) n_pos += t;
    const long n_neg = static_cast<long>(truth.size()) - n_pos;
    if (n_pos == 0 || n_neg == 0)
        throw validation_error("auc undefined: truth contains a single class");

    std::vector<Eigen::Index> order(static_cast<size_t>(p));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](Eigen::Index a, Eigen::Index b) { return scores[a] < scores[b]; });
    // average ranks over ties
    double rank_sum_pos = 0.0;
    size_t k = 0;
    while (k < order.size()) {
        size_t m = k;
        while (m + 1 < order.size() && scores[order[m + 1]] == scores[order[k]]) ++m;
        const double avg_rank = 0.5 * static_cast<double>(k + 1 + m + 1);
        for (size_t q = k; q <= m; ++q)
            if (truth[static_cast<size_t>(order[q])]) rank_sum_pos += avg_rank;
        k = m + 1;
    }
    const double u = rank_sum_pos - 0.5 * static_cast<double>(n_pos) * (n_pos + 1);
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

/// Matthews correlation coefficient; 0 when any denominator factor vanishes.
inline double mcc(const std::vector<bool>& predicted, const std::vector<bool>& truth) {
    if (predicted.size() != truth.size())
        throw validation_error("mcc: prediction/truth length mismatch");
    double tp = 0, tn = 0, fp = 0, fn = 0;
    for (size_t j = 0; j < truth.size(); ++j) {
        if (predicted[j] && truth[j]) ++tp;
        else if (predicted[j] && !truth[j]) ++fp;
        else if (!predicted[j] && truth[j]) ++fn;
        else ++tn;
    }
    const double denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
    if (denom <= 0.0) return 0.0;
    return (tp * tn - fp * fn) / std::sqrt(denom);
}

} // namespace boostgp
