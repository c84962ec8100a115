#pragma once

#include <Eigen/Dense>

#include <atomic>
#include <cmath>
#include <exception>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "boostgp/chain.hpp"
#include "boostgp/data.hpp"
#include "boostgp/densities.hpp"
#include "boostgp/factor_cache.hpp"
#include "boostgp/hyperparams.hpp"
#include "boostgp/kernel.hpp"
#include "boostgp/mathutil.hpp"
#include "boostgp/rng.hpp"

namespace boostgp {

struct SamplerOptions {
    long n_iter = 2000;
    double burn_in_frac = 0.5;
    long snapshot_thin = 10;
    bool record_snapshots = true;

    /// Worker threads for the gene-indexed updates within one chain.
    int inner_threads = 1;

    /// When false, every data-dependent term (the NB likelihood and the
    /// collapsed expression marginal) is treated as constant and only the
    /// indicator/length-scale machinery runs; the chain then samples the
    /// (gamma, l, eta) prior exactly. Calibration/testing mode.
    bool likelihood_enabled = true;

    /// Alternative log-scale random walk for the expression updates.
    bool lambda_log_scale = false;

    /// Length scale at which the spatial marginal is recorded for genes
    /// currently nonspatial (feeds the Bayes factor); <= 0 means t_min/2.
    double bf_reference_scale = 0.0;

    size_t cache_capacity = 128;

    void validate() const {
        if (n_iter < 2) throw validation_error("n_iter must be at least 2");
        if (burn_in_frac < 0.0 || burn_in_frac >= 1.0)
            throw validation_error("burn_in_frac must lie in [0, 1)");
        if (snapshot_thin < 1) throw validation_error("snapshot_thin must be >= 1");
        if (inner_threads < 1) throw validation_error("inner_threads must be >= 1");
    }
};

/// Dynamic-schedule parallel loop; item order of side effects is unordered but
/// every item writes disjoint state, so results do not depend on scheduling.
template <typename Fn>
inline void parallel_for(int threads, Eigen::Index count, Fn&& fn) {
    if (threads <= 1 || count <= 1) {
        for (Eigen::Index i = 0; i < count; ++i) fn(i);
        return;
    }
    const int nt = static_cast<int>(std::min<Eigen::Index>(threads, count));
    std::atomic<Eigen::Index> next{0};
    std::exception_ptr first_error;
    std::mutex err_mu;
    std::vector<std::thread> workers;
    workers.reserve(static_cast<size_t>(nt));
    for (int t = 0; t < nt; ++t) {
        workers.emplace_back([&] {
            try {
                for (;;) {
                    const Eigen::Index i = next.fetch_add(1);
                    if (i >= count) return;
                    fn(i);
                }
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mu);
                if (!first_error) first_error = std::current_exception();
                next.store(count);
            }
        });
    }
    for (auto& w : workers) w.join();
    if (first_error) std::rethrow_exception(first_error);
}

/// Log ratio of the collapsed beta-Bernoulli prior over the spatial indicator
/// vector when one gene is switched on; `active_others` counts the currently
/// active genes excluding the switched one.
inline double log_gamma_add_ratio(long active_others, long p, const Hyperparameters& hp) {
    return std::log(static_cast<double>(active_others) + hp.a_omega) -
           std::log(static_cast<double>(p - active_others - 1) + hp.b_omega);
}

inline double log_gamma_delete_ratio(long active_including, long p, const Hyperparameters& hp) {
    return std::log(static_cast<double>(p - active_including) + hp.b_omega) -
           std::log(static_cast<double>(active_including - 1) + hp.a_omega);
}

/// Log mass of the collapsed beta-Bernoulli prior at a configuration with
/// `active` genes switched on.
inline double log_gamma_prior_mass(long active, long p, const Hyperparameters& hp) {
    return log_beta(hp.a_omega + static_cast<double>(active),
                    hp.b_omega + static_cast<double>(p - active)) -
           log_beta(hp.a_omega, hp.b_omega);
}

/// NB likelihood part of the dispersion update's Hastings ratio (the
/// lgamma(y+1) terms cancel between numerator and denominator).
inline double phi_nb_log_ratio(const Eigen::VectorXi& y, const Eigen::VectorXd& s,
                               const Eigen::Matrix<std::uint8_t, Eigen::Dynamic, 1>& eta,
                               const Eigen::VectorXd& log_lambda, double phi_cur, double phi_prop) {
    double acc = 0.0;
    const double lphi_c = std::log(phi_cur);
    const double lphi_p = std::log(phi_prop);
    const double lg_c = std::lgamma(phi_cur);
    const double lg_p = std::lgamma(phi_prop);
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        if (eta[i]) continue;
        const double mu = s[i] * std::exp(log_lambda[i]);
        const double yi = static_cast<double>(y[i]);
        const double lc_p = std::log(mu + phi_prop);
        const double lc_c = std::log(mu + phi_cur);
        acc += std::lgamma(yi + phi_prop) - lg_p + phi_prop * (lphi_p - lc_p) + yi * (std::log(mu) - lc_p);
        acc -= std::lgamma(yi + phi_cur) - lg_c + phi_cur * (lphi_c - lc_c) + yi * (std::log(mu) - lc_c);
    }
    return acc;
}

/// Precomputed geometry, step sizes, and the shared factor cache; immutable
/// once built, shared by all chains of one run.
class SamplerSetup {
public:
    SamplerSetup(CountMatrix counts, const SpatialCoords& coords, DesignMatrix design,
                 SizeFactors size_factors, Hyperparameters hp, SamplerOptions options)
        : counts_(std::move(counts)), design_(std::move(design)), s_(std::move(size_factors)),
          hp_(hp), opt_(options) {
        opt_.validate();
        hp_.validate();
        counts_.validate();
        coords.validate();
        design_.validate();
        s_.validate();
        if (coords.n_spots() != counts_.n_spots())
            throw validation_error("counts and coordinates disagree on spot count");
        if (design_.n_rows() != counts_.n_spots())
            throw validation_error("design matrix row count mismatch");
        if (s_.s.size() != counts_.n_spots())
            throw validation_error("size factor length mismatch");

        distances_ = distance_matrix(coords);
        bounds_ = distance_bounds(distances_);
        lo_log_ = std::log(bounds_.length_scale_lo());
        hi_log_ = std::log(bounds_.length_scale_hi());
        tau_l_ = hp_.tau_l.value_or(0.1 * (hi_log_ - lo_log_));
        ref_scale_ = opt_.bf_reference_scale > 0.0 ? opt_.bf_reference_scale
                                                   : bounds_.length_scale_lo();
        cache_ = std::make_shared<FactorCache>(distances_, design_.X, hp_.h, opt_.cache_capacity);

        const Eigen::Index n = counts_.n_spots();
        const Eigen::Index p = counts_.n_genes();
        tau_lambda_.resize(p);
        for (Eigen::Index j = 0; j < p; ++j) {
            if (hp_.tau_lambda) {
                tau_lambda_[j] = *hp_.tau_lambda;
                continue;
            }
            Eigen::VectorXd x = counts_.values.col(j).cast<double>().array() / s_.s.array();
            const double mean = x.mean();
            const double var = n > 1 ? (x.array() - mean).square().sum() / static_cast<double>(n - 1)
                                     : 0.0;
            tau_lambda_[j] = 0.1 * std::max(0.1, std::sqrt(var));
        }
        lgamma_y1_.resize(n, p);
        for (Eigen::Index j = 0; j < p; ++j)
            for (Eigen::Index i = 0; i < n; ++i)
                lgamma_y1_(i, j) = std::lgamma(static_cast<double>(counts_.values(i, j)) + 1.0);
    }

    const CountMatrix& counts() const { return counts_; }
    const DesignMatrix& design() const { return design_; }
    const SizeFactors& size_factors() const { return s_; }
    const Hyperparameters& hp() const { return hp_; }
    const SamplerOptions& options() const { return opt_; }
    const DistanceBounds& bounds() const { return bounds_; }
    double lo_log() const { return lo_log_; }
    double hi_log() const { return hi_log_; }
    double tau_l() const { return tau_l_; }
    double reference_scale() const { return ref_scale_; }
    double tau_lambda(Eigen::Index j) const { return tau_lambda_[j]; }
    double lgamma_y1(Eigen::Index i, Eigen::Index j) const { return lgamma_y1_(i, j); }
    FactorCache& cache() const { return *cache_; }

    /// Log prior density of u = log(l): the exponential Jacobian folds the
    /// chosen prior on l into log space so every move targets one measure.
    double log_prior_u(double u) const {
        if (hp_.l_prior == LengthScalePrior::uniform) {
            if (u < lo_log_ - 1e-12 || u > hi_log_ + 1e-12)
                return -std::numeric_limits<double>::infinity();
            return u - std::log(bounds_.length_scale_hi() - bounds_.length_scale_lo());
        }
        return log_gamma_pdf(std::exp(u), hp_.l_gamma_shape, hp_.l_gamma_rate) + u;
    }

    /// Log density of the add move's length-scale proposal at u = log(l*).
    double log_add_proposal_u(double u) const {
        const double sd = 10.0 * tau_l_;
        if (hp_.l_prior == LengthScalePrior::uniform)
            return truncated_normal_logpdf(u, lo_log_, sd, lo_log_, hi_log_);
        return normal_logpdf(u, lo_log_, sd);
    }

private:
    CountMatrix counts_;
    DesignMatrix design_;
    SizeFactors s_;
    Hyperparameters hp_;
    SamplerOptions opt_;
    Eigen::MatrixXd distances_;
    DistanceBounds bounds_;
    double lo_log_ = 0.0, hi_log_ = 0.0, tau_l_ = 0.0, ref_scale_ = 0.0;
    Eigen::VectorXd tau_lambda_;
    Eigen::MatrixXd lgamma_y1_;
    std::shared_ptr<FactorCache> cache_;
};

namespace detail {
struct AtomicCounters {
    std::atomic<std::uint64_t> phi_proposed{0}, phi_accepted{0};
    std::atomic<std::uint64_t> lambda_proposed{0}, lambda_accepted{0};
    std::atomic<std::uint64_t> add_proposed{0}, add_accepted{0};
    std::atomic<std::uint64_t> delete_proposed{0}, delete_accepted{0};
    std::atomic<std::uint64_t> lwithin_proposed{0}, lwithin_accepted{0};
    std::atomic<std::uint64_t> eta_updates{0}, eta_flips{0};

    AcceptanceCounters snapshot() const {
        AcceptanceCounters c;
        c.phi_proposed = phi_proposed;
        c.phi_accepted = phi_accepted;
        c.lambda_proposed = lambda_proposed;
        c.lambda_accepted = lambda_accepted;
        c.add_proposed = add_proposed;
        c.add_accepted = add_accepted;
        c.delete_proposed = delete_proposed;
        c.delete_accepted = delete_accepted;
        c.lwithin_proposed = lwithin_proposed;
        c.lwithin_accepted = lwithin_accepted;
        c.eta_updates = eta_updates;
        c.eta_flips = eta_flips;
        return c;
    }
};
} // namespace detail

/// Runs one chain. Every (chain, gene) pair owns a counter-based RNG stream,
/// so gene-parallel execution reproduces the serial draws exactly.
class ChainRunner {
public:
    ChainRunner(std::shared_ptr<const SamplerSetup> setup, std::uint64_t seed, int chain_id = 0)
        : setup_(std::move(setup)), seed_(seed), chain_id_(chain_id),
          chain_rng_(seed, StreamDomain::chain, static_cast<std::uint64_t>(chain_id), 0) {
        const Eigen::Index p = setup_->counts().n_genes();
        gene_rngs_.reserve(static_cast<size_t>(p));
        for (Eigen::Index j = 0; j < p; ++j)
            gene_rngs_.emplace_back(seed, StreamDomain::gene, static_cast<std::uint64_t>(chain_id),
                                    static_cast<std::uint64_t>(j));
    }

    /// All genes start nonspatial; dispersions come from their prior (clamped
    /// to [1e-3, 1e3] against underflow), extra-zero indicators from their
    /// marginal prior, and log expression from shifted observed counts.
    ChainState init_state() {
        const auto& counts = setup_->counts();
        const auto& s = setup_->size_factors().s;
        const auto& hp = setup_->hp();
        const Eigen::Index n = counts.n_spots();
        const Eigen::Index p = counts.n_genes();

        ChainState st;
        st.H.setZero(n, p);
        st.phi.resize(p);
        st.log_lambda.resize(n, p);
        st.gamma.assign(static_cast<size_t>(p), 0);
        st.length_scale = Eigen::VectorXd::Constant(p, setup_->bounds().length_scale_lo());

        const double p_extra_zero = hp.a_pi / (hp.a_pi + hp.b_pi);
        for (Eigen::Index j = 0; j < p; ++j) {
            CounterRng rng(seed_, StreamDomain::init, static_cast<std::uint64_t>(chain_id_),
                           static_cast<std::uint64_t>(j));
            st.phi[j] = std::clamp(rng.gamma(hp.a_phi, hp.b_phi), 1e-3, 1e3);

            double log_sum = 0.0;
            Eigen::Index nonzero = 0;
            for (Eigen::Index i = 0; i < n; ++i) {
                if (counts.values(i, j) > 0) {
                    const double v =
                        std::log((static_cast<double>(counts.values(i, j)) + 0.5) / s[i]);
                    st.log_lambda(i, j) = v;
                    log_sum += v;
                    ++nonzero;
                }
            }
            const double fill = nonzero > 0 ? log_sum / static_cast<double>(nonzero)
                                            : std::log(0.5);
            for (Eigen::Index i = 0; i < n; ++i) {
                if (counts.values(i, j) == 0) {
                    st.log_lambda(i, j) = fill;
                    st.H(i, j) = rng.bernoulli(p_extra_zero) ? 1 : 0;
                }
            }
        }
        return st;
    }

    /// Gibbs sweep over the extra-zero indicators at zero counts, using the
    /// collapsed beta-Bernoulli predictive over the spot's other genes. The
    /// expression-marginal term is dropped, following the model's update rule.
    void update_eta(ChainState& st) {
        const auto& counts = setup_->counts();
        const auto& s = setup_->size_factors().s;
        const auto& hp = setup_->hp();
        const Eigen::Index n = st.n_spots();
        const Eigen::Index p = st.n_genes();

        Eigen::VectorXi row_ones = Eigen::VectorXi::Zero(n);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < p; ++j) row_ones[i] += st.H(i, j);

        for (Eigen::Index j = 0; j < p; ++j) {
            CounterRng& rng = gene_rngs_[static_cast<size_t>(j)];
            for (Eigen::Index i = 0; i < n; ++i) {
                if (counts.values(i, j) != 0) continue;
                counters_.eta_updates.fetch_add(1, std::memory_order_relaxed);
                const int cur = st.H(i, j);
                const double ones_others = static_cast<double>(row_ones[i] - cur);
                const double zeros_others = static_cast<double>(p - 1) - ones_others;
                double w1 = hp.a_pi + ones_others;
                double w0 = hp.b_pi + zeros_others;
                if (setup_->options().likelihood_enabled) {
                    const double mu = s[i] * std::exp(st.log_lambda(i, j));
                    w0 *= std::exp(log_nb_zero(mu, st.phi[j]));
                }
                const int next = rng.bernoulli(w1 / (w1 + w0)) ? 1 : 0;
                if (next != cur) {
                    counters_.eta_flips.fetch_add(1, std::memory_order_relaxed);
                    row_ones[i] += next - cur;
                    st.H(i, j) = static_cast<std::uint8_t>(next);
                }
            }
        }
    }

    /// Log-normal random walk on each dispersion, accepted with the NB
    /// likelihood ratio over non-dropout sites times the gamma prior ratio.
    void update_phi(ChainState& st) {
        const auto& counts = setup_->counts();
        const auto& s = setup_->size_factors().s;
        const auto& hp = setup_->hp();
        parallel_for(setup_->options().inner_threads, st.n_genes(), [&](Eigen::Index j) {
            CounterRng& rng = gene_rngs_[static_cast<size_t>(j)];
            const double phi_cur = st.phi[j];
            const double phi_prop = std::exp(rng.normal(std::log(phi_cur), hp.tau_phi));
            counters_.phi_proposed.fetch_add(1, std::memory_order_relaxed);
            double logm = log_gamma_pdf(phi_prop, hp.a_phi, hp.b_phi) -
                          log_gamma_pdf(phi_cur, hp.a_phi, hp.b_phi);
            if (setup_->options().likelihood_enabled) {
                logm += phi_nb_log_ratio(counts.values.col(j), s, st.H.col(j),
                                         st.log_lambda.col(j), phi_cur, phi_prop);
            }
            if (std::log(rng.uniform_pos()) < logm) {
                st.phi[j] = phi_prop;
                counters_.phi_accepted.fetch_add(1, std::memory_order_relaxed);
            }
        });
    }

    /// Site-by-site random walk on the expression levels. Proposals are on
    /// the natural scale (out-of-support draws rejected); the acceptance
    /// ratio carries the change-of-variables term so the chain targets the
    /// collapsed t marginal on log expression exactly. NB terms drop out at
    /// dropout sites.
    void update_lambda(ChainState& st) {
        const auto& counts = setup_->counts();
        const auto& s = setup_->size_factors().s;
        const auto& hp = setup_->hp();
        const bool log_scale = setup_->options().lambda_log_scale;
        const Eigen::Index n = st.n_spots();

        parallel_for(setup_->options().inner_threads, st.n_genes(), [&](Eigen::Index j) {
            CounterRng& rng = gene_rngs_[static_cast<size_t>(j)];
            const auto factor = st.gamma[static_cast<size_t>(j)]
                                    ? setup_->cache().spatial(st.length_scale[j])
                                    : setup_->cache().nonspatial();
            const Eigen::MatrixXd& A = factor->inverse();
            const double two_b = 2.0 * hp.b_sigma;
            const double expo = hp.a_sigma + 0.5 * static_cast<double>(n);
            const double tau = log_scale ? hp.tau_lambda.value_or(0.1)
                                         : setup_->tau_lambda(j);

            Eigen::VectorXd v = st.log_lambda.col(j);
            Eigen::VectorXd g = A * v;
            double quad = v.dot(g);

            for (Eigen::Index i = 0; i < n; ++i) {
                counters_.lambda_proposed.fetch_add(1, std::memory_order_relaxed);
                const double v_cur = v[i];
                double v_prop, jac;
                if (log_scale) {
                    v_prop = rng.normal(v_cur, tau);
                    jac = 0.0;
                } else {
                    const double lam_cur = std::exp(v_cur);
                    const double lam_prop = rng.normal(lam_cur, tau);
                    if (!(lam_prop > 0.0)) continue;
                    v_prop = std::log(lam_prop);
                    jac = v_cur - v_prop;
                }
                const double delta = v_prop - v_cur;
                const double quad_prop = quad + 2.0 * delta * g[i] + delta * delta * A(i, i);
                double logm = -expo * (std::log1p(quad_prop / two_b) - std::log1p(quad / two_b)) + jac;
                if (setup_->options().likelihood_enabled && !st.H(i, j)) {
                    const double yi = static_cast<double>(counts.values(i, j));
                    const double phi = st.phi[j];
                    const double mu_cur = s[i] * std::exp(v_cur);
                    const double mu_prop = s[i] * std::exp(v_prop);
                    logm += (yi + phi) * (std::log(mu_cur + phi) - std::log(mu_prop + phi)) +
                            yi * (v_prop - v_cur); // log(mu*/mu) = v* - v
                }
                if (std::log(rng.uniform_pos()) < logm) {
                    counters_.lambda_accepted.fetch_add(1, std::memory_order_relaxed);
                    v[i] = v_prop;
                    g += delta * A.col(i);
                    quad = quad_prop;
                }
            }
            st.log_lambda.col(j) = v;
        });
    }

    /// Add-delete move: flip one random gene's spatial indicator, proposing a
    /// fresh length scale on additions.
    void update_gamma_length_scale(ChainState& st) {
        const auto& hp = setup_->hp();
        const Eigen::Index p = st.n_genes();
        const Eigen::Index j = static_cast<Eigen::Index>(
            chain_rng_.uniform_int(static_cast<std::uint64_t>(p)));
        const long active = st.spatial_count();
        const bool likelihood = setup_->options().likelihood_enabled;
        const double sd_add = 10.0 * setup_->tau_l();

        if (!st.gamma[static_cast<size_t>(j)]) {
            counters_.add_proposed.fetch_add(1, std::memory_order_relaxed);
            double u_prop;
            if (hp.l_prior == LengthScalePrior::uniform) {
                u_prop = std::clamp(
                    chain_rng_.truncated_normal(setup_->lo_log(), sd_add, setup_->lo_log(),
                                                setup_->hi_log()),
                    setup_->lo_log(), setup_->hi_log());
            } else {
                u_prop = chain_rng_.normal(setup_->lo_log(), sd_add);
            }
            const double l_prop = std::exp(u_prop);
            double logm = log_gamma_add_ratio(active, p, hp) + setup_->log_prior_u(u_prop) -
                          setup_->log_add_proposal_u(u_prop);
            if (likelihood) {
                const Eigen::VectorXd v = st.log_lambda.col(j);
                const auto sp = setup_->cache().spatial(l_prop);
                const auto ns = setup_->cache().nonspatial();
                logm += log_mvt_from_factor(v, *sp, hp.a_sigma, hp.b_sigma) -
                        log_mvt_from_factor(v, *ns, hp.a_sigma, hp.b_sigma);
            }
            if (std::log(chain_rng_.uniform_pos()) < logm) {
                counters_.add_accepted.fetch_add(1, std::memory_order_relaxed);
                st.gamma[static_cast<size_t>(j)] = 1;
                st.length_scale[j] = l_prop;
            }
        } else {
            counters_.delete_proposed.fetch_add(1, std::memory_order_relaxed);
            const double u_cur = std::log(st.length_scale[j]);
            double logm = log_gamma_delete_ratio(active, p, hp) +
                          setup_->log_add_proposal_u(u_cur) - setup_->log_prior_u(u_cur);
            if (likelihood) {
                const Eigen::VectorXd v = st.log_lambda.col(j);
                const auto sp = setup_->cache().spatial(st.length_scale[j]);
                const auto ns = setup_->cache().nonspatial();
                logm += log_mvt_from_factor(v, *ns, hp.a_sigma, hp.b_sigma) -
                        log_mvt_from_factor(v, *sp, hp.a_sigma, hp.b_sigma);
            }
            if (std::log(chain_rng_.uniform_pos()) < logm) {
                counters_.delete_accepted.fetch_add(1, std::memory_order_relaxed);
                st.gamma[static_cast<size_t>(j)] = 0;
            }
        }
    }

    /// Within-model truncated random walk on each active gene's length scale.
    /// The proposal is asymmetric through its truncation mass, so the
    /// normalization correction enters the ratio along with the prior's
    /// log-space Jacobian.
    void update_length_scale_within(ChainState& st) {
        const auto& hp = setup_->hp();
        const double tau = setup_->tau_l();
        const bool uniform = hp.l_prior == LengthScalePrior::uniform;
        const bool likelihood = setup_->options().likelihood_enabled;

        std::vector<Eigen::Index> active;
        for (Eigen::Index j = 0; j < st.n_genes(); ++j)
            if (st.gamma[static_cast<size_t>(j)]) active.push_back(j);

        parallel_for(setup_->options().inner_threads, static_cast<Eigen::Index>(active.size()),
                     [&](Eigen::Index a) {
                         const Eigen::Index j = active[static_cast<size_t>(a)];
                         CounterRng& rng = gene_rngs_[static_cast<size_t>(j)];
                         counters_.lwithin_proposed.fetch_add(1, std::memory_order_relaxed);
                         const double u_cur = std::log(st.length_scale[j]);
                         double u_prop, trunc_corr;
                         if (uniform) {
                             u_prop = std::clamp(rng.truncated_normal(u_cur, tau, setup_->lo_log(),
                                                                      setup_->hi_log()),
                                                 setup_->lo_log(), setup_->hi_log());
                             trunc_corr = std::log(truncated_normal_mass(u_cur, tau, setup_->lo_log(),
                                                                         setup_->hi_log())) -
                                          std::log(truncated_normal_mass(u_prop, tau, setup_->lo_log(),
                                                                         setup_->hi_log()));
                         } else {
                             u_prop = rng.normal(u_cur, tau);
                             trunc_corr = 0.0;
                         }
                         const double l_prop = std::exp(u_prop);
                         double logm = setup_->log_prior_u(u_prop) - setup_->log_prior_u(u_cur) +
                                       trunc_corr;
                         if (likelihood) {
                             const Eigen::VectorXd v = st.log_lambda.col(j);
                             const auto f_prop = setup_->cache().spatial(l_prop);
                             const auto f_cur = setup_->cache().spatial(st.length_scale[j]);
                             logm += log_mvt_from_factor(v, *f_prop, hp.a_sigma, hp.b_sigma) -
                                     log_mvt_from_factor(v, *f_cur, hp.a_sigma, hp.b_sigma);
                         }
                         if (std::log(rng.uniform_pos()) < logm) {
                             counters_.lwithin_accepted.fetch_add(1, std::memory_order_relaxed);
                             st.length_scale[j] = l_prop;
                         }
                     });
    }

    /// Full run: per iteration, in order, the extra-zero, dispersion,
    /// expression, add-delete, and within-model length-scale updates.
    ChainTrace run() {
        const auto& opt = setup_->options();
        const auto& counts = setup_->counts();
        const Eigen::Index n = counts.n_spots();
        const Eigen::Index p = counts.n_genes();

        ChainTrace trace;
        trace.n = n;
        trace.p = p;
        trace.n_iter = opt.n_iter;
        trace.burn_in = static_cast<long>(static_cast<double>(opt.n_iter) * opt.burn_in_frac);
        trace.thin = opt.snapshot_thin;
        trace.seed = seed_;
        trace.chain_id = chain_id_;
        trace.gene_ids = counts.gene_ids;
        const size_t total = static_cast<size_t>(opt.n_iter) * static_cast<size_t>(p);
        trace.gamma.resize(total);
        trace.length_scale.resize(total);
        trace.phi.resize(total);
        trace.ld_spatial.resize(total);
        trace.ld_nonspatial.resize(total);
        trace.loglik.resize(total);
        trace.log_prior_gamma.resize(static_cast<size_t>(opt.n_iter));
        trace.lambda_mean.setZero(n, p);
        trace.eta_mean.setZero(n, p);

        ChainState st = init_state();
        const bool full_model = opt.likelihood_enabled;
        for (long it = 0; it < opt.n_iter; ++it) {
            try {
                update_eta(st);
                if (full_model) {
                    update_phi(st);
                    update_lambda(st);
                }
                update_gamma_length_scale(st);
                update_length_scale_within(st);
            } catch (const std::exception& e) {
                throw numerical_error("chain " + std::to_string(chain_id_) + " iteration " +
                                      std::to_string(it) + ": " + e.what());
            }
            st.iteration = it + 1;
            record(st, trace, it);
        }
        finalize(trace);
        return trace;
    }

    AcceptanceCounters counters() const { return counters_.snapshot(); }

private:
    void record(const ChainState& st, ChainTrace& trace, long it) {
        const auto& hp = setup_->hp();
        const Eigen::Index n = st.n_spots();
        const Eigen::Index p = st.n_genes();
        const size_t base = static_cast<size_t>(it) * static_cast<size_t>(p);
        const bool full_model = setup_->options().likelihood_enabled;
        const auto& s = setup_->size_factors().s;
        const auto& counts = setup_->counts();

        parallel_for(setup_->options().inner_threads, p, [&](Eigen::Index j) {
            const size_t k = base + static_cast<size_t>(j);
            trace.gamma[k] = st.gamma[static_cast<size_t>(j)];
            trace.length_scale[k] = st.length_scale[j];
            trace.phi[k] = st.phi[j];
            if (!full_model) {
                trace.ld_spatial[k] = 0.0;
                trace.ld_nonspatial[k] = 0.0;
                trace.loglik[k] = 0.0;
                return;
            }
            const Eigen::VectorXd v = st.log_lambda.col(j);
            const auto ns = setup_->cache().nonspatial();
            trace.ld_nonspatial[k] = log_mvt_from_factor(v, *ns, hp.a_sigma, hp.b_sigma);
            const double l_eval = st.gamma[static_cast<size_t>(j)] ? st.length_scale[j]
                                                                   : setup_->reference_scale();
            const auto sp = setup_->cache().spatial(l_eval);
            trace.ld_spatial[k] = log_mvt_from_factor(v, *sp, hp.a_sigma, hp.b_sigma);

            double ll = 0.0;
            const double phi = st.phi[j];
            const double lg_phi = std::lgamma(phi);
            for (Eigen::Index i = 0; i < n; ++i) {
                if (st.H(i, j)) continue;
                const double yi = static_cast<double>(counts.values(i, j));
                const double mu = s[i] * std::exp(v[i]);
                const double y_term = counts.values(i, j) == 0 ? 0.0 : yi * std::log1p(phi / mu);
                ll += std::lgamma(yi + phi) - setup_->lgamma_y1(i, j) - lg_phi -
                      phi * std::log1p(mu / phi) - y_term;
            }
            trace.loglik[k] = ll;
        });
        trace.log_prior_gamma[static_cast<size_t>(it)] =
            log_gamma_prior_mass(st.spatial_count(), p, hp);

        if (it >= trace.burn_in) {
            trace.lambda_mean += st.log_lambda;
            trace.eta_mean += st.H.cast<double>();
        }
        if (setup_->options().record_snapshots &&
            (it + 1) % setup_->options().snapshot_thin == 0) {
            trace.lambda_snapshots.push_back(st.log_lambda);
            trace.snapshot_iterations.push_back(it);
        }
    }

    void finalize(ChainTrace& trace) {
        const double post = static_cast<double>(trace.post_burn_count());
        if (post > 0) {
            trace.lambda_mean /= post;
            trace.eta_mean /= post;
        }
        trace.acceptance = counters_.snapshot();
        const auto& a = trace.acceptance;
        auto warn_extreme = [&](const char* name, std::uint64_t acc, std::uint64_t prop) {
            if (prop == 0) return;
            const double r = AcceptanceCounters::rate(acc, prop);
            if (r <= 0.0 || r >= 1.0)
                trace.warnings.push_back(std::string("degenerate acceptance rate for ") + name +
                                         ": " + std::to_string(r));
        };
        if (setup_->options().likelihood_enabled) {
            warn_extreme("phi", a.phi_accepted, a.phi_proposed);
            warn_extreme("lambda", a.lambda_accepted, a.lambda_proposed);
            warn_extreme("length_scale", a.lwithin_accepted, a.lwithin_proposed);
        }
        trace.validate();
    }

    std::shared_ptr<const SamplerSetup> setup_;
    std::uint64_t seed_;
    int chain_id_;
    CounterRng chain_rng_;
    std::vector<CounterRng> gene_rngs_;
    detail::AtomicCounters counters_;
};

inline ChainTrace run_chain(const CountMatrix& counts, const SpatialCoords& coords,
                            const DesignMatrix& design, const SizeFactors& s,
                            const Hyperparameters& hp, const SamplerOptions& options,
                            std::uint64_t seed, int chain_id = 0) {
    auto setup = std::make_shared<const SamplerSetup>(counts, coords, design, s, hp, options);
    ChainRunner runner(setup, seed, chain_id);
    return runner.run();
}

/// Independent chains sharing one factor cache; chain c draws from streams
/// keyed by (seed, c). `chain_threads` chains execute concurrently.
inline std::vector<ChainTrace> run_multichain(const CountMatrix& counts,
                                              const SpatialCoords& coords,
                                              const DesignMatrix& design, const SizeFactors& s,
                                              const Hyperparameters& hp,
                                              const SamplerOptions& options, int n_chains,
                                              std::uint64_t seed, int chain_threads = 1) {
    if (n_chains < 1) throw validation_error("n_chains must be >= 1");
    auto setup = std::make_shared<const SamplerSetup>(counts, coords, design, s, hp, options);
    std::vector<ChainTrace> traces(static_cast<size_t>(n_chains));
    std::vector<std::string> failures(static_cast<size_t>(n_chains));
    std::atomic<bool> failed{false};

    parallel_for(std::max(1, chain_threads), n_chains, [&](Eigen::Index c) {
        try {
            ChainRunner runner(setup, seed, static_cast<int>(c));
            traces[static_cast<size_t>(c)] = runner.run();
        } catch (const std::exception& e) {
            failures[static_cast<size_t>(c)] = e.what();
            failed.store(true);
        }
    });
    if (failed.load()) {
        for (size_t c = 0; c < failures.size(); ++c)
            if (!failures[c].empty())
                throw numerical_error("chain " + std::to_string(c) + " failed: " + failures[c]);
    }
    return traces;
}

} // namespace boostgp
