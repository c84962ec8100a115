#include <catch2/catch_amalgamated.hpp>

#include "boostgp/inference.hpp"
#include "boostgp/rng.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace boostgp;

namespace {

/// Minimal hand-built trace: gamma patterns plus stored densities.
ChainTrace toy_trace(Eigen::Index p, long iters, long burn_in, int chain_id = 0) {
    ChainTrace t;
    t.n = 2;
    t.p = p;
    t.n_iter = iters;
    t.burn_in = burn_in;
    t.chain_id = chain_id;
    t.seed = 1;
    for (Eigen::Index j = 0; j < p; ++j) t.gene_ids.push_back("g" + std::to_string(j));
    const size_t total = static_cast<size_t>(iters) * static_cast<size_t>(p);
    t.gamma.assign(total, 0);
    t.length_scale.assign(total, 1.0);
    t.phi.assign(total, 2.0);
    t.ld_spatial.assign(total, 0.0);
    t.ld_nonspatial.assign(total, 0.0);
    t.loglik.assign(total, 0.0);
    t.log_prior_gamma.assign(static_cast<size_t>(iters), 0.0);
    t.lambda_mean.setZero(2, p);
    t.eta_mean.setZero(2, p);
    return t;
}

void set_gamma(ChainTrace& t, long it, Eigen::Index j, bool on) {
    t.gamma[static_cast<size_t>(it) * static_cast<size_t>(t.p) + static_cast<size_t>(j)] = on;
}

} // namespace

TEST_CASE("PPI: constant, alternating, and pooled counts") {
    ChainTrace t = toy_trace(3, 100, 0);
    for (long it = 0; it < 100; ++it) {
        set_gamma(t, it, 0, true);        // always on -> 1
        set_gamma(t, it, 1, it % 2 == 0); // alternating -> 0.5
    }
    const Eigen::VectorXd ppi = compute_ppi({t});
    CHECK(ppi[0] == 1.0);
    CHECK(ppi[1] == 0.5);
    CHECK(ppi[2] == 0.0);

    // pooled chains of lengths (100, 100) with on-counts (30, 50) -> 0.4
    ChainTrace a = toy_trace(1, 100, 0, 0);
    ChainTrace b = toy_trace(1, 100, 0, 1);
    for (long it = 0; it < 30; ++it) set_gamma(a, it, 0, true);
    for (long it = 0; it < 50; ++it) set_gamma(b, it, 0, true);
    const Eigen::VectorXd pooled = compute_ppi({a, b});
    CHECK_THAT(pooled[0], Catch::Matchers::WithinAbs(0.4, 1e-15));

    // equal-length pooling equals the mean of per-chain PPIs
    const double per_chain_mean = 0.5 * (compute_ppi({a})[0] + compute_ppi({b})[0]);
    CHECK(pooled[0] == per_chain_mean);
}

TEST_CASE("PPI rejects empty traces") {
    CHECK_THROWS_AS(compute_ppi({}), validation_error);
    ChainTrace t = toy_trace(2, 10, 0);
    t.burn_in = 10; // no post-burn-in samples
    CHECK_THROWS_AS(compute_ppi({t}), validation_error);
}

TEST_CASE("MAP estimate maximizes the stored joint score") {
    ChainTrace t = toy_trace(2, 4, 0);
    // iteration scores via loglik: make iteration 2 the winner
    auto set_loglik = [&](long it, double v) {
        t.loglik[static_cast<size_t>(it) * 2] = v;
    };
    set_loglik(0, -10.0);
    set_loglik(1, -5.0);
    set_loglik(2, -1.0);
    set_loglik(3, -5.0);
    set_gamma(t, 2, 1, true);
    const auto map = map_estimate({t});
    CHECK(map == std::vector<bool>{false, true});

    // exhaustive oracle over iterations
    double best = -1e300;
    long best_it = -1;
    for (long it = 0; it < 4; ++it) {
        double score = t.log_prior_gamma[static_cast<size_t>(it)];
        for (Eigen::Index j = 0; j < 2; ++j) {
            score += t.value_at(t.loglik, it, j);
            score += t.gamma_at(it, j) ? t.value_at(t.ld_spatial, it, j)
                                       : t.value_at(t.ld_nonspatial, it, j);
        }
        if (score > best) {
            best = score;
            best_it = it;
        }
    }
    CHECK(best_it == 2);

    // tie-break: earliest iteration wins
    ChainTrace tie = toy_trace(1, 3, 0);
    set_gamma(tie, 0, 0, true); // scores all equal; iteration 0 is the answer
    set_gamma(tie, 2, 0, false);
    CHECK(map_estimate({tie}) == std::vector<bool>{true});

    // single-iteration trace returns that iteration's indicators
    ChainTrace single = toy_trace(2, 1, 0);
    set_gamma(single, 0, 0, true);
    CHECK(map_estimate({single}) == std::vector<bool>{true, false});
}

TEST_CASE("Bayesian FDR threshold: direct evaluation and limiting cases") {
    Eigen::VectorXd ppi(3);
    ppi << 0.9, 0.8, 0.2;
    // with c = 0.25 the rate is (0.1 + 0.2) / 2 = 0.15, so alpha = 0.2 admits it
    const BfdrSelection sel = bfdr_threshold(ppi, 0.2);
    CHECK_THAT(sel.fdr, Catch::Matchers::WithinAbs(0.15, 1e-12));
    CHECK(sel.selected == std::vector<bool>{true, true, false});

    // stricter alpha selects nothing
    const BfdrSelection none = bfdr_threshold(ppi, 0.05);
    CHECK(none.selected == std::vector<bool>{false, false, false});

    // perfect PPIs select everything at any alpha
    Eigen::VectorXd ones = Eigen::VectorXd::Ones(4);
    const BfdrSelection all = bfdr_threshold(ones, 0.05);
    CHECK(all.selected == std::vector<bool>{true, true, true, true});
    CHECK(all.fdr == 0.0);
}

TEST_CASE("Bayesian FDR selection is monotone in alpha") {
    CounterRng rng(61, StreamDomain::test, 3, 0);
    Eigen::VectorXd ppi(40);
    for (Eigen::Index j = 0; j < 40; ++j) ppi[j] = rng.uniform();
    std::vector<bool> prev(40, false);
    for (const double alpha : {0.01, 0.05, 0.1, 0.2, 0.4, 0.8}) {
        const auto sel = bfdr_threshold(ppi, alpha);
        for (size_t j = 0; j < 40; ++j)
            if (prev[j]) REQUIRE(sel.selected[j]);
        prev = sel.selected;
    }
}

TEST_CASE("Bayes-factor p-values: degenerate, quantile, and shift invariance") {
    // identical densities -> BF 1 -> p = 1
    ChainTrace t = toy_trace(2, 50, 10);
    Eigen::VectorXd p = lr_pvalue({t});
    CHECK(p[0] == 1.0);
    CHECK(p[1] == 1.0);

    // 2 log BF = 3.841... -> p ~ 0.05
    ChainTrace q = toy_trace(1, 20, 0);
    const double target = 3.841458820694124 / 2.0;
    for (long it = 0; it < 20; ++it)
        q.ld_spatial[static_cast<size_t>(it)] = target;
    p = lr_pvalue({q});
    CHECK_THAT(p[0], Catch::Matchers::WithinAbs(0.05, 1e-9));

    // adding a constant to both stored densities changes nothing
    ChainTrace shifted = q;
    for (auto& v : shifted.ld_spatial) v += 123.0;
    for (auto& v : shifted.ld_nonspatial) v += 123.0;
    CHECK(lr_pvalue({shifted})[0] == p[0]);

    // spatial below nonspatial clamps to p = 1
    ChainTrace neg = toy_trace(1, 20, 0);
    for (long it = 0; it < 20; ++it) neg.ld_nonspatial[static_cast<size_t>(it)] = 5.0;
    CHECK(lr_pvalue({neg})[0] == 1.0);
}

TEST_CASE("BH adjustment: worked examples and properties") {
    Eigen::VectorXd p(3);
    p << 0.01, 0.02, 0.03;
    const Eigen::VectorXd adj = bh_adjust(p);
    CHECK_THAT(adj[0], Catch::Matchers::WithinAbs(0.03, 1e-15));
    CHECK_THAT(adj[1], Catch::Matchers::WithinAbs(0.03, 1e-15));
    CHECK_THAT(adj[2], Catch::Matchers::WithinAbs(0.03, 1e-15));

    Eigen::VectorXd all_one = Eigen::VectorXd::Ones(5);
    CHECK(bh_adjust(all_one) == all_one);

    Eigen::VectorXd single(1);
    single << 0.2;
    CHECK(bh_adjust(single)[0] == 0.2);

    // permutation equivariance and dominance over the raw p-values
    CounterRng rng(67, StreamDomain::test, 3, 1);
    Eigen::VectorXd r(25);
    for (Eigen::Index j = 0; j < 25; ++j) r[j] = rng.uniform();
    const Eigen::VectorXd a1 = bh_adjust(r);
    for (Eigen::Index j = 0; j < 25; ++j) REQUIRE(a1[j] >= r[j]);
    Eigen::VectorXd rev = r.reverse();
    const Eigen::VectorXd a2 = bh_adjust(rev);
    CHECK(a1.reverse() == a2);

    Eigen::VectorXd bad(1);
    bad << 1.5;
    CHECK_THROWS_AS(bh_adjust(bad), validation_error);
}

TEST_CASE("summarize applies the combined selection rule") {
    // gene 0: high PPI and strong Bayes factor; gene 1: high PPI, weak BF;
    // gene 2: background
    ChainTrace t = toy_trace(3, 100, 0);
    for (long it = 0; it < 100; ++it) {
        set_gamma(t, it, 0, it % 10 != 0); // PPI 0.9
        set_gamma(t, it, 1, it % 10 != 0); // PPI 0.9
        t.ld_spatial[static_cast<size_t>(it) * 3 + 0] = 20.0; // decisive
        t.ld_spatial[static_cast<size_t>(it) * 3 + 1] = 0.1;  // negligible
    }
    const auto results = summarize({t}, 0.05, 0.5);
    REQUIRE(results.size() == 3);
    // rows sorted by PPI descending with gene-id tie-break
    CHECK(results[0].gene_id == "g0");
    CHECK(results[1].gene_id == "g1");
    CHECK(results[2].gene_id == "g2");
    CHECK(results[0].selected);
    CHECK_FALSE(results[1].selected); // PPI passes, adjusted p-value does not
    CHECK_FALSE(results[2].selected);
    CHECK(results[0].p_adjusted >= results[0].p_value);
    CHECK(results[0].posterior_mean_l.has_value());
    CHECK_FALSE(results[2].posterior_mean_l.has_value());
    CHECK(results[0].posterior_mean_phi == 2.0);
}

TEST_CASE("results table writes one sorted row per gene") {
    ChainTrace t = toy_trace(4, 10, 0);
    for (long it = 0; it < 10; ++it) set_gamma(t, it, 2, true);
    const auto results = summarize({t});
    const auto path = std::filesystem::temp_directory_path() / "boostgp_results_test.tsv";
    write_results(results, path.string());
    std::ifstream f(path);
    std::string line;
    std::getline(f, line);
    CHECK(line == "gene_id\tppi\tbayes_factor\tp_value\tp_adjusted\tselected\t"
                  "posterior_mean_l\tposterior_mean_phi");
    int rows = 0;
    std::string first_gene;
    while (std::getline(f, line)) {
        if (rows == 0) first_gene = line.substr(0, line.find('\t'));
        ++rows;
    }
    CHECK(rows == 4);
    CHECK(first_gene == "g2"); // highest PPI first
}
