#pragma once

#include <Eigen/Dense>

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "boostgp/data.hpp"
#include "boostgp/errors.hpp"
#include "boostgp/version.hpp"

namespace boostgp {

/// One MCMC state: extra-zero indicators, dispersions, log expression,
/// spatial indicators and their length scales.
struct ChainState {
    Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> H; // eta_ij, n x p
    Eigen::VectorXd phi;                                           // p
    Eigen::MatrixXd log_lambda;                                    // n x p
    std::vector<std::uint8_t> gamma;                               // p
    Eigen::VectorXd length_scale;                                  // p; meaningful where gamma=1
    long iteration = 0;

    Eigen::Index n_spots() const { return log_lambda.rows(); }
    Eigen::Index n_genes() const { return log_lambda.cols(); }

    long spatial_count() const {
        long c = 0;
        for (const auto g : gamma) c += g;
        return c;
    }
};

struct AcceptanceCounters {
    std::uint64_t phi_proposed = 0, phi_accepted = 0;
    std::uint64_t lambda_proposed = 0, lambda_accepted = 0;
    std::uint64_t add_proposed = 0, add_accepted = 0;
    std::uint64_t delete_proposed = 0, delete_accepted = 0;
    std::uint64_t lwithin_proposed = 0, lwithin_accepted = 0;
    std::uint64_t eta_updates = 0, eta_flips = 0;

    static double rate(std::uint64_t accepted, std::uint64_t proposed) {
        return proposed == 0 ? 0.0 : static_cast<double>(accepted) / static_cast<double>(proposed);
    }
};

/// Per-iteration record of one chain, stored column-contiguous per field
/// (iteration-major rows of length p), plus post-burn-in running means and
/// thinned log-expression snapshots.
struct ChainTrace {
    Eigen::Index n = 0, p = 0;
    long n_iter = 0;
    long burn_in = 0;
    long thin = 10;
    std::uint64_t seed = 0;
    int chain_id = 0;
    std::vector<std::string> gene_ids;

    std::vector<std::uint8_t> gamma;   // n_iter * p
    std::vector<double> length_scale;  // n_iter * p
    std::vector<double> phi;           // n_iter * p
    std::vector<double> ld_spatial;    // n_iter * p
    std::vector<double> ld_nonspatial; // n_iter * p
    std::vector<double> loglik;        // n_iter * p (NB terms over eta=0 sites)
    std::vector<double> log_prior_gamma; // n_iter

    Eigen::MatrixXd lambda_mean; // n x p, post-burn-in mean of log expression
    Eigen::MatrixXd eta_mean;    // n x p, post-burn-in mean of eta

    std::vector<Eigen::MatrixXd> lambda_snapshots;
    std::vector<long> snapshot_iterations;

    AcceptanceCounters acceptance;
    std::vector<std::string> warnings;

    long post_burn_count() const { return n_iter - burn_in; }

    std::uint8_t gamma_at(long it, Eigen::Index j) const {
        return gamma[static_cast<size_t>(it) * static_cast<size_t>(p) + static_cast<size_t>(j)];
    }
    double value_at(const std::vector<double>& field, long it, Eigen::Index j) const {
        return field[static_cast<size_t>(it) * static_cast<size_t>(p) + static_cast<size_t>(j)];
    }

    void validate() const {
        const size_t expect = static_cast<size_t>(n_iter) * static_cast<size_t>(p);
        if (gamma.size() != expect || length_scale.size() != expect || phi.size() != expect ||
            ld_spatial.size() != expect || ld_nonspatial.size() != expect ||
            loglik.size() != expect || log_prior_gamma.size() != static_cast<size_t>(n_iter))
            throw validation_error("chain trace field lengths disagree with iteration count");
        if (burn_in < 0 || burn_in >= n_iter)
            throw validation_error("chain trace burn-in out of range");
    }
};

namespace detail {

inline void write_doubles(std::FILE* f, const double* v, size_t count) {
    char buf[32];
    for (size_t k = 0; k < count; ++k) {
        std::snprintf(buf, sizeof(buf), " %.17g", v[k]);
        std::fputs(buf, f);
    }
}

inline double parse_trace_double(const char*& cursor, const char* end) {
    while (cursor < end && *cursor == ' ') ++cursor;
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(cursor, end, v);
    if (ec != std::errc()) throw validation_error("trace file: bad numeric field");
    cursor = ptr;
    return v;
}

} // namespace detail

/// Writes the trace in the versioned iteration-major text format. Snapshots
/// stay in memory; the file carries the per-iteration records and the
/// post-burn-in mean matrices, which is what post-hoc inference consumes.
inline void save_trace(const ChainTrace& t, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw io_error("cannot write trace file: " + path);
    std::fprintf(f, "#%s\n", trace_format_version());
    std::fprintf(f, "#meta chain=%d seed=%llu n=%lld p=%lld iters=%ld burn_in=%ld thin=%ld\n",
                 t.chain_id, static_cast<unsigned long long>(t.seed),
                 static_cast<long long>(t.n), static_cast<long long>(t.p), t.n_iter, t.burn_in,
                 t.thin);
    std::fputs("#genes", f);
    for (const auto& g : t.gene_ids) std::fprintf(f, "\t%s", g.c_str());
    std::fputs("\n", f);
    const auto& a = t.acceptance;
    std::fprintf(f,
                 "#acceptance phi=%llu/%llu lambda=%llu/%llu add=%llu/%llu delete=%llu/%llu "
                 "lwithin=%llu/%llu eta=%llu/%llu\n",
                 (unsigned long long)a.phi_accepted, (unsigned long long)a.phi_proposed,
                 (unsigned long long)a.lambda_accepted, (unsigned long long)a.lambda_proposed,
                 (unsigned long long)a.add_accepted, (unsigned long long)a.add_proposed,
                 (unsigned long long)a.delete_accepted, (unsigned long long)a.delete_proposed,
                 (unsigned long long)a.lwithin_accepted, (unsigned long long)a.lwithin_proposed,
                 (unsigned long long)a.eta_flips, (unsigned long long)a.eta_updates);
    const size_t p = static_cast<size_t>(t.p);
    for (long it = 0; it < t.n_iter; ++it) {
        std::fprintf(f, "I %ld G ", it);
        for (size_t j = 0; j < p; ++j)
            std::fputc(t.gamma[static_cast<size_t>(it) * p + j] ? '1' : '0', f);
        std::fputs(" L", f);
        detail::write_doubles(f, t.length_scale.data() + static_cast<size_t>(it) * p, p);
        std::fputs(" P", f);
        detail::write_doubles(f, t.phi.data() + static_cast<size_t>(it) * p, p);
        std::fputs(" S", f);
        detail::write_doubles(f, t.ld_spatial.data() + static_cast<size_t>(it) * p, p);
        std::fputs(" N", f);
        detail::write_doubles(f, t.ld_nonspatial.data() + static_cast<size_t>(it) * p, p);
        std::fputs(" K", f);
        detail::write_doubles(f, t.loglik.data() + static_cast<size_t>(it) * p, p);
        std::fputs(" Q", f);
        detail::write_doubles(f, &t.log_prior_gamma[static_cast<size_t>(it)], 1);
        std::fputs("\n", f);
    }
    for (Eigen::Index i = 0; i < t.lambda_mean.rows(); ++i) {
        std::fputs("M", f);
        Eigen::VectorXd row = t.lambda_mean.row(i);
        detail::write_doubles(f, row.data(), static_cast<size_t>(row.size()));
        std::fputs("\n", f);
    }
    for (Eigen::Index i = 0; i < t.eta_mean.rows(); ++i) {
        std::fputs("E", f);
        Eigen::VectorXd row = t.eta_mean.row(i);
        detail::write_doubles(f, row.data(), static_cast<size_t>(row.size()));
        std::fputs("\n", f);
    }
    std::fputs("#end\n", f);
    std::fclose(f);
}

inline ChainTrace load_trace(const std::string& path) {
    const std::string text = detail::read_file(path);
    const auto lines = detail::split_lines(text);
    if (lines.empty() || lines[0] != std::string("#") + trace_format_version())
        throw validation_error("trace file version mismatch or not a trace file: " + path);

    ChainTrace t;
    size_t li = 1;
    {
        if (li >= lines.size()) throw validation_error("trace file truncated: " + path);
        long long n = 0, p = 0;
        unsigned long long seed = 0;
        if (std::sscanf(std::string(lines[li]).c_str(),
                        "#meta chain=%d seed=%llu n=%lld p=%lld iters=%ld burn_in=%ld thin=%ld",
                        &t.chain_id, &seed, &n, &p, &t.n_iter, &t.burn_in, &t.thin) != 7)
            throw validation_error("trace file: bad meta line");
        t.seed = seed;
        t.n = static_cast<Eigen::Index>(n);
        t.p = static_cast<Eigen::Index>(p);
        ++li;
    }
    {
        const auto fields = detail::split_fields(lines[li], '\t');
        if (fields.empty() || fields[0] != "#genes")
            throw validation_error("trace file: missing gene list");
        t.gene_ids.assign(fields.begin() + 1, fields.end());
        if (static_cast<Eigen::Index>(t.gene_ids.size()) != t.p)
            throw validation_error("trace file: gene list length mismatch");
        ++li;
    }
    {
        unsigned long long v[12];
        if (std::sscanf(std::string(lines[li]).c_str(),
                        "#acceptance phi=%llu/%llu lambda=%llu/%llu add=%llu/%llu "
                        "delete=%llu/%llu lwithin=%llu/%llu eta=%llu/%llu",
                        &v[0], &v[1], &v[2], &v[3], &v[4], &v[5], &v[6], &v[7], &v[8], &v[9],
                        &v[10], &v[11]) != 12)
            throw validation_error("trace file: bad acceptance line");
        auto& a = t.acceptance;
        a.phi_accepted = v[0];
        a.phi_proposed = v[1];
        a.lambda_accepted = v[2];
        a.lambda_proposed = v[3];
        a.add_accepted = v[4];
        a.add_proposed = v[5];
        a.delete_accepted = v[6];
        a.delete_proposed = v[7];
        a.lwithin_accepted = v[8];
        a.lwithin_proposed = v[9];
        a.eta_flips = v[10];
        a.eta_updates = v[11];
        ++li;
    }

    const size_t p = static_cast<size_t>(t.p);
    const size_t total = static_cast<size_t>(t.n_iter) * p;
    t.gamma.reserve(total);
    t.length_scale.reserve(total);
    t.phi.reserve(total);
    t.ld_spatial.reserve(total);
    t.ld_nonspatial.reserve(total);
    t.loglik.reserve(total);
    t.log_prior_gamma.reserve(static_cast<size_t>(t.n_iter));
    t.lambda_mean.resize(t.n, t.p);
    t.eta_mean.resize(t.n, t.p);

    Eigen::Index mrow = 0, erow = 0;
    auto read_block = [&](const char*& c, const char* end, std::vector<double>& dst) {
        for (size_t j = 0; j < p; ++j) dst.push_back(detail::parse_trace_double(c, end));
    };
    for (; li < lines.size(); ++li) {
        const std::string_view line = lines[li];
        if (line == "#end") break;
        const char* c = line.data();
        const char* end = line.data() + line.size();
        if (line[0] == 'I') {
            c += 1;
            (void)detail::parse_trace_double(c, end); // iteration index
            while (c < end && *c == ' ') ++c;
            if (c >= end || *c != 'G') throw validation_error("trace file: bad iteration line");
            c += 2;
            for (size_t j = 0; j < p; ++j) {
                if (c >= end || (*c != '0' && *c != '1'))
                    throw validation_error("trace file: bad gamma bits");
                t.gamma.push_back(*c == '1');
                ++c;
            }
            auto expect_tag = [&](char tag) {
                while (c < end && *c == ' ') ++c;
                if (c >= end || *c != tag) throw validation_error("trace file: missing section");
                ++c;
            };
            expect_tag('L');
            read_block(c, end, t.length_scale);
            expect_tag('P');
            read_block(c, end, t.phi);
            expect_tag('S');
            read_block(c, end, t.ld_spatial);
            expect_tag('N');
            read_block(c, end, t.ld_nonspatial);
            expect_tag('K');
            read_block(c, end, t.loglik);
            expect_tag('Q');
            t.log_prior_gamma.push_back(detail::parse_trace_double(c, end));
        } else if (line[0] == 'M') {
            c += 1;
            if (mrow >= t.n) throw validation_error("trace file: extra mean rows");
            for (Eigen::Index j = 0; j < t.p; ++j)
                t.lambda_mean(mrow, j) = detail::parse_trace_double(c, end);
            ++mrow;
        } else if (line[0] == 'E') {
            c += 1;
            if (erow >= t.n) throw validation_error("trace file: extra eta rows");
            for (Eigen::Index j = 0; j < t.p; ++j)
                t.eta_mean(erow, j) = detail::parse_trace_double(c, end);
            ++erow;
        } else {
            throw validation_error("trace file: unrecognized line");
        }
    }
    if (mrow != t.n || erow != t.n) throw validation_error("trace file: mean blocks incomplete");
    t.validate();
    return t;
}

} // namespace boostgp
