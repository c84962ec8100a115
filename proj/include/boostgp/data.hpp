#pragma once

#include <Eigen/Dense>
#include <zlib.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "boostgp/errors.hpp"

namespace boostgp {

/// n-by-p matrix of nonnegative integer read counts, spots as rows.
struct CountMatrix {
    Eigen::MatrixXi values; // y_ij
    std::vector<std::string> spot_ids;
    std::vector<std::string> gene_ids;

    Eigen::Index n_spots() const { return values.rows(); }
    Eigen::Index n_genes() const { return values.cols(); }

    void validate() const {
        if (values.rows() < 2) throw validation_error("count matrix needs at least 2 spots");
        if (values.cols() < 1) throw validation_error("count matrix needs at least 1 gene");
        if (static_cast<Eigen::Index>(spot_ids.size()) != values.rows() ||
            static_cast<Eigen::Index>(gene_ids.size()) != values.cols())
            throw validation_error("count matrix identifier lengths do not match its shape");
        if ((values.array() < 0).any()) throw validation_error("count matrix has negative entries");
        check_unique(spot_ids, "spot");
        check_unique(gene_ids, "gene");
    }

    static void check_unique(const std::vector<std::string>& ids, const char* what) {
        std::unordered_set<std::string_view> seen;
        for (const auto& id : ids)
            if (!seen.insert(id).second)
                throw validation_error(std::string("duplicate ") + what + " identifier: " + id);
    }
};

/// n-by-2 planar coordinates, one row per spot.
struct SpatialCoords {
    Eigen::MatrixX2d coords;
    std::vector<std::string> spot_ids;

    Eigen::Index n_spots() const { return coords.rows(); }

    void validate() const {
        if (static_cast<Eigen::Index>(spot_ids.size()) != coords.rows())
            throw validation_error("coordinate identifier count does not match row count");
        if (!coords.allFinite()) throw validation_error("coordinates contain non-finite values");
        bool distinct = false;
        for (Eigen::Index i = 1; i < coords.rows() && !distinct; ++i)
            distinct = (coords.row(i) != coords.row(0));
        if (coords.rows() < 2 || !distinct)
            throw validation_error("need at least two distinct spot coordinates");
    }
};

/// n-by-R covariate matrix whose first column is the intercept.
struct DesignMatrix {
    Eigen::MatrixXd X;

    Eigen::Index n_rows() const { return X.rows(); }
    Eigen::Index n_covariates() const { return X.cols(); }

    static DesignMatrix intercept_only(Eigen::Index n) {
        DesignMatrix d;
        d.X = Eigen::MatrixXd::Ones(n, 1);
        return d;
    }

    void validate() const {
        if (X.cols() < 1) throw validation_error("design matrix needs at least one column");
        if ((X.col(0).array() != 1.0).any())
            throw validation_error("design matrix first column must be the intercept (all ones)");
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
        if (qr.rank() < X.cols())
            throw validation_error("design matrix columns are linearly dependent");
    }
};

/// Per-spot multiplicative normalization constants, constrained to unit product.
struct SizeFactors {
    Eigen::VectorXd s;

    void validate() const {
        if ((s.array() <= 0.0).any()) throw validation_error("size factors must be positive");
        double log_prod = 0.0;
        for (Eigen::Index i = 0; i < s.size(); ++i) log_prod += std::log(s[i]);
        if (std::abs(log_prod) > 1e-10)
            throw validation_error("size factors do not multiply to 1");
    }

    static SizeFactors ones(Eigen::Index n) {
        SizeFactors sf;
        sf.s = Eigen::VectorXd::Ones(n);
        return sf;
    }
};

enum class Orientation { genes_in_columns, genes_in_rows };
enum class Delimiter { detect, tab, comma };

namespace detail {

/// Reads a whole file, transparently inflating gzip content.
inline std::string read_file(const std::string& path) {
    gzFile f = gzopen(path.c_str(), "rb");
    if (!f) throw io_error("cannot open file: " + path);
    std::string out;
    char buf[1 << 16];
    int got;
    while ((got = gzread(f, buf, sizeof(buf))) > 0) out.append(buf, static_cast<size_t>(got));
    const bool bad = got < 0;
    gzclose(f);
    if (bad) throw io_error("cannot read file: " + path);
    return out;
}

inline std::vector<std::string_view> split_lines(const std::string& text) {
    std::vector<std::string_view> lines;
    size_t start = 0;
    while (start <= text.size()) {
        size_t end = text.find('\n', start);
        if (end == std::string::npos) end = text.size();
        std::string_view line(text.data() + start, end - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (!line.empty()) lines.push_back(line);
        if (end == text.size()) break;
        start = end + 1;
    }
    return lines;
}

inline char pick_delimiter(std::string_view header, Delimiter requested) {
    switch (requested) {
    case Delimiter::tab: return '\t';
    case Delimiter::comma: return ',';
    case Delimiter::detect:
    default: return header.find('\t') != std::string_view::npos ? '\t' : ',';
    }
}

inline std::vector<std::string_view> split_fields(std::string_view line, char delim) {
    std::vector<std::string_view> fields;
    size_t start = 0;
    while (true) {
        const size_t end = line.find(delim, start);
        if (end == std::string_view::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, end - start));
        start = end + 1;
    }
    return fields;
}

inline int parse_count_cell(std::string_view cell, size_t row, size_t col) {
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    const bool ok = ec == std::errc() && ptr == cell.data() + cell.size() && !cell.empty();
    if (!ok || v < 0)
        throw validation_error("count parse error at data row " + std::to_string(row + 1) +
                               ", column " + std::to_string(col + 1) + ": '" + std::string(cell) +
                               "' is not a nonnegative integer");
    if (v > std::numeric_limits<int>::max())
        throw validation_error("count overflow at data row " + std::to_string(row + 1) +
                               ", column " + std::to_string(col + 1));
    return static_cast<int>(v);
}

inline double parse_real_cell(std::string_view cell, size_t row, size_t col) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    const bool ok = ec == std::errc() && ptr == cell.data() + cell.size() && !cell.empty();
    if (!ok || !std::isfinite(v))
        throw validation_error("numeric parse error at data row " + std::to_string(row + 1) +
                               ", column " + std::to_string(col + 1) + ": '" + std::string(cell) + "'");
    return v;
}

inline std::string format_sig(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*g", digits, v);
    return buf;
}

} // namespace detail

/// Loads a delimited count table: one header row, one identifier column,
/// integer cells. The result is normalized to spots-as-rows.
inline CountMatrix load_counts(const std::string& path,
                               Orientation orientation = Orientation::genes_in_columns,
                               Delimiter delimiter = Delimiter::detect) {
    const std::string text = detail::read_file(path);
    const auto lines = detail::split_lines(text);
    if (lines.size() < 2) throw validation_error("count file has no data rows: " + path);
    const char delim = detail::pick_delimiter(lines[0], delimiter);

    const auto header = detail::split_fields(lines[0], delim);
    if (header.size() < 2) throw validation_error("count file header has no value columns: " + path);
    std::vector<std::string> col_ids(header.begin() + 1, header.end());

    const size_t rows = lines.size() - 1;
    const size_t cols = col_ids.size();
    std::vector<std::string> row_ids(rows);
    Eigen::MatrixXi m(rows, cols);
    for (size_t r = 0; r < rows; ++r) {
        const auto fields = detail::split_fields(lines[r + 1], delim);
        if (fields.size() != cols + 1)
            throw validation_error("count row " + std::to_string(r + 1) + " has " +
                                   std::to_string(fields.size() - 1) + " values, expected " +
                                   std::to_string(cols));
        row_ids[r] = std::string(fields[0]);
        for (size_t c = 0; c < cols; ++c)
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                detail::parse_count_cell(fields[c + 1], r, c + 1);
    }

    CountMatrix out;
    if (orientation == Orientation::genes_in_columns) {
        out.values = std::move(m);
        out.spot_ids = std::move(row_ids);
        out.gene_ids = std::move(col_ids);
    } else {
        out.values = m.transpose();
        out.spot_ids = std::move(col_ids);
        out.gene_ids = std::move(row_ids);
    }
    out.validate();
    return out;
}

/// Loads a coordinate table with columns (spot_id, x, y) after a header row.
inline SpatialCoords load_coords(const std::string& path, Delimiter delimiter = Delimiter::detect) {
    const std::string text = detail::read_file(path);
    const auto lines = detail::split_lines(text);
    if (lines.size() < 2) throw validation_error("coordinate file has no data rows: " + path);
    const char delim = detail::pick_delimiter(lines[0], delimiter);

    const size_t rows = lines.size() - 1;
    SpatialCoords out;
    out.coords.resize(rows, 2);
    out.spot_ids.resize(rows);
    for (size_t r = 0; r < rows; ++r) {
        const auto fields = detail::split_fields(lines[r + 1], delim);
        if (fields.size() < 3)
            throw validation_error("coordinate row " + std::to_string(r + 1) +
                                   " needs (spot_id, x, y)");
        out.spot_ids[r] = std::string(fields[0]);
        out.coords(static_cast<Eigen::Index>(r), 0) = detail::parse_real_cell(fields[1], r, 1);
        out.coords(static_cast<Eigen::Index>(r), 1) = detail::parse_real_cell(fields[2], r, 2);
    }
    CountMatrix::check_unique(out.spot_ids, "spot");
    out.validate();
    return out;
}

/// Reorders coordinate rows to match the count matrix's spot order.
inline SpatialCoords align_coords(const SpatialCoords& coords, const CountMatrix& counts) {
    std::unordered_map<std::string_view, Eigen::Index> index;
    for (size_t r = 0; r < coords.spot_ids.size(); ++r)
        index.emplace(coords.spot_ids[r], static_cast<Eigen::Index>(r));

    SpatialCoords out;
    out.coords.resize(counts.n_spots(), 2);
    out.spot_ids = counts.spot_ids;
    std::vector<std::string> missing;
    for (Eigen::Index i = 0; i < counts.n_spots(); ++i) {
        const auto it = index.find(counts.spot_ids[static_cast<size_t>(i)]);
        if (it == index.end()) {
            missing.push_back(counts.spot_ids[static_cast<size_t>(i)]);
            continue;
        }
        out.coords.row(i) = coords.coords.row(it->second);
    }
    if (!missing.empty()) {
        std::string msg = "coordinates missing for spots:";
        for (const auto& id : missing) msg += " " + id;
        throw validation_error(msg);
    }
    out.validate();
    return out;
}

/// Loads covariates (spot_id then numeric columns) and prepends the intercept.
inline DesignMatrix load_design(const std::string& path, const CountMatrix& counts,
                                Delimiter delimiter = Delimiter::detect) {
    const std::string text = detail::read_file(path);
    const auto lines = detail::split_lines(text);
    if (lines.size() < 2) throw validation_error("design file has no data rows: " + path);
    const char delim = detail::pick_delimiter(lines[0], delimiter);
    const auto header = detail::split_fields(lines[0], delim);
    if (header.size() < 2) throw validation_error("design file has no covariate columns");
    const size_t n_cov = header.size() - 1;

    std::unordered_map<std::string, Eigen::VectorXd> by_spot;
    for (size_t r = 0; r + 1 < lines.size(); ++r) {
        const auto fields = detail::split_fields(lines[r + 1], delim);
        if (fields.size() != n_cov + 1)
            throw validation_error("design row " + std::to_string(r + 1) + " has wrong width");
        Eigen::VectorXd v(n_cov);
        for (size_t c = 0; c < n_cov; ++c) v[static_cast<Eigen::Index>(c)] =
            detail::parse_real_cell(fields[c + 1], r, c + 1);
        by_spot[std::string(fields[0])] = std::move(v);
    }

    DesignMatrix d;
    d.X.resize(counts.n_spots(), static_cast<Eigen::Index>(n_cov) + 1);
    d.X.col(0).setOnes();
    for (Eigen::Index i = 0; i < counts.n_spots(); ++i) {
        const auto it = by_spot.find(counts.spot_ids[static_cast<size_t>(i)]);
        if (it == by_spot.end())
            throw validation_error("design matrix missing spot: " +
                                   counts.spot_ids[static_cast<size_t>(i)]);
        d.X.row(i).tail(static_cast<Eigen::Index>(n_cov)) = it->second.transpose();
    }
    d.validate();
    return d;
}

inline void save_counts(const CountMatrix& counts, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw io_error("cannot write file: " + path);
    std::string line = "spot_id";
    for (const auto& g : counts.gene_ids) line += "\t" + g;
    line += "\n";
    std::fputs(line.c_str(), f);
    for (Eigen::Index i = 0; i < counts.n_spots(); ++i) {
        line = counts.spot_ids[static_cast<size_t>(i)];
        for (Eigen::Index j = 0; j < counts.n_genes(); ++j)
            line += "\t" + std::to_string(counts.values(i, j));
        line += "\n";
        std::fputs(line.c_str(), f);
    }
    std::fclose(f);
}

inline void save_coords(const SpatialCoords& coords, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw io_error("cannot write file: " + path);
    std::fputs("spot_id\tx\ty\n", f);
    for (Eigen::Index i = 0; i < coords.n_spots(); ++i) {
        std::string line = coords.spot_ids[static_cast<size_t>(i)] + "\t" +
                           detail::format_sig(coords.coords(i, 0), 12) + "\t" +
                           detail::format_sig(coords.coords(i, 1), 12) + "\n";
        std::fputs(line.c_str(), f);
    }
    std::fclose(f);
}

/// Drops spots with low total counts (using raw totals), then genes expressed
/// in too small a fraction of the remaining spots.
inline std::pair<CountMatrix, SpatialCoords> filter(const CountMatrix& counts,
                                                    const SpatialCoords& coords,
                                                    long min_spot_total = 10,
                                                    double min_gene_nonzero_frac = 0.10) {
    if (min_spot_total < 0) throw validation_error("min_spot_total must be >= 0");
    if (min_gene_nonzero_frac < 0.0 || min_gene_nonzero_frac > 1.0)
        throw validation_error("min_gene_nonzero_frac must be in [0, 1]");
    if (coords.n_spots() != counts.n_spots())
        throw validation_error("counts and coordinates disagree on spot count");

    std::vector<Eigen::Index> keep_spots;
    for (Eigen::Index i = 0; i < counts.n_spots(); ++i) {
        const long long total = counts.values.row(i).cast<long long>().sum();
        if (total >= min_spot_total) keep_spots.push_back(i);
    }
    if (keep_spots.empty()) throw validation_error("spot filter removed every spot");

    std::vector<Eigen::Index> keep_genes;
    for (Eigen::Index j = 0; j < counts.n_genes(); ++j) {
        Eigen::Index nonzero = 0;
        for (const Eigen::Index i : keep_spots)
            if (counts.values(i, j) > 0) ++nonzero;
        const double frac = static_cast<double>(nonzero) / static_cast<double>(keep_spots.size());
        if (frac >= min_gene_nonzero_frac) keep_genes.push_back(j);
    }
    if (keep_genes.empty()) throw validation_error("gene filter removed every gene");

    CountMatrix fc;
    fc.values.resize(static_cast<Eigen::Index>(keep_spots.size()),
                     static_cast<Eigen::Index>(keep_genes.size()));
    for (size_t a = 0; a < keep_spots.size(); ++a)
        for (size_t b = 0; b < keep_genes.size(); ++b)
            fc.values(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
                counts.values(keep_spots[a], keep_genes[b]);
    for (const Eigen::Index i : keep_spots) fc.spot_ids.push_back(counts.spot_ids[static_cast<size_t>(i)]);
    for (const Eigen::Index j : keep_genes) fc.gene_ids.push_back(counts.gene_ids[static_cast<size_t>(j)]);

    // A filtered result may fall below the model's n >= 2 requirement; the
    // sampler setup re-validates when the data is actually used.
    SpatialCoords sc;
    sc.coords.resize(static_cast<Eigen::Index>(keep_spots.size()), 2);
    for (size_t a = 0; a < keep_spots.size(); ++a) {
        sc.coords.row(static_cast<Eigen::Index>(a)) = coords.coords.row(keep_spots[a]);
        sc.spot_ids.push_back(coords.spot_ids[static_cast<size_t>(keep_spots[a])]);
    }
    return {std::move(fc), std::move(sc)};
}

/// Size factors proportional to spot totals, scaled by the geometric mean of
/// the totals so the product is exactly one.
inline SizeFactors compute_size_factors(const CountMatrix& counts) {
    const Eigen::Index n = counts.n_spots();
    Eigen::VectorXd totals(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const long long t = counts.values.row(i).cast<long long>().sum();
        if (t <= 0)
            throw validation_error("spot '" + counts.spot_ids[static_cast<size_t>(i)] +
                                   "' has zero total count; filter spots first");
        totals[i] = static_cast<double>(t);
    }
    const double mean_log = totals.array().log().mean();
    SizeFactors sf;
    sf.s = (totals.array().log() - mean_log).exp();
    sf.validate();
    return sf;
}

} // namespace boostgp
