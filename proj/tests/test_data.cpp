#include <catch2/catch_amalgamated.hpp>

#include "boostgp/data.hpp"
#include "boostgp/rng.hpp"

#include <zlib.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

using namespace boostgp;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    const auto dir = fs::temp_directory_path() / "boostgp_data_tests";
    fs::create_directories(dir);
    return dir;
}

std::string write_text(const std::string& name, const std::string& content) {
    const auto path = (temp_dir() / name).string();
    std::ofstream f(path, std::ios::binary);
    f << content;
    return path;
}

std::string write_gz(const std::string& name, const std::string& content) {
    const auto path = (temp_dir() / name).string();
    gzFile f = gzopen(path.c_str(), "wb");
    REQUIRE(f != nullptr);
    gzwrite(f, content.data(), static_cast<unsigned>(content.size()));
    gzclose(f);
    return path;
}

} // namespace

TEST_CASE("load_counts parses a zero matrix") {
    const auto path = write_text("zeros.tsv", "id\tg1\tg2\ns1\t0\t0\ns2\t0\t0\ns3\t0\t0\n");
    const CountMatrix m = load_counts(path);
    CHECK(m.n_spots() == 3);
    CHECK(m.n_genes() == 2);
    CHECK(m.values.isZero());
    CHECK(m.gene_ids == std::vector<std::string>{"g1", "g2"});
}

TEST_CASE("load_counts rejects negative and non-integer cells") {
    const auto neg = write_text("neg.tsv", "id\tg1\ns1\t3\ns2\t-1\n");
    CHECK_THROWS_MATCHES(load_counts(neg), validation_error,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("row 2") &&
                             Catch::Matchers::ContainsSubstring("column 2")));
    const auto frac = write_text("frac.tsv", "id\tg1\ns1\t3\ns2\t2.5\n");
    CHECK_THROWS_AS(load_counts(frac), validation_error);
}

TEST_CASE("load_counts rejects duplicate identifiers") {
    const auto dup_gene = write_text("dupg.tsv", "id\tg1\tg1\ns1\t1\t2\ns2\t3\t4\n");
    CHECK_THROWS_AS(load_counts(dup_gene), validation_error);
    const auto dup_spot = write_text("dups.tsv", "id\tg1\ns1\t1\ns1\t2\n");
    CHECK_THROWS_AS(load_counts(dup_spot), validation_error);
}

TEST_CASE("load_counts missing file is an io error") {
    CHECK_THROWS_AS(load_counts("/nonexistent/file.tsv"), io_error);
}

TEST_CASE("count save/load round-trip preserves a random matrix") {
    CounterRng rng(11, StreamDomain::test, 0, 1);
    CountMatrix m;
    m.values.resize(10, 10);
    for (Eigen::Index i = 0; i < 10; ++i) {
        m.spot_ids.push_back("s" + std::to_string(i));
        m.gene_ids.push_back("g" + std::to_string(i));
        for (Eigen::Index j = 0; j < 10; ++j)
            m.values(i, j) = static_cast<int>(rng.uniform_int(1000));
    }
    const auto path = (temp_dir() / "rt.tsv").string();
    save_counts(m, path);
    const CountMatrix back = load_counts(path);
    CHECK(back.values == m.values);
    CHECK(back.spot_ids == m.spot_ids);
    CHECK(back.gene_ids == m.gene_ids);
}

TEST_CASE("genes-in-rows orientation transposes to spots-as-rows") {
    const auto path = write_text("rows.tsv", "gene\ts1\ts2\ts3\ng1\t1\t2\t3\ng2\t4\t5\t6\n");
    const CountMatrix m = load_counts(path, Orientation::genes_in_rows);
    CHECK(m.n_spots() == 3);
    CHECK(m.n_genes() == 2);
    CHECK(m.values(0, 0) == 1);
    CHECK(m.values(2, 1) == 6);
    CHECK(m.spot_ids == std::vector<std::string>{"s1", "s2", "s3"});
}

TEST_CASE("gzip-compressed input loads transparently") {
    const auto path = write_gz("counts.tsv.gz", "id\tg1\ns1\t7\ns2\t9\n");
    const CountMatrix m = load_counts(path);
    CHECK(m.values(0, 0) == 7);
    CHECK(m.values(1, 0) == 9);
}

TEST_CASE("comma-delimited files are detected") {
    const auto path = write_text("c.csv", "id,g1,g2\ns1,1,2\ns2,3,4\n");
    const CountMatrix m = load_counts(path);
    CHECK(m.values(1, 1) == 4);
}

TEST_CASE("load_coords reads unit-square corners") {
    const auto path = write_text("sq.tsv", "id\tx\ty\na\t0\t0\nb\t0\t1\nc\t1\t0\nd\t1\t1\n");
    const SpatialCoords c = load_coords(path);
    Eigen::MatrixX2d expect(4, 2);
    expect << 0, 0, 0, 1, 1, 0, 1, 1;
    CHECK(c.coords == expect);
}

TEST_CASE("coordinate alignment follows the count matrix order") {
    const auto cpath = write_text("ac.tsv", "id\tg1\ns1\t1\ns2\t2\ns3\t3\n");
    const CountMatrix counts = load_counts(cpath);
    const auto shuffled = write_text("shuf.tsv", "id\tx\ty\ns3\t3\t30\ns1\t1\t10\ns2\t2\t20\n");
    const SpatialCoords aligned = align_coords(load_coords(shuffled), counts);
    CHECK(aligned.coords(0, 0) == 1.0);
    CHECK(aligned.coords(1, 0) == 2.0);
    CHECK(aligned.coords(2, 1) == 30.0);
}

TEST_CASE("alignment reports missing spots") {
    const auto cpath = write_text("am.tsv", "id\tg1\ns1\t1\nsX\t2\n");
    const CountMatrix counts = load_counts(cpath);
    const auto coords = write_text("amc.tsv", "id\tx\ty\ns1\t0\t0\ns2\t1\t1\n");
    CHECK_THROWS_MATCHES(align_coords(load_coords(coords), counts), validation_error,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("sX")));
}

TEST_CASE("NaN coordinates are rejected") {
    const auto path = write_text("nan.tsv", "id\tx\ty\na\t0\t0\nb\tNaN\t1\n");
    CHECK_THROWS_AS(load_coords(path), validation_error);
}

namespace {
CountMatrix make_counts(const Eigen::MatrixXi& v) {
    CountMatrix m;
    m.values = v;
    for (Eigen::Index i = 0; i < v.rows(); ++i) m.spot_ids.push_back("s" + std::to_string(i));
    for (Eigen::Index j = 0; j < v.cols(); ++j) m.gene_ids.push_back("g" + std::to_string(j));
    return m;
}

SpatialCoords make_grid_coords(Eigen::Index n) {
    SpatialCoords c;
    c.coords.resize(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
        c.coords(i, 0) = static_cast<double>(i % 7);
        c.coords(i, 1) = static_cast<double>(i / 7);
        c.spot_ids.push_back("s" + std::to_string(i));
    }
    return c;
}
} // namespace

TEST_CASE("filter keeps dense data unchanged") {
    Eigen::MatrixXi v(3, 2);
    v << 5, 6, 7, 8, 9, 10;
    const auto [fc, sc] = filter(make_counts(v), make_grid_coords(3), 10, 0.10);
    CHECK(fc.values == v);
    CHECK(sc.coords.rows() == 3);
}

TEST_CASE("filter drops low-count spots") {
    Eigen::MatrixXi v(2, 2);
    v << 4, 5, 20, 30; // totals 9 and 50
    const auto [fc, sc] = filter(make_counts(v), make_grid_coords(2), 10, 0.0);
    CHECK(fc.n_spots() == 1);
    CHECK(fc.spot_ids == std::vector<std::string>{"s1"});
    CHECK(fc.values(0, 0) == 20);
    CHECK(sc.coords(0, 0) == 1.0);
}

TEST_CASE("filter removes sparse genes using remaining spots") {
    Eigen::MatrixXi v(4, 2);
    v << 10, 0, 10, 0, 10, 0, 10, 1;
    const auto [fc, sc] = filter(make_counts(v), make_grid_coords(4), 10, 0.5);
    CHECK(fc.n_genes() == 1);
    CHECK(fc.gene_ids == std::vector<std::string>{"g0"});
}

TEST_CASE("filter is idempotent") {
    CounterRng rng(13, StreamDomain::test, 0, 2);
    Eigen::MatrixXi v(20, 15);
    for (Eigen::Index i = 0; i < v.rows(); ++i)
        for (Eigen::Index j = 0; j < v.cols(); ++j)
            v(i, j) = rng.bernoulli(0.4) ? static_cast<int>(rng.uniform_int(8)) : 0;
    const auto once = filter(make_counts(v), make_grid_coords(20), 10, 0.10);
    const auto twice = filter(once.first, once.second, 10, 0.10);
    CHECK(twice.first.values == once.first.values);
    CHECK(twice.first.gene_ids == once.first.gene_ids);
    CHECK(twice.second.coords == once.second.coords);
}

TEST_CASE("filter errors when everything is removed") {
    Eigen::MatrixXi v(2, 2);
    v << 1, 1, 2, 2;
    CHECK_THROWS_AS(filter(make_counts(v), make_grid_coords(2), 100, 0.1), validation_error);
    Eigen::MatrixXi z(2, 2);
    z << 10, 0, 0, 10; // every gene present in only half the spots
    CHECK_THROWS_AS(filter(make_counts(z), make_grid_coords(2), 10, 0.9), validation_error);
}

TEST_CASE("size factors: equal totals give all ones") {
    Eigen::MatrixXi v(3, 2);
    v << 2, 3, 3, 2, 1, 4;
    const SizeFactors s = compute_size_factors(make_counts(v));
    CHECK(s.s.isApproxToConstant(1.0, 1e-12));
}

TEST_CASE("size factors from totals 1 and 4") {
    Eigen::MatrixXi v(2, 1);
    v << 1, 4; // geometric mean of totals is 2
    const SizeFactors s = compute_size_factors(make_counts(v));
    CHECK_THAT(s.s[0], Catch::Matchers::WithinAbs(0.5, 1e-12));
    CHECK_THAT(s.s[1], Catch::Matchers::WithinAbs(2.0, 1e-12));
}

TEST_CASE("size factor product is one for random matrices") {
    CounterRng rng(17, StreamDomain::test, 0, 3);
    for (int rep = 0; rep < 100; ++rep) {
        const Eigen::Index n = 2 + static_cast<Eigen::Index>(rng.uniform_int(30));
        const Eigen::Index p = 1 + static_cast<Eigen::Index>(rng.uniform_int(20));
        Eigen::MatrixXi v(n, p);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < p; ++j) v(i, j) = static_cast<int>(rng.uniform_int(50));
        for (Eigen::Index i = 0; i < n; ++i)
            if (v.row(i).sum() == 0) v(i, 0) = 1;
        const SizeFactors s = compute_size_factors(make_counts(v));
        double log_prod = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            REQUIRE(s.s[i] > 0.0);
            log_prod += std::log(s.s[i]);
        }
        REQUIRE(std::abs(log_prod) < 1e-10);
    }
}

TEST_CASE("size factors demand positive spot totals") {
    Eigen::MatrixXi v(2, 2);
    v << 0, 0, 3, 4;
    CHECK_THROWS_MATCHES(compute_size_factors(make_counts(v)), validation_error,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("filter")));
}

TEST_CASE("unit size factors option") {
    const SizeFactors s = SizeFactors::ones(5);
    CHECK(s.s.size() == 5);
    CHECK(s.s.isApproxToConstant(1.0));
}

TEST_CASE("design matrix loading prepends the intercept and checks rank") {
    const auto cpath = write_text("dc.tsv", "id\tg1\ns1\t1\ns2\t2\ns3\t3\n");
    const CountMatrix counts = load_counts(cpath);
    const auto good = write_text("dg.tsv", "id\tcov\ns2\t5\ns1\t4\ns3\t6\n");
    const DesignMatrix d = load_design(good, counts);
    CHECK(d.n_covariates() == 2);
    CHECK(d.X.col(0).isApproxToConstant(1.0));
    CHECK(d.X(0, 1) == 4.0); // aligned to counts order
    CHECK(d.X(1, 1) == 5.0);

    const auto collinear = write_text("dbad.tsv", "id\tcov\ns1\t1\ns2\t1\ns3\t1\n");
    CHECK_THROWS_AS(load_design(collinear, counts), validation_error);
}
