#include <catch2/catch_amalgamated.hpp>

#include "boostgp/chain.hpp"
#include "boostgp/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace boostgp;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "boostgp_cli_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

int run_cli(std::vector<std::string> args) { return cli_main(args); }

/// Small but non-trivial dataset for pipeline smoke tests.
void make_small_dataset(const fs::path& dir) {
    REQUIRE(run_cli({"simulate", "--pattern", "linear", "--genes", "8", "--n-sv", "2",
                     "--seed", "21", "--out", dir.string()}) == kExitOk);
}

} // namespace

TEST_CASE("simulate writes the benchmark-shaped files deterministically") {
    const auto d1 = fresh_dir("sim1");
    REQUIRE(run_cli({"simulate", "--pattern", "spot", "--seed", "4", "--out", d1.string()}) ==
            kExitOk);
    const CountMatrix counts = load_counts((d1 / "counts.tsv").string());
    CHECK(counts.n_spots() == 256);
    CHECK(counts.n_genes() == 100);
    const SpatialCoords coords = load_coords((d1 / "coords.tsv").string());
    CHECK(coords.n_spots() == 256);
    CHECK(fs::exists(d1 / "truth.tsv"));

    const auto d2 = fresh_dir("sim2");
    REQUIRE(run_cli({"simulate", "--pattern", "spot", "--seed", "4", "--out", d2.string()}) ==
            kExitOk);
    CHECK(slurp(d1 / "counts.tsv") == slurp(d2 / "counts.tsv"));
    CHECK(slurp(d1 / "coords.tsv") == slurp(d2 / "coords.tsv"));
    CHECK(slurp(d1 / "truth.tsv") == slurp(d2 / "truth.tsv"));

    const auto d3 = fresh_dir("sim3");
    REQUIRE(run_cli({"simulate", "--pattern", "spot", "--seed", "5", "--out", d3.string()}) ==
            kExitOk);
    CHECK(slurp(d1 / "counts.tsv") != slurp(d3 / "counts.tsv"));
}

TEST_CASE("simulate honors the zero-inflation flag") {
    const auto plain = fresh_dir("simz0");
    const auto inflated = fresh_dir("simz30");
    REQUIRE(run_cli({"simulate", "--seed", "8", "--out", plain.string()}) == kExitOk);
    REQUIRE(run_cli({"simulate", "--seed", "8", "--false-zero", "0.30",
                     "--out", inflated.string()}) == kExitOk);
    const auto c0 = load_counts((plain / "counts.tsv").string());
    const auto c30 = load_counts((inflated / "counts.tsv").string());
    CHECK((c30.values.array() == 0).count() > (c0.values.array() == 0).count());
}

TEST_CASE("run pipeline completes, reports, and reproduces from its manifest") {
    const auto data = fresh_dir("pipe_data");
    make_small_dataset(data);

    const auto out1 = fresh_dir("pipe_out1");
    REQUIRE(run_cli({"run", "--counts", (data / "counts.tsv").string(), "--coords",
                     (data / "coords.tsv").string(), "--iters", "60", "--burn-in", "0.5",
                     "--chains", "2", "--seed", "31", "--threads", "2",
                     "--out", out1.string()}) == kExitOk);
    CHECK(fs::exists(out1 / "results.tsv"));
    CHECK(fs::exists(out1 / "manifest.txt"));
    CHECK(fs::exists(out1 / "chain_0.trace.tsv"));
    CHECK(fs::exists(out1 / "chain_1.trace.tsv"));

    // results have one row per retained gene
    std::ifstream f(out1 / "results.tsv");
    std::string line;
    int rows = -1;
    while (std::getline(f, line)) ++rows;
    CHECK(rows == 8);

    // replay from the manifest into a second directory; only 'out' differs
    const auto out2 = fresh_dir("pipe_out2");
    REQUIRE(run_cli({"run", "--config", (out1 / "manifest.txt").string(), "--out",
                     out2.string()}) == kExitOk);
    CHECK(slurp(out1 / "results.tsv") == slurp(out2 / "results.tsv"));
    CHECK(slurp(out1 / "chain_0.trace.tsv") == slurp(out2 / "chain_0.trace.tsv"));
}

TEST_CASE("run maps failures to the documented exit codes") {
    const auto data = fresh_dir("codes_data");
    make_small_dataset(data);

    // missing coordinate file -> io
    CHECK(run_cli({"run", "--counts", (data / "counts.tsv").string(), "--coords",
                   (data / "missing.tsv").string(), "--out",
                   fresh_dir("codes_o1").string()}) == kExitIo);
    // unknown flag -> validation
    CHECK(run_cli({"run", "--nonsense-flag", "1"}) == kExitValidation);
    // bad numeric range -> validation
    CHECK(run_cli({"run", "--counts", (data / "counts.tsv").string(), "--coords",
                   (data / "coords.tsv").string(), "--burn-in", "1.5", "--out",
                   fresh_dir("codes_o2").string()}) == kExitValidation);
    // missing required input -> validation
    CHECK(run_cli({"run", "--out", fresh_dir("codes_o3").string()}) == kExitValidation);
}

TEST_CASE("unit size factor flag is honored end to end") {
    const auto data = fresh_dir("sf_data");
    make_small_dataset(data);
    const auto out = fresh_dir("sf_out");
    REQUIRE(run_cli({"run", "--counts", (data / "counts.tsv").string(), "--coords",
                     (data / "coords.tsv").string(), "--iters", "30", "--chains", "1",
                     "--seed", "3", "--set-size-factors-one", "--out", out.string()}) == kExitOk);
    const auto kv = climod::read_manifest((out / "manifest.txt").string());
    CHECK(kv.at("set-size-factors-one") == "true");
}

TEST_CASE("diagnose consumes a finished run and validates inputs") {
    const auto data = fresh_dir("diag_data");
    make_small_dataset(data);
    const auto out = fresh_dir("diag_out");
    REQUIRE(run_cli({"run", "--counts", (data / "counts.tsv").string(), "--coords",
                     (data / "coords.tsv").string(), "--iters", "40", "--chains", "2",
                     "--seed", "17", "--out", out.string()}) == kExitOk);

    REQUIRE(run_cli({"diagnose", "--out", out.string()}) == kExitOk);
    CHECK(fs::exists(out / "morans_i.tsv"));
    CHECK(fs::exists(out / "chain_health.tsv"));
    std::ifstream f(out / "morans_i.tsv");
    std::string line;
    int rows = -1;
    while (std::getline(f, line)) ++rows;
    CHECK(rows == 8); // one per retained gene

    // raw-input variant also works
    REQUIRE(run_cli({"diagnose", "--out", out.string(), "--moran-input", "raw",
                     "--weights", "knn", "--knn-k", "4"}) == kExitOk);

    // no traces -> validation error
    CHECK(run_cli({"diagnose", "--out", fresh_dir("diag_empty").string()}) == kExitValidation);

    // version-mismatched trace file -> validation error
    const auto bad = fresh_dir("diag_bad");
    fs::copy(out / "manifest.txt", bad / "manifest.txt");
    std::ofstream g(bad / "chain_0.trace.tsv");
    g << "#boostgp-trace v999\n";
    g.close();
    CHECK(run_cli({"diagnose", "--out", bad.string()}) == kExitValidation);
}

TEST_CASE("trace files round-trip through the text format") {
    const auto data = fresh_dir("trace_data");
    make_small_dataset(data);
    const auto out = fresh_dir("trace_out");
    REQUIRE(run_cli({"run", "--counts", (data / "counts.tsv").string(), "--coords",
                     (data / "coords.tsv").string(), "--iters", "30", "--chains", "1",
                     "--seed", "29", "--out", out.string()}) == kExitOk);
    const ChainTrace t = load_trace((out / "chain_0.trace.tsv").string());
    CHECK(t.n_iter == 30);
    CHECK(t.p == 8);
    CHECK(t.gene_ids.size() == 8);
    CHECK(t.acceptance.phi_proposed == 30ull * 8);
    const auto copy = fs::temp_directory_path() / "boostgp_cli_tests" / "trace_copy.tsv";
    save_trace(t, copy.string());
    CHECK(slurp(out / "chain_0.trace.tsv") == slurp(copy));
}

TEST_CASE("version flag prints and exits cleanly") {
    CHECK(run_cli({"--version"}) == kExitOk);
}
