#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "kpca_attn/attention.hpp"
#include "kpca_attn/csv.hpp"
#include "kpca_attn/mat.hpp"
#include "kpca_attn/rng.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace kpca_attn;

namespace {

std::string cli_path() {
    const char* env = std::getenv("KPCA_ATTN_CLI");
    REQUIRE(env != nullptr);
    return env;
}

struct RunResult {
    int exit_code;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

RunResult run_cli(const fs::path& dir, const std::string& args,
                  const std::string& env_prefix = "") {
    fs::create_directories(dir);
    fs::path out = dir / "stdout.txt";
    fs::path err = dir / "stderr.txt";
    std::string cmd = "cd '" + dir.string() + "' && " + env_prefix + "'" + cli_path() +
                      "' " + args + " > stdout.txt 2> stderr.txt";
    int rc = std::system(cmd.c_str());
    int code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    return RunResult{code, slurp(out), slurp(err)};
}

fs::path fresh_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / "kpca_attn_cli_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

json load_json(const fs::path& p) {
    std::ifstream in(p);
    REQUIRE(in.good());
    json j;
    in >> j;
    return j;
}

}  // namespace

TEST_CASE("pcp on a zero matrix converges in one iteration") {
    fs::path dir = fresh_dir("pcp_zero");
    write_matrix_csv((dir / "zero.csv").string(), Mat::zeros(4, 4));
    RunResult r = run_cli(dir, "pcp --input zero.csv --output out");
    REQUIRE(r.exit_code == 0);
    json summary = load_json(dir / "out" / "summary.json");
    REQUIRE(summary["iterations"] == 1);
    REQUIRE(summary["converged"] == true);
    REQUIRE(summary["version"] == "0.1.0");
    REQUIRE(summary.contains("config_hash"));
}

TEST_CASE("pcp rejects malformed input naming the location") {
    fs::path dir = fresh_dir("pcp_bad");
    std::ofstream(dir / "bad.csv") << "not a header\n1,2\n";
    RunResult r = run_cli(dir, "pcp --input bad.csv --output out");
    REQUIRE(r.exit_code == 1);
    REQUIRE(r.err.find("bad.csv:1") != std::string::npos);
}

TEST_CASE("pcp synthetic run recovers the planted decomposition") {
    fs::path dir = fresh_dir("pcp_synth");
    RunResult r = run_cli(dir, "pcp --synth rank=2,rho=0.05 --seed 3 --output out");
    REQUIRE(r.exit_code == 0);
    json summary = load_json(dir / "out" / "summary.json");
    REQUIRE(summary["converged"] == true);
    // 125 spikes of magnitude 10
    double s_l1 = summary["s_l1"];
    REQUIRE(std::abs(s_l1 - 1250.0) < 5.0);
    Mat l = read_matrix_csv((dir / "out" / "L.csv").string());
    REQUIRE(l.rows() == 50);
    REQUIRE(l.cols() == 50);
}

TEST_CASE("pcp exits 2 when the iteration cap preempts the tolerance") {
    fs::path dir = fresh_dir("pcp_cap");
    RunResult r = run_cli(dir, "pcp --synth rank=2,rho=0.05 --seed 3 --max-iter 1 --output out");
    REQUIRE(r.exit_code == 2);
    json summary = load_json(dir / "out" / "summary.json");
    REQUIRE(summary["converged"] == false);
}

TEST_CASE("pcp rejects contradictory inputs") {
    fs::path dir = fresh_dir("pcp_contradict");
    write_matrix_csv((dir / "m.csv").string(), Mat::zeros(2, 2));
    RunResult r = run_cli(dir, "pcp --input m.csv --synth rank=1,rho=0 --output out");
    REQUIRE(r.exit_code == 1);
    RunResult none = run_cli(dir, "pcp --output out");
    REQUIRE(none.exit_code == 1);
    RunResult badkey = run_cli(dir, "pcp --synth rank=1,bogus=2 --output out");
    REQUIRE(badkey.exit_code == 1);
    REQUIRE(badkey.err.find("bogus") != std::string::npos);
}

TEST_CASE("rpc-attn degenerates to symmetric attention under huge lambda") {
    fs::path dir = fresh_dir("rpc_degenerate");
    SplitMix64 rng(99);
    Mat k = test_util::random_mat(rng, 6, 3);
    write_matrix_csv((dir / "K.csv").string(), k);
    RunResult r = run_cli(dir, "rpc-attn --keys K.csv --lambda 1e9 --iters 1 --output out");
    REQUIRE(r.exit_code == 0);
    Mat h = read_matrix_csv((dir / "out" / "H.csv").string());
    Mat expect = attn::symmetric_attention(k, k, attn::default_scale(3)).h;
    REQUIRE(max_abs_diff(h, expect) == 0.0);
}

TEST_CASE("rpc-attn echoes the resolved auto mu") {
    fs::path dir = fresh_dir("rpc_mu");
    SplitMix64 rng(100);
    Mat k = test_util::random_mat(rng, 5, 4);
    write_matrix_csv((dir / "K.csv").string(), k);
    RunResult r = run_cli(dir, "rpc-attn --keys K.csv --mu auto --iters 2 --output out");
    REQUIRE(r.exit_code == 0);
    json summary = load_json(dir / "out" / "summary.json");
    double expected_mu = 20.0 / (4.0 * entrywise_l1(k));
    REQUIRE(summary["resolved_mu"] == expected_mu);
    REQUIRE(summary["config"]["mu"] == "auto");
    // trace carries one row per iteration
    std::string trace = slurp(dir / "out" / "trace.csv");
    REQUIRE(std::count(trace.begin(), trace.end(), '\n') == 4);  // comment + header + 2
}

TEST_CASE("rpc-attn asymmetric variant consumes queries") {
    fs::path dir = fresh_dir("rpc_asym");
    SplitMix64 rng(101);
    Mat k = test_util::random_mat(rng, 5, 3);
    Mat q = test_util::random_mat(rng, 5, 3);
    write_matrix_csv((dir / "K.csv").string(), k);
    write_matrix_csv((dir / "Q.csv").string(), q);
    RunResult r = run_cli(dir,
                          "rpc-attn --keys K.csv --queries Q.csv --variant asym "
                          "--lambda 1e9 --iters 1 --output out");
    REQUIRE(r.exit_code == 0);
    Mat h = read_matrix_csv((dir / "out" / "H.csv").string());
    Mat expect =
        attn::softmax_attention(attn::AttentionBatch(q, k, k, attn::default_scale(3))).h;
    REQUIRE(max_abs_diff(h, expect) == 0.0);

    RunResult mismatch = run_cli(dir, "rpc-attn --keys K.csv --queries Q.csv --output out2");
    REQUIRE(mismatch.exit_code == 1);
    write_matrix_csv((dir / "Qbad.csv").string(), test_util::random_mat(rng, 3, 3));
    RunResult bad = run_cli(dir,
                            "rpc-attn --keys K.csv --queries Qbad.csv --variant asym "
                            "--output out3");
    REQUIRE(bad.exit_code == 1);
}

TEST_CASE("verify passes on an exact instance and fails the negative control") {
    fs::path dir = fresh_dir("verify_modes");
    RunResult good = run_cli(dir, "verify --seed 5 --output good");
    REQUIRE(good.exit_code == 0);
    json report = load_json(dir / "good" / "report.json");
    REQUIRE(report["pass"] == true);
    REQUIRE(report["gamma"]["per_component"].size() >= 1);
    for (const auto& c : report["gamma"]["per_component"])
        REQUIRE(c["mean_diff"].get<double>() <= 1e-8);

    RunResult bad = run_cli(dir, "verify --seed 5 --random-v --output bad");
    REQUIRE(bad.exit_code == 3);
    json bad_report = load_json(dir / "bad" / "report.json");
    REQUIRE(bad_report["pass"] == false);
    double worst = 0.0;
    for (const auto& c : bad_report["gamma"]["per_component"])
        if (!c["flagged"].get<bool>())
            worst = std::max(worst, c["mean_diff"].get<double>());
    REQUIRE(worst >= 1e-2);
}

TEST_CASE("verify --grad-only emits a single scalar") {
    fs::path dir = fresh_dir("verify_grad");
    RunResult r = run_cli(dir, "verify --grad-only --seed 9");
    REQUIRE(r.exit_code == 0);
    double value = std::stod(r.out);
    REQUIRE(value <= 1e-5);
    REQUIRE(value >= 0.0);
}

TEST_CASE("verify matrix mode runs gamma diagnostics on supplied files") {
    fs::path dir = fresh_dir("verify_files");
    // build an exact instance through the CLI-facing CSV interface
    SplitMix64 rng(55);
    Mat keys = test_util::random_mat(rng, 6, 3);
    kpca::KernelSpec spec = kpca::KernelSpec::scaled_exp_dot_for_dim(3);
    kpca::GramBundle bundle = kpca::gram(keys, spec);
    kpca::EigenBasis basis = kpca::solve_coefficients(bundle, 2);
    Mat values = kpca::build_values(basis, bundle);
    write_matrix_csv((dir / "K.csv").string(), keys);
    write_matrix_csv((dir / "V.csv").string(), values);
    RunResult r = run_cli(dir, "verify --keys K.csv --values V.csv --output out");
    REQUIRE(r.exit_code == 0);
    json report = load_json(dir / "out" / "report.json");
    REQUIRE(report["pass"] == true);
}

TEST_CASE("bench output is byte-identical across runs and thread counts") {
    fs::path dir = fresh_dir("bench_determinism");
    std::string args = "bench --trials 5 --seed 7 --rows 12 --cols 6 --output ";
    REQUIRE(run_cli(dir, args + "a", "KPCA_ATTN_THREADS=1 ").exit_code == 0);
    REQUIRE(run_cli(dir, args + "b", "KPCA_ATTN_THREADS=1 ").exit_code == 0);
    REQUIRE(run_cli(dir, args + "c", "KPCA_ATTN_THREADS=3 ").exit_code == 0);
    for (const char* file : {"report.json", "report.csv", "hist.csv"}) {
        std::string a = slurp(dir / "a" / file);
        REQUIRE(!a.empty());
        REQUIRE(a == slurp(dir / "b" / file));
        REQUIRE(a == slurp(dir / "c" / file));
    }
}

TEST_CASE("bench flags the rho = 0 regime") {
    fs::path dir = fresh_dir("bench_rho0");
    RunResult r = run_cli(dir, "bench --trials 3 --rho 0 --rows 8 --cols 4 --output out");
    REQUIRE(r.exit_code == 0);
    json report = load_json(dir / "out" / "report.json");
    REQUIRE(report["summary"]["flagged_trials"] == 3);
    REQUIRE(report.contains("note"));
    for (const auto& t : report["trials"])
        REQUIRE(t["flag"] == "zero_softmax_deviation");
}

TEST_CASE("config files merge under flags-win semantics") {
    fs::path dir = fresh_dir("config_merge");
    {
        std::ofstream cfg(dir / "cfg.json");
        cfg << R"({"lambda": 3.0, "iters": 5, "trials": 2, "rows": 8, "cols": 4, "output": "from_config"})";
    }
    RunResult config_only = run_cli(dir, "bench --config cfg.json");
    REQUIRE(config_only.exit_code == 0);
    json report = load_json(dir / "from_config" / "report.json");
    REQUIRE(report["config"]["lambda"] == 3.0);
    REQUIRE(report["config"]["iters"] == 5);
    REQUIRE(report["config"]["trials"] == 2);

    RunResult overridden = run_cli(dir, "bench --config cfg.json --lambda 4 --output flagwin");
    REQUIRE(overridden.exit_code == 0);
    json report2 = load_json(dir / "flagwin" / "report.json");
    REQUIRE(report2["config"]["lambda"] == 4.0);
    REQUIRE(report2["config"]["iters"] == 5);  // still from config
}

TEST_CASE("unknown config keys are rejected by name") {
    fs::path dir = fresh_dir("config_unknown");
    {
        std::ofstream cfg(dir / "cfg.json");
        cfg << R"({"trials": 2, "sparkle": 1})";
    }
    RunResult r = run_cli(dir, "bench --config cfg.json --output out");
    REQUIRE(r.exit_code == 1);
    REQUIRE(r.err.find("sparkle") != std::string::npos);
}

TEST_CASE("help text lists defaults for every command") {
    fs::path dir = fresh_dir("help");
    RunResult top = run_cli(dir, "--help");
    REQUIRE(top.exit_code == 0);
    for (const char* sub : {"pcp", "rpc-attn", "verify", "bench"})
        REQUIRE(top.out.find(sub) != std::string::npos);

    RunResult pcp = run_cli(dir, "pcp --help");
    REQUIRE(pcp.exit_code == 0);
    REQUIRE(pcp.out.find("1e-07") != std::string::npos);   // tol default
    REQUIRE(pcp.out.find("1000") != std::string::npos);    // max-iter default
    REQUIRE(pcp.out.find("classical") != std::string::npos);

    RunResult rpc = run_cli(dir, "rpc-attn --help");
    REQUIRE(rpc.exit_code == 0);
    REQUIRE(rpc.out.find("auto") != std::string::npos);

    RunResult verify = run_cli(dir, "verify --help");
    REQUIRE(verify.exit_code == 0);
    REQUIRE(verify.out.find("1e-06") != std::string::npos);  // entry floor default

    RunResult bench = run_cli(dir, "bench --help");
    REQUIRE(bench.exit_code == 0);
    REQUIRE(bench.out.find("KPCA_ATTN_THREADS") != std::string::npos);
}

TEST_CASE("every command is deterministic given config and seed") {
    fs::path dir = fresh_dir("cli_determinism");
    SplitMix64 rng(1);
    Mat k = test_util::random_mat(rng, 6, 3);
    write_matrix_csv((dir / "K.csv").string(), k);

    auto byte_compare = [&](const std::string& args, const std::string& sub,
                            std::initializer_list<const char*> files) {
        REQUIRE(run_cli(dir, args + " --output " + sub + "1").exit_code >= 0);
        REQUIRE(run_cli(dir, args + " --output " + sub + "2").exit_code >= 0);
        for (const char* f : files) {
            std::string a = slurp(dir / (sub + "1") / f);
            REQUIRE(!a.empty());
            REQUIRE(a == slurp(dir / (sub + "2") / f));
        }
    };
    byte_compare("pcp --synth rank=1,rho=0.1,rows=10,cols=8 --seed 5", "p",
                 {"summary.json", "L.csv", "S.csv"});
    byte_compare("rpc-attn --keys K.csv --iters 3", "r",
                 {"summary.json", "H.csv", "trace.csv"});
    byte_compare("verify --seed 12", "v", {"report.json"});
}
