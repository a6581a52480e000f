// kpca-attn: command-line front end for the kernel-PCA attention library.
// Subcommands: pcp, rpc-attn, verify, bench. Every run is deterministic given
// (config, seed); summaries echo the fully-resolved config and its hash.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "kpca_attn/kpca_attn.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace kpca_attn;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 1;
constexpr int kExitNoConvergence = 2;
constexpr int kExitVerifyFailed = 3;

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string config_hash(const json& config) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a(config.dump())));
    return buf;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << text;
    if (!out)
        throw std::runtime_error("write failed on " + path.string());
}

void write_json(const fs::path& path, const json& j) {
    write_text(path, j.dump(2) + "\n");
}

json summary_skeleton(const std::string& command, const json& config) {
    return json{{"tool", "kpca-attn"},
                {"version", kVersion},
                {"command", command},
                {"config", config},
                {"config_hash", config_hash(config)}};
}

std::string provenance_comment(const json& config) {
    return "# kpca-attn " + std::string(kVersion) + " config " + config_hash(config) + "\n";
}

// "auto" or a positive number; 0 is reserved for auto in numeric form.
struct AutoOrValue {
    std::string raw = "auto";

    bool is_auto() const { return raw == "auto"; }
    double value() const {
        try {
            std::size_t pos = 0;
            double v = std::stod(raw, &pos);
            if (pos != raw.size()) throw std::invalid_argument(raw);
            return v;
        } catch (const std::exception&) {
            throw std::runtime_error("expected a number or 'auto', got '" + raw + "'");
        }
    }
};

// Applies a JSON config file under flags-win semantics: every key must name a
// registered option, and only options absent from the command line are set.
class ConfigBinder {
public:
    explicit ConfigBinder(CLI::App* cmd) : cmd_(cmd) {
        config_opt_ = cmd->add_option("--config", config_path_,
                                      "JSON config file; command-line flags win");
    }

    template <class T>
    CLI::Option* bind(CLI::Option* opt, T* target) {
        setters_[opt->get_lnames().front()] = [opt, target](const json& v) {
            if (opt->count() > 0) return;  // the flag wins
            *target = v.get<T>();
        };
        return opt;
    }

    CLI::Option* bind(CLI::Option* opt, AutoOrValue* target) {
        setters_[opt->get_lnames().front()] = [opt, target](const json& v) {
            if (opt->count() > 0) return;
            target->raw = v.is_string() ? v.get<std::string>() : v.dump();
        };
        return opt;
    }

    void apply() const {
        if (config_path_.empty()) return;
        std::ifstream in(config_path_);
        if (!in)
            throw std::runtime_error("cannot open config file " + config_path_);
        json config;
        try {
            in >> config;
        } catch (const json::exception& e) {
            throw std::runtime_error("config file " + config_path_ + ": " + e.what());
        }
        if (!config.is_object())
            throw std::runtime_error("config file " + config_path_ +
                                     ": top level must be an object");
        for (const auto& [key, value] : config.items()) {
            auto it = setters_.find(key);
            if (it == setters_.end())
                throw std::runtime_error("config file " + config_path_ +
                                         ": unknown key '" + key + "'");
            try {
                it->second(value);
            } catch (const json::exception&) {
                throw std::runtime_error("config file " + config_path_ + ": key '" + key +
                                         "' has the wrong type");
            }
        }
    }

private:
    CLI::App* cmd_;
    CLI::Option* config_opt_;
    std::string config_path_;
    std::map<std::string, std::function<void(const json&)>> setters_;
};

std::size_t env_thread_cap() {
    const char* env = std::getenv("KPCA_ATTN_THREADS");
    if (!env || !*env) return 0;
    char* end = nullptr;
    unsigned long v = std::strtoul(env, &end, 10);
    if (end == env || *end != '\0')
        throw std::runtime_error("KPCA_ATTN_THREADS must be a nonnegative integer, got '" +
                                 std::string(env) + "'");
    return static_cast<std::size_t>(v);
}

// --synth "rank=2,rho=0.05[,rows=50,cols=50,magnitude=10]"
bench::SynthSpec parse_synth_string(const std::string& text, std::uint64_t seed) {
    bench::SynthSpec spec;
    spec.seed = seed;
    std::string token;
    std::istringstream in(text);
    while (std::getline(in, token, ',')) {
        auto eq = token.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("--synth: expected key=value, got '" + token + "'");
        std::string key = token.substr(0, eq);
        std::string value = token.substr(eq + 1);
        try {
            if (key == "rows")
                spec.n_rows = std::stoul(value);
            else if (key == "cols")
                spec.n_cols = std::stoul(value);
            else if (key == "rank")
                spec.rank = std::stoul(value);
            else if (key == "rho")
                spec.rho = std::stod(value);
            else if (key == "magnitude")
                spec.spike_magnitude = std::stod(value);
            else
                throw std::runtime_error("--synth: unknown key '" + key + "'");
        } catch (const std::runtime_error&) {
            throw;
        } catch (const std::exception&) {
            throw std::runtime_error("--synth: cannot parse value '" + value + "' for '" +
                                     key + "'");
        }
    }
    spec.validate();
    return spec;
}

std::string pap_trace_csv(const std::vector<rpc::PapTraceEntry>& trace, const json& config) {
    std::ostringstream out;
    out << provenance_comment(config);
    out << "iteration,rel_residual,s_l1,nuclear_l\n";
    for (const auto& e : trace)
        out << e.iteration << "," << format_double(e.rel_residual) << ","
            << format_double(e.s_l1) << "," << format_double(e.l_nuclear) << "\n";
    return out.str();
}

// ---------------------------------------------------------------------------
// pcp

struct PcpArgs {
    std::string input;
    std::string synth;
    AutoOrValue lambda;
    AutoOrValue mu;
    double tol = rpc::kDefaultPcpTol;
    std::size_t max_iter = rpc::kDefaultPcpMaxIter;
    std::string svt_rule = "classical";
    std::uint64_t seed = 0;
    std::string output = "pcp_out";
};

int run_pcp(const PcpArgs& args) {
    Mat m = [&] {
        if (!args.input.empty() && !args.synth.empty())
            throw std::runtime_error("--input and --synth are mutually exclusive");
        if (!args.input.empty()) return read_matrix_csv(args.input);
        if (!args.synth.empty())
            return bench::synth_lowrank_sparse(parse_synth_string(args.synth, args.seed)).m;
        throw std::runtime_error("pcp needs --input FILE or --synth SPEC");
    }();

    double lambda = args.lambda.is_auto() ? rpc::default_pcp_lambda(m.rows(), m.cols())
                                          : args.lambda.value();
    // a zero matrix has no l1 scale; any positive mu gives the exact L = S = 0
    double mu = args.mu.is_auto()
                    ? (entrywise_l1(m) > 0.0 ? rpc::default_mu(m) : 1.0)
                    : args.mu.value();
    rpc::LStepRule rule;
    if (args.svt_rule == "classical")
        rule = rpc::LStepRule::Classical;
    else if (args.svt_rule == "mu-threshold")
        rule = rpc::LStepRule::MuThreshold;
    else
        throw std::runtime_error("--svt-rule must be 'classical' or 'mu-threshold'");

    rpc::PcpState state = admm_pcp(m, lambda, mu, args.tol, args.max_iter, rule);
    bool converged = state.rel_residual <= args.tol;

    json config = {{"input", args.input},   {"synth", args.synth},
                   {"lambda", lambda},      {"mu", mu},
                   {"tol", args.tol},       {"max-iter", args.max_iter},
                   {"svt-rule", args.svt_rule}, {"seed", args.seed},
                   {"rows", m.rows()},      {"cols", m.cols()}};
    fs::create_directories(args.output);
    write_matrix_csv((fs::path(args.output) / "L.csv").string(), state.l);
    write_matrix_csv((fs::path(args.output) / "S.csv").string(), state.s);

    json summary = summary_skeleton("pcp", config);
    summary["iterations"] = state.iterations;
    summary["rel_residual"] = state.rel_residual;
    summary["nuclear_l"] = nuclear_norm(state.l);
    summary["s_l1"] = entrywise_l1(state.s);
    summary["converged"] = converged;
    summary["files"] = {{"l", "L.csv"}, {"s", "S.csv"}};
    write_json(fs::path(args.output) / "summary.json", summary);

    std::cout << "pcp: " << state.iterations << " iterations, rel_residual "
              << format_double(state.rel_residual) << (converged ? "" : " (not converged)")
              << "\n";
    return converged ? kExitOk : kExitNoConvergence;
}

// ---------------------------------------------------------------------------
// rpc-attn

struct RpcAttnArgs {
    std::string keys;
    std::string queries;
    std::string variant = "sym";
    double lambda = rpc::kDefaultPapLambda;
    std::size_t iters = 4;
    AutoOrValue mu;
    AutoOrValue scale;
    std::string output = "rpc_attn_out";
};

int run_rpc_attn(const RpcAttnArgs& args) {
    if (args.keys.empty())
        throw std::runtime_error("rpc-attn needs --keys FILE");
    Mat k = read_matrix_csv(args.keys);

    rpc::PapConfig config;
    config.n_iter = args.iters;
    config.lambda = args.lambda;
    if (!args.mu.is_auto()) config.mu = args.mu.value();
    config.scale = args.scale.is_auto() ? attn::default_scale(k.cols()) : args.scale.value();

    std::optional<Mat> queries;
    if (args.variant == "asym") {
        config.variant = rpc::PapVariant::Asymmetric;
        if (args.queries.empty())
            throw std::runtime_error("--variant asym needs --queries FILE");
        queries = read_matrix_csv(args.queries);
    } else if (args.variant == "sym") {
        if (!args.queries.empty())
            throw std::runtime_error("--queries only applies to --variant asym");
    } else {
        throw std::runtime_error("--variant must be 'sym' or 'asym'");
    }

    double resolved_mu = config.mu ? *config.mu
                                   : (entrywise_l1(k) > 0.0 ? rpc::default_mu(k) : 0.0);
    rpc::PapResult result = rpc::pap(k, config, queries);

    json echoed = {{"keys", args.keys},       {"queries", args.queries},
                   {"variant", args.variant}, {"lambda", args.lambda},
                   {"iters", args.iters},     {"mu", args.mu.raw},
                   {"scale", config.scale},
                   {"rows", k.rows()},        {"cols", k.cols()}};
    fs::create_directories(args.output);
    write_matrix_csv((fs::path(args.output) / "H.csv").string(), result.l);
    write_text(fs::path(args.output) / "trace.csv", pap_trace_csv(result.trace, echoed));

    json summary = summary_skeleton("rpc-attn", echoed);
    summary["resolved_mu"] = resolved_mu;
    summary["resolved_scale"] = config.scale;
    summary["trace_entries"] = result.trace.size();
    if (!result.trace.empty())
        summary["final_rel_residual"] = result.trace.back().rel_residual;
    summary["files"] = {{"h", "H.csv"}, {"trace", "trace.csv"}};
    write_json(fs::path(args.output) / "summary.json", summary);

    std::cout << "rpc-attn: " << result.trace.size() << " iterations, mu "
              << format_double(resolved_mu) << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// verify

struct VerifyArgs {
    std::size_t n = 8;
    std::size_t d = 4;
    std::size_t dv = 0;  // 0: all usable components
    std::uint64_t seed = 0;
    double epsilon = 1e-5;
    double entry_floor = verify::kDefaultEntryFloor;
    bool random_v = false;
    bool grad_only = false;
    std::string keys;
    std::string values;
    std::string output = "verify_out";
};

int run_verify(const VerifyArgs& args) {
    if (args.grad_only) {
        double err = verify::gradient_check(args.seed, args.epsilon);
        std::cout << format_double(err) << "\n";
        return err <= 1e-5 ? kExitOk : kExitVerifyFailed;
    }

    json config = {{"n", args.n},
                   {"d", args.d},
                   {"dv", args.dv},
                   {"seed", args.seed},
                   {"epsilon", args.epsilon},
                   {"entry-floor", args.entry_floor},
                   {"random-v", args.random_v},
                   {"keys", args.keys},
                   {"values", args.values}};

    bool pass = true;
    verify::DiagnosticsReport report;
    report.seed = args.seed;
    json extra = json::object();

    if (!args.keys.empty() || !args.values.empty()) {
        // matrix-file mode: gamma diagnostics on externally supplied K and V
        if (args.keys.empty() || args.values.empty())
            throw std::runtime_error("matrix mode needs both --keys and --values");
        Mat keys = read_matrix_csv(args.keys);
        Mat values = read_matrix_csv(args.values);
        if (values.rows() != keys.rows())
            throw std::runtime_error("--values must have one row per key: keys " +
                                     keys.shape() + ", values " + values.shape());
        kpca::KernelSpec spec = kpca::KernelSpec::scaled_exp_dot_for_dim(keys.cols());
        kpca::GramBundle bundle = kpca::gram(keys, spec);
        Mat a_hat = verify::recover_coefficients(values, bundle);
        report.gamma = verify::gamma_check(bundle, a_hat, args.entry_floor);
        for (const auto& c : report.gamma.per_component)
            if (!c.flagged && c.mean_abs_pairwise_diff > 1e-8) pass = false;
        double grad_err = verify::gradient_check(args.seed, args.epsilon);
        extra["gradient_check_max_error"] = grad_err;
        if (grad_err > 1e-5) pass = false;
    } else {
        SplitMix64 rng(args.seed);
        Mat keys = Mat::build(args.n, args.d,
                              [&](std::size_t, std::size_t) { return rng.next_gaussian(); });
        kpca::KernelSpec spec = kpca::KernelSpec::scaled_exp_dot_for_dim(args.d);
        kpca::GramBundle bundle = kpca::gram(keys, spec);

        SymEig raw = sym_eig(bundle.centered);
        double floor = 1e-10 * frobenius_norm(bundle.centered);
        std::size_t usable = 0;
        while (usable < args.n && raw.eigenvalues[usable] > floor) ++usable;
        if (usable == 0)
            throw std::runtime_error("no usable eigenpairs for this instance");
        std::size_t dv = args.dv == 0 ? usable : std::min(args.dv, usable);
        kpca::EigenBasis basis = kpca::solve_coefficients(bundle, dv);

        // eigen residuals ||K a_d - N lambda_d a_d||
        double residual_bound = 1e-8 * std::max(1.0, frobenius_norm(bundle.centered));
        Mat ka = matmul(bundle.centered, basis.coefficients);
        for (std::size_t d = 0; d < dv; ++d) {
            double res = 0.0;
            for (std::size_t j = 0; j < args.n; ++j) {
                double diff = ka(j, d) - static_cast<double>(args.n) *
                                             basis.eigenvalues[d] *
                                             basis.coefficients(j, d);
                res += diff * diff;
            }
            report.eigen_residuals.push_back(std::sqrt(res));
            if (report.eigen_residuals.back() > residual_bound) pass = false;
        }

        Mat values = kpca::build_values(basis, bundle);
        if (args.random_v)
            values = Mat::build(args.n, dv,
                                [&](std::size_t, std::size_t) { return rng.next_gaussian(); });

        // round trip V -> A_hat, checked against the basis in exact mode
        Mat a_hat = verify::recover_coefficients(values, bundle);
        if (!args.random_v) {
            double worst = 0.0;
            for (std::size_t d = 0; d < dv; ++d) {
                double mean = 0.0;
                for (std::size_t j = 0; j < args.n; ++j)
                    mean += basis.coefficients(j, d) / static_cast<double>(args.n);
                for (std::size_t j = 0; j < args.n; ++j)
                    worst = std::max(worst, std::abs(a_hat(j, d) -
                                                     (basis.coefficients(j, d) - mean)));
            }
            extra["roundtrip_max_error"] = worst;
            if (worst > 1e-10) pass = false;
        }

        report.gamma = verify::gamma_check(bundle, a_hat, args.entry_floor);
        for (std::size_t d = 0; d < report.gamma.per_component.size(); ++d) {
            const auto& c = report.gamma.per_component[d];
            double n_lambda = static_cast<double>(args.n) * basis.eigenvalues[d];
            if (!c.flagged && std::abs(n_lambda) >= 1e-3 && c.mean_abs_pairwise_diff > 1e-8)
                pass = false;
        }

        // projection-loss trace: blend from H = 0 to the exact projection
        Mat queries = Mat::build(args.n, args.d,
                                 [&](std::size_t, std::size_t) { return rng.next_gaussian(); });
        Mat h_exact = attn::kpca_exact_attention(queries, keys, spec, dv);
        std::vector<verify::TraceStep> steps;
        const std::size_t blend_steps = 4;
        for (std::size_t t = 0; t <= blend_steps; ++t) {
            double w = static_cast<double>(t) / static_cast<double>(blend_steps);
            steps.push_back(verify::TraceStep{queries, keys, w * h_exact});
        }
        report.j_proj_trace = verify::projection_loss_trace(steps, spec);
        if (report.j_proj_trace.back().second < -1e-10) pass = false;
        for (std::size_t t = 1; t < report.j_proj_trace.size(); ++t)
            if (report.j_proj_trace[t].second >= report.j_proj_trace[t - 1].second)
                pass = false;

        double grad_err = verify::gradient_check(args.seed, args.epsilon);
        extra["gradient_check_max_error"] = grad_err;
        if (grad_err > 1e-5) pass = false;
    }

    json out = verify::to_json(report);
    out.update(summary_skeleton("verify", config));
    out.update(extra);
    out["pass"] = pass;
    fs::create_directories(args.output);
    write_json(fs::path(args.output) / "report.json", out);

    std::cout << "verify: " << (pass ? "all thresholds met" : "thresholds violated") << "\n";
    return pass ? kExitOk : kExitVerifyFailed;
}

// ---------------------------------------------------------------------------
// bench

struct BenchArgs {
    std::size_t trials = 100;
    std::uint64_t seed = 0;
    std::size_t rows = 32;
    std::size_t cols = 16;
    std::size_t rank = 2;
    double rho = 0.05;
    double magnitude = 10.0;
    double lambda = rpc::kDefaultPapLambda;
    std::size_t iters = 2;
    AutoOrValue mu{"2.0"};
    AutoOrValue scale;
    std::size_t threads = 0;
    std::size_t bins = 20;
    std::string format = "both";
    std::string output = "bench_out";
};

int run_bench(const BenchArgs& args) {
    if (args.format != "json" && args.format != "csv" && args.format != "both")
        throw std::runtime_error("--format must be 'json', 'csv' or 'both'");

    bench::SynthSpec synth;
    synth.n_rows = args.rows;
    synth.n_cols = args.cols;
    synth.rank = args.rank;
    synth.rho = args.rho;
    synth.spike_magnitude = args.magnitude;
    synth.seed = args.seed;
    synth.validate();

    rpc::PapConfig pap_config;
    pap_config.n_iter = args.iters;
    pap_config.lambda = args.lambda;
    if (!args.mu.is_auto()) pap_config.mu = args.mu.value();
    pap_config.scale =
        args.scale.is_auto() ? attn::default_scale(args.cols) : args.scale.value();

    std::size_t threads = args.threads;
    std::size_t cap = env_thread_cap();
    if (cap > 0) threads = threads == 0 ? cap : std::min(threads, cap);

    json config = {{"trials", args.trials}, {"seed", args.seed},
                   {"rows", args.rows},     {"cols", args.cols},
                   {"rank", args.rank},     {"rho", args.rho},
                   {"magnitude", args.magnitude}, {"lambda", args.lambda},
                   {"iters", args.iters},   {"mu", args.mu.raw},
                   {"scale", pap_config.scale}, {"bins", args.bins},
                   {"format", args.format}};

    bench::BenchReport report =
        bench::corruption_bench(pap_config.scale, pap_config, synth, args.trials, threads);
    report.config_echo = config;

    json out = bench::to_json(report);
    out.update(summary_skeleton("bench", config));
    if (synth.rho == 0.0) out["note"] = "rho = 0: no corruption, ratios undefined";

    fs::create_directories(args.output);
    if (args.format != "csv") write_json(fs::path(args.output) / "report.json", out);
    if (args.format != "json")
        write_text(fs::path(args.output) / "report.csv",
                   provenance_comment(config) + bench::to_csv(report));
    write_text(fs::path(args.output) / "hist.csv",
               provenance_comment(config) + bench::ratio_histogram_csv(report, args.bins));

    std::cout << "bench: " << report.valid_trials << " valid trials, median ratio "
              << format_double(report.median_ratio) << ", win fraction "
              << format_double(report.win_fraction) << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"kernel-PCA view of softmax attention: exact pipelines, robust "
                 "principal-component attention, and verification suites"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kVersion));

    PcpArgs pcp_args;
    CLI::App* pcp = app.add_subcommand("pcp", "ADMM principal component pursuit on a matrix");
    ConfigBinder pcp_cfg(pcp);
    pcp_cfg.bind(pcp->add_option("--input", pcp_args.input, "matrix CSV to decompose"),
                 &pcp_args.input);
    pcp_cfg.bind(pcp->add_option("--synth", pcp_args.synth,
                                 "synthetic instance, e.g. rank=2,rho=0.05"),
                 &pcp_args.synth);
    pcp_cfg.bind(pcp->add_option("--lambda", pcp_args.lambda.raw,
                                 "sparsity weight; auto = 1/sqrt(max(N,D))")
                     ->capture_default_str(),
                 &pcp_args.lambda);
    pcp_cfg.bind(pcp->add_option("--mu", pcp_args.mu.raw,
                                 "ADMM penalty; auto = N*D/(4*l1(M))")
                     ->capture_default_str(),
                 &pcp_args.mu);
    pcp_cfg.bind(pcp->add_option("--tol", pcp_args.tol, "relative residual tolerance")
                     ->capture_default_str(),
                 &pcp_args.tol);
    pcp_cfg.bind(pcp->add_option("--max-iter", pcp_args.max_iter, "iteration cap")
                     ->capture_default_str(),
                 &pcp_args.max_iter);
    pcp_cfg.bind(pcp->add_option("--svt-rule", pcp_args.svt_rule,
                                 "L update: 'classical' (threshold 1/mu, +Y/mu) or "
                                 "'mu-threshold' (threshold mu, -Y/mu)")
                     ->capture_default_str(),
                 &pcp_args.svt_rule);
    pcp_cfg.bind(pcp->add_option("--seed", pcp_args.seed, "seed for --synth")
                     ->capture_default_str(),
                 &pcp_args.seed);
    pcp_cfg.bind(pcp->add_option("--output", pcp_args.output, "output directory")
                     ->capture_default_str(),
                 &pcp_args.output);

    RpcAttnArgs rpc_args;
    CLI::App* rpc_cmd = app.add_subcommand("rpc-attn",
                                           "RPC-Attention: principal attention pursuit");
    ConfigBinder rpc_cfg(rpc_cmd);
    rpc_cfg.bind(rpc_cmd->add_option("--keys", rpc_args.keys, "key matrix CSV"),
                 &rpc_args.keys);
    rpc_cfg.bind(rpc_cmd->add_option("--queries", rpc_args.queries,
                                     "query matrix CSV (asym variant)"),
                 &rpc_args.queries);
    rpc_cfg.bind(rpc_cmd->add_option("--variant", rpc_args.variant, "'sym' or 'asym'")
                     ->capture_default_str(),
                 &rpc_args.variant);
    rpc_cfg.bind(rpc_cmd->add_option("--lambda", rpc_args.lambda, "shrinkage weight")
                     ->capture_default_str(),
                 &rpc_args.lambda);
    rpc_cfg.bind(rpc_cmd->add_option("--iters", rpc_args.iters, "PAP iterations")
                     ->capture_default_str(),
                 &rpc_args.iters);
    rpc_cfg.bind(rpc_cmd->add_option("--mu", rpc_args.mu.raw,
                                     "penalty; auto = N*D/(4*l1(K))")
                     ->capture_default_str(),
                 &rpc_args.mu);
    rpc_cfg.bind(rpc_cmd->add_option("--scale", rpc_args.scale.raw,
                                     "attention scale; auto = 1/sqrt(D)")
                     ->capture_default_str(),
                 &rpc_args.scale);
    rpc_cfg.bind(rpc_cmd->add_option("--output", rpc_args.output, "output directory")
                     ->capture_default_str(),
                 &rpc_args.output);

    VerifyArgs verify_args;
    CLI::App* verify_cmd = app.add_subcommand(
        "verify", "eigenvector capture, gamma constancy, projection loss, gradients");
    ConfigBinder verify_cfg(verify_cmd);
    verify_cfg.bind(verify_cmd->add_option("--n", verify_args.n, "number of keys")
                        ->capture_default_str(),
                    &verify_args.n);
    verify_cfg.bind(verify_cmd->add_option("--d", verify_args.d, "key dimension")
                        ->capture_default_str(),
                    &verify_args.d);
    verify_cfg.bind(verify_cmd->add_option("--dv", verify_args.dv,
                                           "components; 0 = all usable")
                        ->capture_default_str(),
                    &verify_args.dv);
    verify_cfg.bind(verify_cmd->add_option("--seed", verify_args.seed, "instance seed")
                        ->capture_default_str(),
                    &verify_args.seed);
    verify_cfg.bind(verify_cmd->add_option("--epsilon", verify_args.epsilon,
                                           "finite-difference step")
                        ->capture_default_str(),
                    &verify_args.epsilon);
    verify_cfg.bind(verify_cmd->add_option("--entry-floor", verify_args.entry_floor,
                                           "gamma division floor")
                        ->capture_default_str(),
                    &verify_args.entry_floor);
    verify_cfg.bind(verify_cmd->add_flag("--random-v", verify_args.random_v,
                                         "negative control: random value matrix"),
                    &verify_args.random_v);
    verify_cfg.bind(verify_cmd->add_flag("--grad-only", verify_args.grad_only,
                                         "emit only the gradient-check scalar"),
                    &verify_args.grad_only);
    verify_cfg.bind(verify_cmd->add_option("--keys", verify_args.keys,
                                           "external key matrix CSV"),
                    &verify_args.keys);
    verify_cfg.bind(verify_cmd->add_option("--values", verify_args.values,
                                           "external value matrix CSV"),
                    &verify_args.values);
    verify_cfg.bind(verify_cmd->add_option("--output", verify_args.output,
                                           "output directory")
                        ->capture_default_str(),
                    &verify_args.output);

    BenchArgs bench_args;
    CLI::App* bench_cmd = app.add_subcommand(
        "bench", "corruption robustness: softmax attention vs RPC-Attention");
    ConfigBinder bench_cfg(bench_cmd);
    bench_cfg.bind(bench_cmd->add_option("--trials", bench_args.trials, "trial count")
                       ->capture_default_str(),
                   &bench_args.trials);
    bench_cfg.bind(bench_cmd->add_option("--seed", bench_args.seed, "base seed")
                       ->capture_default_str(),
                   &bench_args.seed);
    bench_cfg.bind(bench_cmd->add_option("--rows", bench_args.rows, "key rows")
                       ->capture_default_str(),
                   &bench_args.rows);
    bench_cfg.bind(bench_cmd->add_option("--cols", bench_args.cols, "key columns")
                       ->capture_default_str(),
                   &bench_args.cols);
    bench_cfg.bind(bench_cmd->add_option("--rank", bench_args.rank, "clean-key rank")
                       ->capture_default_str(),
                   &bench_args.rank);
    bench_cfg.bind(bench_cmd->add_option("--rho", bench_args.rho, "corruption fraction")
                       ->capture_default_str(),
                   &bench_args.rho);
    bench_cfg.bind(bench_cmd->add_option("--magnitude", bench_args.magnitude,
                                         "spike magnitude")
                       ->capture_default_str(),
                   &bench_args.magnitude);
    bench_cfg.bind(bench_cmd->add_option("--lambda", bench_args.lambda, "PAP shrinkage weight")
                       ->capture_default_str(),
                   &bench_args.lambda);
    bench_cfg.bind(bench_cmd->add_option("--iters", bench_args.iters, "PAP iterations")
                       ->capture_default_str(),
                   &bench_args.iters);
    bench_cfg.bind(bench_cmd->add_option("--mu", bench_args.mu.raw,
                                         "PAP penalty; 'auto' = N*D/(4*l1(K)). The default "
                                         "2.0 places lambda/mu between the clean-key scale "
                                         "and the spikes")
                       ->capture_default_str(),
                   &bench_args.mu);
    bench_cfg.bind(bench_cmd->add_option("--scale", bench_args.scale.raw,
                                         "attention scale; auto = 1/sqrt(cols)")
                       ->capture_default_str(),
                   &bench_args.scale);
    bench_cfg.bind(bench_cmd->add_option("--threads", bench_args.threads,
                                         "max worker threads; 0 = hardware, capped by "
                                         "KPCA_ATTN_THREADS")
                       ->capture_default_str(),
                   &bench_args.threads);
    bench_cfg.bind(bench_cmd->add_option("--bins", bench_args.bins, "histogram bins")
                       ->capture_default_str(),
                   &bench_args.bins);
    bench_cfg.bind(bench_cmd->add_option("--format", bench_args.format,
                                         "'json', 'csv' or 'both'")
                       ->capture_default_str(),
                   &bench_args.format);
    bench_cfg.bind(bench_cmd->add_option("--output", bench_args.output, "output directory")
                       ->capture_default_str(),
                   &bench_args.output);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kExitOk : kExitInput;
    }

    try {
        if (pcp->parsed()) {
            pcp_cfg.apply();
            return run_pcp(pcp_args);
        }
        if (rpc_cmd->parsed()) {
            rpc_cfg.apply();
            return run_rpc_attn(rpc_args);
        }
        if (verify_cmd->parsed()) {
            verify_cfg.apply();
            return run_verify(verify_args);
        }
        if (bench_cmd->parsed()) {
            bench_cfg.apply();
            return run_bench(bench_args);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    }
    return kExitInput;
}
