#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "kpca_attn/attention.hpp"
#include "kpca_attn/csv.hpp"
#include "kpca_attn/mat.hpp"
#include "kpca_attn/rng.hpp"
#include "kpca_attn/rpc.hpp"

namespace kpca_attn::bench {

struct SynthSpec {
    std::size_t n_rows = 50;
    std::size_t n_cols = 50;
    std::size_t rank = 2;
    double rho = 0.05;
    double spike_magnitude = 10.0;
    std::uint64_t seed = 0;

    void validate() const {
        if (n_rows == 0 || n_cols == 0)
            throw std::invalid_argument("SynthSpec: dimensions must be positive");
        if (rank == 0 || rank > std::min(n_rows, n_cols))
            throw std::invalid_argument("SynthSpec: rank must lie in [1, min(rows, cols)]");
        if (rho < 0.0 || rho >= 1.0)
            throw std::invalid_argument("SynthSpec: rho must lie in [0, 1)");
        if (!(spike_magnitude > 0.0))
            throw std::invalid_argument("SynthSpec: spike_magnitude must be positive");
    }
};

struct SynthInstance {
    Mat l0;  // low-rank ground truth
    Mat s0;  // sparse spikes
    Mat m;   // l0 + s0
};

inline std::size_t rho_count(double rho, std::size_t total) {
    return static_cast<std::size_t>(rho * static_cast<double>(total));
}

/// L0 = U V^T with factor entries i.i.d. N(0, 1/rank); S0 places
/// floor(rho * rows * cols) spikes of +-spike_magnitude at positions drawn
/// uniformly without replacement. Fully determined by the seed: factors are
/// drawn row-major (U then V), then positions, then signs.
inline SynthInstance synth_lowrank_sparse(const SynthSpec& spec) {
    spec.validate();
    SplitMix64 rng(spec.seed);
    const double factor_scale = 1.0 / std::sqrt(static_cast<double>(spec.rank));
    auto draw_factor = [&](std::size_t rows) {
        return Mat::build(rows, spec.rank, [&](std::size_t, std::size_t) {
            return factor_scale * rng.next_gaussian();
        });
    };
    Mat u = draw_factor(spec.n_rows);
    Mat v = draw_factor(spec.n_cols);
    Mat l0 = matmul(u, transpose(v));

    const std::size_t total = spec.n_rows * spec.n_cols;
    const std::size_t nnz = rho_count(spec.rho, total);
    std::vector<std::size_t> positions(total);
    std::iota(positions.begin(), positions.end(), std::size_t{0});
    for (std::size_t i = 0; i < nnz; ++i) {
        std::size_t j = i + rng.next_below(total - i);
        std::swap(positions[i], positions[j]);
    }
    std::vector<double> s(total, 0.0);
    for (std::size_t i = 0; i < nnz; ++i) {
        double sign = (rng.next() & 1) ? 1.0 : -1.0;
        s[positions[i]] = sign * spec.spike_magnitude;
    }
    Mat s0(spec.n_rows, spec.n_cols, std::move(s));
    Mat m = l0 + s0;
    return SynthInstance{std::move(l0), std::move(s0), std::move(m)};
}

struct TrialResult {
    std::uint64_t seed;
    double dev_softmax;
    double dev_rpc;
    double ratio;       // dev_rpc / dev_softmax; 0 when flagged
    std::string flag;   // empty, "zero_norm_reference", or "zero_softmax_deviation"
};

struct BenchReport {
    std::vector<TrialResult> trials;
    double median_ratio = 0.0;
    double win_fraction = 0.0;  // fraction of valid trials with ratio < 1
    std::size_t valid_trials = 0;
    std::size_t flagged_trials = 0;
    nlohmann::json config_echo;
};

namespace detail {

inline double median_of(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    std::size_t mid = v.size() / 2;
    return v.size() % 2 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

inline std::size_t resolve_threads(std::size_t max_threads, std::size_t n_trials) {
    std::size_t hw = std::thread::hardware_concurrency();
    if (hw == 0) hw = 1;
    std::size_t t = max_threads == 0 ? hw : max_threads;
    return std::max<std::size_t>(1, std::min(t, n_trials));
}

}  // namespace detail

/// Corruption robustness trial: corrupt low-rank keys with sparse spikes and
/// compare how far softmax attention and RPC-Attention drift from the clean
/// reference, in Frobenius distance of the attention outputs.
inline TrialResult run_corruption_trial(std::uint64_t trial_seed, double attn_scale,
                                        const rpc::PapConfig& pap_config,
                                        const SynthSpec& synth_spec) {
    SynthSpec spec = synth_spec;
    spec.seed = trial_seed;
    SynthInstance inst = synth_lowrank_sparse(spec);
    const Mat& k_clean = inst.l0;
    const Mat& k = inst.m;

    Mat h_ref = attn::symmetric_attention(k_clean, k_clean, attn_scale).h;
    TrialResult r{};
    r.seed = trial_seed;
    if (frobenius_norm(h_ref) == 0.0) {
        r.flag = "zero_norm_reference";
        return r;
    }
    r.dev_softmax = frobenius_norm(attn::symmetric_attention(k, k, attn_scale).h - h_ref);
    r.dev_rpc = frobenius_norm(rpc::rpc_attention(k, pap_config) - h_ref);
    if (r.dev_softmax == 0.0) {
        r.flag = "zero_softmax_deviation";  // the rho = 0 regime
        return r;
    }
    r.ratio = r.dev_rpc / r.dev_softmax;
    return r;
}

/// Runs n_trials independent corruption trials, trial t seeded with
/// synth_spec.seed XOR t so results are order- and thread-count independent.
/// max_threads = 0 means use hardware concurrency.
inline BenchReport corruption_bench(double attn_scale, const rpc::PapConfig& pap_config,
                                    const SynthSpec& synth_spec, std::size_t n_trials,
                                    std::size_t max_threads = 0) {
    if (n_trials < 1)
        throw std::invalid_argument("corruption_bench: n_trials must be at least 1");
    pap_config.validate();
    synth_spec.validate();

    std::vector<TrialResult> trials(n_trials);
    const std::size_t n_threads = detail::resolve_threads(max_threads, n_trials);
    if (n_threads == 1) {
        for (std::size_t t = 0; t < n_trials; ++t)
            trials[t] = run_corruption_trial(synth_spec.seed ^ t, attn_scale, pap_config,
                                             synth_spec);
    } else {
        std::atomic<std::size_t> next{0};
        auto worker = [&] {
            for (std::size_t t = next.fetch_add(1); t < n_trials; t = next.fetch_add(1))
                trials[t] = run_corruption_trial(synth_spec.seed ^ t, attn_scale, pap_config,
                                                 synth_spec);
        };
        std::vector<std::thread> pool;
        pool.reserve(n_threads);
        for (std::size_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    BenchReport report;
    report.trials = std::move(trials);
    std::vector<double> ratios;
    for (const auto& t : report.trials) {
        if (t.flag.empty())
            ratios.push_back(t.ratio);
        else
            ++report.flagged_trials;
    }
    report.valid_trials = ratios.size();
    report.median_ratio = detail::median_of(ratios);
    if (!ratios.empty()) {
        std::size_t wins = 0;
        for (double r : ratios)
            if (r < 1.0) ++wins;
        report.win_fraction = static_cast<double>(wins) / static_cast<double>(ratios.size());
    }
    return report;
}

inline nlohmann::json to_json(const BenchReport& report) {
    nlohmann::json trials = nlohmann::json::array();
    for (const auto& t : report.trials) {
        nlohmann::json j = {{"seed", t.seed},
                            {"dev_softmax", t.dev_softmax},
                            {"dev_rpc", t.dev_rpc},
                            {"ratio", t.ratio}};
        if (!t.flag.empty()) j["flag"] = t.flag;
        trials.push_back(j);
    }
    nlohmann::json out = {{"trials", trials},
                          {"summary",
                           {{"median_ratio", report.median_ratio},
                            {"win_fraction", report.win_fraction},
                            {"valid_trials", report.valid_trials},
                            {"flagged_trials", report.flagged_trials}}}};
    if (!report.config_echo.is_null()) out["config"] = report.config_echo;
    return out;
}

/// One row per trial: seed, dev_softmax, dev_rpc, ratio, flag.
inline std::string to_csv(const BenchReport& report) {
    std::ostringstream out;
    out << "seed,dev_softmax,dev_rpc,ratio,flag\n";
    for (const auto& t : report.trials)
        out << t.seed << "," << format_double(t.dev_softmax) << ","
            << format_double(t.dev_rpc) << "," << format_double(t.ratio) << "," << t.flag
            << "\n";
    return out.str();
}

/// Ratio histogram for external plotting: bin_lo, bin_hi, count.
inline std::string ratio_histogram_csv(const BenchReport& report, std::size_t n_bins = 20) {
    if (n_bins == 0)
        throw std::invalid_argument("ratio_histogram_csv: need at least one bin");
    double hi = 1.0;
    for (const auto& t : report.trials)
        if (t.flag.empty()) hi = std::max(hi, t.ratio);
    std::vector<std::size_t> counts(n_bins, 0);
    const double width = hi / static_cast<double>(n_bins);
    for (const auto& t : report.trials) {
        if (!t.flag.empty()) continue;
        std::size_t bin = width > 0.0 ? static_cast<std::size_t>(t.ratio / width) : 0;
        counts[std::min(bin, n_bins - 1)]++;
    }
    std::ostringstream out;
    out << "bin_lo,bin_hi,count\n";
    for (std::size_t b = 0; b < n_bins; ++b)
        out << format_double(width * static_cast<double>(b)) << ","
            << format_double(width * static_cast<double>(b + 1)) << "," << counts[b] << "\n";
    return out.str();
}

}  // namespace kpca_attn::bench
