#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "stablegnn/checkpoint.hpp"
#include "stablegnn/errors.hpp"
#include "stablegnn/gnn.hpp"
#include "stablegnn/gso.hpp"
#include "stablegnn/movielens.hpp"
#include "stablegnn/parallel.hpp"
#include "stablegnn/perturbation.hpp"
#include "stablegnn/trainer.hpp"

namespace stablegnn {

inline constexpr const char* kVersion = "0.1.0";

/// Root-mean-square prediction error over the masked nodes of every sample.
inline double evaluate_rmse(const GnnParams& params, const GnnConfig& cfg, const Gso& g_eval,
                            const SignalBatch& batch) {
    if (batch.empty()) fail(errc::empty_batch, "rmse over empty batch");
    batch.validate(g_eval.n());

    std::vector<double> sq(batch.size(), 0.0);
    std::vector<std::size_t> cnt(batch.size(), 0);
    parallel_for(batch.size(), [&](std::size_t i) {
        const GraphSignal y_hat = forward_value(g_eval, batch.inputs[i], params, cfg);
        for (std::size_t k = 0; k < y_hat.size(); ++k) {
            if (!batch.masks[i][k]) continue;
            const double d = y_hat[k] - batch.targets[i][k];
            sq[i] += d * d;
            cnt[i] += 1;
        }
    });
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        total += sq[i];
        count += cnt[i];
    }
    return std::sqrt(total / double(count));
}

struct SweepSpec {
    std::vector<double> magnitudes = {0.0, 0.0001, 0.001, 0.01, 0.1, 0.2, 0.5};
    std::size_t draws_per_magnitude = 20;
    std::size_t splits = 10;
    std::vector<TrainMode> modes = {TrainMode::Unconstrained, TrainMode::Constrained};
    std::vector<GnnConfig> architectures;

    void validate() const {
        if (magnitudes.empty()) fail(errc::bad_config, "sweep needs at least one magnitude");
        for (std::size_t i = 0; i < magnitudes.size(); ++i) {
            if (magnitudes[i] < 0.0) fail(errc::bad_config, "magnitudes must be nonnegative");
            if (i > 0 && magnitudes[i] < magnitudes[i - 1])
                fail(errc::bad_config, "magnitudes must be sorted ascending");
        }
        if (draws_per_magnitude < 1) fail(errc::bad_config, "draws_per_magnitude must be >= 1");
        if (splits < 1) fail(errc::bad_config, "sweep needs at least one split");
        if (modes.empty() || architectures.empty())
            fail(errc::bad_config, "sweep needs modes and architectures");
        for (const auto& a : architectures) a.validate();
    }
};

struct SweepRow {
    std::string mode;
    std::size_t layers = 0; // hidden graph-filter banks, 1 or 2 in the standard setup
    double magnitude = 0.0;
    double mean_rmse = 0.0;
    double std_rmse = 0.0;
    double var_rmse = 0.0;
    std::size_t n_eval = 0;

    friend bool operator==(const SweepRow& a, const SweepRow& b) {
        return a.mode == b.mode && a.layers == b.layers && a.magnitude == b.magnitude &&
               a.mean_rmse == b.mean_rmse && a.std_rmse == b.std_rmse &&
               a.var_rmse == b.var_rmse && a.n_eval == b.n_eval;
    }
};

struct SweepReport {
    std::vector<SweepRow> rows;
    std::uint64_t config_hash = 0;
    std::uint64_t base_seed = 0;
    std::string version = kVersion;
    double wall_seconds = 0.0; // excluded from determinism comparisons
    std::size_t splits = 0;
    std::size_t draws_per_magnitude = 0;
    bool partial = false;
    std::string error;
};

struct SweepInputs {
    double train_fraction = 0.9;
    DataOptions data;
    GraphOptions graph;
    TrainerConfig trainer;   // mode and seed are overridden per job
    PerturbationModel train_pert; // magnitude comes from trainer.epsilon
};

namespace detail {

inline void mean_std(const std::vector<double>& xs, double& mean, double& stddev) {
    mean = 0.0;
    for (double x : xs) mean += x;
    mean /= double(xs.size());
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    stddev = xs.size() > 1 ? std::sqrt(ss / double(xs.size() - 1)) : 0.0;
}

} // namespace detail

using ProgressFn = std::function<void(const std::string&)>;

/// Full perturbation-sweep protocol: per split, train one model per
/// (mode, architecture), then score the test set under ExactBoundary
/// relative perturbations at every magnitude. Results are pooled across
/// splits x draws. Deterministic given (inputs, base_seed).
inline SweepReport run_sweep(const RatingsTable& table, const SweepSpec& spec,
                             const SweepInputs& inputs, std::uint64_t base_seed,
                             std::uint64_t config_hash = 0,
                             const std::string& out_dir = "",
                             const ProgressFn& progress = nullptr) {
    spec.validate();
    const auto t_start = std::chrono::steady_clock::now();

    SweepReport report;
    report.config_hash = config_hash;
    report.base_seed = base_seed;
    report.splits = spec.splits;
    report.draws_per_magnitude = spec.draws_per_magnitude;

    const std::size_t n_modes = spec.modes.size();
    const std::size_t n_archs = spec.architectures.size();
    const std::size_t n_mags = spec.magnitudes.size();
    // pooled[mode][arch][magnitude] -> rmse samples across splits x draws
    std::vector<std::vector<double>> pooled(n_modes * n_archs * n_mags);
    const auto cell = [&](std::size_t m, std::size_t a, std::size_t g) {
        return (m * n_archs + a) * n_mags + g;
    };

    for (std::size_t s = 0; s < spec.splits && !report.partial; ++s) {
        const std::uint64_t split_seed = base_seed + s;
        const DatasetSplit split = split_dataset(table, inputs.train_fraction, split_seed,
                                                 inputs.data, inputs.graph,
                                                 inputs.trainer.slack_eval_fraction);
        if (progress)
            progress("split " + std::to_string(s + 1) + "/" + std::to_string(spec.splits) +
                     ": n=" + std::to_string(split.graph.n()) +
                     " train=" + std::to_string(split.train.size()) +
                     " test=" + std::to_string(split.test.size()));

        for (std::size_t a = 0; a < n_archs; ++a) {
            for (std::size_t m = 0; m < n_modes; ++m) {
                TrainerConfig tcfg = inputs.trainer;
                tcfg.mode = spec.modes[m];
                tcfg.seed = base_seed * 1000003ULL + s * 1009ULL + a * 101ULL + m;

                TrainState state;
                try {
                    state = train(split.graph, split.train, split.slack,
                                  spec.architectures[a], tcfg, inputs.train_pert);
                } catch (const Error& e) {
                    report.partial = true;
                    report.error = e.what();
                    break;
                }
                if (!out_dir.empty()) {
                    const std::string log_path =
                        out_dir + "/train_" + train_mode_name(tcfg.mode) + "_arch" +
                        std::to_string(a) + "_split" + std::to_string(s) + ".jsonl";
                    std::ofstream os(log_path);
                    if (os) write_history_jsonl(os, state.history);
                }
                if (progress)
                    progress("  trained " + std::string(train_mode_name(tcfg.mode)) + " " +
                             spec.architectures[a].describe() + " (final loss " +
                             std::to_string(state.history.back().train_loss) + ")");

                for (std::size_t gi = 0; gi < n_mags; ++gi) {
                    const double mag = spec.magnitudes[gi];
                    auto& sink = pooled[cell(m, a, gi)];
                    if (mag == 0.0) {
                        sink.push_back(evaluate_rmse(state.params, spec.architectures[a],
                                                     split.graph, split.test));
                        continue;
                    }
                    PerturbationModel eval_pert{PerturbationKind::Relative, mag,
                                                NormMode::ExactBoundary};
                    Rng draw_rng = Rng::stream(
                        base_seed, 0xE7A1ULL ^ (s << 20) ^ (a << 14) ^ (m << 8) ^ gi);
                    for (std::size_t d = 0; d < spec.draws_per_magnitude; ++d) {
                        const Gso g_hat = perturb(split.graph, eval_pert, draw_rng);
                        sink.push_back(evaluate_rmse(state.params, spec.architectures[a], g_hat,
                                                     split.test));
                    }
                }
            }
            if (report.partial) break;
        }
    }

    for (std::size_t m = 0; m < n_modes; ++m)
        for (std::size_t a = 0; a < n_archs; ++a)
            for (std::size_t gi = 0; gi < n_mags; ++gi) {
                const auto& xs = pooled[cell(m, a, gi)];
                if (xs.empty()) continue;
                SweepRow row;
                row.mode = train_mode_name(spec.modes[m]);
                row.layers = spec.architectures[a].hidden_layer_count();
                row.magnitude = spec.magnitudes[gi];
                detail::mean_std(xs, row.mean_rmse, row.std_rmse);
                row.var_rmse = row.std_rmse * row.std_rmse;
                row.n_eval = xs.size();
                report.rows.push_back(std::move(row));
            }

    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return report;
}

// --- CSV / JSON emission ---

inline std::string format_g17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_sweep_csv(std::ostream& os, const SweepReport& report) {
    os << "mode,layers,magnitude,mean_rmse,std_rmse,var_rmse,n_eval\n";
    for (const auto& r : report.rows)
        os << r.mode << "," << r.layers << "," << format_g17(r.magnitude) << ","
           << format_g17(r.mean_rmse) << "," << format_g17(r.std_rmse) << ","
           << format_g17(r.var_rmse) << "," << r.n_eval << "\n";
}

inline std::vector<SweepRow> parse_sweep_csv(std::istream& is) {
    std::vector<SweepRow> rows;
    std::string line;
    if (!std::getline(is, line) || line != "mode,layers,magnitude,mean_rmse,std_rmse,var_rmse,n_eval")
        fail(errc::io_failure, "bad sweep CSV header");
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string tok;
        SweepRow r;
        std::getline(ss, tok, ',');
        r.mode = tok;
        std::getline(ss, tok, ',');
        r.layers = std::stoul(tok);
        std::getline(ss, tok, ',');
        r.magnitude = std::stod(tok);
        std::getline(ss, tok, ',');
        r.mean_rmse = std::stod(tok);
        std::getline(ss, tok, ',');
        r.std_rmse = std::stod(tok);
        std::getline(ss, tok, ',');
        r.var_rmse = std::stod(tok);
        std::getline(ss, tok, ',');
        r.n_eval = std::stoul(tok);
        rows.push_back(std::move(r));
    }
    return rows;
}

inline void write_sweep_json(std::ostream& os, const SweepReport& report) {
    os << "{\n  \"version\": \"" << report.version << "\",\n";
    os << "  \"config_hash\": \"" << std::hex << report.config_hash << std::dec << "\",\n";
    os << "  \"base_seed\": " << report.base_seed << ",\n";
    os << "  \"splits\": " << report.splits << ",\n";
    os << "  \"draws_per_magnitude\": " << report.draws_per_magnitude << ",\n";
    os << "  \"partial\": " << (report.partial ? "true" : "false") << ",\n";
    if (report.partial) os << "  \"error\": \"" << report.error << "\",\n";
    os << "  \"wall_seconds\": " << format_g17(report.wall_seconds) << ",\n";
    os << "  \"rows\": [\n";
    for (std::size_t i = 0; i < report.rows.size(); ++i) {
        const auto& r = report.rows[i];
        os << "    {\"mode\": \"" << r.mode << "\", \"layers\": " << r.layers
           << ", \"magnitude\": " << format_g17(r.magnitude)
           << ", \"mean_rmse\": " << format_g17(r.mean_rmse)
           << ", \"std_rmse\": " << format_g17(r.std_rmse)
           << ", \"var_rmse\": " << format_g17(r.var_rmse) << ", \"n_eval\": " << r.n_eval << "}"
           << (i + 1 == report.rows.size() ? "" : ",") << "\n";
    }
    os << "  ]\n}\n";
}

} // namespace stablegnn
