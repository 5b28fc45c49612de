#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "analysis.hpp"
#include "error.hpp"
#include "experiments.hpp"
#include "fmat.hpp"
#include "store.hpp"
#include "subspace.hpp"
#include "toynets.hpp"

namespace subspectra::cli {

namespace fs = std::filesystem;

enum ExitCode : int { ok = 0, validation = 1, io = 2, numerical = 3 };

struct CommandResult
{
    int exit_code = ok;
    std::vector<fs::path> artifacts;
    std::string summary;
};

//
// shared helpers
//

/// A dataset directory (data.fmat + optional labels.txt) or a bare FMAT file.
inline ToyDataset load_dataset(const fs::path & p, const std::optional<fs::path> & labels = std::nullopt)
{
    if (fs::is_directory(p)) {
        const fs::path lab = p / "labels.txt";
        return load_raw_matrix(p / "data.fmat", labels ? labels : (fs::exists(lab) ? std::optional(lab) : std::nullopt));
    }
    return load_raw_matrix(p, labels);
}

inline const Checkpoint & find_checkpoint(const TrainedRun & run, std::optional<std::size_t> epoch,
                                          std::optional<std::size_t> iteration)
{
    if (!epoch && !iteration)
        return run.well_trained();
    const std::size_t e = epoch.value_or(0);
    for (const auto & c : run.checkpoints)
        if (c.epoch == e && c.iteration == iteration)
            return c;
    throw ValidationError("run " + run.run_id + " has no checkpoint at epoch " + std::to_string(e) +
                          (iteration ? " iteration " + std::to_string(*iteration) : std::string()));
}

inline SvdMethod method_from_string(const std::string & s)
{
    if (s == "exact")
        return SvdMethod::exact;
    if (s == "randomized")
        return SvdMethod::randomized;
    throw ValidationError("unknown method '" + s + "' (expected exact|randomized)");
}

inline std::string fixed(double v, int digits)
{
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

inline std::string short_num(double v)
{
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

/// Minimal CSV reader: header row plus numeric columns, no quoting.
inline std::map<std::string, std::vector<double>> read_numeric_csv(const fs::path & path)
{
    std::istringstream in(read_file_bytes(path));
    std::string line;
    const auto split = [](const std::string & s) {
        std::vector<std::string> out;
        std::string cell;
        std::istringstream ls(s);
        while (std::getline(ls, cell, ','))
            out.push_back(cell);
        if (!s.empty() && s.back() == ',')
            out.emplace_back();
        return out;
    };
    if (!std::getline(in, line))
        throw FormatError(path.string() + ": empty CSV");
    if (!line.empty() && line.back() == '\r')
        line.pop_back();
    const auto header = split(line);
    std::map<std::string, std::vector<double>> cols;
    for (std::size_t row = 2; std::getline(in, line); ++row) {
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty())
            continue;
        const auto cells = split(line);
        if (cells.size() != header.size())
            throw FormatError(path.string() + ": row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                              " fields, header has " + std::to_string(header.size()));
        for (std::size_t j = 0; j < cells.size(); ++j) {
            double v = std::numeric_limits<double>::quiet_NaN();
            try {
                std::size_t used = 0;
                v = std::stod(cells[j], &used);
                if (used != cells[j].size())
                    v = std::numeric_limits<double>::quiet_NaN();
            } catch (const std::exception &) {
            }
            cols[header[j]].push_back(v);
        }
    }
    return cols;
}

/// Wall-clock timing of exact vs randomized top-k on a ReLU(G·W) matrix.
struct BenchResult
{
    std::size_t rows = 0, cols = 0, k = 1;
    double exact_seconds = 0.0;
    double randomized_seconds = 0.0;
    double cosine_abs = 0.0;
    double sigma1_rel_error = 0.0;

    double speedup() const { return exact_seconds / randomized_seconds; }
};

/// ReLU of a rank-32 Gaussian product, scaled by 1/√32: nonnegative like a
/// deep feature matrix, so its leading singular value is well separated.
inline DenseMatrix benchmark_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed)
{
    detail::require(rows >= 2 && cols >= 2, "benchmark matrix needs at least 2 rows and 2 columns");
    constexpr std::size_t inner = 32;
    Rng rng(seed);
    DenseMatrix g(rows, inner), w(inner, cols);
    for (double & x : g.data())
        x = rng.gaussian();
    for (double & x : w.data())
        x = rng.gaussian();
    DenseMatrix a = matmul(g, w);
    const double s = 1.0 / std::sqrt(static_cast<double>(inner));
    for (double & x : a.data())
        x = std::max(0.0, x) * s;
    return a;
}

/// Best-of-`repeats` wall time per method.
inline BenchResult svd_bench(std::size_t rows, std::size_t cols, std::size_t k, std::uint64_t seed,
                             std::size_t oversample, std::size_t power_iters, std::size_t repeats = 3)
{
    ::subspectra::detail::require(repeats >= 1, "svd-bench: repeats must be >= 1");
    const DenseMatrix a = benchmark_matrix(rows, cols, seed);
    BenchResult r{rows, cols, k};
    using clock = std::chrono::steady_clock;
    const auto seconds = [](clock::time_point t0) { return std::chrono::duration<double>(clock::now() - t0).count(); };
    std::optional<SvdResult> e, s;
    r.exact_seconds = r.randomized_seconds = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < repeats; ++i) {
        auto t0 = clock::now();
        e = full_svd(a, k);
        r.exact_seconds = std::min(r.exact_seconds, seconds(t0));
        t0 = clock::now();
        s = randomized_svd(a, k, oversample, power_iters, derive_seed(seed, 1));
        r.randomized_seconds = std::min(r.randomized_seconds, seconds(t0));
    }
    r.cosine_abs = std::abs(dot(e->U.col(0), s->U.col(0)));
    r.sigma1_rel_error = std::abs(e->sigma[0] - s->sigma[0]) / e->sigma[0];
    return r;
}

namespace detail {

inline void write_json(const fs::path & p, const json & j, CommandResult & res)
{
    write_file_atomic(p, j.dump(2) + "\n");
    res.artifacts.push_back(p);
}

template <typename Report>
void emit(const Report & r, const fs::path & p, std::optional<std::string> format, CommandResult & res)
{
    emit_report(r, p, report_format_for(p, format));
    res.artifacts.push_back(p);
}

inline std::vector<const TrainedRun *> pointers(const std::vector<TrainedRun> & runs)
{
    std::vector<const TrainedRun *> out;
    for (const auto & r : runs)
        out.push_back(&r);
    return out;
}

inline json spearman_json(const SpearmanResult & s)
{
    return {{"rho", s.rho}, {"p", s.p}, {"n", s.n}, {"p_method", s.p_method}};
}

inline json summary_json(const BaselineSummary & b)
{
    return {{"mean", b.mean}, {"stddev", b.stddev}, {"p99", b.p99}, {"count", b.cosines.size()}};
}

inline GridReport grid_report(std::vector<std::string> labels, const DenseMatrix & m)
{
    return GridReport{std::move(labels), m};
}

} // namespace detail

//
// repro presets
//

struct ReproOptions
{
    std::string preset;
    fs::path out;
    std::optional<std::size_t> seeds;
    std::optional<std::size_t> epochs;
};

inline SuiteConfig suite_for(const ReproOptions & o)
{
    SuiteConfig s = default_suite();
    if (o.seeds) {
        ::subspectra::detail::require(*o.seeds >= 1 && *o.seeds <= 5, "--seeds must lie in 1..5");
        s.seeds.resize(*o.seeds);
    }
    if (o.epochs) {
        ::subspectra::detail::require(*o.epochs >= 1, "--epochs must be >= 1");
        for (auto & m : s.members)
            m.config.epochs = *o.epochs;
    }
    return s;
}

inline void repro_h1(const ReproOptions & o, CommandResult & res)
{
    const SuiteRuns runs = train_suite(suite_for(o));
    const GridOutcome g = grid_outcome(runs);
    std::vector<std::string> names;
    for (const auto & m : suite_for(o).members)
        names.push_back(m.name);
    for (const char * ext : {"csv", "json", "svg"}) {
        detail::emit(detail::grid_report(runs.labels, g.trained), o.out / (std::string("trained_grid.") + ext),
                     std::nullopt, res);
        detail::emit(detail::grid_report(names, g.seed_averaged), o.out / (std::string("averaged_grid.") + ext),
                     std::nullopt, res);
    }
    detail::emit(detail::grid_report(runs.labels, g.initial), o.out / "init_grid.csv", std::nullopt, res);
    const auto & tc = g.trained_summary.cosines;
    detail::write_json(o.out / "summary.json",
                       {{"preset", "h1-grid"},
                        {"baseline", detail::summary_json(g.baseline)},
                        {"trained", detail::summary_json(g.trained_summary)},
                        {"trained_min", *std::min_element(tc.begin(), tc.end())},
                        {"all_above_baseline_p99", g.all_above_p99},
                        {"mean_above_baseline_5sd", g.mean_above_5sd}},
                       res);
    res.summary = "trained mean=" + fixed(g.trained_summary.mean, 4) +
                  " min=" + fixed(*std::min_element(tc.begin(), tc.end()), 4) +
                  " baseline mean=" + fixed(g.baseline.mean, 4) + " sd=" + fixed(g.baseline.stddev, 4) +
                  " p99=" + fixed(g.baseline.p99, 4);
}

inline void repro_trajectories(const ReproOptions & o, CommandResult & res, std::size_t max_k, bool zigzag)
{
    const SuiteRuns runs = train_suite(suite_for(o));
    std::vector<AngleTrajectory> k1, higher;
    json per_run = json::array();
    double worst_rho = -1.0;
    std::size_t reversals = 0;
    for (std::size_t i = 0; i < runs.runs.size(); ++i) {
        const ConvergenceOutcome c = convergence(runs.runs[i], runs.dataset, runs.labels[i], max_k);
        worst_rho = std::max(worst_rho, c.rho.rho);
        reversals += c.first_epoch_reversals;
        json j = {{"label", c.label},
                  {"run_id", runs.runs[i].run_id},
                  {"k1_epoch_spearman", detail::spearman_json(c.rho)},
                  {"first_epoch_reversals", c.first_epoch_reversals},
                  {"first_epoch_max_degrees", c.first_epoch_max_degrees}};
        json hk = json::array();
        for (std::size_t h = 0; h < c.higher.size(); ++h)
            hk.push_back({{"k", h + 2},
                          {"epoch_spearman", c.higher_rho[h] ? detail::spearman_json(*c.higher_rho[h]) : json(nullptr)},
                          {"flagged_points", c.higher[h].flagged()}});
        j["higher_k"] = hk;
        per_run.push_back(j);
        k1.push_back(c.k1);
        for (const auto & t : c.higher)
            higher.push_back(t);
    }
    if (zigzag) {
        std::vector<AngleTrajectory> first;
        for (const auto & t : k1) {
            AngleTrajectory f = t;
            f.points = t.first_epoch_points();
            first.push_back(std::move(f));
        }
        emit_report(std::span<const AngleTrajectory>(first), o.out / "first_epoch.csv", ReportFormat::csv);
        emit_report(std::span<const AngleTrajectory>(first), o.out / "first_epoch.json", ReportFormat::json);
        res.artifacts.push_back(o.out / "first_epoch.csv");
        res.artifacts.push_back(o.out / "first_epoch.json");
    }
    for (const char * ext : {"csv", "json", "svg"}) {
        const fs::path p = o.out / (std::string("trajectories_k1.") + ext);
        emit_report(std::span<const AngleTrajectory>(k1), p, report_format_from_string(ext));
        res.artifacts.push_back(p);
        if (!higher.empty()) {
            const fs::path q = o.out / (std::string("trajectories_k2_") + std::to_string(max_k) + "." + ext);
            emit_report(std::span<const AngleTrajectory>(higher), q, report_format_from_string(ext));
            res.artifacts.push_back(q);
        }
    }
    detail::write_json(o.out / "summary.json",
                       {{"preset", o.preset}, {"runs", per_run}, {"worst_k1_rho", worst_rho},
                        {"first_epoch_reversals_total", reversals}},
                       res);
    res.summary = "runs=" + std::to_string(k1.size()) + " worst_k1_rho=" + fixed(worst_rho, 3) +
                  " first_epoch_reversals=" + std::to_string(reversals);
}

inline void repro_h3(const ReproOptions & o, CommandResult & res)
{
    HyperGridConfig cfg = default_hyper_grid();
    if (o.epochs)
        cfg.epoch_budgets = {1, *o.epochs};
    const HyperGridOutcome h = run_hyper_grid(cfg);
    std::string table = "label,run_id,init_degrees,final_degrees,train_accuracy,test_accuracy,gap\n";
    for (const auto & r : h.runs)
        table += r.label + "," + r.run.run_id + "," + short_num(r.init_degrees) + "," + short_num(r.final_degrees) +
                 "," + short_num(r.train_accuracy) + "," + short_num(r.test_accuracy) + "," +
                 short_num(r.train_accuracy - r.test_accuracy) + "\n";
    write_file_atomic(o.out / "grid_runs.csv", table);
    res.artifacts.push_back(o.out / "grid_runs.csv");
    for (const char * ext : {"csv", "json", "svg"})
        detail::emit(h.angle_vs_test, o.out / (std::string("angle_vs_test.") + ext), std::nullopt, res);
    detail::emit(h.gap, o.out / "gap_report.json", std::nullopt, res);
    detail::emit(h.gap, o.out / "gap_report.csv", std::nullopt, res);
    detail::write_json(o.out / "summary.json",
                       {{"preset", "h3-correlation"},
                        {"spearman_rho", h.angle_vs_test.spearman_rho},
                        {"spearman_p", h.angle_vs_test.spearman_p},
                        {"init_above_final", h.decreased},
                        {"runs", h.runs.size()},
                        {"mi_scores", h.gap.mi_scores},
                        {"angle_shuffle_null_p95", h.angle_null_p95}},
                       res);
    res.summary = "rho=" + fixed(h.angle_vs_test.spearman_rho, 3) + " p=" + short_num(h.angle_vs_test.spearman_p) +
                  " init>final=" + std::to_string(h.decreased) + "/" + std::to_string(h.runs.size()) +
                  " mi_angle=" + fixed(h.gap.mi_scores.at("p_vector_angle"), 3) +
                  " null_p95=" + fixed(h.angle_null_p95, 3);
}

//
// dispatch
//

inline int exit_code_for(const std::exception & e)
{
    if (dynamic_cast<const NumericalError *>(&e))
        return numerical;
    if (dynamic_cast<const IoError *>(&e) || dynamic_cast<const fs::filesystem_error *>(&e) ||
        dynamic_cast<const json::exception *>(&e))
        return io;
    return validation;
}

/// Parses and runs one subcommand. Diagnostics go to `err`, the summary line
/// to `out`.
inline CommandResult dispatch(std::vector<std::string> args, std::ostream & out = std::cout,
                              std::ostream & err = std::cerr)
{
    CommandResult res;
    CLI::App app{"P-vector subspace analysis toolkit", "subspectra"};
    app.require_subcommand(1);
    app.failure_message(CLI::FailureMessage::help);

    std::optional<std::string> format;
    fs::path out_path, in_path, data_path, run_path, a_path, b_path, test_path;
    std::optional<fs::path> labels_path;
    std::uint64_t seed = 1;
    std::string method = "exact", split = "train", kind = "mlp_classifier", checkpoint_sel = "final";
    std::size_t k = 1, bins = 50, mi_bins = 0, oversample = 10, power_iters = 2;
    std::optional<std::size_t> epoch, iteration, layer;
    double weight = default_aggregation_weight;
    std::vector<fs::path> run_paths;

    // gen-data
    std::size_t n = 2000, d = 32, classes = 4;
    double spread = 3.0;
    auto * gen = app.add_subcommand("gen-data", "Generate a Gaussian-mixture dataset directory");
    gen->add_option("--out", out_path, "Output directory")->required();
    gen->add_option("--seed", seed);
    gen->add_option("--n", n, "Samples");
    gen->add_option("--d", d, "Dimensions");
    gen->add_option("--classes", classes, "Number of classes K");
    gen->add_option("--spread", spread, "Radius of the class-mean sphere");
    gen->add_option("--split", split)->check(CLI::IsMember({"train", "test"}));

    // train
    ModelSpec spec;
    TrainConfig cfg;
    bool no_bias = false;
    std::vector<std::size_t> widths{64, 32};
    auto * tr = app.add_subcommand("train", "Train a toy model and store its run");
    tr->add_option("--data", data_path, "Dataset directory or FMAT file")->required();
    tr->add_option("--labels", labels_path);
    tr->add_option("--out", out_path, "Runs root directory")->required();
    tr->add_option("--kind", kind)->check(CLI::IsMember({"mlp_classifier", "autoencoder", "denoise_autoencoder",
                                                          "contrastive"}));
    tr->add_option("--widths", widths, "Hidden widths, comma separated")->delimiter(',');
    tr->add_option("--feature-layer", spec.feature_layer);
    tr->add_option("--projection-dim", spec.projection_dim);
    tr->add_flag("--no-bias", no_bias);
    tr->add_option("--epochs", cfg.epochs);
    tr->add_option("--batch", cfg.batch_size);
    tr->add_option("--lr", cfg.learning_rate);
    tr->add_option("--momentum", cfg.momentum);
    tr->add_option("--weight-decay", cfg.weight_decay);
    tr->add_option("--denoise-sigma", cfg.denoise_sigma);
    tr->add_option("--temperature", cfg.contrastive_temperature);
    tr->add_option("--seed", cfg.seed);

    // extract
    auto * ex = app.add_subcommand("extract", "Extract features of a stored checkpoint to FMAT");
    ex->add_option("--run", run_path)->required();
    ex->add_option("--data", data_path)->required();
    ex->add_option("--labels", labels_path);
    ex->add_option("--epoch", epoch);
    ex->add_option("--iteration", iteration);
    ex->add_option("--layer", layer);
    ex->add_option("--out", out_path)->required();

    // pvector
    bool centered = false;
    auto * pv = app.add_subcommand("pvector", "Top left singular vector of a feature matrix");
    pv->add_option("--in", in_path)->required();
    pv->add_option("--method", method)->check(CLI::IsMember({"exact", "randomized"}));
    pv->add_option("--seed", seed);
    pv->add_flag("--centered", centered, "Subtract column means first");
    pv->add_option("--out", out_path)->required();

    // angle
    auto * an = app.add_subcommand("angle", "Angle between two P-vectors");
    an->add_option("--a", a_path)->required();
    an->add_option("--b", b_path)->required();
    an->add_option("--out", out_path);

    // grid
    auto * gr = app.add_subcommand("grid", "Cosine grid across runs sharing a dataset");
    gr->add_option("--runs", run_paths)->required();
    gr->add_option("--data", data_path)->required();
    gr->add_option("--labels", labels_path);
    gr->add_option("--checkpoint", checkpoint_sel)->check(CLI::IsMember({"final", "init"}));
    gr->add_option("--out", out_path)->required();
    gr->add_option("--format", format);

    // trajectory
    auto * tj = app.add_subcommand("trajectory", "Angle of every checkpoint to a reference checkpoint");
    tj->add_option("--run", run_path)->required();
    tj->add_option("--data", data_path)->required();
    tj->add_option("--labels", labels_path);
    tj->add_option("--k", k);
    tj->add_option("--epoch", epoch, "Reference epoch (default: final)");
    tj->add_option("--iteration", iteration);
    tj->add_option("--out", out_path)->required();
    tj->add_option("--format", format);

    // data-angle
    auto * da = app.add_subcommand("data-angle", "Model-data angle at every checkpoint");
    da->add_option("--run", run_path)->required();
    da->add_option("--data", data_path)->required();
    da->add_option("--labels", labels_path);
    da->add_option("--out", out_path)->required();
    da->add_option("--format", format);

    // per-layer
    auto * pl = app.add_subcommand("per-layer", "Angle of each hidden layer to the data P-vector");
    pl->add_option("--run", run_path)->required();
    pl->add_option("--data", data_path)->required();
    pl->add_option("--labels", labels_path);
    pl->add_option("--epoch", epoch);
    pl->add_option("--iteration", iteration);
    pl->add_option("--out", out_path)->required();
    pl->add_option("--format", format);

    // spectrum
    std::size_t k_max = 10;
    auto * sp = app.add_subcommand("spectrum", "Singular values, explained variance, reconstruction error");
    sp->add_option("--in", in_path)->required();
    sp->add_option("--k", k_max);
    sp->add_option("--out", out_path)->required();
    sp->add_option("--format", format);

    // histogram
    std::optional<double> bandwidth;
    bool no_smooth = false;
    auto * hi = app.add_subcommand("histogram", "Value histogram of a P-vector");
    hi->add_option("--in", in_path, "P-vector JSON")->required();
    hi->add_option("--bins", bins);
    hi->add_option("--bandwidth", bandwidth);
    hi->add_flag("--no-smooth", no_smooth);
    hi->add_option("--out", out_path)->required();
    hi->add_option("--format", format);

    // correlate
    std::string x_col, y_col;
    bool log_log = false;
    auto * co = app.add_subcommand("correlate", "Spearman and Pearson between two CSV columns");
    co->add_option("--in", in_path)->required();
    co->add_option("--x", x_col)->required();
    co->add_option("--y", y_col)->required();
    co->add_flag("--log-log", log_log);
    co->add_option("--out", out_path)->required();
    co->add_option("--format", format);

    // predict-gap
    auto * pg = app.add_subcommand("predict-gap", "Score generalization measures against observed gaps");
    pg->add_option("--runs", run_paths)->required();
    pg->add_option("--train-data", data_path)->required();
    pg->add_option("--test-data", test_path);
    pg->add_option("--weight", weight);
    pg->add_option("--bins", mi_bins, "MI bins (0 = floor(sqrt(n)))");
    pg->add_option("--seed", seed);
    pg->add_option("--out", out_path)->required();
    pg->add_option("--format", format);

    // svd-bench
    std::size_t rows = 20000, cols = 256, repeats = 3;
    auto * sb = app.add_subcommand("svd-bench", "Time exact vs randomized top-k SVD");
    sb->add_option("--rows", rows);
    sb->add_option("--cols", cols);
    sb->add_option("--k", k);
    sb->add_option("--seed", seed);
    sb->add_option("--oversample", oversample);
    sb->add_option("--power-iters", power_iters);
    sb->add_option("--repeats", repeats, "Best-of-N timing");
    sb->add_option("--out", out_path);

    // repro
    ReproOptions ro;
    auto * rp = app.add_subcommand("repro", "Run an experiment preset");
    rp->add_option("preset", ro.preset)
        ->required()
        ->check(CLI::IsMember({"h1-grid", "h2-trajectories", "h3-correlation", "epoch0-zigzag", "topk-noconverge"}));
    rp->add_option("--out", ro.out)->required();
    rp->add_option("--seeds", ro.seeds, "Use seeds 1..N (default 5)");
    rp->add_option("--epochs", ro.epochs, "Override the epoch budget");

    std::reverse(args.begin(), args.end());
    try {
        app.parse(args);
    } catch (const CLI::ParseError & e) {
        const int rc = app.exit(e, out, err);
        res.exit_code = rc == 0 ? ok : validation;
        return res;
    }

    try {
        const auto dataset = [&](const fs::path & p) { return load_dataset(p, labels_path); };
        const auto runs_from = [&](const std::vector<fs::path> & paths) {
            std::vector<TrainedRun> v;
            for (const auto & p : paths)
                v.push_back(load_run(p));
            return v;
        };

        if (*gen) {
            const ToyDataset ds = gen_gaussian_mixture(seed, n, d, classes, spread, split_from_string(split));
            json meta = {{"dataset_id", ds.dataset_id},
                         {"split", split},
                         {"generator",
                          {{"name", "gaussian_mixture"}, {"seed", seed}, {"n", n}, {"d", d}, {"K", classes},
                           {"spread", spread}}}};
            write_fmat(ds.X, meta, out_path / "data.fmat");
            write_labels_file(*ds.labels, out_path / "labels.txt");
            res.artifacts = {out_path / "data.fmat", out_path / "labels.txt"};
            res.summary = "dataset_id=" + ds.dataset_id + " rows=" + std::to_string(n) + " cols=" +
                          std::to_string(d) + " classes=" + std::to_string(classes) + " split=" + split;
        } else if (*tr) {
            const ToyDataset ds = dataset(data_path);
            spec.kind = model_kind_from_string(kind);
            spec.layer_widths = widths;
            spec.bias = !no_bias;
            const TrainedRun run = train(ds, spec, cfg);
            const fs::path dir = save_run(run, out_path);
            res.artifacts.push_back(dir / "manifest.json");
            if (run.status != RunStatus::completed)
                throw NumericalError("run " + run.run_id + " diverged: " + run.diagnostic +
                                     " (partial checkpoints kept in " + dir.string() + ")");
            res.summary = "run_id=" + run.run_id + " status=completed epochs=" + std::to_string(cfg.epochs) +
                          " final_loss=" + short_num(run.epoch_losses.back()) +
                          (run.train_accuracy.empty() ? std::string()
                                                      : " train_accuracy=" + fixed(run.train_accuracy.back(), 4));
        } else if (*ex) {
            const TrainedRun run = load_run(run_path);
            const ToyDataset ds = dataset(data_path);
            const FeatureMatrix f = extract_features(run.spec, find_checkpoint(run, epoch, iteration), ds, layer);
            write_fmat(f, out_path);
            res.artifacts.push_back(out_path);
            res.summary = "rows=" + std::to_string(f.samples()) + " cols=" + std::to_string(f.features()) +
                          " layer=" + std::to_string(f.source.layer.value_or(0));
        } else if (*pv) {
            const PVector p = pvector(read_fmat(in_path), method_from_string(method), seed, centered);
            write_pvector(p, out_path);
            res.artifacts.push_back(out_path);
            res.summary = "sigma1=" + short_num(p.sigma1) + " method=" + method +
                          " degenerate=" + (p.degenerate ? "1" : "0") + " trivial=" + (p.trivial ? "1" : "0");
        } else if (*an) {
            const Angle a = angle_between(read_pvector(a_path), read_pvector(b_path));
            if (!out_path.empty())
                detail::write_json(out_path,
                                   {{"cosine_abs", a.cosine_abs}, {"degrees", a.degrees},
                                    {"cosine_signed", a.cosine_signed}},
                                   res);
            res.summary = "cosine=" + fixed(a.cosine_abs, 6) + " degrees=" + fixed(a.degrees, 2);
        } else if (*gr) {
            const auto runs = runs_from(run_paths);
            const ToyDataset ds = dataset(data_path);
            const auto ptrs = detail::pointers(runs);
            std::vector<std::string> labels;
            for (const auto & r : runs)
                labels.push_back(r.run_id);
            const DenseMatrix g = angle_grid(pvectors_at(ptrs, ds, checkpoint_sel == "init"));
            detail::emit(GridReport{labels, g}, out_path, format, res);
            const auto off = off_diagonal(g);
            res.summary = "runs=" + std::to_string(runs.size()) + (off.empty() ? std::string() :
                          " mean_cosine=" + fixed(std::accumulate(off.begin(), off.end(), 0.0) /
                                                      static_cast<double>(off.size()), 4) +
                          " min_cosine=" + fixed(*std::min_element(off.begin(), off.end()), 4));
        } else if (*tj) {
            const TrainedRun run = load_run(run_path);
            const ToyDataset ds = dataset(data_path);
            const AngleTrajectory t = (epoch || iteration)
                                          ? trajectory(run, find_checkpoint(run, epoch, iteration), ds, k)
                                          : trajectory(run, ds, k);
            detail::emit(t, out_path, format, res);
            res.summary = "points=" + std::to_string(t.points.size()) + " first=" +
                          fixed(t.points.front().degrees, 2) + " last=" + fixed(t.points.back().degrees, 2) +
                          " flagged=" + std::to_string(t.flagged()) + " gaps=" + std::to_string(t.gaps.size());
        } else if (*da) {
            const TrainedRun run = load_run(run_path);
            const ToyDataset ds = dataset(data_path);
            const AngleTrajectory t = model_data_angle(run, ds);
            detail::emit(t, out_path, format, res);
            res.summary = "init=" + fixed(t.points.front().degrees, 2) + " final=" +
                          fixed(t.points.back().degrees, 2) + " split=" + to_string(ds.split);
        } else if (*pl) {
            const TrainedRun run = load_run(run_path);
            const ToyDataset ds = dataset(data_path);
            const auto layers = per_layer_angles(run.spec, find_checkpoint(run, epoch, iteration), ds);
            const ReportFormat f = report_format_for(out_path, format);
            if (f == ReportFormat::svg)
                throw ValidationError("per-layer reports have no SVG form; use csv or json");
            if (f == ReportFormat::csv) {
                std::string s = "layer,degrees,cosine_abs,degenerate\n";
                for (const auto & l : layers)
                    s += std::to_string(l.layer) + "," + short_num(l.degrees) + "," + short_num(l.cosine_abs) + "," +
                         (l.degenerate ? "1" : "0") + "\n";
                write_file_atomic(out_path, s);
                res.artifacts.push_back(out_path);
            } else {
                json a = json::array();
                for (const auto & l : layers)
                    a.push_back({{"layer", l.layer}, {"degrees", l.degrees}, {"cosine_abs", l.cosine_abs},
                                 {"degenerate", l.degenerate}});
                detail::write_json(out_path, a, res);
            }
            std::string s;
            for (const auto & l : layers)
                s += (s.empty() ? "" : " ") + std::string("L") + std::to_string(l.layer) + "=" + fixed(l.degrees, 2);
            res.summary = s;
        } else if (*sp) {
            const SpectrumSummary s = spectrum_summary(read_fmat(in_path), k_max);
            detail::emit(s, out_path, format, res);
            res.summary = "k=" + std::to_string(s.singular_values.size()) + " sigma1=" +
                          short_num(s.singular_values.front()) + " ratio1=" + fixed(s.explained_variance_ratios.front(), 4) +
                          " method=" + to_string(s.method);
        } else if (*hi) {
            const Histogram h = value_histogram(read_pvector(in_path), bins, bandwidth, !no_smooth);
            detail::emit(h, out_path, format, res);
            res.summary = "bins=" + std::to_string(h.counts.size()) +
                          (h.bandwidth ? " bandwidth=" + short_num(*h.bandwidth) : std::string()) +
                          (h.warning.empty() ? std::string() : " warning=" + h.warning);
        } else if (*co) {
            auto cols_read = read_numeric_csv(in_path);
            for (const auto & c : {x_col, y_col})
                if (!cols_read.count(c))
                    throw ValidationError("column '" + c + "' not found in " + in_path.string());
            std::vector<double> x, y;
            std::size_t dropped = 0;
            for (std::size_t i = 0; i < cols_read[x_col].size(); ++i) {
                const double xv = cols_read[x_col][i], yv = cols_read[y_col][i];
                if (std::isfinite(xv) && std::isfinite(yv)) {
                    x.push_back(xv);
                    y.push_back(yv);
                } else {
                    ++dropped;
                }
            }
            const CorrelationReport r = correlate(x_col, x, y_col, y, log_log, "across-runs", dropped);
            detail::emit(r, out_path, format, res);
            res.summary = "spearman_rho=" + fixed(r.spearman_rho, 4) + " p=" + short_num(r.spearman_p) + " (" +
                          r.p_method + ") pearson_r=" + fixed(r.pearson_r, 4) + " n=" + std::to_string(r.n) +
                          (dropped ? " dropped=" + std::to_string(dropped) : std::string());
        } else if (*pg) {
            const auto runs = runs_from(run_paths);
            const ToyDataset train_ds = dataset(data_path);
            std::optional<ToyDataset> test_ds;
            if (!test_path.empty())
                test_ds = dataset(test_path);
            GapPipelineOptions opt;
            opt.seed = seed;
            opt.weight = weight;
            opt.bins = mi_bins;
            const auto ptrs = detail::pointers(runs);
            const GapPredictionReport r = predict_gap(ptrs, train_ds, test_ds ? &*test_ds : nullptr, opt);
            detail::emit(r, out_path, format, res);
            std::string s = "models=" + std::to_string(r.rows.size());
            for (const auto & [name, mi] : r.mi_scores)
                s += " mi_" + name + "=" + fixed(mi, 4);
            res.summary = s;
        } else if (*sb) {
            const BenchResult b = svd_bench(rows, cols, k, seed, oversample, power_iters, repeats);
            if (!out_path.empty())
                detail::write_json(out_path,
                                   {{"rows", rows}, {"cols", cols}, {"k", k}, {"seed", seed},
                                    {"oversample", oversample}, {"power_iters", power_iters}, {"repeats", repeats},
                                    {"exact_seconds", b.exact_seconds}, {"randomized_seconds", b.randomized_seconds},
                                    {"speedup", b.speedup()}, {"cosine_abs", b.cosine_abs},
                                    {"sigma1_rel_error", b.sigma1_rel_error}},
                                   res);
            res.summary = "exact=" + fixed(b.exact_seconds, 3) + "s randomized=" + fixed(b.randomized_seconds, 3) +
                          "s speedup=" + fixed(b.speedup(), 1) + "x cosine=" + fixed(b.cosine_abs, 6);
        } else if (*rp) {
            if (ro.preset == "h1-grid")
                repro_h1(ro, res);
            else if (ro.preset == "h2-trajectories")
                repro_trajectories(ro, res, 1, false);
            else if (ro.preset == "epoch0-zigzag")
                repro_trajectories(ro, res, 1, true);
            else if (ro.preset == "topk-noconverge")
                repro_trajectories(ro, res, 6, false);
            else
                repro_h3(ro, res);
            res.summary = ro.preset + ": " + res.summary;
        }
    } catch (const std::exception & e) {
        res.exit_code = exit_code_for(e);
        res.summary.clear();
        err << "error: " << e.what() << "\n";
        return res;
    }
    out << res.summary << "\n";
    return res;
}

inline int run_main(int argc, char ** argv)
{
    std::vector<std::string> args(argv + 1, argv + argc);
    return dispatch(std::move(args)).exit_code;
}

} // namespace subspectra::cli
