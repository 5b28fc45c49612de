#pragma once

// Toy-scale experiment presets shared by `subspectra repro` and the
// acceptance binary.

#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "analysis.hpp"
#include "toynets.hpp"

namespace subspectra {

struct DatasetRecipe
{
    std::uint64_t seed = 1;
    std::size_t n = 2000;
    std::size_t d = 32;
    std::size_t k = 4;
    double spread = 3.0;

    ToyDataset make(Split split = Split::train) const { return gen_gaussian_mixture(seed, n, d, k, spread, split); }
};

struct SuiteMember
{
    std::string name;
    ModelSpec spec;
    TrainConfig config;
};

/// Run of `m` for suite seed `s`. Members get distinct streams so equal
/// first-layer shapes do not share initial weights.
inline TrainConfig member_config(const SuiteMember & m, std::size_t member_index, std::uint64_t s)
{
    TrainConfig c = m.config;
    c.seed = derive_seed(s, member_index);
    return c;
}

//
// five-model suite (MLP-w64, MLP-w128, AE, DAE, contrastive)
//

struct SuiteConfig
{
    DatasetRecipe data;
    std::vector<SuiteMember> members;
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
};

inline SuiteConfig default_suite()
{
    SuiteConfig s;
    TrainConfig base;
    base.epochs = 30;
    base.weight_decay = 5e-3;
    base.per_iteration_in_epoch0 = true;
    const auto member = [&](std::string name, ModelKind kind, std::vector<std::size_t> widths, double lr) {
        SuiteMember m;
        m.name = std::move(name);
        m.spec.kind = kind;
        m.spec.layer_widths = std::move(widths);
        m.config = base;
        m.config.learning_rate = lr;
        return m;
    };
    s.members = {member("mlp-w64", ModelKind::mlp_classifier, {64, 128}, 0.02),
                 member("mlp-w128", ModelKind::mlp_classifier, {128, 128}, 0.02),
                 member("ae", ModelKind::autoencoder, {64, 128}, 0.05),
                 member("dae", ModelKind::denoise_autoencoder, {64, 128}, 0.05),
                 member("contrastive", ModelKind::contrastive, {64, 128}, 0.05)};
    return s;
}

struct SuiteRuns
{
    ToyDataset dataset;
    /// runs[seed_index * members + member_index]
    std::vector<TrainedRun> runs;
    std::vector<std::string> labels;
    std::size_t members = 0;

    std::vector<const TrainedRun *> pointers() const
    {
        std::vector<const TrainedRun *> out;
        for (const auto & r : runs)
            out.push_back(&r);
        return out;
    }
};

/// Trains every (seed, member) pair. Diverged runs raise NumericalError.
inline SuiteRuns train_suite(const SuiteConfig & cfg)
{
    SuiteRuns s{.dataset = cfg.data.make(), .runs = {}, .labels = {}, .members = cfg.members.size()};
    for (std::uint64_t seed : cfg.seeds)
        for (std::size_t m = 0; m < cfg.members.size(); ++m) {
            TrainedRun r = train(s.dataset, cfg.members[m].spec, member_config(cfg.members[m], m, seed));
            if (r.status != RunStatus::completed)
                throw NumericalError("suite run " + cfg.members[m].name + " seed " + std::to_string(seed) +
                                     " diverged: " + r.diagnostic);
            s.labels.push_back(cfg.members[m].name + "/s" + std::to_string(seed));
            s.runs.push_back(std::move(r));
        }
    return s;
}

struct GridOutcome
{
    DenseMatrix trained;
    DenseMatrix initial;
    /// Member × member cosines averaged over seeds; each (seed, seed') pair
    /// of distinct runs contributes.
    DenseMatrix seed_averaged;
    BaselineSummary baseline;
    BaselineSummary trained_summary;
    /// min trained off-diagonal cosine > baseline p99
    bool all_above_p99 = false;
    /// mean trained cosine > baseline mean + 5 sd
    bool mean_above_5sd = false;
};

inline GridOutcome grid_outcome(const SuiteRuns & s)
{
    const auto ptrs = s.pointers();
    const std::size_t m = s.members;
    GridOutcome g{.trained = angle_grid(pvectors_at(ptrs, s.dataset, false)),
                  .initial = angle_grid(pvectors_at(ptrs, s.dataset, true)),
                  .seed_averaged = DenseMatrix(m, m),
                  .baseline = {},
                  .trained_summary = {}};
    g.baseline = summarize_cosines(off_diagonal(g.initial));
    g.trained_summary = summarize_cosines(off_diagonal(g.trained));
    DenseMatrix counts(m, m);
    for (std::size_t i = 0; i < g.trained.rows(); ++i)
        for (std::size_t j = 0; j < g.trained.cols(); ++j)
            if (i != j) {
                g.seed_averaged(i % m, j % m) += g.trained(i, j);
                counts(i % m, j % m) += 1.0;
            }
    for (std::size_t a = 0; a < m; ++a)
        for (std::size_t b = 0; b < m; ++b)
            g.seed_averaged(a, b) = counts(a, b) > 0 ? g.seed_averaged(a, b) / counts(a, b) : 1.0;
    const auto & tc = g.trained_summary.cosines;
    g.all_above_p99 = *std::min_element(tc.begin(), tc.end()) > g.baseline.p99;
    g.mean_above_5sd = g.trained_summary.mean > g.baseline.mean + 5.0 * g.baseline.stddev;
    return g;
}

//
// convergence trajectories
//

struct ConvergenceOutcome
{
    std::string label;
    AngleTrajectory k1;
    /// Spearman(epoch, angle-to-final) over epochs >= 1.
    SpearmanResult rho;
    /// Direction changes in the first-epoch per-iteration angles.
    std::size_t first_epoch_reversals = 0;
    double first_epoch_max_degrees = 0.0;
    /// k = 2.. trajectories, reported only.
    std::vector<AngleTrajectory> higher;
    std::vector<std::optional<SpearmanResult>> higher_rho;
};

inline std::optional<SpearmanResult> epoch_spearman(const AngleTrajectory & t)
{
    std::vector<double> e, a;
    for (const auto & p : t.epoch_points())
        if (p.epoch >= 1) {
            e.push_back(static_cast<double>(p.epoch));
            a.push_back(p.degrees);
        }
    if (e.size() < 3)
        return std::nullopt;
    try {
        return spearman(e, a);
    } catch (const NumericalError &) {
        return std::nullopt;
    }
}

inline std::size_t direction_reversals(const std::vector<TrajectoryPoint> & pts)
{
    std::size_t n = 0;
    int prev = 0;
    for (std::size_t i = 1; i < pts.size(); ++i) {
        const double d = pts[i].degrees - pts[i - 1].degrees;
        const int s = d > 0 ? 1 : (d < 0 ? -1 : 0);
        if (s != 0 && prev != 0 && s != prev)
            ++n;
        if (s != 0)
            prev = s;
    }
    return n;
}

inline ConvergenceOutcome convergence(const TrainedRun & run, const ToyDataset & ds, std::string label,
                                      std::size_t max_k = 1)
{
    ConvergenceOutcome c;
    c.label = std::move(label);
    c.k1 = trajectory(run, ds, 1);
    const auto rho = epoch_spearman(c.k1);
    if (!rho)
        throw NumericalError("run " + run.run_id + ": angle-to-final is constant over epochs");
    c.rho = *rho;
    const auto first = c.k1.first_epoch_points();
    c.first_epoch_reversals = direction_reversals(first);
    for (const auto & p : first)
        c.first_epoch_max_degrees = std::max(c.first_epoch_max_degrees, p.degrees);
    for (std::size_t k = 2; k <= max_k; ++k) {
        c.higher.push_back(trajectory(run, ds, k));
        c.higher_rho.push_back(epoch_spearman(c.higher.back()));
    }
    return c;
}

//
// hyperparameter grid for model-data angles and gap prediction
//

struct HyperGridConfig
{
    DatasetRecipe data;
    ModelKind kind = ModelKind::mlp_classifier;
    std::vector<std::vector<std::size_t>> widths;
    std::vector<double> learning_rates;
    std::vector<std::size_t> epoch_budgets;
    TrainConfig base;
    std::uint64_t seed = 1;
    GapPipelineOptions gap;
    std::size_t shuffles = 200;
};

inline HyperGridConfig default_hyper_grid()
{
    HyperGridConfig g;
    g.data.spread = 3.0;
    g.widths = {{8, 8}, {32, 32}, {128, 128}};
    g.learning_rates = {0.005, 0.05};
    g.epoch_budgets = {1, 30};
    g.base.weight_decay = 5e-4;
    g.base.per_iteration_in_epoch0 = false;
    return g;
}

struct HyperRun
{
    std::string label;
    TrainedRun run;
    double init_degrees = 0.0;
    double final_degrees = 0.0;
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;
};

struct HyperGridOutcome
{
    ToyDataset train_ds;
    ToyDataset test_ds;
    std::vector<HyperRun> runs;
    CorrelationReport angle_vs_test;
    std::size_t decreased = 0;
    GapPredictionReport gap;
    std::vector<double> angle_null;
    double angle_null_p95 = 0.0;
};

inline HyperGridOutcome run_hyper_grid(const HyperGridConfig & cfg)
{
    HyperGridOutcome o{.train_ds = cfg.data.make(Split::train), .test_ds = cfg.data.make(Split::test),
                       .runs = {},
                       .angle_vs_test = {},
                       .gap = {},
                       .angle_null = {}};
    std::size_t index = 0;
    for (const auto & w : cfg.widths)
        for (double lr : cfg.learning_rates)
            for (std::size_t ep : cfg.epoch_budgets) {
                ModelSpec spec;
                spec.kind = cfg.kind;
                spec.layer_widths = w;
                TrainConfig c = cfg.base;
                c.learning_rate = lr;
                c.epochs = ep;
                c.seed = derive_seed(cfg.seed, index++);
                HyperRun h;
                h.run = train(o.train_ds, spec, c);
                std::string ws;
                for (std::size_t x : w)
                    ws += (ws.empty() ? "" : "x") + std::to_string(x);
                char lrs[32];
                std::snprintf(lrs, sizeof lrs, "%g", lr);
                h.label = "w" + ws + "/lr" + lrs + "/e" + std::to_string(ep);
                if (h.run.status != RunStatus::completed)
                    throw NumericalError("grid run " + h.label + " diverged: " + h.run.diagnostic);
                o.runs.push_back(std::move(h));
            }
    std::vector<const TrainedRun *> ptrs;
    for (const auto & h : o.runs)
        ptrs.push_back(&h.run);
    detail::parallel_for(o.runs.size(), [&](std::size_t i) {
        HyperRun & h = o.runs[i];
        const auto t = model_data_angle(h.run, o.train_ds);
        h.init_degrees = t.points.front().degrees;
        h.final_degrees = t.points.back().degrees;
        const Checkpoint & fin = h.run.well_trained();
        h.train_accuracy = evaluate_accuracy(h.run.spec, fin, o.train_ds);
        h.test_accuracy = evaluate_accuracy(h.run.spec, fin, o.test_ds);
    });
    std::vector<double> angle, acc;
    for (const auto & h : o.runs) {
        angle.push_back(h.final_degrees);
        acc.push_back(h.test_accuracy);
        o.decreased += h.init_degrees > h.final_degrees ? 1 : 0;
    }
    o.angle_vs_test = correlate("model_data_degrees", angle, "test_accuracy", acc);
    o.gap = predict_gap(ptrs, o.train_ds, &o.test_ds, cfg.gap);
    std::vector<double> oriented, gaps;
    for (const auto & row : o.gap.rows) {
        oriented.push_back(-row.measures.at("p_vector_angle"));
        gaps.push_back(*row.gap);
    }
    o.angle_null = mi_shuffle_null(oriented, gaps, o.gap.mi_bins, cfg.shuffles, derive_seed(cfg.seed, 0x5eed));
    o.angle_null_p95 = quantile(o.angle_null, 0.95);
    return o;
}

} // namespace subspectra
