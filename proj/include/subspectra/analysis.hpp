#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "error.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "subspace.hpp"
#include "toynets.hpp"

namespace subspectra {

//
// angle grids
//

namespace detail {

inline void require_shared_dataset(std::span<const TrainedRun * const> runs)
{
    require(!runs.empty(), "no runs given");
    for (const TrainedRun * r : runs)
        require(r->dataset_id == runs.front()->dataset_id, "dataset mismatch: run " + r->run_id + " trained on " +
                                                               r->dataset_id + ", run " + runs.front()->run_id +
                                                               " on " + runs.front()->dataset_id);
}

/// Runs fn(i) for i in [0, n) on the worker pool; fn writes only slot i.
template <typename Fn>
void parallel_for(std::size_t n, Fn && fn)
{
    parallel_blocks(n, std::forward<Fn>(fn));
}

} // namespace detail

/// grid[i][j] = |cos| between P-vectors; unit diagonal.
inline DenseMatrix angle_grid(std::span<const PVector> pvs)
{
    detail::require(!pvs.empty(), "angle_grid: no P-vectors");
    const std::size_t n = pvs.size();
    DenseMatrix g(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        g(i, i) = 1.0;
        for (std::size_t j = i + 1; j < n; ++j)
            g(i, j) = g(j, i) = angle_between(pvs[i], pvs[j]).cosine_abs;
    }
    return g;
}

inline std::vector<PVector> pvectors_at(std::span<const TrainedRun * const> runs, const ToyDataset & ds,
                                        bool initial)
{
    detail::require_shared_dataset(runs);
    std::vector<std::optional<PVector>> slots(runs.size());
    detail::parallel_for(runs.size(), [&](std::size_t i) {
        const Checkpoint & c = initial ? runs[i]->init() : runs[i]->well_trained();
        slots[i] = pvector(extract_features(runs[i]->spec, c, ds));
    });
    std::vector<PVector> out;
    for (auto & s : slots)
        out.push_back(std::move(*s));
    return out;
}

/// Cosine grid between well-trained P-vectors of runs sharing a dataset.
inline DenseMatrix cross_model_angle_grid(std::span<const TrainedRun * const> runs, const ToyDataset & ds)
{
    const auto pvs = pvectors_at(runs, ds, false);
    return angle_grid(pvs);
}

struct BaselineSummary
{
    std::vector<double> cosines;
    double mean = 0.0;
    double stddev = 0.0;
    double p99 = 0.0;
};

/// Linear-interpolation quantile of an unsorted sample.
inline double quantile(std::vector<double> v, double q)
{
    detail::require(!v.empty(), "quantile of an empty sample");
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline BaselineSummary summarize_cosines(std::vector<double> c)
{
    detail::require(c.size() >= 2, "baseline needs at least 2 cosines");
    BaselineSummary s;
    s.mean = std::accumulate(c.begin(), c.end(), 0.0) / static_cast<double>(c.size());
    double ss = 0.0;
    for (double x : c)
        ss += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(c.size() - 1));
    s.p99 = quantile(c, 0.99);
    s.cosines = std::move(c);
    return s;
}

inline std::vector<double> off_diagonal(const DenseMatrix & g)
{
    std::vector<double> out;
    for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = i + 1; j < g.cols(); ++j)
            out.push_back(g(i, j));
    return out;
}

/// Pairwise cosines between the random-initialization P-vectors of the runs.
inline BaselineSummary random_init_baseline(std::span<const TrainedRun * const> runs, const ToyDataset & ds)
{
    const auto pvs = pvectors_at(runs, ds, true);
    return summarize_cosines(off_diagonal(angle_grid(pvs)));
}

//
// trajectories
//

struct TrajectoryPoint
{
    std::size_t epoch = 0;
    std::optional<std::size_t> iteration;
    double degrees = 90.0;
    double cosine_abs = 0.0;
    /// Ill-defined direction (tied σ) or all-zero features.
    bool degenerate = false;
};

struct AngleTrajectory
{
    std::string run_id;
    /// "data" or "<run_id>@epoch<e>[.<i>]"
    std::string reference;
    std::vector<TrajectoryPoint> points;
    Split split = Split::train;
    std::size_t k = 1;
    /// Expected checkpoints that were not available.
    std::vector<std::string> gaps;

    std::size_t flagged() const
    {
        return static_cast<std::size_t>(
            std::count_if(points.begin(), points.end(), [](const TrajectoryPoint & p) { return p.degenerate; }));
    }

    /// Points of completed epochs (iteration unset), in epoch order.
    std::vector<TrajectoryPoint> epoch_points() const
    {
        std::vector<TrajectoryPoint> out;
        for (const auto & p : points)
            if (!p.iteration)
                out.push_back(p);
        return out;
    }

    /// First-epoch per-iteration points including the initialization.
    std::vector<TrajectoryPoint> first_epoch_points() const
    {
        std::vector<TrajectoryPoint> out;
        for (const auto & p : points)
            if (p.iteration)
                out.push_back(p);
        return out;
    }
};

inline std::string checkpoint_label(const Checkpoint & c)
{
    std::string s = c.run_id + "@epoch" + std::to_string(c.epoch);
    if (c.iteration)
        s += "." + std::to_string(*c.iteration);
    return s;
}

/// k-th left singular vector with a degeneracy flag against its neighbours.
struct SingularDirection
{
    std::vector<double> values;
    bool degenerate = false;
};

inline SingularDirection kth_direction(const FeatureMatrix & f, std::size_t k)
{
    const std::size_t mindim = std::min(f.samples(), f.features());
    detail::require(k >= 1, "k must be >= 1");
    if (f.data.max_abs() == 0.0)
        return {std::vector<double>(f.samples(), 0.0), true};
    if (k > mindim)
        return {std::vector<double>(f.samples(), 0.0), true};
    if (k == 1) {
        PVector p = pvector(f);
        return {std::move(p.values), p.degenerate};
    }
    const SvdResult s = full_svd(f.data, std::min(k + 1, mindim));
    const double s1 = s.sigma[0];
    const double below = s.sigma[k - 2] - s.sigma[k - 1];
    const double above = k < s.sigma.size() ? s.sigma[k - 1] - s.sigma[k] : s1;
    return {s.U.col(k - 1), s.degenerate[k - 1] || std::min(below, above) / s1 < pvector_degeneracy_gap};
}

namespace detail {

inline TrajectoryPoint angle_point(const Checkpoint & c, const SingularDirection & ref, const SingularDirection & d)
{
    TrajectoryPoint p;
    p.epoch = c.epoch;
    p.iteration = c.iteration;
    p.degenerate = d.degenerate || ref.degenerate;
    const double nd = norm2(d.values), nr = norm2(ref.values);
    if (nd > 0.5 && nr > 0.5) {
        const Angle a = angle_between(d.values, ref.values);
        p.degrees = a.degrees;
        p.cosine_abs = a.cosine_abs;
    }
    return p;
}

inline std::vector<std::string> missing_checkpoints(const TrainedRun & run)
{
    std::vector<std::string> gaps;
    const std::size_t last = run.status == RunStatus::completed ? run.config.epochs : 0;
    auto has = [&](std::size_t e, std::optional<std::size_t> it) {
        return std::any_of(run.checkpoints.begin(), run.checkpoints.end(),
                           [&](const Checkpoint & c) { return c.epoch == e && c.iteration == it; });
    };
    if (!has(0, 0))
        gaps.push_back("epoch 0 iteration 0");
    if (run.config.per_iteration_in_epoch0)
        for (std::size_t i = 1; i <= run.iteration_losses.size(); ++i)
            if (!has(0, i))
                gaps.push_back("epoch 0 iteration " + std::to_string(i));
    for (std::size_t e = 1; e <= last; ++e)
        if ((run.config.per_epoch || e == last) && !has(e, std::nullopt))
            gaps.push_back("epoch " + std::to_string(e));
    if (run.status != RunStatus::completed)
        gaps.push_back("run diverged: " + run.diagnostic);
    return gaps;
}

inline std::vector<const Checkpoint *> ordered_checkpoints(const TrainedRun & run)
{
    std::vector<const Checkpoint *> out;
    for (const auto & c : run.checkpoints)
        out.push_back(&c);
    std::stable_sort(out.begin(), out.end(), [](const Checkpoint * a, const Checkpoint * b) {
        // first-epoch iterations come before the per-epoch checkpoints
        const auto key = [](const Checkpoint * c) {
            return std::pair<std::size_t, std::size_t>(c->iteration ? 0 : c->epoch,
                                                       c->iteration ? *c->iteration : 0);
        };
        return key(a) < key(b);
    });
    return out;
}

inline AngleTrajectory trajectory_against(const TrainedRun & run, const ToyDataset & ds, std::size_t k,
                                   const SingularDirection & ref, std::string ref_label)
{
    AngleTrajectory t;
    t.run_id = run.run_id;
    t.reference = std::move(ref_label);
    t.split = ds.split;
    t.k = k;
    t.gaps = missing_checkpoints(run);
    const auto ckpts = ordered_checkpoints(run);
    t.points.resize(ckpts.size());
    parallel_for(ckpts.size(), [&](std::size_t i) {
        const auto f = extract_features(run.spec, *ckpts[i], ds);
        t.points[i] = angle_point(*ckpts[i], ref, kth_direction(f, k));
    });
    return t;
}

} // namespace detail

/// Angle of every stored checkpoint's k-th left singular vector to the
/// reference checkpoint's k-th vector. Checkpoints follow (epoch 0
/// iterations..., epoch 1, ..., epoch E).
inline AngleTrajectory trajectory(const TrainedRun & run, const Checkpoint & reference, const ToyDataset & ds,
                                  std::size_t k = 1)
{
    detail::require(k >= 1, "trajectory: k must be >= 1");
    const SingularDirection ref = kth_direction(extract_features(run.spec, reference, ds), k);
    return detail::trajectory_against(run, ds, k, ref, checkpoint_label(reference));
}

/// trajectory() against the run's own final checkpoint.
inline AngleTrajectory trajectory(const TrainedRun & run, const ToyDataset & ds, std::size_t k = 1)
{
    const Checkpoint & ref = run.status == RunStatus::completed ? run.well_trained() : run.checkpoints.back();
    return trajectory(run, ref, ds, k);
}

/// Per-checkpoint angle between the model P-vector and the data P-vector of ds.
inline AngleTrajectory model_data_angle(const TrainedRun & run, const ToyDataset & ds)
{
    const PVector dp = data_pvector(raw_features(ds));
    const SingularDirection ref{dp.values, dp.degenerate};
    return detail::trajectory_against(run, ds, 1, ref, "data");
}

struct LayerAngle
{
    std::size_t layer = 0;
    double degrees = 90.0;
    double cosine_abs = 0.0;
    bool degenerate = false;
};

/// Angle of every hidden layer's P-vector to the data P-vector.
inline std::vector<LayerAngle> per_layer_angles(const ModelSpec & spec, const Checkpoint & ckpt, const ToyDataset & ds)
{
    const Network net(spec);
    const PVector dp = data_pvector(raw_features(ds));
    const SingularDirection ref{dp.values, dp.degenerate};
    std::vector<LayerAngle> out(net.hidden_layers());
    detail::parallel_for(out.size(), [&](std::size_t l) {
        const auto f = extract_features(spec, ckpt, ds, l);
        const TrajectoryPoint p = detail::angle_point(ckpt, ref, kth_direction(f, 1));
        out[l] = LayerAngle{l, p.degrees, p.cosine_abs, p.degenerate};
    });
    return out;
}

//
// correlation
//

/// 1-based ranks; ties get the average of the positions they span.
inline std::vector<double> average_ranks(std::span<const double> v)
{
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]])
            ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t t = i; t <= j; ++t)
            r[order[t]] = avg;
        i = j + 1;
    }
    return r;
}

namespace detail {

inline void require_pairable(std::span<const double> x, std::span<const double> y, const char * op)
{
    require(x.size() == y.size(), std::string(op) + ": length mismatch (" + std::to_string(x.size()) + " vs " +
                                      std::to_string(y.size()) + ")");
    require(x.size() >= 3, std::string(op) + ": need at least 3 points");
    for (std::size_t i = 0; i < x.size(); ++i)
        require(std::isfinite(x[i]) && std::isfinite(y[i]), std::string(op) + ": non-finite input");
}

inline double pearson_raw(std::span<const double> x, std::span<const double> y, const char * op)
{
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0)
        throw NumericalError(std::string(op) + ": correlation undefined for constant input");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

} // namespace detail

/// Sample correlation; with log_log both variables are log-transformed first.
inline double pearson(std::span<const double> x, std::span<const double> y, bool log_log = false)
{
    detail::require_pairable(x, y, "pearson");
    if (!log_log)
        return detail::pearson_raw(x, y, "pearson");
    std::vector<double> lx(x.size()), ly(y.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        detail::require(x[i] > 0.0 && y[i] > 0.0, "pearson: log-log needs positive values");
        lx[i] = std::log(x[i]);
        ly[i] = std::log(y[i]);
    }
    return detail::pearson_raw(lx, ly, "pearson");
}

struct SpearmanResult
{
    double rho = 0.0;
    double p = 1.0;
    std::size_t n = 0;
    /// "exact-permutation" or "t-approximation"
    std::string p_method;
};

inline constexpr std::size_t spearman_exact_limit = 8;

/// Two-sided Spearman test: exact permutation p for n ≤ 8, otherwise the
/// t-approximation with n−2 degrees of freedom.
inline SpearmanResult spearman(std::span<const double> x, std::span<const double> y)
{
    detail::require_pairable(x, y, "spearman");
    const auto rx = average_ranks(x), ry = average_ranks(y);
    SpearmanResult r;
    r.n = x.size();
    r.rho = detail::pearson_raw(rx, ry, "spearman");
    if (r.n <= spearman_exact_limit) {
        r.p_method = "exact-permutation";
        std::vector<double> perm = ry;
        std::sort(perm.begin(), perm.end());
        const double target = std::abs(r.rho) - 1e-12;
        std::size_t hit = 0, total = 0;
        do {
            ++total;
            if (std::abs(detail::pearson_raw(rx, perm, "spearman")) >= target)
                ++hit;
        } while (std::next_permutation(perm.begin(), perm.end()));
        // With tied ranks every distinct arrangement stands for the same
        // number of labelled permutations, so the ratio is unchanged.
        r.p = static_cast<double>(hit) / static_cast<double>(total);
    } else {
        r.p_method = "t-approximation";
        const double df = static_cast<double>(r.n - 2);
        if (std::abs(r.rho) >= 1.0) {
            r.p = 0.0;
        } else {
            const double t = r.rho * std::sqrt(df / (1.0 - r.rho * r.rho));
            const boost::math::students_t dist(df);
            r.p = std::clamp(2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))), 0.0, 1.0);
        }
    }
    return r;
}

struct CorrelationReport
{
    std::string x_name;
    std::string y_name;
    std::vector<double> x;
    std::vector<double> y;
    double spearman_rho = 0.0;
    double spearman_p = 1.0;
    std::string p_method;
    double pearson_r = 0.0;
    std::size_t n = 0;
    bool log_log = false;
    /// "across-runs" or "across-epochs"
    std::string pooling;
    std::size_t flagged = 0;
};

inline CorrelationReport correlate(std::string x_name, std::vector<double> x, std::string y_name,
                                   std::vector<double> y, bool log_log = false, std::string pooling = "across-runs",
                                   std::size_t flagged = 0)
{
    const SpearmanResult s = spearman(x, y);
    CorrelationReport r;
    r.pearson_r = pearson(x, y, log_log);
    r.x_name = std::move(x_name);
    r.y_name = std::move(y_name);
    r.x = std::move(x);
    r.y = std::move(y);
    r.spearman_rho = s.rho;
    r.spearman_p = s.p;
    r.p_method = s.p_method;
    r.n = s.n;
    r.log_log = log_log;
    r.pooling = std::move(pooling);
    r.flagged = flagged;
    return r;
}

//
// generalization-gap measures
//

struct MeasurePoint
{
    std::string run_id;
    double value = 0.0;
    bool degenerate = false;
};

/// Degrees between each run's final P-vector and the data P-vector, on the
/// training split only. No test data is accepted.
inline std::vector<MeasurePoint> measure_angle_gap(std::span<const TrainedRun * const> runs, const ToyDataset & train_ds)
{
    detail::require(train_ds.split == Split::train, "measure_angle_gap uses the training split only");
    for (const TrainedRun * r : runs)
        detail::require(r->dataset_id == train_ds.dataset_id,
                        "run " + r->run_id + " was not trained on dataset " + train_ds.dataset_id);
    const PVector dp = data_pvector(raw_features(train_ds));
    const SingularDirection ref{dp.values, dp.degenerate};
    std::vector<MeasurePoint> out(runs.size());
    detail::parallel_for(runs.size(), [&](std::size_t i) {
        const Checkpoint & c = runs[i]->well_trained();
        const auto p = detail::angle_point(c, ref, kth_direction(extract_features(runs[i]->spec, c, train_ds), 1));
        out[i] = MeasurePoint{runs[i]->run_id, p.degrees, p.degenerate};
    });
    return out;
}

inline double pseudo_validation_accuracy(const ModelSpec & spec, const Checkpoint & ckpt, const ToyDataset & train_ds,
                                         const AugmentPolicy & policy, std::uint64_t seed)
{
    return evaluate_accuracy(spec, ckpt, augment(train_ds, policy, seed));
}

/// ‖θ_final − θ_init‖₂ over the flat parameter vector.
inline double distance_to_init(const Checkpoint & final_ckpt, const Checkpoint & init)
{
    detail::require(final_ckpt.parameters.size() == init.parameters.size(),
                    "distance_to_init: parameter counts differ (" + std::to_string(final_ckpt.parameters.size()) +
                        " vs " + std::to_string(init.parameters.size()) + "), specs do not match");
    double s = 0.0;
    for (std::size_t i = 0; i < init.parameters.size(); ++i) {
        const double d = final_ckpt.parameters[i] - init.parameters[i];
        s += d * d;
    }
    return std::sqrt(s);
}

inline double distance_to_init(const ModelSpec & a, const Checkpoint & final_ckpt, const ModelSpec & b,
                               const Checkpoint & init)
{
    detail::require(a == b, "distance_to_init: checkpoints come from different model specs");
    return distance_to_init(final_ckpt, init);
}

//
// rank aggregation and MI
//

struct AggregateRanking
{
    /// Rank 1 = highest score; ties averaged.
    std::vector<double> primary_ranks;
    std::vector<double> secondary_ranks;
    /// rank_primary + weight·rank_secondary (lower is better).
    std::vector<double> combined;
    /// Model indices, best first.
    std::vector<std::size_t> order;
};

inline constexpr double default_aggregation_weight = 0.05;

/// Scores must be oriented so that higher predicts better generalization.
/// Equal combined scores are ordered by model id (index when ids are absent).
inline AggregateRanking aggregate_ranks(std::span<const double> primary, std::span<const double> secondary,
                                        double weight = default_aggregation_weight,
                                        std::span<const std::string> ids = {})
{
    detail::require(primary.size() == secondary.size(), "aggregate_ranks: length mismatch (" +
                                                            std::to_string(primary.size()) + " vs " +
                                                            std::to_string(secondary.size()) + ")");
    detail::require(ids.empty() || ids.size() == primary.size(), "aggregate_ranks: id count mismatch");
    detail::require(std::isfinite(weight) && weight >= 0.0, "aggregate_ranks: weight must be finite and >= 0");
    const auto descending_ranks = [](std::span<const double> s) {
        std::vector<double> neg(s.size());
        for (std::size_t i = 0; i < s.size(); ++i) {
            detail::require(std::isfinite(s[i]), "aggregate_ranks: non-finite score");
            neg[i] = -s[i];
        }
        return average_ranks(neg);
    };
    AggregateRanking a;
    a.primary_ranks = descending_ranks(primary);
    a.secondary_ranks = descending_ranks(secondary);
    a.combined.resize(primary.size());
    for (std::size_t i = 0; i < primary.size(); ++i)
        a.combined[i] = a.primary_ranks[i] + weight * a.secondary_ranks[i];
    a.order.resize(primary.size());
    std::iota(a.order.begin(), a.order.end(), std::size_t{0});
    std::sort(a.order.begin(), a.order.end(), [&](std::size_t x, std::size_t y) {
        if (a.combined[x] != a.combined[y])
            return a.combined[x] < a.combined[y];
        return ids.empty() ? x < y : ids[x] < ids[y];
    });
    return a;
}

inline std::size_t default_mi_bins(std::size_t n)
{
    return std::max<std::size_t>(2, static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(n)))));
}

/// Equal-frequency bin index per element from average ranks; tied values
/// share a bin.
inline std::vector<std::size_t> equal_frequency_bins(std::span<const double> v, std::size_t bins)
{
    const auto r = average_ranks(v);
    const double n = static_cast<double>(v.size());
    std::vector<std::size_t> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i)
        out[i] = std::min(bins - 1, static_cast<std::size_t>(std::floor((r[i] - 1.0) * static_cast<double>(bins) / n)));
    return out;
}

/// Plug-in mutual information (nats) after equal-frequency discretization of
/// both variables. Unconditional: no conditioning on hyperparameter groups.
inline double mi_score(std::span<const double> measure, std::span<const double> gap, std::size_t bins = 0)
{
    detail::require(measure.size() == gap.size(), "mi_score: length mismatch");
    const std::size_t n = measure.size();
    if (bins == 0)
        bins = default_mi_bins(n);
    detail::require(bins >= 2, "mi_score: bins must be >= 2");
    detail::require(n >= bins, "mi_score: n=" + std::to_string(n) + " is smaller than bins=" + std::to_string(bins));
    const auto a = equal_frequency_bins(measure, bins), b = equal_frequency_bins(gap, bins);
    std::vector<double> joint(bins * bins, 0.0), pa(bins, 0.0), pb(bins, 0.0);
    const double w = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        joint[a[i] * bins + b[i]] += w;
        pa[a[i]] += w;
        pb[b[i]] += w;
    }
    double mi = 0.0;
    for (std::size_t i = 0; i < bins; ++i)
        for (std::size_t j = 0; j < bins; ++j) {
            const double pij = joint[i * bins + j];
            if (pij > 0.0)
                mi += pij * std::log(pij / (pa[i] * pb[j]));
        }
    return std::max(0.0, mi);
}

/// MI of `shuffles` random permutations of the measure against the gap.
inline std::vector<double> mi_shuffle_null(std::span<const double> measure, std::span<const double> gap,
                                           std::size_t bins, std::size_t shuffles, std::uint64_t seed)
{
    Rng rng(seed);
    std::vector<double> perm(measure.begin(), measure.end()), out;
    out.reserve(shuffles);
    for (std::size_t s = 0; s < shuffles; ++s) {
        rng.shuffle(std::span<double>(perm));
        out.push_back(mi_score(perm, gap, bins));
    }
    return out;
}

struct GapPredictionRow
{
    std::string model_id;
    std::map<std::string, double> measures;
    std::optional<double> gap;
    bool degenerate = false;
};

struct GapPredictionReport
{
    std::vector<GapPredictionRow> rows;
    /// Per measure: model indices, best predicted generalization first.
    std::map<std::string, std::vector<std::size_t>> rankings;
    std::map<std::string, double> mi_scores;
    double aggregation_weight = default_aggregation_weight;
    std::size_t mi_bins = 0;
    std::string gap_definition = "train_accuracy - test_accuracy";
};

struct GapPipelineOptions
{
    AugmentPolicy policy = default_augment_policy;
    std::uint64_t seed = 1;
    double weight = default_aggregation_weight;
    std::size_t bins = 0;
};

/// Measures on the training split; the test split only supplies the
/// observed gaps used for scoring.
inline GapPredictionReport predict_gap(std::span<const TrainedRun * const> runs, const ToyDataset & train_ds,
                                       const ToyDataset * test_ds, const GapPipelineOptions & opt = {})
{
    detail::require(runs.size() >= 2, "predict_gap: need at least 2 runs");
    const auto angles = measure_angle_gap(runs, train_ds);
    const std::size_t n = runs.size();

    GapPredictionReport rep;
    rep.aggregation_weight = opt.weight;
    rep.rows.resize(n);
    std::vector<double> angle_score(n), pv(n), dist_score(n);
    for (std::size_t i = 0; i < n; ++i) {
        const TrainedRun & r = *runs[i];
        const Checkpoint & fin = r.well_trained();
        auto & row = rep.rows[i];
        row.model_id = r.run_id;
        row.degenerate = angles[i].degenerate;
        row.measures["p_vector_angle"] = angles[i].value;
        row.measures["pseudo_validation_accuracy"] = pv[i] =
            pseudo_validation_accuracy(r.spec, fin, train_ds, opt.policy, opt.seed);
        row.measures["distance_to_init"] = distance_to_init(fin, r.init());
        angle_score[i] = -angles[i].value;
        dist_score[i] = -row.measures["distance_to_init"];
        if (test_ds)
            row.gap = evaluate_accuracy(r.spec, fin, train_ds) - evaluate_accuracy(r.spec, fin, *test_ds);
    }
    std::vector<std::string> ids(n);
    for (std::size_t i = 0; i < n; ++i)
        ids[i] = rep.rows[i].model_id;
    const AggregateRanking agg = aggregate_ranks(pv, angle_score, opt.weight, ids);
    for (std::size_t i = 0; i < n; ++i)
        rep.rows[i].measures["combined"] = agg.combined[i];

    std::map<std::string, std::vector<double>> oriented = {{"p_vector_angle", angle_score},
                                                           {"pseudo_validation_accuracy", pv},
                                                           {"distance_to_init", dist_score}};
    std::vector<double> combined_score(n);
    for (std::size_t i = 0; i < n; ++i)
        combined_score[i] = -agg.combined[i];
    oriented["combined"] = combined_score;
    for (const auto & [name, score] : oriented)
        rep.rankings[name] = aggregate_ranks(score, score, 0.0, ids).order;

    if (test_ds) {
        std::vector<double> gaps(n);
        for (std::size_t i = 0; i < n; ++i)
            gaps[i] = *rep.rows[i].gap;
        rep.mi_bins = opt.bins ? opt.bins : default_mi_bins(n);
        for (const auto & [name, score] : oriented)
            rep.mi_scores[name] = mi_score(score, gaps, rep.mi_bins);
    }
    return rep;
}

} // namespace subspectra
