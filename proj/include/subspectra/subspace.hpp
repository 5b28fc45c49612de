#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dense_matrix.hpp"
#include "error.hpp"
#include "linalg.hpp"

namespace subspectra {

enum class Split { train, test, raw };

inline const char * to_string(Split s)
{
    switch (s) {
    case Split::train: return "train";
    case Split::test: return "test";
    case Split::raw: return "raw";
    }
    return "?";
}

inline Split split_from_string(const std::string & s)
{
    if (s == "train")
        return Split::train;
    if (s == "test")
        return Split::test;
    if (s == "raw")
        return Split::raw;
    throw ValidationError("unknown split '" + s + "' (expected train|test|raw)");
}

/// Where a feature matrix came from.
struct Provenance
{
    std::string run_id;
    std::optional<std::size_t> epoch;
    std::optional<std::size_t> iteration;
    std::optional<std::size_t> layer;
    std::string dataset_id;
    Split split = Split::train;
    std::map<std::string, std::string> extra;

    bool operator==(const Provenance &) const = default;
};

/// #samples × #features matrix; rows follow the dataset's sample order.
struct FeatureMatrix
{
    DenseMatrix data;
    Provenance source;

    FeatureMatrix(DenseMatrix d, Provenance p = {}) : data(std::move(d)), source(std::move(p))
    {
        detail::require(data.rows() >= 2, "feature matrix needs at least 2 samples, got " + std::to_string(data.rows()));
    }

    std::size_t samples() const noexcept { return data.rows(); }
    std::size_t features() const noexcept { return data.cols(); }
};

enum class PVectorKind { model, data };

inline const char * to_string(PVectorKind k) { return k == PVectorKind::model ? "model" : "data"; }

struct PVector
{
    std::vector<double> values;
    PVectorKind kind = PVectorKind::model;
    Provenance source;
    SvdMethod svd_method = SvdMethod::exact;
    std::optional<std::uint64_t> seed;
    /// All entries equal: the matrix has identical rows.
    bool trivial = false;
    /// (σ1 − σ2)/σ1 < 1e-6: the direction is not well defined.
    bool degenerate = false;
    /// Column means were removed first. Not the default analysis.
    bool centered = false;
    double sigma1 = 0.0;

    std::size_t size() const noexcept { return values.size(); }
};

inline constexpr double pvector_degeneracy_gap = 1e-6;

namespace detail {

inline DenseMatrix centered_copy(const DenseMatrix & x)
{
    DenseMatrix c = x;
    for (std::size_t j = 0; j < x.cols(); ++j) {
        double m = 0.0;
        for (std::size_t i = 0; i < x.rows(); ++i)
            m += x(i, j);
        m /= static_cast<double>(x.rows());
        for (std::size_t i = 0; i < x.rows(); ++i)
            c(i, j) -= m;
    }
    return c;
}

inline void require_nonzero(const DenseMatrix & x, const char * op)
{
    if (x.max_abs() == 0.0)
        throw NumericalError(std::string(op) + ": degenerate input, the matrix is all zeros");
}

inline std::size_t clamped_oversample(const DenseMatrix & x, std::size_t k)
{
    const std::size_t room = std::min(x.rows(), x.cols()) - k;
    return std::min<std::size_t>({10, x.cols() - 1, room});
}

inline bool all_equal(std::span<const double> v)
{
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    const double scale = std::max(std::abs(*lo), std::abs(*hi));
    return *hi - *lo <= 1e-9 * scale;
}

} // namespace detail

/// Top left singular vector of F.data (uncentered unless asked).
inline PVector pvector(const FeatureMatrix & f, SvdMethod method = SvdMethod::exact,
                       std::optional<std::uint64_t> seed = std::nullopt, bool centered = false)
{
    const DenseMatrix & raw = f.data;
    const DenseMatrix x = centered ? detail::centered_copy(raw) : raw;
    detail::require_nonzero(x, "pvector");

    const std::size_t mindim = std::min(x.rows(), x.cols());
    PVector p;
    p.kind = f.source.split == Split::raw ? PVectorKind::data : PVectorKind::model;
    p.source = f.source;
    p.svd_method = method;
    p.centered = centered;

    double s1 = 0.0, s2 = 0.0;
    if (method == SvdMethod::exact) {
        const SvdResult s = full_svd(x, std::min<std::size_t>(2, mindim));
        p.values = s.U.col(0);
        s1 = s.sigma[0];
        s2 = s.sigma.size() > 1 ? s.sigma[1] : 0.0;
    } else {
        p.seed = seed.value_or(0);
        const SvdResult s = randomized_svd(x, 1, detail::clamped_oversample(x, 1), 2, *p.seed);
        p.values = s.U.col(0);
        s1 = s.sigma[0];
        s2 = s.sketch_sigma.size() > 1 ? s.sketch_sigma[1] : 0.0;
    }
    p.sigma1 = s1;
    p.degenerate = mindim > 1 && (s1 - s2) / s1 < pvector_degeneracy_gap;
    p.trivial = detail::all_equal(p.values);
    return p;
}

/// P-vector of a raw data matrix (split must be raw).
inline PVector data_pvector(const FeatureMatrix & raw, SvdMethod method = SvdMethod::exact,
                            std::optional<std::uint64_t> seed = std::nullopt)
{
    detail::require(raw.source.split == Split::raw,
                    std::string("data_pvector expects split=raw, got ") + to_string(raw.source.split));
    return pvector(raw, method, seed);
}

/// Columns 1..k of U, descending σ, sign convention applied.
inline std::vector<std::vector<double>> topk_left_singular(const FeatureMatrix & f, std::size_t k,
                                                           SvdMethod method = SvdMethod::exact,
                                                           std::optional<std::uint64_t> seed = std::nullopt)
{
    const std::size_t mindim = std::min(f.samples(), f.features());
    detail::require(k >= 1 && k <= mindim,
                    "topk_left_singular: k=" + std::to_string(k) + " outside [1, " + std::to_string(mindim) + "]");
    detail::require_nonzero(f.data, "topk_left_singular");
    const SvdResult s = method == SvdMethod::exact
                            ? full_svd(f.data, k)
                            : randomized_svd(f.data, k, detail::clamped_oversample(f.data, k), 2, seed.value_or(0));
    std::vector<std::vector<double>> out;
    out.reserve(k);
    for (std::size_t j = 0; j < k; ++j)
        out.push_back(s.U.col(j));
    return out;
}

struct Angle
{
    double cosine_abs = 0.0;
    double degrees = 0.0;
    /// u·v before taking the absolute value.
    double cosine_signed = 0.0;
};

inline Angle angle_between(std::span<const double> u, std::span<const double> v)
{
    detail::require(u.size() == v.size(), "angle_between: length mismatch (" + std::to_string(u.size()) + " vs " +
                                              std::to_string(v.size()) + "); vectors come from different sample sets");
    const double nu = norm2(u), nv = norm2(v);
    detail::require(std::abs(nu - 1.0) <= 1e-8 && std::abs(nv - 1.0) <= 1e-8, "angle_between: inputs must be unit vectors");
    const double c = dot(u, v);
    Angle a;
    a.cosine_signed = c;
    a.cosine_abs = std::clamp(std::abs(c), 0.0, 1.0);
    a.degrees = std::acos(a.cosine_abs) * 180.0 / std::numbers::pi;
    return a;
}

inline Angle angle_between(const PVector & u, const PVector & v) { return angle_between(u.values, v.values); }

struct SpectrumSummary
{
    std::vector<double> singular_values;
    std::vector<double> explained_variance_ratios;
    std::vector<double> cumulative_ratios;
    std::vector<double> reconstruction_errors;
    double total_sq_frobenius = 0.0;
    SvdMethod method = SvdMethod::exact;
};

inline constexpr std::size_t exact_spectrum_limit = 1024;

/// Top-k_max spectrum with ratios over ‖X‖_F² and E(k) = ‖X‖_F² − Σ_{j≤k} σ_j².
inline SpectrumSummary spectrum_summary(const FeatureMatrix & f, std::size_t k_max)
{
    const DenseMatrix & x = f.data;
    const std::size_t mindim = std::min(x.rows(), x.cols());
    detail::require(k_max >= 1 && k_max <= mindim,
                    "spectrum_summary: k_max=" + std::to_string(k_max) + " outside [1, " + std::to_string(mindim) + "]");
    detail::require_nonzero(x, "spectrum_summary");

    SpectrumSummary s;
    if (mindim <= exact_spectrum_limit) {
        auto all = singular_values(x);
        s.singular_values.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k_max));
    } else {
        s.method = SvdMethod::randomized;
        s.singular_values = randomized_svd(x, k_max, detail::clamped_oversample(x, k_max), 2, 0).sigma;
    }
    s.total_sq_frobenius = x.squared_frobenius();
    double cum = 0.0;
    for (double sigma : s.singular_values) {
        const double sq = sigma * sigma;
        cum += sq;
        s.explained_variance_ratios.push_back(sq / s.total_sq_frobenius);
        s.cumulative_ratios.push_back(cum / s.total_sq_frobenius);
        s.reconstruction_errors.push_back(std::max(0.0, s.total_sq_frobenius - cum));
    }
    return s;
}

/// ‖X − U_kΣ_kV_kᵀ‖_F², computed directly and checked against the spectral
/// tail identity.
inline double reconstruction_error(const FeatureMatrix & f, std::size_t k)
{
    const DenseMatrix & x = f.data;
    const std::size_t mindim = std::min(x.rows(), x.cols());
    detail::require(k >= 1 && k <= mindim,
                    "reconstruction_error: k=" + std::to_string(k) + " outside [1, " + std::to_string(mindim) + "]");
    detail::require_nonzero(x, "reconstruction_error");

    const SvdResult s = full_svd(x, k);
    const double direct = (x - reconstruct(s)).squared_frobenius();
    const double total = x.squared_frobenius();
    double head = 0.0;
    for (double sigma : s.sigma)
        head += sigma * sigma;
    const double identity = total - head;
    if (std::abs(direct - identity) > 1e-8 * total)
        throw NumericalError("reconstruction_error: direct residual " + std::to_string(direct) +
                             " disagrees with spectral tail " + std::to_string(identity));
    return direct;
}

struct Histogram
{
    std::vector<double> bin_edges;
    std::vector<std::size_t> counts;
    std::optional<std::vector<double>> smoothed_density;
    std::optional<double> bandwidth;
    std::string warning;
};

namespace detail {

inline double silverman_bandwidth(std::span<const double> v)
{
    const double n = static_cast<double>(v.size());
    double mean = 0.0;
    for (double x : v)
        mean += x;
    mean /= n;
    double ss = 0.0;
    for (double x : v)
        ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / (n - 1.0));
    std::vector<double> sorted(v.begin(), v.end());
    std::sort(sorted.begin(), sorted.end());
    auto quantile = [&](double q) {
        const double pos = q * (n - 1.0);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
        return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
    };
    const double iqr = quantile(0.75) - quantile(0.25);
    const double spread = iqr > 0.0 ? std::min(sd, iqr / 1.34) : sd;
    return 0.9 * spread * std::pow(n, -0.2);
}

} // namespace detail

/// Equal-width bins over [min, max]; the last bin is closed. Optional
/// Gaussian KDE at bin centers (Silverman bandwidth unless given).
inline Histogram value_histogram(std::span<const double> values, std::size_t bins,
                                 std::optional<double> kde_bandwidth = std::nullopt, bool smooth = true)
{
    detail::require(bins >= 2, "value_histogram: bins must be >= 2");
    detail::require(!values.empty(), "value_histogram: empty vector");
    detail::require(!kde_bandwidth || *kde_bandwidth > 0.0, "value_histogram: bandwidth must be positive");
    const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
    const double lo = *lo_it, hi = *hi_it;

    Histogram h;
    if (!(hi > lo)) {
        h.bin_edges = {lo, hi};
        h.counts = {values.size()};
        h.warning = "constant vector: single-bin degenerate histogram";
        return h;
    }

    h.bin_edges.resize(bins + 1);
    const double width = (hi - lo) / static_cast<double>(bins);
    for (std::size_t j = 0; j < bins; ++j)
        h.bin_edges[j] = lo + static_cast<double>(j) * width;
    h.bin_edges[bins] = hi;
    h.counts.assign(bins, 0);
    for (double x : values) {
        auto b = std::min(static_cast<std::size_t>((x - lo) / width), bins - 1);
        while (b > 0 && x < h.bin_edges[b])
            --b;
        while (b + 1 < bins && x >= h.bin_edges[b + 1])
            ++b;
        ++h.counts[b];
    }

    if (smooth && values.size() >= 2) {
        const double bw = kde_bandwidth ? *kde_bandwidth : detail::silverman_bandwidth(values);
        if (bw > 0.0) {
            const double norm = 1.0 / (static_cast<double>(values.size()) * bw * std::sqrt(2.0 * std::numbers::pi));
            std::vector<double> dens(bins);
            for (std::size_t j = 0; j < bins; ++j) {
                const double c = 0.5 * (h.bin_edges[j] + h.bin_edges[j + 1]);
                double s = 0.0;
                for (double x : values) {
                    const double z = (c - x) / bw;
                    s += std::exp(-0.5 * z * z);
                }
                dens[j] = s * norm;
            }
            h.smoothed_density = std::move(dens);
            h.bandwidth = bw;
        }
    }
    return h;
}

inline Histogram value_histogram(const PVector & p, std::size_t bins, std::optional<double> kde_bandwidth = std::nullopt,
                                 bool smooth = true)
{
    return value_histogram(std::span<const double>(p.values), bins, kde_bandwidth, smooth);
}

/// Sample standard deviation of the entries.
inline double value_spread(std::span<const double> v)
{
    if (v.size() < 2)
        return 0.0;
    double mean = 0.0;
    for (double x : v)
        mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v)
        ss += (x - mean) * (x - mean);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

} // namespace subspectra
