#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include <subspectra/subspace.hpp>

#include "test_support.hpp"

using namespace subspectra;
using namespace subspectra::testing;

namespace {

FeatureMatrix fm(DenseMatrix m, Split split = Split::train)
{
    Provenance p;
    p.split = split;
    return FeatureMatrix(std::move(m), p);
}

DenseMatrix uniform_matrix(std::size_t r, std::size_t c, std::uint64_t seed)
{
    Rng rng(seed);
    DenseMatrix m(r, c);
    for (double & x : m.data())
        x = rng.uniform();
    return m;
}

// ‖A Aᵀ u − σ² u‖ / σ²
double eigen_residual(const DenseMatrix & a, const std::vector<double> & u)
{
    std::vector<double> w(a.cols(), 0.0), z(a.rows(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j)
            w[j] += a(i, j) * u[i];
    double lam = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j)
            z[i] += a(i, j) * w[j];
        lam += z[i] * u[i];
    }
    double r = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i)
        r += (z[i] - lam * u[i]) * (z[i] - lam * u[i]);
    return std::sqrt(r) / lam;
}

double norm(const std::vector<double> & v)
{
    double s = 0;
    for (double x : v)
        s += x * x;
    return std::sqrt(s);
}

} // namespace

// --- pvector ---

TEST(PVector, RankOneLeftFactor)
{
    DenseMatrix m(2, 3);
    const double u[2] = {0.6, 0.8}, v[3] = {1.0 / std::sqrt(3.0), 1.0 / std::sqrt(3.0), 1.0 / std::sqrt(3.0)};
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 3; ++j)
            m(i, j) = 2.0 * u[i] * v[j];
    const PVector p = pvector(fm(m));
    EXPECT_NEAR(p.values[0], 0.6, 1e-12);
    EXPECT_NEAR(p.values[1], 0.8, 1e-12);
    EXPECT_NEAR(p.sigma1, 2.0, 1e-12);
    EXPECT_EQ(p.kind, PVectorKind::model);
}

TEST(PVector, DiagonalPicksLargest)
{
    const PVector p = pvector(fm(DenseMatrix(2, 2, {3, 0, 0, 1})));
    EXPECT_NEAR(p.values[0], 1.0, 1e-14);
    EXPECT_NEAR(p.values[1], 0.0, 1e-14);
    EXPECT_FALSE(p.degenerate);
}

TEST(PVector, AllZeroIsNumericalError) { EXPECT_THROW(pvector(fm(DenseMatrix(4, 3))), NumericalError); }

TEST(PVector, IdenticalRowsFlaggedTrivial)
{
    DenseMatrix m(5, 3);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            m(i, j) = 2.0 * static_cast<double>(j + 1);
    const PVector p = pvector(fm(m, Split::raw));
    EXPECT_TRUE(p.trivial);
    EXPECT_EQ(p.kind, PVectorKind::data);
    for (double x : p.values)
        EXPECT_NEAR(x, 1.0 / std::sqrt(5.0), 1e-12);
}

TEST(PVector, ExactAndRandomizedAgree)
{
    const auto m = uniform_matrix(300, 16, 11);
    const PVector e = pvector(fm(m));
    const PVector r = pvector(fm(m), SvdMethod::randomized, 5);
    EXPECT_GE(angle_between(e, r).cosine_abs, 0.999);
    EXPECT_EQ(r.seed, 5u);
}

TEST(PVector, RandomizedClampsOversampleOnNarrowMatrix)
{
    const auto m = gaussian_matrix(50, 4, 2);
    const PVector r = pvector(fm(m), SvdMethod::randomized, 1);
    EXPECT_GE(angle_between(r, pvector(fm(m))).cosine_abs, 0.999);
}

TEST(PVector, MatchesPowerIterationOracle)
{
    const auto p = planted(120, 10, {9, 4, 2, 1, 0.5}, 21);
    const PVector e = pvector(fm(p.a));
    const auto oracle = power_top_left(p.a, 300);
    EXPECT_GE(abs_cos(e.values, oracle), 1.0 - 1e-10);
}

TEST(PVector, TiedSpectrumFlaggedDegenerate)
{
    const PVector p = pvector(fm(DenseMatrix::identity(4), Split::raw));
    EXPECT_TRUE(p.degenerate);
    EXPECT_NEAR(p.values[0], 1.0, 1e-14);
}

TEST(PVector, CenteredFlagRecorded)
{
    auto m = gaussian_matrix(40, 6, 3);
    for (std::size_t i = 0; i < m.rows(); ++i)
        m(i, 0) += 10.0;
    const PVector raw = pvector(fm(m));
    const PVector c = pvector(fm(m), SvdMethod::exact, std::nullopt, true);
    EXPECT_TRUE(c.centered);
    EXPECT_FALSE(raw.centered);
    // the offset column dominates only the uncentered direction
    EXPECT_LT(angle_between(raw, c).cosine_abs, 0.9);
}

TEST(DataPVector, RequiresRawSplit)
{
    EXPECT_THROW(data_pvector(fm(gaussian_matrix(5, 3, 1), Split::train)), ValidationError);
    EXPECT_EQ(data_pvector(fm(gaussian_matrix(5, 3, 1), Split::raw)).kind, PVectorKind::data);
}

TEST(DataPVector, GaussianMixtureMatchesOracle)
{
    // two well separated clusters along a planted direction
    Rng rng(7);
    DenseMatrix x(512, 32);
    for (std::size_t i = 0; i < 512; ++i)
        for (std::size_t j = 0; j < 32; ++j)
            x(i, j) = rng.gaussian() + (j == 0 ? (i % 2 ? 6.0 : -4.0) : 0.0);
    const PVector p = data_pvector(fm(x, Split::raw));
    EXPECT_GE(abs_cos(p.values, power_top_left(x, 500)), 1.0 - 1e-10);
}

// --- properties ---

TEST(PVectorProperties, UnitNormAndSignConvention)
{
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto m = gaussian_matrix(30 + seed, 5 + seed % 4, seed);
        for (auto method : {SvdMethod::exact, SvdMethod::randomized}) {
            const PVector p = pvector(fm(m), method, seed);
            EXPECT_NEAR(norm(p.values), 1.0, 1e-10);
            const auto it = std::max_element(p.values.begin(), p.values.end(),
                                              [](double a, double b) { return std::abs(a) < std::abs(b); });
            EXPECT_GT(*it, 0.0);
        }
    }
}

TEST(PVectorProperties, ScaleInvariant)
{
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        auto m = gaussian_matrix(40, 7, seed);
        const PVector a = pvector(fm(m));
        const double c = 0.01 + 3.7 * static_cast<double>(seed);
        for (double & x : m.data())
            x *= c;
        const PVector b = pvector(fm(m));
        for (std::size_t i = 0; i < a.values.size(); ++i)
            EXPECT_NEAR(a.values[i], b.values[i], 1e-10);
    }
}

TEST(PVectorProperties, BitIdenticalRepeats)
{
    const auto m = gaussian_matrix(200, 12, 4);
    EXPECT_EQ(pvector(fm(m)).values, pvector(fm(m)).values);
    EXPECT_EQ(pvector(fm(m), SvdMethod::randomized, 3).values, pvector(fm(m), SvdMethod::randomized, 3).values);
}

// --- topk ---

TEST(TopK, DiagonalColumns)
{
    DenseMatrix d(3, 3);
    d(0, 0) = 3, d(1, 1) = 2, d(2, 2) = 1;
    const auto u = topk_left_singular(fm(d), 2);
    ASSERT_EQ(u.size(), 2u);
    EXPECT_NEAR(u[0][0], 1.0, 1e-14);
    EXPECT_NEAR(u[1][1], 1.0, 1e-14);
}

TEST(TopK, FirstEqualsPVector)
{
    const auto m = gaussian_matrix(50, 8, 9);
    EXPECT_EQ(topk_left_singular(fm(m), 3)[0], pvector(fm(m)).values);
}

TEST(TopK, OrthogonalAndMatchesOracle)
{
    const auto p = planted(100, 20, {10, 8, 6, 4, 2, 1}, 3);
    const auto u = topk_left_singular(fm(p.a), 5);
    for (std::size_t a = 0; a < 5; ++a) {
        EXPECT_GE(abs_cos(u[a], p.u.col(a)), 0.999);
        for (std::size_t b = a + 1; b < 5; ++b)
            EXPECT_LT(abs_cos(u[a], u[b]), 1e-8);
    }
}

TEST(TopK, GaussianColumnsSatisfyEigenEquation)
{
    const auto m = gaussian_matrix(100, 20, 3);
    const auto u = topk_left_singular(fm(m), 5);
    for (std::size_t a = 0; a < 5; ++a) {
        EXPECT_NEAR(norm(u[a]), 1.0, 1e-10);
        EXPECT_LT(eigen_residual(m, u[a]), 1e-8);
        for (std::size_t b = a + 1; b < 5; ++b)
            EXPECT_LT(abs_cos(u[a], u[b]), 1e-8);
    }
}

TEST(TopK, OutOfRange)
{
    EXPECT_THROW(topk_left_singular(fm(gaussian_matrix(4, 3, 1)), 4), ValidationError);
    EXPECT_THROW(topk_left_singular(fm(gaussian_matrix(4, 3, 1)), 0), ValidationError);
}

// --- angle_between ---

TEST(Angle, Analytic)
{
    const std::vector<double> e1{1, 0}, e2{0, 1}, d{1 / std::sqrt(2.0), 1 / std::sqrt(2.0)};
    EXPECT_DOUBLE_EQ(angle_between(e1, e1).cosine_abs, 1.0);
    EXPECT_DOUBLE_EQ(angle_between(e1, e1).degrees, 0.0);
    EXPECT_DOUBLE_EQ(angle_between(e1, e2).degrees, 90.0);
    EXPECT_NEAR(angle_between(d, e1).cosine_abs, 0.70710678, 1e-8);
    EXPECT_NEAR(angle_between(d, e1).degrees, 45.0, 1e-10);
}

TEST(Angle, LengthMismatchAndNonUnitRejected)
{
    const std::vector<double> a{1, 0}, b{1, 0, 0}, c{2, 0};
    EXPECT_THROW(angle_between(a, b), ValidationError);
    EXPECT_THROW(angle_between(a, c), ValidationError);
}

TEST(AngleProperties, SymmetricAndSignInvariant)
{
    for (std::uint64_t seed = 1; seed <= 30; ++seed) {
        auto u = random_orthonormal(9, 2, seed);
        auto a = u.col(0), b = u.col(1);
        for (std::size_t i = 0; i < a.size(); ++i)
            b[i] = 0.6 * a[i] + 0.8 * b[i];
        const Angle ab = angle_between(a, b);
        EXPECT_DOUBLE_EQ(ab.cosine_abs, angle_between(b, a).cosine_abs);
        auto nb = b;
        for (double & x : nb)
            x = -x;
        EXPECT_DOUBLE_EQ(ab.cosine_abs, angle_between(a, nb).cosine_abs);
        EXPECT_NEAR(ab.cosine_abs, 0.6, 1e-12);
        EXPECT_NEAR(ab.degrees, std::acos(0.6) * 180.0 / std::numbers::pi, 1e-9);
        EXPECT_LE(ab.cosine_abs, 1.0);
    }
}

// --- spectrum / reconstruction ---

TEST(Spectrum, DiagonalRatios)
{
    const auto s = spectrum_summary(fm(DenseMatrix(2, 2, {3, 0, 0, 1})), 2);
    EXPECT_NEAR(s.singular_values[0], 3, 1e-14);
    EXPECT_NEAR(s.explained_variance_ratios[0], 0.9, 1e-14);
    EXPECT_NEAR(s.explained_variance_ratios[1], 0.1, 1e-14);
    EXPECT_NEAR(s.reconstruction_errors[0], 1.0, 1e-12);
    EXPECT_NEAR(s.total_sq_frobenius, 10.0, 1e-12);
}

TEST(Spectrum, RankOne)
{
    const auto p = planted(6, 4, {2.5}, 1);
    const auto s = spectrum_summary(fm(p.a), 1);
    EXPECT_NEAR(s.explained_variance_ratios[0], 1.0, 1e-12);
    EXPECT_NEAR(s.reconstruction_errors[0], 0.0, 1e-10);
}

TEST(Spectrum, ZeroMatrixRejected) { EXPECT_THROW(spectrum_summary(fm(DenseMatrix(3, 3)), 1), NumericalError); }

TEST(Spectrum, KOutOfRange) { EXPECT_THROW(spectrum_summary(fm(gaussian_matrix(3, 2, 1)), 3), ValidationError); }

TEST(SpectrumProperties, RatiosSumToOneAndTailIdentity)
{
    for (std::uint64_t seed = 1; seed <= 15; ++seed) {
        const auto m = gaussian_matrix(40 + seed, 6 + seed % 5, seed);
        const std::size_t full = m.cols();
        const auto s = spectrum_summary(fm(m), full);
        const double total = frobenius_sq(m);
        EXPECT_NEAR(s.total_sq_frobenius / total, 1.0, 1e-10);
        double sum = 0;
        for (double r : s.explained_variance_ratios)
            sum += r;
        EXPECT_NEAR(sum, 1.0, 1e-8);
        for (std::size_t k = 0; k < full; ++k) {
            double tail = 0;
            for (std::size_t j = k + 1; j < full; ++j)
                tail += s.singular_values[j] * s.singular_values[j];
            EXPECT_NEAR(s.reconstruction_errors[k], tail, 1e-8 * total);
            EXPECT_LE(s.cumulative_ratios[k], 1.0 + 1e-10);
            if (k) {
                EXPECT_LE(s.reconstruction_errors[k], s.reconstruction_errors[k - 1] + 1e-12 * total);
            }
        }
        EXPECT_LE(s.reconstruction_errors.back(), 1e-8 * total);
    }
}

TEST(Reconstruction, DiagonalAndFullRank)
{
    EXPECT_NEAR(reconstruction_error(fm(DenseMatrix(2, 2, {3, 0, 0, 1})), 1), 1.0, 1e-12);
    const auto m = gaussian_matrix(10, 4, 3);
    EXPECT_LE(reconstruction_error(fm(m), 4), 1e-8 * frobenius_sq(m));
}

TEST(Reconstruction, DirectResidualMatchesPlantedTail)
{
    const auto p = planted(60, 12, {7, 5, 4, 3, 2, 1.5, 1, 0.5}, 8);
    const double e = reconstruction_error(fm(p.a), 4);
    EXPECT_NEAR(e, 4 + 2.25 + 1 + 0.25, 1e-8 * frobenius_sq(p.a));
}

// --- histogram ---

TEST(Histogram, OneHighEntry)
{
    const std::vector<double> v{1, 0, 0, 0};
    const auto h = value_histogram(std::span<const double>(v), 2);
    EXPECT_EQ(h.counts, (std::vector<std::size_t>{3, 1}));
    ASSERT_TRUE(h.bandwidth.has_value());
}

TEST(Histogram, ConstantVectorWarns)
{
    const std::vector<double> v(5, 0.5);
    const auto h = value_histogram(std::span<const double>(v), 10);
    EXPECT_EQ(h.counts.size(), 1u);
    EXPECT_EQ(h.counts[0], 5u);
    EXPECT_FALSE(h.warning.empty());
}

TEST(Histogram, RejectsFewBinsAndBadBandwidth)
{
    const std::vector<double> v{0, 1};
    EXPECT_THROW(value_histogram(std::span<const double>(v), 1), ValidationError);
    EXPECT_THROW(value_histogram(std::span<const double>(v), 4, -1.0), ValidationError);
}

TEST(HistogramProperties, CountsMatchBruteForceRecount)
{
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const PVector p = pvector(fm(gaussian_matrix(500, 8, seed)));
        const auto h = value_histogram(p, 50);
        std::size_t total = 0;
        for (std::size_t b = 0; b < h.counts.size(); ++b) {
            std::size_t n = 0;
            for (double x : p.values) {
                const bool last = b + 1 == h.counts.size();
                if (x >= h.bin_edges[b] && (last ? x <= h.bin_edges[b + 1] : x < h.bin_edges[b + 1]))
                    ++n;
            }
            EXPECT_EQ(h.counts[b], n);
            total += h.counts[b];
        }
        EXPECT_EQ(total, p.values.size());
    }
}

TEST(Histogram, KdeIntegratesToAboutOne)
{
    const PVector p = pvector(fm(gaussian_matrix(2000, 6, 5)));
    const auto h = value_histogram(p, 200, 0.002);
    ASSERT_TRUE(h.smoothed_density.has_value());
    double area = 0;
    for (std::size_t b = 0; b < h.counts.size(); ++b)
        area += (*h.smoothed_density)[b] * (h.bin_edges[b + 1] - h.bin_edges[b]);
    EXPECT_NEAR(area, 1.0, 0.05);
    EXPECT_DOUBLE_EQ(*h.bandwidth, 0.002);
}
