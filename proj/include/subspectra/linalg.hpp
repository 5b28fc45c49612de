#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dense_matrix.hpp"
#include "error.hpp"
#include "rng.hpp"

namespace subspectra {

/// Flips `v` so that its largest-magnitude entry is positive. Entries within
/// 1e-12 (relative) of the maximum count as tied and the lowest index wins.
/// Returns true when the vector was negated.
inline bool apply_sign_convention(std::span<double> v)
{
    double m = 0.0;
    for (double x : v)
        m = std::max(m, std::abs(x));
    if (m == 0.0)
        return false;
    const double cut = m * (1.0 - 1e-12);
    for (double x : v) {
        if (std::abs(x) >= cut) {
            if (x < 0.0) {
                for (double & y : v)
                    y = -y;
                return true;
            }
            return false;
        }
    }
    return false;
}

//
// QR
//

struct QrResult
{
    DenseMatrix Q; ///< rows × cols, orthonormal columns
    DenseMatrix R; ///< cols × cols, upper triangular with non-negative diagonal
};

/// Thin Householder QR of a tall matrix. A column whose trailing part is
/// exactly zero gets no reflector; Q then carries the canonical direction
/// propagated through the preceding reflectors, which keeps Q orthonormal.
inline QrResult householder_qr(const DenseMatrix & a)
{
    const std::size_t m = a.rows(), n = a.cols();
    detail::require(m >= n, "householder_qr: requires rows >= cols");

    // column-major working copy
    std::vector<std::vector<double>> w(n, std::vector<double>(m));
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
            w[j][i] = a(i, j);

    std::vector<std::vector<double>> reflectors(n);
    std::vector<double> betas(n, 0.0);

    for (std::size_t j = 0; j < n; ++j) {
        auto & x = w[j];
        double alpha = 0.0;
        for (std::size_t i = j; i < m; ++i)
            alpha += x[i] * x[i];
        alpha = std::sqrt(alpha);
        if (alpha == 0.0)
            continue;

        std::vector<double> v(x.begin() + static_cast<std::ptrdiff_t>(j), x.end());
        const double s = v[0] >= 0.0 ? 1.0 : -1.0;
        v[0] += s * alpha;
        const double vv = std::inner_product(v.begin(), v.end(), v.begin(), 0.0);
        const double beta = 2.0 / vv;

        for (std::size_t c = j; c < n; ++c) {
            auto & col = w[c];
            double proj = 0.0;
            for (std::size_t i = 0; i < v.size(); ++i)
                proj += v[i] * col[j + i];
            proj *= beta;
            for (std::size_t i = 0; i < v.size(); ++i)
                col[j + i] -= proj * v[i];
        }
        reflectors[j] = std::move(v);
        betas[j] = beta;
    }

    DenseMatrix r(n, n);
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i <= j; ++i)
            r(i, j) = w[j][i];

    // Q = H_0 ⋯ H_{n-1} [I; 0], applied right to left on each column
    std::vector<std::vector<double>> q(n, std::vector<double>(m, 0.0));
    for (std::size_t c = 0; c < n; ++c) {
        auto & col = q[c];
        col[c] = 1.0;
        for (std::size_t jj = n; jj-- > 0;) {
            if (betas[jj] == 0.0)
                continue;
            const auto & v = reflectors[jj];
            double proj = 0.0;
            for (std::size_t i = 0; i < v.size(); ++i)
                proj += v[i] * col[jj + i];
            proj *= betas[jj];
            for (std::size_t i = 0; i < v.size(); ++i)
                col[jj + i] -= proj * v[i];
        }
    }

    DenseMatrix qm(m, n);
    for (std::size_t j = 0; j < n; ++j) {
        const double s = r(j, j) < 0.0 ? -1.0 : 1.0;
        if (s < 0.0)
            for (std::size_t c = j; c < n; ++c)
                r(j, c) = -r(j, c);
        for (std::size_t i = 0; i < m; ++i)
            qm(i, j) = s * q[j][i];
    }
    return {std::move(qm), std::move(r)};
}

//
// symmetric eigendecomposition
//

struct EigResult
{
    std::vector<double> values; ///< descending
    DenseMatrix vectors;        ///< columns are eigenvectors, sign convention applied
    int sweeps = 0;
};

/// Cyclic two-sided Jacobi. Stops once the off-diagonal Frobenius mass is at
/// most 1e-13·‖S‖_F, or after 100 sweeps.
inline EigResult symmetric_eig_jacobi(const DenseMatrix & s, bool want_vectors = true)
{
    detail::require(s.rows() == s.cols(), "symmetric_eig_jacobi: matrix is not square");
    const std::size_t n = s.rows();
    const double scale = s.max_abs();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            detail::require(std::abs(s(i, j) - s(j, i)) <= 1e-10 * scale,
                            "symmetric_eig_jacobi: matrix is not symmetric");

    DenseMatrix a(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            a(i, j) = 0.5 * (s(i, j) + s(j, i));

    // rows of vt are the eigenvectors being accumulated
    DenseMatrix vt = DenseMatrix::identity(n);
    const double tol = 1e-13 * a.frobenius_norm();

    int sweep = 0;
    for (; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j)
                off += 2.0 * a(i, j) * a(i, j);
        if (std::sqrt(off) <= tol)
            break;

        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0)
                    continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double sn = t * c;

                a(p, p) -= t * apq;
                a(q, q) += t * apq;
                a(p, q) = 0.0;
                a(q, p) = 0.0;
                auto rp = a.row(p);
                auto rq = a.row(q);
                for (std::size_t r = 0; r < n; ++r) {
                    if (r == p || r == q)
                        continue;
                    const double g = rp[r], h = rq[r];
                    const double np = c * g - sn * h;
                    const double nq = sn * g + c * h;
                    rp[r] = np;
                    rq[r] = nq;
                    a(r, p) = np;
                    a(r, q) = nq;
                }
                if (want_vectors) {
                    auto vp = vt.row(p);
                    auto vq = vt.row(q);
                    for (std::size_t r = 0; r < n; ++r) {
                        const double g = vp[r], h = vq[r];
                        vp[r] = c * g - sn * h;
                        vq[r] = sn * g + c * h;
                    }
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });

    EigResult out{std::vector<double>(n), DenseMatrix(n, n), sweep};
    for (std::size_t c = 0; c < n; ++c) {
        out.values[c] = a(order[c], order[c]);
        if (!want_vectors)
            continue;
        std::vector<double> v(vt.row(order[c]).begin(), vt.row(order[c]).end());
        apply_sign_convention(v);
        out.vectors.set_col(c, v);
    }
    return out;
}

//
// SVD
//

enum class SvdMethod { exact, randomized };

inline const char * to_string(SvdMethod m) { return m == SvdMethod::exact ? "exact" : "randomized"; }

/// Truncated factorization A ≈ U·diag(sigma)·Vᵀ.
struct SvdResult
{
    DenseMatrix U;
    std::vector<double> sigma;
    DenseMatrix V;
    SvdMethod method = SvdMethod::exact;
    std::optional<std::uint64_t> seed;
    std::string rng_algorithm;
    /// σ_j < 1e-12·σ_1: the vector pair is a completed basis direction.
    std::vector<bool> degenerate;
    /// Randomized path only: singular values of the whole sketch Qᵀ·A.
    std::vector<double> sketch_sigma;

    std::size_t rank() const noexcept { return sigma.size(); }
};

namespace detail {

inline constexpr double degenerate_sigma_ratio = 1e-12;

inline void orthogonalize_against(std::vector<double> & v, const DenseMatrix & basis, std::size_t upto)
{
    for (std::size_t c = 0; c < upto; ++c) {
        double proj = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i)
            proj += basis(i, c) * v[i];
        for (std::size_t i = 0; i < v.size(); ++i)
            v[i] -= proj * basis(i, c);
    }
}

/// Builds the factor recovered as X·w/σ (columns of `recovered`), completing
/// degenerate columns with canonical directions and re-orthogonalizing once.
inline void finish_recovered_factor(DenseMatrix & f, std::vector<bool> & degenerate)
{
    const std::size_t m = f.rows(), k = f.cols();
    for (std::size_t c = 0; c < k; ++c) {
        std::vector<double> v = f.col(c);
        if (!degenerate[c]) {
            orthogonalize_against(v, f, c);
            const double nv = norm2(v);
            if (nv > 0.5) {
                for (double & x : v)
                    x /= nv;
                f.set_col(c, v);
                continue;
            }
            degenerate[c] = true;
        }
        bool placed = false;
        for (std::size_t e = 0; e < m && !placed; ++e) {
            std::vector<double> cand(m, 0.0);
            cand[e] = 1.0;
            orthogonalize_against(cand, f, c);
            orthogonalize_against(cand, f, c);
            const double nc = norm2(cand);
            if (nc > 0.5) {
                for (double & x : cand)
                    x /= nc;
                f.set_col(c, cand);
                placed = true;
            }
        }
    }
}

} // namespace detail

/// All min(rows, cols) singular values, descending, from the Gram matrix of
/// the smaller dimension.
inline std::vector<double> singular_values(const DenseMatrix & a)
{
    const DenseMatrix g = a.cols() <= a.rows() ? gram_cols(a) : gram_rows(a);
    auto eig = symmetric_eig_jacobi(g, false);
    std::vector<double> s(eig.values.size());
    for (std::size_t i = 0; i < s.size(); ++i)
        s[i] = std::sqrt(std::max(eig.values[i], 0.0));
    return s;
}

/// Exact truncated SVD via Jacobi on the Gram matrix of the smaller dimension;
/// the other factor is recovered as A·v/σ (or Aᵀ·u/σ).
inline SvdResult full_svd(const DenseMatrix & a, std::size_t k)
{
    const std::size_t m = a.rows(), n = a.cols();
    detail::require(k >= 1 && k <= std::min(m, n),
                    "full_svd: k=" + std::to_string(k) + " outside [1, " + std::to_string(std::min(m, n)) + "]");

    const bool tall = n <= m;
    const DenseMatrix g = tall ? gram_cols(a) : gram_rows(a);
    const EigResult eig = symmetric_eig_jacobi(g);

    std::vector<double> sigma(k);
    for (std::size_t j = 0; j < k; ++j)
        sigma[j] = std::sqrt(std::max(eig.values[j], 0.0));

    const double cut = detail::degenerate_sigma_ratio * sigma[0];
    std::vector<bool> degenerate(k);
    for (std::size_t j = 0; j < k; ++j)
        degenerate[j] = sigma[0] == 0.0 || sigma[j] < cut;

    DenseMatrix known = eig.vectors.leading_cols(k);
    DenseMatrix recovered = tall ? matmul(a, known) : matmul_tn(a, known);
    for (std::size_t i = 0; i < recovered.rows(); ++i)
        for (std::size_t j = 0; j < k; ++j)
            recovered(i, j) = degenerate[j] ? 0.0 : recovered(i, j) / sigma[j];
    detail::finish_recovered_factor(recovered, degenerate);

    DenseMatrix u = tall ? std::move(recovered) : std::move(known);
    DenseMatrix v = tall ? std::move(known) : std::move(recovered);
    for (std::size_t j = 0; j < k; ++j) {
        std::vector<double> col = u.col(j);
        if (apply_sign_convention(col)) {
            u.set_col(j, col);
            for (std::size_t i = 0; i < v.rows(); ++i)
                v(i, j) = -v(i, j);
        }
    }
    return SvdResult{std::move(u), std::move(sigma), std::move(v), SvdMethod::exact, std::nullopt, {},
                     std::move(degenerate), {}};
}

/// Randomized truncated SVD: Gaussian sketch, optional power iterations with
/// QR re-orthonormalization after every product, exact SVD of Qᵀ·A.
inline SvdResult randomized_svd(const DenseMatrix & a, std::size_t k, std::size_t oversample = 10,
                                std::size_t power_iters = 2, std::uint64_t seed = 0)
{
    const std::size_t m = a.rows(), n = a.cols();
    const std::size_t width = k + oversample;
    detail::require(k >= 1, "randomized_svd: k must be >= 1");
    detail::require(width <= std::min(m, n), "randomized_svd: sketch width k+oversample=" + std::to_string(width) +
                                                 " exceeds min dimension " + std::to_string(std::min(m, n)));

    Rng rng(seed);
    DenseMatrix omega(n, width);
    for (double & x : omega.data())
        x = rng.gaussian();

    DenseMatrix q = householder_qr(matmul(a, omega)).Q;
    for (std::size_t it = 0; it < power_iters; ++it) {
        const DenseMatrix z = householder_qr(matmul_tn(a, q)).Q;
        q = householder_qr(matmul(a, z)).Q;
    }

    const DenseMatrix b = matmul_tn(q, a);
    SvdResult small = full_svd(b, width);

    DenseMatrix u = matmul(q, small.U.leading_cols(k));
    DenseMatrix v = small.V.leading_cols(k);
    std::vector<double> sigma(small.sigma.begin(), small.sigma.begin() + static_cast<std::ptrdiff_t>(k));
    for (std::size_t j = 0; j < k; ++j) {
        std::vector<double> col = u.col(j);
        if (apply_sign_convention(col)) {
            u.set_col(j, col);
            for (std::size_t i = 0; i < v.rows(); ++i)
                v(i, j) = -v(i, j);
        }
    }
    std::vector<bool> degenerate(small.degenerate.begin(), small.degenerate.begin() + static_cast<std::ptrdiff_t>(k));
    return SvdResult{std::move(u),        std::move(sigma),   std::move(v),
                     SvdMethod::randomized, seed,             std::string(Rng::algorithm),
                     std::move(degenerate), std::move(small.sigma)};
}

/// max |QᵀQ − I|
inline double orthonormality_defect(const DenseMatrix & q)
{
    const DenseMatrix g = matmul_tn(q, q);
    double d = 0.0;
    for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j)
            d = std::max(d, std::abs(g(i, j) - (i == j ? 1.0 : 0.0)));
    return d;
}

/// U·diag(sigma)·Vᵀ
inline DenseMatrix reconstruct(const SvdResult & s)
{
    DenseMatrix us = s.U;
    for (std::size_t i = 0; i < us.rows(); ++i)
        for (std::size_t j = 0; j < us.cols(); ++j)
            us(i, j) *= s.sigma[j];
    return matmul_nt(us, s.V);
}

} // namespace subspectra
