#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>

#include "error.hpp"

namespace subspectra {

//
// splitmix64 finalizer; used to derive independent child seeds
//
constexpr std::uint64_t mix64(std::uint64_t z) noexcept
{
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Seed of an independent stream identified by `stream` under `seed`.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept
{
    return mix64(mix64(seed) ^ mix64(stream + 0x632be59bd9b4e019ULL));
}

/// Deterministic generator with a platform-independent output sequence.
///
/// The engine is std::mt19937_64, whose sequence is fixed by the standard.
/// Uniforms, bounded integers and Gaussians are derived here rather than via
/// the <random> distributions, which are implementation-defined.
/// Gaussians use the Marsaglia polar method with the spare value cached.
class Rng
{
public:
    static constexpr std::string_view algorithm = "mt19937_64+splitmix64-split+polar-gaussian";

    explicit Rng(std::uint64_t seed) : engine_(seed), seed_(seed) {}

    std::uint64_t seed() const noexcept { return seed_; }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform on [0,1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Unbiased integer in [0, n).
    std::uint64_t below(std::uint64_t n)
    {
        detail::require(n > 0, "Rng::below: n must be positive");
        const std::uint64_t limit = std::uint64_t(-1) - (std::uint64_t(-1) % n);
        for (;;) {
            const std::uint64_t x = engine_();
            if (x < limit)
                return x % n;
        }
    }

    double gaussian()
    {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u = 0, v = 0, s = 0;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * f;
        has_spare_ = true;
        return u * f;
    }

    /// Independent child generator; advances this generator by one draw.
    Rng split() { return Rng(mix64(engine_() ^ 0xa0761d6478bd642fULL)); }

    template <typename T>
    void shuffle(std::span<T> items)
    {
        for (std::size_t i = items.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

    /// Textual engine state, restorable with `restore`.
    std::string state() const
    {
        std::ostringstream os;
        os.precision(17);
        os << seed_ << ' ' << has_spare_ << ' ' << std::hexfloat << spare_ << ' ' << engine_;
        return os.str();
    }

    static Rng restore(const std::string & text)
    {
        std::istringstream is(text);
        Rng r(0);
        std::string spare;
        is >> r.seed_ >> r.has_spare_ >> spare >> r.engine_;
        if (!is)
            throw ValidationError("Rng::restore: malformed state");
        r.spare_ = std::strtod(spare.c_str(), nullptr);
        return r;
    }

private:
    std::mt19937_64 engine_;
    std::uint64_t seed_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace subspectra
