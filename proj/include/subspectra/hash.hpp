#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <span>
#include <string>
#include <string_view>

namespace subspectra {

/// 64-bit FNV-1a, streaming.
class Fnv1a
{
public:
    void bytes(const void * p, std::size_t n) noexcept
    {
        const auto * b = static_cast<const unsigned char *>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h_ ^= b[i];
            h_ *= 0x100000001b3ULL;
        }
    }

    void text(std::string_view s) noexcept { bytes(s.data(), s.size()); }

    /// Little-endian encoding regardless of host order.
    void u64(std::uint64_t v) noexcept
    {
        unsigned char b[8];
        for (int i = 0; i < 8; ++i)
            b[i] = static_cast<unsigned char>(v >> (8 * i));
        bytes(b, 8);
    }

    void f64(double v) noexcept { u64(std::bit_cast<std::uint64_t>(v)); }

    void f64s(std::span<const double> v) noexcept
    {
        for (double x : v)
            f64(x);
    }

    std::uint64_t value() const noexcept { return h_; }

    std::string hex() const { return to_hex(h_); }

    static std::string to_hex(std::uint64_t v)
    {
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
        return buf;
    }

private:
    std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

inline std::string fnv1a_hex(std::string_view s)
{
    Fnv1a h;
    h.text(s);
    return h.hex();
}

} // namespace subspectra
