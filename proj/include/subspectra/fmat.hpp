#pragma once

// FMAT: little-endian feature-matrix container.
//
//   offset  size  field
//   0       4     magic "FMAT"
//   4       2     version (u16, = 1)
//   6       1     dtype   (u8, 0 = f32)
//   7       8     rows    (u64)
//   15      8     cols    (u64)
//   23      4     metadata_len (u32)
//   27      m     metadata, UTF-8 JSON provenance record
//   27+m    4·r·c payload, f32 row-major

#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "dense_matrix.hpp"
#include "error.hpp"
#include "subspace.hpp"

#if defined(_WIN32)
#include <process.h>
#define SUBSPECTRA_GETPID _getpid
#else
#include <unistd.h>
#define SUBSPECTRA_GETPID getpid
#endif

namespace subspectra {

using json = nlohmann::json;

inline constexpr std::uint16_t fmat_version = 1;
inline constexpr std::size_t fmat_header_size = 27;

//
// Provenance <-> JSON
//

inline json provenance_to_json(const Provenance & p)
{
    json j = json::object();
    if (!p.run_id.empty())
        j["run_id"] = p.run_id;
    if (p.epoch)
        j["epoch"] = *p.epoch;
    if (p.iteration)
        j["iteration"] = *p.iteration;
    if (p.layer)
        j["layer"] = *p.layer;
    if (!p.dataset_id.empty())
        j["dataset_id"] = p.dataset_id;
    j["split"] = to_string(p.split);
    if (!p.extra.empty())
        j["extra"] = p.extra;
    return j;
}

/// Known keys of the wrong type (e.g. a named layer from the exporter) and
/// unknown keys land in `extra` as their JSON text.
inline Provenance provenance_from_json(const json & j)
{
    Provenance p;
    if (!j.is_object())
        return p;
    for (const auto & [key, v] : j.items()) {
        const auto as_text = [&] { return v.is_string() ? v.get<std::string>() : v.dump(); };
        if (key == "run_id" && v.is_string())
            p.run_id = v.get<std::string>();
        else if (key == "dataset_id" && v.is_string())
            p.dataset_id = v.get<std::string>();
        else if (key == "epoch" && v.is_number_unsigned())
            p.epoch = v.get<std::size_t>();
        else if (key == "iteration" && v.is_number_unsigned())
            p.iteration = v.get<std::size_t>();
        else if (key == "layer" && v.is_number_unsigned())
            p.layer = v.get<std::size_t>();
        else if (key == "split" && v.is_string() &&
                 (v == "train" || v == "test" || v == "raw"))
            p.split = split_from_string(v.get<std::string>());
        else if (key == "extra" && v.is_object()) {
            for (const auto & [ek, ev] : v.items())
                p.extra[ek] = ev.is_string() ? ev.get<std::string>() : ev.dump();
        } else
            p.extra[key] = as_text();
    }
    return p;
}

//
// atomic file output
//

/// Writes `bytes` to a sibling temp file, then renames it over `path`.
inline void write_file_atomic(const std::filesystem::path & path, const std::string & bytes)
{
    namespace fs = std::filesystem;
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
        if (ec)
            throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
    }
    const fs::path tmp = path.string() + ".tmp" + std::to_string(SUBSPECTRA_GETPID());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw IoError("cannot open " + tmp.string() + " for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out)
            throw IoError("write failed for " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw IoError("cannot move temp file into place at " + path.string());
    }
}

inline std::string read_file_bytes(const std::filesystem::path & path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad())
        throw IoError("read failed for " + path.string());
    return bytes;
}

namespace detail {

inline void put_le(std::string & out, std::uint64_t v, int nbytes)
{
    for (int i = 0; i < nbytes; ++i)
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint64_t get_le(const std::string & in, std::size_t offset, int nbytes)
{
    std::uint64_t v = 0;
    for (int i = 0; i < nbytes; ++i)
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[offset + static_cast<std::size_t>(i)])) << (8 * i);
    return v;
}

} // namespace detail

/// Encoded FMAT bytes for `m` with the given metadata object.
inline std::string encode_fmat(const DenseMatrix & m, const json & metadata)
{
    const std::string meta = metadata.dump();
    detail::require(meta.size() <= std::numeric_limits<std::uint32_t>::max(), "FMAT metadata too large");
    std::string out;
    out.reserve(fmat_header_size + meta.size() + 4 * m.values().size());
    out.append("FMAT", 4);
    detail::put_le(out, fmat_version, 2);
    detail::put_le(out, 0, 1);
    detail::put_le(out, m.rows(), 8);
    detail::put_le(out, m.cols(), 8);
    detail::put_le(out, meta.size(), 4);
    out.append(meta);
    constexpr double f32_max = std::numeric_limits<float>::max();
    for (double x : m.values()) {
        detail::require(std::abs(x) <= f32_max, "FMAT: value " + std::to_string(x) + " overflows f32");
        detail::put_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(x)), 4);
    }
    return out;
}

struct FmatContents
{
    DenseMatrix data;
    json metadata;
};

inline FmatContents decode_fmat(const std::string & in, const std::string & name = "<memory>")
{
    const auto fail = [&](const std::string & what) -> FormatError { return FormatError(name + ": " + what); };
    if (in.size() < 4 || in.compare(0, 4, "FMAT") != 0)
        throw fail("bad magic at offset 0 (expected 'FMAT')");
    if (in.size() < fmat_header_size)
        throw fail("truncated header: expected " + std::to_string(fmat_header_size) + " bytes, got " +
                   std::to_string(in.size()));
    const auto version = detail::get_le(in, 4, 2);
    if (version != fmat_version)
        throw fail("unsupported FMAT version " + std::to_string(version) + " at offset 4");
    const auto dtype = detail::get_le(in, 6, 1);
    if (dtype != 0)
        throw fail("unsupported dtype " + std::to_string(dtype) + " at offset 6 (only 0 = f32)");
    const std::uint64_t rows = detail::get_le(in, 7, 8);
    const std::uint64_t cols = detail::get_le(in, 15, 8);
    const std::uint64_t meta_len = detail::get_le(in, 23, 4);
    if (rows == 0 || cols == 0)
        throw fail("empty matrix in header (rows=" + std::to_string(rows) + ", cols=" + std::to_string(cols) + ")");
    if (in.size() < fmat_header_size + meta_len)
        throw fail("truncated metadata: expected " + std::to_string(meta_len) + " bytes at offset 27");
    const std::uint64_t max_entries = std::numeric_limits<std::uint64_t>::max() / 4;
    if (rows > max_entries / cols)
        throw fail("header dimensions overflow");
    const std::uint64_t expected = rows * cols * 4;
    const std::uint64_t actual = in.size() - fmat_header_size - meta_len;
    if (actual != expected)
        throw fail(std::string(actual < expected ? "truncated payload" : "trailing bytes after payload") +
                   ": expected " + std::to_string(expected) + " bytes, got " + std::to_string(actual));

    json metadata;
    try {
        metadata = meta_len ? json::parse(in.substr(fmat_header_size, meta_len)) : json::object();
    } catch (const json::exception & e) {
        throw fail(std::string("metadata at offset 27 is not valid JSON: ") + e.what());
    }

    std::vector<double> values(rows * cols);
    std::size_t off = fmat_header_size + meta_len;
    for (std::size_t i = 0; i < values.size(); ++i, off += 4) {
        const float f = std::bit_cast<float>(static_cast<std::uint32_t>(detail::get_le(in, off, 4)));
        if (!std::isfinite(f))
            throw fail("non-finite payload value at offset " + std::to_string(off));
        values[i] = f;
    }
    return {DenseMatrix(rows, cols, std::move(values)), std::move(metadata)};
}

inline void write_fmat(const DenseMatrix & m, const json & metadata, const std::filesystem::path & path)
{
    write_file_atomic(path, encode_fmat(m, metadata));
}

inline void write_fmat(const FeatureMatrix & f, const std::filesystem::path & path)
{
    write_fmat(f.data, provenance_to_json(f.source), path);
}

inline FmatContents read_fmat_contents(const std::filesystem::path & path)
{
    return decode_fmat(read_file_bytes(path), path.string());
}

inline FeatureMatrix read_fmat(const std::filesystem::path & path)
{
    auto c = read_fmat_contents(path);
    return FeatureMatrix(std::move(c.data), provenance_from_json(c.metadata));
}

} // namespace subspectra
