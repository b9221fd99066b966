#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <set>
#include <string>
#include <vector>

#include "sedid/errors.hpp"
#include "sedid/fsio.hpp"
#include "sedid/tensor.hpp"

namespace sedid {

// Binary tensor container. Layout, all little-endian:
//   magic "SEDD" (4 bytes), version u16
//   per entry: name_len u16, name bytes, dtype u8 {0=f32, 1=f64},
//              ndim u8, dims u32 each, payload (dtype-sized, row-major)
// Entries run until end of file. Names are unique within an archive.

enum class Dtype : uint8_t { f32 = 0, f64 = 1 };

struct ArchiveEntry {
    std::string name;
    Dtype dtype = Dtype::f64;
    Tensor tensor;
};

constexpr uint16_t kArchiveVersion = 1;

namespace detail {

inline void put_u16(std::string& out, uint16_t v) {
    out.push_back(static_cast<char>(v & 0xFF));
    out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

inline void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

struct Reader {
    const std::string& bytes;
    size_t pos = 0;

    bool eof() const { return pos >= bytes.size(); }

    void need(size_t n, const char* what) const {
        if (pos + n > bytes.size())
            throw FormatError(std::string("archive truncated reading ") + what + " at offset " +
                              std::to_string(pos));
    }

    uint8_t u8(const char* what) {
        need(1, what);
        return static_cast<uint8_t>(bytes[pos++]);
    }

    uint16_t u16(const char* what) {
        need(2, what);
        uint16_t v = static_cast<uint8_t>(bytes[pos]) |
                     (static_cast<uint16_t>(static_cast<uint8_t>(bytes[pos + 1])) << 8);
        pos += 2;
        return v;
    }

    uint32_t u32(const char* what) {
        need(4, what);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<uint32_t>(static_cast<uint8_t>(bytes[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }

    uint64_t u64(const char* what) {
        need(8, what);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<uint64_t>(static_cast<uint8_t>(bytes[pos + i])) << (8 * i);
        pos += 8;
        return v;
    }

    std::string str(size_t n, const char* what) {
        need(n, what);
        std::string s = bytes.substr(pos, n);
        pos += n;
        return s;
    }
};

}  // namespace detail

inline std::string archive_serialize(const std::vector<ArchiveEntry>& entries) {
    std::set<std::string> seen;
    for (const auto& e : entries)
        if (!seen.insert(e.name).second)
            throw std::invalid_argument("archive: duplicate entry name '" + e.name + "'");

    std::string out;
    out.append("SEDD");
    detail::put_u16(out, kArchiveVersion);
    for (const auto& e : entries) {
        if (e.name.size() > 0xFFFF) throw std::invalid_argument("archive: entry name too long");
        if (e.tensor.shape().size() > 0xFF) throw std::invalid_argument("archive: too many dims");
        detail::put_u16(out, static_cast<uint16_t>(e.name.size()));
        out.append(e.name);
        out.push_back(static_cast<char>(e.dtype));
        out.push_back(static_cast<char>(e.tensor.shape().size()));
        for (size_t d : e.tensor.shape()) {
            if (d > 0xFFFFFFFFull) throw std::invalid_argument("archive: dimension too large");
            detail::put_u32(out, static_cast<uint32_t>(d));
        }
        if (e.dtype == Dtype::f64) {
            for (size_t i = 0; i < e.tensor.size(); ++i)
                detail::put_u64(out, std::bit_cast<uint64_t>(e.tensor[i]));
        } else {
            for (size_t i = 0; i < e.tensor.size(); ++i) {
                float f = static_cast<float>(e.tensor[i]);
                detail::put_u32(out, std::bit_cast<uint32_t>(f));
            }
        }
    }
    return out;
}

inline std::vector<ArchiveEntry> archive_parse(const std::string& bytes) {
    detail::Reader r{bytes};
    if (r.str(4, "magic") != "SEDD")
        throw FormatError("archive: bad magic at offset 0");
    uint16_t version = r.u16("version");
    if (version != kArchiveVersion)
        throw FormatError("archive: unsupported version " + std::to_string(version) +
                          " at offset 4");

    std::vector<ArchiveEntry> entries;
    std::set<std::string> seen;
    while (!r.eof()) {
        ArchiveEntry e;
        uint16_t name_len = r.u16("name length");
        e.name = r.str(name_len, "name");
        if (!seen.insert(e.name).second)
            throw FormatError("archive: duplicate entry name '" + e.name + "'");
        uint8_t dtype = r.u8("dtype");
        if (dtype > 1)
            throw FormatError("archive: bad dtype " + std::to_string(dtype) + " at offset " +
                              std::to_string(r.pos - 1));
        e.dtype = static_cast<Dtype>(dtype);
        uint8_t ndim = r.u8("ndim");
        if (ndim == 0)
            throw FormatError("archive: zero ndim at offset " + std::to_string(r.pos - 1));
        std::vector<size_t> shape(ndim);
        size_t count = 1;
        for (auto& d : shape) {
            d = r.u32("dim");
            if (d == 0)
                throw FormatError("archive: zero dimension at offset " + std::to_string(r.pos - 4));
            count *= d;
        }
        std::vector<double> data(count);
        if (e.dtype == Dtype::f64) {
            for (auto& v : data) v = std::bit_cast<double>(r.u64("payload"));
        } else {
            for (auto& v : data) v = static_cast<double>(std::bit_cast<float>(r.u32("payload")));
        }
        e.tensor = Tensor(std::move(shape), std::move(data));
        if (!e.tensor.all_finite())
            throw FormatError("archive: non-finite value in entry '" + e.name + "'");
        entries.push_back(std::move(e));
    }
    return entries;
}

inline void archive_write(const std::string& path, const std::vector<ArchiveEntry>& entries) {
    atomic_write_bytes(path, archive_serialize(entries));
}

inline std::vector<ArchiveEntry> archive_read(const std::string& path) {
    return archive_parse(read_file_bytes(path));
}

inline const ArchiveEntry* archive_find(const std::vector<ArchiveEntry>& entries,
                                        const std::string& name) {
    for (const auto& e : entries)
        if (e.name == name) return &e;
    return nullptr;
}

inline const Tensor& archive_get(const std::vector<ArchiveEntry>& entries,
                                 const std::string& name) {
    const ArchiveEntry* e = archive_find(entries, name);
    if (!e) throw FormatError("archive: missing entry '" + name + "'");
    return e->tensor;
}

}  // namespace sedid
