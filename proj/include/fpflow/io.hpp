#pragma once
/// Field serialization (binary and CSV), deterministic number formatting,
/// RFC-4180 CSV framing and content hashing.

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "fpflow/error.hpp"
#include "fpflow/grid.hpp"

namespace fpflow::io {

/// Shortest representation that round-trips.
inline std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::array<char, 32> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), res.ptr);
}

inline std::string fmt(std::int64_t v) { return std::to_string(v); }
inline std::string fmt(std::uint64_t v) { return std::to_string(v); }
inline std::string fmt(int v) { return std::to_string(v); }

/// FNV-1a, 64 bit.
inline std::uint64_t fnv1a(std::string_view data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i, v >>= 4) s[i] = digits[v & 0xf];
    return s;
}

class CsvWriter {
public:
    explicit CsvWriter(const std::filesystem::path& path) : out_(path, std::ios::binary) {
        if (!out_) throw InvalidArgument("cannot open " + path.string() + " for writing");
    }

    static std::string quote(std::string_view field) {
        if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
        std::string s = "\"";
        for (char c : field) {
            if (c == '"') s += '"';
            s += c;
        }
        return s + '"';
    }

    void row(const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) out_ << ',';
            out_ << quote(fields[i]);
        }
        out_ << "\r\n";
    }

    void close() {
        out_.close();
        if (!out_) throw Error("failed writing CSV output");
    }

private:
    std::ofstream out_;
};

/// Splits RFC-4180 text into records (quoted fields may contain separators).
inline std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false, any = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
            continue;
        }
        if (c == '"') {
            quoted = true;
            any = true;
        } else if (c == ',') {
            row.push_back(std::move(field));
            field.clear();
            any = true;
        } else if (c == '\n' || c == '\r') {
            if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
            if (any || !field.empty()) {
                row.push_back(std::move(field));
                rows.push_back(std::move(row));
            }
            row.clear();
            field.clear();
            any = false;
        } else {
            field += c;
            any = true;
        }
    }
    if (quoted) throw InvalidArgument("unterminated quoted CSV field");
    if (any || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidArgument("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text(const std::filesystem::path& path, std::string_view text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidArgument("cannot open " + path.string() + " for writing");
    out << text;
    out.close();
    if (!out) throw Error("failed writing " + path.string());
}

namespace detail {

template <class T>
void put_le(std::string& buf, T v) {
    std::uint64_t bits;
    static_assert(sizeof(T) == 8);
    std::memcpy(&bits, &v, 8);
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

template <class T>
T get_le(const unsigned char* p) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= std::uint64_t(p[i]) << (8 * i);
    T v;
    std::memcpy(&v, &bits, 8);
    return v;
}

}  // namespace detail

/// Header (dim, n as int64, L as float64; little-endian) then n^d float64 values, row-major.
inline std::string encode_binary(const DensityField& u) {
    std::string buf;
    buf.reserve(24 + 8 * u.size());
    detail::put_le<std::int64_t>(buf, u.grid.dim);
    detail::put_le<std::int64_t>(buf, u.grid.cells);
    detail::put_le<double>(buf, u.grid.half_width);
    for (double v : u.values) detail::put_le<double>(buf, v);
    return buf;
}

inline DensityField decode_binary(std::string_view data, DensityKind kind = DensityKind::Signed) {
    if (data.size() < 24) throw InvalidArgument("binary field is shorter than its header");
    const auto* p = reinterpret_cast<const unsigned char*>(data.data());
    GridSpec g;
    const auto dim = detail::get_le<std::int64_t>(p);
    const auto n = detail::get_le<std::int64_t>(p + 8);
    g.half_width = detail::get_le<double>(p + 16);
    if (dim < 1 || dim > 3 || n < 4 || n > (1 << 20)) throw InvalidArgument("binary field header is invalid");
    g.dim = static_cast<int>(dim);
    g.cells = static_cast<int>(n);
    g.validate();
    if (data.size() != 24 + 8 * g.size()) throw InvalidArgument("binary field payload has the wrong length");
    std::vector<double> v(g.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = detail::get_le<double>(p + 24 + 8 * i);
    return DensityField(g, std::move(v), kind);
}

inline void write_binary(const std::filesystem::path& path, const DensityField& u) { write_text(path, encode_binary(u)); }

inline DensityField read_binary(const std::filesystem::path& path, DensityKind kind = DensityKind::Signed) {
    return decode_binary(read_text(path), kind);
}

/// Columns: index, x0[, x1, x2], value (cell centres).
inline void write_csv(const std::filesystem::path& path, const DensityField& u) {
    CsvWriter w(path);
    std::vector<std::string> head{"index"};
    for (int k = 0; k < u.grid.dim; ++k) head.push_back("x" + std::to_string(k));
    head.push_back("value");
    w.row(head);
    for (std::size_t i = 0; i < u.size(); ++i) {
        std::vector<std::string> r{std::to_string(i)};
        const Point c = u.grid.center_of(i);
        for (int k = 0; k < u.grid.dim; ++k) r.push_back(fmt(c[k]));
        r.push_back(fmt(u[i]));
        w.row(r);
    }
    w.close();
}

}  // namespace fpflow::io
