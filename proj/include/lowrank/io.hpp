#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "lowrank/linalg.hpp"
#include "lowrank/matfun.hpp"

namespace lowrank {

class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// LRMX: "LRMX", u16 version = 1, u32 rows, u32 cols, rows*cols float64
// row-major; all little-endian.
namespace lrmx {

inline constexpr std::array<char, 4> kMagic{'L', 'R', 'M', 'X'};
inline constexpr std::uint16_t kVersion = 1;
inline constexpr std::size_t kHeaderSize = 4 + 2 + 4 + 4;

namespace detail {

template <class T>
void put_le(std::vector<std::uint8_t>& out, T value) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

template <class T>
T get_le(const std::uint8_t* p) {
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(p[i]) << (8 * i);
    return value;
}

}  // namespace detail

inline std::vector<std::uint8_t> encode(const Matrix& m) {
    std::vector<std::uint8_t> out;
    out.reserve(kHeaderSize + static_cast<std::size_t>(m.size()) * 8);
    for (char c : kMagic) out.push_back(static_cast<std::uint8_t>(c));
    detail::put_le<std::uint16_t>(out, kVersion);
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.rows()));
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.cols()));
    for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = 0; j < m.cols(); ++j) {
            std::uint64_t bits;
            const double v = m(i, j);
            std::memcpy(&bits, &v, sizeof bits);
            detail::put_le<std::uint64_t>(out, bits);
        }
    }
    return out;
}

inline Matrix decode(const std::uint8_t* data, std::size_t size) {
    if (size < kHeaderSize || std::memcmp(data, kMagic.data(), 4) != 0) throw FormatError("LRMX: bad magic");
    const auto version = detail::get_le<std::uint16_t>(data + 4);
    if (version != kVersion) throw FormatError("LRMX: unsupported version " + std::to_string(version));
    const auto rows = detail::get_le<std::uint32_t>(data + 6);
    const auto cols = detail::get_le<std::uint32_t>(data + 10);
    const std::size_t count = static_cast<std::size_t>(rows) * cols;
    if (size != kHeaderSize + count * 8)
        throw FormatError("LRMX: payload size " + std::to_string(size) + " does not match " + shape_str(rows, cols));
    Matrix m(rows, cols);
    const std::uint8_t* p = data + kHeaderSize;
    for (std::uint32_t i = 0; i < rows; ++i) {
        for (std::uint32_t j = 0; j < cols; ++j, p += 8) {
            const auto bits = detail::get_le<std::uint64_t>(p);
            double v;
            std::memcpy(&v, &bits, sizeof v);
            m(i, j) = v;
        }
    }
    return m;
}

inline Matrix decode(const std::vector<std::uint8_t>& bytes) { return decode(bytes.data(), bytes.size()); }

inline void write_file(const std::filesystem::path& path, const Matrix& m) {
    const auto bytes = encode(m);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline Matrix read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return decode(bytes);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

}  // namespace lrmx

namespace base64 {

inline constexpr std::string_view kAlphabet =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

inline std::string encode(const std::vector<std::uint8_t>& bytes) {
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 2 < bytes.size(); i += 3) {
        const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
        out += kAlphabet[(v >> 18) & 63];
        out += kAlphabet[(v >> 12) & 63];
        out += kAlphabet[(v >> 6) & 63];
        out += kAlphabet[v & 63];
    }
    if (i + 1 == bytes.size()) {
        const std::uint32_t v = bytes[i] << 16;
        out += kAlphabet[(v >> 18) & 63];
        out += kAlphabet[(v >> 12) & 63];
        out += "==";
    } else if (i + 2 == bytes.size()) {
        const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8);
        out += kAlphabet[(v >> 18) & 63];
        out += kAlphabet[(v >> 12) & 63];
        out += kAlphabet[(v >> 6) & 63];
        out += '=';
    }
    return out;
}

inline std::vector<std::uint8_t> decode(std::string_view text) {
    if (text.size() % 4 != 0) throw FormatError("base64: length not a multiple of 4");
    auto value = [](char c) -> int {
        const auto pos = kAlphabet.find(c);
        if (pos == std::string_view::npos) throw FormatError(std::string("base64: invalid character '") + c + "'");
        return static_cast<int>(pos);
    };
    std::vector<std::uint8_t> out;
    out.reserve(text.size() / 4 * 3);
    for (std::size_t i = 0; i < text.size(); i += 4) {
        const bool pad2 = text[i + 2] == '=';
        const bool pad3 = text[i + 3] == '=';
        if ((pad2 && !pad3) || ((pad2 || pad3) && i + 4 != text.size())) throw FormatError("base64: misplaced padding");
        std::uint32_t v = (value(text[i]) << 18) | (value(text[i + 1]) << 12);
        if (!pad2) v |= value(text[i + 2]) << 6;
        if (!pad3) v |= value(text[i + 3]);
        out.push_back(static_cast<std::uint8_t>(v >> 16));
        if (!pad2) out.push_back(static_cast<std::uint8_t>(v >> 8));
        if (!pad3) out.push_back(static_cast<std::uint8_t>(v));
    }
    return out;
}

}  // namespace base64

inline std::string matrix_to_base64(const Matrix& m) { return base64::encode(lrmx::encode(m)); }
inline Matrix matrix_from_base64(std::string_view text) { return lrmx::decode(base64::decode(text)); }

/// {"rows": n, "cols": n, "exp": <LRMX-base64 or null>, "poly": [<LRMX-base64>, ...]}
inline nlohmann::json to_json(const ExpPolyMatrix& f) {
    nlohmann::json j;
    j["rows"] = f.rows();
    j["cols"] = f.cols();
    j["exp"] = f.has_exp() ? nlohmann::json(matrix_to_base64(f.exp_coeff())) : nlohmann::json(nullptr);
    j["poly"] = nlohmann::json::array();
    for (const auto& c : f.poly_coeffs()) j["poly"].push_back(matrix_to_base64(c));
    return j;
}

inline ExpPolyMatrix exp_poly_from_json(const nlohmann::json& j) {
    try {
        const auto rows = j.at("rows").get<Index>();
        const auto cols = j.at("cols").get<Index>();
        Matrix e = j.at("exp").is_null() ? Matrix::Zero(rows, cols) : matrix_from_base64(j.at("exp").get<std::string>());
        std::vector<Matrix> poly;
        for (const auto& item : j.at("poly")) poly.push_back(matrix_from_base64(item.get<std::string>()));
        if (e.rows() != rows || e.cols() != cols) throw FormatError("ExpPolyMatrix JSON: exp shape mismatch");
        return ExpPolyMatrix(std::move(e), std::move(poly));
    } catch (const nlohmann::json::exception& ex) {
        throw FormatError(std::string("ExpPolyMatrix JSON: ") + ex.what());
    } catch (const ShapeError& ex) {
        throw FormatError(std::string("ExpPolyMatrix JSON: ") + ex.what());
    }
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << text;
}

// Manifest entries are paths relative to the manifest's directory.
inline Matrix read_manifest_matrix(const std::filesystem::path& manifest_dir, const nlohmann::json& entry,
                                   const std::string& field) {
    if (!entry.contains(field) || !entry.at(field).is_string())
        throw FormatError("manifest: missing string field '" + field + "'");
    std::filesystem::path p = entry.at(field).get<std::string>();
    if (p.is_relative()) p = manifest_dir / p;
    return lrmx::read_file(p);
}

}  // namespace lowrank
