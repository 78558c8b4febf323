#ifndef CELLCONTRAST_SRC_BINIO_HPP
#define CELLCONTRAST_SRC_BINIO_HPP

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

#include "cellcontrast/errors.hpp"

// Little-endian primitives shared by the binary containers.
namespace cellcontrast::binio {

template<typename U>
void write_le(std::ostream& out, U value) {
    std::array<char, sizeof(U)> bytes;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
        bytes[i] = static_cast<char>((value >> (8 * i)) & 0xff);
    }
    out.write(bytes.data(), bytes.size());
}

inline void write_f32(std::ostream& out, float v) {
    write_le(out, std::bit_cast<std::uint32_t>(v));
}

inline void write_f64(std::ostream& out, double v) {
    write_le(out, std::bit_cast<std::uint64_t>(v));
}

inline void write_magic(std::ostream& out, std::string_view magic) {
    out.write(magic.data(), static_cast<std::streamsize>(magic.size()));
}

/// Reads exactly sizeof(U) bytes; `what` names the field in error messages.
template<typename U>
U read_le(std::istream& in, const std::string& what) {
    std::array<unsigned char, sizeof(U)> bytes;
    in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
    if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
        throw IoError("truncated input while reading " + what);
    }
    U value = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
        value |= static_cast<U>(bytes[i]) << (8 * i);
    }
    return value;
}

inline float read_f32(std::istream& in, const std::string& what) {
    return std::bit_cast<float>(read_le<std::uint32_t>(in, what));
}

inline double read_f64(std::istream& in, const std::string& what) {
    return std::bit_cast<double>(read_le<std::uint64_t>(in, what));
}

inline void expect_magic(std::istream& in, std::string_view magic, const std::string& what) {
    std::string got(magic.size(), '\0');
    in.read(got.data(), static_cast<std::streamsize>(got.size()));
    if (in.gcount() != static_cast<std::streamsize>(magic.size()) || got != magic) {
        throw IoError(what + ": bad magic (expected \"" + std::string(magic) + "\")");
    }
}

}

#endif
