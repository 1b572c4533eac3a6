#pragma once

// Little/big-endian primitive IO shared by the file formats.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "oul/error.hpp"

namespace oul::io {

inline void write_u32_le(std::ostream& out, std::uint32_t v) {
    char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                 static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    out.write(b, 4);
}

inline void write_u16_le(std::ostream& out, std::uint16_t v) {
    char b[2] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
    out.write(b, 2);
}

inline void write_f32_le(std::ostream& out, float v) {
    std::uint32_t bits;
    static_assert(sizeof(bits) == sizeof(v));
    std::memcpy(&bits, &v, 4);
    write_u32_le(out, bits);
}

// Readers throw data_error naming `what` on truncation.
inline std::uint32_t read_u32_le(std::istream& in, const std::string& what) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw data_error(what + ": truncated file");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline std::uint16_t read_u16_le(std::istream& in, const std::string& what) {
    unsigned char b[2];
    if (!in.read(reinterpret_cast<char*>(b), 2)) throw data_error(what + ": truncated file");
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

inline float read_f32_le(std::istream& in, const std::string& what) {
    const std::uint32_t bits = read_u32_le(in, what);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

inline std::uint32_t read_u32_be(std::istream& in, const std::string& what) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw data_error(what + ": truncated file");
    return (static_cast<std::uint32_t>(b[0]) << 24) | (static_cast<std::uint32_t>(b[1]) << 16) |
           (static_cast<std::uint32_t>(b[2]) << 8) | static_cast<std::uint32_t>(b[3]);
}

inline void read_magic(std::istream& in, const char (&expect)[9], const std::string& what) {
    char got[8];
    if (!in.read(got, 8)) throw data_error(what + ": truncated file");
    for (int i = 0; i < 8; ++i) {
        if (got[i] != expect[i]) throw data_error(what + ": bad magic");
    }
}

inline void write_magic(std::ostream& out, const char (&magic)[9]) { out.write(magic, 8); }

inline std::ofstream open_for_write(const std::filesystem::path& path, const std::string& what) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw data_error(what + ": cannot write " + path.string());
    return out;
}

inline std::ifstream open_for_read(const std::filesystem::path& path, const std::string& what) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw data_error(what + ": cannot open " + path.string());
    return in;
}

} // namespace oul::io
