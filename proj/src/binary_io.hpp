#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

namespace heml::io {

static_assert(std::endian::native == std::endian::little,
              "snapshot formats are little-endian; byte-swapping is not implemented");

template <typename T>
void write_raw(std::ostream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_raw(std::istream& in) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) throw std::runtime_error("binary read: truncated stream");
    return value;
}

inline void write_magic(std::ostream& out, const char magic[5]) {
    out.write(magic, 4);
}

inline void expect_magic(std::istream& in, const char magic[5]) {
    char buf[4];
    in.read(buf, 4);
    if (!in || std::memcmp(buf, magic, 4) != 0)
        throw std::runtime_error(std::string("binary read: bad magic, expected ") + magic);
}

}  // namespace heml::io
