#pragma once

// Minimal whole-file helpers shared by fixture loading and config parsing.

#include <filesystem>
#include <fstream>
#include <string>

#include "blindex/bytes.hpp"
#include "blindex/error.hpp"

namespace blindex {

inline Bytes read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) raise(errc::io_error, "cannot open " + path.string());
    Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) raise(errc::io_error, "read failed for " + path.string());
    return data;
}

inline std::string read_text_file(const std::filesystem::path& path) {
    Bytes b = read_file(path);
    return std::string(b.begin(), b.end());
}

inline void write_file(const std::filesystem::path& path, BytesView data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) raise(errc::io_error, "cannot create " + path.string());
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (!out) raise(errc::io_error, "write failed for " + path.string());
}

inline void write_text_file(const std::filesystem::path& path, std::string_view text) {
    write_file(path, to_bytes(text));
}

} // namespace blindex
