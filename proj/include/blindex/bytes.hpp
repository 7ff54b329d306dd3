#pragma once

#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace blindex {

using Bytes = std::vector<uint8_t>;
using BytesView = std::span<const uint8_t>;

inline Bytes to_bytes(std::string_view s) {
    return Bytes(s.begin(), s.end());
}

inline std::string to_string(BytesView b) {
    return std::string(reinterpret_cast<const char*>(b.data()), b.size());
}

inline void append(Bytes& out, BytesView more) {
    out.insert(out.end(), more.begin(), more.end());
}

inline void append(Bytes& out, std::string_view more) {
    out.insert(out.end(), more.begin(), more.end());
}

// Big-endian 64-bit packing; session IDs, counters and nonces use this layout.
inline void put_be64(Bytes& out, uint64_t v) {
    for (int i = 7; i >= 0; --i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

inline uint64_t get_be64(BytesView b, size_t off = 0) {
    uint64_t v = 0;
    for (size_t i = 0; i < 8; ++i) v = (v << 8) | b[off + i];
    return v;
}

inline void put_be32(Bytes& out, uint32_t v) {
    for (int i = 3; i >= 0; --i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

inline uint32_t get_be32(BytesView b, size_t off = 0) {
    uint32_t v = 0;
    for (size_t i = 0; i < 4; ++i) v = (v << 8) | b[off + i];
    return v;
}

inline Bytes be64(uint64_t v) {
    Bytes b;
    b.reserve(8);
    put_be64(b, v);
    return b;
}

// Constant-time comparison; avoids early-exit on secret material.
inline bool ct_equal(BytesView a, BytesView b) {
    if (a.size() != b.size()) return false;
    uint8_t d = 0;
    for (size_t i = 0; i < a.size(); ++i) d |= static_cast<uint8_t>(a[i] ^ b[i]);
    return d == 0;
}

inline std::string to_hex(BytesView b) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string s;
    s.reserve(b.size() * 2);
    for (uint8_t c : b) {
        s.push_back(digits[c >> 4]);
        s.push_back(digits[c & 0x0f]);
    }
    return s;
}

inline int hex_nibble(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

inline Bytes from_hex(std::string_view s) {
    if (s.size() % 2 != 0) throw std::invalid_argument("hex string has odd length");
    Bytes out;
    out.reserve(s.size() / 2);
    for (size_t i = 0; i < s.size(); i += 2) {
        int hi = hex_nibble(s[i]), lo = hex_nibble(s[i + 1]);
        if (hi < 0 || lo < 0) throw std::invalid_argument("invalid hex digit");
        out.push_back(static_cast<uint8_t>((hi << 4) | lo));
    }
    return out;
}

namespace detail {
inline constexpr char b64_alphabet[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

inline int b64_value(char c) {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
}
} // namespace detail

// Standard base64 with padding (RFC 4648).
inline std::string to_base64(BytesView b) {
    std::string s;
    s.reserve(((b.size() + 2) / 3) * 4);
    size_t i = 0;
    for (; i + 3 <= b.size(); i += 3) {
        uint32_t v = (b[i] << 16) | (b[i + 1] << 8) | b[i + 2];
        s.push_back(detail::b64_alphabet[(v >> 18) & 63]);
        s.push_back(detail::b64_alphabet[(v >> 12) & 63]);
        s.push_back(detail::b64_alphabet[(v >> 6) & 63]);
        s.push_back(detail::b64_alphabet[v & 63]);
    }
    size_t rem = b.size() - i;
    if (rem == 1) {
        uint32_t v = b[i] << 16;
        s.push_back(detail::b64_alphabet[(v >> 18) & 63]);
        s.push_back(detail::b64_alphabet[(v >> 12) & 63]);
        s.append("==");
    } else if (rem == 2) {
        uint32_t v = (b[i] << 16) | (b[i + 1] << 8);
        s.push_back(detail::b64_alphabet[(v >> 18) & 63]);
        s.push_back(detail::b64_alphabet[(v >> 12) & 63]);
        s.push_back(detail::b64_alphabet[(v >> 6) & 63]);
        s.push_back('=');
    }
    return s;
}

// Strict decode: rejects whitespace, bad padding and non-alphabet bytes.
// Returns false instead of throwing; envelope detection probes arbitrary
// SQL string literals with this.
inline bool from_base64(std::string_view s, Bytes& out) {
    if (s.size() % 4 != 0) return false;
    out.clear();
    out.reserve(s.size() / 4 * 3);
    for (size_t i = 0; i < s.size(); i += 4) {
        int pad = 0;
        uint32_t v = 0;
        for (size_t j = 0; j < 4; ++j) {
            char c = s[i + j];
            if (c == '=') {
                // '=' only valid in the last group, positions 2..3.
                if (i + 4 != s.size() || j < 2) return false;
                ++pad;
                v <<= 6;
            } else {
                if (pad > 0) return false;
                int d = detail::b64_value(c);
                if (d < 0) return false;
                v = (v << 6) | static_cast<uint32_t>(d);
            }
        }
        out.push_back(static_cast<uint8_t>(v >> 16));
        if (pad < 2) out.push_back(static_cast<uint8_t>(v >> 8));
        if (pad < 1) out.push_back(static_cast<uint8_t>(v));
    }
    return true;
}

inline Bytes from_base64(std::string_view s) {
    Bytes out;
    if (!from_base64(s, out)) throw std::invalid_argument("invalid base64");
    return out;
}

} // namespace blindex
