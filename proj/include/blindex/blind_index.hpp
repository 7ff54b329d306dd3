#pragma once

// Truncated keyed-hash blind indices and their sizing math. A blind index
// lets the proxy filter encrypted columns by equality: the stored companion
// column holds the first n bits of HMAC-SHA256(bidx_key, plaintext), so
// equal plaintexts under one key always collide and unequal ones collide
// with probability 2^-n. Sizing trades residual collisions (scan cost)
// against how much the index reveals.

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

#include "blindex/bytes.hpp"
#include "blindex/crypto.hpp"
#include "blindex/error.hpp"

namespace blindex {

struct BlindIndexSpec {
    std::string table;
    std::string column;
    unsigned bits = 16; // 1..256
    std::string companion_column; // defaults to "<column>__bidx"

    BlindIndexSpec() = default;
    BlindIndexSpec(std::string t, std::string c, unsigned n)
        : table(std::move(t)), column(std::move(c)), bits(n),
          companion_column(column + "__bidx") {
        if (bits < 1 || bits > 256) raise(errc::invalid_params, "blind index bits out of range");
    }
};

inline std::string default_companion_column(std::string_view column) {
    return std::string(column) + "__bidx";
}

// ceil(n/8) bytes; surplus high bits of the first byte are zero.
struct BidxValue {
    Bytes bytes;
    std::string hex() const { return to_hex(bytes); } // lowercase, storage form
    bool operator==(const BidxValue&) const = default;
};

// HMAC-SHA256(bidx_key, plaintext), truncated to the leading ceil(n/8)
// bytes with the top (8*ceil(n/8) - n) bits of the first byte cleared.
// Deterministic by construction; NULL handling lives with the callers
// (a missing value simply has no index entry).
inline BidxValue compute_bidx(const crypto::SymmetricKey& bidx_key, BytesView plaintext,
                              const BlindIndexSpec& spec) {
    if (spec.bits < 1 || spec.bits > 256) raise(errc::invalid_params, "blind index bits out of range");
    Bytes mac = crypto::hmac_sha256(bidx_key.view(), plaintext);
    size_t width = (spec.bits + 7) / 8;
    BidxValue out;
    out.bytes.assign(mac.begin(), mac.begin() + static_cast<long>(width));
    unsigned surplus = static_cast<unsigned>(8 * width) - spec.bits;
    out.bytes[0] &= static_cast<uint8_t>(0xFF >> surplus);
    return out;
}

inline std::string compute_bidx_hex(const crypto::SymmetricKey& bidx_key, BytesView plaintext,
                                    const BlindIndexSpec& spec) {
    return compute_bidx(bidx_key, plaintext, spec).hex();
}

// Average extra rows sharing one index value: r * 2^-n.
inline double expected_collisions(uint64_t r, unsigned n) {
    if (n > 1023) return 0.0;
    return std::ldexp(static_cast<double>(r), -static_cast<int>(n));
}

// Smallest n >= 1 with r * 2^-n <= C, i.e. n >= log2(r) - log2(C).
// Works on exact power-of-two scaling, so boundary cases don't wobble.
inline unsigned min_bits(uint64_t r, double target_collisions) {
    if (r < 1) raise(errc::invalid_params, "record count must be >= 1");
    if (target_collisions < 1.0) raise(errc::invalid_params, "target collisions must be >= 1");
    for (unsigned n = 1; n < 64; ++n) {
        if (expected_collisions(r, n) <= target_collisions) return n;
    }
    return 64;
}

enum class SpecHealth { Ok, TooRevealing, TooSlow };

inline const char* to_string(SpecHealth h) {
    switch (h) {
    case SpecHealth::Ok: return "ok";
    case SpecHealth::TooRevealing: return "too_revealing";
    case SpecHealth::TooSlow: return "too_slow";
    }
    return "ok";
}

// Health bands: expected collisions below 2 make index values nearly
// unique (too revealing); above sqrt(r) the residual scan stops paying
// for itself (too slow).
inline SpecHealth validate_spec(uint64_t r, unsigned n) {
    double c = expected_collisions(r, n);
    if (c < 2.0) return SpecHealth::TooRevealing;
    if (c > std::sqrt(static_cast<double>(r))) return SpecHealth::TooSlow;
    return SpecHealth::Ok;
}

} // namespace blindex
