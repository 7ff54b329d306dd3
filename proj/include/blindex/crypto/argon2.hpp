#pragma once

// Argon2id (RFC 9106, version 0x13). Implemented here because the system
// OpenSSL predates the ARGON2 KDF and libsodium's high-level API fixes the
// lane count at 1, while callers need configurable parallelism. Blake2b
// comes from libsodium; everything else follows the RFC's reference
// fill schedule. Verified against vectors produced by the reference
// libargon2 implementation (see tests).

#include <cstdint>
#include <cstring>
#include <vector>

#include <sodium.h>

#include "blindex/bytes.hpp"
#include "blindex/error.hpp"

namespace blindex::crypto {

struct ArgonParams {
    uint32_t memory_kib = 65536; // 64 MiB
    uint32_t iterations = 3;
    uint32_t parallelism = 1;
};

namespace argon2_detail {

constexpr uint32_t kSyncPoints = 4;
constexpr uint32_t kBlockWords = 128; // 1024-byte blocks as 128 uint64 words
constexpr uint32_t kAddressesPerBlock = 128;
constexpr uint32_t kVersion = 0x13;
constexpr uint32_t kTypeId = 2; // Argon2id

struct Block {
    uint64_t v[kBlockWords];
};

inline void block_xor(Block& dst, const Block& src) {
    for (uint32_t i = 0; i < kBlockWords; ++i) dst.v[i] ^= src.v[i];
}

inline uint64_t rotr64(uint64_t x, unsigned n) { return (x >> n) | (x << (64 - n)); }

// BlaMka mixing: Blake2b's G with the extra 32x32->64 multiply.
inline void gb(uint64_t& a, uint64_t& b, uint64_t& c, uint64_t& d) {
    a = a + b + 2 * (a & 0xFFFFFFFFu) * (b & 0xFFFFFFFFu);
    d = rotr64(d ^ a, 32);
    c = c + d + 2 * (c & 0xFFFFFFFFu) * (d & 0xFFFFFFFFu);
    b = rotr64(b ^ c, 24);
    a = a + b + 2 * (a & 0xFFFFFFFFu) * (b & 0xFFFFFFFFu);
    d = rotr64(d ^ a, 16);
    c = c + d + 2 * (c & 0xFFFFFFFFu) * (d & 0xFFFFFFFFu);
    b = rotr64(b ^ c, 63);
}

inline void permute(uint64_t& v0, uint64_t& v1, uint64_t& v2, uint64_t& v3,
                    uint64_t& v4, uint64_t& v5, uint64_t& v6, uint64_t& v7,
                    uint64_t& v8, uint64_t& v9, uint64_t& v10, uint64_t& v11,
                    uint64_t& v12, uint64_t& v13, uint64_t& v14, uint64_t& v15) {
    gb(v0, v4, v8, v12);
    gb(v1, v5, v9, v13);
    gb(v2, v6, v10, v14);
    gb(v3, v7, v11, v15);
    gb(v0, v5, v10, v15);
    gb(v1, v6, v11, v12);
    gb(v2, v7, v8, v13);
    gb(v3, v4, v9, v14);
}

// next = G(prev, ref) [^ next when with_xor]; G runs the permutation over
// rows then columns of the 8x16 word matrix.
inline void fill_block(const Block& prev, const Block& ref, Block& next, bool with_xor) {
    Block r;
    for (uint32_t i = 0; i < kBlockWords; ++i) r.v[i] = prev.v[i] ^ ref.v[i];
    Block tmp = r;
    if (with_xor) {
        for (uint32_t i = 0; i < kBlockWords; ++i) r.v[i] ^= next.v[i];
    }
    for (uint32_t i = 0; i < 8; ++i) {
        uint64_t* w = &tmp.v[16 * i];
        permute(w[0], w[1], w[2], w[3], w[4], w[5], w[6], w[7],
                w[8], w[9], w[10], w[11], w[12], w[13], w[14], w[15]);
    }
    for (uint32_t i = 0; i < 8; ++i) {
        uint64_t* c = tmp.v;
        permute(c[2 * i], c[2 * i + 1], c[2 * i + 16], c[2 * i + 17],
                c[2 * i + 32], c[2 * i + 33], c[2 * i + 48], c[2 * i + 49],
                c[2 * i + 64], c[2 * i + 65], c[2 * i + 80], c[2 * i + 81],
                c[2 * i + 96], c[2 * i + 97], c[2 * i + 112], c[2 * i + 113]);
    }
    for (uint32_t i = 0; i < kBlockWords; ++i) next.v[i] = tmp.v[i] ^ r.v[i];
}

inline void store_le32(Bytes& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v));
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v >> 16));
    out.push_back(static_cast<uint8_t>(v >> 24));
}

inline Bytes blake2b(BytesView in, size_t outlen) {
    Bytes out(outlen);
    if (crypto_generichash_blake2b(out.data(), outlen, in.data(), in.size(), nullptr, 0) != 0)
        raise(errc::crypto_failure, "blake2b failed");
    return out;
}

// Variable-length hash H' (RFC 9106 section 3.3).
inline void hash_prime(BytesView in, uint8_t* out, uint32_t outlen) {
    Bytes pre;
    pre.reserve(4 + in.size());
    store_le32(pre, outlen);
    append(pre, in);
    if (outlen <= 64) {
        Bytes h = blake2b(pre, outlen);
        std::memcpy(out, h.data(), outlen);
        return;
    }
    uint32_t produced = 0;
    Bytes v = blake2b(pre, 64);
    std::memcpy(out, v.data(), 32);
    produced = 32;
    while (outlen - produced > 64) {
        v = blake2b(v, 64);
        std::memcpy(out + produced, v.data(), 32);
        produced += 32;
    }
    v = blake2b(v, outlen - produced);
    std::memcpy(out + produced, v.data(), outlen - produced);
}

inline void load_block_le(Block& b, const uint8_t* bytes) {
    for (uint32_t i = 0; i < kBlockWords; ++i) {
        uint64_t w = 0;
        for (int j = 7; j >= 0; --j) w = (w << 8) | bytes[8 * i + j];
        b.v[i] = w;
    }
}

inline void store_block_le(const Block& b, uint8_t* bytes) {
    for (uint32_t i = 0; i < kBlockWords; ++i) {
        uint64_t w = b.v[i];
        for (uint32_t j = 0; j < 8; ++j) bytes[8 * i + j] = static_cast<uint8_t>(w >> (8 * j));
    }
}

struct Instance {
    std::vector<Block> memory;
    uint32_t passes, lanes, lane_length, segment_length, memory_blocks;
};

// Maps the 32-bit J1 onto the reference area; ports the RFC's index_alpha.
inline uint32_t index_alpha(const Instance& inst, uint32_t pass, uint32_t slice,
                            uint32_t index, uint32_t j1, bool same_lane) {
    uint32_t area;
    if (pass == 0) {
        if (slice == 0) {
            area = index - 1;
        } else if (same_lane) {
            area = slice * inst.segment_length + index - 1;
        } else {
            area = slice * inst.segment_length - (index == 0 ? 1 : 0);
        }
    } else if (same_lane) {
        area = inst.lane_length - inst.segment_length + index - 1;
    } else {
        area = inst.lane_length - inst.segment_length - (index == 0 ? 1 : 0);
    }
    uint64_t rel = j1;
    rel = (rel * rel) >> 32;
    rel = area - 1 - ((area * rel) >> 32);
    uint32_t start = 0;
    if (pass != 0) start = (slice == kSyncPoints - 1) ? 0 : (slice + 1) * inst.segment_length;
    return static_cast<uint32_t>((start + rel) % inst.lane_length);
}

inline void fill_segment(Instance& inst, uint32_t pass, uint32_t lane, uint32_t slice) {
    // Argon2id: data-independent addressing for the first half of pass 0.
    const bool independent = (pass == 0) && (slice < kSyncPoints / 2);

    Block address_block{}, input_block{}, zero_block{};
    if (independent) {
        input_block.v[0] = pass;
        input_block.v[1] = lane;
        input_block.v[2] = slice;
        input_block.v[3] = inst.memory_blocks;
        input_block.v[4] = inst.passes;
        input_block.v[5] = kTypeId;
    }
    auto next_addresses = [&] {
        input_block.v[6]++;
        fill_block(zero_block, input_block, address_block, false);
        fill_block(zero_block, address_block, address_block, false);
    };

    uint32_t starting_index = 0;
    if (pass == 0 && slice == 0) {
        starting_index = 2; // blocks 0 and 1 are seeded from H0
        if (independent) next_addresses();
    }

    uint32_t curr_offset = lane * inst.lane_length + slice * inst.segment_length + starting_index;
    uint32_t prev_offset = (curr_offset % inst.lane_length == 0)
                               ? curr_offset + inst.lane_length - 1
                               : curr_offset - 1;

    for (uint32_t i = starting_index; i < inst.segment_length; ++i, ++curr_offset) {
        if (curr_offset % inst.lane_length == 1) prev_offset = curr_offset - 1;
        uint64_t pseudo_rand;
        if (independent) {
            if (i % kAddressesPerBlock == 0) next_addresses();
            pseudo_rand = address_block.v[i % kAddressesPerBlock];
        } else {
            pseudo_rand = inst.memory[prev_offset].v[0];
        }

        uint32_t ref_lane = static_cast<uint32_t>((pseudo_rand >> 32) % inst.lanes);
        if (pass == 0 && slice == 0) ref_lane = lane;
        bool same_lane = (ref_lane == lane);
        uint32_t ref_index = index_alpha(inst, pass, slice, i,
                                         static_cast<uint32_t>(pseudo_rand & 0xFFFFFFFFu), same_lane);
        const Block& ref = inst.memory[ref_lane * inst.lane_length + ref_index];
        fill_block(inst.memory[prev_offset], ref, inst.memory[curr_offset], pass != 0);
        prev_offset = curr_offset;
    }
}

} // namespace argon2_detail

// Derives `outlen` bytes from (password, salt) under the given cost
// parameters. Deterministic; throws invalid_params on out-of-range costs.
inline Bytes argon2id(BytesView password, BytesView salt, const ArgonParams& params,
                      uint32_t outlen = 32) {
    using namespace argon2_detail;
    if (params.parallelism < 1 || params.parallelism > 0xFFFFFF)
        raise(errc::invalid_params, "argon2 parallelism out of range");
    if (params.iterations < 1) raise(errc::invalid_params, "argon2 iterations must be >= 1");
    if (params.memory_kib < 8 * params.parallelism)
        raise(errc::invalid_params, "argon2 memory too small for lane count");
    if (outlen < 4) raise(errc::invalid_params, "argon2 output too short");
    if (salt.size() < 8) raise(errc::invalid_params, "argon2 salt too short");

    // H0 = Blake2b-64(p, T, m, t, v, y, |P|, P, |S|, S, |K|=0, |X|=0)
    Bytes h0_input;
    store_le32(h0_input, params.parallelism);
    store_le32(h0_input, outlen);
    store_le32(h0_input, params.memory_kib);
    store_le32(h0_input, params.iterations);
    store_le32(h0_input, kVersion);
    store_le32(h0_input, kTypeId);
    store_le32(h0_input, static_cast<uint32_t>(password.size()));
    append(h0_input, password);
    store_le32(h0_input, static_cast<uint32_t>(salt.size()));
    append(h0_input, salt);
    store_le32(h0_input, 0);
    store_le32(h0_input, 0);
    Bytes h0 = blake2b(h0_input, 64);
    sodium_memzero(h0_input.data(), h0_input.size());

    Instance inst;
    inst.lanes = params.parallelism;
    inst.passes = params.iterations;
    uint32_t mem = params.memory_kib;
    if (mem < 2 * kSyncPoints * inst.lanes) mem = 2 * kSyncPoints * inst.lanes;
    inst.memory_blocks = (mem / (kSyncPoints * inst.lanes)) * (kSyncPoints * inst.lanes);
    inst.segment_length = inst.memory_blocks / (inst.lanes * kSyncPoints);
    inst.lane_length = inst.segment_length * kSyncPoints;
    inst.memory.resize(inst.memory_blocks);

    // First two blocks of each lane from H'(H0 || i || lane).
    for (uint32_t lane = 0; lane < inst.lanes; ++lane) {
        for (uint32_t i = 0; i < 2; ++i) {
            Bytes seed(h0);
            store_le32(seed, i);
            store_le32(seed, lane);
            uint8_t raw[1024];
            hash_prime(seed, raw, 1024);
            load_block_le(inst.memory[lane * inst.lane_length + i], raw);
        }
    }
    sodium_memzero(h0.data(), h0.size());

    // Lanes within a slice are independent; computing them sequentially
    // yields the same function as a threaded fill.
    for (uint32_t pass = 0; pass < inst.passes; ++pass)
        for (uint32_t slice = 0; slice < kSyncPoints; ++slice)
            for (uint32_t lane = 0; lane < inst.lanes; ++lane)
                fill_segment(inst, pass, lane, slice);

    Block final_block = inst.memory[inst.lane_length - 1];
    for (uint32_t lane = 1; lane < inst.lanes; ++lane)
        block_xor(final_block, inst.memory[lane * inst.lane_length + inst.lane_length - 1]);

    uint8_t raw[1024];
    store_block_le(final_block, raw);
    Bytes out(outlen);
    hash_prime(BytesView(raw, 1024), out.data(), outlen);
    sodium_memzero(inst.memory.data(), inst.memory.size() * sizeof(Block));
    return out;
}

} // namespace blindex::crypto
