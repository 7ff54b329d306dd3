#pragma once

// Transit envelope: the encrypted-value format that travels between client
// and proxy through the untrusted application backend. The session id is
// readable without decryption so the proxy can route the value to the right
// session keys, and it doubles as AEAD associated data so an envelope moved
// to another session fails authentication.
//
//   "BX" || 0x01 || session_id(8, big-endian) || nonce(12) || ciphertext || tag(16)
//
// Total length = plaintext length + 39; base64-encoded wherever it is
// embedded in SQL text or JSON (such text always starts with "QlgB").

#include <array>
#include <cstdint>
#include <cstring>
#include <optional>
#include <string>
#include <string_view>

#include "blindex/bytes.hpp"
#include "blindex/crypto.hpp"
#include "blindex/error.hpp"

namespace blindex {

struct Envelope {
    static constexpr size_t kHeaderSize = 2 + 1 + 8 + 12;      // before ciphertext
    static constexpr size_t kMinSize = kHeaderSize + 16;       // empty plaintext
    static constexpr size_t kOverhead = kMinSize;              // 39
    static constexpr char kBase64Prefix[] = "QlgB";            // base64("BX\x01")

    uint64_t session_id = 0;
    std::array<uint8_t, 12> nonce{};
    Bytes body; // ciphertext || 16-byte tag

    Bytes serialize() const {
        Bytes out;
        out.reserve(kHeaderSize + body.size());
        out.push_back('B');
        out.push_back('X');
        out.push_back(0x01);
        append(out, be64(session_id));
        append(out, BytesView(nonce.data(), nonce.size()));
        append(out, body);
        return out;
    }

    std::string to_base64() const { return blindex::to_base64(serialize()); }

    static Envelope parse(BytesView raw) {
        if (raw.size() < kMinSize) raise(errc::malformed_payload, "envelope too short");
        if (raw[0] != 'B' || raw[1] != 'X' || raw[2] != 0x01)
            raise(errc::malformed_payload, "envelope magic/version mismatch");
        Envelope env;
        env.session_id = get_be64(raw, 3);
        std::memcpy(env.nonce.data(), raw.data() + 11, 12);
        env.body.assign(raw.begin() + kHeaderSize, raw.end());
        return env;
    }

    static Envelope parse_base64(std::string_view text) {
        Bytes raw;
        if (!from_base64(text, raw)) raise(errc::malformed_payload, "envelope base64 invalid");
        return parse(raw);
    }
};

// Non-throwing probe used when classifying SQL literals: a string literal
// is treated as an envelope iff it round-trips strict base64 and carries
// the magic/version header at a plausible length.
inline std::optional<Envelope> try_parse_envelope_b64(std::string_view text) {
    if (text.size() < 52 || text.compare(0, 4, Envelope::kBase64Prefix) != 0)
        return std::nullopt; // 52 = base64 length of the 39-byte minimum
    Bytes raw;
    if (!from_base64(text, raw)) return std::nullopt;
    if (raw.size() < Envelope::kMinSize || raw[0] != 'B' || raw[1] != 'X' || raw[2] != 0x01)
        return std::nullopt;
    return Envelope::parse(raw);
}

inline bool is_envelope_b64(std::string_view text) {
    return try_parse_envelope_b64(text).has_value();
}

inline Envelope envelope_encrypt(crypto::SessionCipherState& state, uint64_t session_id,
                                 BytesView plaintext) {
    Envelope env;
    env.session_id = session_id;
    auto [nonce, body] = crypto::session_encrypt(state, plaintext, session_id);
    env.nonce = nonce;
    env.body = std::move(body);
    return env;
}

// The envelope's own session id is the associated data; callers are
// responsible for checking it denotes the session they expect.
inline Bytes envelope_decrypt(const crypto::SymmetricKey& key, const Envelope& env) {
    return crypto::session_decrypt(key, BytesView(env.nonce.data(), env.nonce.size()), env.body,
                                   env.session_id);
}

} // namespace blindex
