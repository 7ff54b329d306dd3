#pragma once

// Cryptographic primitives and the key-derivation hierarchy. Everything
// here is stateless except SessionCipherState, which carries the transit
// nonce counter. OpenSSL 3.x backs the standard primitives (SHA-256, HMAC,
// HKDF, AES-256-GCM, ChaCha20-Poly1305, P-256 ECDH, P-384 ECDSA); Argon2id
// is local (see crypto/argon2.hpp).

#include <array>
#include <cstdint>
#include <cstring>
#include <memory>
#include <string>
#include <string_view>
#include <utility>

#include <openssl/bn.h>
#include <openssl/core_names.h>
#include <openssl/ec.h>
#include <openssl/ecdsa.h>
#include <openssl/evp.h>
#include <openssl/kdf.h>
#include <openssl/param_build.h>
#include <openssl/rand.h>

#include "blindex/bytes.hpp"
#include "blindex/crypto/argon2.hpp"
#include "blindex/error.hpp"

namespace blindex::crypto {

inline void secure_wipe(void* p, size_t n) {
    if (p != nullptr && n > 0) OPENSSL_cleanse(p, n);
}

inline Bytes random_bytes(size_t n) {
    Bytes out(n);
    if (n > 0 && RAND_bytes(out.data(), static_cast<int>(n)) != 1)
        raise(errc::randomness_failure, "RAND_bytes failed");
    return out;
}

inline uint64_t random_u64() {
    Bytes b = random_bytes(8);
    return get_be64(b);
}

// ---------------------------------------------------------------------------
// Hashing and key derivation
// ---------------------------------------------------------------------------

inline Bytes sha256(BytesView data) {
    Bytes out(32);
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 ||
        len != 32)
        raise(errc::crypto_failure, "SHA-256 failed");
    return out;
}

inline Bytes hmac_sha256(BytesView key, BytesView data) {
    Bytes out(32);
    size_t len = 0;
    if (EVP_Q_mac(nullptr, "HMAC", nullptr, "SHA256", nullptr, key.data(), key.size(),
                  data.data(), data.size(), out.data(), out.size(), &len) == nullptr ||
        len != 32)
        raise(errc::crypto_failure, "HMAC-SHA256 failed");
    return out;
}

// HKDF-SHA256 extract-and-expand. An empty salt behaves per the RFC
// (equivalent to a hash-length block of zeros).
inline Bytes hkdf_sha256(BytesView ikm, BytesView salt, BytesView info, size_t out_len) {
    if (out_len == 0 || out_len > 255 * 32)
        raise(errc::invalid_params, "HKDF output length out of range");
    static EVP_KDF* kdf = EVP_KDF_fetch(nullptr, "HKDF", nullptr);
    if (kdf == nullptr) raise(errc::crypto_failure, "HKDF unavailable");
    std::unique_ptr<EVP_KDF_CTX, decltype(&EVP_KDF_CTX_free)> ctx(EVP_KDF_CTX_new(kdf),
                                                                  EVP_KDF_CTX_free);
    if (!ctx) raise(errc::crypto_failure, "HKDF context allocation failed");

    OSSL_PARAM params[5];
    size_t n = 0;
    params[n++] = OSSL_PARAM_construct_utf8_string(OSSL_KDF_PARAM_DIGEST,
                                                   const_cast<char*>("SHA256"), 0);
    params[n++] = OSSL_PARAM_construct_octet_string(OSSL_KDF_PARAM_KEY,
                                                    const_cast<uint8_t*>(ikm.data()), ikm.size());
    if (!salt.empty())
        params[n++] = OSSL_PARAM_construct_octet_string(
            OSSL_KDF_PARAM_SALT, const_cast<uint8_t*>(salt.data()), salt.size());
    if (!info.empty())
        params[n++] = OSSL_PARAM_construct_octet_string(
            OSSL_KDF_PARAM_INFO, const_cast<uint8_t*>(info.data()), info.size());
    params[n] = OSSL_PARAM_construct_end();

    Bytes out(out_len);
    if (EVP_KDF_derive(ctx.get(), out.data(), out.size(), params) != 1)
        raise(errc::crypto_failure, "HKDF derive failed");
    return out;
}

// ---------------------------------------------------------------------------
// SymmetricKey
// ---------------------------------------------------------------------------

// 32-byte secret. Wipes itself on destruction and never appears in logs or
// error messages; compare with ct_equal semantics via operator==.
class SymmetricKey {
  public:
    static constexpr size_t kSize = 32;

    SymmetricKey() : bytes_{} {}
    explicit SymmetricKey(BytesView b) : bytes_{} {
        if (b.size() != kSize) raise(errc::invalid_params, "symmetric key must be 32 bytes");
        std::memcpy(bytes_.data(), b.data(), kSize);
    }
    static SymmetricKey random() { return SymmetricKey(random_bytes(kSize)); }

    SymmetricKey(const SymmetricKey&) = default;
    SymmetricKey& operator=(const SymmetricKey&) = default;
    SymmetricKey(SymmetricKey&& other) noexcept : bytes_(other.bytes_) { other.wipe(); }
    SymmetricKey& operator=(SymmetricKey&& other) noexcept {
        if (this != &other) {
            bytes_ = other.bytes_;
            other.wipe();
        }
        return *this;
    }
    ~SymmetricKey() { wipe(); }

    const uint8_t* data() const { return bytes_.data(); }
    size_t size() const { return kSize; }
    BytesView view() const { return BytesView(bytes_.data(), kSize); }
    bool operator==(const SymmetricKey& other) const { return ct_equal(view(), other.view()); }
    bool operator!=(const SymmetricKey& other) const { return !(*this == other); }

  private:
    void wipe() { secure_wipe(bytes_.data(), bytes_.size()); }
    std::array<uint8_t, kSize> bytes_;
};

// ---------------------------------------------------------------------------
// Elliptic-curve helpers (P-256 for ECDH, P-384 for report signatures)
// ---------------------------------------------------------------------------

namespace detail {

using BnPtr = std::unique_ptr<BIGNUM, decltype(&BN_free)>;
using PointPtr = std::unique_ptr<EC_POINT, decltype(&EC_POINT_free)>;
using BnCtxPtr = std::unique_ptr<BN_CTX, decltype(&BN_CTX_free)>;
using PkeyPtr = std::unique_ptr<EVP_PKEY, decltype(&EVP_PKEY_free)>;
using PkeyCtxPtr = std::unique_ptr<EVP_PKEY_CTX, decltype(&EVP_PKEY_CTX_free)>;
using MdCtxPtr = std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)>;

inline const EC_GROUP* curve_group(int nid) {
    static const EC_GROUP* p256 = EC_GROUP_new_by_curve_name(NID_X9_62_prime256v1);
    static const EC_GROUP* p384 = EC_GROUP_new_by_curve_name(NID_secp384r1);
    const EC_GROUP* g = (nid == NID_secp384r1) ? p384 : p256;
    if (g == nullptr) raise(errc::crypto_failure, "EC group unavailable");
    return g;
}

// Scalar multiplication of the base point; returns the uncompressed encoding.
inline Bytes ec_public_from_private(int nid, BytesView priv, size_t pub_len) {
    const EC_GROUP* group = curve_group(nid);
    BnCtxPtr bnctx(BN_CTX_new(), BN_CTX_free);
    BnPtr k(BN_bin2bn(priv.data(), static_cast<int>(priv.size()), nullptr), BN_free);
    if (!bnctx || !k) raise(errc::crypto_failure, "BIGNUM allocation failed");
    const BIGNUM* order = EC_GROUP_get0_order(group);
    if (BN_is_zero(k.get()) || BN_cmp(k.get(), order) >= 0)
        raise(errc::invalid_params, "private scalar out of range");
    PointPtr pub(EC_POINT_new(group), EC_POINT_free);
    if (!pub || EC_POINT_mul(group, pub.get(), k.get(), nullptr, nullptr, bnctx.get()) != 1)
        raise(errc::crypto_failure, "EC point multiplication failed");
    Bytes out(pub_len);
    if (EC_POINT_point2oct(group, pub.get(), POINT_CONVERSION_UNCOMPRESSED, out.data(), out.size(),
                           bnctx.get()) != pub_len)
        raise(errc::crypto_failure, "EC point encoding failed");
    BN_clear(k.get());
    return out;
}

inline BnPtr random_scalar(const EC_GROUP* group) {
    const BIGNUM* order = EC_GROUP_get0_order(group);
    BnPtr k(BN_new(), BN_free);
    if (!k) raise(errc::crypto_failure, "BIGNUM allocation failed");
    do {
        if (BN_priv_rand_range(k.get(), order) != 1)
            raise(errc::randomness_failure, "scalar generation failed");
    } while (BN_is_zero(k.get()));
    return k;
}

// Builds an EVP_PKEY for the named group from an uncompressed public point
// and, when signing, the private scalar.
inline PkeyPtr ec_pkey_from_parts(const char* group_name, BytesView pub, BytesView priv) {
    std::unique_ptr<OSSL_PARAM_BLD, decltype(&OSSL_PARAM_BLD_free)> bld(OSSL_PARAM_BLD_new(),
                                                                        OSSL_PARAM_BLD_free);
    BnPtr priv_bn(nullptr, BN_free);
    if (!bld || OSSL_PARAM_BLD_push_utf8_string(bld.get(), OSSL_PKEY_PARAM_GROUP_NAME, group_name,
                                                0) != 1 ||
        OSSL_PARAM_BLD_push_octet_string(bld.get(), OSSL_PKEY_PARAM_PUB_KEY, pub.data(),
                                         pub.size()) != 1)
        raise(errc::crypto_failure, "EC key parameter build failed");
    if (!priv.empty()) {
        priv_bn.reset(BN_bin2bn(priv.data(), static_cast<int>(priv.size()), nullptr));
        if (!priv_bn || OSSL_PARAM_BLD_push_BN(bld.get(), OSSL_PKEY_PARAM_PRIV_KEY,
                                               priv_bn.get()) != 1)
            raise(errc::crypto_failure, "EC key parameter build failed");
    }
    std::unique_ptr<OSSL_PARAM, decltype(&OSSL_PARAM_free)> params(
        OSSL_PARAM_BLD_to_param(bld.get()), OSSL_PARAM_free);
    PkeyCtxPtr ctx(EVP_PKEY_CTX_new_from_name(nullptr, "EC", nullptr), EVP_PKEY_CTX_free);
    EVP_PKEY* raw = nullptr;
    int selection = priv.empty() ? EVP_PKEY_PUBLIC_KEY : EVP_PKEY_KEYPAIR;
    if (!params || !ctx || EVP_PKEY_fromdata_init(ctx.get()) != 1 ||
        EVP_PKEY_fromdata(ctx.get(), &raw, selection, params.get()) != 1)
        raise(errc::crypto_failure, "EC key import failed");
    if (priv_bn) BN_clear(priv_bn.get());
    return PkeyPtr(raw, EVP_PKEY_free);
}

} // namespace detail

// P-256 keypair: 32-byte big-endian private scalar, 65-byte uncompressed
// 0x04-prefixed public point. The private half is wiped on destruction.
struct KeyPair {
    Bytes private_key;
    Bytes public_key;

    KeyPair() = default;
    KeyPair(Bytes priv, Bytes pub) : private_key(std::move(priv)), public_key(std::move(pub)) {}
    KeyPair(const KeyPair&) = default;
    KeyPair& operator=(const KeyPair&) = default;
    KeyPair(KeyPair&&) noexcept = default;
    KeyPair& operator=(KeyPair&&) noexcept = default;
    ~KeyPair() { secure_wipe(private_key.data(), private_key.size()); }
};

inline KeyPair keypair_from_private(BytesView priv) {
    if (priv.size() != 32) raise(errc::invalid_params, "P-256 private key must be 32 bytes");
    Bytes pub = detail::ec_public_from_private(NID_X9_62_prime256v1, priv, 65);
    return KeyPair(Bytes(priv.begin(), priv.end()), std::move(pub));
}

inline KeyPair ecdh_keygen() {
    const EC_GROUP* group = detail::curve_group(NID_X9_62_prime256v1);
    detail::BnPtr k = detail::random_scalar(group);
    Bytes priv(32);
    if (BN_bn2binpad(k.get(), priv.data(), 32) != 32)
        raise(errc::crypto_failure, "scalar encoding failed");
    BN_clear(k.get());
    return keypair_from_private(priv);
}

// x-coordinate of private * peer_public, big-endian, 32 bytes. Rejects
// malformed encodings and off-curve points (tampering in the handshake).
inline Bytes ecdh_shared(BytesView private_key, BytesView peer_public) {
    if (private_key.size() != 32) raise(errc::invalid_params, "P-256 private key must be 32 bytes");
    if (peer_public.size() != 65 || peer_public[0] != 0x04)
        raise(errc::crypto_failure, "peer public key malformed");
    const EC_GROUP* group = detail::curve_group(NID_X9_62_prime256v1);
    detail::BnCtxPtr bnctx(BN_CTX_new(), BN_CTX_free);
    detail::PointPtr peer(EC_POINT_new(group), EC_POINT_free);
    if (!bnctx || !peer) raise(errc::crypto_failure, "EC allocation failed");
    // oct2point verifies the coordinates satisfy the curve equation.
    if (EC_POINT_oct2point(group, peer.get(), peer_public.data(), peer_public.size(),
                           bnctx.get()) != 1 ||
        EC_POINT_is_at_infinity(group, peer.get()) == 1)
        raise(errc::crypto_failure, "peer public key not on curve");
    detail::BnPtr k(BN_bin2bn(private_key.data(), 32, nullptr), BN_free);
    const BIGNUM* order = EC_GROUP_get0_order(group);
    if (!k || BN_is_zero(k.get()) || BN_cmp(k.get(), order) >= 0)
        raise(errc::invalid_params, "private scalar out of range");
    detail::PointPtr shared(EC_POINT_new(group), EC_POINT_free);
    if (!shared ||
        EC_POINT_mul(group, shared.get(), nullptr, peer.get(), k.get(), bnctx.get()) != 1 ||
        EC_POINT_is_at_infinity(group, shared.get()) == 1)
        raise(errc::crypto_failure, "ECDH computation failed");
    detail::BnPtr x(BN_new(), BN_free);
    if (!x ||
        EC_POINT_get_affine_coordinates(group, shared.get(), x.get(), nullptr, bnctx.get()) != 1)
        raise(errc::crypto_failure, "ECDH x-coordinate extraction failed");
    Bytes out(32);
    if (BN_bn2binpad(x.get(), out.data(), 32) != 32)
        raise(errc::crypto_failure, "ECDH x-coordinate encoding failed");
    BN_clear(k.get());
    return out;
}

// ---------------------------------------------------------------------------
// Session (transit) cipher: AES-256-GCM with per-direction keys
// ---------------------------------------------------------------------------

enum class Direction { ClientToProxy, ProxyToClient };

struct SessionKeys {
    SymmetricKey c2p;
    SymmetricKey p2c;
};

// The two directions separate via distinct HKDF info labels; both sides of
// the handshake derive identical keys from the same transcript randoms.
inline SessionKeys derive_session_keys(BytesView shared, BytesView client_random,
                                       BytesView server_random) {
    if (client_random.size() != 32 || server_random.size() != 32)
        raise(errc::invalid_params, "handshake randoms must be 32 bytes");
    Bytes salt;
    append(salt, client_random);
    append(salt, server_random);
    Bytes c2p = hkdf_sha256(shared, salt, to_bytes("bx1:c2p"), 32);
    Bytes p2c = hkdf_sha256(shared, salt, to_bytes("bx1:p2c"), 32);
    SessionKeys keys{SymmetricKey(c2p), SymmetricKey(p2c)};
    secure_wipe(c2p.data(), c2p.size());
    secure_wipe(p2c.data(), p2c.size());
    return keys;
}

struct SessionCipherState {
    SymmetricKey key;
    Direction direction = Direction::ClientToProxy;
    uint64_t counter = 0; // strictly increases; callers serialize per state
};

namespace detail {

using CipherCtxPtr = std::unique_ptr<EVP_CIPHER_CTX, decltype(&EVP_CIPHER_CTX_free)>;

inline Bytes aead_encrypt(const EVP_CIPHER* cipher, BytesView key, BytesView nonce,
                          BytesView plaintext, BytesView ad) {
    CipherCtxPtr ctx(EVP_CIPHER_CTX_new(), EVP_CIPHER_CTX_free);
    int len = 0;
    if (!ctx || EVP_EncryptInit_ex(ctx.get(), cipher, nullptr, key.data(), nonce.data()) != 1)
        raise(errc::crypto_failure, "AEAD init failed");
    if (!ad.empty() &&
        EVP_EncryptUpdate(ctx.get(), nullptr, &len, ad.data(), static_cast<int>(ad.size())) != 1)
        raise(errc::crypto_failure, "AEAD AD failed");
    Bytes out(plaintext.size() + 16);
    int ct_len = 0;
    if (!plaintext.empty()) {
        if (EVP_EncryptUpdate(ctx.get(), out.data(), &len, plaintext.data(),
                              static_cast<int>(plaintext.size())) != 1)
            raise(errc::crypto_failure, "AEAD encrypt failed");
        ct_len = len;
    }
    if (EVP_EncryptFinal_ex(ctx.get(), out.data() + ct_len, &len) != 1)
        raise(errc::crypto_failure, "AEAD finalize failed");
    ct_len += len;
    if (EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_AEAD_GET_TAG, 16, out.data() + ct_len) != 1)
        raise(errc::crypto_failure, "AEAD tag extraction failed");
    out.resize(static_cast<size_t>(ct_len) + 16);
    return out;
}

// body = ciphertext || 16-byte tag; throws decryption_error on tag mismatch.
inline Bytes aead_decrypt(const EVP_CIPHER* cipher, BytesView key, BytesView nonce, BytesView body,
                          BytesView ad) {
    if (body.size() < 16) raise(errc::decryption_error, "ciphertext too short");
    BytesView ct = body.subspan(0, body.size() - 16);
    BytesView tag = body.subspan(body.size() - 16);
    CipherCtxPtr ctx(EVP_CIPHER_CTX_new(), EVP_CIPHER_CTX_free);
    int len = 0;
    if (!ctx || EVP_DecryptInit_ex(ctx.get(), cipher, nullptr, key.data(), nonce.data()) != 1)
        raise(errc::crypto_failure, "AEAD init failed");
    if (!ad.empty() &&
        EVP_DecryptUpdate(ctx.get(), nullptr, &len, ad.data(), static_cast<int>(ad.size())) != 1)
        raise(errc::crypto_failure, "AEAD AD failed");
    Bytes out(ct.size());
    int pt_len = 0;
    if (!ct.empty()) {
        if (EVP_DecryptUpdate(ctx.get(), out.data(), &len, ct.data(),
                              static_cast<int>(ct.size())) != 1)
            raise(errc::decryption_error, "authentication failed");
        pt_len = len;
    }
    if (EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_AEAD_SET_TAG, 16,
                            const_cast<uint8_t*>(tag.data())) != 1)
        raise(errc::crypto_failure, "AEAD tag set failed");
    if (EVP_DecryptFinal_ex(ctx.get(), out.data() + pt_len, &len) != 1)
        raise(errc::decryption_error, "authentication failed");
    out.resize(static_cast<size_t>(pt_len) + len);
    return out;
}

} // namespace detail

inline std::array<uint8_t, 12> session_nonce(uint64_t counter) {
    std::array<uint8_t, 12> nonce{};
    for (int i = 0; i < 8; ++i) nonce[4 + i] = static_cast<uint8_t>(counter >> (8 * (7 - i)));
    return nonce;
}

// Transit encryption. Nonce = 4 zero bytes || counter (big-endian); the
// session id rides along as associated data so an envelope cannot be moved
// between sessions. Counter increments after use and must not reach 2^64-1.
inline std::pair<std::array<uint8_t, 12>, Bytes> session_encrypt(SessionCipherState& state,
                                                                 BytesView plaintext,
                                                                 uint64_t session_id) {
    if (state.counter >= UINT64_MAX - 1)
        raise(errc::counter_exhausted, "session cipher counter exhausted; re-establish session");
    std::array<uint8_t, 12> nonce = session_nonce(state.counter);
    Bytes ad = be64(session_id);
    Bytes body = detail::aead_encrypt(EVP_aes_256_gcm(), state.key.view(), nonce, plaintext, ad);
    state.counter++;
    return {nonce, std::move(body)};
}

// Repeated nonces are accepted by design: a backend may legitimately echo
// the same encrypted value in several queries, so there is no replay window.
inline Bytes session_decrypt(const SymmetricKey& key, BytesView nonce, BytesView body,
                             uint64_t session_id) {
    if (nonce.size() != 12) raise(errc::malformed_payload, "session nonce must be 12 bytes");
    Bytes ad = be64(session_id);
    return detail::aead_decrypt(EVP_aes_256_gcm(), key.view(), nonce, body, ad);
}

// ---------------------------------------------------------------------------
// At-rest cipher: ChaCha20-Poly1305 with random nonces
// ---------------------------------------------------------------------------

// Serialized form: version 0x01 || 12-byte random nonce || ciphertext || tag.
// Total length is plaintext length + 29.
struct StoredCiphertext {
    static constexpr uint8_t kVersion = 0x01;
    static constexpr size_t kOverhead = 1 + 12 + 16;

    std::array<uint8_t, 12> nonce{};
    Bytes body; // ciphertext || 16-byte tag

    Bytes serialize() const {
        Bytes out;
        out.reserve(1 + nonce.size() + body.size());
        out.push_back(kVersion);
        append(out, BytesView(nonce.data(), nonce.size()));
        append(out, body);
        return out;
    }

    static StoredCiphertext parse(BytesView raw) {
        if (raw.size() < kOverhead) raise(errc::malformed_payload, "stored ciphertext too short");
        if (raw[0] != kVersion)
            raise(errc::malformed_payload, "unknown stored ciphertext version");
        StoredCiphertext sc;
        std::memcpy(sc.nonce.data(), raw.data() + 1, 12);
        sc.body.assign(raw.begin() + 13, raw.end());
        return sc;
    }
};

inline StoredCiphertext value_encrypt(const SymmetricKey& column_key, BytesView plaintext,
                                      BytesView ad) {
    StoredCiphertext sc;
    Bytes nonce = random_bytes(12);
    std::memcpy(sc.nonce.data(), nonce.data(), 12);
    sc.body = detail::aead_encrypt(EVP_chacha20_poly1305(), column_key.view(),
                                   BytesView(sc.nonce.data(), 12), plaintext, ad);
    return sc;
}

// Authentication failure signals tampering or — when scanning blind-index
// matches — a row encrypted under a different user's key; callers decide.
inline Bytes value_decrypt(const SymmetricKey& column_key, const StoredCiphertext& sc,
                           BytesView ad) {
    return detail::aead_decrypt(EVP_chacha20_poly1305(), column_key.view(),
                                BytesView(sc.nonce.data(), 12), sc.body, ad);
}

// ---------------------------------------------------------------------------
// Key hierarchy below the user's long-term key
// ---------------------------------------------------------------------------

namespace detail {
inline SymmetricKey derive_labeled_key(const SymmetricKey& ltk, std::string_view purpose,
                                       std::string_view table, std::string_view column) {
    Bytes info;
    append(info, purpose);
    append(info, table);
    info.push_back(0x00); // keeps ("ab","c") and ("a","bc") apart
    append(info, column);
    Bytes k = hkdf_sha256(ltk.view(), {}, info, 32);
    SymmetricKey key(k);
    secure_wipe(k.data(), k.size());
    return key;
}
} // namespace detail

inline SymmetricKey derive_column_key(const SymmetricKey& ltk, std::string_view table,
                                      std::string_view column) {
    return detail::derive_labeled_key(ltk, "col:", table, column);
}

inline SymmetricKey derive_bidx_key(const SymmetricKey& ltk, std::string_view table,
                                    std::string_view column) {
    return detail::derive_labeled_key(ltk, "bidx:", table, column);
}

// ---------------------------------------------------------------------------
// Password KDF (Argon2id)
// ---------------------------------------------------------------------------

inline SymmetricKey kdf_password(BytesView password, BytesView salt, const ArgonParams& params) {
    if (params.memory_kib < 8192) raise(errc::invalid_params, "argon2 memory below 8 MiB floor");
    if (params.iterations < 1) raise(errc::invalid_params, "argon2 iterations must be >= 1");
    if (params.parallelism < 1) raise(errc::invalid_params, "argon2 parallelism must be >= 1");
    if (salt.size() != 16) raise(errc::invalid_params, "password salt must be 16 bytes");
    Bytes out = argon2id(password, salt, params, 32);
    SymmetricKey key(out);
    secure_wipe(out.data(), out.size());
    return key;
}

// Textual form used when persisting registration parameters: "m=65536,t=3,p=1".
inline std::string argon_params_to_string(const ArgonParams& p) {
    return "m=" + std::to_string(p.memory_kib) + ",t=" + std::to_string(p.iterations) +
           ",p=" + std::to_string(p.parallelism);
}

inline ArgonParams argon_params_from_string(std::string_view s) {
    ArgonParams p;
    bool have_m = false, have_t = false, have_p = false;
    size_t pos = 0;
    while (pos < s.size()) {
        size_t end = s.find(',', pos);
        if (end == std::string_view::npos) end = s.size();
        std::string_view field = s.substr(pos, end - pos);
        if (field.size() < 3 || field[1] != '=')
            raise(errc::malformed_payload, "bad KDF parameter field");
        uint32_t value = 0;
        for (char c : field.substr(2)) {
            if (c < '0' || c > '9') raise(errc::malformed_payload, "bad KDF parameter value");
            uint64_t next = static_cast<uint64_t>(value) * 10 + static_cast<uint64_t>(c - '0');
            if (next > UINT32_MAX) raise(errc::malformed_payload, "KDF parameter overflow");
            value = static_cast<uint32_t>(next);
        }
        switch (field[0]) {
        case 'm': p.memory_kib = value; have_m = true; break;
        case 't': p.iterations = value; have_t = true; break;
        case 'p': p.parallelism = value; have_p = true; break;
        default: raise(errc::malformed_payload, "unknown KDF parameter");
        }
        pos = end + 1;
    }
    if (!have_m || !have_t || !have_p) raise(errc::malformed_payload, "incomplete KDF parameters");
    return p;
}

// ---------------------------------------------------------------------------
// ECDSA over P-384 (attestation report and certificate signatures)
// ---------------------------------------------------------------------------

// 48-byte big-endian private scalar, 97-byte uncompressed public point.
struct P384KeyPair {
    Bytes private_key;
    Bytes public_key;
    ~P384KeyPair() { secure_wipe(private_key.data(), private_key.size()); }
};

inline P384KeyPair p384_keypair_from_private(BytesView priv) {
    if (priv.size() != 48) raise(errc::invalid_params, "P-384 private key must be 48 bytes");
    P384KeyPair kp;
    kp.private_key.assign(priv.begin(), priv.end());
    kp.public_key = detail::ec_public_from_private(NID_secp384r1, priv, 97);
    return kp;
}

inline P384KeyPair p384_keygen() {
    const EC_GROUP* group = detail::curve_group(NID_secp384r1);
    detail::BnPtr k = detail::random_scalar(group);
    Bytes priv(48);
    if (BN_bn2binpad(k.get(), priv.data(), 48) != 48)
        raise(errc::crypto_failure, "scalar encoding failed");
    BN_clear(k.get());
    return p384_keypair_from_private(priv);
}

// Signature is raw r||s, each 48 bytes zero-padded, over SHA-384(message).
inline Bytes ecdsa_p384_sign(const P384KeyPair& kp, BytesView message) {
    detail::PkeyPtr pkey = detail::ec_pkey_from_parts("P-384", kp.public_key, kp.private_key);
    detail::MdCtxPtr md(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    if (!md || EVP_DigestSignInit_ex(md.get(), nullptr, "SHA384", nullptr, nullptr, pkey.get(),
                                     nullptr) != 1)
        raise(errc::crypto_failure, "ECDSA sign init failed");
    size_t der_len = 0;
    if (EVP_DigestSign(md.get(), nullptr, &der_len, message.data(), message.size()) != 1)
        raise(errc::crypto_failure, "ECDSA sign sizing failed");
    Bytes der(der_len);
    if (EVP_DigestSign(md.get(), der.data(), &der_len, message.data(), message.size()) != 1)
        raise(errc::crypto_failure, "ECDSA sign failed");
    const uint8_t* p = der.data();
    std::unique_ptr<ECDSA_SIG, decltype(&ECDSA_SIG_free)> sig(
        d2i_ECDSA_SIG(nullptr, &p, static_cast<long>(der_len)), ECDSA_SIG_free);
    if (!sig) raise(errc::crypto_failure, "ECDSA signature decode failed");
    Bytes raw(96);
    if (BN_bn2binpad(ECDSA_SIG_get0_r(sig.get()), raw.data(), 48) != 48 ||
        BN_bn2binpad(ECDSA_SIG_get0_s(sig.get()), raw.data() + 48, 48) != 48)
        raise(errc::crypto_failure, "ECDSA signature encode failed");
    return raw;
}

inline bool ecdsa_p384_verify(BytesView public_key, BytesView message, BytesView signature) {
    if (public_key.size() != 97 || public_key[0] != 0x04 || signature.size() != 96) return false;
    detail::PkeyPtr pkey(nullptr, EVP_PKEY_free);
    try {
        pkey = detail::ec_pkey_from_parts("P-384", public_key, {});
    } catch (const BxError&) {
        return false; // malformed or off-curve public key
    }
    std::unique_ptr<ECDSA_SIG, decltype(&ECDSA_SIG_free)> sig(ECDSA_SIG_new(), ECDSA_SIG_free);
    BIGNUM* r = BN_bin2bn(signature.data(), 48, nullptr);
    BIGNUM* s = BN_bin2bn(signature.data() + 48, 48, nullptr);
    if (!sig || !r || !s || ECDSA_SIG_set0(sig.get(), r, s) != 1) {
        BN_free(r);
        BN_free(s);
        return false;
    }
    uint8_t der[256];
    uint8_t* out = der;
    int der_len = i2d_ECDSA_SIG(sig.get(), &out);
    if (der_len <= 0) return false;
    detail::MdCtxPtr md(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    if (!md || EVP_DigestVerifyInit_ex(md.get(), nullptr, "SHA384", nullptr, nullptr, pkey.get(),
                                       nullptr) != 1)
        return false;
    return EVP_DigestVerify(md.get(), der, static_cast<size_t>(der_len), message.data(),
                            message.size()) == 1;
}

} // namespace blindex::crypto
