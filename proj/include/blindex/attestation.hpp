#pragma once

// Simulated SEV-SNP-style attestation. The proxy-side issuer signs a
// fixed-width report whose report_data field binds the key-exchange
// transcript; the client-side verifier walks a three-level certificate
// chain to a pinned root and checks, in order: chain, report signature,
// measurement allow-list, transcript binding. The layout is a simplified
// fixed-width structure, not the real hardware ABI — the security argument
// needs the binding semantics, not AMD's exact bytes.
//
// Wire widths (all big-endian where multi-byte):
//   Transcript  = client_random(32) || client_public(65) ||
//                 server_random(32) || server_public(65) || session_id(8)   = 202 B
//   Report      = version u32(4) || measurement(48) || report_data(64) ||
//                 chip_id(64) || ECDSA-P-384 signature r||s (96)            = 276 B
//                 (signature covers the preceding 180 bytes, SHA-384)
//   Certificate = role u8(1) || P-384 uncompressed public key(97) ||
//                 parent signature r||s (96, over role||public key)         = 194 B
//   Chain       = signer || intermediate || root certificates              = 582 B

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <set>
#include <string>

#include "blindex/bytes.hpp"
#include "blindex/crypto.hpp"
#include "blindex/error.hpp"
#include "blindex/io.hpp"

namespace blindex::attest {

struct Transcript {
    Bytes client_random;  // 32
    Bytes client_public;  // 65
    Bytes server_random;  // 32
    Bytes server_public;  // 65
    uint64_t session_id = 0;

    static constexpr size_t kSize = 32 + 65 + 32 + 65 + 8;

    Bytes serialize() const {
        if (client_random.size() != 32 || client_public.size() != 65 ||
            server_random.size() != 32 || server_public.size() != 65)
            raise(errc::invalid_params, "transcript field width wrong");
        Bytes out;
        out.reserve(kSize);
        append(out, client_random);
        append(out, client_public);
        append(out, server_random);
        append(out, server_public);
        append(out, be64(session_id));
        return out;
    }
};

inline Bytes transcript_hash(const Transcript& t) { return crypto::sha256(t.serialize()); }

struct AttestationReport {
    static constexpr uint32_t kVersion = 1;
    static constexpr size_t kSignedPrefix = 4 + 48 + 64 + 64; // 180
    static constexpr size_t kSize = kSignedPrefix + 96;       // 276

    uint32_t version = kVersion;
    std::array<uint8_t, 48> measurement{};
    std::array<uint8_t, 64> report_data{};
    std::array<uint8_t, 64> chip_id{};
    std::array<uint8_t, 96> signature{};

    Bytes signed_prefix() const {
        Bytes out;
        out.reserve(kSignedPrefix);
        put_be32(out, version);
        append(out, BytesView(measurement.data(), measurement.size()));
        append(out, BytesView(report_data.data(), report_data.size()));
        append(out, BytesView(chip_id.data(), chip_id.size()));
        return out;
    }

    Bytes serialize() const {
        Bytes out = signed_prefix();
        append(out, BytesView(signature.data(), signature.size()));
        return out;
    }

    static AttestationReport parse(BytesView raw) {
        if (raw.size() != kSize) raise(errc::malformed_payload, "attestation report must be 276 bytes");
        AttestationReport r;
        r.version = get_be32(raw, 0);
        std::memcpy(r.measurement.data(), raw.data() + 4, 48);
        std::memcpy(r.report_data.data(), raw.data() + 52, 64);
        std::memcpy(r.chip_id.data(), raw.data() + 116, 64);
        std::memcpy(r.signature.data(), raw.data() + 180, 96);
        return r;
    }
};

enum class CertRole : uint8_t { Signer = 1, Intermediate = 2, Root = 3 };

struct Certificate {
    static constexpr size_t kSignedPrefix = 1 + 97; // role || public key
    static constexpr size_t kSize = kSignedPrefix + 96; // 194

    CertRole role = CertRole::Signer;
    Bytes public_key;                 // 97, uncompressed P-384 point
    std::array<uint8_t, 96> signature{}; // by parent; root signs itself

    Bytes signed_prefix() const {
        Bytes out;
        out.reserve(kSignedPrefix);
        out.push_back(static_cast<uint8_t>(role));
        append(out, public_key);
        return out;
    }

    Bytes serialize() const {
        Bytes out = signed_prefix();
        append(out, BytesView(signature.data(), signature.size()));
        return out;
    }

    static Certificate parse(BytesView raw) {
        if (raw.size() != kSize) raise(errc::malformed_payload, "certificate must be 194 bytes");
        Certificate c;
        c.role = static_cast<CertRole>(raw[0]);
        c.public_key.assign(raw.begin() + 1, raw.begin() + 98);
        std::memcpy(c.signature.data(), raw.data() + 98, 96);
        return c;
    }
};

struct CertChain {
    static constexpr size_t kSize = 3 * Certificate::kSize; // 582

    Certificate signer;
    Certificate intermediate;
    Certificate root;

    Bytes serialize() const {
        Bytes out;
        out.reserve(kSize);
        append(out, signer.serialize());
        append(out, intermediate.serialize());
        append(out, root.serialize());
        return out;
    }

    static CertChain parse(BytesView raw) {
        if (raw.size() != kSize) raise(errc::malformed_payload, "certificate chain must be 582 bytes");
        CertChain c;
        c.signer = Certificate::parse(raw.subspan(0, Certificate::kSize));
        c.intermediate = Certificate::parse(raw.subspan(Certificate::kSize, Certificate::kSize));
        c.root = Certificate::parse(raw.subspan(2 * Certificate::kSize, Certificate::kSize));
        return c;
    }
};

// ---------------------------------------------------------------------------
// Issuer (simulation of the secure processor)
// ---------------------------------------------------------------------------

struct ReportIssuer {
    crypto::P384KeyPair signer_key; // matches chain.signer.public_key
    CertChain chain;
    std::array<uint8_t, 48> measurement{};
    std::array<uint8_t, 64> chip_id{};

    AttestationReport issue(const Transcript& transcript) const {
        AttestationReport r;
        r.measurement = measurement;
        r.chip_id = chip_id;
        Bytes digest = transcript_hash(transcript);
        std::memcpy(r.report_data.data(), digest.data(), digest.size()); // zero-padded to 64
        Bytes sig = crypto::ecdsa_p384_sign(signer_key, r.signed_prefix());
        std::memcpy(r.signature.data(), sig.data(), sig.size());
        return r;
    }
};

// ---------------------------------------------------------------------------
// Verifier (runs inside the client SDK)
// ---------------------------------------------------------------------------

enum class VerifyResult { Accepted, BadChain, BadSignature, BadMeasurement, TranscriptMismatch };

inline const char* to_string(VerifyResult r) {
    switch (r) {
    case VerifyResult::Accepted: return "accepted";
    case VerifyResult::BadChain: return "bad_chain";
    case VerifyResult::BadSignature: return "bad_signature";
    case VerifyResult::BadMeasurement: return "bad_measurement";
    case VerifyResult::TranscriptMismatch: return "transcript_mismatch";
    }
    return "bad_chain";
}

using MeasurementSet = std::set<std::array<uint8_t, 48>>;

// Checks run strictly in this order so every failure has one reason:
// chain to pinned root, report signature, measurement allow-list,
// transcript binding. No acceptance path skips the transcript check.
inline VerifyResult verify_report(const AttestationReport& report, const CertChain& chain,
                                  BytesView pinned_root_public, const MeasurementSet& expected,
                                  const Transcript& transcript) {
    if (chain.root.role != CertRole::Root || chain.intermediate.role != CertRole::Intermediate ||
        chain.signer.role != CertRole::Signer)
        return VerifyResult::BadChain;
    if (chain.root.public_key.size() != 97 ||
        !ct_equal(chain.root.public_key, pinned_root_public))
        return VerifyResult::BadChain;
    if (!crypto::ecdsa_p384_verify(chain.root.public_key, chain.root.signed_prefix(),
                                   BytesView(chain.root.signature.data(), 96)))
        return VerifyResult::BadChain;
    if (!crypto::ecdsa_p384_verify(chain.root.public_key, chain.intermediate.signed_prefix(),
                                   BytesView(chain.intermediate.signature.data(), 96)))
        return VerifyResult::BadChain;
    if (!crypto::ecdsa_p384_verify(chain.intermediate.public_key, chain.signer.signed_prefix(),
                                   BytesView(chain.signer.signature.data(), 96)))
        return VerifyResult::BadChain;

    if (report.version != AttestationReport::kVersion ||
        !crypto::ecdsa_p384_verify(chain.signer.public_key, report.signed_prefix(),
                                   BytesView(report.signature.data(), 96)))
        return VerifyResult::BadSignature;

    if (expected.find(report.measurement) == expected.end())
        return VerifyResult::BadMeasurement;

    Bytes digest = transcript_hash(transcript);
    std::array<uint8_t, 64> expected_data{};
    std::memcpy(expected_data.data(), digest.data(), digest.size());
    if (!ct_equal(BytesView(report.report_data.data(), 64),
                  BytesView(expected_data.data(), 64)))
        return VerifyResult::TranscriptMismatch;

    return VerifyResult::Accepted;
}

// ---------------------------------------------------------------------------
// Fixtures: a generated three-level chain for the simulated issuer
// ---------------------------------------------------------------------------
// Directory layout: signer.key (48B scalar), chain.bin (582B),
// measurement.bin (48B), chip_id.bin (64B), root.cert (194B convenience
// copy of the chain's root, which clients pin).

struct FixtureMaterial {
    ReportIssuer issuer;
    Bytes pinned_root_public;
};

inline FixtureMaterial generate_fixture_material() {
    crypto::P384KeyPair root_key = crypto::p384_keygen();
    crypto::P384KeyPair inter_key = crypto::p384_keygen();
    crypto::P384KeyPair signer_key = crypto::p384_keygen();

    CertChain chain;
    chain.root.role = CertRole::Root;
    chain.root.public_key = root_key.public_key;
    Bytes sig = crypto::ecdsa_p384_sign(root_key, chain.root.signed_prefix());
    std::memcpy(chain.root.signature.data(), sig.data(), 96);

    chain.intermediate.role = CertRole::Intermediate;
    chain.intermediate.public_key = inter_key.public_key;
    sig = crypto::ecdsa_p384_sign(root_key, chain.intermediate.signed_prefix());
    std::memcpy(chain.intermediate.signature.data(), sig.data(), 96);

    chain.signer.role = CertRole::Signer;
    chain.signer.public_key = signer_key.public_key;
    sig = crypto::ecdsa_p384_sign(inter_key, chain.signer.signed_prefix());
    std::memcpy(chain.signer.signature.data(), sig.data(), 96);

    FixtureMaterial m;
    m.issuer.signer_key = std::move(signer_key);
    m.issuer.chain = chain;
    Bytes meas = crypto::random_bytes(48);
    Bytes chip = crypto::random_bytes(64);
    std::memcpy(m.issuer.measurement.data(), meas.data(), 48);
    std::memcpy(m.issuer.chip_id.data(), chip.data(), 64);
    m.pinned_root_public = root_key.public_key;
    return m;
}

inline void write_fixture(const std::filesystem::path& dir, const FixtureMaterial& m) {
    std::filesystem::create_directories(dir);
    write_file(dir / "signer.key", m.issuer.signer_key.private_key);
    write_file(dir / "chain.bin", m.issuer.chain.serialize());
    write_file(dir / "measurement.bin", BytesView(m.issuer.measurement.data(), 48));
    write_file(dir / "chip_id.bin", BytesView(m.issuer.chip_id.data(), 64));
    write_file(dir / "root.cert", m.issuer.chain.root.serialize());
}

inline ReportIssuer load_issuer(const std::filesystem::path& dir) {
    ReportIssuer issuer;
    Bytes priv = read_file(dir / "signer.key");
    issuer.signer_key = crypto::p384_keypair_from_private(priv);
    crypto::secure_wipe(priv.data(), priv.size());
    issuer.chain = CertChain::parse(read_file(dir / "chain.bin"));
    Bytes meas = read_file(dir / "measurement.bin");
    Bytes chip = read_file(dir / "chip_id.bin");
    if (meas.size() != 48 || chip.size() != 64)
        raise(errc::config_error, "attestation fixture files have wrong sizes");
    if (issuer.signer_key.public_key != issuer.chain.signer.public_key)
        raise(errc::config_error, "signer key does not match chain leaf");
    std::memcpy(issuer.measurement.data(), meas.data(), 48);
    std::memcpy(issuer.chip_id.data(), chip.data(), 64);
    return issuer;
}

inline Bytes load_pinned_root(const std::filesystem::path& dir) {
    Certificate root = Certificate::parse(read_file(dir / "root.cert"));
    return root.public_key;
}

inline std::array<uint8_t, 48> load_measurement(const std::filesystem::path& dir) {
    Bytes meas = read_file(dir / "measurement.bin");
    if (meas.size() != 48) raise(errc::config_error, "measurement fixture must be 48 bytes");
    std::array<uint8_t, 48> out{};
    std::memcpy(out.data(), meas.data(), 48);
    return out;
}

} // namespace blindex::attest
