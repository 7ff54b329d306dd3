#pragma once

// Trusted client SDK. The client is the other end of everything the proxy
// promises: it runs the key exchange, checks the attestation evidence
// against its pinned trust anchors, and only then lets any value out of
// the process — every sensitive literal leaves as a transit envelope and
// every encrypted result cell comes back as one.
//
// The SDK is transport-agnostic: it drives any `QueryFn` that can submit a
// SQL string and return the buffered result, whether that's a wire
// connection to a live proxy or an in-process dispatcher in tests.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "blindex/attestation.hpp"
#include "blindex/backend.hpp"
#include "blindex/bytes.hpp"
#include "blindex/crypto.hpp"
#include "blindex/envelope.hpp"
#include "blindex/error.hpp"

namespace blindex::client {

using QueryFn = std::function<backend::BufferedResult(const std::string&)>;

inline QueryFn query_over(backend::SqlEndpoint& ep) {
    return [&ep](const std::string& sql) { return backend::run(ep, sql); };
}

// What the client pins ahead of time: the vendor root key and the set of
// program measurements it is willing to talk to.
struct TrustAnchors {
    Bytes pinned_root_public;
    attest::MeasurementSet measurements;
};

class ClientSession {
  public:
    ClientSession(QueryFn query, TrustAnchors anchors)
        : query_(std::move(query)), anchors_(std::move(anchors)) {}

    // ECDH + attestation. Throws attestation_failure unless the report
    // verifies and binds this exact handshake; no key material is used
    // before that point.
    void start() {
        Bytes client_random = crypto::random_bytes(32);
        crypto::KeyPair kp = crypto::ecdh_keygen();

        Bytes payload;
        payload.reserve(97);
        append(payload, client_random);
        append(payload, kp.public_key);

        backend::BufferedResult r =
            query_("SELECT KEY_EXCHANGE('" + to_base64(payload) + "')");
        if (r.rows.size() != 1 || r.rows[0].size() != 1 || !r.rows[0][0])
            raise(errc::protocol_error, "key exchange returned no payload");
        Bytes resp = from_base64(*r.rows[0][0]);

        constexpr size_t kExpected =
            8 + 32 + 65 + attest::AttestationReport::kSize + attest::CertChain::kSize;
        if (resp.size() != kExpected)
            raise(errc::malformed_payload, "key exchange response has the wrong size");

        size_t off = 0;
        uint64_t sid = get_be64(resp, off);
        off += 8;
        Bytes server_random(resp.begin() + off, resp.begin() + off + 32);
        off += 32;
        Bytes server_public(resp.begin() + off, resp.begin() + off + 65);
        off += 65;
        attest::AttestationReport report = attest::AttestationReport::parse(
            BytesView(resp.data() + off, attest::AttestationReport::kSize));
        off += attest::AttestationReport::kSize;
        attest::CertChain chain =
            attest::CertChain::parse(BytesView(resp.data() + off, attest::CertChain::kSize));

        attest::Transcript transcript;
        transcript.client_random = client_random;
        transcript.client_public = kp.public_key;
        transcript.server_random = server_random;
        transcript.server_public = server_public;
        transcript.session_id = sid;

        attest::VerifyResult verdict = attest::verify_report(
            report, chain, anchors_.pinned_root_public, anchors_.measurements, transcript);
        if (verdict != attest::VerifyResult::Accepted)
            raise(errc::attestation_failure,
                  std::string("attestation rejected: ") + attest::to_string(verdict));

        Bytes shared = crypto::ecdh_shared(kp.private_key, server_public);
        crypto::SessionKeys keys =
            crypto::derive_session_keys(shared, client_random, server_random);
        crypto::secure_wipe(shared.data(), shared.size());

        session_id_ = sid;
        c2p_state_.emplace(
            crypto::SessionCipherState{std::move(keys.c2p), crypto::Direction::ClientToProxy, 0});
        p2c_key_.emplace(std::move(keys.p2c));
        verified_ = true;
    }

    bool verified() const { return verified_; }

    uint64_t session_id() const {
        require_verified();
        return session_id_;
    }

    // `... WHERE SESSION_ID(N) AND ...` names this session in statements
    // that carry no envelope for the proxy to read it from.
    std::string session_term() const {
        require_verified();
        return "SESSION_ID(" + std::to_string(session_id_) + ")";
    }

    // Plaintext -> transit envelope, base64. This is the only doorway a
    // sensitive value takes out of the client.
    std::string encrypt_value(BytesView plaintext) {
        require_verified();
        return envelope_encrypt(*c2p_state_, session_id_, plaintext).to_base64();
    }

    std::string encrypt_value(std::string_view plaintext) {
        return encrypt_value(BytesView(reinterpret_cast<const uint8_t*>(plaintext.data()),
                                       plaintext.size()));
    }

    Bytes decrypt_value(const std::string& envelope_b64) const {
        require_verified();
        Envelope env = Envelope::parse_base64(envelope_b64);
        if (env.session_id != session_id_)
            raise(errc::session_id_conflict, "envelope belongs to a different session");
        return envelope_decrypt(*p2c_key_, env);
    }

    std::string decrypt_text(const std::string& envelope_b64) const {
        return to_string(decrypt_value(envelope_b64));
    }

    // Decrypts every envelope cell of a buffered result in place.
    void decrypt_result(backend::BufferedResult& result) const {
        for (auto& row : result.rows)
            for (auto& cell : row)
                if (cell && is_envelope_b64(*cell)) cell = decrypt_text(*cell);
    }

    void register_user(const std::string& username, std::string_view password) {
        run_credential_proc("REGISTER", username, password);
    }

    void login(const std::string& username, std::string_view password) {
        run_credential_proc("LOGIN", username, password);
    }

    backend::BufferedResult query(const std::string& sql) { return query_(sql); }

  private:
    void require_verified() const {
        if (!verified_)
            raise(errc::session_not_verified,
                  "session must complete a verified key exchange first");
    }

    void run_credential_proc(const char* proc, const std::string& username,
                             std::string_view password) {
        require_verified();
        std::string quoted_user;
        for (char c : username) { // '' doubling, the SQL string escape
            quoted_user += c;
            if (c == '\'') quoted_user += c;
        }
        std::string call = std::string("SELECT ") + proc + "('" + quoted_user + "', '" +
                           encrypt_value(password) + "', " + std::to_string(session_id_) + ")";
        backend::BufferedResult r = query_(call);
        if (r.rows.size() != 1 || r.rows[0].size() != 1 || r.rows[0][0] != backend::Value("ok"))
            raise(errc::protocol_error, std::string(proc) + " did not acknowledge");
    }

    QueryFn query_;
    TrustAnchors anchors_;
    uint64_t session_id_ = 0;
    std::optional<crypto::SessionCipherState> c2p_state_;
    std::optional<crypto::SymmetricKey> p2c_key_;
    bool verified_ = false;
};

} // namespace blindex::client
