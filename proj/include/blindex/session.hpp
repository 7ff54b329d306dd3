#pragma once

// Session lifecycle for the proxy: ECDH key exchange with attestation,
// user registration and login, expiry. Each session carries the transit
// keys negotiated during key exchange plus — after REGISTER/LOGIN — the
// user's unlocked long-term key from which all at-rest keys derive.
//
// The three flows arrive as custom procedures:
//   SELECT KEY_EXCHANGE('<base64 client_random || client_public>')
//     -> base64 of session_id || server_random || server_public ||
//        attestation report || certificate chain
//   SELECT REGISTER('<user>', '<envelope(password)>', <session_id>) -> 'ok'
//   SELECT LOGIN('<user>', '<envelope(password)>', <session_id>)    -> 'ok'
//
// User records live in the `_blindex_users` table next to the application
// data: the long-term key is wrapped with ChaCha20-Poly1305 under an
// Argon2id-derived KEK, with additional data "bx-user:<username>" so a
// record pasted onto another username fails authentication. Login failures
// are uniform — an unknown username and a wrong password are
// indistinguishable to the caller.

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "blindex/attestation.hpp"
#include "blindex/backend.hpp"
#include "blindex/bytes.hpp"
#include "blindex/crypto.hpp"
#include "blindex/envelope.hpp"
#include "blindex/error.hpp"
#include "blindex/sql/ast.hpp"
#include "blindex/sql/rewriter.hpp"

namespace blindex {

struct Session {
    uint64_t id = 0;
    crypto::SymmetricKey c2p_key; // decrypts client->proxy envelopes
    crypto::SessionCipherState p2c_state; // encrypts proxy->client envelopes
    std::shared_ptr<const crypto::SymmetricKey> ltk; // set by REGISTER/LOGIN
    std::string username;
    std::chrono::steady_clock::time_point created_at;

    std::mutex mu; // guards p2c_state.counter, ltk, username

    Session(uint64_t sid, crypto::SymmetricKey c2p, crypto::SymmetricKey p2c,
            std::chrono::steady_clock::time_point now)
        : id(sid), c2p_key(std::move(c2p)),
          p2c_state{std::move(p2c), crypto::Direction::ProxyToClient, 0}, created_at(now) {}

    // Key material for the rewriter. The shared_ptr keeps the long-term key
    // alive across a re-login on another connection.
    std::pair<rewrite::SessionView, std::shared_ptr<const crypto::SymmetricKey>> view() {
        std::lock_guard<std::mutex> lock(mu);
        rewrite::SessionView v{id, &c2p_key, ltk ? ltk.get() : nullptr};
        return {v, ltk};
    }

    Envelope encrypt_response(BytesView plaintext) {
        std::lock_guard<std::mutex> lock(mu);
        return envelope_encrypt(p2c_state, id, plaintext);
    }

    Bytes decrypt_request(const Envelope& env) {
        if (env.session_id != id)
            raise(errc::session_id_conflict, "envelope belongs to a different session");
        return envelope_decrypt(c2p_key, env);
    }
};

using SessionPtr = std::shared_ptr<Session>;

// Single-row single-column result every custom procedure produces.
struct ProcResult {
    std::string column;
    std::string value;
};

class SessionManager {
  public:
    static constexpr std::chrono::seconds kDefaultTtl = std::chrono::hours(4);
    static constexpr const char* kUsersTable = "_blindex_users";

    SessionManager(attest::ReportIssuer issuer, backend::EndpointPtr endpoint,
                   std::chrono::seconds ttl = kDefaultTtl,
                   crypto::ArgonParams argon = crypto::ArgonParams{})
        : issuer_(std::move(issuer)), endpoint_(std::move(endpoint)), ttl_(ttl), argon_(argon) {}

    // SELECT KEY_EXCHANGE('<base64>'): payload is client_random(32) ||
    // client_public(65). Performs the server half of ECDH, derives the
    // transit keys, and binds the whole handshake into an attestation
    // report. On any failure no session is created.
    ProcResult handle_key_exchange(const std::string& payload_b64) {
        Bytes payload = from_base64(payload_b64);
        if (payload.size() != 97)
            raise(errc::malformed_payload, "key exchange payload must be 97 bytes");
        Bytes client_random(payload.begin(), payload.begin() + 32);
        Bytes client_public(payload.begin() + 32, payload.end());

        crypto::KeyPair server = crypto::ecdh_keygen();
        Bytes server_random = crypto::random_bytes(32);
        Bytes shared = crypto::ecdh_shared(server.private_key, client_public);
        crypto::SessionKeys keys =
            crypto::derive_session_keys(shared, client_random, server_random);
        crypto::secure_wipe(shared.data(), shared.size());

        uint64_t sid = fresh_session_id();

        attest::Transcript transcript;
        transcript.client_random = client_random;
        transcript.client_public = client_public;
        transcript.server_random = server_random;
        transcript.server_public = server.public_key;
        transcript.session_id = sid;
        attest::AttestationReport report = issuer_.issue(transcript);

        Bytes response;
        response.reserve(8 + 32 + 65 + attest::AttestationReport::kSize + attest::CertChain::kSize);
        append(response, be64(sid));
        append(response, server_random);
        append(response, server.public_key);
        append(response, report.serialize());
        append(response, issuer_.chain.serialize());

        auto session = std::make_shared<Session>(sid, std::move(keys.c2p), std::move(keys.p2c),
                                                 std::chrono::steady_clock::now());
        {
            std::lock_guard<std::mutex> lock(mu_);
            sessions_.emplace(sid, std::move(session));
        }
        return {"key_exchange", to_base64(response)};
    }

    // SELECT REGISTER('<user>', '<envelope>', <sid>): mints a fresh
    // long-term key for the user, wraps it under the password KEK, persists
    // the record, and leaves the session logged in.
    ProcResult handle_register(const std::string& username, const std::string& envelope_b64,
                               uint64_t session_id) {
        validate_username(username);
        SessionPtr session = lookup(session_id);
        Bytes password = session->decrypt_request(Envelope::parse_base64(envelope_b64));

        Bytes ltk_bytes = crypto::random_bytes(32);
        Bytes salt = crypto::random_bytes(16);
        Bytes nonce = crypto::random_bytes(12);
        crypto::SymmetricKey kek = crypto::kdf_password(password, salt, argon_);
        crypto::secure_wipe(password.data(), password.size());
        Bytes wrapped = crypto::detail::aead_encrypt(EVP_chacha20_poly1305(), kek.view(), nonce,
                                                     ltk_bytes, user_ad(username));

        std::string sql = std::string("INSERT INTO ") + kUsersTable +
                          " (username, salt, params, nonce, wrapped_key) VALUES (" +
                          sql::quote_string(username) + ", '" + to_hex(salt) + "', '" +
                          crypto::argon_params_to_string(argon_) + "', '" + to_hex(nonce) +
                          "', '" + to_hex(wrapped) + "')";
        try {
            std::lock_guard<std::mutex> lock(users_mu_);
            ensure_users_table();
            if (!fetch_user_row(username).empty())
                raise(errc::register_failed, "username already registered");
            backend::run(*endpoint_, sql);
        } catch (const BxError& e) {
            crypto::secure_wipe(ltk_bytes.data(), ltk_bytes.size());
            if (std::string(e.code()) == errc::duplicate_key)
                raise(errc::register_failed, "username already registered");
            throw;
        }

        attach_ltk(*session, username, ltk_bytes);
        return {"register", "ok"};
    }

    // SELECT LOGIN('<user>', '<envelope>', <sid>): unwraps the stored
    // long-term key under the password KEK. Unknown usernames and wrong
    // passwords fail identically.
    ProcResult handle_login(const std::string& username, const std::string& envelope_b64,
                            uint64_t session_id) {
        validate_username(username);
        SessionPtr session = lookup(session_id);
        Bytes password = session->decrypt_request(Envelope::parse_base64(envelope_b64));

        std::vector<backend::Value> row;
        {
            std::lock_guard<std::mutex> lock(users_mu_);
            ensure_users_table();
            row = fetch_user_row(username);
        }
        if (row.size() != 4 || !row[0] || !row[1] || !row[2] || !row[3]) {
            // Burn a derivation anyway so the caller cannot time-split
            // unknown users from wrong passwords.
            Bytes salt(16, 0x00);
            (void)crypto::kdf_password(password, salt, argon_);
            crypto::secure_wipe(password.data(), password.size());
            raise(errc::login_failed, "invalid credentials");
        }
        Bytes salt = from_hex(*row[0]);
        crypto::ArgonParams params = crypto::argon_params_from_string(*row[1]);
        Bytes nonce = from_hex(*row[2]);
        Bytes wrapped = from_hex(*row[3]);

        crypto::SymmetricKey kek = crypto::kdf_password(password, salt, params);
        crypto::secure_wipe(password.data(), password.size());
        Bytes ltk_bytes;
        try {
            ltk_bytes = crypto::detail::aead_decrypt(EVP_chacha20_poly1305(), kek.view(), nonce,
                                                     wrapped, user_ad(username));
        } catch (const BxError&) {
            raise(errc::login_failed, "invalid credentials");
        }

        attach_ltk(*session, username, ltk_bytes);
        return {"login", "ok"};
    }

    // Routes a parsed custom procedure to its handler.
    ProcResult handle_procedure(const sql::Statement& stmt) {
        const auto& args = stmt.proc_args;
        auto string_arg = [&](size_t i) -> const std::string& {
            if (i >= args.size() || args[i].kind != sql::LiteralKind::String)
                raise(errc::malformed_payload, "procedure argument must be a string");
            return args[i].text;
        };
        auto sid_arg = [&](size_t i) -> uint64_t {
            if (i >= args.size() || args[i].kind != sql::LiteralKind::Integer)
                raise(errc::malformed_payload, "procedure argument must be a session id");
            return static_cast<uint64_t>(std::stoull(args[i].text));
        };
        switch (stmt.proc) {
        case sql::ProcKind::KeyExchange:
            if (args.size() != 1) raise(errc::malformed_payload, "KEY_EXCHANGE takes one argument");
            return handle_key_exchange(string_arg(0));
        case sql::ProcKind::Register:
            if (args.size() != 3) raise(errc::malformed_payload, "REGISTER takes three arguments");
            return handle_register(string_arg(0), string_arg(1), sid_arg(2));
        case sql::ProcKind::Login:
            if (args.size() != 3) raise(errc::malformed_payload, "LOGIN takes three arguments");
            return handle_login(string_arg(0), string_arg(1), sid_arg(2));
        default: raise(errc::unsupported_statement, "unknown procedure");
        }
    }

    // Expired sessions are dropped on sight; key material in the Session is
    // wiped when the last reference releases it.
    SessionPtr lookup(uint64_t session_id) {
        std::lock_guard<std::mutex> lock(mu_);
        auto it = sessions_.find(session_id);
        if (it == sessions_.end())
            raise(errc::session_unknown, "no such session");
        if (expired(*it->second)) {
            sessions_.erase(it);
            raise(errc::session_unknown, "session expired");
        }
        return it->second;
    }

    size_t purge_expired() {
        std::lock_guard<std::mutex> lock(mu_);
        size_t purged = 0;
        for (auto it = sessions_.begin(); it != sessions_.end();) {
            if (expired(*it->second)) {
                it = sessions_.erase(it);
                ++purged;
            } else {
                ++it;
            }
        }
        return purged;
    }

    size_t session_count() {
        std::lock_guard<std::mutex> lock(mu_);
        return sessions_.size();
    }

    void drop_session(uint64_t session_id) {
        std::lock_guard<std::mutex> lock(mu_);
        sessions_.erase(session_id);
    }

    const crypto::ArgonParams& argon_params() const { return argon_; }

  private:
    static void validate_username(const std::string& username) {
        if (username.empty() || username.size() > 256)
            raise(errc::invalid_params, "username must be 1..256 characters");
        for (char c : username)
            if (static_cast<unsigned char>(c) < 0x20)
                raise(errc::invalid_params, "username must not contain control characters");
    }

    static Bytes user_ad(const std::string& username) { return to_bytes("bx-user:" + username); }

    bool expired(const Session& s) const {
        return std::chrono::steady_clock::now() - s.created_at > ttl_;
    }

    uint64_t fresh_session_id() {
        std::lock_guard<std::mutex> lock(mu_);
        for (;;) {
            uint64_t sid = crypto::random_u64();
            if (sid != 0 && sessions_.find(sid) == sessions_.end()) return sid;
        }
    }

    void ensure_users_table() {
        std::call_once(users_table_once_, [&] {
            backend::run(*endpoint_,
                         std::string("CREATE TABLE IF NOT EXISTS ") + kUsersTable +
                             " (username TEXT PRIMARY KEY, salt TEXT, params TEXT, nonce TEXT, "
                             "wrapped_key TEXT)");
        });
    }

    // salt, params, nonce, wrapped_key — empty when the user is unknown.
    std::vector<backend::Value> fetch_user_row(const std::string& username) {
        std::string sql = std::string("SELECT salt, params, nonce, wrapped_key FROM ") +
                          kUsersTable + " WHERE username = " + sql::quote_string(username);
        backend::BufferedResult r = backend::run(*endpoint_, sql);
        if (r.rows.empty()) return {};
        return r.rows.front();
    }

    static void attach_ltk(Session& session, const std::string& username, Bytes& ltk_bytes) {
        auto key = std::make_shared<const crypto::SymmetricKey>(ltk_bytes);
        crypto::secure_wipe(ltk_bytes.data(), ltk_bytes.size());
        std::lock_guard<std::mutex> lock(session.mu);
        session.username = username;
        session.ltk = std::move(key);
    }

    attest::ReportIssuer issuer_;
    backend::EndpointPtr endpoint_;
    std::chrono::seconds ttl_;
    crypto::ArgonParams argon_;

    std::mutex mu_;
    std::map<uint64_t, SessionPtr> sessions_;
    std::mutex users_mu_; // serializes use of the shared backend endpoint
    std::once_flag users_table_once_;
};

} // namespace blindex
