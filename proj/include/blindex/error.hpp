#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace blindex {

// Stable machine-readable error codes. These travel over the wire as the
// "code" field of error messages, so they are part of the protocol surface.
namespace errc {
inline constexpr const char* syntax_error = "syntax_error";
inline constexpr const char* unsupported_statement = "unsupported_statement";
inline constexpr const char* unsupported_predicate = "unsupported_predicate";
inline constexpr const char* cleartext_filter_on_encrypted_column = "cleartext_filter_on_encrypted_column";
inline constexpr const char* cleartext_value_for_encrypted_column = "cleartext_value_for_encrypted_column";
inline constexpr const char* encrypted_literal_on_cleartext_column = "encrypted_literal_on_cleartext_column";
inline constexpr const char* aggregation_over_encrypted_filter = "aggregation_over_encrypted_filter";
inline constexpr const char* session_unresolvable = "session_unresolvable";
inline constexpr const char* session_id_conflict = "session_id_conflict";
inline constexpr const char* session_unknown = "session_unknown";
inline constexpr const char* not_logged_in = "not_logged_in";
inline constexpr const char* decryption_error = "decryption_error";
inline constexpr const char* counter_exhausted = "counter_exhausted";
inline constexpr const char* malformed_payload = "malformed_payload";
inline constexpr const char* register_failed = "register_failed";
inline constexpr const char* login_failed = "login_failed";
inline constexpr const char* key_column_missing = "key_column_missing";
inline constexpr const char* attestation_failure = "attestation_failure";
inline constexpr const char* session_not_verified = "session_not_verified";
inline constexpr const char* invalid_params = "invalid_params";
inline constexpr const char* randomness_failure = "randomness_failure";
inline constexpr const char* crypto_failure = "crypto_failure";
inline constexpr const char* config_error = "config_error";
inline constexpr const char* unknown_table = "unknown_table";
inline constexpr const char* unknown_column = "unknown_column";
inline constexpr const char* duplicate_key = "duplicate_key";
inline constexpr const char* backend_error = "backend_error";
inline constexpr const char* protocol_error = "protocol_error";
inline constexpr const char* io_error = "io_error";
} // namespace errc

// Every failure surfaced by the library carries a code from errc plus a
// human-readable message. Messages never contain key bytes or plaintexts.
class BxError : public std::runtime_error {
public:
    BxError(std::string code, const std::string& message)
        : std::runtime_error(message), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

[[noreturn]] inline void raise(std::string_view code, const std::string& message) {
    throw BxError(std::string(code), message);
}

} // namespace blindex
