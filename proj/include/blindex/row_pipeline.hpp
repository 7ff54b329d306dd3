#pragma once

// Streaming post-processing of backend rows: decrypt stored ciphertexts,
// apply residual plaintext filters, re-encrypt survivors for the client,
// and strip the columns the rewriter added for its own use.
//
// The stream is strictly pull-based and holds at most the single row being
// transformed, so a large result set never accumulates in proxy memory and
// the first row comes back after one matching pull. Rows whose ciphertexts
// fail authentication are dropped silently: with per-user keys a blind
// index may collide across users, and those rows simply do not belong to
// the caller.

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "blindex/backend.hpp"
#include "blindex/bytes.hpp"
#include "blindex/crypto.hpp"
#include "blindex/envelope.hpp"
#include "blindex/error.hpp"
#include "blindex/schema_config.hpp"
#include "blindex/session.hpp"
#include "blindex/sql/rewriter.hpp"

namespace blindex::pipeline {

struct Stats {
    uint64_t rows_in = 0;        // rows pulled from the backend
    uint64_t rows_decrypted = 0; // rows with at least one decryption attempt
    uint64_t cells_decrypted = 0;
    uint64_t rows_out = 0;
    uint64_t auth_drops = 0;     // rows dropped on failed authentication
    uint64_t residual_drops = 0; // rows dropped by residual plaintext filters
};

struct AtomicStats {
    std::atomic<uint64_t> rows_in{0}, rows_decrypted{0}, cells_decrypted{0}, rows_out{0},
        auth_drops{0}, residual_drops{0};

    void add(const Stats& s) {
        rows_in += s.rows_in;
        rows_decrypted += s.rows_decrypted;
        cells_decrypted += s.cells_decrypted;
        rows_out += s.rows_out;
        auth_drops += s.auth_drops;
        residual_drops += s.residual_drops;
    }

    Stats snapshot() const {
        Stats s;
        s.rows_in = rows_in.load();
        s.rows_decrypted = rows_decrypted.load();
        s.cells_decrypted = cells_decrypted.load();
        s.rows_out = rows_out.load();
        s.auth_drops = auth_drops.load();
        s.residual_drops = residual_drops.load();
        return s;
    }
};

// Decrypts, filters, re-encrypts, strips, and pages one row at a time.
class DecryptingStream : public backend::ResultStream {
  public:
    DecryptingStream(backend::ResultPtr inner, const rewrite::QueryPlan& plan,
                     const SchemaConfig& cfg, SessionPtr session,
                     std::shared_ptr<const crypto::SymmetricKey> ltk, AtomicStats* sink = nullptr)
        : inner_(std::move(inner)), session_(std::move(session)), ltk_(std::move(ltk)),
          sink_(sink), post_limit_(plan.post_limit), post_offset_(plan.post_offset.value_or(0)) {
        const std::vector<std::string>& in_cols = inner_->columns();
        keep_.resize(in_cols.size(), true);
        encrypted_.resize(in_cols.size(), false);

        for (size_t i = 0; i < in_cols.size(); ++i) {
            const std::string& col = in_cols[i];
            if (cfg.is_companion(plan.table, col)) keep_[i] = false;
            for (const auto& aug : plan.augmented_columns)
                if (col == aug) keep_[i] = false;
            if (cfg.is_encrypted(plan.table, col)) {
                encrypted_[i] = true;
                if (session_ == nullptr)
                    raise(errc::session_unresolvable,
                          "result carries encrypted columns but no session is attached");
                if (ltk_ == nullptr)
                    raise(errc::not_logged_in, "session has no unlocked long-term key");
                column_keys_.emplace(i, crypto::derive_column_key(*ltk_, plan.table, col));
                ad_.emplace(i, to_bytes(plan.table + "." + col));
            }
            for (const auto& rf : plan.residual_filters)
                if (col == rf.column) residuals_.push_back({i, rf.expected});
        }
        for (size_t i = 0; i < in_cols.size(); ++i)
            if (keep_[i]) out_columns_.push_back(in_cols[i]);

        // Residual columns are always in the rewritten projection; a miss
        // here is a planner bug, not a data condition.
        if (residuals_.size() != plan.residual_filters.size())
            raise(errc::backend_error, "residual filter column missing from result");
    }

    const std::vector<std::string>& columns() override { return out_columns_; }
    uint64_t affected() const override { return inner_->affected(); }

    std::optional<backend::Row> next() override {
        if (done_) return std::nullopt;
        while (auto row = inner_->next()) {
            ++stats_.rows_in;
            std::map<size_t, Bytes> plain;
            if (!decrypt_row(*row, plain)) {
                ++stats_.auth_drops;
                continue;
            }
            if (!passes_residuals(plain)) {
                ++stats_.residual_drops;
                continue;
            }
            if (post_offset_ > 0) {
                --post_offset_;
                continue;
            }
            if (post_limit_ && emitted_ >= *post_limit_) break;
            backend::Row out = project(*row, plain);
            ++emitted_;
            ++stats_.rows_out;
            return out;
        }
        done_ = true;
        flush_stats();
        return std::nullopt;
    }

    const Stats& stats() const { return stats_; }

    ~DecryptingStream() override { flush_stats(); }

  private:
    // Decrypts every encrypted cell once; false means the row authenticates
    // under someone else's key and is not ours to return.
    bool decrypt_row(const backend::Row& row, std::map<size_t, Bytes>& plain) {
        bool attempted = false;
        bool ok = true;
        for (size_t i = 0; i < row.size() && i < encrypted_.size(); ++i) {
            if (!encrypted_[i] || !row[i]) continue;
            attempted = true;
            try {
                crypto::StoredCiphertext sc = crypto::StoredCiphertext::parse(from_base64(*row[i]));
                plain.emplace(i, crypto::value_decrypt(column_keys_.at(i), sc, ad_.at(i)));
                ++stats_.cells_decrypted;
            } catch (const BxError& e) {
                if (std::string(e.code()) == errc::decryption_error) {
                    ok = false;
                    break;
                }
                throw; // malformed storage is loud, not a silent drop
            }
        }
        if (attempted) ++stats_.rows_decrypted;
        return ok;
    }

    bool passes_residuals(const std::map<size_t, Bytes>& plain) const {
        for (const auto& [idx, expected] : residuals_) {
            auto it = plain.find(idx);
            if (it == plain.end()) return false; // NULL never equals a value
            if (it->second != expected) return false;
        }
        return true;
    }

    // Kept columns only; encrypted cells leave as fresh transit envelopes.
    backend::Row project(const backend::Row& row, std::map<size_t, Bytes>& plain) {
        backend::Row out;
        out.reserve(out_columns_.size());
        for (size_t i = 0; i < row.size() && i < keep_.size(); ++i) {
            if (!keep_[i]) continue;
            if (encrypted_[i] && row[i]) {
                Bytes& pt = plain.at(i);
                out.push_back(session_->encrypt_response(pt).to_base64());
                crypto::secure_wipe(pt.data(), pt.size());
            } else {
                out.push_back(row[i]);
            }
        }
        return out;
    }

    void flush_stats() {
        if (sink_ != nullptr && !flushed_) {
            sink_->add(stats_);
            flushed_ = true;
        }
    }

    backend::ResultPtr inner_;
    SessionPtr session_;
    std::shared_ptr<const crypto::SymmetricKey> ltk_;
    AtomicStats* sink_;

    std::vector<std::string> out_columns_;
    std::vector<bool> keep_;
    std::vector<bool> encrypted_;
    std::map<size_t, crypto::SymmetricKey> column_keys_;
    std::map<size_t, Bytes> ad_;
    std::vector<std::pair<size_t, Bytes>> residuals_;

    std::optional<uint64_t> post_limit_;
    uint64_t post_offset_ = 0;
    uint64_t emitted_ = 0;
    bool done_ = false;
    bool flushed_ = false;
    Stats stats_;
};

} // namespace blindex::pipeline
