#pragma once

// Statement classification and rewriting for encrypted columns.
//
// Classification: CustomProcedure for the three proxy procedures,
// Rewrite when a statement references an encrypted column or carries an
// envelope literal, Passthrough otherwise. Unknown statements (kind Other)
// pass through only when none of their identifier tokens names a protected
// table or column — otherwise they are rejected outright (fail closed).
//
// Rewriting replaces client envelopes with at-rest ciphertexts and blind
// index predicates so that no plaintext byte of an encrypted value ever
// appears in SQL sent to the database:
//   * SELECT: `enc = envelope` becomes `enc__bidx = '<hex>'` plus a residual
//     plaintext filter applied after decryption; filters on columns without
//     a blind index are dropped from the SQL entirely (full scan) and kept
//     as residuals. WHERE-referenced encrypted columns are appended to the
//     projection and later stripped. LIMIT/OFFSET move behind the residual
//     stage whenever residual filters exist.
//   * INSERT: envelope values are re-encrypted under per-column keys and
//     companion blind-index values are appended.
//   * UPDATE/DELETE with encrypted filters: two-step split inside one
//     transaction — select matching key ids by blind index + residual
//     filtering, then mutate WHERE key IN (ids).
//   * CREATE TABLE on a blind-indexed table: companion columns appended.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "blindex/blind_index.hpp"
#include "blindex/bytes.hpp"
#include "blindex/crypto.hpp"
#include "blindex/envelope.hpp"
#include "blindex/error.hpp"
#include "blindex/schema_config.hpp"
#include "blindex/sql/ast.hpp"

namespace blindex::rewrite {

// The slice of session state the rewriter needs: envelope decryption uses
// the client-to-proxy key; column/bidx keys derive from the user's LTK.
struct SessionView {
    uint64_t session_id = 0;
    const crypto::SymmetricKey* c2p_key = nullptr;
    const crypto::SymmetricKey* ltk = nullptr; // null until LOGIN/REGISTER
};

struct ResidualFilter {
    std::string column;
    Bytes expected; // decrypted plaintext the row must equal byte-for-byte
};

struct UpdateSplit {
    std::string select_sql;                   // SELECT key, <filter cols> ... WHERE bidx/cleartext
    std::vector<std::string> select_columns;  // result order: key first
    std::vector<std::string> encrypted_select_columns; // need column-key decryption
    std::vector<ResidualFilter> residual;     // byte-equality on decrypted cells
    std::string key_column;
    sql::Statement mutation;                  // UPDATE/DELETE ... WHERE key IN (<filled later>)
};

struct QueryPlan {
    enum class Class { Passthrough, CustomProcedure, Rewrite };

    Class cls = Class::Passthrough;
    sql::StatementKind kind = sql::StatementKind::Other;
    std::string table;
    std::optional<uint64_t> session_id;
    std::string rewritten_sql;
    std::vector<std::string> augmented_columns; // stripped from the output
    std::vector<ResidualFilter> residual_filters;
    std::optional<uint64_t> post_limit;  // applied after residual filtering
    std::optional<uint64_t> post_offset;
    std::optional<UpdateSplit> update_split;

    // CustomProcedure payload
    sql::ProcKind proc = sql::ProcKind::None;
    std::vector<sql::Literal> proc_args;
};

// ---------------------------------------------------------------------------
// Classification
// ---------------------------------------------------------------------------

namespace detail {

inline bool literal_is_envelope(const sql::Literal& lit) {
    return lit.kind == sql::LiteralKind::String && is_envelope_b64(lit.text);
}

inline bool any_envelope(const sql::Statement& s) {
    for (const auto& p : s.where)
        for (const auto& v : p.values)
            if (literal_is_envelope(v)) return true;
    for (const auto& row : s.insert_rows)
        for (const auto& v : row)
            if (literal_is_envelope(v)) return true;
    for (const auto& [col, v] : s.assignments)
        if (literal_is_envelope(v)) return true;
    return false;
}

inline bool references_encrypted(const sql::Statement& s, const SchemaConfig& cfg) {
    const std::string& t = s.table;
    for (const auto& item : s.projection) {
        if (item.kind == sql::SelectItem::Kind::Star && cfg.table_has_encrypted(t)) return true;
        if ((item.kind == sql::SelectItem::Kind::Column ||
             item.kind == sql::SelectItem::Kind::Aggregate) &&
            cfg.is_encrypted(t, item.column))
            return true;
    }
    for (const auto& p : s.where)
        if (cfg.is_encrypted(t, p.column)) return true;
    for (const auto& col : s.insert_columns)
        if (cfg.is_encrypted(t, col)) return true;
    for (const auto& [col, v] : s.assignments)
        if (cfg.is_encrypted(t, col)) return true;
    return false;
}

// For unknown statements: does any identifier token name a protected table
// or column? Conservative by design.
inline bool mentions_protected(const sql::Statement& s, const SchemaConfig& cfg) {
    for (const auto& ident : s.identifiers) {
        for (const auto& [tname, tcfg] : cfg.tables()) {
            if (ident == tname) return true;
            for (const auto& c : tcfg.columns)
                if (ident == c.column || ident == c.companion) return true;
        }
    }
    return false;
}

} // namespace detail

inline QueryPlan::Class classify(const sql::Statement& s, const SchemaConfig& cfg) {
    using Class = QueryPlan::Class;
    if (s.proc != sql::ProcKind::None) return Class::CustomProcedure;
    switch (s.kind) {
    case sql::StatementKind::Begin:
    case sql::StatementKind::Commit:
    case sql::StatementKind::Rollback:
    case sql::StatementKind::DropTable: return Class::Passthrough;
    case sql::StatementKind::Other:
        if (detail::mentions_protected(s, cfg))
            raise(errc::unsupported_statement,
                  "unsupported statement touches protected tables or columns");
        return Class::Passthrough;
    case sql::StatementKind::CreateTable: {
        const TableConfig* t = cfg.table(s.table);
        if (t != nullptr)
            for (const auto& c : t->columns)
                if (c.bidx_bits) return Class::Rewrite;
        return Class::Passthrough;
    }
    default: break;
    }
    if (detail::references_encrypted(s, cfg) || detail::any_envelope(s)) return Class::Rewrite;
    return Class::Passthrough;
}

// ---------------------------------------------------------------------------
// Session identity extraction
// ---------------------------------------------------------------------------

// Pulls the session id from the (stripped) SESSION_ID term and/or any
// envelope literal prefix; all sources must agree.
inline std::optional<uint64_t> extract_session_id(sql::Statement& s) {
    std::optional<uint64_t> sid = s.session_term;
    s.session_term = std::nullopt;
    auto note = [&](const sql::Literal& lit) {
        if (!detail::literal_is_envelope(lit)) return;
        uint64_t env_sid = try_parse_envelope_b64(lit.text)->session_id;
        if (sid && *sid != env_sid)
            raise(errc::session_id_conflict,
                  "SESSION_ID term and envelope session ids disagree");
        sid = env_sid;
    };
    for (const auto& p : s.where)
        for (const auto& v : p.values) note(v);
    for (const auto& row : s.insert_rows)
        for (const auto& v : row) note(v);
    for (const auto& [col, v] : s.assignments) note(v);
    return sid;
}

// ---------------------------------------------------------------------------
// Rewriting
// ---------------------------------------------------------------------------

namespace detail {

inline const SessionView& require_session(const SessionView* session) {
    if (session == nullptr)
        raise(errc::session_unresolvable, "no session id recoverable from the statement");
    return *session;
}

inline const crypto::SymmetricKey& require_ltk(const SessionView& session) {
    if (session.ltk == nullptr)
        raise(errc::not_logged_in, "session has no unlocked long-term key");
    return *session.ltk;
}

// Decrypt a client envelope literal with the session's client-to-proxy key.
inline Bytes open_envelope(const SessionView& session, const sql::Literal& lit) {
    Envelope env = Envelope::parse_base64(lit.text);
    if (env.session_id != session.session_id)
        raise(errc::session_id_conflict, "envelope belongs to a different session");
    if (session.c2p_key == nullptr)
        raise(errc::session_unknown, "session has no transit keys");
    return envelope_decrypt(*session.c2p_key, env);
}

// Re-encrypt plaintext under the per-user per-column at-rest key.
inline std::string stored_literal(const crypto::SymmetricKey& ltk, const std::string& table,
                                  const std::string& column, BytesView plaintext) {
    crypto::SymmetricKey key = crypto::derive_column_key(ltk, table, column);
    Bytes ad = to_bytes(table + "." + column);
    crypto::StoredCiphertext sc = crypto::value_encrypt(key, plaintext, ad);
    return to_base64(sc.serialize());
}

inline std::string bidx_literal(const crypto::SymmetricKey& ltk, const BlindIndexSpec& spec,
                                BytesView plaintext) {
    crypto::SymmetricKey key = crypto::derive_bidx_key(ltk, spec.table, spec.column);
    return compute_bidx_hex(key, plaintext, spec);
}

} // namespace detail

inline QueryPlan rewrite_select(const sql::Statement& input, const SchemaConfig& cfg,
                                const SessionView* session) {
    sql::Statement s = input;
    QueryPlan plan;
    plan.cls = QueryPlan::Class::Rewrite;
    plan.kind = sql::StatementKind::Select;
    plan.table = s.table;
    if (session != nullptr) plan.session_id = session->session_id;

    bool encrypted_filter = false;
    std::vector<sql::Predicate> kept;
    for (const auto& p : s.where) {
        bool enc = cfg.is_encrypted(s.table, p.column);
        bool env = !p.values.empty() && detail::literal_is_envelope(p.values.front());
        if (!enc) {
            if (env || (p.op == sql::CompareOp::In &&
                        std::any_of(p.values.begin(), p.values.end(),
                                    [](const sql::Literal& v) {
                                        return detail::literal_is_envelope(v);
                                    })))
                raise(errc::encrypted_literal_on_cleartext_column,
                      "envelope literal compared against cleartext column '" + p.column + "'");
            kept.push_back(p);
            continue;
        }
        if (p.op != sql::CompareOp::Eq)
            raise(errc::unsupported_predicate,
                  "only equality predicates are supported on encrypted column '" + p.column + "'");
        if (p.values.front().is_null()) { // `enc = NULL` never matches; keep for backend
            kept.push_back(p);
            continue;
        }
        if (!env)
            raise(errc::cleartext_filter_on_encrypted_column,
                  "cleartext literal compared against encrypted column '" + p.column + "'");
        encrypted_filter = true;
        const SessionView& sess = detail::require_session(session);
        const crypto::SymmetricKey& ltk = detail::require_ltk(sess);
        Bytes plaintext = detail::open_envelope(sess, p.values.front());
        if (auto spec = cfg.bidx_spec(s.table, p.column)) {
            sql::Predicate bp;
            bp.column = spec->companion_column;
            bp.op = sql::CompareOp::Eq;
            bp.values.push_back(sql::Literal::string(detail::bidx_literal(ltk, *spec, plaintext)));
            kept.push_back(std::move(bp));
        }
        // No blind index: the predicate disappears from the SQL entirely and
        // the proxy filters the full scan.
        plan.residual_filters.push_back({p.column, std::move(plaintext)});
    }
    s.where = std::move(kept);

    if (s.has_aggregate()) {
        if (encrypted_filter)
            raise(errc::aggregation_over_encrypted_filter,
                  "aggregation cannot run over encrypted filters");
        for (const auto& item : s.projection)
            if (item.kind == sql::SelectItem::Kind::Aggregate &&
                item.func != sql::AggFunc::CountStar && item.func != sql::AggFunc::Count &&
                cfg.is_encrypted(s.table, item.column))
                raise(errc::aggregation_over_encrypted_filter,
                      "cannot aggregate over encrypted column '" + item.column + "'");
    }

    // Residual filter columns must be visible to the proxy: append any that
    // the projection does not already carry, and remember to strip them.
    bool star = std::any_of(s.projection.begin(), s.projection.end(), [](const sql::SelectItem& i) {
        return i.kind == sql::SelectItem::Kind::Star;
    });
    if (!star) {
        for (const auto& rf : plan.residual_filters) {
            bool present = std::any_of(
                s.projection.begin(), s.projection.end(), [&](const sql::SelectItem& i) {
                    return i.kind == sql::SelectItem::Kind::Column && i.column == rf.column;
                });
            if (!present) {
                s.projection.push_back(sql::SelectItem::col(rf.column));
                plan.augmented_columns.push_back(rf.column);
            }
        }
    }

    // Paging must run after residual filtering or the page would be cut
    // from unfiltered rows.
    if (!plan.residual_filters.empty()) {
        plan.post_limit = s.limit;
        plan.post_offset = s.offset;
        s.limit.reset();
        s.offset.reset();
    }

    plan.rewritten_sql = sql::render(s);
    return plan;
}

inline QueryPlan rewrite_insert(const sql::Statement& input, const SchemaConfig& cfg,
                                const SessionView* session) {
    sql::Statement s = input;
    QueryPlan plan;
    plan.cls = QueryPlan::Class::Rewrite;
    plan.kind = sql::StatementKind::Insert;
    plan.table = s.table;
    if (session != nullptr) plan.session_id = session->session_id;

    // Companion columns for blind-indexed targets are appended once, and
    // every row gets a value (NULL when the plaintext is NULL).
    std::vector<std::optional<BlindIndexSpec>> companion_for_column(s.insert_columns.size());
    std::vector<size_t> companion_order;
    for (size_t i = 0; i < s.insert_columns.size(); ++i) {
        const std::string& col = s.insert_columns[i];
        if (cfg.is_companion(s.table, col))
            raise(errc::unsupported_statement,
                  "companion column '" + col + "' cannot be written directly");
        if (auto spec = cfg.bidx_spec(s.table, col)) {
            companion_for_column[i] = spec;
            companion_order.push_back(i);
        }
    }

    for (auto& row : s.insert_rows) {
        std::vector<sql::Literal> companions;
        for (size_t i = 0; i < s.insert_columns.size(); ++i) {
            const std::string& col = s.insert_columns[i];
            sql::Literal& lit = row[i];
            bool enc = cfg.is_encrypted(s.table, col);
            bool env = detail::literal_is_envelope(lit);
            if (!enc) {
                if (env)
                    raise(errc::encrypted_literal_on_cleartext_column,
                          "envelope literal destined to cleartext column '" + col + "'");
                continue;
            }
            if (lit.is_null()) {
                if (companion_for_column[i]) companions.push_back(sql::Literal::null());
                continue;
            }
            if (!env)
                raise(errc::cleartext_value_for_encrypted_column,
                      "plaintext value destined to encrypted column '" + col + "'");
            const SessionView& sess = detail::require_session(session);
            const crypto::SymmetricKey& ltk = detail::require_ltk(sess);
            Bytes plaintext = detail::open_envelope(sess, lit);
            lit = sql::Literal::string(detail::stored_literal(ltk, s.table, col, plaintext));
            if (companion_for_column[i])
                companions.push_back(sql::Literal::string(
                    detail::bidx_literal(ltk, *companion_for_column[i], plaintext)));
            crypto::secure_wipe(plaintext.data(), plaintext.size());
        }
        for (auto& c : companions) row.push_back(std::move(c));
    }
    for (size_t i : companion_order)
        s.insert_columns.push_back(companion_for_column[i]->companion_column);

    plan.rewritten_sql = sql::render(s);
    return plan;
}

namespace detail {

// Rewrites SET clauses in place: envelopes become stored ciphertexts and
// blind-indexed columns get fresh companion assignments.
inline void rewrite_assignments(sql::Statement& s, const SchemaConfig& cfg,
                                const SessionView* session) {
    std::vector<std::pair<std::string, sql::Literal>> extra;
    for (auto& [col, lit] : s.assignments) {
        if (cfg.is_companion(s.table, col))
            raise(errc::unsupported_statement,
                  "companion column '" + col + "' cannot be written directly");
        bool enc = cfg.is_encrypted(s.table, col);
        bool env = literal_is_envelope(lit);
        if (!enc) {
            if (env)
                raise(errc::encrypted_literal_on_cleartext_column,
                      "envelope literal destined to cleartext column '" + col + "'");
            continue;
        }
        auto spec = cfg.bidx_spec(s.table, col);
        if (lit.is_null()) {
            if (spec) extra.emplace_back(spec->companion_column, sql::Literal::null());
            continue;
        }
        if (!env)
            raise(errc::cleartext_value_for_encrypted_column,
                  "plaintext value destined to encrypted column '" + col + "'");
        const SessionView& sess = require_session(session);
        const crypto::SymmetricKey& ltk = require_ltk(sess);
        Bytes plaintext = open_envelope(sess, lit);
        lit = sql::Literal::string(stored_literal(ltk, s.table, col, plaintext));
        if (spec)
            extra.emplace_back(spec->companion_column,
                               sql::Literal::string(bidx_literal(ltk, *spec, plaintext)));
        crypto::secure_wipe(plaintext.data(), plaintext.size());
    }
    for (auto& e : extra) s.assignments.push_back(std::move(e));
}

// Shared two-step planner for UPDATE and DELETE with encrypted filters.
inline void build_split(QueryPlan& plan, sql::Statement mutation, const SchemaConfig& cfg,
                        const SessionView* session) {
    const std::string& table = mutation.table;
    auto key = cfg.key_column(table);
    if (!key)
        raise(errc::key_column_missing,
              "table '" + table + "' declares no key column for two-step rewriting");

    UpdateSplit split;
    split.key_column = *key;

    sql::Statement sel;
    sel.kind = sql::StatementKind::Select;
    sel.table = table;
    sel.projection.push_back(sql::SelectItem::col(*key));
    split.select_columns.push_back(*key);

    for (const auto& p : mutation.where) {
        bool enc = cfg.is_encrypted(table, p.column);
        bool env = !p.values.empty() && literal_is_envelope(p.values.front());
        if (!enc) {
            if (env)
                raise(errc::encrypted_literal_on_cleartext_column,
                      "envelope literal compared against cleartext column '" + p.column + "'");
            sel.where.push_back(p);
            continue;
        }
        if (p.op != sql::CompareOp::Eq)
            raise(errc::unsupported_predicate,
                  "only equality predicates are supported on encrypted column '" + p.column + "'");
        if (p.values.front().is_null()) {
            sel.where.push_back(p);
            continue;
        }
        if (!env)
            raise(errc::cleartext_filter_on_encrypted_column,
                  "cleartext literal compared against encrypted column '" + p.column + "'");
        const SessionView& sess = require_session(session);
        const crypto::SymmetricKey& ltk = require_ltk(sess);
        Bytes plaintext = open_envelope(sess, p.values.front());
        if (auto spec = cfg.bidx_spec(table, p.column)) {
            sql::Predicate bp;
            bp.column = spec->companion_column;
            bp.op = sql::CompareOp::Eq;
            bp.values.push_back(sql::Literal::string(bidx_literal(ltk, *spec, plaintext)));
            sel.where.push_back(std::move(bp));
        }
        split.residual.push_back({p.column, std::move(plaintext)});
    }

    for (const auto& rf : split.residual) {
        sel.projection.push_back(sql::SelectItem::col(rf.column));
        split.select_columns.push_back(rf.column);
        split.encrypted_select_columns.push_back(rf.column);
    }

    split.select_sql = sql::render(sel);

    mutation.where.clear();
    sql::Predicate in;
    in.column = *key;
    in.op = sql::CompareOp::In;
    mutation.where.push_back(std::move(in));
    split.mutation = std::move(mutation);

    plan.residual_filters = split.residual;
    plan.update_split = std::move(split);
}

inline bool has_encrypted_filter(const sql::Statement& s, const SchemaConfig& cfg) {
    for (const auto& p : s.where)
        if (cfg.is_encrypted(s.table, p.column) && !p.values.empty() &&
            !p.values.front().is_null())
            return true;
    return false;
}

} // namespace detail

inline QueryPlan rewrite_update(const sql::Statement& input, const SchemaConfig& cfg,
                                const SessionView* session) {
    sql::Statement s = input;
    QueryPlan plan;
    plan.cls = QueryPlan::Class::Rewrite;
    plan.kind = sql::StatementKind::Update;
    plan.table = s.table;
    if (session != nullptr) plan.session_id = session->session_id;

    detail::rewrite_assignments(s, cfg, session);

    if (!detail::has_encrypted_filter(s, cfg)) {
        // Filters are all cleartext (or absent): a single rewritten UPDATE.
        for (const auto& p : s.where)
            if (!p.values.empty() && detail::literal_is_envelope(p.values.front()))
                raise(errc::encrypted_literal_on_cleartext_column,
                      "envelope literal compared against cleartext column '" + p.column + "'");
        plan.rewritten_sql = sql::render(s);
        return plan;
    }
    detail::build_split(plan, std::move(s), cfg, session);
    return plan;
}

inline QueryPlan rewrite_delete(const sql::Statement& input, const SchemaConfig& cfg,
                                const SessionView* session) {
    sql::Statement s = input;
    QueryPlan plan;
    plan.cls = QueryPlan::Class::Rewrite;
    plan.kind = sql::StatementKind::Delete;
    plan.table = s.table;
    if (session != nullptr) plan.session_id = session->session_id;

    if (!detail::has_encrypted_filter(s, cfg)) {
        for (const auto& p : s.where)
            if (!p.values.empty() && detail::literal_is_envelope(p.values.front()))
                raise(errc::encrypted_literal_on_cleartext_column,
                      "envelope literal compared against cleartext column '" + p.column + "'");
        plan.rewritten_sql = sql::render(s);
        return plan;
    }
    detail::build_split(plan, std::move(s), cfg, session);
    return plan;
}

// CREATE TABLE on a blind-indexed table grows the companion columns the
// storage contract requires.
inline QueryPlan rewrite_create(const sql::Statement& input, const SchemaConfig& cfg) {
    sql::Statement s = input;
    QueryPlan plan;
    plan.cls = QueryPlan::Class::Rewrite;
    plan.kind = sql::StatementKind::CreateTable;
    plan.table = s.table;

    const TableConfig* t = cfg.table(s.table);
    if (t != nullptr) {
        for (const auto& c : t->columns) {
            if (!c.bidx_bits) continue;
            bool present = std::any_of(s.column_defs.begin(), s.column_defs.end(),
                                       [&](const sql::ColumnDef& d) { return d.name == c.companion; });
            if (!present) s.column_defs.push_back({c.companion, "TEXT", false});
        }
    }
    plan.rewritten_sql = sql::render(s);
    return plan;
}

// One-stop planner used by the proxy dispatcher. `session` may be null;
// it is only required when the statement actually needs key material.
inline QueryPlan plan_statement(const sql::Statement& stmt, const SchemaConfig& cfg,
                                const SessionView* session) {
    switch (stmt.kind) {
    case sql::StatementKind::Select: return rewrite_select(stmt, cfg, session);
    case sql::StatementKind::Insert: return rewrite_insert(stmt, cfg, session);
    case sql::StatementKind::Update: return rewrite_update(stmt, cfg, session);
    case sql::StatementKind::Delete: return rewrite_delete(stmt, cfg, session);
    case sql::StatementKind::CreateTable: return rewrite_create(stmt, cfg);
    default:
        raise(errc::unsupported_statement, "statement kind cannot be rewritten");
    }
}

} // namespace blindex::rewrite
