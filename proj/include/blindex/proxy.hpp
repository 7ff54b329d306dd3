#pragma once

// The proxy itself: parse, classify, rewrite, execute, post-process.
//
// Every client statement takes one of three routes. Passthrough statements
// go to the backend verbatim. Custom procedures (KEY_EXCHANGE / REGISTER /
// LOGIN) go to the session manager. Everything touching encrypted columns
// is rewritten so the backend only ever sees ciphertexts and blind index
// values, and its results flow back through the decrypting row pipeline.
//
// UPDATE and DELETE statements that filter on encrypted columns cannot run
// as single statements — the backend cannot evaluate the plaintext
// predicate. They execute as a two-step split inside one transaction:
//   BEGIN; SELECT <key, filter columns> WHERE <blind index predicates>;
//   (proxy decrypts and applies residual filters)
//   UPDATE/DELETE ... WHERE key IN (<surviving ids>); COMMIT;
// An empty id set short-circuits: the mutation is skipped entirely and the
// statement reports zero affected rows.

#include <cctype>
#include <memory>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include "blindex/backend.hpp"
#include "blindex/error.hpp"
#include "blindex/mysql.hpp"
#include "blindex/net.hpp"
#include "blindex/row_pipeline.hpp"
#include "blindex/schema_config.hpp"
#include "blindex/session.hpp"
#include "blindex/sql/parser.hpp"
#include "blindex/sql/rewriter.hpp"
#include "blindex/wire.hpp"

namespace blindex::proxy {

class Proxy {
  public:
    Proxy(SchemaConfig schema, backend::EndpointFactory factory, attest::ReportIssuer issuer,
          std::chrono::seconds session_ttl = SessionManager::kDefaultTtl,
          crypto::ArgonParams argon = crypto::ArgonParams{})
        : schema_(std::move(schema)), factory_(factory),
          sessions_(std::move(issuer), factory(), session_ttl, argon) {}

    SessionManager& sessions() { return sessions_; }
    const SchemaConfig& schema() const { return schema_; }
    backend::EndpointPtr open_backend() { return factory_(); }
    pipeline::Stats stats() const { return stats_.snapshot(); }

    // Executes one client statement against the given backend connection
    // (connections own transaction state, so each client keeps one).
    backend::ResultPtr dispatch(const std::string& sql_text, backend::SqlEndpoint& ep) {
        sql::Statement stmt = sql::parse(sql_text);
        rewrite::QueryPlan::Class cls = rewrite::classify(stmt, schema_);

        if (cls == rewrite::QueryPlan::Class::CustomProcedure) {
            ProcResult r = sessions_.handle_procedure(stmt);
            return backend::MemoryResult::single(r.column, r.value);
        }
        if (cls == rewrite::QueryPlan::Class::Passthrough) {
            // Verbatim, except that proxy-only session terms never reach
            // the backend.
            if (stmt.session_term) {
                stmt.session_term = std::nullopt;
                return ep.execute(sql::render(stmt));
            }
            return ep.execute(sql_text);
        }

        std::optional<uint64_t> sid = rewrite::extract_session_id(stmt);
        SessionPtr session;
        rewrite::SessionView view;
        std::shared_ptr<const crypto::SymmetricKey> ltk;
        if (sid) {
            session = sessions_.lookup(*sid);
            std::tie(view, ltk) = session->view();
        }

        rewrite::QueryPlan plan = rewrite::plan_statement(stmt, schema_, session ? &view : nullptr);

        if (plan.update_split) return run_split(plan, ep, ltk);
        backend::ResultPtr inner = ep.execute(plan.rewritten_sql);
        if (plan.kind != sql::StatementKind::Select) return inner;
        return std::make_unique<pipeline::DecryptingStream>(std::move(inner), plan, schema_,
                                                            session, ltk, &stats_);
    }

  private:
    // Two-step UPDATE/DELETE: id harvest under the blind index, residual
    // filtering on decrypted plaintext, then the mutation over exact keys.
    backend::ResultPtr run_split(const rewrite::QueryPlan& plan, backend::SqlEndpoint& ep,
                                 const std::shared_ptr<const crypto::SymmetricKey>& ltk) {
        const rewrite::UpdateSplit& split = *plan.update_split;
        if (ltk == nullptr) raise(errc::not_logged_in, "session has no unlocked long-term key");

        // Per-column keys and additional data for the harvested columns.
        std::map<std::string, crypto::SymmetricKey> keys;
        for (const auto& col : split.encrypted_select_columns) {
            keys.emplace(col, crypto::derive_column_key(*ltk, plan.table, col));
        }

        ep.begin();
        try {
            std::vector<sql::Literal> ids;
            {
                backend::ResultPtr sel = ep.execute(split.select_sql);
                const std::vector<std::string>& cols = sel->columns();
                while (auto row = sel->next()) {
                    if (row->size() != cols.size() || row->empty()) continue;
                    if (!split_row_matches(*row, cols, split, keys, plan.table)) continue;
                    const backend::Value& key_cell = (*row)[0];
                    if (!key_cell) continue; // NULL keys cannot be addressed
                    ids.push_back(key_literal(*key_cell));
                }
            }

            uint64_t affected = 0;
            if (!ids.empty()) {
                sql::Statement mutation = split.mutation;
                mutation.where[0].values = std::move(ids);
                backend::ResultPtr res = ep.execute(sql::render(mutation));
                backend::BufferedResult out = backend::drain(*res);
                affected = out.affected;
            }
            ep.commit();
            return backend::MemoryResult::of_affected(affected);
        } catch (...) {
            try {
                ep.rollback();
            } catch (...) {
            }
            throw;
        }
    }

    // Applies the residual plaintext filters to one harvested row. Rows
    // whose ciphertexts fail authentication belong to another user's key
    // and never match.
    static bool split_row_matches(const backend::Row& row, const std::vector<std::string>& cols,
                                  const rewrite::UpdateSplit& split,
                                  const std::map<std::string, crypto::SymmetricKey>& keys,
                                  const std::string& table) {
        for (const auto& rf : split.residual) {
            Bytes plain;
            bool found = false;
            for (size_t i = 0; i < cols.size() && i < row.size(); ++i) {
                if (cols[i] != rf.column) continue;
                found = true;
                if (!row[i]) return false; // NULL never equals a value
                try {
                    crypto::StoredCiphertext sc =
                        crypto::StoredCiphertext::parse(from_base64(*row[i]));
                    plain = crypto::value_decrypt(keys.at(rf.column), sc,
                                                  to_bytes(table + "." + rf.column));
                } catch (const BxError& e) {
                    if (e.code() == errc::decryption_error) return false;
                    throw;
                }
                break;
            }
            if (!found || plain != rf.expected) return false;
        }
        return true;
    }

    // Key cells come back as text; integer-looking ones are rendered bare
    // so the mutation matches the column's numeric comparisons.
    static sql::Literal key_literal(const std::string& cell) {
        bool numeric = !cell.empty();
        size_t start = cell[0] == '-' ? 1 : 0;
        if (start == cell.size()) numeric = false;
        for (size_t i = start; i < cell.size() && numeric; ++i)
            if (!std::isdigit(static_cast<unsigned char>(cell[i]))) numeric = false;
        if (numeric) return sql::Literal{sql::LiteralKind::Integer, cell};
        return sql::Literal::string(cell);
    }

    SchemaConfig schema_;
    backend::EndpointFactory factory_;
    SessionManager sessions_;
    pipeline::AtomicStats stats_;
};

// ---------------------------------------------------------------------------
// Front door: the wire protocol server clients connect to.
// ---------------------------------------------------------------------------

inline void serve_proxy_connection(const net::Socket& sock, Proxy& proxy) {
    backend::EndpointPtr ep = proxy.open_backend();
    net::LineReader reader(sock);
    std::string line;
    while (reader.next_line(line)) {
        if (line.empty()) continue;
        try {
            wire::json msg = wire::parse_msg(line);
            std::string type = msg["type"].get<std::string>();
            if (type == "query") {
                if (!msg.contains("sql") || !msg["sql"].is_string())
                    raise(errc::protocol_error, "query message needs an sql string");
                std::string sql_text = msg["sql"].get<std::string>();
                backend::ResultPtr stream;
                try {
                    stream = proxy.dispatch(sql_text, *ep);
                } catch (const BxError& e) {
                    wire::send_error(sock, e);
                    continue;
                }
                try {
                    wire::send_msg(sock,
                                   wire::json{{"type", "columns"}, {"names", stream->columns()}});
                    while (auto row = stream->next()) {
                        wire::json values = wire::json::array();
                        for (const auto& v : *row) values.push_back(wire::value_to_json(v));
                        wire::send_msg(sock,
                                       wire::json{{"type", "row"}, {"values", std::move(values)}});
                    }
                    wire::send_msg(sock,
                                   wire::json{{"type", "done"}, {"affected", stream->affected()}});
                } catch (const BxError& e) {
                    wire::send_error(sock, e);
                }
            } else if (type == "begin") {
                ep->begin();
                wire::send_msg(sock, wire::json{{"type", "done"}, {"affected", 0}});
            } else if (type == "commit") {
                ep->commit();
                wire::send_msg(sock, wire::json{{"type", "done"}, {"affected", 0}});
            } else if (type == "rollback") {
                ep->rollback();
                wire::send_msg(sock, wire::json{{"type", "done"}, {"affected", 0}});
            } else if (type == "stats") {
                pipeline::Stats s = proxy.stats();
                wire::send_msg(sock, wire::json{{"type", "stats"},
                                                {"rows_in", s.rows_in},
                                                {"rows_decrypted", s.rows_decrypted},
                                                {"cells_decrypted", s.cells_decrypted},
                                                {"rows_out", s.rows_out},
                                                {"auth_drops", s.auth_drops},
                                                {"residual_drops", s.residual_drops}});
            } else {
                raise(errc::protocol_error, "unknown message type: " + type);
            }
        } catch (const BxError& e) {
            wire::send_error(sock, e);
        }
    }
}

inline std::unique_ptr<net::Server> serve_proxy(net::Listener listener,
                                                 std::shared_ptr<Proxy> proxy) {
    auto server = std::make_unique<net::Server>(
        std::move(listener),
        [proxy = std::move(proxy)](const net::Socket& sock) { serve_proxy_connection(sock, *proxy); });
    server->start();
    return server;
}

// MySQL-protocol front door: stock MySQL clients connect, authenticate, and
// send plain COM_QUERY; every statement goes through the same dispatch path
// as the JSON front door. Transactions work because each connection holds
// one backend endpoint for its lifetime.
inline std::unique_ptr<net::Server> serve_proxy_mysql(net::Listener listener,
                                                      std::shared_ptr<Proxy> proxy,
                                                      mysql::MysqlServerAuth auth) {
    auto server = std::make_unique<net::Server>(
        std::move(listener),
        [proxy = std::move(proxy), auth = std::move(auth)](const net::Socket& sock) {
            backend::EndpointPtr ep = proxy->open_backend();
            mysql::serve_mysql_connection(sock, auth, [&](const std::string& sql) {
                return proxy->dispatch(sql, *ep);
            });
        });
    server->start();
    return server;
}

} // namespace blindex::proxy
